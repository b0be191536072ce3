#include "esmask/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "esmask/rng.hpp"

namespace esmask {

void BenchmarkFn::validate() const {
  if (dim < 1) throw std::invalid_argument("benchmark: dim must be >= 1");
  if (kind == BenchmarkKind::Rosenbrock && dim < 2)
    throw std::invalid_argument("benchmark: rosenbrock needs dim >= 2");
}

double eval_benchmark(const BenchmarkFn& fn, std::span<const double> theta) {
  fn.validate();
  if (theta.size() != fn.dim)
    throw std::invalid_argument("benchmark: parameter length mismatch");
  switch (fn.kind) {
    case BenchmarkKind::Sphere: {
      double s = 0.0;
      for (double t : theta) s += t * t;
      return -s;
    }
    case BenchmarkKind::Rosenbrock: {
      double s = 0.0;
      for (std::size_t j = 0; j + 1 < theta.size(); ++j) {
        const double a = theta[j + 1] - theta[j] * theta[j];
        const double b = 1.0 - theta[j];
        s += 100.0 * a * a + b * b;
      }
      return -s;
    }
  }
  throw std::logic_error("benchmark: unreachable");
}

const char* to_string(BatchRegime regime) {
  switch (regime) {
    case BatchRegime::VarB:
      return "varb";
    case BatchRegime::FixB:
      return "fixb";
    case BatchRegime::WFixB:
      return "wfixb";
  }
  return "unknown";
}

BatchRegime batch_regime_from_string(const std::string& s) {
  if (s == "varb") return BatchRegime::VarB;
  if (s == "fixb") return BatchRegime::FixB;
  if (s == "wfixb") return BatchRegime::WFixB;
  throw std::invalid_argument("unknown batch regime: " + s);
}

Batch make_batch(const Dataset& dataset, const BatchSpec& spec) {
  const std::size_t train_count = dataset.train_indices.size();
  if (train_count == 0) throw std::invalid_argument("make_batch: empty train split");
  if (spec.size < 1) throw std::invalid_argument("make_batch: size must be >= 1");
  if (spec.size > train_count)
    throw std::invalid_argument("make_batch: size exceeds train count");

  std::vector<std::size_t> picked;
  picked.reserve(spec.size);
  Rng rng(derive_seed(spec.data_seed, stream_tag::kDataBatch));
  if (spec.size * 2 >= train_count) {
    // Dense draw: partial Fisher-Yates over the whole split.
    std::vector<std::size_t> pool(dataset.train_indices);
    for (std::size_t i = 0; i < spec.size; ++i) {
      const std::size_t j = i + rng.uniform_below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
  } else {
    std::unordered_set<std::size_t> seen;
    seen.reserve(spec.size * 2);
    while (picked.size() < spec.size) {
      const std::size_t slot = rng.uniform_below(train_count);
      if (seen.insert(slot).second) picked.push_back(dataset.train_indices[slot]);
    }
  }

  Batch batch;
  batch.feature_dim = dataset.feature_dim;
  batch.features.reserve(spec.size * dataset.feature_dim);
  batch.labels.reserve(spec.size);
  for (std::size_t idx : picked) {
    auto row = dataset.example(idx);
    batch.features.insert(batch.features.end(), row.begin(), row.end());
    batch.labels.push_back(dataset.labels[idx]);
  }
  return batch;
}

Batch full_split_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  Batch batch;
  batch.feature_dim = dataset.feature_dim;
  batch.features.reserve(indices.size() * dataset.feature_dim);
  batch.labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    auto row = dataset.example(idx);
    batch.features.insert(batch.features.end(), row.begin(), row.end());
    batch.labels.push_back(dataset.labels[idx]);
  }
  return batch;
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("idx: truncated header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> read_payload(std::ifstream& in, std::size_t expected,
                                        const std::string& path) {
  std::vector<unsigned char> data(expected);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected)
    throw std::runtime_error("idx: truncated payload in " + path + ": expected " +
                             std::to_string(expected) + " bytes, got " +
                             std::to_string(got));
  return data;
}

struct IdxImages {
  std::size_t count, rows, cols;
  std::vector<unsigned char> pixels;
};

IdxImages read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path);
  const std::uint32_t magic = read_be32(in, path);
  if (magic != kImagesMagic)
    throw std::runtime_error("idx: bad image magic in " + path + ": got 0x" +
                             [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", magic); return std::string(b); }());
  IdxImages img;
  img.count = read_be32(in, path);
  img.rows = read_be32(in, path);
  img.cols = read_be32(in, path);
  img.pixels = read_payload(in, img.count * img.rows * img.cols, path);
  return img;
}

std::vector<unsigned char> read_idx_labels(const std::string& path, std::size_t* count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path);
  const std::uint32_t magic = read_be32(in, path);
  if (magic != kLabelsMagic)
    throw std::runtime_error("idx: bad label magic in " + path + ": got 0x" +
                             [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", magic); return std::string(b); }());
  *count = read_be32(in, path);
  return read_payload(in, *count, path);
}

void append_idx_pair(Dataset& ds, const std::string& images_path,
                     const std::string& labels_path, bool is_test) {
  const IdxImages img = read_idx_images(images_path);
  std::size_t label_count = 0;
  const auto labels = read_idx_labels(labels_path, &label_count);
  if (label_count != img.count)
    throw std::runtime_error("idx: image/label count mismatch: " +
                             std::to_string(img.count) + " images vs " +
                             std::to_string(label_count) + " labels");

  const std::size_t dim = img.rows * img.cols;
  if (ds.feature_dim == 0) ds.feature_dim = dim;
  if (ds.feature_dim != dim)
    throw std::runtime_error("idx: inconsistent image dimensions across files");

  const std::size_t base = ds.size();
  ds.features.reserve(ds.features.size() + img.count * dim);
  for (std::size_t i = 0; i < img.count * dim; ++i)
    ds.features.push_back(static_cast<double>(img.pixels[i]) / 255.0);
  for (std::size_t i = 0; i < img.count; ++i) {
    ds.labels.push_back(labels[i]);
    (is_test ? ds.test_indices : ds.train_indices).push_back(base + i);
  }
  for (std::int32_t l : ds.labels)
    ds.num_classes = std::max<std::size_t>(ds.num_classes, static_cast<std::size_t>(l) + 1);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path) {
  Dataset ds;
  append_idx_pair(ds, images_path, labels_path, /*is_test=*/false);
  return ds;
}

Dataset load_mnist_dir(const std::string& dir) {
  Dataset ds;
  append_idx_pair(ds, dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte",
                  /*is_test=*/false);
  append_idx_pair(ds, dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte",
                  /*is_test=*/true);
  return ds;
}

void write_idx(const Dataset& dataset, std::span<const std::size_t> indices,
               std::size_t rows, std::size_t cols,
               const std::string& images_path, const std::string& labels_path) {
  if (rows * cols != dataset.feature_dim)
    throw std::invalid_argument("write_idx: rows*cols must equal feature_dim");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lbl(labels_path, std::ios::binary);
  if (!img || !lbl) throw std::runtime_error("write_idx: cannot open output files");

  write_be32(img, kImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(indices.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  write_be32(lbl, kLabelsMagic);
  write_be32(lbl, static_cast<std::uint32_t>(indices.size()));

  for (std::size_t idx : indices) {
    auto row = dataset.example(idx);
    for (double v : row) {
      const auto byte = static_cast<unsigned char>(
          std::clamp(std::lround(v * 255.0), 0L, 255L));
      img.put(static_cast<char>(byte));
    }
    lbl.put(static_cast<char>(static_cast<unsigned char>(dataset.labels[idx])));
  }
}

Dataset make_two_moons(double noise, std::size_t count, std::uint64_t seed) {
  if (count < 2) throw std::invalid_argument("two_moons: count must be >= 2");
  Dataset ds;
  ds.feature_dim = 2;
  ds.num_classes = 2;
  Rng rng(derive_seed(seed, stream_tag::kInit, std::uint64_t{0x6d6f6f6e}));
  ds.features.reserve(count * 2);
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = std::numbers::pi * rng.uniform01();
    double x, y;
    if (label == 0) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    ds.features.push_back(x + noise * rng.normal());
    ds.features.push_back(y + noise * rng.normal());
    ds.labels.push_back(label);
  }
  // Deterministic 80/20 split; parity interleaving keeps classes balanced.
  for (std::size_t i = 0; i < count; ++i)
    (i % 5 == 4 ? ds.test_indices : ds.train_indices).push_back(i);
  return ds;
}

Dataset make_blobs(const BlobsConfig& cfg) {
  if (cfg.centers < 2) throw std::invalid_argument("blobs: need >= 2 centers");
  if (cfg.count < cfg.centers) throw std::invalid_argument("blobs: count < centers");
  Dataset ds;
  ds.feature_dim = cfg.dim;
  ds.num_classes = cfg.centers;

  Rng center_rng(derive_seed(cfg.seed, stream_tag::kInit, std::uint64_t{0x626c6f62}));
  std::vector<double> centers(cfg.centers * cfg.dim);
  for (double& c : centers) c = cfg.center_spread * center_rng.normal();

  Rng rng(derive_seed(cfg.seed, stream_tag::kInit, std::uint64_t{0x73616d70}));
  ds.features.reserve(cfg.count * cfg.dim);
  ds.labels.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const auto label = static_cast<std::int32_t>(i % cfg.centers);
    const double* c = centers.data() + static_cast<std::size_t>(label) * cfg.dim;
    for (std::size_t j = 0; j < cfg.dim; ++j)
      ds.features.push_back(c[j] + cfg.cluster_std * rng.normal());
    ds.labels.push_back(label);
  }
  const auto train_count =
      static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(cfg.count));
  for (std::size_t i = 0; i < cfg.count; ++i)
    (i < train_count ? ds.train_indices : ds.test_indices).push_back(i);
  return ds;
}

void export_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_csv: cannot open " + path);
  for (std::size_t j = 0; j < dataset.feature_dim; ++j) out << "x" << j << ",";
  out << "label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto row = dataset.example(i);
    for (double v : row) out << v << ",";
    out << dataset.labels[i] << "\n";
  }
}

}  // namespace esmask
