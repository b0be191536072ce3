#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace esmask {

enum class BenchmarkKind { Sphere, Rosenbrock };

// Classic black-box surfaces in maximization convention: the optimum is 0.
struct BenchmarkFn {
  BenchmarkKind kind = BenchmarkKind::Sphere;
  std::size_t dim = 1;

  void validate() const;
};

double eval_benchmark(const BenchmarkFn& fn, std::span<const double> theta);

// Immutable after construction; batch building is a pure function.
struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, examples x feature_dim
  std::vector<std::int32_t> labels;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;

  std::size_t size() const { return labels.size(); }
  std::span<const double> example(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
};

struct Batch {
  std::size_t feature_dim = 0;
  std::vector<double> features;  // row-major, size x feature_dim
  std::vector<std::int32_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> example(std::size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
};

struct BatchSpec {
  std::size_t size = 256;
  std::uint64_t data_seed = 0;
};

// How training batches are assigned within a generation: one fresh batch per
// sample (VarB), one batch shared by the whole generation (FixB), or one
// batch per worker (WFixB).
enum class BatchRegime { VarB, FixB, WFixB };

const char* to_string(BatchRegime regime);
BatchRegime batch_regime_from_string(const std::string& s);

// Deterministic draw of `size` distinct training indices from data_seed.
Batch make_batch(const Dataset& dataset, const BatchSpec& spec);

Batch full_split_batch(const Dataset& dataset, std::span<const std::size_t> indices);

// IDX container ingestion (big-endian magic + dims, unsigned-byte payload).
// Pixels are scaled to [0, 1]; all examples land in the train split.
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path);

// Standard four-file layout: train pair becomes the train split, test pair
// the test split.
Dataset load_mnist_dir(const std::string& dir);

// Re-serialize a dataset subset to an IDX image/label file pair.
// Features must be in [0, 1]; they are quantized back to bytes.
void write_idx(const Dataset& dataset, std::span<const std::size_t> indices,
               std::size_t rows, std::size_t cols,
               const std::string& images_path, const std::string& labels_path);

// Two interleaved half circles with Gaussian noise; not linearly separable.
Dataset make_two_moons(double noise, std::size_t count, std::uint64_t seed);

struct BlobsConfig {
  std::size_t centers = 3;
  std::size_t count = 300;
  std::uint64_t seed = 0;
  std::size_t dim = 2;
  double center_spread = 4.0;  // stddev of the center positions
  double cluster_std = 0.6;
  double train_fraction = 0.8;
};

// Gaussian blobs, one class per center; separable at the default spread.
Dataset make_blobs(const BlobsConfig& cfg);

// CSV with a header row, float features, integer label last column.
void export_csv(const Dataset& dataset, const std::string& path);

}  // namespace esmask
