#include "esmask/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace esmask {

namespace {

constexpr char kMagic[4] = {'E', 'S', 'M', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error("checkpoint: truncated file " + path);
  return v;
}

}  // namespace

void ArchiveWriter::add(const std::string& name, std::span<const double> values) {
  arrays_.emplace_back(name, std::vector<double>(values.begin(), values.end()));
}

void ArchiveWriter::save(const std::string& path) const {
  nlohmann::json header;
  header["meta"] = meta_;
  header["arrays"] = nlohmann::json::array();
  for (const auto& [name, values] : arrays_)
    header["arrays"].push_back({{"name", name}, {"count", values.size()}});
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint64_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, values] : arrays_)
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  const auto header_len = read_raw<std::uint64_t>(in, path);
  std::string header_str(header_len, '\0');
  if (!in.read(header_str.data(), static_cast<std::streamsize>(header_len)))
    throw std::runtime_error("checkpoint: truncated header in " + path);
  const nlohmann::json header = nlohmann::json::parse(header_str);

  Archive archive;
  archive.meta = header.at("meta");
  for (const auto& entry : header.at("arrays")) {
    const std::string name = entry.at("name");
    const std::size_t count = entry.at("count");
    std::vector<double> values(count);
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(count * sizeof(double))))
      throw std::runtime_error("checkpoint: truncated payload in " + path);
    archive.arrays.emplace(name, std::move(values));
  }
  return archive;
}

const std::vector<double>& Archive::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end())
    throw std::runtime_error("checkpoint: missing array " + name);
  return it->second;
}

void save_search_dist(const SearchDistCheckpoint& ckpt, const std::string& path) {
  ckpt.dist.validate();
  nlohmann::json meta;
  meta["kind"] = "search_dist";
  meta["dim"] = ckpt.dist.dim();
  meta["eta_mean"] = ckpt.dist.eta_mean;
  meta["eta_sigma"] = ckpt.dist.eta_sigma;
  meta["sigma_grad_form"] = to_string(ckpt.dist.sigma_grad_form);
  meta["master_seed"] = ckpt.master_seed;
  meta["generation"] = ckpt.generation;
  ArchiveWriter writer(meta);
  writer.add("mean", ckpt.dist.mean);
  writer.add("sigma", ckpt.dist.sigma);
  writer.save(path);
}

SearchDistCheckpoint load_search_dist(const std::string& path) {
  const Archive archive = Archive::load(path);
  if (archive.meta.at("kind") != "search_dist")
    throw std::runtime_error("checkpoint: not a search-dist checkpoint: " + path);
  SearchDistCheckpoint ckpt;
  ckpt.dist.mean = archive.at("mean");
  ckpt.dist.sigma = archive.at("sigma");
  ckpt.dist.eta_mean = archive.meta.at("eta_mean");
  ckpt.dist.eta_sigma = archive.meta.at("eta_sigma");
  ckpt.dist.sigma_grad_form =
      sigma_grad_form_from_string(archive.meta.at("sigma_grad_form"));
  ckpt.master_seed = archive.meta.at("master_seed");
  ckpt.generation = archive.meta.at("generation");
  ckpt.dist.validate();
  return ckpt;
}

void save_ces_checkpoint(const CesCheckpoint& ckpt, const std::string& path) {
  nlohmann::json meta;
  meta["kind"] = "ces";
  meta["widths"] = ckpt.arch.widths;
  meta["batch_norm"] = ckpt.arch.batch_norm;
  meta["bias"] = ckpt.arch.bias;
  meta["mask_final_layer"] = ckpt.arch.mask_final_layer;
  meta["init_seed"] = ckpt.arch.init_seed;
  meta["per_tensor"] = ckpt.per_tensor;
  meta["master_seed"] = ckpt.master_seed;
  meta["step"] = ckpt.step;
  meta["schedule"] = {{"initial_sparsity", ckpt.schedule.initial_sparsity},
                      {"final_sparsity", ckpt.schedule.final_sparsity},
                      {"hold_steps", ckpt.schedule.hold_steps},
                      {"ramp_end_step", ckpt.schedule.ramp_end_step},
                      {"shape", to_string(ckpt.schedule.shape)}};
  meta["mask_dists"] = nlohmann::json::array();
  for (const MaskDist& md : ckpt.mask_dists)
    meta["mask_dists"].push_back({{"temperature", md.temperature},
                                  {"eta_logits", md.eta_logits},
                                  {"block_width", md.block_width}});

  ArchiveWriter writer(meta);
  writer.add("params", ckpt.model.params);
  writer.add("momentum", ckpt.model.momentum);
  writer.add("bn_running_mean", ckpt.model.bn_running_mean);
  writer.add("bn_running_var", ckpt.model.bn_running_var);
  for (std::size_t t = 0; t < ckpt.mask_dists.size(); ++t)
    writer.add("logits_" + std::to_string(t), ckpt.mask_dists[t].logits);
  writer.save(path);
}

CesCheckpoint load_ces_checkpoint(const std::string& path) {
  const Archive archive = Archive::load(path);
  if (archive.meta.at("kind") != "ces")
    throw std::runtime_error("checkpoint: not a ces checkpoint: " + path);
  CesCheckpoint ckpt;
  ckpt.arch.widths = archive.meta.at("widths").get<std::vector<std::size_t>>();
  ckpt.arch.batch_norm = archive.meta.at("batch_norm");
  ckpt.arch.bias = archive.meta.at("bias");
  ckpt.arch.mask_final_layer = archive.meta.at("mask_final_layer");
  ckpt.arch.init_seed = archive.meta.at("init_seed");
  ckpt.per_tensor = archive.meta.at("per_tensor");
  ckpt.master_seed = archive.meta.at("master_seed");
  ckpt.step = archive.meta.at("step");
  const auto& sched = archive.meta.at("schedule");
  ckpt.schedule.initial_sparsity = sched.at("initial_sparsity");
  ckpt.schedule.final_sparsity = sched.at("final_sparsity");
  ckpt.schedule.hold_steps = sched.at("hold_steps");
  ckpt.schedule.ramp_end_step = sched.at("ramp_end_step");
  ckpt.schedule.shape = ramp_shape_from_string(sched.at("shape"));

  ckpt.model = make_mlp(ckpt.arch);
  ckpt.model.params = archive.at("params");
  ckpt.model.momentum = archive.at("momentum");
  ckpt.model.bn_running_mean = archive.at("bn_running_mean");
  ckpt.model.bn_running_var = archive.at("bn_running_var");

  std::size_t t = 0;
  for (const auto& md_meta : archive.meta.at("mask_dists")) {
    MaskDist md;
    md.logits = archive.at("logits_" + std::to_string(t));
    md.temperature = md_meta.at("temperature");
    md.eta_logits = md_meta.at("eta_logits");
    md.block_width = md_meta.at("block_width");
    md.validate();
    ckpt.mask_dists.push_back(std::move(md));
    ++t;
  }
  return ckpt;
}

}  // namespace esmask
