#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "esmask/ces.hpp"
#include "esmask/nn.hpp"
#include "esmask/search_dist.hpp"

namespace esmask {

// Versioned checkpoint container: magic + JSON header followed by raw
// little-endian float64 arrays in header order.
class ArchiveWriter {
 public:
  explicit ArchiveWriter(nlohmann::json meta) : meta_(std::move(meta)) {}
  void add(const std::string& name, std::span<const double> values);
  void save(const std::string& path) const;

 private:
  nlohmann::json meta_;
  std::vector<std::pair<std::string, std::vector<double>>> arrays_;
};

struct Archive {
  nlohmann::json meta;
  std::map<std::string, std::vector<double>> arrays;

  static Archive load(const std::string& path);
  const std::vector<double>& at(const std::string& name) const;
};

struct SearchDistCheckpoint {
  GaussianSearchDist dist;
  std::uint64_t master_seed = 0;
  std::int64_t generation = 0;  // RNG stream position: next generation index
};

void save_search_dist(const SearchDistCheckpoint& ckpt, const std::string& path);
SearchDistCheckpoint load_search_dist(const std::string& path);

struct CesCheckpoint {
  MlpConfig arch;
  FlatModel model;
  std::vector<MaskDist> mask_dists;
  bool per_tensor = false;
  SparsitySchedule schedule;
  std::uint64_t master_seed = 0;
  std::int64_t step = 0;
};

void save_ces_checkpoint(const CesCheckpoint& ckpt, const std::string& path);
CesCheckpoint load_ces_checkpoint(const std::string& path);

}  // namespace esmask
