#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace esmask {

// FNV-1a over the canonical (sorted-key) JSON dump of a config.
inline std::uint64_t config_hash(const nlohmann::json& config) {
  const std::string dump = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash_hex(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  return buf;
}

// Append-only JSON-lines writer; one object per step or generation.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path)
      : out_(path, std::ios::app) {
    if (!out_) throw std::runtime_error("metrics: cannot open " + path);
  }

  void write(const nlohmann::json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace esmask
