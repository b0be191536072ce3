#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace esmask {

// Categorical distribution with a precomputed CDF. Built once per snapshot
// and shared read-only; draws are pure functions of (dist, u).
struct CategoricalDist {
  std::vector<double> probs;
  std::vector<double> cdf;  // non-decreasing, cdf.back() == 1 exactly

  std::size_t size() const { return probs.size(); }

  // Requires sum(probs) within 1e-6 of 1; renormalizes to exact internally.
  static CategoricalDist from_probs(std::span<const double> probs);
  // Accepts any non-negative mass vector with a positive total.
  static CategoricalDist from_weights(std::span<const double> weights);
};

// Smallest index j with u < cdf[j], found by binary search. Throws unless
// u is in [0, 1).
std::size_t draw(const CategoricalDist& dist, double u);

// k i.i.d. draws: k uniforms are generated, sorted ascending, and merged
// against the CDF in one forward pass. Output indices are non-decreasing.
std::vector<std::uint32_t> draw_k_sorted(const CategoricalDist& dist,
                                         std::size_t k, std::uint64_t seed);

// Sorted set of distinct indices in [0, domain).
struct Mask {
  std::vector<std::uint32_t> indices;
  std::uint32_t domain = 0;

  std::size_t count() const { return indices.size(); }
  bool contains(std::uint32_t j) const;
};

enum class SamplerKind { WR, WRPlusU, WoRb, TopN };

struct SamplerStrategy {
  SamplerKind kind = SamplerKind::TopN;
  std::uint32_t batches = 1;     // WoRb round count, >= 1
  std::uint32_t multiplier = 5;  // TopN oversampling factor, >= 2

  static SamplerStrategy wr() { return {SamplerKind::WR, 1, 5}; }
  static SamplerStrategy wr_plus_u() { return {SamplerKind::WRPlusU, 1, 5}; }
  static SamplerStrategy worb(std::uint32_t b) { return {SamplerKind::WoRb, b, 5}; }
  static SamplerStrategy topn(std::uint32_t m) { return {SamplerKind::TopN, 1, m}; }

  void validate() const;
  std::string name() const;
};

SamplerStrategy sampler_strategy_from_string(const std::string& s);

// Draw a sparsity mask of up to (or exactly, depending on strategy) k
// retained indices. Pure in (dist, k, strategy, seed).
Mask sample_mask(const CategoricalDist& dist, std::size_t k,
                 const SamplerStrategy& strategy, std::uint64_t seed);

}  // namespace esmask
