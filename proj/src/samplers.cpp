#include "esmask/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "esmask/rng.hpp"

namespace esmask {

namespace {

CategoricalDist build(std::span<const double> mass, double total) {
  CategoricalDist dist;
  dist.probs.resize(mass.size());
  dist.cdf.resize(mass.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < mass.size(); ++j) {
    dist.probs[j] = mass[j] / total;
    acc += dist.probs[j];
    dist.cdf[j] = acc;
  }
  dist.cdf.back() = 1.0;  // guard against prefix-sum rounding at the tail
  return dist;
}

double checked_total(std::span<const double> mass) {
  if (mass.empty()) throw std::invalid_argument("categorical: empty vector");
  double total = 0.0;
  for (double m : mass) {
    if (!(m >= 0.0)) throw std::invalid_argument("categorical: negative probability");
    total += m;
  }
  if (total <= 0.0) throw std::invalid_argument("categorical: all-zero vector");
  return total;
}

}  // namespace

CategoricalDist CategoricalDist::from_probs(std::span<const double> probs) {
  const double total = checked_total(probs);
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument("categorical: probabilities must sum to 1 within 1e-6");
  return build(probs, total);
}

CategoricalDist CategoricalDist::from_weights(std::span<const double> weights) {
  return build(weights, checked_total(weights));
}

std::size_t draw(const CategoricalDist& dist, double u) {
  if (!(u >= 0.0 && u < 1.0))
    throw std::invalid_argument("draw: u must be in [0, 1)");
  auto it = std::upper_bound(dist.cdf.begin(), dist.cdf.end(), u);
  return static_cast<std::size_t>(it - dist.cdf.begin());
}

namespace {

// Ascending radix sort on the raw bit patterns; for doubles in [0, 1) the
// bit order matches the value order, so this is an exact sort.
void sort_uniforms(std::vector<double>& values) {
  if (values.size() < 2048) {
    std::sort(values.begin(), values.end());
    return;
  }
  std::vector<std::uint64_t> keys(values.size()), scratch(values.size());
  std::memcpy(keys.data(), values.data(), values.size() * sizeof(double));
  for (int shift = 0; shift < 64; shift += 8) {
    std::size_t counts[257] = {};
    for (std::uint64_t key : keys) ++counts[((key >> shift) & 0xff) + 1];
    for (int b = 0; b < 256; ++b) counts[b + 1] += counts[b];
    for (std::uint64_t key : keys) scratch[counts[(key >> shift) & 0xff]++] = key;
    std::swap(keys, scratch);
  }
  std::memcpy(values.data(), keys.data(), values.size() * sizeof(double));
}

}  // namespace

std::vector<std::uint32_t> draw_k_sorted(const CategoricalDist& dist,
                                         std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("draw_k_sorted: k must be >= 1");
  Rng rng(derive_seed(seed, stream_tag::kMaskSample));
  std::vector<double> uniforms(k);
  for (double& u : uniforms) u = rng.uniform01();
  sort_uniforms(uniforms);

  std::vector<std::uint32_t> out(k);
  std::size_t j = 0;
  for (std::size_t i = 0; i < k; ++i) {
    while (dist.cdf[j] <= uniforms[i]) ++j;
    out[i] = static_cast<std::uint32_t>(j);
  }
  return out;
}

bool Mask::contains(std::uint32_t j) const {
  return std::binary_search(indices.begin(), indices.end(), j);
}

void SamplerStrategy::validate() const {
  if (kind == SamplerKind::WoRb && batches < 1)
    throw std::invalid_argument("sampler: WoRb batch count must be >= 1");
  if (kind == SamplerKind::TopN && multiplier < 2)
    throw std::invalid_argument("sampler: TopN multiplier must be >= 2");
}

std::string SamplerStrategy::name() const {
  switch (kind) {
    case SamplerKind::WR:
      return "wr";
    case SamplerKind::WRPlusU:
      return "wr+u";
    case SamplerKind::WoRb:
      return "worb" + std::to_string(batches);
    case SamplerKind::TopN:
      return "topn" + std::to_string(multiplier);
  }
  return "unknown";
}

SamplerStrategy sampler_strategy_from_string(const std::string& s) {
  if (s == "wr") return SamplerStrategy::wr();
  if (s == "wr+u") return SamplerStrategy::wr_plus_u();
  if (s.rfind("worb", 0) == 0)
    return SamplerStrategy::worb(static_cast<std::uint32_t>(std::stoul(s.substr(4))));
  if (s.rfind("topn", 0) == 0)
    return SamplerStrategy::topn(static_cast<std::uint32_t>(std::stoul(s.substr(4))));
  throw std::invalid_argument("unknown sampler strategy: " + s);
}

namespace {

std::vector<std::uint32_t> unique_sorted(std::vector<std::uint32_t> draws) {
  std::sort(draws.begin(), draws.end());
  draws.erase(std::unique(draws.begin(), draws.end()), draws.end());
  return draws;
}

Mask sample_wr(const CategoricalDist& dist, std::size_t k, std::uint64_t seed) {
  Mask mask;
  mask.domain = static_cast<std::uint32_t>(dist.size());
  mask.indices = unique_sorted(draw_k_sorted(dist, k, seed));
  return mask;
}

// Top up with uniformly random distinct indices among the unmasked ones
// until exactly k are retained.
void uniform_top_up(Mask& mask, std::size_t k, std::uint64_t seed) {
  const std::size_t d = mask.domain;
  std::vector<std::uint8_t> in_mask(d, 0);
  for (std::uint32_t j : mask.indices) in_mask[j] = 1;
  Rng rng(derive_seed(seed, stream_tag::kMaskSample, std::uint64_t{0x746f7075}));
  while (mask.indices.size() < k) {
    const auto j = static_cast<std::uint32_t>(rng.uniform_below(d));
    if (!in_mask[j]) {
      in_mask[j] = 1;
      mask.indices.push_back(j);
    }
  }
  std::sort(mask.indices.begin(), mask.indices.end());
}

Mask sample_worb(const CategoricalDist& dist, std::size_t k,
                 std::uint32_t batches, std::uint64_t seed) {
  Mask mask;
  mask.domain = static_cast<std::uint32_t>(dist.size());
  const std::size_t per_round = (k + batches - 1) / batches;

  std::vector<double> weights = dist.probs;
  double remaining = 1.0;
  CategoricalDist current = dist;
  std::size_t drawn = 0;
  for (std::uint32_t round = 0; round < batches && drawn < k; ++round) {
    const std::size_t count = std::min(per_round, k - drawn);
    auto draws = unique_sorted(draw_k_sorted(current, count, derive_seed(seed, round)));
    drawn += count;
    for (std::uint32_t j : draws) {
      mask.indices.push_back(j);
      remaining -= weights[j];
      weights[j] = 0.0;
    }
    if (drawn >= k) break;
    if (remaining <= 0.0) break;  // distribution exhausted
    current = CategoricalDist::from_weights(weights);
  }
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

Mask sample_topn(const CategoricalDist& dist, std::size_t k,
                 std::uint32_t multiplier, std::uint64_t seed) {
  const std::size_t d = dist.size();
  std::vector<double> histogram(d, 0.0);
  for (std::uint32_t j : draw_k_sorted(dist, multiplier * k, seed))
    histogram[j] += 1.0;

  // Small uniform noise on every bin breaks ties; bins that were never drawn
  // stay below count 1 and can only fill leftover slots, uniformly at random.
  Rng noise(derive_seed(seed, stream_tag::kMaskSample, std::uint64_t{0x6e6f6973}));
  for (double& h : histogram) h += 1e-3 * noise.uniform01();

  std::vector<std::uint32_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   order.end(), [&](std::uint32_t a, std::uint32_t b) {
                     return histogram[a] > histogram[b];
                   });

  Mask mask;
  mask.domain = static_cast<std::uint32_t>(d);
  mask.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

}  // namespace

Mask sample_mask(const CategoricalDist& dist, std::size_t k,
                 const SamplerStrategy& strategy, std::uint64_t seed) {
  strategy.validate();
  if (k < 1 || k > dist.size())
    throw std::invalid_argument("sample_mask: need 1 <= k <= d");
  switch (strategy.kind) {
    case SamplerKind::WR:
      return sample_wr(dist, k, seed);
    case SamplerKind::WRPlusU: {
      Mask mask = sample_wr(dist, k, seed);
      uniform_top_up(mask, k, seed);
      return mask;
    }
    case SamplerKind::WoRb:
      return sample_worb(dist, k, strategy.batches, seed);
    case SamplerKind::TopN:
      return sample_topn(dist, k, strategy.multiplier, seed);
  }
  throw std::logic_error("sample_mask: unreachable");
}

}  // namespace esmask
