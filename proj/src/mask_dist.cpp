#include "esmask/mask_dist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace esmask {

void MaskDist::validate() const {
  if (logits.empty()) throw std::invalid_argument("mask dist: need at least one group");
  if (!(temperature > 0.0)) throw std::invalid_argument("mask dist: temperature must be > 0");
  if (block_width < 1) throw std::invalid_argument("mask dist: block width must be >= 1");
  for (double l : logits)
    if (!std::isfinite(l)) throw std::invalid_argument("mask dist: non-finite logit");
}

MaskDist make_mask_dist(std::size_t groups, double temperature,
                        double eta_logits, std::uint32_t block_width) {
  MaskDist md;
  md.logits.assign(groups, 0.0);
  md.temperature = temperature;
  md.eta_logits = eta_logits;
  md.block_width = block_width;
  md.validate();
  return md;
}

CategoricalDist probs(const MaskDist& md) {
  md.validate();
  const double max_logit = *std::max_element(md.logits.begin(), md.logits.end());
  std::vector<double> expd(md.logits.size());
  double total = 0.0;
  for (std::size_t j = 0; j < expd.size(); ++j) {
    expd[j] = std::exp((md.logits[j] - max_logit) / md.temperature);
    total += expd[j];
  }
  for (double& e : expd) e /= total;
  return CategoricalDist::from_weights(expd);
}

const char* to_string(RampShape shape) {
  return shape == RampShape::Cubic ? "cubic" : "linear";
}

RampShape ramp_shape_from_string(const std::string& s) {
  if (s == "cubic") return RampShape::Cubic;
  if (s == "linear") return RampShape::Linear;
  throw std::invalid_argument("unknown ramp shape: " + s);
}

void SparsitySchedule::validate() const {
  if (!(initial_sparsity >= 0.0 && initial_sparsity < 1.0) ||
      !(final_sparsity >= 0.0 && final_sparsity < 1.0))
    throw std::invalid_argument("schedule: sparsities must lie in [0, 1)");
  if (hold_steps > ramp_end_step)
    throw std::invalid_argument("schedule: hold_steps must not exceed ramp_end_step");
}

double SparsitySchedule::sparsity_at(std::int64_t step) const {
  if (step <= hold_steps) return initial_sparsity;
  if (step >= ramp_end_step) return final_sparsity;
  const double t = static_cast<double>(step - hold_steps) /
                   static_cast<double>(ramp_end_step - hold_steps);
  if (shape == RampShape::Linear)
    return initial_sparsity + (final_sparsity - initial_sparsity) * t;
  const double r = 1.0 - t;
  return final_sparsity + (initial_sparsity - final_sparsity) * r * r * r;
}

std::size_t retained_count(const SparsitySchedule& schedule, std::int64_t step,
                           std::size_t g) {
  schedule.validate();
  if (step < 0) throw std::invalid_argument("retained_count: step must be >= 0");
  const double keep = 1.0 - schedule.sparsity_at(step);
  const auto k = static_cast<std::int64_t>(std::llround(keep * static_cast<double>(g)));
  return static_cast<std::size_t>(std::clamp<std::int64_t>(k, 1, static_cast<std::int64_t>(g)));
}

std::vector<double> mask_gradient(std::span<const MaskSample> samples,
                                  const MaskDist& md) {
  if (samples.empty()) throw std::invalid_argument("mask_gradient: no samples");
  const CategoricalDist p = probs(md);
  std::vector<double> grad(md.groups(), 0.0);
  for (const MaskSample& s : samples) {
    for (std::uint32_t j : s.group_mask.indices)
      grad[j] += s.utility * (1.0 - p.probs[j]) / md.temperature;
  }
  return grad;
}

MaskDist apply_mask_update(const MaskDist& md, std::span<const double> grad) {
  if (grad.size() != md.groups())
    throw std::invalid_argument("apply_mask_update: gradient length mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::invalid_argument("apply_mask_update: non-finite gradient");
  MaskDist out = md;
  for (std::size_t j = 0; j < grad.size(); ++j)
    out.logits[j] += md.eta_logits * grad[j];
  return out;
}

Mask test_time_mask(const MaskDist& md, std::size_t k) {
  if (k < 1 || k > md.groups())
    throw std::invalid_argument("test_time_mask: need 1 <= k <= groups");
  std::vector<std::uint32_t> order(md.groups());
  std::iota(order.begin(), order.end(), 0);
  // stable partial sort on descending logit keeps ties in index order
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return md.logits[a] > md.logits[b];
  });
  Mask group_mask;
  group_mask.domain = static_cast<std::uint32_t>(md.groups());
  group_mask.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(group_mask.indices.begin(), group_mask.indices.end());
  return expand_block_mask(group_mask, md.block_width);
}

Mask expand_block_mask(const Mask& group_mask, std::uint32_t w) {
  if (w == 0) throw std::invalid_argument("expand_block_mask: width must be >= 1");
  if (w == 1) return group_mask;
  Mask out;
  out.domain = group_mask.domain * w;
  out.indices.reserve(group_mask.indices.size() * w);
  for (std::uint32_t g : group_mask.indices)
    for (std::uint32_t i = 0; i < w; ++i) out.indices.push_back(g * w + i);
  return out;
}

}  // namespace esmask
