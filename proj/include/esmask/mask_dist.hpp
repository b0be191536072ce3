#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "esmask/samplers.hpp"

namespace esmask {

// Softmax-parameterized distribution over mask groups. One group covers
// block_width contiguous maskable parameters. Immutable snapshot per
// training step; updates return a new value.
struct MaskDist {
  std::vector<double> logits;   // length g
  double temperature = 3.0;     // > 0
  double eta_logits = 0.1;      // 0 disables mask learning (FixMask)
  std::uint32_t block_width = 1;

  std::size_t groups() const { return logits.size(); }
  std::size_t masked_param_count() const { return logits.size() * block_width; }
  void validate() const;
};

MaskDist make_mask_dist(std::size_t groups, double temperature = 3.0,
                        double eta_logits = 0.1, std::uint32_t block_width = 1);

// softmax(logits / temperature) with max-logit subtraction.
CategoricalDist probs(const MaskDist& md);

enum class RampShape { Cubic, Linear };

const char* to_string(RampShape shape);
RampShape ramp_shape_from_string(const std::string& s);

// Holds initial sparsity for hold_steps, then ramps monotonically to the
// final sparsity at ramp_end_step, constant afterwards.
struct SparsitySchedule {
  double initial_sparsity = 0.5;
  double final_sparsity = 0.5;
  std::int64_t hold_steps = 2000;
  std::int64_t ramp_end_step = 50000;
  RampShape shape = RampShape::Cubic;

  void validate() const;
  double sparsity_at(std::int64_t step) const;
};

// round(g * (1 - sparsity(step))), clamped to [1, g].
std::size_t retained_count(const SparsitySchedule& schedule, std::int64_t step,
                           std::size_t g);

// One generation member: a group-level mask and its shaped utility.
struct MaskSample {
  Mask group_mask;
  double utility = 0.0;
};

// sum_i u_i * (1 - p) .* m_i / temperature over group-level masks.
// No natural-gradient correction.
std::vector<double> mask_gradient(std::span<const MaskSample> samples,
                                  const MaskDist& md);

// logits += eta_logits * grad. Throws on non-finite grad, state unchanged.
MaskDist apply_mask_update(const MaskDist& md, std::span<const double> grad);

// Deterministic top-k of the logits (ties to the lower index), expanded by
// the block width to parameter indices.
Mask test_time_mask(const MaskDist& md, std::size_t k);

// Parameter index j is retained iff group j / w is retained.
Mask expand_block_mask(const Mask& group_mask, std::uint32_t w);

}  // namespace esmask
