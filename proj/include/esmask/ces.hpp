#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "esmask/mask_dist.hpp"
#include "esmask/nn.hpp"
#include "esmask/samplers.hpp"

namespace esmask {

// Hybrid training configuration: SGD with momentum on the differentiable
// weights, ES on the sparsity-mask logits, per step.
struct CesConfig {
  TrainConfig train;
  SparsitySchedule schedule;
  SamplerStrategy strategy = SamplerStrategy::topn(5);
  // Generation members are their own logical workers, so WFixB assigns one
  // data seed per sample and FixB shares one across the generation.
  BatchRegime regime = BatchRegime::WFixB;
  double temperature = 3.0;
  double eta_logits = 0.1;  // 0 freezes the mask distribution (FixMask)
  std::uint32_t block_width = 1;
  bool per_tensor = false;  // one distribution per maskable tensor
  double shaping_nu = 2.0;
  std::uint64_t master_seed = 0;
  std::uint32_t eval_threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

// One or more mask distributions bound to the model's maskable parameters.
// Group j of a distribution covers block_width consecutive maskable slots;
// slots enumerate maskable parameters in layer order.
class MaskDistSet {
 public:
  static MaskDistSet create(const FlatModel& model, const CesConfig& cfg);

  std::size_t count() const { return dists_.size(); }
  const MaskDist& at(std::size_t i) const { return dists_[i]; }
  MaskDist& at(std::size_t i) { return dists_[i]; }
  std::size_t total_groups() const;
  std::size_t param_dim() const { return param_dim_; }

  std::vector<std::size_t> retained_counts(const SparsitySchedule& schedule,
                                           std::int64_t step) const;

  // One group-level mask per distribution.
  std::vector<Mask> sample_group_masks(std::span<const std::size_t> ks,
                                       const SamplerStrategy& strategy,
                                       std::uint64_t seed) const;
  std::vector<Mask> test_time_group_masks(std::span<const std::size_t> ks) const;

  // Expand group masks to a parameter-level bitmap (1 = retained).
  // Non-maskable parameters are always retained.
  std::vector<std::uint8_t> param_bitmap(std::span<const Mask> group_masks) const;

 private:
  std::vector<MaskDist> dists_;
  std::vector<std::size_t> slot_begin_;      // per dist, into the slot space
  std::vector<std::size_t> slot_to_param_;   // maskable slot -> param index
  std::size_t param_dim_ = 0;
};

struct CesStepResult {
  double loss_mean = 0.0;
  double fitness_best = 0.0;
  double fitness_mean = 0.0;
  double sparsity = 0.0;
  std::size_t retained_groups = 0;
  bool es_update_applied = false;
};

// One step of the hybrid loop: sample n masks, evaluate fitness and gradient
// per sample in parallel, average gradients for one SGD step, shape utilities
// and update the mask logits. On failure both model and distribution set are
// left unchanged.
CesStepResult ces_train_step(FlatModel& model, MaskDistSet& mds,
                             const Dataset& data, const CesConfig& cfg,
                             std::int64_t step);

// Accuracy/loss of the deterministic test-time mask on a dataset split.
EvalResult ces_test_eval(const FlatModel& model, const MaskDistSet& mds,
                         const SparsitySchedule& schedule, std::int64_t step,
                         const Dataset& data,
                         std::span<const std::size_t> indices);

struct PruneConfig {
  SparsitySchedule schedule;
};

struct PruneStepResult {
  double loss = 0.0;
  double sparsity = 0.0;
  std::size_t retained = 0;
};

// Gradual magnitude pruning baseline: SGD step through the current mask,
// then re-threshold maskable weights by absolute magnitude at the step's
// sparsity. Masked weights (and their momentum) are zeroed and stay zero
// while masked. `mask` persists across steps; pass it in empty to start.
PruneStepResult prune_train_step(FlatModel& model, std::vector<std::uint8_t>& mask,
                                 const Dataset& data, const TrainConfig& cfg,
                                 const PruneConfig& prune, std::int64_t step,
                                 std::uint64_t master_seed);

}  // namespace esmask
