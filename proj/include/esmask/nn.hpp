#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "esmask/tasks.hpp"

namespace esmask {

enum class LayerKind { Dense, BatchNorm };

struct LayerDesc {
  LayerKind kind = LayerKind::Dense;
  std::size_t in = 0;
  std::size_t out = 0;  // BatchNorm: feature count (in == out)
  std::size_t weight_offset = 0;  // Dense weights / BN gamma
  std::size_t bias_offset = 0;    // Dense bias / BN beta
  bool has_bias = true;
  bool maskable = false;        // Dense weights only
  std::size_t running_offset = 0;  // BN: offset into running-stat buffers
};

// A small differentiable net over one flat parameter vector. Dense layers are
// followed by ReLU (and optional batch norm before the ReLU); the final Dense
// feeds a softmax head, or a logistic head when it has a single output.
struct FlatModel {
  std::vector<double> params;
  std::vector<double> momentum;
  std::vector<LayerDesc> layers;
  std::vector<double> bn_running_mean;
  std::vector<double> bn_running_var;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  std::size_t num_classes = 0;
  std::vector<std::uint8_t> maskable;  // per-parameter flag

  std::size_t dim() const { return params.size(); }
  std::size_t maskable_count() const;
  // Global indices of maskable parameters, in layer order.
  std::vector<std::size_t> maskable_param_indices() const;
};

struct MlpConfig {
  std::vector<std::size_t> widths;  // e.g. {784, 32, 10}
  bool batch_norm = false;
  bool bias = true;
  bool mask_final_layer = false;  // final Dense is exempt by default
  std::uint64_t init_seed = 0;
};

FlatModel make_mlp(const MlpConfig& cfg);

struct EvalResult {
  double loss = 0.0;  // mean negative log-likelihood
  double accuracy = 0.0;
};

// Per-BN-layer batch statistics gathered during a training-mode forward pass,
// so running averages can be merged deterministically by the single writer.
struct BnBatchStats {
  std::vector<double> mean;
  std::vector<double> var;
};

// Forward pass over an explicit parameter vector (the model supplies layout
// and running statistics). Batch norm uses batch statistics when
// `training_bn`, running averages otherwise.
EvalResult eval_with_params(const FlatModel& model, std::span<const double> params,
                            const Batch& batch, bool training_bn,
                            BnBatchStats* stats_out = nullptr);

struct GradResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> grad;  // d(mean NLL)/d(params)
};

// Training-mode forward + exact manual backward over the given params.
GradResult forward_backward(const FlatModel& model, std::span<const double> params,
                            const Batch& batch, BnBatchStats* stats_out = nullptr);

// Mask-applying wrappers: apply a parameter-level mask (1 = retained) to the
// model's own parameters. Masked coordinates receive exactly zero gradient.
EvalResult forward(const FlatModel& model, std::span<const std::uint8_t> mask,
                   const Batch& batch, bool training_bn = true);
GradResult backward(const FlatModel& model, std::span<const std::uint8_t> mask,
                    const Batch& batch);

std::vector<double> apply_param_mask(std::span<const double> params,
                                     std::span<const std::uint8_t> mask);

struct TrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 256;
  std::int64_t steps = 1000;
  std::size_t generation_size = 9;
  bool use_batch_norm = true;

  void validate() const;
};

// v <- momentum * v + (grad + weight_decay * theta); theta <- theta - lr * v.
// `decay_eligible` (optional, length D) limits weight decay to flagged
// coordinates. Throws on non-finite gradient, model untouched.
void sgd_momentum_step(FlatModel& model, std::span<const double> grad,
                       const TrainConfig& cfg,
                       std::span<const std::uint8_t> decay_eligible = {});

// Merge per-sample BN batch stats (mean over samples, in index order) into
// the model's running averages with the configured momentum.
void update_bn_running_stats(FlatModel& model,
                             std::span<const BnBatchStats> stats);

// Mean loss/accuracy of `params` over a dataset split, evaluated in chunks.
EvalResult evaluate_split(const FlatModel& model, std::span<const double> params,
                          const Dataset& dataset,
                          std::span<const std::size_t> indices, bool training_bn,
                          std::size_t chunk = 512);

}  // namespace esmask
