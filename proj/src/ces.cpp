#include "esmask/ces.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "esmask/rng.hpp"
#include "esmask/search_dist.hpp"

namespace esmask {

void CesConfig::validate() const {
  train.validate();
  schedule.validate();
  strategy.validate();
  if (!(temperature > 0.0)) throw std::invalid_argument("ces config: temperature must be > 0");
  if (block_width < 1) throw std::invalid_argument("ces config: block width must be >= 1");
  if (!(shaping_nu > 0.0)) throw std::invalid_argument("ces config: nu must be > 0");
}

MaskDistSet MaskDistSet::create(const FlatModel& model, const CesConfig& cfg) {
  cfg.validate();
  MaskDistSet mds;
  mds.param_dim_ = model.dim();
  mds.slot_to_param_ = model.maskable_param_indices();
  if (mds.slot_to_param_.empty())
    throw std::invalid_argument("mask dist set: model has no maskable parameters");

  const std::uint32_t w = cfg.block_width;
  if (cfg.per_tensor) {
    std::size_t slot = 0;
    for (const LayerDesc& layer : model.layers) {
      if (layer.kind != LayerKind::Dense || !layer.maskable) continue;
      const std::size_t count = layer.in * layer.out;
      if (count % w != 0)
        throw std::invalid_argument(
            "mask dist set: block width does not divide tensor size");
      mds.slot_begin_.push_back(slot);
      mds.dists_.push_back(
          make_mask_dist(count / w, cfg.temperature, cfg.eta_logits, w));
      slot += count;
    }
  } else {
    if (mds.slot_to_param_.size() % w != 0)
      throw std::invalid_argument(
          "mask dist set: block width does not divide maskable parameter count");
    mds.slot_begin_.push_back(0);
    mds.dists_.push_back(make_mask_dist(mds.slot_to_param_.size() / w,
                                        cfg.temperature, cfg.eta_logits, w));
  }
  return mds;
}

std::size_t MaskDistSet::total_groups() const {
  std::size_t g = 0;
  for (const MaskDist& d : dists_) g += d.groups();
  return g;
}

std::vector<std::size_t> MaskDistSet::retained_counts(
    const SparsitySchedule& schedule, std::int64_t step) const {
  std::vector<std::size_t> ks(dists_.size());
  for (std::size_t t = 0; t < dists_.size(); ++t)
    ks[t] = retained_count(schedule, step, dists_[t].groups());
  return ks;
}

std::vector<Mask> MaskDistSet::sample_group_masks(
    std::span<const std::size_t> ks, const SamplerStrategy& strategy,
    std::uint64_t seed) const {
  if (ks.size() != dists_.size())
    throw std::invalid_argument("mask dist set: retained-count length mismatch");
  std::vector<Mask> masks(dists_.size());
  for (std::size_t t = 0; t < dists_.size(); ++t)
    masks[t] = sample_mask(probs(dists_[t]), ks[t], strategy, derive_seed(seed, t));
  return masks;
}

std::vector<Mask> MaskDistSet::test_time_group_masks(
    std::span<const std::size_t> ks) const {
  std::vector<Mask> masks(dists_.size());
  for (std::size_t t = 0; t < dists_.size(); ++t) {
    const Mask expanded = test_time_mask(dists_[t], ks[t]);
    // test_time_mask expands to slot indices already; recover group mask shape
    masks[t] = expanded;
  }
  return masks;
}

std::vector<std::uint8_t> MaskDistSet::param_bitmap(
    std::span<const Mask> group_masks) const {
  std::vector<std::uint8_t> bitmap(param_dim_, 1);
  for (std::size_t slot_param : slot_to_param_) bitmap[slot_param] = 0;
  for (std::size_t t = 0; t < dists_.size(); ++t) {
    const std::uint32_t w = dists_[t].block_width;
    const std::size_t base = slot_begin_[t];
    // Accept either group-level or already block-expanded slot masks.
    const bool expanded = group_masks[t].domain == dists_[t].groups() * w;
    for (std::uint32_t idx : group_masks[t].indices) {
      if (expanded || w == 1) {
        bitmap[slot_to_param_[base + idx]] = 1;
      } else {
        for (std::uint32_t i = 0; i < w; ++i)
          bitmap[slot_to_param_[base + static_cast<std::size_t>(idx) * w + i]] = 1;
      }
    }
  }
  return bitmap;
}

namespace {

std::uint32_t resolve_threads(std::uint32_t requested, std::size_t jobs) {
  std::uint32_t t = requested != 0 ? requested : std::thread::hardware_concurrency();
  if (t == 0) t = 1;
  return static_cast<std::uint32_t>(std::min<std::size_t>(t, jobs));
}

}  // namespace

CesStepResult ces_train_step(FlatModel& model, MaskDistSet& mds,
                             const Dataset& data, const CesConfig& cfg,
                             std::int64_t step) {
  cfg.validate();
  const std::size_t n = cfg.train.generation_size;
  const auto ks = mds.retained_counts(cfg.schedule, step);

  // Each sample is its own logical worker for data-batch purposes.
  const std::uint64_t data_base = derive_seed(
      cfg.master_seed, static_cast<std::uint64_t>(step), stream_tag::kDataBatch);
  std::vector<std::uint64_t> data_seeds(n, data_base);
  if (cfg.regime != BatchRegime::FixB)
    for (std::size_t i = 0; i < n; ++i) data_seeds[i] = data_base + i;

  // Mask sampling and fitness/gradient evaluation both happen against the
  // immutable (model, distribution) snapshot, one seed per sample.
  std::vector<std::vector<Mask>> group_masks(n);
  std::vector<std::vector<std::uint8_t>> bitmaps(n);
  std::vector<GradResult> grads(n);
  std::vector<BnBatchStats> stats(n);
  std::vector<std::string> failures(n);
  const std::uint32_t threads = resolve_threads(cfg.eval_threads, n);
  {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::uint32_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) {
          try {
            group_masks[i] = mds.sample_group_masks(
                ks, cfg.strategy,
                derive_seed(cfg.master_seed, static_cast<std::uint64_t>(step), i,
                            stream_tag::kMaskSample));
            bitmaps[i] = mds.param_bitmap(group_masks[i]);
            const Batch batch =
                make_batch(data, {cfg.train.batch_size, data_seeds[i]});
            const std::vector<double> masked =
                apply_param_mask(model.params, bitmaps[i]);
            grads[i] = forward_backward(model, masked, batch, &stats[i]);
            for (std::size_t j = 0; j < grads[i].grad.size(); ++j)
              if (!bitmaps[i][j]) grads[i].grad[j] = 0.0;
          } catch (const std::exception& e) {
            failures[i] = e.what();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!failures[i].empty())
      throw std::runtime_error("ces step " + std::to_string(step) + " sample " +
                               std::to_string(i) + " failed: " + failures[i]);

  // Mean gradient across samples, in sample-index order.
  std::vector<double> mean_grad(model.dim(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < mean_grad.size(); ++j)
      mean_grad[j] += grads[i].grad[j];
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& g : mean_grad) g *= inv_n;

  // Weight decay may only touch coordinates unmasked in at least one sample.
  std::vector<std::uint8_t> decay_eligible(model.dim(), 0);
  for (std::size_t j = 0; j < decay_eligible.size(); ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (bitmaps[i][j]) {
        decay_eligible[j] = 1;
        break;
      }

  // ES update on the mask logits (skipped for a single sample, whose shaped
  // utility is forced to zero).
  std::vector<MaskDist> updated;
  bool es_applied = false;
  std::vector<double> fitnesses(n);
  for (std::size_t i = 0; i < n; ++i) fitnesses[i] = -grads[i].loss;
  if (n >= 2 && cfg.eta_logits != 0.0) {
    const auto utilities = shape_utilities(fitnesses, {cfg.shaping_nu});
    updated.reserve(mds.count());
    for (std::size_t t = 0; t < mds.count(); ++t) {
      std::vector<MaskSample> samples(n);
      for (std::size_t i = 0; i < n; ++i)
        samples[i] = {group_masks[i][t], utilities[i]};
      const auto grad = mask_gradient(samples, mds.at(t));
      updated.push_back(apply_mask_update(mds.at(t), grad));
    }
    es_applied = true;
  }

  // Commit phase: nothing above mutated shared state.
  sgd_momentum_step(model, mean_grad, cfg.train, decay_eligible);
  update_bn_running_stats(model, stats);
  for (std::size_t t = 0; t < updated.size(); ++t) mds.at(t) = std::move(updated[t]);

  CesStepResult result;
  result.fitness_best = *std::max_element(fitnesses.begin(), fitnesses.end());
  result.fitness_mean =
      std::accumulate(fitnesses.begin(), fitnesses.end(), 0.0) * inv_n;
  result.loss_mean = -result.fitness_mean;
  result.sparsity = cfg.schedule.sparsity_at(step);
  result.retained_groups = std::accumulate(ks.begin(), ks.end(), std::size_t{0});
  result.es_update_applied = es_applied;
  return result;
}

EvalResult ces_test_eval(const FlatModel& model, const MaskDistSet& mds,
                         const SparsitySchedule& schedule, std::int64_t step,
                         const Dataset& data,
                         std::span<const std::size_t> indices) {
  const auto ks = mds.retained_counts(schedule, step);
  const auto masks = mds.test_time_group_masks(ks);
  const auto bitmap = mds.param_bitmap(masks);
  const std::vector<double> masked = apply_param_mask(model.params, bitmap);
  return evaluate_split(model, masked, data, indices, /*training_bn=*/false);
}

PruneStepResult prune_train_step(FlatModel& model, std::vector<std::uint8_t>& mask,
                                 const Dataset& data, const TrainConfig& cfg,
                                 const PruneConfig& prune, std::int64_t step,
                                 std::uint64_t master_seed) {
  cfg.validate();
  prune.schedule.validate();
  if (mask.empty()) mask.assign(model.dim(), 1);
  if (mask.size() != model.dim())
    throw std::invalid_argument("prune step: mask length mismatch");

  const std::uint64_t data_seed = derive_seed(
      master_seed, static_cast<std::uint64_t>(step), stream_tag::kDataBatch);
  const Batch batch = make_batch(data, {cfg.batch_size, data_seed});

  BnBatchStats stats;
  const std::vector<double> masked = apply_param_mask(model.params, mask);
  GradResult grad = forward_backward(model, masked, batch, &stats);
  for (std::size_t j = 0; j < grad.grad.size(); ++j)
    if (!mask[j]) grad.grad[j] = 0.0;

  sgd_momentum_step(model, grad.grad, cfg, mask);
  update_bn_running_stats(model, {&stats, 1});

  // Re-threshold: keep the largest-magnitude maskable weights.
  const auto maskable = model.maskable_param_indices();
  const double sparsity = prune.schedule.sparsity_at(step);
  const auto retained = static_cast<std::size_t>(std::clamp<std::int64_t>(
      std::llround((1.0 - sparsity) * static_cast<double>(maskable.size())), 1,
      static_cast<std::int64_t>(maskable.size())));

  std::vector<std::size_t> order = maskable;
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(retained - 1),
                   order.end(), [&](std::size_t a, std::size_t b) {
                     const double ma = std::abs(model.params[a]);
                     const double mb = std::abs(model.params[b]);
                     return ma > mb || (ma == mb && a < b);
                   });
  for (std::size_t j : maskable) mask[j] = 0;
  for (std::size_t r = 0; r < retained; ++r) mask[order[r]] = 1;
  for (std::size_t j : maskable) {
    if (!mask[j]) {
      model.params[j] = 0.0;
      model.momentum[j] = 0.0;
    }
  }

  return {grad.loss, sparsity, retained};
}

}  // namespace esmask
