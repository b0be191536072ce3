#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "esmask/search_dist.hpp"
#include "esmask/tasks.hpp"

namespace esmask {

// How one generation is spread over the worker pool. Standard ships samples
// from the master; Batched ships (mean, sigma, seed) and regenerates
// everything at the updating node; SemiUpdates shapes utilities locally per
// worker and averages the per-worker updates at the master.
enum class ExecMode { Standard, Batched, SemiUpdates };

const char* to_string(ExecMode mode);
ExecMode exec_mode_from_string(const std::string& s);

struct ExecPlan {
  ExecMode mode = ExecMode::SemiUpdates;
  std::uint32_t workers = 1;            // B, must divide generation_size
  std::uint64_t generation_size = 100;  // n
  std::uint64_t master_seed = 0;
  BatchRegime regime = BatchRegime::FixB;
  ShapingConfig shaping{};

  void validate() const;
};

// One worker's partial natural-gradient update over n/B samples.
struct SemiUpdate {
  std::vector<double> grad_mean;
  std::vector<double> grad_sigma;
  std::uint64_t sample_count = 0;
};

// Per-generation cost accounting. RNG counts follow the execution model's
// message schema (who must generate which sample noise); byte counts cover
// the float64/seed payloads actually exchanged; telemetry such as fitness
// stats is not billed as algorithm traffic.
struct GenerationMetrics {
  double wall_time_s = 0.0;
  double master_time_s = 0.0;  // shaping/merge/update work at the master
  std::uint64_t rng_values_master = 0;
  std::uint64_t rng_values_per_worker = 0;
  std::uint64_t bytes_master_to_workers = 0;
  std::uint64_t bytes_workers_to_master = 0;
  double fitness_best = 0.0;
  double fitness_mean = 0.0;
};

using FitnessFn =
    std::function<double(std::span<const double> params, std::uint64_t data_seed)>;

// Per-sample data seeds for the plan's batch regime, deterministic in
// (master_seed, step). WFixB with one worker coincides with FixB.
std::vector<std::uint64_t> assign_data_batches(const ExecPlan& plan,
                                               std::int64_t step);

// Runs one generation and returns the updated distribution. Deterministic in
// (dist, plan, generation) regardless of physical scheduling; worker merges
// happen in worker-id order. Throws with a (worker, sample) diagnostic if the
// fitness function fails.
GaussianSearchDist run_generation(const GaussianSearchDist& dist,
                                  const FitnessFn& fitness_fn,
                                  const ExecPlan& plan, std::int64_t generation,
                                  GenerationMetrics* metrics = nullptr);

}  // namespace esmask
