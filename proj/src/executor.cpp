#include "esmask/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>

#include "esmask/rng.hpp"

namespace esmask {

const char* to_string(ExecMode mode) {
  switch (mode) {
    case ExecMode::Standard:
      return "standard";
    case ExecMode::Batched:
      return "batched";
    case ExecMode::SemiUpdates:
      return "semi";
  }
  return "unknown";
}

ExecMode exec_mode_from_string(const std::string& s) {
  if (s == "standard") return ExecMode::Standard;
  if (s == "batched") return ExecMode::Batched;
  if (s == "semi") return ExecMode::SemiUpdates;
  throw std::invalid_argument("unknown execution mode: " + s);
}

void ExecPlan::validate() const {
  if (workers < 1) throw std::invalid_argument("exec plan: workers must be >= 1");
  if (generation_size < 1)
    throw std::invalid_argument("exec plan: generation size must be >= 1");
  if (generation_size % workers != 0)
    throw std::invalid_argument("exec plan: workers must divide generation size");
  if (!(shaping.nu > 0.0)) throw std::invalid_argument("exec plan: nu must be > 0");
}

std::vector<std::uint64_t> assign_data_batches(const ExecPlan& plan,
                                               std::int64_t step) {
  plan.validate();
  const std::uint64_t n = plan.generation_size;
  const std::uint64_t per_worker = n / plan.workers;
  const std::uint64_t base = derive_seed(plan.master_seed,
                                         static_cast<std::uint64_t>(step),
                                         stream_tag::kDataBatch);
  std::vector<std::uint64_t> seeds(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    switch (plan.regime) {
      case BatchRegime::FixB:
        seeds[i] = base;
        break;
      case BatchRegime::WFixB:
        seeds[i] = base + i / per_worker;
        break;
      case BatchRegime::VarB:
        seeds[i] = base + i;
        break;
    }
  }
  return seeds;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double sigma_grad_term(double z, SigmaGradForm form) {
  return form == SigmaGradForm::CanonicalZSqMinusOne ? z * z - 1.0
                                                     : (z - 1.0) * (z - 1.0);
}

struct WorkerError {
  std::uint32_t worker = 0;
  std::uint64_t sample = 0;
  std::string what;
  bool set = false;
};

// Evaluates one worker's slice of the generation. For semi-updates the
// worker also shapes its local utilities and accumulates its partial update.
void worker_task(const GaussianSearchDist& dist, const FitnessFn& fitness_fn,
                 const ExecPlan& plan, std::uint64_t gen_seed,
                 std::span<const std::uint64_t> data_seeds, std::uint32_t worker,
                 std::span<double> fitnesses, SemiUpdate* semi,
                 WorkerError* error) {
  const std::size_t d = dist.dim();
  const std::uint64_t per_worker = plan.generation_size / plan.workers;
  const std::uint64_t begin = worker * per_worker;
  std::vector<double> z(d), theta(d);

  for (std::uint64_t i = begin; i < begin + per_worker; ++i) {
    try {
      sample_z_into(gen_seed, i, z);
      for (std::size_t j = 0; j < d; ++j)
        theta[j] = dist.mean[j] + dist.sigma[j] * z[j];
      const double f = fitness_fn(theta, data_seeds[i]);
      if (std::isnan(f)) throw std::runtime_error("fitness evaluated to NaN");
      fitnesses[i] = f;
    } catch (const std::exception& e) {
      error->worker = worker;
      error->sample = i;
      error->what = e.what();
      error->set = true;
      return;
    }
  }

  if (semi != nullptr) {
    const auto utilities = shape_utilities(
        fitnesses.subspan(begin, per_worker), plan.shaping);
    semi->grad_mean.assign(d, 0.0);
    semi->grad_sigma.assign(d, 0.0);
    semi->sample_count = per_worker;
    for (std::uint64_t i = 0; i < per_worker; ++i) {
      sample_z_into(gen_seed, begin + i, z);
      const double u = utilities[i];
      for (std::size_t j = 0; j < d; ++j) {
        semi->grad_mean[j] += u * z[j];
        semi->grad_sigma[j] += u * sigma_grad_term(z[j], dist.sigma_grad_form);
      }
    }
  }
}

}  // namespace

GaussianSearchDist run_generation(const GaussianSearchDist& dist,
                                  const FitnessFn& fitness_fn,
                                  const ExecPlan& plan, std::int64_t generation,
                                  GenerationMetrics* metrics) {
  plan.validate();
  dist.validate();
  const auto t_start = Clock::now();

  const std::size_t d = dist.dim();
  const std::uint64_t n = plan.generation_size;
  const std::uint32_t b = plan.workers;
  const std::uint64_t per_worker = n / b;
  const std::uint64_t gen_seed =
      derive_seed(plan.master_seed, static_cast<std::uint64_t>(generation));
  const std::vector<std::uint64_t> data_seeds = assign_data_batches(plan, generation);

  std::vector<double> fitnesses(n, 0.0);
  std::vector<SemiUpdate> semi_updates(plan.mode == ExecMode::SemiUpdates ? b : 0);
  std::vector<WorkerError> errors(b);

  auto run_worker = [&](std::uint32_t w) {
    worker_task(dist, fitness_fn, plan, gen_seed, data_seeds, w, fitnesses,
                plan.mode == ExecMode::SemiUpdates ? &semi_updates[w] : nullptr,
                &errors[w]);
  };

  if (b == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(b);
    for (std::uint32_t w = 0; w < b; ++w) threads.emplace_back(run_worker, w);
    for (auto& t : threads) t.join();
  }
  for (const WorkerError& e : errors) {
    if (e.set)
      throw std::runtime_error("generation " + std::to_string(generation) +
                               " aborted at worker " + std::to_string(e.worker) +
                               ", sample " + std::to_string(e.sample) + ": " + e.what);
  }

  // Master phase: shaping/merge and the single distribution update.
  const auto t_master = Clock::now();
  NaturalGradient grad;
  if (plan.mode == ExecMode::SemiUpdates) {
    grad.mean.assign(d, 0.0);
    grad.sigma.assign(d, 0.0);
    for (std::uint32_t w = 0; w < b; ++w) {
      for (std::size_t j = 0; j < d; ++j) {
        grad.mean[j] += semi_updates[w].grad_mean[j];
        grad.sigma[j] += semi_updates[w].grad_sigma[j];
      }
    }
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t j = 0; j < d; ++j) {
      grad.mean[j] *= inv_b;
      grad.sigma[j] *= inv_b;
    }
  } else {
    const auto utilities = shape_utilities(fitnesses, plan.shaping);
    grad.mean.assign(d, 0.0);
    grad.sigma.assign(d, 0.0);
    std::vector<double> z(d);
    for (std::uint64_t i = 0; i < n; ++i) {
      sample_z_into(gen_seed, i, z);
      const double u = utilities[i];
      for (std::size_t j = 0; j < d; ++j) {
        grad.mean[j] += u * z[j];
        grad.sigma[j] += u * sigma_grad_term(z[j], dist.sigma_grad_form);
      }
    }
  }
  GaussianSearchDist updated = apply_update(dist, grad);
  const double master_time = seconds_since(t_master);

  if (metrics != nullptr) {
    GenerationMetrics m;
    m.wall_time_s = seconds_since(t_start);
    m.master_time_s = master_time;
    const std::uint64_t sample_values = n * d;
    const std::uint64_t dist_payload = 2 * d * 8 + 8;  // mean, sigma, seed
    switch (plan.mode) {
      case ExecMode::Standard:
        m.rng_values_master = sample_values;
        m.rng_values_per_worker = 0;
        m.bytes_master_to_workers = n * d * 8;
        m.bytes_workers_to_master = n * 8;
        break;
      case ExecMode::Batched:
        m.rng_values_master = sample_values;  // the updating node regenerates all
        m.rng_values_per_worker = per_worker * d;
        m.bytes_master_to_workers = b * dist_payload;
        m.bytes_workers_to_master = n * 8;
        break;
      case ExecMode::SemiUpdates:
        m.rng_values_master = 0;
        m.rng_values_per_worker = per_worker * d;
        m.bytes_master_to_workers = b * dist_payload;
        m.bytes_workers_to_master = static_cast<std::uint64_t>(b) * 2 * d * 8;
        break;
    }
    double best = fitnesses[0], sum = 0.0;
    for (double f : fitnesses) {
      best = std::max(best, f);
      sum += f;
    }
    m.fitness_best = best;
    m.fitness_mean = sum / static_cast<double>(n);
    *metrics = m;
  }
  return updated;
}

}  // namespace esmask
