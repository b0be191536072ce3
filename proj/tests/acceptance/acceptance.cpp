// Acceptance suite: one self-contained check per criterion, each printing a
// PASS/FAIL line. Exit status is the number of failed criteria.
//
// Usage: esmask_acceptance [criterion-id ...]    (default: all)
//
// The supervised criteria use the MNIST IDX files when ESMASK_MNIST_DIR
// points at them and otherwise fall back to a seeded 784-dimensional
// 10-class Gaussian-blob dataset with matched shape and difficulty.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "esmask/ces.hpp"
#include "esmask/executor.hpp"
#include "esmask/mask_dist.hpp"
#include "esmask/nn.hpp"
#include "esmask/rng.hpp"
#include "esmask/run.hpp"
#include "esmask/samplers.hpp"
#include "esmask/search_dist.hpp"
#include "esmask/tasks.hpp"

using namespace esmask;
using Clock = std::chrono::steady_clock;

namespace {

FitnessFn benchmark_fitness(BenchmarkKind kind, std::size_t d) {
  BenchmarkFn fn{kind, d};
  return [fn](std::span<const double> theta, std::uint64_t) {
    return eval_benchmark(fn, theta);
  };
}

GaussianSearchDist unit_box_dist(std::size_t d, std::uint64_t seed) {
  GaussianSearchDist dist = make_search_dist(d);
  Rng rng(derive_seed(seed, stream_tag::kInit));
  for (double& m : dist.mean) m = -1.0 + 2.0 * rng.uniform01();
  return dist;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// MNIST when available; otherwise a 784-dim 10-class blob surrogate with the
// same shape (10k train / 2.5k test).
Dataset image_dataset() {
  if (const char* dir = std::getenv("ESMASK_MNIST_DIR")) {
    Dataset ds = load_mnist_dir(dir);
    ds.train_indices.resize(10000);
    return ds;
  }
  BlobsConfig bc;
  bc.centers = 10;
  bc.count = 12500;
  bc.seed = 20240101;
  bc.dim = 784;
  bc.center_spread = 0.16;
  bc.cluster_std = 1.0;
  bc.train_fraction = 0.8;
  return make_blobs(bc);
}

double run_ces(const Dataset& data, const std::vector<std::size_t>& widths,
               const SparsitySchedule& schedule, const SamplerStrategy& strategy,
               double eta_logits, std::int64_t steps, std::uint64_t seed,
               double temperature = 3.0, std::size_t batch_size = 256) {
  MlpConfig mc;
  mc.widths = widths;
  mc.batch_norm = true;
  mc.init_seed = seed;
  FlatModel model = make_mlp(mc);

  CesConfig cfg;
  cfg.train.lr = 0.1;
  cfg.train.momentum = 0.9;
  cfg.train.batch_size = batch_size;
  cfg.train.steps = steps;
  cfg.train.generation_size = 9;
  cfg.schedule = schedule;
  cfg.strategy = strategy;
  cfg.eta_logits = eta_logits;
  cfg.temperature = temperature;
  cfg.master_seed = seed;

  MaskDistSet mds = MaskDistSet::create(model, cfg);
  for (std::int64_t step = 0; step < steps; ++step)
    ces_train_step(model, mds, data, cfg, step);
  return ces_test_eval(model, mds, schedule, steps - 1, data, data.test_indices)
      .accuracy;
}

double run_prune(const Dataset& data, const std::vector<std::size_t>& widths,
                 const SparsitySchedule& schedule, std::int64_t steps,
                 std::uint64_t seed, std::size_t batch_size = 256) {
  MlpConfig mc;
  mc.widths = widths;
  mc.batch_norm = true;
  mc.init_seed = seed;
  FlatModel model = make_mlp(mc);
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.momentum = 0.9;
  cfg.batch_size = batch_size;
  cfg.steps = steps;
  PruneConfig prune{schedule};
  std::vector<std::uint8_t> mask;
  for (std::int64_t step = 0; step < steps; ++step)
    prune_train_step(model, mask, data, cfg, prune, step, seed);
  const std::vector<double> masked = apply_param_mask(model.params, mask);
  return evaluate_split(model, masked, data, data.test_indices, false).accuracy;
}

double run_dense_sgd(const Dataset& data, const std::vector<std::size_t>& widths,
                     std::int64_t steps, std::uint64_t seed,
                     std::size_t batch_size = 256) {
  SparsitySchedule dense{0.0, 0.0, 0, 1, RampShape::Linear};
  return run_prune(data, widths, dense, steps, seed, batch_size);
}

// Supervised SNES over all model parameters; returns the final test accuracy
// of the distribution mean.
double run_snes_supervised(const Dataset& data, const std::vector<std::size_t>& widths,
                           std::uint64_t n, std::uint32_t workers,
                           std::int64_t generations, std::uint64_t seed,
                           double sigma_init) {
  MlpConfig mc;
  mc.widths = widths;
  mc.batch_norm = true;
  mc.init_seed = seed;
  FlatModel model = make_mlp(mc);
  GaussianSearchDist dist = make_search_dist(model.dim());
  dist.mean = model.params;
  std::fill(dist.sigma.begin(), dist.sigma.end(), sigma_init);

  ExecPlan plan{ExecMode::SemiUpdates, workers, n, seed, BatchRegime::WFixB, {}};
  const FitnessFn fitness = supervised_fitness(model, data, 256);
  for (std::int64_t g = 0; g < generations; ++g)
    dist = run_generation(dist, fitness, plan, g);
  return evaluate_split(model, dist.mean, data, data.test_indices, true).accuracy;
}

// ---------------------------------------------------------------------------
// criteria

bool criterion_1_shaping(std::string& detail) {
  Rng rng(1001);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.uniform_below(1024);
    std::vector<double> f(n);
    for (double& x : f) x = 100.0 * (rng.uniform01() - 0.5);
    const auto u = shape_utilities(f);

    const double total = std::accumulate(u.begin(), u.end(), 0.0);
    if (std::abs(total) > 1e-9 * static_cast<double>(n)) {
      detail = "utility sum out of tolerance at n=" + std::to_string(n);
      return false;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
    const double floor_u = -1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      if (r + 1 < n && u[order[r]] < u[order[r + 1]]) {
        detail = "utilities increase with rank at n=" + std::to_string(n);
        return false;
      }
      // ranks r with r >= n/2 + 1 carry zero shaping weight; they are the
      // worst floor(n/2) samples and sit exactly at -1/n
      const bool zero_weight =
          static_cast<double>(r + 1) >= static_cast<double>(n) / 2.0 + 1.0;
      if (zero_weight != (u[order[r]] == floor_u)) {
        detail = "floor-utility set mismatch at n=" + std::to_string(n) +
                 " rank=" + std::to_string(r + 1);
        return false;
      }
    }
  }
  detail = "1000 random trials, n up to 1024";
  return true;
}

bool criterion_2_sigma_positivity(std::string& detail) {
  Rng rng(2002);
  GaussianSearchDist dist = make_search_dist(8);
  for (int trial = 0; trial < 10000; ++trial) {
    NaturalGradient grad;
    grad.mean.assign(8, 0.0);
    grad.sigma.assign(8, 0.0);
    for (std::size_t j = 0; j < 8; ++j) {
      grad.mean[j] = 2e3 * (rng.uniform01() - 0.5);
      grad.sigma[j] = 2e3 * (rng.uniform01() - 0.5);
    }
    dist = apply_update(dist, grad);
    for (double s : dist.sigma)
      if (!(s > 0.0)) {
        detail = "sigma went non-positive";
        return false;
      }
    for (double& s : dist.sigma) s = std::clamp(s, 1e-6, 1e6);
    for (double& m : dist.mean) m = std::clamp(m, -1e6, 1e6);
  }

  GaussianSearchDist one;
  one.mean = {0.0};
  one.sigma = {2.0};
  one.eta_mean = 1.0;
  one.eta_sigma = 0.6;
  const auto updated = apply_update(one, {{1.0}, {0.0}});
  if (std::abs(updated.mean[0] - 2.0) > 1e-12 ||
      std::abs(updated.sigma[0] - 2.0) > 1e-12) {
    detail = "d=1 hand example mismatch";
    return false;
  }
  Generation gen;
  gen.samples = {{{1.0}, 0.0, 0.5}, {{-1.0}, 0.0, -0.5}};
  const auto g_can = natural_gradient(gen, SigmaGradForm::CanonicalZSqMinusOne);
  const auto g_pap = natural_gradient(gen, SigmaGradForm::ZMinusOneSq);
  if (std::abs(g_can.mean[0] - 1.0) > 1e-12 || std::abs(g_can.sigma[0]) > 1e-12 ||
      std::abs(g_pap.sigma[0] + 2.0) > 1e-12) {
    detail = "d=1 gradient mismatch";
    return false;
  }
  detail = "10^4 extreme updates, hand examples at 1e-12";
  return true;
}

bool criterion_3_equivalence(std::string& detail) {
  const std::size_t d = 50;
  const FitnessFn fitness = benchmark_fitness(BenchmarkKind::Sphere, d);
  for (std::uint32_t b : {2u, 4u, 8u}) {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      GaussianSearchDist standard = unit_box_dist(d, trial);
      GaussianSearchDist batched = standard;
      ExecPlan sp{ExecMode::Standard, b, 40, trial, BatchRegime::FixB, {}};
      ExecPlan bp{ExecMode::Batched, b, 40, trial, BatchRegime::FixB, {}};
      for (std::int64_t g = 0; g < 3; ++g) {
        standard = run_generation(standard, fitness, sp, g);
        batched = run_generation(batched, fitness, bp, g);
      }
      if (standard.mean != batched.mean || standard.sigma != batched.sigma) {
        detail = "batched != standard at B=" + std::to_string(b);
        return false;
      }
    }
  }
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    GaussianSearchDist standard = unit_box_dist(d, 100 + trial);
    GaussianSearchDist semi = standard;
    ExecPlan sp{ExecMode::Standard, 1, 40, trial, BatchRegime::FixB, {}};
    ExecPlan mp{ExecMode::SemiUpdates, 1, 40, trial, BatchRegime::FixB, {}};
    for (std::int64_t g = 0; g < 3; ++g) {
      standard = run_generation(standard, fitness, sp, g);
      semi = run_generation(semi, fitness, mp, g);
    }
    if (standard.mean != semi.mean || standard.sigma != semi.sigma) {
      detail = "semi-updates != standard at B=1";
      return false;
    }
  }
  detail = "bit-identical: batched for B in {2,4,8}, semi at B=1; 20 trials each";
  return true;
}

bool criterion_4_semi_parity(std::string& detail) {
  const std::size_t d = 100;
  const FitnessFn fitness = benchmark_fitness(BenchmarkKind::Sphere, d);
  std::vector<double> final_standard, final_semi;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const ExecMode mode : {ExecMode::Standard, ExecMode::SemiUpdates}) {
      GaussianSearchDist dist = unit_box_dist(d, seed);
      ExecPlan plan{mode, 10, 1000, seed, BatchRegime::FixB, {}};
      GenerationMetrics gm;
      for (std::int64_t g = 0; g < 500; ++g)
        dist = run_generation(dist, fitness, plan, g, &gm);
      (mode == ExecMode::Standard ? final_standard : final_semi)
          .push_back(gm.fitness_mean);
    }
  }
  const double ms = mean_of(final_standard);
  const double mm = mean_of(final_semi);
  std::ostringstream os;
  os << "standard=" << ms << " semi=" << mm << " ratio=" << mm / ms
     << " (tolerance: |semi-standard| <= 0.1 |standard|)";
  detail = os.str();
  return std::abs(mm - ms) <= 0.10 * std::abs(ms);
}

bool criterion_5_convergence(std::string& detail) {
  const FitnessFn sphere = benchmark_fitness(BenchmarkKind::Sphere, 10);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    GaussianSearchDist dist = unit_box_dist(10, seed);
    ExecPlan plan{ExecMode::Standard, 2, 100, seed, BatchRegime::FixB, {}};
    bool reached = false;
    for (std::int64_t g = 0; g < 2000 && !reached; ++g) {
      dist = run_generation(dist, sphere, plan, g);
      reached = inf_norm(dist.mean) < 1e-2;
    }
    if (!reached) {
      detail = "sphere seed " + std::to_string(seed) + " missed 1e-2";
      return false;
    }
  }

  BenchmarkFn rosen{BenchmarkKind::Rosenbrock, 5};
  const FitnessFn rosen_fit = benchmark_fitness(BenchmarkKind::Rosenbrock, 5);
  int solved = 0;
  std::ostringstream os;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    GaussianSearchDist dist = unit_box_dist(5, seed);
    ExecPlan plan{ExecMode::Standard, 2, 100, seed, BatchRegime::FixB, {}};
    double fitness_of_mean = -1e300;
    for (std::int64_t g = 0; g < 10000 && fitness_of_mean <= -1.0; ++g) {
      dist = run_generation(dist, rosen_fit, plan, g);
      if (g % 50 == 49) fitness_of_mean = eval_benchmark(rosen, dist.mean);
    }
    os << " seed" << seed << "=" << fitness_of_mean;
    if (fitness_of_mean > -1.0) ++solved;
  }
  detail = "rosenbrock f(mean):" + os.str();
  return solved >= 2;
}

bool criterion_6_generation_size(std::string& detail) {
  const Dataset data = image_dataset();
  const std::vector<std::size_t> widths{784, 32, 10};
  std::map<std::uint64_t, std::vector<double>> acc;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    for (std::uint64_t n : {100ULL, 400ULL, 1600ULL}) {
      acc[n].push_back(run_snes_supervised(data, widths, n, 4, 500, seed, 0.1));
    }
  }
  const double m100 = median_of(acc[100]);
  const double m400 = median_of(acc[400]);
  const double m1600 = median_of(acc[1600]);
  std::ostringstream os;
  os << "median acc n100=" << m100 << " n400=" << m400 << " n1600=" << m1600
     << " (sigma0=0.1)";
  detail = os.str();
  return m100 <= m400 && m400 <= m1600 && m1600 > 0.85;
}

bool criterion_7_sampler_statistics(std::string& detail) {
  {
    Rng rng(7007);
    std::vector<double> w(512);
    for (int rep = 0; rep < 10; ++rep) {
      for (double& x : w) x = -std::log(1.0 - rng.uniform01());
      const auto dist = CategoricalDist::from_weights(w);
      for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        std::size_t lin = dist.cdf.size() - 1;
        for (std::size_t j = 0; j < dist.cdf.size(); ++j)
          if (u < dist.cdf[j]) {
            lin = j;
            break;
          }
        if (draw(dist, u) != lin) {
          detail = "draw disagrees with the linear scan";
          return false;
        }
      }
    }
  }

  {
    const std::size_t d = 1000, k = 500;
    const auto dist = CategoricalDist::from_probs(std::vector<double>(d, 1.0 / d));
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed)
      total += static_cast<double>(
          sample_mask(dist, k, SamplerStrategy::wr(), seed).count());
    const double expected =
        static_cast<double>(d) *
        (1.0 - std::pow(1.0 - 1.0 / static_cast<double>(d), static_cast<double>(k)));
    if (std::abs(total / 200.0 - expected) > 5.0) {
      detail = "WR cardinality " + std::to_string(total / 200.0) + " vs expected " +
               std::to_string(expected);
      return false;
    }
  }

  {
    Rng rng(7070);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t d = 10 + rng.uniform_below(500);
      const std::size_t k = 1 + rng.uniform_below(d);
      std::vector<double> w(d);
      for (double& x : w) x = rng.uniform01() + 1e-6;
      const auto dist = CategoricalDist::from_weights(w);
      if (sample_mask(dist, k, SamplerStrategy::wr_plus_u(), rng.next_u64()).count() !=
              k ||
          sample_mask(dist, k, SamplerStrategy::topn(5), rng.next_u64()).count() != k) {
        detail = "exact-cardinality strategy returned the wrong count";
        return false;
      }
    }
  }

  {
    const std::vector<std::vector<double>> cases{
        {0.35, 0.05, 0.25, 0.15, 0.2}, {0.4, 0.1, 0.1, 0.1, 0.1, 0.2}};
    for (const auto& probs : cases) {
      const std::size_t k = 3;
      std::map<std::vector<std::uint32_t>, double> exact;
      std::function<void(std::vector<std::uint32_t>&, double, double)> rec =
          [&](std::vector<std::uint32_t>& picked, double p_acc, double mass) {
            if (picked.size() == k) {
              auto key = picked;
              std::sort(key.begin(), key.end());
              exact[key] += p_acc;
              return;
            }
            for (std::uint32_t j = 0; j < probs.size(); ++j) {
              if (std::find(picked.begin(), picked.end(), j) != picked.end()) continue;
              picked.push_back(j);
              rec(picked, p_acc * probs[j] / mass, mass - probs[j]);
              picked.pop_back();
            }
          };
      std::vector<std::uint32_t> scratch;
      rec(scratch, 1.0, 1.0);

      const auto dist = CategoricalDist::from_probs(probs);
      std::map<std::vector<std::uint32_t>, double> observed;
      const int trials = 100000;
      for (int t = 0; t < trials; ++t)
        observed[sample_mask(dist, k, SamplerStrategy::worb(3),
                             derive_seed(std::uint64_t(t), 7))
                     .indices] += 1.0 / trials;
      double tv = 0.0;
      for (const auto& [mask, p] : exact) {
        const auto it = observed.find(mask);
        tv += std::abs(p - (it == observed.end() ? 0.0 : it->second));
      }
      for (const auto& [mask, p] : observed)
        if (exact.find(mask) == exact.end()) tv += p;
      if (tv / 2.0 >= 0.01) {
        detail = "WoRb total-variation distance " + std::to_string(tv / 2.0);
        return false;
      }
    }
  }
  detail = "inverse-CDF exact; WR expectation; exact-k strategies; WoRb TV < 0.01";
  return true;
}

bool criterion_8_strategy_ordering(std::string& detail) {
  const Dataset moons = make_two_moons(0.15, 2000, 808);
  const std::vector<std::size_t> widths{2, 32, 32, 2};
  const SparsitySchedule half{0.5, 0.5, 0, 1, RampShape::Linear};
  const std::int64_t steps = 3000;
  const double tau = 1.0;  // sharper softmax suits the 3k-step budget

  std::map<std::string, std::vector<double>> acc;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    acc["wr"].push_back(
        run_ces(moons, widths, half, SamplerStrategy::wr(), 0.1, steps, seed, tau));
    acc["wr+u"].push_back(run_ces(moons, widths, half, SamplerStrategy::wr_plus_u(),
                                  0.1, steps, seed, tau));
    acc["topn5"].push_back(
        run_ces(moons, widths, half, SamplerStrategy::topn(5), 0.1, steps, seed, tau));
    acc["dense"].push_back(run_dense_sgd(moons, widths, steps, seed));
  }
  const double wr = mean_of(acc["wr"]);
  const double wru = mean_of(acc["wr+u"]);
  const double topn = mean_of(acc["topn5"]);
  const double dense = mean_of(acc["dense"]);
  std::ostringstream os;
  os << "wr=" << wr << " wr+u=" << wru << " topn5=" << topn << " dense=" << dense;
  detail = os.str();
  return wr <= wru && wru <= topn && topn >= dense - 0.02;
}

bool criterion_9_ces_vs_fixmask(std::string& detail) {
  const Dataset data = image_dataset();
  const std::vector<std::size_t> widths{784, 32, 10};
  const SparsitySchedule schedule{0.5, 0.9, 500, 2000, RampShape::Cubic};
  const std::int64_t steps = 3000;

  std::vector<double> ces, fixmask;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    ces.push_back(
        run_ces(data, widths, schedule, SamplerStrategy::topn(5), 0.1, steps, seed));
    fixmask.push_back(
        run_ces(data, widths, schedule, SamplerStrategy::topn(5), 0.0, steps, seed));
  }
  std::ostringstream os;
  os << "ces=" << mean_of(ces) << " fixmask=" << mean_of(fixmask);
  detail = os.str();
  return mean_of(ces) >= mean_of(fixmask) + 0.02;
}

bool criterion_10_ces_vs_pruning(std::string& detail) {
  const Dataset data = image_dataset();
  const std::vector<std::size_t> widths{784, 32, 10};
  const std::int64_t steps = 3000;
  // shared timing knobs; pruning ramps from dense per its protocol
  const SparsitySchedule ces_sched{0.5, 0.5, 500, 2000, RampShape::Cubic};
  const SparsitySchedule prune_sched{0.0, 0.5, 500, 2000, RampShape::Cubic};

  std::vector<double> ces, prune;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    ces.push_back(
        run_ces(data, widths, ces_sched, SamplerStrategy::topn(5), 0.1, steps, seed));
    prune.push_back(run_prune(data, widths, prune_sched, steps, seed));
  }
  std::ostringstream os;
  os << "ces=" << mean_of(ces) << " pruning=" << mean_of(prune);
  detail = os.str();
  return std::abs(mean_of(ces) - mean_of(prune)) <= 0.03;
}

bool criterion_11_gradient_correctness(std::string& detail) {
  const double h = 1e-4;
  for (bool bn : {false, true}) {
    MlpConfig mc;
    mc.widths = {6, 16, 3};
    mc.batch_norm = bn;
    mc.init_seed = 1101 + (bn ? 1 : 0);
    const FlatModel model = make_mlp(mc);

    Batch batch;
    batch.feature_dim = 6;
    Rng rng(1102);
    for (int i = 0; i < 32; ++i) {
      for (int j = 0; j < 6; ++j) batch.features.push_back(rng.normal());
      batch.labels.push_back(static_cast<std::int32_t>(rng.uniform_below(3)));
    }

    std::vector<std::uint8_t> mask(model.dim(), 1);
    Rng mask_rng(1103);
    for (std::size_t j = 0; j < model.dim(); ++j)
      if (model.maskable[j] && mask_rng.uniform01() < 0.35) mask[j] = 0;

    const GradResult grad = backward(model, mask, batch);
    const std::vector<double> masked = apply_param_mask(model.params, mask);
    for (const LayerDesc& layer : model.layers) {
      Rng coord_rng(derive_seed(std::uint64_t{1104}, layer.weight_offset));
      const std::size_t span =
          layer.kind == LayerKind::Dense
              ? layer.in * layer.out + (layer.has_bias ? layer.out : 0)
              : 2 * layer.out;
      int checked = 0;
      for (int attempts = 0; checked < 20 && attempts < 200; ++attempts) {
        const std::size_t j = layer.weight_offset + coord_rng.uniform_below(span);
        if (!mask[j]) continue;
        std::vector<double> p = masked;
        p[j] += h;
        const double up = eval_with_params(model, p, batch, true).loss;
        p[j] -= 2 * h;
        const double down = eval_with_params(model, p, batch, true).loss;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad.grad[j]), 1e-6});
        if (std::abs(fd - grad.grad[j]) / denom >= 1e-4) {
          detail = "finite-difference mismatch at parameter " + std::to_string(j);
          return false;
        }
        ++checked;
      }
    }
  }

  // logistic head
  {
    MlpConfig mc;
    mc.widths = {4, 1};
    mc.bias = false;
    mc.init_seed = 1105;
    const FlatModel model = make_mlp(mc);
    Batch batch;
    batch.feature_dim = 4;
    Rng rng(1106);
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 4; ++j) batch.features.push_back(rng.normal());
      batch.labels.push_back(static_cast<std::int32_t>(rng.uniform_below(2)));
    }
    const GradResult grad = forward_backward(model, model.params, batch);
    for (std::size_t j = 0; j < model.dim(); ++j) {
      std::vector<double> p = model.params;
      p[j] += h;
      const double up = eval_with_params(model, p, batch, true).loss;
      p[j] -= 2 * h;
      const double down = eval_with_params(model, p, batch, true).loss;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad.grad[j]), 1e-6});
      if (std::abs(fd - grad.grad[j]) / denom >= 1e-4) {
        detail = "logistic-head mismatch at parameter " + std::to_string(j);
        return false;
      }
    }
  }
  detail = "20 coordinates per layer kind, random masks, with and without BN";
  return true;
}

bool criterion_12_index_selection(std::string& detail) {
  Dataset ds;
  ds.feature_dim = 2;
  ds.num_classes = 2;
  Rng rng(1201);
  for (std::size_t i = 0; i < 512; ++i) {
    const int label = static_cast<int>(rng.uniform_below(2));
    ds.features.push_back(label == 1 ? 1.0 : -1.0);
    ds.features.push_back(rng.uniform_below(2) ? 1.0 : -1.0);
    ds.labels.push_back(label);
    ds.train_indices.push_back(i);
  }

  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    MlpConfig mc;
    mc.widths = {2, 1};
    mc.bias = false;
    mc.mask_final_layer = true;
    mc.init_seed = seed;
    FlatModel model = make_mlp(mc);

    CesConfig cfg;
    cfg.train.lr = 0.05;
    cfg.train.momentum = 0.9;
    cfg.train.batch_size = 64;
    cfg.train.generation_size = 6;
    cfg.schedule = {0.5, 0.5, 0, 1, RampShape::Linear};
    cfg.strategy = SamplerStrategy::topn(5);
    cfg.master_seed = seed;
    MaskDistSet mds = MaskDistSet::create(model, cfg);
    for (int step = 0; step < 500; ++step) ces_train_step(model, mds, ds, cfg, step);
    const Mask mask = test_time_mask(mds.at(0), 1);
    if (mask.indices != std::vector<std::uint32_t>{0}) {
      detail = "seed " + std::to_string(seed) + " selected the wrong index";
      return false;
    }
  }
  detail = "3/3 seeds select parameter 0";
  return true;
}

bool criterion_13_performance(std::string& detail) {
  double bulk_elapsed = 0.0;
  {
    Rng rng(1301);
    std::vector<double> w(1000000);
    for (double& x : w) x = -std::log(1.0 - rng.uniform01());
    const auto start = Clock::now();
    const auto dist = CategoricalDist::from_weights(w);
    const auto draws = draw_k_sorted(dist, 100000, 5);
    bulk_elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    if (draws.size() != 100000 || bulk_elapsed >= 1.0) {
      detail = "bulk sampling took " + std::to_string(bulk_elapsed) + "s";
      return false;
    }
  }

  // semi-updates master time as n grows 10x at fixed B: the master performs
  // only the B-way merge and the update, so its time must stay flat
  const std::size_t d = 10000;
  const FitnessFn fitness = benchmark_fitness(BenchmarkKind::Sphere, d);
  auto master_time = [&](std::uint64_t n) {
    std::vector<double> totals;
    for (int rep = 0; rep < 5; ++rep) {
      GaussianSearchDist dist = unit_box_dist(d, 42);
      ExecPlan plan{ExecMode::SemiUpdates, 10, n, 42, BatchRegime::FixB, {}};
      GenerationMetrics gm;
      double total = 0.0;
      for (std::int64_t g = 0; g < 20; ++g) {
        dist = run_generation(dist, fitness, plan, g, &gm);
        total += gm.master_time_s;
      }
      totals.push_back(total);
    }
    return median_of(totals);
  };
  master_time(100);  // warmup
  const double small = master_time(100);
  const double large = master_time(1000);
  std::ostringstream os;
  os << "bulk=" << bulk_elapsed << "s master(n=100)=" << small
     << "s master(n=1000)=" << large << "s ratio=" << large / small;
  detail = os.str();
  return large <= 1.2 * small;
}

struct Criterion {
  int id;
  const char* name;
  bool (*run)(std::string&);
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "fitness-shaping exactness", criterion_1_shaping},
      {2, "sigma positivity and update oracle", criterion_2_sigma_positivity},
      {3, "execution-model equivalence", criterion_3_equivalence},
      {4, "semi-updates quality parity", criterion_4_semi_parity},
      {5, "SNES convergence", criterion_5_convergence},
      {6, "generation-size monotonicity", criterion_6_generation_size},
      {7, "sampler statistics", criterion_7_sampler_statistics},
      {8, "sampler strategy ordering", criterion_8_strategy_ordering},
      {9, "C-ES vs FixMask", criterion_9_ces_vs_fixmask},
      {10, "C-ES vs pruning parity", criterion_10_ces_vs_pruning},
      {11, "gradient correctness", criterion_11_gradient_correctness},
      {12, "index-selection oracle", criterion_12_index_selection},
      {13, "performance regression bounds", criterion_13_performance},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.id) == selected.end())
      continue;
    const auto start = Clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(Clock::now() - start).count();
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": "
              << c.name << " (" << static_cast<int>(elapsed) << "s)"
              << (detail.empty() ? "" : " -- " + detail) << std::endl;
    if (!ok) ++failures;
  }
  if (failures == 0)
    std::cout << "ALL SELECTED CRITERIA PASSED" << std::endl;
  else
    std::cout << "FAILED CRITERIA: " << failures << std::endl;
  return failures;
}
