#include "esmask/run.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "esmask/checkpoint.hpp"
#include "esmask/metrics.hpp"
#include "esmask/rng.hpp"
#include "esmask/search_dist.hpp"
#include "esmask/stats.hpp"

namespace esmask {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

bool is_supervised(const std::string& task) {
  return task == "mnist" || task == "two_moons" || task == "blobs";
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig def;
  RunConfig c;
  c.task = j.value("task", def.task);
  c.dim = j.value("dim", def.dim);
  c.mnist_dir = j.value("mnist_dir", def.mnist_dir);
  c.moons_noise = j.value("moons_noise", def.moons_noise);
  c.data_count = j.value("data_count", def.data_count);
  c.blob_centers = j.value("blob_centers", def.blob_centers);
  c.blob_dim = j.value("blob_dim", def.blob_dim);
  c.blob_cluster_std = j.value("blob_cluster_std", def.blob_cluster_std);
  c.blob_center_spread = j.value("blob_center_spread", def.blob_center_spread);
  c.train_limit = j.value("train_limit", def.train_limit);
  c.widths = j.value("widths", def.widths);
  c.hidden = j.value("hidden", def.hidden);
  c.batch_norm = j.value("batch_norm", def.batch_norm);
  c.bias = j.value("bias", def.bias);
  c.mode = exec_mode_from_string(j.value("mode", std::string(to_string(def.mode))));
  c.workers = j.value("workers", def.workers);
  c.generation_size = j.value("generation_size", def.generation_size);
  c.generations = j.value("generations", def.generations);
  c.regime = batch_regime_from_string(j.value("regime", std::string(to_string(def.regime))));
  c.nu = j.value("nu", def.nu);
  c.sigma_init = j.value("sigma_init", def.sigma_init);
  c.sigma_grad_form = j.value("sigma_grad_form", def.sigma_grad_form);
  c.mean_init_low = j.value("mean_init_low", def.mean_init_low);
  c.mean_init_high = j.value("mean_init_high", def.mean_init_high);
  c.temperature = j.value("temperature", def.temperature);
  c.eta_logits = j.value("eta_logits", def.eta_logits);
  c.block_width = j.value("block_width", def.block_width);
  c.per_tensor = j.value("per_tensor", def.per_tensor);
  c.strategy = j.value("strategy", def.strategy);
  c.initial_sparsity = j.value("initial_sparsity", def.initial_sparsity);
  c.final_sparsity = j.value("final_sparsity", def.final_sparsity);
  c.hold_steps = j.value("hold_steps", def.hold_steps);
  c.ramp_end_step = j.value("ramp_end_step", def.ramp_end_step);
  c.ramp_shape = j.value("ramp_shape", def.ramp_shape);
  c.lr = j.value("lr", def.lr);
  c.momentum = j.value("momentum", def.momentum);
  c.weight_decay = j.value("weight_decay", def.weight_decay);
  c.batch_size = j.value("batch_size", def.batch_size);
  c.steps = j.value("steps", def.steps);
  c.ces_generation_size = j.value("ces_generation_size", def.ces_generation_size);
  c.bench_d = j.value("bench_d", def.bench_d);
  c.bench_k = j.value("bench_k", def.bench_k);
  c.bench_trials = j.value("bench_trials", def.bench_trials);
  c.bench_strategies = j.value("bench_strategies", def.bench_strategies);
  c.export_csv_path = j.value("export_csv", def.export_csv_path);
  c.output_dir = j.value("output_dir", def.output_dir);
  c.eval_every = j.value("eval_every", def.eval_every);
  c.master_seed = j.value("master_seed", def.master_seed);
  c.eval_threads = j.value("eval_threads", def.eval_threads);
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {{"task", task},
          {"dim", dim},
          {"mnist_dir", mnist_dir},
          {"moons_noise", moons_noise},
          {"data_count", data_count},
          {"blob_centers", blob_centers},
          {"blob_dim", blob_dim},
          {"blob_cluster_std", blob_cluster_std},
          {"blob_center_spread", blob_center_spread},
          {"train_limit", train_limit},
          {"widths", widths},
          {"hidden", hidden},
          {"batch_norm", batch_norm},
          {"bias", bias},
          {"mode", to_string(mode)},
          {"workers", workers},
          {"generation_size", generation_size},
          {"generations", generations},
          {"regime", to_string(regime)},
          {"nu", nu},
          {"sigma_init", sigma_init},
          {"sigma_grad_form", sigma_grad_form},
          {"mean_init_low", mean_init_low},
          {"mean_init_high", mean_init_high},
          {"temperature", temperature},
          {"eta_logits", eta_logits},
          {"block_width", block_width},
          {"per_tensor", per_tensor},
          {"strategy", strategy},
          {"initial_sparsity", initial_sparsity},
          {"final_sparsity", final_sparsity},
          {"hold_steps", hold_steps},
          {"ramp_end_step", ramp_end_step},
          {"ramp_shape", ramp_shape},
          {"lr", lr},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"steps", steps},
          {"ces_generation_size", ces_generation_size},
          {"bench_d", bench_d},
          {"bench_k", bench_k},
          {"bench_trials", bench_trials},
          {"bench_strategies", bench_strategies},
          {"export_csv", export_csv_path},
          {"output_dir", output_dir},
          {"eval_every", eval_every},
          {"master_seed", master_seed},
          {"eval_threads", eval_threads}};
}

void RunConfig::validate(const std::string& subcommand) const {
  if (output_dir.empty()) throw std::invalid_argument("config: output_dir is empty");
  if (subcommand == "snes-opt") {
    if (generation_size % workers != 0)
      throw std::invalid_argument("config: workers must divide generation_size");
    if (generations < 1) throw std::invalid_argument("config: generations must be >= 1");
    if (!(nu > 0.0)) throw std::invalid_argument("config: nu must be > 0");
    if (!(sigma_init > 0.0)) throw std::invalid_argument("config: sigma_init must be > 0");
    sigma_grad_form_from_string(sigma_grad_form);
    if (!is_supervised(task) && task != "sphere" && task != "rosenbrock")
      throw std::invalid_argument("config: unknown task " + task);
  }
  if (subcommand == "ces-train" || subcommand == "prune-train") {
    if (!is_supervised(task))
      throw std::invalid_argument("config: " + subcommand + " needs a supervised task");
    if (steps < 1) throw std::invalid_argument("config: steps must be >= 1");
    SparsitySchedule s{initial_sparsity, final_sparsity, hold_steps, ramp_end_step,
                       ramp_shape_from_string(ramp_shape)};
    s.validate();
  }
  if (subcommand == "ces-train") {
    sampler_strategy_from_string(strategy).validate();
    if (!(temperature > 0.0)) throw std::invalid_argument("config: temperature must be > 0");
    if (block_width < 1) throw std::invalid_argument("config: block_width must be >= 1");
    if (ces_generation_size < 1)
      throw std::invalid_argument("config: ces_generation_size must be >= 1");
    if (!widths.empty() && !per_tensor) {
      std::size_t maskable = 0;
      for (std::size_t l = 0; l + 2 < widths.size(); ++l)
        maskable += widths[l] * widths[l + 1];
      if (maskable > 0 && maskable % block_width != 0)
        throw std::invalid_argument(
            "config: block_width must divide the maskable parameter count");
    }
  }
  if (subcommand == "sampler-bench") {
    if (bench_k < 1 || bench_k > bench_d)
      throw std::invalid_argument("config: need 1 <= bench_k <= bench_d");
    for (const auto& s : bench_strategies) sampler_strategy_from_string(s).validate();
  }
}

Dataset build_dataset(const RunConfig& config) {
  Dataset ds;
  if (config.task == "mnist") {
    if (config.mnist_dir.empty())
      throw std::invalid_argument("config: mnist task needs mnist_dir");
    ds = load_mnist_dir(config.mnist_dir);
  } else if (config.task == "two_moons") {
    ds = make_two_moons(config.moons_noise, config.data_count, config.master_seed);
  } else if (config.task == "blobs") {
    BlobsConfig bc;
    bc.centers = config.blob_centers;
    bc.count = config.data_count;
    bc.seed = config.master_seed;
    bc.dim = config.blob_dim;
    bc.cluster_std = config.blob_cluster_std;
    bc.center_spread = config.blob_center_spread;
    ds = make_blobs(bc);
  } else {
    throw std::invalid_argument("config: task " + config.task + " has no dataset");
  }
  if (config.train_limit > 0 && ds.train_indices.size() > config.train_limit)
    ds.train_indices.resize(config.train_limit);
  if (!config.export_csv_path.empty()) export_csv(ds, config.export_csv_path);
  return ds;
}

std::vector<std::size_t> model_widths(const RunConfig& config, const Dataset& data) {
  if (!config.widths.empty()) return config.widths;
  if (config.hidden == 0) return {data.feature_dim, data.num_classes};
  return {data.feature_dim, config.hidden, data.num_classes};
}

namespace {

struct RunContext {
  fs::path out_dir;
  std::string hash;
  nlohmann::json config_json;
};

RunContext prepare(const RunConfig& config, const std::string& subcommand) {
  config.validate(subcommand);
  RunContext ctx;
  ctx.out_dir = config.output_dir;
  fs::create_directories(ctx.out_dir);
  ctx.config_json = config.to_json();
  ctx.hash = config_hash_hex(ctx.config_json);
  std::ofstream cfg(ctx.out_dir / "config.json");
  cfg << ctx.config_json.dump(2) << '\n';
  return ctx;
}

}  // namespace

// Supervised SNES treats all model parameters as one flat search space. The
// last batch is memoized per thread; under FixB/WFixB a worker's samples all
// share one data seed, so the index gather runs once per worker per
// generation.
FitnessFn supervised_fitness(const FlatModel& model, const Dataset& data,
                             std::size_t batch_size) {
  static std::atomic<std::uint64_t> next_binding{1};
  const std::uint64_t binding = next_binding.fetch_add(1);
  return [&model, &data, batch_size, binding](std::span<const double> params,
                                              std::uint64_t data_seed) {
    // keyed on the closure identity, not the dataset address, so a later
    // dataset reusing freed storage can never hit a stale batch
    thread_local std::uint64_t cached_binding = 0;
    thread_local std::uint64_t cached_seed = 0;
    thread_local Batch batch;
    if (cached_binding != binding || cached_seed != data_seed) {
      batch = make_batch(data, {batch_size, data_seed});
      cached_binding = binding;
      cached_seed = data_seed;
    }
    return -eval_with_params(model, params, batch, /*training_bn=*/true).loss;
  };
}

int cmd_snes_opt(const RunConfig& config) {
  const RunContext ctx = prepare(config, "snes-opt");
  MetricsWriter metrics((ctx.out_dir / "metrics.jsonl").string());

  const bool supervised = is_supervised(config.task);
  Dataset data;
  FlatModel model;
  GaussianSearchDist dist;
  FitnessFn fitness;

  if (supervised) {
    data = build_dataset(config);
    MlpConfig mc;
    mc.widths = model_widths(config, data);
    mc.batch_norm = config.batch_norm;
    mc.bias = config.bias;
    mc.init_seed = config.master_seed;
    model = make_mlp(mc);
    dist = make_search_dist(model.dim());
    dist.mean = model.params;
    fitness = supervised_fitness(model, data, config.batch_size);
  } else {
    BenchmarkFn fn{config.task == "sphere" ? BenchmarkKind::Sphere
                                           : BenchmarkKind::Rosenbrock,
                   config.dim};
    fn.validate();
    dist = make_search_dist(config.dim);
    Rng init_rng(derive_seed(config.master_seed, stream_tag::kInit));
    for (double& m : dist.mean)
      m = config.mean_init_low +
          (config.mean_init_high - config.mean_init_low) * init_rng.uniform01();
    fitness = [fn](std::span<const double> params, std::uint64_t) {
      return eval_benchmark(fn, params);
    };
  }
  std::fill(dist.sigma.begin(), dist.sigma.end(), config.sigma_init);
  dist.sigma_grad_form = sigma_grad_form_from_string(config.sigma_grad_form);

  ExecPlan plan{config.mode, config.workers, config.generation_size,
                config.master_seed, config.regime, {config.nu}};

  for (std::int64_t g = 0; g < config.generations; ++g) {
    GenerationMetrics gm;
    dist = run_generation(dist, fitness, plan, g, &gm);
    nlohmann::json record{{"schema", 1},
                          {"generation", g},
                          {"mode", to_string(config.mode)},
                          {"n", config.generation_size},
                          {"B", config.workers},
                          {"fitness_best", gm.fitness_best},
                          {"fitness_mean", gm.fitness_mean},
                          {"wall_time_s", gm.wall_time_s},
                          {"master_time_s", gm.master_time_s},
                          {"rng_master", gm.rng_values_master},
                          {"rng_worker", gm.rng_values_per_worker},
                          {"bytes_up", gm.bytes_workers_to_master},
                          {"bytes_down", gm.bytes_master_to_workers},
                          {"config_hash", ctx.hash}};
    if (supervised && config.eval_every > 0 &&
        (g % config.eval_every == config.eval_every - 1 ||
         g + 1 == config.generations)) {
      const EvalResult ev = evaluate_split(model, dist.mean, data,
                                           data.test_indices, /*training_bn=*/true);
      record["test_loss"] = ev.loss;
      record["test_acc"] = ev.accuracy;
    }
    metrics.write(record);
  }

  save_search_dist({dist, config.master_seed, config.generations},
                   (ctx.out_dir / "search_dist.ckpt").string());
  return 0;
}

int cmd_ces_train(const RunConfig& config) {
  const RunContext ctx = prepare(config, "ces-train");
  MetricsWriter metrics((ctx.out_dir / "metrics.jsonl").string());

  const Dataset data = build_dataset(config);
  MlpConfig mc;
  mc.widths = model_widths(config, data);
  mc.batch_norm = config.batch_norm;
  mc.bias = config.bias;
  mc.init_seed = config.master_seed;
  FlatModel model = make_mlp(mc);

  CesConfig ces;
  ces.train.lr = config.lr;
  ces.train.momentum = config.momentum;
  ces.train.weight_decay = config.weight_decay;
  ces.train.batch_size = config.batch_size;
  ces.train.steps = config.steps;
  ces.train.generation_size = config.ces_generation_size;
  ces.train.use_batch_norm = config.batch_norm;
  ces.schedule = {config.initial_sparsity, config.final_sparsity, config.hold_steps,
                  config.ramp_end_step, ramp_shape_from_string(config.ramp_shape)};
  ces.strategy = sampler_strategy_from_string(config.strategy);
  ces.regime = config.regime;
  ces.temperature = config.temperature;
  ces.eta_logits = config.eta_logits;
  ces.block_width = config.block_width;
  ces.per_tensor = config.per_tensor;
  ces.shaping_nu = config.nu;
  ces.master_seed = config.master_seed;
  ces.eval_threads = config.eval_threads;

  MaskDistSet mds = MaskDistSet::create(model, ces);
  if (config.ces_generation_size == 1)
    std::cerr << "warning: generation size 1, mask updates are skipped\n";

  for (std::int64_t step = 0; step < config.steps; ++step) {
    const auto t_step = Clock::now();
    const CesStepResult r = ces_train_step(model, mds, data, ces, step);
    nlohmann::json record{{"schema", 1},
                          {"step", step},
                          {"strategy", config.strategy},
                          {"loss", r.loss_mean},
                          {"fitness_best", r.fitness_best},
                          {"fitness_mean", r.fitness_mean},
                          {"sparsity", r.sparsity},
                          {"k", r.retained_groups},
                          {"es_update", r.es_update_applied},
                          {"wall_time_s", std::chrono::duration<double>(Clock::now() - t_step).count()},
                          {"config_hash", ctx.hash}};
    if (config.eval_every > 0 && (step % config.eval_every == config.eval_every - 1 ||
                                  step + 1 == config.steps)) {
      const EvalResult ev =
          ces_test_eval(model, mds, ces.schedule, step, data, data.test_indices);
      record["test_loss"] = ev.loss;
      record["test_acc"] = ev.accuracy;
    }
    metrics.write(record);
  }

  CesCheckpoint ckpt;
  ckpt.arch = mc;
  ckpt.model = std::move(model);
  for (std::size_t t = 0; t < mds.count(); ++t) ckpt.mask_dists.push_back(mds.at(t));
  ckpt.per_tensor = config.per_tensor;
  ckpt.schedule = ces.schedule;
  ckpt.master_seed = config.master_seed;
  ckpt.step = config.steps;
  save_ces_checkpoint(ckpt, (ctx.out_dir / "ces.ckpt").string());
  return 0;
}

int cmd_prune_train(const RunConfig& config) {
  const RunContext ctx = prepare(config, "prune-train");
  MetricsWriter metrics((ctx.out_dir / "metrics.jsonl").string());

  const Dataset data = build_dataset(config);
  MlpConfig mc;
  mc.widths = model_widths(config, data);
  mc.batch_norm = config.batch_norm;
  mc.bias = config.bias;
  mc.init_seed = config.master_seed;
  FlatModel model = make_mlp(mc);

  TrainConfig train;
  train.lr = config.lr;
  train.momentum = config.momentum;
  train.weight_decay = config.weight_decay;
  train.batch_size = config.batch_size;
  train.steps = config.steps;
  train.generation_size = 1;
  train.use_batch_norm = config.batch_norm;
  PruneConfig prune{{config.initial_sparsity, config.final_sparsity,
                     config.hold_steps, config.ramp_end_step,
                     ramp_shape_from_string(config.ramp_shape)}};

  std::vector<std::uint8_t> mask;
  for (std::int64_t step = 0; step < config.steps; ++step) {
    const auto t_step = Clock::now();
    const PruneStepResult r =
        prune_train_step(model, mask, data, train, prune, step, config.master_seed);
    nlohmann::json record{{"schema", 1},
                          {"step", step},
                          {"loss", r.loss},
                          {"sparsity", r.sparsity},
                          {"retained", r.retained},
                          {"wall_time_s", std::chrono::duration<double>(Clock::now() - t_step).count()},
                          {"config_hash", ctx.hash}};
    if (config.eval_every > 0 && (step % config.eval_every == config.eval_every - 1 ||
                                  step + 1 == config.steps)) {
      const std::vector<double> masked = apply_param_mask(model.params, mask);
      const EvalResult ev = evaluate_split(model, masked, data, data.test_indices,
                                           /*training_bn=*/false);
      record["test_loss"] = ev.loss;
      record["test_acc"] = ev.accuracy;
    }
    metrics.write(record);
  }

  CesCheckpoint ckpt;
  ckpt.arch = mc;
  ckpt.model = std::move(model);
  ckpt.schedule = prune.schedule;
  ckpt.master_seed = config.master_seed;
  ckpt.step = config.steps;
  save_ces_checkpoint(ckpt, (ctx.out_dir / "prune.ckpt").string());
  return 0;
}

int cmd_sampler_bench(const RunConfig& config) {
  const RunContext ctx = prepare(config, "sampler-bench");

  nlohmann::json report;
  report["schema"] = 1;
  report["config_hash"] = ctx.hash;
  report["d"] = config.bench_d;
  report["k"] = config.bench_k;
  report["trials"] = config.bench_trials;
  report["strategies"] = nlohmann::json::array();

  const std::vector<double> uniform(config.bench_d,
                                    1.0 / static_cast<double>(config.bench_d));
  const CategoricalDist dist = CategoricalDist::from_probs(uniform);

  for (const std::string& name : config.bench_strategies) {
    const SamplerStrategy strategy = sampler_strategy_from_string(name);
    std::size_t min_card = config.bench_d + 1, max_card = 0;
    double sum_card = 0.0;
    const auto start = Clock::now();
    for (std::size_t trial = 0; trial < config.bench_trials; ++trial) {
      const Mask mask = sample_mask(dist, config.bench_k, strategy,
                                    derive_seed(config.master_seed, trial));
      min_card = std::min(min_card, mask.count());
      max_card = std::max(max_card, mask.count());
      sum_card += static_cast<double>(mask.count());
    }
    const double total_s = std::chrono::duration<double>(Clock::now() - start).count();
    report["strategies"].push_back(
        {{"strategy", name},
         {"cardinality_mean", sum_card / static_cast<double>(config.bench_trials)},
         {"cardinality_min", min_card},
         {"cardinality_max", max_card},
         {"ms_per_mask", 1e3 * total_s / static_cast<double>(config.bench_trials)}});
  }

  // Goodness of fit of single inverse-CDF draws on random distributions.
  report["chi_square"] = nlohmann::json::array();
  constexpr std::size_t kGofDim = 50;
  constexpr std::uint64_t kGofDraws = 100000;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    Rng rng(derive_seed(config.master_seed, rep, std::uint64_t{0x676f66}));
    std::vector<double> weights(kGofDim);
    for (double& w : weights) w = 0.2 + rng.uniform01();
    const CategoricalDist gof = CategoricalDist::from_weights(weights);
    std::vector<std::uint64_t> counts(kGofDim, 0);
    for (std::uint64_t i = 0; i < kGofDraws; ++i)
      ++counts[draw(gof, rng.uniform01())];
    const double stat = chi_square_stat(counts, gof.probs, kGofDraws);
    report["chi_square"].push_back(
        {{"rep", rep},
         {"stat", stat},
         {"p_value", chi_square_pvalue(stat, kGofDim - 1)}});
  }

  std::ofstream out(ctx.out_dir / "sampler_bench.json");
  out << report.dump(2) << '\n';
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_summarize(const std::string& metrics_path, const std::string& csv_path) {
  std::ifstream in(metrics_path);
  if (!in) throw std::runtime_error("summarize: cannot open " + metrics_path);

  std::vector<nlohmann::json> records;
  std::vector<std::string> columns;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line);
    for (auto it = rec.begin(); it != rec.end(); ++it)
      if (std::find(columns.begin(), columns.end(), it.key()) == columns.end())
        columns.push_back(it.key());
    records.push_back(std::move(rec));
  }

  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("summarize: cannot open " + csv_path);
  for (std::size_t c = 0; c < columns.size(); ++c)
    out << columns[c] << (c + 1 < columns.size() ? "," : "\n");
  for (const auto& rec : records) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (rec.contains(columns[c])) {
        const auto& v = rec.at(columns[c]);
        if (v.is_string())
          out << v.get<std::string>();
        else
          out << v.dump();
      }
      out << (c + 1 < columns.size() ? "," : "\n");
    }
  }
  return 0;
}

}  // namespace esmask
