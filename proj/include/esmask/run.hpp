#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "esmask/ces.hpp"
#include "esmask/executor.hpp"
#include "esmask/mask_dist.hpp"
#include "esmask/nn.hpp"
#include "esmask/samplers.hpp"
#include "esmask/tasks.hpp"

namespace esmask {

// Declarative run description shared by every subcommand. Parsed from JSON
// (file plus flag overrides); cross-field validity is checked before any
// compute; the canonical serialization is hashed into every metrics record.
struct RunConfig {
  // task
  std::string task = "sphere";  // sphere | rosenbrock | mnist | two_moons | blobs
  std::size_t dim = 10;         // benchmark dimension
  std::string mnist_dir;
  double moons_noise = 0.15;
  std::size_t data_count = 2000;
  std::size_t blob_centers = 10;
  std::size_t blob_dim = 2;
  double blob_cluster_std = 0.6;
  double blob_center_spread = 4.0;
  std::size_t train_limit = 0;  // cap on train examples, 0 = all

  // model (supervised tasks)
  std::vector<std::size_t> widths;  // empty = derived from the dataset
  std::size_t hidden = 32;
  bool batch_norm = true;
  bool bias = true;

  // execution
  ExecMode mode = ExecMode::SemiUpdates;
  std::uint32_t workers = 2;  // B
  std::uint64_t generation_size = 100;
  std::int64_t generations = 1000;
  BatchRegime regime = BatchRegime::WFixB;

  // search distribution
  double nu = 2.0;
  double sigma_init = 1.0;
  std::string sigma_grad_form = "canonical_zsq_minus_one";
  double mean_init_low = -1.0, mean_init_high = 1.0;  // benchmark mean init

  // mask distribution / sampler
  double temperature = 3.0;
  double eta_logits = 0.1;
  std::uint32_t block_width = 1;
  bool per_tensor = false;
  std::string strategy = "topn5";

  // sparsity schedule
  double initial_sparsity = 0.5;
  double final_sparsity = 0.5;
  std::int64_t hold_steps = 2000;
  std::int64_t ramp_end_step = 50000;
  std::string ramp_shape = "cubic";

  // sgd training
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 256;
  std::int64_t steps = 1000;
  std::size_t ces_generation_size = 9;

  // bench
  std::size_t bench_d = 1000;
  std::size_t bench_k = 500;
  std::size_t bench_trials = 200;
  std::vector<std::string> bench_strategies = {"wr", "wr+u", "worb4", "topn5"};

  // bookkeeping
  std::string export_csv_path;  // optional dataset dump
  std::string output_dir = "runs";
  std::int64_t eval_every = 100;
  std::uint64_t master_seed = 0;
  std::uint32_t eval_threads = 0;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  // Cross-field checks for the given subcommand; throws std::invalid_argument.
  void validate(const std::string& subcommand) const;
};

// Subcommand bodies; each returns a process exit status (0 = success) and
// streams JSON-lines metrics under config.output_dir.
int cmd_snes_opt(const RunConfig& config);
int cmd_ces_train(const RunConfig& config);
int cmd_prune_train(const RunConfig& config);
int cmd_sampler_bench(const RunConfig& config);
int cmd_summarize(const std::string& metrics_path, const std::string& csv_path);

// Dataset construction shared by the supervised subcommands.
Dataset build_dataset(const RunConfig& config);
std::vector<std::size_t> model_widths(const RunConfig& config, const Dataset& data);

// Mini-batch log-likelihood fitness over the model's flat parameter vector,
// with a per-thread batch memo keyed on the data seed.
FitnessFn supervised_fitness(const FlatModel& model, const Dataset& data,
                             std::size_t batch_size);

}  // namespace esmask
