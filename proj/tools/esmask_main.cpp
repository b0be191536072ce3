#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "esmask/run.hpp"

namespace {

// Exit codes: 0 success, 1 configuration error, 2 runtime failure.
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Overrides {
  std::optional<std::string> task, mode, regime, strategy, sigma_grad_form,
      ramp_shape, output_dir, mnist_dir, export_csv;
  std::optional<std::uint64_t> n, seed;
  std::optional<std::uint32_t> workers, block_width;
  std::optional<std::int64_t> generations, steps, eval_every, hold_steps,
      ramp_end_step;
  std::optional<std::size_t> dim, batch_size, ces_n, hidden, data_count,
      train_limit, bench_d, bench_k, bench_trials;
  std::optional<double> nu, tau, eta_logits, lr, momentum, weight_decay,
      initial_sparsity, final_sparsity, moons_noise, sigma_init,
      blob_cluster_std;
  std::optional<bool> batch_norm, per_tensor;
};

void add_run_options(CLI::App* cmd, std::string& config_path, Overrides& ov) {
  cmd->add_option("--config", config_path, "JSON config file");
  cmd->add_option("--task", ov.task, "sphere|rosenbrock|mnist|two_moons|blobs");
  cmd->add_option("-n,--generation-size", ov.n, "samples per generation (n)");
  cmd->add_option("-B,--workers", ov.workers, "worker count (B)");
  cmd->add_option("--mode", ov.mode, "standard|batched|semi");
  cmd->add_option("--regime", ov.regime, "varb|fixb|wfixb");
  cmd->add_option("--generations", ov.generations, "SNES generations");
  cmd->add_option("--steps", ov.steps, "training steps (S)");
  cmd->add_option("--dim", ov.dim, "benchmark dimension (d)");
  cmd->add_option("--nu", ov.nu, "fitness shaping parameter (nu)");
  cmd->add_option("--tau", ov.tau, "mask softmax temperature (tau)");
  cmd->add_option("--eta-l", ov.eta_logits, "mask logit learning rate (eta_l)");
  cmd->add_option("--sigma-init", ov.sigma_init, "initial sigma");
  cmd->add_option("--sigma-grad-form", ov.sigma_grad_form,
                  "canonical_zsq_minus_one|z_minus_one_sq");
  cmd->add_option("--strategy", ov.strategy, "wr|wr+u|worb<b>|topn<M>");
  cmd->add_option("--block-width", ov.block_width, "mask block width (w)");
  cmd->add_option("--per-tensor", ov.per_tensor,
                  "one mask distribution per tensor");
  cmd->add_option("--initial-sparsity", ov.initial_sparsity, "schedule start");
  cmd->add_option("--final-sparsity", ov.final_sparsity, "schedule end");
  cmd->add_option("--hold-steps", ov.hold_steps, "steps at initial sparsity");
  cmd->add_option("--ramp-end-step", ov.ramp_end_step, "step reaching final sparsity");
  cmd->add_option("--ramp-shape", ov.ramp_shape, "cubic|linear");
  cmd->add_option("--lr", ov.lr, "SGD learning rate");
  cmd->add_option("--momentum", ov.momentum, "SGD momentum");
  cmd->add_option("--weight-decay", ov.weight_decay, "SGD weight decay");
  cmd->add_option("--batch-size", ov.batch_size, "training batch size");
  cmd->add_option("--ces-n", ov.ces_n, "mask samples per step");
  cmd->add_option("--hidden", ov.hidden, "hidden width for derived MLPs");
  cmd->add_option("--batch-norm", ov.batch_norm, "use batch normalization");
  cmd->add_option("--mnist-dir", ov.mnist_dir, "directory with the IDX files");
  cmd->add_option("--data-count", ov.data_count, "synthetic dataset size");
  cmd->add_option("--train-limit", ov.train_limit, "cap on train examples");
  cmd->add_option("--moons-noise", ov.moons_noise, "two-moons noise level");
  cmd->add_option("--blob-cluster-std", ov.blob_cluster_std, "blobs cluster stddev");
  cmd->add_option("--bench-d", ov.bench_d, "sampler bench dimension");
  cmd->add_option("--bench-k", ov.bench_k, "sampler bench retained count");
  cmd->add_option("--bench-trials", ov.bench_trials, "sampler bench trials");
  cmd->add_option("--eval-every", ov.eval_every, "test-set evaluation period");
  cmd->add_option("--seed", ov.seed, "master seed");
  cmd->add_option("--export-csv", ov.export_csv,
                  "write the constructed dataset as CSV");
  cmd->add_option("-o,--out", ov.output_dir, "output directory");
}

template <typename T>
void put(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v.has_value()) j[key] = *v;
}

nlohmann::json merged_config(const std::string& config_path, const Overrides& ov) {
  nlohmann::json j = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::invalid_argument("cannot open config file " + config_path);
    in >> j;
  }
  put(j, "task", ov.task);
  put(j, "mode", ov.mode);
  put(j, "regime", ov.regime);
  put(j, "strategy", ov.strategy);
  put(j, "sigma_grad_form", ov.sigma_grad_form);
  put(j, "ramp_shape", ov.ramp_shape);
  put(j, "export_csv", ov.export_csv);
  put(j, "output_dir", ov.output_dir);
  put(j, "mnist_dir", ov.mnist_dir);
  put(j, "generation_size", ov.n);
  put(j, "master_seed", ov.seed);
  put(j, "workers", ov.workers);
  put(j, "block_width", ov.block_width);
  put(j, "generations", ov.generations);
  put(j, "steps", ov.steps);
  put(j, "eval_every", ov.eval_every);
  put(j, "hold_steps", ov.hold_steps);
  put(j, "ramp_end_step", ov.ramp_end_step);
  put(j, "dim", ov.dim);
  put(j, "batch_size", ov.batch_size);
  put(j, "ces_generation_size", ov.ces_n);
  put(j, "hidden", ov.hidden);
  put(j, "data_count", ov.data_count);
  put(j, "train_limit", ov.train_limit);
  put(j, "bench_d", ov.bench_d);
  put(j, "bench_k", ov.bench_k);
  put(j, "bench_trials", ov.bench_trials);
  put(j, "nu", ov.nu);
  put(j, "temperature", ov.tau);
  put(j, "eta_logits", ov.eta_logits);
  put(j, "lr", ov.lr);
  put(j, "momentum", ov.momentum);
  put(j, "weight_decay", ov.weight_decay);
  put(j, "initial_sparsity", ov.initial_sparsity);
  put(j, "final_sparsity", ov.final_sparsity);
  put(j, "moons_noise", ov.moons_noise);
  put(j, "sigma_init", ov.sigma_init);
  put(j, "blob_cluster_std", ov.blob_cluster_std);
  put(j, "batch_norm", ov.batch_norm);
  put(j, "per_tensor", ov.per_tensor);

  if (!j.contains("workers")) {
    if (const char* env = std::getenv("ESMASK_WORKERS"))
      j["workers"] = static_cast<std::uint32_t>(std::stoul(env));
  }
  return j;
}

int dispatch(const std::string& subcommand, const std::string& config_path,
             const Overrides& ov) {
  esmask::RunConfig config;
  try {
    config = esmask::RunConfig::from_json(merged_config(config_path, ov));
    config.validate(subcommand);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kConfigError;
  }
  try {
    if (subcommand == "snes-opt") return esmask::cmd_snes_opt(config);
    if (subcommand == "ces-train") return esmask::cmd_ces_train(config);
    if (subcommand == "prune-train") return esmask::cmd_prune_train(config);
    if (subcommand == "sampler-bench") return esmask::cmd_sampler_bench(config);
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << std::endl;
    return kRuntimeError;
  }
  std::cerr << "unknown subcommand " << subcommand << std::endl;
  return kConfigError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Separable NES and hybrid sparse-mask training"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  auto* snes = app.add_subcommand("snes-opt", "SNES black-box / supervised optimization");
  auto* ces = app.add_subcommand("ces-train", "hybrid SGD + ES mask training");
  auto* prune = app.add_subcommand("prune-train", "gradual magnitude pruning baseline");
  auto* bench = app.add_subcommand("sampler-bench", "mask sampler statistics");
  for (CLI::App* cmd : {snes, ces, prune, bench}) add_run_options(cmd, config_path, ov);

  auto* summarize = app.add_subcommand("summarize", "flatten a metrics stream to CSV");
  std::string metrics_path, csv_path;
  summarize->add_option("--in", metrics_path, "metrics.jsonl path")->required();
  summarize->add_option("--out-csv", csv_path, "CSV output path")->required();

  CLI11_PARSE(app, argc, argv);

  if (summarize->parsed()) {
    try {
      return esmask::cmd_summarize(metrics_path, csv_path);
    } catch (const std::exception& e) {
      std::cerr << "runtime error: " << e.what() << std::endl;
      return kRuntimeError;
    }
  }
  for (CLI::App* cmd : {snes, ces, prune, bench})
    if (cmd->parsed()) return dispatch(cmd->get_name(), config_path, ov);
  return kConfigError;
}
