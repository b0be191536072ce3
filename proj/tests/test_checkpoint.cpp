#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "esmask/checkpoint.hpp"
#include "esmask/rng.hpp"

using namespace esmask;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "esmask_ckpt_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE_BEGIN("checkpoint");

TEST_CASE("search distribution round trip is exact") {
  GaussianSearchDist dist = make_search_dist(37);
  Rng rng(1);
  for (double& m : dist.mean) m = rng.normal();
  for (double& s : dist.sigma) s = 0.25 + rng.uniform01();
  dist.sigma_grad_form = SigmaGradForm::ZMinusOneSq;

  const std::string path = temp_file("dist.ckpt").string();
  save_search_dist({dist, 987654321, 42}, path);
  const SearchDistCheckpoint loaded = load_search_dist(path);

  CHECK(loaded.dist.mean == dist.mean);
  CHECK(loaded.dist.sigma == dist.sigma);
  CHECK(loaded.dist.eta_mean == dist.eta_mean);
  CHECK(loaded.dist.eta_sigma == dist.eta_sigma);
  CHECK(loaded.dist.sigma_grad_form == dist.sigma_grad_form);
  CHECK(loaded.master_seed == 987654321);
  CHECK(loaded.generation == 42);
}

TEST_CASE("ces checkpoint round trip is exact") {
  MlpConfig mc;
  mc.widths = {6, 5, 3};
  mc.batch_norm = true;
  mc.init_seed = 13;
  FlatModel model = make_mlp(mc);
  Rng rng(2);
  for (double& v : model.momentum) v = rng.normal();
  for (double& v : model.bn_running_mean) v = rng.normal();
  for (double& v : model.bn_running_var) v = 0.5 + rng.uniform01();

  MaskDist md = make_mask_dist(30, 2.5, 0.2, 1);
  for (double& l : md.logits) l = rng.normal();

  CesCheckpoint ckpt;
  ckpt.arch = mc;
  ckpt.model = model;
  ckpt.mask_dists = {md};
  ckpt.schedule = {0.1, 0.9, 10, 100, RampShape::Linear};
  ckpt.master_seed = 777;
  ckpt.step = 55;

  const std::string path = temp_file("ces.ckpt").string();
  save_ces_checkpoint(ckpt, path);
  const CesCheckpoint loaded = load_ces_checkpoint(path);

  CHECK(loaded.model.params == model.params);
  CHECK(loaded.model.momentum == model.momentum);
  CHECK(loaded.model.bn_running_mean == model.bn_running_mean);
  CHECK(loaded.model.bn_running_var == model.bn_running_var);
  CHECK(loaded.model.layers.size() == model.layers.size());
  REQUIRE(loaded.mask_dists.size() == 1);
  CHECK(loaded.mask_dists[0].logits == md.logits);
  CHECK(loaded.mask_dists[0].temperature == 2.5);
  CHECK(loaded.mask_dists[0].eta_logits == 0.2);
  CHECK(loaded.schedule.final_sparsity == 0.9);
  CHECK(loaded.schedule.shape == RampShape::Linear);
  CHECK(loaded.step == 55);
}

TEST_CASE("corrupt files are rejected") {
  const std::string path = temp_file("bad.ckpt").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS_WITH_AS(Archive::load(path), doctest::Contains("bad magic"),
                       std::runtime_error);

  GaussianSearchDist dist = make_search_dist(4);
  const std::string good = temp_file("good.ckpt").string();
  save_search_dist({dist, 0, 0}, good);
  const std::string truncated = temp_file("trunc.ckpt").string();
  {
    std::ifstream in(good, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out(truncated, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
  }
  CHECK_THROWS_WITH_AS(Archive::load(truncated), doctest::Contains("truncated"),
                       std::runtime_error);

  CHECK_THROWS_AS(load_search_dist(temp_file("missing.ckpt").string()),
                  std::runtime_error);
}

TEST_SUITE_END();
