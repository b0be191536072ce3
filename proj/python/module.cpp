#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "esmask/executor.hpp"
#include "esmask/mask_dist.hpp"
#include "esmask/rng.hpp"
#include "esmask/run.hpp"
#include "esmask/samplers.hpp"
#include "esmask/search_dist.hpp"
#include "esmask/tasks.hpp"

namespace py = pybind11;
using namespace esmask;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style>& a) {
  return {a.data(), a.data() + a.size()};
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<std::uint32_t> to_array_u32(const std::vector<std::uint32_t>& v) {
  py::array_t<std::uint32_t> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Benchmark SNES driver: runs `generations` updates and reports the outcome.
py::dict snes_optimize(const std::string& task, std::size_t dim, std::uint64_t n,
                       std::uint32_t workers, const std::string& mode,
                       std::int64_t generations, std::uint64_t seed) {
  BenchmarkFn fn{task == "sphere" ? BenchmarkKind::Sphere : BenchmarkKind::Rosenbrock,
                 dim};
  fn.validate();
  GaussianSearchDist dist = make_search_dist(dim);
  Rng init_rng(derive_seed(seed, stream_tag::kInit));
  for (double& m : dist.mean) m = -1.0 + 2.0 * init_rng.uniform01();

  ExecPlan plan{exec_mode_from_string(mode), workers, n, seed, BatchRegime::FixB, {}};
  const FitnessFn fitness = [fn](std::span<const double> params, std::uint64_t) {
    return eval_benchmark(fn, params);
  };

  GenerationMetrics gm;
  {
    py::gil_scoped_release release;
    for (std::int64_t g = 0; g < generations; ++g)
      dist = run_generation(dist, fitness, plan, g, &gm);
  }

  py::dict out;
  out["mean"] = to_array(dist.mean);
  out["sigma"] = to_array(dist.sigma);
  out["mean_fitness"] = eval_benchmark(fn, dist.mean);
  out["last_generation_best"] = gm.fitness_best;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Separable NES, categorical mask samplers, and hybrid mask training";

  py::class_<GaussianSearchDist>(m, "GaussianSearchDist")
      .def(py::init([](std::size_t d) { return make_search_dist(d); }), py::arg("dim"))
      .def_property_readonly("dim", &GaussianSearchDist::dim)
      .def_readwrite("eta_mean", &GaussianSearchDist::eta_mean)
      .def_readwrite("eta_sigma", &GaussianSearchDist::eta_sigma)
      .def_property(
          "mean", [](const GaussianSearchDist& d) { return to_array(d.mean); },
          [](GaussianSearchDist& d, const py::array_t<double, py::array::c_style>& a) {
            d.mean = to_vector(a);
          })
      .def_property(
          "sigma", [](const GaussianSearchDist& d) { return to_array(d.sigma); },
          [](GaussianSearchDist& d, const py::array_t<double, py::array::c_style>& a) {
            d.sigma = to_vector(a);
          });

  m.def(
      "default_learning_rates",
      [](std::size_t d) {
        auto [em, es] = default_learning_rates(d);
        return py::make_tuple(em, es);
      },
      py::arg("dim"));

  m.def(
      "sample_z",
      [](std::uint64_t seed, std::uint64_t index, std::size_t d) {
        return to_array(sample_z(seed, index, d));
      },
      py::arg("seed"), py::arg("index"), py::arg("dim"));

  m.def(
      "sample_params",
      [](const GaussianSearchDist& dist, std::uint64_t seed, std::uint64_t index) {
        return to_array(sample_params(dist, seed, index));
      },
      py::arg("dist"), py::arg("seed"), py::arg("index"));

  m.def(
      "shape_utilities",
      [](const py::array_t<double, py::array::c_style>& fitnesses, double nu) {
        return to_array(shape_utilities(to_vector(fitnesses), {nu}));
      },
      py::arg("fitnesses"), py::arg("nu") = 2.0);

  m.def(
      "eval_benchmark",
      [](const std::string& kind, const py::array_t<double, py::array::c_style>& theta) {
        BenchmarkFn fn{kind == "sphere" ? BenchmarkKind::Sphere
                                        : BenchmarkKind::Rosenbrock,
                       static_cast<std::size_t>(theta.size())};
        const auto v = to_vector(theta);
        return eval_benchmark(fn, v);
      },
      py::arg("kind"), py::arg("theta"));

  py::class_<CategoricalDist>(m, "CategoricalDist")
      .def_static(
          "from_probs",
          [](const py::array_t<double, py::array::c_style>& probs) {
            return CategoricalDist::from_probs(to_vector(probs));
          })
      .def_static(
          "from_weights",
          [](const py::array_t<double, py::array::c_style>& weights) {
            return CategoricalDist::from_weights(to_vector(weights));
          })
      .def_property_readonly("probs",
                             [](const CategoricalDist& d) { return to_array(d.probs); })
      .def_property_readonly("cdf",
                             [](const CategoricalDist& d) { return to_array(d.cdf); });

  m.def("draw", &draw, py::arg("dist"), py::arg("u"));
  m.def(
      "draw_k_sorted",
      [](const CategoricalDist& dist, std::size_t k, std::uint64_t seed) {
        return to_array_u32(draw_k_sorted(dist, k, seed));
      },
      py::arg("dist"), py::arg("k"), py::arg("seed"));

  m.def(
      "sample_mask",
      [](const CategoricalDist& dist, std::size_t k, const std::string& strategy,
         std::uint64_t seed) {
        const Mask mask =
            sample_mask(dist, k, sampler_strategy_from_string(strategy), seed);
        return to_array_u32(mask.indices);
      },
      py::arg("dist"), py::arg("k"), py::arg("strategy"), py::arg("seed"));

  py::class_<MaskDist>(m, "MaskDist")
      .def(py::init([](std::size_t groups, double temperature, double eta_logits,
                       std::uint32_t block_width) {
             return make_mask_dist(groups, temperature, eta_logits, block_width);
           }),
           py::arg("groups"), py::arg("temperature") = 3.0,
           py::arg("eta_logits") = 0.1, py::arg("block_width") = 1)
      .def_property(
          "logits", [](const MaskDist& d) { return to_array(d.logits); },
          [](MaskDist& d, const py::array_t<double, py::array::c_style>& a) {
            d.logits = to_vector(a);
          })
      .def_readwrite("temperature", &MaskDist::temperature)
      .def_readwrite("eta_logits", &MaskDist::eta_logits)
      .def_readwrite("block_width", &MaskDist::block_width)
      .def_property_readonly("groups", &MaskDist::groups)
      .def(
          "update",
          [](const MaskDist& d, const py::array_t<double, py::array::c_style>& grad) {
            return apply_mask_update(d, to_vector(grad));
          },
          py::arg("grad"));

  m.def("softmax_probs", [](const MaskDist& md) { return probs(md); }, py::arg("dist"));

  m.def(
      "mask_gradient",
      [](const std::vector<std::pair<py::array_t<std::uint32_t, py::array::c_style>,
                                     double>>& samples,
         const MaskDist& md) {
        std::vector<MaskSample> native(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
          Mask mask;
          mask.domain = static_cast<std::uint32_t>(md.groups());
          mask.indices.assign(samples[i].first.data(),
                              samples[i].first.data() + samples[i].first.size());
          native[i] = {std::move(mask), samples[i].second};
        }
        return to_array(mask_gradient(native, md));
      },
      py::arg("samples"), py::arg("dist"));

  m.def(
      "test_time_mask",
      [](const MaskDist& md, std::size_t k) {
        return to_array_u32(test_time_mask(md, k).indices);
      },
      py::arg("dist"), py::arg("k"));

  m.def(
      "expand_block_mask",
      [](const py::array_t<std::uint32_t, py::array::c_style>& indices,
         std::uint32_t domain, std::uint32_t w) {
        Mask mask;
        mask.domain = domain;
        mask.indices.assign(indices.data(), indices.data() + indices.size());
        return to_array_u32(expand_block_mask(mask, w).indices);
      },
      py::arg("indices"), py::arg("domain"), py::arg("width"));

  py::class_<SparsitySchedule>(m, "SparsitySchedule")
      .def(py::init([](double initial, double final_, std::int64_t hold,
                       std::int64_t ramp_end, const std::string& shape) {
             SparsitySchedule s{initial, final_, hold, ramp_end,
                                ramp_shape_from_string(shape)};
             s.validate();
             return s;
           }),
           py::arg("initial_sparsity"), py::arg("final_sparsity"),
           py::arg("hold_steps") = 2000, py::arg("ramp_end_step") = 50000,
           py::arg("shape") = "cubic")
      .def("sparsity_at", &SparsitySchedule::sparsity_at, py::arg("step"));

  m.def(
      "retained_count",
      [](const SparsitySchedule& s, std::int64_t step, std::size_t groups) {
        return retained_count(s, step, groups);
      },
      py::arg("schedule"), py::arg("step"), py::arg("groups"));

  m.def("snes_optimize", &snes_optimize, py::arg("task"), py::arg("dim"),
        py::arg("n"), py::arg("workers") = 1, py::arg("mode") = "semi",
        py::arg("generations") = 100, py::arg("seed") = 0);

  m.def(
      "run_from_json",
      [](const std::string& subcommand, const std::string& config_json) {
        const RunConfig config =
            RunConfig::from_json(nlohmann::json::parse(config_json));
        config.validate(subcommand);
        py::gil_scoped_release release;
        if (subcommand == "snes-opt") return cmd_snes_opt(config);
        if (subcommand == "ces-train") return cmd_ces_train(config);
        if (subcommand == "prune-train") return cmd_prune_train(config);
        if (subcommand == "sampler-bench") return cmd_sampler_bench(config);
        throw std::invalid_argument("unknown subcommand " + subcommand);
      },
      py::arg("subcommand"), py::arg("config_json"),
      "Run a full experiment from a JSON config string; returns the exit status.");
}
