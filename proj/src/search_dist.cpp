#include "esmask/search_dist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "esmask/rng.hpp"

namespace esmask {

const char* to_string(SigmaGradForm form) {
  switch (form) {
    case SigmaGradForm::CanonicalZSqMinusOne:
      return "canonical_zsq_minus_one";
    case SigmaGradForm::ZMinusOneSq:
      return "z_minus_one_sq";
  }
  return "unknown";
}

SigmaGradForm sigma_grad_form_from_string(const std::string& s) {
  if (s == "canonical_zsq_minus_one") return SigmaGradForm::CanonicalZSqMinusOne;
  if (s == "z_minus_one_sq") return SigmaGradForm::ZMinusOneSq;
  throw std::invalid_argument("unknown sigma gradient form: " + s);
}

void GaussianSearchDist::validate() const {
  if (mean.empty()) throw std::invalid_argument("search dist: dimension must be >= 1");
  if (mean.size() != sigma.size())
    throw std::invalid_argument("search dist: mean/sigma length mismatch");
  for (double s : sigma)
    if (!(s > 0.0)) throw std::invalid_argument("search dist: sigma must be strictly positive");
}

std::pair<double, double> default_learning_rates(std::size_t d) {
  if (d < 1) throw std::invalid_argument("default_learning_rates: d must be >= 1");
  const double dd = static_cast<double>(d);
  return {1.0, (3.0 + std::log(dd)) / (5.0 * std::sqrt(dd))};
}

GaussianSearchDist make_search_dist(std::size_t d) {
  GaussianSearchDist dist;
  dist.mean.assign(d, 0.0);
  dist.sigma.assign(d, 1.0);
  auto [em, es] = default_learning_rates(d);
  dist.eta_mean = em;
  dist.eta_sigma = es;
  return dist;
}

void sample_z_into(std::uint64_t seed, std::uint64_t index,
                   std::span<double> out) {
  Rng rng(derive_seed(seed, index, stream_tag::kParamNoise));
  for (double& v : out) v = rng.normal();
}

std::vector<double> sample_z(std::uint64_t seed, std::uint64_t index,
                             std::size_t d) {
  std::vector<double> z(d);
  sample_z_into(seed, index, z);
  return z;
}

std::vector<double> sample_params(const GaussianSearchDist& dist,
                                  std::uint64_t seed, std::uint64_t index) {
  dist.validate();
  std::vector<double> theta = sample_z(seed, index, dist.dim());
  for (std::size_t j = 0; j < theta.size(); ++j)
    theta[j] = dist.mean[j] + dist.sigma[j] * theta[j];
  return theta;
}

std::vector<double> shape_utilities(std::span<const double> fitnesses,
                                    const ShapingConfig& cfg) {
  const std::size_t n = fitnesses.size();
  if (n == 0) throw std::invalid_argument("shape_utilities: empty fitness vector");
  if (!(cfg.nu > 0.0)) throw std::invalid_argument("shape_utilities: nu must be > 0");
  for (double f : fitnesses)
    if (std::isnan(f)) throw std::invalid_argument("shape_utilities: NaN fitness");

  // Sort sample indices by descending fitness; equal fitnesses keep ascending
  // index order, so the lower index gets the better rank.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fitnesses[a] > fitnesses[b];
  });

  const double log_cut = std::log(static_cast<double>(n) / cfg.nu + 1.0);
  std::vector<double> weight(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    weight[r] = std::max(0.0, log_cut - std::log(static_cast<double>(r + 1)));
    total += weight[r];
  }

  std::vector<double> utilities(n);
  for (std::size_t r = 0; r < n; ++r)
    utilities[order[r]] = weight[r] / total - 1.0 / static_cast<double>(n);
  return utilities;
}

NaturalGradient natural_gradient(const Generation& gen, SigmaGradForm form) {
  if (gen.samples.empty())
    throw std::invalid_argument("natural_gradient: empty generation");
  const std::size_t d = gen.samples.front().z.size();
  NaturalGradient grad;
  grad.mean.assign(d, 0.0);
  grad.sigma.assign(d, 0.0);
  for (const SampleRecord& s : gen.samples) {
    const double u = s.utility;
    for (std::size_t j = 0; j < d; ++j) {
      const double z = s.z[j];
      grad.mean[j] += u * z;
      grad.sigma[j] += u * (form == SigmaGradForm::CanonicalZSqMinusOne
                                ? z * z - 1.0
                                : (z - 1.0) * (z - 1.0));
    }
  }
  return grad;
}

GaussianSearchDist apply_update(const GaussianSearchDist& dist,
                                const NaturalGradient& grad) {
  const std::size_t d = dist.dim();
  if (grad.mean.size() != d || grad.sigma.size() != d)
    throw std::invalid_argument("apply_update: gradient length mismatch");
  for (std::size_t j = 0; j < d; ++j)
    if (!std::isfinite(grad.mean[j]) || !std::isfinite(grad.sigma[j]))
      throw std::invalid_argument("apply_update: non-finite gradient");

  GaussianSearchDist out = dist;
  for (std::size_t j = 0; j < d; ++j) {
    out.mean[j] = dist.mean[j] + dist.eta_mean * dist.sigma[j] * grad.mean[j];
    out.sigma[j] = dist.sigma[j] * std::exp(0.5 * dist.eta_sigma * grad.sigma[j]);
  }
  return out;
}

double truncated_normal(Rng& rng, double stddev) {
  double z;
  do {
    z = rng.normal();
  } while (std::abs(z) > 2.0);
  return z * stddev;
}

}  // namespace esmask
