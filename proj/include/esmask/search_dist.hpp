#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace esmask {

// Which per-coordinate sigma gradient term the natural-gradient estimate uses.
// Canonical separable-NES literature uses z^2 - 1; the (z - 1)^2 variant is
// kept selectable and the choice is recorded in run metadata.
enum class SigmaGradForm { CanonicalZSqMinusOne, ZMinusOneSq };

const char* to_string(SigmaGradForm form);
SigmaGradForm sigma_grad_form_from_string(const std::string& s);

// Diagonal Gaussian search distribution. Immutable between updates; sampling
// is a pure function of (dist, seed, index) so it is safe to call
// concurrently. Updates return a new value.
struct GaussianSearchDist {
  std::vector<double> mean;
  std::vector<double> sigma;  // element-wise stddev, strictly positive
  double eta_mean = 1.0;
  double eta_sigma = 0.0;
  SigmaGradForm sigma_grad_form = SigmaGradForm::CanonicalZSqMinusOne;

  std::size_t dim() const { return mean.size(); }
  void validate() const;  // throws std::invalid_argument on broken invariants
};

// eta_mean = 1, eta_sigma = (3 + ln d) / (5 sqrt(d)).
std::pair<double, double> default_learning_rates(std::size_t d);

// mean = 0, sigma = 1, default learning rates.
GaussianSearchDist make_search_dist(std::size_t d);

struct SampleRecord {
  std::vector<double> z;  // standard-normal draw behind the sample
  double fitness = 0.0;
  double utility = 0.0;
};

// One batch of samples evaluated together before a distribution update.
struct Generation {
  std::uint64_t seed = 0;
  std::vector<SampleRecord> samples;
};

struct ShapingConfig {
  double nu = 2.0;
};

// The standard-normal vector behind sample `index` of generation `seed`.
std::vector<double> sample_z(std::uint64_t seed, std::uint64_t index,
                             std::size_t d);
void sample_z_into(std::uint64_t seed, std::uint64_t index,
                   std::span<double> out);

// mean + sigma .* z with z = sample_z(seed, index, d).
std::vector<double> sample_params(const GaussianSearchDist& dist,
                                  std::uint64_t seed, std::uint64_t index);

// Rank-based zero-sum utilities, rank 1 = highest fitness, ties broken by
// ascending sample index. Throws on NaN fitness.
std::vector<double> shape_utilities(std::span<const double> fitnesses,
                                    const ShapingConfig& cfg = {});

struct NaturalGradient {
  std::vector<double> mean;   // sum_i u_i z_i
  std::vector<double> sigma;  // sum_i u_i g(z_i), without the sigma factor
};

NaturalGradient natural_gradient(const Generation& gen, SigmaGradForm form);

// mean += eta_mean * sigma .* grad_mean; sigma *= exp(eta_sigma/2 * grad_sigma).
// Throws on non-finite gradients, leaving the distribution untouched.
GaussianSearchDist apply_update(const GaussianSearchDist& dist,
                                const NaturalGradient& grad);

// Truncated normal: values beyond two stddevs are re-drawn. std defaults to
// the fan-in rule 1/sqrt(fan_in).
double truncated_normal(class Rng& rng, double stddev);

}  // namespace esmask
