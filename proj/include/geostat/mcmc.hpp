#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geostat/dataset.hpp"
#include "geostat/model_backend.hpp"
#include "geostat/priors.hpp"

namespace geostat::mcmc {

struct InitialValues {
  double sigma2 = 1.0;
  double tau2 = 1.0;
  double phi = 1.0;
  Vector beta;
};

struct ChainConfig {
  long iterations = 5000;
  long burn_in = 2500;
  long thin = 1;
  std::uint64_t seed = 1;
  std::optional<InitialValues> initial;
  long adapt_window = 25;
  double target_acceptance = 0.35;
  double initial_scale = 0.1;

  void validate() const;
  long retained() const { return (iterations - burn_in) / thin; }
};

// sigma2 = tau2 = half the OLS residual variance, phi at the geometric centre
// of its prior support, beta = OLS.
InitialValues default_initial(const Dataset& data, const PriorSpec& priors);

struct ChainLogEntry {
  long iteration;
  double acceptance;  // over the window that ends at `iteration`
  std::array<double, 3> scales;
  bool burn_in;
};

struct PosteriorSamples {
  std::string model;
  std::uint64_t seed = 0;
  std::vector<ParameterDraw> draws;
  Vector log_target;           // ln p(theta, tau2) + ln p(y | ...) per retained draw
  std::vector<Vector> latent;  // per retained draw, only for latent backends
  long accepted = 0;           // over all iterations
  long accepted_after_burn_in = 0;
  long sampled_iterations = 0;  // iterations after burn-in
  std::vector<ChainLogEntry> log;

  std::size_t size() const { return draws.size(); }
  std::vector<std::string> names() const;
  // One row per draw: sigma2, tau2, phi, beta_0, ...
  Matrix table() const;
};

// The log target in u = ln(params) including the Jacobian Σ u.
double log_transform_target(const std::function<double(std::span<const double>)>& target,
                            std::span<const double> u);

struct StepResult {
  Vector u;
  double log_target;
  bool accepted;
};

// Random-walk Metropolis step with proposal u + scales ∘ Z. Always consumes
// u.size() normals and one uniform.
StepResult rw_step(std::span<const double> u, double current, std::span<const double> scales,
                   const std::function<double(std::span<const double>)>& target, Rng& rng);

// exp(+0.05) when the window acceptance exceeds the target, exp(-0.05) when
// it falls short, unchanged when equal.
double adapt_scale(double window_acceptance, double scale, double target_acceptance = 0.35);

// Metropolis-within-Gibbs: (sigma2, tau2, phi) on the log scale, then beta
// from its Gaussian full conditional, then the backend's latent block.
PosteriorSamples run_chain(ModelBackend& backend, const Dataset& data, const PriorSpec& priors,
                           const ChainConfig& config);

struct ParamSummary {
  std::string name;
  double mean;
  double sd;
  double q025;
  double q50;
  double q975;
};

// Linear interpolation between order statistics (h = (N - 1) p).
double quantile(std::span<const double> sorted, double p);

ParamSummary summarize_values(const std::string& name, std::span<const double> values);
std::vector<ParamSummary> summarize(const PosteriorSamples& samples);

}  // namespace geostat::mcmc
