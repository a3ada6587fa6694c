#include "geostat/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "geostat/errors.hpp"

namespace geostat::mcmc {

void ChainConfig::validate() const {
  if (iterations < 1) throw InvalidParams("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw InvalidParams("burn_in must lie in [0, iterations)");
  if (thin < 1) throw InvalidParams("thin must be at least 1");
  if (adapt_window < 1) throw InvalidParams("adapt_window must be at least 1");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
    throw InvalidParams("target_acceptance must lie in (0, 1)");
  if (!(initial_scale > 0.0)) throw InvalidParams("initial_scale must be positive");
  if (initial) {
    if (!(initial->sigma2 > 0.0) || !(initial->tau2 > 0.0) || !(initial->phi > 0.0))
      throw InvalidParams("initial sigma2, tau2 and phi must be positive");
  }
}

InitialValues default_initial(const Dataset& data, const PriorSpec& priors) {
  InitialValues init;
  init.beta = ols_beta(data);
  const Vector r = data.residual(init.beta);
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(std::max<std::size_t>(r.size() - 1, 1));
  init.sigma2 = 0.5 * var;
  init.tau2 = 0.5 * var;
  init.phi = priors.phi.lo > 0.0 ? std::sqrt(priors.phi.lo * priors.phi.hi) : 0.5 * (priors.phi.lo + priors.phi.hi);
  return init;
}

std::vector<std::string> PosteriorSamples::names() const {
  std::vector<std::string> out{"sigma2", "tau2", "phi"};
  const std::size_t p = draws.empty() ? 0 : draws.front().beta.size();
  for (std::size_t j = 0; j < p; ++j) out.push_back("beta_" + std::to_string(j));
  return out;
}

Matrix PosteriorSamples::table() const {
  const std::size_t cols = names().size();
  Matrix m(draws.size(), cols);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    m(i, 0) = draws[i].params.sigma2;
    m(i, 1) = draws[i].params.tau2;
    m(i, 2) = draws[i].params.phi;
    for (std::size_t j = 0; j < draws[i].beta.size(); ++j) m(i, 3 + j) = draws[i].beta[j];
  }
  return m;
}

double log_transform_target(const std::function<double(std::span<const double>)>& target,
                            std::span<const double> u) {
  Vector x(u.size());
  double jac = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    x[k] = std::exp(u[k]);
    jac += u[k];
  }
  const double t = target(x);
  if (std::isnan(t)) return -std::numeric_limits<double>::infinity();
  return t + jac;
}

StepResult rw_step(std::span<const double> u, double current, std::span<const double> scales,
                   const std::function<double(std::span<const double>)>& target, Rng& rng) {
  if (scales.size() != u.size()) throw LengthMismatch("rw_step: one scale per coordinate needed");
  Vector prop(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) prop[k] = u[k] + scales[k] * rng.normal();
  const double uniform = rng.uniform();
  const double lt = target(prop);
  if (std::log(uniform) < lt - current) return StepResult{std::move(prop), lt, true};
  return StepResult{Vector(u.begin(), u.end()), current, false};
}

double adapt_scale(double window_acceptance, double scale, double target_acceptance) {
  if (window_acceptance > target_acceptance) return scale * std::exp(0.05);
  if (window_acceptance < target_acceptance) return scale * std::exp(-0.05);
  return scale;
}

namespace {

CovarianceParams params_from(const CovarianceParams& base, std::span<const double> u) {
  CovarianceParams p = base;
  p.sigma2 = std::exp(u[0]);
  p.tau2 = std::exp(u[1]);
  p.phi = std::exp(u[2]);
  return p;
}

double sample_sd(const std::vector<Vector>& history, std::size_t k) {
  double mean = 0.0;
  for (const Vector& h : history) mean += h[k];
  mean /= static_cast<double>(history.size());
  double ss = 0.0;
  for (const Vector& h : history) ss += (h[k] - mean) * (h[k] - mean);
  return std::sqrt(ss / static_cast<double>(history.size() - 1));
}

}  // namespace

PosteriorSamples run_chain(ModelBackend& backend, const Dataset& data, const PriorSpec& priors,
                           const ChainConfig& config) {
  config.validate();
  priors.validate();
  Rng rng(config.seed);
  const InitialValues init = config.initial ? *config.initial : default_initial(data, priors);
  if (init.beta.size() != backend.num_beta()) throw LengthMismatch("initial beta has wrong length");

  const CovarianceParams base = backend.base_params();
  Vector u{std::log(init.sigma2), std::log(init.tau2), std::log(init.phi)};
  Vector beta = init.beta;

  PosteriorSamples out;
  out.model = backend.tag();
  out.seed = config.seed;
  out.sampled_iterations = config.iterations - config.burn_in;
  out.draws.reserve(static_cast<std::size_t>(config.retained()));

  long it = 0;
  auto fail = [&](const std::exception& e) -> ChainError { return ChainError(it, e.what()); };

  std::unique_ptr<ParameterState> state;
  std::unique_ptr<ParameterState> proposal_state;
  double log_prior = 0.0;
  try {
    const CovarianceParams p0 = params_from(base, u);
    log_prior = priors.log_density(p0);
    if (!std::isfinite(log_prior)) throw InvalidParams("initial values lie outside the prior support");
    state = backend.factorize(p0);
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw fail(e);
  }

  // Log target of the current state in u, with beta and any latent field
  // held at their current values.
  auto current_target = [&]() { return log_prior + state->log_likelihood(beta) + u[0] + u[1] + u[2]; };

  auto target = [&](std::span<const double> v) -> double {
    const CovarianceParams p = params_from(base, v);
    const double lp = priors.log_density(p);
    if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
    proposal_state = backend.factorize(p);
    return lp + proposal_state->log_likelihood(beta) + v[0] + v[1] + v[2];
  };

  std::array<double, 3> base_scale{config.initial_scale, config.initial_scale, config.initial_scale};
  double lambda = 1.0;
  long window_accepts = 0;
  long window_count = 0;
  const long rescale_at = config.burn_in / 2;
  std::vector<Vector> history;

  try {
    double lt = current_target();
    for (it = 0; it < config.iterations; ++it) {
      const bool burning = it < config.burn_in;
      const Vector scales{lambda * base_scale[0], lambda * base_scale[1], lambda * base_scale[2]};
      proposal_state.reset();
      StepResult step = rw_step(u, lt, scales, target, rng);
      if (step.accepted) {
        u = std::move(step.u);
        state = std::move(proposal_state);
        log_prior = priors.log_density(params_from(base, u));
        ++out.accepted;
        if (!burning) ++out.accepted_after_burn_in;
        ++window_accepts;
      }
      ++window_count;

      beta = state->draw_beta(priors.beta, rng);
      if (backend.has_latent()) backend.update_latent(*state, beta, rng);
      lt = current_target();

      if (burning && it >= config.burn_in / 4) history.push_back(u);
      if (burning && it + 1 == rescale_at && history.size() >= 50) {
        for (std::size_t k = 0; k < 3; ++k) {
          const double sd = sample_sd(history, k);
          if (sd > 1e-6) base_scale[k] = 2.38 / std::sqrt(3.0) * sd;
        }
        lambda = 1.0;
      }

      if (window_count == config.adapt_window || it + 1 == config.burn_in || it + 1 == config.iterations) {
        const double rate = static_cast<double>(window_accepts) / static_cast<double>(window_count);
        if (burning) lambda = adapt_scale(rate, lambda, config.target_acceptance);
        out.log.push_back(ChainLogEntry{it + 1, rate,
                                        {lambda * base_scale[0], lambda * base_scale[1], lambda * base_scale[2]},
                                        burning});
        window_accepts = 0;
        window_count = 0;
      }

      if (!burning && (it - config.burn_in + 1) % config.thin == 0) {
        out.draws.push_back(ParameterDraw{params_from(base, u), beta});
        out.log_target.push_back(lt - u[0] - u[1] - u[2]);
        if (backend.has_latent()) out.latent.push_back(backend.latent());
      }
    }
  } catch (const ChainError&) {
    throw;
  } catch (const std::exception& e) {
    throw fail(e);
  }
  return out;
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InsufficientDraws("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

ParamSummary summarize_values(const std::string& name, std::span<const double> values) {
  if (values.size() < 2) throw InsufficientDraws("summaries need at least two draws");
  Vector v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ParamSummary{name, mean, std::sqrt(ss / (n - 1.0)), quantile(v, 0.025), quantile(v, 0.5),
                      quantile(v, 0.975)};
}

std::vector<ParamSummary> summarize(const PosteriorSamples& samples) {
  if (samples.size() < 2) throw InsufficientDraws("summaries need at least two draws");
  const Matrix t = samples.table();
  const std::vector<std::string> names = samples.names();
  std::vector<ParamSummary> out;
  Vector col(t.rows());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    for (std::size_t i = 0; i < t.rows(); ++i) col[i] = t(i, j);
    out.push_back(summarize_values(names[j], col));
  }
  return out;
}

}  // namespace geostat::mcmc
