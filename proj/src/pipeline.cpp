#include "geostat/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "geostat/errors.hpp"
#include "geostat/fullgp.hpp"

namespace geostat {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::FullGp:
      return "fullgp";
    case ModelKind::PP:
      return "pp";
    case ModelKind::MPP:
      return "mpp";
    case ModelKind::Radial:
      return "radial";
    case ModelKind::NngpResponse:
      return "nngp_response";
    case ModelKind::NngpLatent:
      return "nngp_latent";
  }
  return "fullgp";
}

ModelKind model_from_string(const std::string& s) {
  for (ModelKind k : {ModelKind::FullGp, ModelKind::PP, ModelKind::MPP, ModelKind::Radial, ModelKind::NngpResponse,
                      ModelKind::NngpLatent})
    if (to_string(k) == s) return k;
  throw InvalidParams("unknown model '" + s + "'");
}

bool is_lowrank(ModelKind k) { return k == ModelKind::PP || k == ModelKind::MPP || k == ModelKind::Radial; }
bool is_nngp(ModelKind k) { return k == ModelKind::NngpResponse || k == ModelKind::NngpLatent; }

void ModelSpec::validate() const {
  if (is_lowrank(kind) && !knots && knot_count == 0) throw InvalidParams("low-rank models need knots");
  if (is_nngp(kind) && neighbors == 0) throw InvalidParams("nngp models need at least one neighbor");
  if (!reference.empty() && kind != ModelKind::NngpLatent)
    throw InvalidParams("a reference set is only used by nngp_latent");
  if (!(nu > 0.0)) throw InvalidParams("smoothness nu must be positive");
}

namespace {

lowrank::Variant variant_of(ModelKind k) {
  switch (k) {
    case ModelKind::MPP:
      return lowrank::Variant::MPP;
    case ModelKind::Radial:
      return lowrank::Variant::Radial;
    default:
      return lowrank::Variant::PP;
  }
}

}  // namespace

lowrank::KnotSet resolve_knots(const ModelSpec& spec, const Dataset& data) {
  if (spec.knots) return lowrank::KnotSet{*spec.knots, lowrank::KnotPlacement::User};
  if (spec.placement == lowrank::KnotPlacement::Subset) return lowrank::subset_knots(data.locations, spec.knot_count);
  return lowrank::grid_knots(data.locations, spec.knot_count);
}

std::unique_ptr<ModelBackend> make_backend(const ModelSpec& spec, const Dataset& data) {
  spec.validate();
  switch (spec.kind) {
    case ModelKind::FullGp:
      return std::make_unique<fullgp::FullGpBackend>(data, spec.family, spec.nu);
    case ModelKind::PP:
    case ModelKind::MPP:
    case ModelKind::Radial:
      return std::make_unique<lowrank::LowRankBackend>(data, variant_of(spec.kind), resolve_knots(spec, data),
                                                       spec.family, spec.nu);
    case ModelKind::NngpResponse:
      return std::make_unique<nngp::ResponseBackend>(data, spec.neighbors, spec.ordering, spec.family, spec.nu);
    case ModelKind::NngpLatent:
      return std::make_unique<nngp::LatentBackend>(data, spec.neighbors, spec.ordering, spec.family, spec.nu,
                                                   spec.reference);
  }
  throw InvalidParams("unknown model");
}

PriorSpec weak_priors(const Dataset& data, double phi_lo, double phi_hi) {
  PriorSpec p;
  p.phi = UniformPrior{phi_lo, phi_hi};
  const mcmc::InitialValues init = mcmc::default_initial(data, p);
  p.sigma2 = InverseGamma{2.0, init.sigma2};
  p.tau2 = InverseGamma{2.0, init.tau2};
  return p;
}

std::pair<double, double> default_phi_bounds(const Dataset& data, const ModelSpec& spec) {
  double maxd = 0.0;
  const PointSet& u = data.locations;
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) maxd = std::max(maxd, distance(u[i], u[j]));
  if (!(maxd > 0.0)) throw InvalidParams("locations span no distance");
  // phi with effective range equal to maxd, via the correlation at phi = 1.
  CovarianceParams unit;
  unit.family = spec.family;
  unit.nu = spec.nu;
  unit.phi = 1.0;
  const double lo = effective_range(unit) / maxd;
  return {lo, 100.0 * lo};
}

Matrix predictive_draws(const ModelSpec& spec, const Dataset& data, const mcmc::PosteriorSamples& samples,
                        const PointSet& targets, const Matrix& x_targets, std::uint64_t seed) {
  if (samples.size() == 0) throw InsufficientDraws("no posterior draws to predict from");
  if (x_targets.cols() != data.p()) throw LengthMismatch("target regressors have wrong width");
  Rng rng(seed);
  std::vector<ParameterDraw> draws = samples.draws;
  for (ParameterDraw& d : draws) {
    d.params.family = spec.family;
    d.params.nu = spec.nu;
  }
  switch (spec.kind) {
    case ModelKind::FullGp:
      return fullgp::predict(data, draws, targets, x_targets, rng);
    case ModelKind::PP:
    case ModelKind::MPP:
    case ModelKind::Radial: {
      lowrank::LowRankSpec tmpl;
      tmpl.variant = variant_of(spec.kind);
      tmpl.knot_set = resolve_knots(spec, data);
      tmpl.params = draws.front().params;
      std::vector<Vector> z;
      z.reserve(draws.size());
      for (const ParameterDraw& d : draws) {
        lowrank::LowRankSpec s = tmpl;
        s.params = d.params;
        z.push_back(lowrank::recover_z(data, s, d.beta, rng));
      }
      return lowrank::predict_y(targets, x_targets, tmpl, draws, z, rng);
    }
    case ModelKind::NngpResponse:
      return nngp::nngp_predict(targets, x_targets, data, data.locations, draws, {}, spec.neighbors,
                                nngp::PredictMode::Response, rng);
    case ModelKind::NngpLatent: {
      if (samples.latent.size() != draws.size()) throw LengthMismatch("latent draws missing from the samples");
      const PointSet& ref = spec.reference.empty() ? data.locations : spec.reference;
      return nngp::nngp_predict(targets, x_targets, data, ref, draws, samples.latent, spec.neighbors,
                                nngp::PredictMode::Latent, rng);
    }
  }
  throw InvalidParams("unknown model");
}

}  // namespace geostat
