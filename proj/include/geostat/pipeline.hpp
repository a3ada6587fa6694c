#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geostat/dataset.hpp"
#include "geostat/lowrank.hpp"
#include "geostat/mcmc.hpp"
#include "geostat/model_backend.hpp"
#include "geostat/nngp.hpp"

namespace geostat {

enum class ModelKind { FullGp, PP, MPP, Radial, NngpResponse, NngpLatent };

std::string to_string(ModelKind k);
ModelKind model_from_string(const std::string& s);
bool is_lowrank(ModelKind k);
bool is_nngp(ModelKind k);

// Everything needed to build a backend for a dataset.
struct ModelSpec {
  ModelKind kind = ModelKind::FullGp;
  CovFamily family = CovFamily::Exponential;
  double nu = 0.5;
  // low-rank: explicit knots, or `knot_count` placed by `placement`
  std::optional<PointSet> knots;
  std::size_t knot_count = 25;
  lowrank::KnotPlacement placement = lowrank::KnotPlacement::Grid;
  // nngp
  std::size_t neighbors = 10;
  nngp::Ordering ordering = nngp::Ordering::CoordSum;
  PointSet reference;  // empty = observed locations

  void validate() const;
};

// Knots for a low-rank spec on `data`.
lowrank::KnotSet resolve_knots(const ModelSpec& spec, const Dataset& data);

std::unique_ptr<ModelBackend> make_backend(const ModelSpec& spec, const Dataset& data);

// sigma2, tau2 ~ IG(2, b) with b the default initial value (prior mean equals
// the starting point), phi ~ U(phi_lo, phi_hi), flat beta.
PriorSpec weak_priors(const Dataset& data, double phi_lo, double phi_hi);

// phi bounds whose effective ranges span the largest inter-point distance
// down to a hundredth of it.
std::pair<double, double> default_phi_bounds(const Dataset& data, const ModelSpec& spec);

// Posterior predictive draws at the targets, one row per retained draw.
// Low-rank models first recover z for every draw; the latent NNGP uses the
// stored latent draws. Deterministic given `seed`.
Matrix predictive_draws(const ModelSpec& spec, const Dataset& data, const mcmc::PosteriorSamples& samples,
                        const PointSet& targets, const Matrix& x_targets, std::uint64_t seed);

}  // namespace geostat
