#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geostat/dataset.hpp"
#include "geostat/model_backend.hpp"
#include "geostat/priors.hpp"

namespace geostat::lowrank {

// pp: predictive process, b(l)ᵀ = K(l, U*) K(U*, U*)⁻¹, V_z = K(U*, U*).
// mpp: pp plus the heteroskedastic residual variance delta²(l) in the noise.
// radial: b(l)ᵀ = K(l, U*) L*⁻ᵀ with L* = chol K(U*, U*), V_z = I.
enum class Variant { PP, MPP, Radial };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class KnotPlacement { Grid, Subset, User };

struct KnotSet {
  PointSet knots;
  KnotPlacement placement = KnotPlacement::User;

  std::size_t size() const { return knots.size(); }
};

// Regular grid of cell centres over the bounding box of `points`; r must be a
// perfect d-th power.
KnotSet grid_knots(const PointSet& points, std::size_t r);

// The first r points of the max-min distance ordering of `points`.
KnotSet subset_knots(const PointSet& points, std::size_t r);

struct LowRankSpec {
  Variant variant = Variant::PP;
  KnotSet knot_set;
  CovarianceParams params;

  // At least one knot, no two knots closer than 1e-9, valid params.
  void validate() const;
};

Vector pp_basis(Location target, const LowRankSpec& spec);
double residual_var(Location target, const LowRankSpec& spec);
Matrix build_B(const PointSet& u, const LowRankSpec& spec);
Vector noise_diag(const PointSet& u, const LowRankSpec& spec);
Matrix latent_cov(const LowRankSpec& spec);

// Factored form of Sigma = B V Bᵀ + D (D diagonal) built with O(n r²) work:
// W = D^{-1/2} B, L = chol(V⁻¹ + WᵀW), H = L⁻¹ Wᵀ, T = chol(I - H Hᵀ), so that
// Sigma⁻¹ = D^{-1/2} (I - HᵀH) D^{-1/2}.
class LowRankSystem {
 public:
  LowRankSystem(const Matrix& b, const Matrix& vz, std::span<const double> d);

  std::size_t n() const { return inv_sqrt_d_.size(); }
  std::size_t r() const { return h_.rows(); }

  // ln N(e | 0, Sigma) without the constant.
  double log_density(std::span<const double> e) const;
  double logdet() const;
  Vector apply_inverse(std::span<const double> e) const;
  Matrix inverse() const;

  const Matrix& h() const { return h_; }
  const Matrix& w() const { return w_; }
  const Vector& inv_sqrt_d() const { return inv_sqrt_d_; }

  // D^{-1/2} v
  Vector whiten(std::span<const double> v) const;
  Matrix whiten(const Matrix& m) const;

 private:
  Vector inv_sqrt_d_;
  Matrix w_;
  Matrix h_;
  double sum_log_d_ = 0.0;
  double sum_log_t_ = 0.0;
};

LowRankSystem make_system(const PointSet& u, const LowRankSpec& spec);

// ln p(theta) + ln p(tau2) + ln N(y | X beta, B V Bᵀ + D).
double lowrank_log_target(const Dataset& data, std::span<const double> beta, const LowRankSpec& spec,
                          const PriorSpec& priors);

Vector gibbs_beta(const Dataset& data, const LowRankSpec& spec, const BetaPrior& prior, Rng& rng);

struct Gaussian {
  Vector mean;
  Matrix cov;
};

// p(z | y, Omega) = N(A a, A): `z_posterior` uses A = Q - Q (V + Q)⁻¹ Q with
// Q⁻¹ = Bᵀ D⁻¹ B, `z_posterior_direct` uses A = (V⁻¹ + Bᵀ D⁻¹ B)⁻¹.
Gaussian z_posterior(const Dataset& data, const LowRankSpec& spec, std::span<const double> beta);
Gaussian z_posterior_direct(const Dataset& data, const LowRankSpec& spec, std::span<const double> beta);

Vector recover_z(const Dataset& data, const LowRankSpec& spec, std::span<const double> beta, Rng& rng);

// Predictive draws at `targets` (rows = draws). `spec_template` supplies the
// variant, knots and covariance family; each draw supplies theta, tau2, beta.
Matrix predict_y(const PointSet& targets, const Matrix& x_targets, const LowRankSpec& spec_template,
                 std::span<const ParameterDraw> draws, std::span<const Vector> z_draws, Rng& rng);

class LowRankBackend : public ModelBackend {
 public:
  LowRankBackend(Dataset data, Variant variant, KnotSet knots, CovFamily family = CovFamily::Exponential,
                 double nu = 0.5);

  std::string tag() const override { return to_string(variant_); }
  std::size_t num_beta() const override { return data_.p(); }
  CovarianceParams base_params() const override;
  std::unique_ptr<ParameterState> factorize(const CovarianceParams& params) override;

  LowRankSpec spec(const CovarianceParams& params) const;
  const Dataset& data() const { return data_; }

 private:
  Dataset data_;
  Variant variant_;
  KnotSet knots_;
  CovFamily family_;
  double nu_;
};

}  // namespace geostat::lowrank
