#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geostat/dataset.hpp"
#include "geostat/model_backend.hpp"

namespace geostat::nngp {

enum class Ordering { CoordSum, SortedX, SortedY, MaxMin };

std::string to_string(Ordering o);
Ordering ordering_from_string(const std::string& s);

// Returns perm with perm[k] = original index of the k-th ordered point. Ties
// are broken by original index. maxmin starts at the point nearest the
// centroid and then repeatedly takes the point farthest from those chosen.
std::vector<std::size_t> order_locations(const PointSet& u, Ordering strategy);

// Directed acyclic neighbor graph over an ordered reference set, stored CSR.
// Parent lists hold ordered indices, ascending, all smaller than the child.
struct NeighborGraph {
  std::vector<std::size_t> permutation;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> parent_index;
  std::size_t m = 0;

  std::size_t size() const { return offsets.size() - 1; }
  std::span<const std::size_t> parents(std::size_t i) const {
    return {parent_index.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
};

// Neighbor sets for points already in their topological order: the m
// nearest predecessors, distance ties going to the smaller index.
NeighborGraph build_neighbor_sets(const PointSet& ordered, std::size_t m);

// Orders `u` by `strategy` and builds the neighbor sets on the result.
NeighborGraph build_graph(const PointSet& u, Ordering strategy, std::size_t m);

// Rows "child_index,parent_index" in ordered indices.
std::string graph_csv(const NeighborGraph& graph);

// Coefficients a (aligned with graph.parent_index) and conditional variances
// d of K~⁻¹ = (I - A)ᵀ D⁻¹ (I - A). K = sigma2 R + tau2 I with the tau2 taken
// from `params`; pass tau2 = 0 for the latent process prior.
struct SparseFactors {
  std::vector<double> a;
  Vector d;
};

SparseFactors build_sparse_factors(const PointSet& ordered, const NeighborGraph& graph,
                                   const CovarianceParams& params);

// Response-model log-likelihood with the reference set equal to the observed
// locations; `graph` must have been built on data.locations (its permutation
// maps ordered nodes to data rows). Constants dropped as in dense_loglik.
double nngp_loglik(const Dataset& data, std::span<const double> beta, const CovarianceParams& params,
                   const NeighborGraph& graph);

// Same, reusing factors already built for `graph`.
double nngp_loglik(const Dataset& data, std::span<const double> beta, const NeighborGraph& graph,
                   const SparseFactors& factors);

// Links observations to the latent reference nodes. Each observation is
// y_i = x_iᵀ beta + g_iᵀ w + eta_i with g_i either a unit vector (location
// coincides with a reference point) or the NNGP interpolation weights over the
// observation's m nearest reference points, and eta_i ~ N(0, v_i) with
// v_i = tau2 + delta²(location).
struct ObservationMap {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> node;
  std::vector<double> weight;
  Vector noise;
};

// `ordered_ref` is the reference set in topological order.
ObservationMap map_observations(const PointSet& obs, const PointSet& ordered_ref, std::size_t m,
                                const CovarianceParams& params);

// One sequential sweep of single-site updates of the latent field w (ordered
// reference indexing) from its exact full conditional under the sparse prior
// precision and the Gaussian likelihood.
void gibbs_w_latent(const Dataset& data, Vector& w, std::span<const double> beta, const NeighborGraph& graph,
                    const SparseFactors& factors, const ObservationMap& obs, Rng& rng);

// Full conditional moments of w_i given everything else (used by the sweep).
struct SiteConditional {
  double mean;
  double var;
};
SiteConditional site_conditional(std::size_t i, const Dataset& data, std::span<const double> w,
                                 std::span<const double> beta, const NeighborGraph& graph,
                                 const SparseFactors& factors, const ObservationMap& obs);

enum class PredictMode { Response, Latent };

// Conditional moments of a new location given its m nearest reference points:
// weights a = K(N,N)⁻¹ K(N,l) and variance K(l,l) - K(l,N) a. For Response,
// K includes the nugget on the diagonal; for Latent it does not.
struct NeighborConditional {
  std::vector<std::size_t> neighbors;
  Vector weights;
  double var;
};
NeighborConditional neighbor_conditional(Location target, const PointSet& ref, std::size_t m,
                                         const CovarianceParams& params, PredictMode mode);

// Predictive draws of y at the targets (rows = draws). Response mode
// conditions on the observed residuals y - X beta at the reference (= observed)
// locations; Latent mode conditions on the per-draw latent field
// `w_draws[k]` indexed like `ref` and then adds the nugget.
Matrix nngp_predict(const PointSet& targets, const Matrix& x_targets, const Dataset& data, const PointSet& ref,
                    std::span<const ParameterDraw> draws, std::span<const Vector> w_draws, std::size_t m,
                    PredictMode mode, Rng& rng);

// Gaussian KL divergences between the dense covariance K0 (params0) and the
// NNGP covariance K~ (params1, same ordered points and graph), both with the
// nugget included and zero means.
struct KlPair {
  double dense_to_nngp;  // KL(N(0, K0) || N(0, K~))
  double nngp_to_dense;  // KL(N(0, K~) || N(0, K0))
};
KlPair kl_divergence(const PointSet& ordered, const NeighborGraph& graph, const CovarianceParams& params0,
                     const CovarianceParams& params1);

// Response model: y ~ N(X beta, K~) with K = sigma2 R + tau2 I.
class ResponseBackend : public ModelBackend {
 public:
  ResponseBackend(Dataset data, std::size_t m, Ordering ordering, CovFamily family = CovFamily::Exponential,
                  double nu = 0.5);

  std::string tag() const override { return "nngp_response"; }
  std::size_t num_beta() const override { return data_.p(); }
  CovarianceParams base_params() const override;
  std::unique_ptr<ParameterState> factorize(const CovarianceParams& params) override;

  const NeighborGraph& graph() const { return graph_; }
  const PointSet& ordered_locations() const { return ordered_; }
  const Dataset& data() const { return data_; }

 private:
  Dataset data_;
  NeighborGraph graph_;
  PointSet ordered_;
  CovFamily family_;
  double nu_;
};

// Latent model: w ~ NNGP(0, sigma2 R) over the reference set, y | w ~
// N(X beta + G w, diag v). The reference set defaults to the observed
// locations.
class LatentBackend : public ModelBackend {
 public:
  LatentBackend(Dataset data, std::size_t m, Ordering ordering, CovFamily family = CovFamily::Exponential,
                double nu = 0.5, PointSet reference = PointSet());

  std::string tag() const override { return "nngp_latent"; }
  std::size_t num_beta() const override { return data_.p(); }
  CovarianceParams base_params() const override;
  std::unique_ptr<ParameterState> factorize(const CovarianceParams& params) override;

  bool has_latent() const override { return true; }
  void update_latent(const ParameterState& state, std::span<const double> beta, Rng& rng) override;
  // w in the caller's reference order (not the topological order).
  Vector latent() const override;

  const NeighborGraph& graph() const { return graph_; }
  const PointSet& reference() const { return reference_; }

 private:
  Dataset data_;
  PointSet reference_;
  NeighborGraph graph_;
  PointSet ordered_;
  std::size_t m_;
  CovFamily family_;
  double nu_;
  Vector w_;  // topological order
  // Filled only when the reference set differs from the observed locations.
  std::vector<std::size_t> coincident_;
  std::vector<std::vector<std::size_t>> obs_neighbors_;
};

}  // namespace geostat::nngp
