#include "geostat/nngp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>
#include <utility>

#include "geostat/errors.hpp"

namespace geostat::nngp {

std::string to_string(Ordering o) {
  switch (o) {
    case Ordering::CoordSum:
      return "coord_sum";
    case Ordering::SortedX:
      return "sorted_x";
    case Ordering::SortedY:
      return "sorted_y";
    case Ordering::MaxMin:
      return "maxmin";
  }
  return "coord_sum";
}

Ordering ordering_from_string(const std::string& s) {
  if (s == "coord_sum") return Ordering::CoordSum;
  if (s == "sorted_x") return Ordering::SortedX;
  if (s == "sorted_y") return Ordering::SortedY;
  if (s == "maxmin") return Ordering::MaxMin;
  throw InvalidParams("unknown ordering '" + s + "'");
}

namespace {

double sq_distance(Location a, Location b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

std::vector<std::size_t> sort_by_key(const Vector& key) {
  std::vector<std::size_t> perm(key.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return perm;
}

std::vector<std::size_t> maxmin_order(const PointSet& u) {
  const std::size_t n = u.size();
  std::vector<std::size_t> perm;
  if (n == 0) return perm;
  perm.reserve(n);

  Vector centroid(u.dim(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < u.dim(); ++k) centroid[k] += u[i][k] / static_cast<double>(n);
  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = sq_distance(u[i], centroid);
    if (d < best) {
      best = d;
      first = i;
    }
  }

  std::vector<char> taken(n, 0);
  Vector mind(n, std::numeric_limits<double>::infinity());
  std::size_t cur = first;
  for (std::size_t step = 0; step < n; ++step) {
    perm.push_back(cur);
    taken[cur] = 1;
    std::size_t next = n;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      mind[i] = std::min(mind[i], sq_distance(u[i], u[cur]));
      if (mind[i] > far) {
        far = mind[i];
        next = i;
      }
    }
    cur = next;
  }
  return perm;
}

// The k nearest points of `pts[0..limit)` to `target`, by (squared distance,
// index), returned in ascending index order.
std::vector<std::size_t> nearest(Location target, const PointSet& pts, std::size_t limit, std::size_t k) {
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry> heap;  // max-heap on (dist, index)
  for (std::size_t j = 0; j < limit; ++j) {
    const Entry e{sq_distance(target, pts[j]), j};
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }
  std::vector<std::size_t> out;
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top().second);
    heap.pop();
  }
  std::sort(out.begin(), out.end());
  return out;
}

double kernel_with_nugget(const PointSet& pts, std::size_t i, std::size_t j, const CovarianceParams& p) {
  return kernel(pts[i], pts[j], p) + (i == j ? p.tau2 : 0.0);
}

// a = K(N,N)⁻¹ k and d = kii - kᵀa through a local Cholesky factor.
double local_solve(const Matrix& knn, std::span<const double> k, double kii, std::span<double> a) {
  const LowerTriangular l = cholesky(knn);
  const Vector sol = chol_solve(l, k);
  std::copy(sol.begin(), sol.end(), a.begin());
  return kii - dot(k, sol);
}

}  // namespace

std::vector<std::size_t> order_locations(const PointSet& u, Ordering strategy) {
  const std::size_t n = u.size();
  Vector key(n, 0.0);
  switch (strategy) {
    case Ordering::CoordSum:
      for (std::size_t i = 0; i < n; ++i)
        for (double c : u[i]) key[i] += c;
      return sort_by_key(key);
    case Ordering::SortedX:
      for (std::size_t i = 0; i < n; ++i) key[i] = u[i][0];
      return sort_by_key(key);
    case Ordering::SortedY:
      if (u.dim() < 2) throw InvalidParams("sorted_y needs at least two coordinates");
      for (std::size_t i = 0; i < n; ++i) key[i] = u[i][1];
      return sort_by_key(key);
    case Ordering::MaxMin:
      return maxmin_order(u);
  }
  return sort_by_key(key);
}

NeighborGraph build_neighbor_sets(const PointSet& ordered, std::size_t m) {
  if (m == 0) throw InvalidParams("neighbor count m must be at least 1");
  const std::size_t n = ordered.size();
  NeighborGraph g;
  g.m = m;
  g.permutation.resize(n);
  std::iota(g.permutation.begin(), g.permutation.end(), 0);
  g.offsets.assign(1, 0);
  g.offsets.reserve(n + 1);
  g.parent_index.reserve(n * std::min(m, n));
  for (std::size_t i = 0; i < n; ++i) {
    if (i <= m) {
      for (std::size_t j = 0; j < i; ++j) g.parent_index.push_back(j);
    } else {
      const std::vector<std::size_t> nb = nearest(ordered[i], ordered, i, m);
      g.parent_index.insert(g.parent_index.end(), nb.begin(), nb.end());
    }
    g.offsets.push_back(g.parent_index.size());
  }
  return g;
}

NeighborGraph build_graph(const PointSet& u, Ordering strategy, std::size_t m) {
  const std::vector<std::size_t> perm = order_locations(u, strategy);
  NeighborGraph g = build_neighbor_sets(u.permuted(perm), m);
  g.permutation = perm;
  return g;
}

std::string graph_csv(const NeighborGraph& graph) {
  std::ostringstream out;
  out << "child_index,parent_index\n";
  for (std::size_t i = 0; i < graph.size(); ++i)
    for (std::size_t p : graph.parents(i)) out << i << ',' << p << '\n';
  return out.str();
}

SparseFactors build_sparse_factors(const PointSet& ordered, const NeighborGraph& graph,
                                   const CovarianceParams& params) {
  params.validate();
  const std::size_t n = graph.size();
  if (ordered.size() != n) throw LengthMismatch("graph and locations differ in size");
  SparseFactors f;
  f.a.assign(graph.parent_index.size(), 0.0);
  f.d.resize(n);

  // While a node conditions on its whole history the local systems are the
  // leading blocks of K, so one growing Cholesky factor serves them all.
  std::vector<double> prefix;  // packed rows of the prefix factor
  bool use_prefix = true;
  Vector k;
  Vector v;

  for (std::size_t i = 0; i < n; ++i) {
    const auto pa = graph.parents(i);
    const std::size_t q = pa.size();
    const double kii = params.sigma2 + params.tau2;
    std::span<double> a(f.a.data() + graph.offsets[i], q);
    k.resize(q);
    for (std::size_t j = 0; j < q; ++j) k[j] = kernel(ordered[i], ordered[pa[j]], params);

    double d = kii;
    bool done = false;
    if (use_prefix && q == i) {
      // v = L⁻¹ k
      v.assign(k.begin(), k.end());
      const double* row = prefix.data();
      for (std::size_t r = 0; r < q; ++r) {
        double s = v[r];
        for (std::size_t c = 0; c < r; ++c) s -= row[c] * v[c];
        v[r] = s / row[r];
        row += r + 1;
      }
      d = kii - dot(v, v);
      if (d > 1e-12 * kii) {
        // a = L⁻ᵀ v, walking the packed rows backwards.
        std::copy(v.begin(), v.end(), a.begin());
        for (std::size_t r = q; r-- > 0;) {
          const double* lr = prefix.data() + r * (r + 1) / 2;
          a[r] /= lr[r];
          for (std::size_t c = 0; c < r; ++c) a[c] -= lr[c] * a[r];
        }
        prefix.insert(prefix.end(), v.begin(), v.end());
        prefix.push_back(std::sqrt(d));
        done = true;
      } else {
        use_prefix = false;
      }
    } else {
      use_prefix = false;
    }

    if (!done && q > 0) {
      Matrix knn(q, q);
      for (std::size_t r = 0; r < q; ++r)
        for (std::size_t c = 0; c <= r; ++c) {
          const double val = kernel_with_nugget(ordered, pa[r], pa[c], params);
          knn(r, c) = val;
          knn(c, r) = val;
        }
      d = local_solve(knn, k, kii, a);
    }
    if (!(d > 0.0))
      throw NotPositiveDefinite("conditional variance of node " + std::to_string(i) + " is not positive");
    f.d[i] = d;
  }
  return f;
}

double nngp_loglik(const Dataset& data, std::span<const double> beta, const NeighborGraph& graph,
                   const SparseFactors& factors) {
  if (graph.size() != data.n()) throw LengthMismatch("graph size differs from data size");
  const Vector e = data.residual(beta);
  double s = 0.0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto pa = graph.parents(i);
    const double* a = factors.a.data() + graph.offsets[i];
    double u = e[graph.permutation[i]];
    for (std::size_t j = 0; j < pa.size(); ++j) u -= a[j] * e[graph.permutation[pa[j]]];
    s += std::log(factors.d[i]) + u * u / factors.d[i];
  }
  return -0.5 * s;
}

double nngp_loglik(const Dataset& data, std::span<const double> beta, const CovarianceParams& params,
                   const NeighborGraph& graph) {
  const PointSet ordered = data.locations.permuted(graph.permutation);
  return nngp_loglik(data, beta, graph, build_sparse_factors(ordered, graph, params));
}

namespace {

constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

// Parameter-free part of an observation map: the coincident reference node,
// or the neighbor list otherwise.
struct ObservationLinks {
  std::vector<std::size_t> coincident;
  std::vector<std::vector<std::size_t>> neighbors;
};

ObservationLinks link_observations(const PointSet& obs, const PointSet& ref, std::size_t m) {
  ObservationLinks links;
  links.coincident.assign(obs.size(), kNoNode);
  links.neighbors.resize(obs.size());
  for (std::size_t o = 0; o < obs.size(); ++o) {
    std::vector<std::size_t> nb = nearest(obs[o], ref, ref.size(), std::min(m, ref.size()));
    for (std::size_t j : nb)
      if (distance(obs[o], ref[j]) < 1e-9) links.coincident[o] = j;
    if (links.coincident[o] == kNoNode) links.neighbors[o] = std::move(nb);
  }
  return links;
}

ObservationMap identity_map(std::size_t n, double tau2) {
  ObservationMap map;
  map.offsets.resize(n + 1);
  std::iota(map.offsets.begin(), map.offsets.end(), 0);
  map.node.resize(n);
  std::iota(map.node.begin(), map.node.end(), 0);
  map.weight.assign(n, 1.0);
  map.noise.assign(n, tau2);
  return map;
}

// Weights and variance of a target given a fixed neighbor list.
NeighborConditional condition_on(Location target, const PointSet& ref, std::vector<std::size_t> nb,
                                 const CovarianceParams& params, PredictMode mode) {
  const double nug = mode == PredictMode::Response ? params.tau2 : 0.0;
  const std::size_t q = nb.size();
  NeighborConditional out;
  out.weights.assign(q, 0.0);
  Matrix knn(q, q);
  Vector k(q);
  for (std::size_t r = 0; r < q; ++r) {
    k[r] = kernel(target, ref[nb[r]], params);
    for (std::size_t c = 0; c <= r; ++c) {
      const double val = kernel(ref[nb[r]], ref[nb[c]], params) + (r == c ? nug : 0.0);
      knn(r, c) = val;
      knn(c, r) = val;
    }
  }
  const double kii = params.sigma2 + nug;
  out.var = q == 0 ? kii : std::max(0.0, local_solve(knn, k, kii, out.weights));
  out.neighbors = std::move(nb);
  return out;
}

ObservationMap weight_observations(const ObservationLinks& links, const PointSet& ref,
                                   const PointSet& obs, const CovarianceParams& params) {
  ObservationMap map;
  const std::size_t n = links.coincident.size();
  map.noise.resize(n);
  for (std::size_t o = 0; o < n; ++o) {
    if (links.coincident[o] != kNoNode) {
      map.node.push_back(links.coincident[o]);
      map.weight.push_back(1.0);
      map.noise[o] = params.tau2;
    } else {
      const NeighborConditional c = condition_on(obs[o], ref, links.neighbors[o], params, PredictMode::Latent);
      map.node.insert(map.node.end(), c.neighbors.begin(), c.neighbors.end());
      map.weight.insert(map.weight.end(), c.weights.begin(), c.weights.end());
      map.noise[o] = params.tau2 + c.var;
    }
    map.offsets.push_back(map.node.size());
  }
  return map;
}

// Children of each node and observations attached to each node, plus the
// running residuals y - X beta - G w.
struct SweepContext {
  std::vector<std::size_t> child_offsets;
  std::vector<std::size_t> child;
  std::vector<double> child_a;
  std::vector<std::size_t> obs_offsets;
  std::vector<std::size_t> obs;
  std::vector<double> obs_w;
  Vector resid;

  SweepContext(const Dataset& data, std::span<const double> w, std::span<const double> beta,
               const NeighborGraph& graph, const SparseFactors& factors, const ObservationMap& map) {
    const std::size_t n = graph.size();
    child_offsets.assign(n + 1, 0);
    for (std::size_t p : graph.parent_index) ++child_offsets[p + 1];
    for (std::size_t i = 0; i < n; ++i) child_offsets[i + 1] += child_offsets[i];
    child.resize(graph.parent_index.size());
    child_a.resize(graph.parent_index.size());
    std::vector<std::size_t> fill(child_offsets.begin(), child_offsets.end() - 1);
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t k = graph.offsets[c]; k < graph.offsets[c + 1]; ++k) {
        const std::size_t slot = fill[graph.parent_index[k]]++;
        child[slot] = c;
        child_a[slot] = factors.a[k];
      }

    const std::size_t nobs = map.noise.size();
    obs_offsets.assign(n + 1, 0);
    for (std::size_t node : map.node) ++obs_offsets[node + 1];
    for (std::size_t i = 0; i < n; ++i) obs_offsets[i + 1] += obs_offsets[i];
    obs.resize(map.node.size());
    obs_w.resize(map.node.size());
    fill.assign(obs_offsets.begin(), obs_offsets.end() - 1);
    for (std::size_t o = 0; o < nobs; ++o)
      for (std::size_t k = map.offsets[o]; k < map.offsets[o + 1]; ++k) {
        const std::size_t slot = fill[map.node[k]]++;
        obs[slot] = o;
        obs_w[slot] = map.weight[k];
      }

    resid = data.residual(beta);
    for (std::size_t o = 0; o < nobs; ++o)
      for (std::size_t k = map.offsets[o]; k < map.offsets[o + 1]; ++k) resid[o] -= map.weight[k] * w[map.node[k]];
  }

  SiteConditional conditional(std::size_t i, std::span<const double> w, const NeighborGraph& graph,
                              const SparseFactors& factors, const ObservationMap& map) const {
    const auto pa = graph.parents(i);
    const double* a = factors.a.data() + graph.offsets[i];
    double mean_prior = 0.0;
    for (std::size_t j = 0; j < pa.size(); ++j) mean_prior += a[j] * w[pa[j]];
    double prec = 1.0 / factors.d[i];
    double lin = mean_prior / factors.d[i];

    for (std::size_t k = child_offsets[i]; k < child_offsets[i + 1]; ++k) {
      const std::size_t c = child[k];
      const double aci = child_a[k];
      const auto cpa = graph.parents(c);
      const double* ca = factors.a.data() + graph.offsets[c];
      double u = w[c];
      for (std::size_t j = 0; j < cpa.size(); ++j) u -= ca[j] * w[cpa[j]];
      // u with the w_i contribution removed
      const double u_rest = u + aci * w[i];
      prec += aci * aci / factors.d[c];
      lin += aci * u_rest / factors.d[c];
    }
    for (std::size_t k = obs_offsets[i]; k < obs_offsets[i + 1]; ++k) {
      const std::size_t o = obs[k];
      const double g = obs_w[k];
      prec += g * g / map.noise[o];
      lin += g * (resid[o] + g * w[i]) / map.noise[o];
    }
    return SiteConditional{lin / prec, 1.0 / prec};
  }
};

}  // namespace

ObservationMap map_observations(const PointSet& obs, const PointSet& ordered_ref, std::size_t m,
                                const CovarianceParams& params) {
  return weight_observations(link_observations(obs, ordered_ref, m), ordered_ref, obs, params);
}

SiteConditional site_conditional(std::size_t i, const Dataset& data, std::span<const double> w,
                                 std::span<const double> beta, const NeighborGraph& graph,
                                 const SparseFactors& factors, const ObservationMap& obs) {
  const SweepContext ctx(data, w, beta, graph, factors, obs);
  return ctx.conditional(i, w, graph, factors, obs);
}

void gibbs_w_latent(const Dataset& data, Vector& w, std::span<const double> beta, const NeighborGraph& graph,
                    const SparseFactors& factors, const ObservationMap& obs, Rng& rng) {
  if (w.size() != graph.size()) throw LengthMismatch("latent field size differs from graph size");
  SweepContext ctx(data, w, beta, graph, factors, obs);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const SiteConditional c = ctx.conditional(i, w, graph, factors, obs);
    const double next = c.mean + std::sqrt(c.var) * rng.normal();
    const double delta = next - w[i];
    for (std::size_t k = ctx.obs_offsets[i]; k < ctx.obs_offsets[i + 1]; ++k)
      ctx.resid[ctx.obs[k]] -= ctx.obs_w[k] * delta;
    w[i] = next;
  }
}

NeighborConditional neighbor_conditional(Location target, const PointSet& ref, std::size_t m,
                                         const CovarianceParams& params, PredictMode mode) {
  return condition_on(target, ref, nearest(target, ref, ref.size(), std::min(m, ref.size())), params, mode);
}

Matrix nngp_predict(const PointSet& targets, const Matrix& x_targets, const Dataset& data, const PointSet& ref,
                    std::span<const ParameterDraw> draws, std::span<const Vector> w_draws, std::size_t m,
                    PredictMode mode, Rng& rng) {
  if (draws.empty()) throw InsufficientDraws("nngp_predict: no posterior draws");
  if (x_targets.rows() != targets.size()) throw LengthMismatch("nngp_predict: target regressors have wrong shape");
  if (mode == PredictMode::Response && ref.size() != data.n())
    throw LengthMismatch("nngp_predict: response mode needs the observed locations as reference");
  if (mode == PredictMode::Latent && w_draws.size() != draws.size())
    throw LengthMismatch("nngp_predict: one latent draw per parameter draw needed");

  std::vector<std::vector<std::size_t>> nbs(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t)
    nbs[t] = nearest(targets[t], ref, ref.size(), std::min(m, ref.size()));

  Matrix out(draws.size(), targets.size());
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const CovarianceParams& p = draws[k].params;
    const Vector fixed = matvec(x_targets, draws[k].beta);
    Vector field;
    if (mode == PredictMode::Response) {
      field = data.residual(draws[k].beta);
    } else {
      field = w_draws[k];
      if (field.size() != ref.size()) throw LengthMismatch("nngp_predict: latent draw has wrong length");
    }
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const NeighborConditional c = condition_on(targets[t], ref, nbs[t], p, mode);
      double mean = fixed[t];
      for (std::size_t j = 0; j < c.neighbors.size(); ++j) mean += c.weights[j] * field[c.neighbors[j]];
      const double var = mode == PredictMode::Response ? c.var : c.var + p.tau2;
      out(k, t) = mean + std::sqrt(var) * rng.normal();
    }
  }
  return out;
}

KlPair kl_divergence(const PointSet& ordered, const NeighborGraph& graph, const CovarianceParams& params0,
                     const CovarianceParams& params1) {
  const std::size_t n = graph.size();
  const Matrix k0 = marginal_cov(ordered, params0);
  const LowerTriangular l0 = cholesky(k0);
  const double logdet0 = logdet_from_chol(l0);
  const SparseFactors f = build_sparse_factors(ordered, graph, params1);
  double logdet1 = 0.0;
  for (double d : f.d) logdet1 += std::log(d);

  // tr(K~⁻¹ K0) = Σ_i (row i of I - A) K0 (row i of I - A)ᵀ / d_i
  double tr10 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto pa = graph.parents(i);
    const double* a = f.a.data() + graph.offsets[i];
    double s = k0(i, i);
    for (std::size_t j = 0; j < pa.size(); ++j) {
      s -= 2.0 * a[j] * k0(i, pa[j]);
      for (std::size_t l = 0; l < pa.size(); ++l) s += a[j] * a[l] * k0(pa[j], pa[l]);
    }
    tr10 += s / f.d[i];
  }

  // tr(K0⁻¹ K~) = ||L0⁻¹ (I - A)⁻¹ D^{1/2}||_F²
  Matrix mroot(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = mroot.row(i);
    row[i] = std::sqrt(f.d[i]);
    const auto pa = graph.parents(i);
    const double* a = f.a.data() + graph.offsets[i];
    for (std::size_t j = 0; j < pa.size(); ++j) {
      const auto prow = mroot.row(pa[j]);
      for (std::size_t c = 0; c <= pa[j]; ++c) row[c] += a[j] * prow[c];
    }
  }
  const double fro = frobenius_norm(trsolve(l0, mroot));
  const double nn = static_cast<double>(n);
  return KlPair{0.5 * (tr10 - nn + logdet1 - logdet0), 0.5 * (fro * fro - nn + logdet0 - logdet1)};
}

namespace {

// Whitened response model: f = D^{-1/2} (I - A) y, F = D^{-1/2} (I - A) X.
class ResponseState : public ParameterState {
 public:
  ResponseState(const Dataset& data, const PointSet& ordered, const NeighborGraph& graph,
                const CovarianceParams& params) {
    const SparseFactors fac = build_sparse_factors(ordered, graph, params);
    const std::size_t n = data.n();
    const std::size_t p = data.p();
    f_.resize(n);
    ff_ = Matrix(n, p);
    half_logdet_ = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto pa = graph.parents(i);
      const double* a = fac.a.data() + graph.offsets[i];
      const std::size_t oi = graph.permutation[i];
      const double s = 1.0 / std::sqrt(fac.d[i]);
      double fy = data.y[oi];
      auto frow = ff_.row(i);
      const auto xi = data.x.row(oi);
      std::copy(xi.begin(), xi.end(), frow.begin());
      for (std::size_t j = 0; j < pa.size(); ++j) {
        const std::size_t oj = graph.permutation[pa[j]];
        fy -= a[j] * data.y[oj];
        const auto xj = data.x.row(oj);
        for (std::size_t c = 0; c < p; ++c) frow[c] -= a[j] * xj[c];
      }
      f_[i] = s * fy;
      for (double& v : frow) v *= s;
      half_logdet_ += 0.5 * std::log(fac.d[i]);
    }
  }

  double log_likelihood(std::span<const double> beta) const override {
    const Vector fb = matvec(ff_, beta);
    double q = 0.0;
    for (std::size_t i = 0; i < f_.size(); ++i) {
      const double r = f_[i] - fb[i];
      q += r * r;
    }
    return -half_logdet_ - 0.5 * q;
  }

  Vector draw_beta(const BetaPrior& prior, Rng& rng) const override {
    const std::size_t p = ff_.cols();
    Matrix precision = prior.precision(p);
    const Matrix g = gram(ff_);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) precision(i, j) += g(i, j);
    Vector linear = prior.precision_times_mean(p);
    const Vector ft = matvec_t(ff_, f_);
    for (std::size_t i = 0; i < p; ++i) linear[i] += ft[i];
    return draw_from_canonical(precision, linear, rng);
  }

 private:
  Vector f_;
  Matrix ff_;
  double half_logdet_ = 0.0;
};

class LatentState : public ParameterState {
 public:
  LatentState(const Dataset& data, const PointSet& ordered, const NeighborGraph& graph, ObservationMap map,
              const CovarianceParams& params, const Vector& w)
      : data_(data), graph_(graph), map_(std::move(map)), w_(w) {
    CovarianceParams prior = params;
    prior.tau2 = 0.0;
    factors_ = build_sparse_factors(ordered, graph, prior);
  }

  double log_likelihood(std::span<const double> beta) const override {
    const Vector e = data_.residual(beta);
    double s = 0.0;
    for (std::size_t o = 0; o < e.size(); ++o) {
      double r = e[o];
      for (std::size_t k = map_.offsets[o]; k < map_.offsets[o + 1]; ++k) r -= map_.weight[k] * w_[map_.node[k]];
      s += std::log(map_.noise[o]) + r * r / map_.noise[o];
    }
    for (std::size_t i = 0; i < graph_.size(); ++i) {
      const auto pa = graph_.parents(i);
      const double* a = factors_.a.data() + graph_.offsets[i];
      double u = w_[i];
      for (std::size_t j = 0; j < pa.size(); ++j) u -= a[j] * w_[pa[j]];
      s += std::log(factors_.d[i]) + u * u / factors_.d[i];
    }
    return -0.5 * s;
  }

  Vector draw_beta(const BetaPrior& prior, Rng& rng) const override {
    const std::size_t p = data_.p();
    Matrix precision = prior.precision(p);
    Vector linear = prior.precision_times_mean(p);
    for (std::size_t o = 0; o < data_.n(); ++o) {
      double r = data_.y[o];
      for (std::size_t k = map_.offsets[o]; k < map_.offsets[o + 1]; ++k) r -= map_.weight[k] * w_[map_.node[k]];
      const auto x = data_.x.row(o);
      const double iv = 1.0 / map_.noise[o];
      for (std::size_t i = 0; i < p; ++i) {
        linear[i] += x[i] * r * iv;
        for (std::size_t j = 0; j < p; ++j) precision(i, j) += x[i] * x[j] * iv;
      }
    }
    return draw_from_canonical(precision, linear, rng);
  }

  const SparseFactors& factors() const { return factors_; }
  const ObservationMap& map() const { return map_; }

 private:
  const Dataset& data_;
  const NeighborGraph& graph_;
  ObservationMap map_;
  const Vector& w_;
  SparseFactors factors_;
};

void check_family(CovFamily family) {
  if (family != CovFamily::Exponential && family != CovFamily::Matern)
    throw UnsupportedFamily("unsupported covariance family");
}

}  // namespace

ResponseBackend::ResponseBackend(Dataset data, std::size_t m, Ordering ordering, CovFamily family, double nu)
    : data_(std::move(data)), family_(family), nu_(nu) {
  check_family(family);
  data_.validate();
  graph_ = build_graph(data_.locations, ordering, m);
  ordered_ = data_.locations.permuted(graph_.permutation);
}

CovarianceParams ResponseBackend::base_params() const {
  CovarianceParams p;
  p.family = family_;
  p.nu = nu_;
  return p;
}

std::unique_ptr<ParameterState> ResponseBackend::factorize(const CovarianceParams& params) {
  return std::make_unique<ResponseState>(data_, ordered_, graph_, params);
}

LatentBackend::LatentBackend(Dataset data, std::size_t m, Ordering ordering, CovFamily family, double nu,
                             PointSet reference)
    : data_(std::move(data)), reference_(std::move(reference)), m_(m), family_(family), nu_(nu) {
  check_family(family);
  data_.validate();
  if (reference_.empty()) reference_ = data_.locations;
  if (reference_.dim() != data_.locations.dim()) throw LengthMismatch("reference set has wrong dimension");
  graph_ = build_graph(reference_, ordering, m);
  ordered_ = reference_.permuted(graph_.permutation);
  w_.assign(ordered_.size(), 0.0);
  if (reference_.coords() != data_.locations.coords()) {
    ObservationLinks links = link_observations(data_.locations, ordered_, m_);
    coincident_ = std::move(links.coincident);
    obs_neighbors_ = std::move(links.neighbors);
  }
}

CovarianceParams LatentBackend::base_params() const {
  CovarianceParams p;
  p.family = family_;
  p.nu = nu_;
  return p;
}

std::unique_ptr<ParameterState> LatentBackend::factorize(const CovarianceParams& params) {
  ObservationMap map;
  if (coincident_.empty()) {
    // Observation o sits on the ordered node whose permutation entry is o.
    map = identity_map(data_.n(), params.tau2);
    for (std::size_t i = 0; i < graph_.size(); ++i) map.node[graph_.permutation[i]] = i;
  } else {
    map = weight_observations(ObservationLinks{coincident_, obs_neighbors_}, ordered_, data_.locations, params);
  }
  return std::make_unique<LatentState>(data_, ordered_, graph_, std::move(map), params, w_);
}

void LatentBackend::update_latent(const ParameterState& state, std::span<const double> beta, Rng& rng) {
  const auto& s = dynamic_cast<const LatentState&>(state);
  gibbs_w_latent(data_, w_, beta, graph_, s.factors(), s.map(), rng);
}

Vector LatentBackend::latent() const {
  Vector out(w_.size());
  for (std::size_t i = 0; i < w_.size(); ++i) out[graph_.permutation[i]] = w_[i];
  return out;
}

}  // namespace geostat::nngp
