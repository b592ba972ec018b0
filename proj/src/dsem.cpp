#include "netsheaf/dsem.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "optim.hpp"

namespace netsheaf {

int DsemSpec::index_of(const std::string& name) const {
  for (int j = 0; j < var_count(); ++j)
    if (variables[j].name == name) return j;
  throw Error(ErrorCode::UnknownVariable, name);
}

std::vector<int> DsemSpec::lag_grid() const {
  if (lags) {
    std::vector<int> g = *lags;
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
  }
  std::set<int> s{0};
  for (const auto& e : edges) s.insert(e.lag);
  return {s.begin(), s.end()};
}

std::vector<int> DsemSpec::max_inbound_lag() const {
  std::vector<int> d(var_count(), 0);
  for (const auto& e : edges) {
    int k = index_of(e.to);
    d[k] = std::max(d[k], e.lag);
  }
  return d;
}

bool DsemSpec::has_free_coefficient() const {
  return std::any_of(edges.begin(), edges.end(), [](const PathEdge& e) { return e.coeff.free; });
}

void DsemSpec::validate() const {
  std::set<std::string> seen;
  for (const auto& v : variables) {
    if (!seen.insert(v.name).second) throw Error(ErrorCode::DuplicateVariable, v.name);
    if (v.ar_order < 0) throw Error(ErrorCode::InvalidArgument, "negative ar_order for " + v.name);
  }
  auto grid = lag_grid();
  for (const auto& e : edges) {
    index_of(e.from);
    index_of(e.to);
    if (e.lag < 0) throw Error(ErrorCode::CausalityViolated, edge_key(e));
    if (lags && !std::binary_search(grid.begin(), grid.end(), e.lag))
      throw Error(ErrorCode::LagNotDeclared, edge_key(e));
  }
  lag0_order();
  for (const auto& [name, w] : weights) {
    index_of(name);
    if (!(w > 0)) throw Error(ErrorCode::InvalidArgument, "non-positive weight for " + name);
  }
}

std::vector<int> DsemSpec::lag0_order() const {
  int j = var_count();
  std::vector<std::vector<int>> out(j);
  std::vector<int> indeg(j, 0);
  for (const auto& e : edges) {
    if (e.lag != 0) continue;
    int a = index_of(e.from), b = index_of(e.to);
    if (a == b) throw Error(ErrorCode::CyclicAtLagZero, e.from);
    out[a].push_back(b);
    ++indeg[b];
  }
  std::vector<int> order;
  std::vector<int> queue;
  for (int v = 0; v < j; ++v)
    if (indeg[v] == 0) queue.push_back(v);
  while (!queue.empty()) {
    int v = queue.back();
    queue.pop_back();
    order.push_back(v);
    for (int w : out[v])
      if (--indeg[w] == 0) queue.push_back(w);
  }
  if (static_cast<int>(order.size()) != j)
    throw Error(ErrorCode::CyclicAtLagZero, "instantaneous edge cycle");
  return order;
}

std::string edge_key(const PathEdge& e) {
  return e.from + "->" + e.to + "@" + std::to_string(e.lag);
}

PathMatrix build_path_matrix(const DsemSpec& spec) {
  spec.validate();
  PathMatrix pm;
  pm.lags = spec.lag_grid();
  pm.J = spec.var_count();
  pm.T = static_cast<int>(pm.lags.size());
  int m = pm.J * pm.T;
  pm.P = Mat::Zero(m, m);

  auto lag_index = [&](double lag) -> int {
    for (int l = 0; l < pm.T; ++l)
      if (std::abs(pm.lags[l] - lag) < 1e-12) return l;
    return -1;
  };

  for (const auto& e : spec.edges) {
    if (e.coeff.free) throw Error(ErrorCode::FreeCoefficientPresent, edge_key(e));
    int li = lag_index(e.lag);
    if (li < 0) throw Error(ErrorCode::LagNotDeclared, edge_key(e));
    pm.P(pm.index(spec.index_of(e.to), 0), pm.index(spec.index_of(e.from), li)) +=
        spec.h * e.coeff.value;
  }
  // Unit entries tying each lag copy to the copy one step further back.
  for (int l = 0; l < pm.T; ++l) {
    int shifted = lag_index(pm.lags[l] + spec.h);
    if (shifted < 0) continue;
    for (int k = 0; k < pm.J; ++k) pm.P(pm.index(k, l), pm.index(k, shifted)) += 1.0;
  }
  return pm;
}

std::vector<double> extract_edge_coefficients(const PathMatrix& pm, const DsemSpec& spec) {
  auto lag_index = [&](double lag) -> int {
    for (int l = 0; l < pm.T; ++l)
      if (std::abs(pm.lags[l] - lag) < 1e-12) return l;
    return -1;
  };
  std::vector<double> out;
  for (const auto& e : spec.edges) {
    int row = pm.index(spec.index_of(e.to), 0);
    int col = pm.index(spec.index_of(e.from), lag_index(e.lag));
    double v = pm.P(row, col);
    // A self edge sitting exactly on a shift position shares its entry with the
    // unit term.
    if (e.from == e.to && lag_index(0.0) == 0 && std::abs(e.lag - spec.h) < 1e-12) v -= 1.0;
    out.push_back(v / spec.h);
  }
  return out;
}

GmrfModel assemble_precision(const PathMatrix& pm, const Vec& g_diag) {
  if (g_diag.size() != pm.J) throw Error(ErrorCode::BadDimension, "link diagonal size");
  for (int k = 0; k < pm.J; ++k)
    if (std::abs(g_diag[k]) < 1e-300) throw Error(ErrorCode::SingularLink, "zero link entry");
  int m = pm.J * pm.T;
  GmrfModel gm;
  gm.V = Mat::Zero(m, m);
  Mat vinv = Mat::Zero(m, m);
  for (int l = 0; l < pm.T; ++l)
    for (int k = 0; k < pm.J; ++k) {
      double gg = g_diag[k] * g_diag[k];
      gm.V(pm.index(k, l), pm.index(k, l)) = gg;
      vinv(pm.index(k, l), pm.index(k, l)) = 1.0 / gg;
    }
  Mat imp = Mat::Identity(m, m) - pm.P;
  gm.Q = imp.transpose() * vinv * imp;
  gm.Q = ((gm.Q + gm.Q.transpose()) / 2.0).eval();
  return gm;
}

double gmrf_log_density(const Mat& Q, const Vec& x) {
  if (Q.rows() != x.size()) throw Error(ErrorCode::BadDimension, "density argument size");
  Eigen::LLT<Mat> llt(Q);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::NotPositiveDefinite, "precision not positive definite");
  double logdet = 0.0;
  Mat l = llt.matrixL();
  for (int i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
  double quad = x.dot(Q * x);
  return 0.5 * (logdet - static_cast<double>(x.size()) * std::log(2.0 * M_PI) - quad);
}

TimeseriesTable simulate(const DsemSpec& spec, int t_steps, double noise_sd,
                         std::uint64_t seed, const std::map<std::string, double>& init) {
  spec.validate();
  if (spec.has_free_coefficient())
    throw Error(ErrorCode::FreeCoefficientPresent, "simulate needs numeric coefficients");
  auto d = spec.max_inbound_lag();
  int max_lag = 0;
  for (int v : d) max_lag = std::max(max_lag, v);
  if (t_steps <= max_lag) throw Error(ErrorCode::InvalidArgument, "t_steps must exceed max lag");

  int j = spec.var_count();
  std::vector<double> seed_value(j, 0.0);
  for (const auto& [name, v] : init) seed_value[spec.index_of(name)] = v;

  // Noise is drawn in (t, declaration order) so the table does not depend on
  // the evaluation order of instantaneous edges.
  NormalSampler rng(seed);
  Mat eps(t_steps, j);
  for (int t = 0; t < t_steps; ++t)
    for (int k = 0; k < j; ++k) eps(t, k) = noise_sd == 0.0 ? 0.0 : noise_sd * rng.gauss();

  std::vector<std::vector<std::pair<int, double>>> inbound(j);  // (src, gamma) with lag
  std::vector<std::vector<int>> inbound_lag(j);
  for (const auto& e : spec.edges) {
    int k = spec.index_of(e.to);
    inbound[k].push_back({spec.index_of(e.from), e.coeff.value});
    inbound_lag[k].push_back(e.lag);
  }
  auto order = spec.lag0_order();

  TimeseriesTable tab;
  tab.time.resize(t_steps);
  for (int t = 0; t < t_steps; ++t) tab.time[t] = t;
  for (const auto& v : spec.variables) tab.names.push_back(v.name);
  tab.values = Mat::Zero(t_steps, j);
  tab.present.setConstant(t_steps, j, true);

  for (int t = 0; t < t_steps; ++t) {
    for (int k : order) {
      if (t < d[k]) {
        tab.values(t, k) = seed_value[k];
        continue;
      }
      double acc = 0.0;
      for (size_t i = 0; i < inbound[k].size(); ++i) {
        auto [src, gamma] = inbound[k][i];
        acc += gamma * tab.values(t - inbound_lag[k][i], src);
      }
      tab.values(t, k) = spec.h * (acc + eps(t, k));
    }
  }
  return tab;
}

DsemFit fit_dsem_ml(const DsemSpec& spec, const TimeseriesTable& data) {
  spec.validate();
  std::vector<int> data_col(spec.var_count(), -1);
  for (int c = 0; c < data.cols(); ++c) data_col[spec.index_of(data.names[c])] = c;
  for (int k = 0; k < spec.var_count(); ++k)
    if (data_col[k] < 0) throw Error(ErrorCode::MissingData, "no column for " + spec.variables[k].name);

  auto d = spec.max_inbound_lag();
  int n = data.rows();
  int max_lag = *std::max_element(d.begin(), d.end());
  if (n < max_lag + 2) throw Error(ErrorCode::MissingData, "window shorter than max lag + 2");

  std::vector<int> free_pos;
  for (size_t i = 0; i < spec.edges.size(); ++i)
    if (spec.edges[i].coeff.free) free_pos.push_back(static_cast<int>(i));

  // One residual row per (target with inbound edges, determined step).
  int rows = 0;
  for (int k = 0; k < spec.var_count(); ++k) {
    bool has_in = false;
    for (const auto& e : spec.edges)
      if (spec.index_of(e.to) == k) has_in = true;
    if (has_in) rows += n - d[k];
  }
  Mat a = Mat::Zero(rows, free_pos.size());
  Vec b = Vec::Zero(rows);
  int r = 0;
  for (int k = 0; k < spec.var_count(); ++k) {
    std::vector<int> in_edges;
    for (size_t i = 0; i < spec.edges.size(); ++i)
      if (spec.index_of(spec.edges[i].to) == k) in_edges.push_back(static_cast<int>(i));
    if (in_edges.empty()) continue;
    for (int t = d[k]; t < n; ++t, ++r) {
      if (!data.present(t, data_col[k]))
        throw Error(ErrorCode::MissingData, spec.variables[k].name + " at row " + std::to_string(t));
      b[r] = data.values(t, data_col[k]);
      for (int ei : in_edges) {
        const auto& e = spec.edges[ei];
        int src = data_col[spec.index_of(e.from)];
        if (!data.present(t - e.lag, src))
          throw Error(ErrorCode::MissingData, e.from + " at row " + std::to_string(t - e.lag));
        double x = spec.h * data.values(t - e.lag, src);
        auto fp = std::find(free_pos.begin(), free_pos.end(), ei);
        if (fp == free_pos.end())
          b[r] -= e.coeff.value * x;
        else
          a(r, fp - free_pos.begin()) += x;
      }
    }
  }

  DsemFit fit;
  Vec sol = Vec::Zero(free_pos.size());
  if (!free_pos.empty()) {
    auto lsq = optim::linear_least_squares(a, b);
    sol = lsq.x;
    fit.degenerate = lsq.rank_deficient;
  }
  fit.rss = (a * sol - b).squaredNorm();
  for (size_t i = 0; i < spec.edges.size(); ++i) {
    const auto& e = spec.edges[i];
    auto fp = std::find(free_pos.begin(), free_pos.end(), static_cast<int>(i));
    double v = fp == free_pos.end() ? e.coeff.value : sol[fp - free_pos.begin()];
    fit.edge_values.push_back(v);
    fit.coefficients[edge_key(e)] = v;
  }
  return fit;
}

}  // namespace netsheaf
