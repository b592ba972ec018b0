#include "netsheaf/topology_sheaf.hpp"

#include <algorithm>
#include <cmath>

namespace netsheaf {

namespace {

// Tarjan SCC, iterative to keep stack depth bounded.
std::vector<int> scc_of(int n, const std::vector<std::vector<int>>& adj, int& count) {
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  int next = 0;
  count = 0;
  struct Frame {
    int v;
    size_t child;
  };
  for (int s = 0; s < n; ++s) {
    if (index[s] >= 0) continue;
    std::vector<Frame> call{{s, 0}};
    index[s] = low[s] = next++;
    stack.push_back(s);
    on_stack[s] = true;
    while (!call.empty()) {
      auto& fr = call.back();
      if (fr.child < adj[fr.v].size()) {
        int w = adj[fr.v][fr.child++];
        if (index[w] < 0) {
          index[w] = low[w] = next++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[fr.v] = std::min(low[fr.v], index[w]);
        }
      } else {
        if (low[fr.v] == index[fr.v]) {
          while (true) {
            int w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            comp[w] = count;
            if (w == fr.v) break;
          }
          ++count;
        }
        int v = fr.v;
        call.pop_back();
        if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      }
    }
  }
  return comp;
}

// Closure and Hasse covers from an adjacency list; with forbid_cycles the
// input must already be acyclic.
void closure_and_hasse(Poset& p, const std::vector<std::vector<int>>& adj, bool forbid_cycles) {
  int n = p.size();
  p.leq_.assign(n, std::vector<bool>(n, false));
  for (int c = 0; c < n; ++c) {
    std::vector<int> todo{c};
    while (!todo.empty()) {
      int x = todo.back();
      todo.pop_back();
      for (int y : adj[x]) {
        if (y == c && forbid_cycles)
          throw Error(ErrorCode::InvalidArgument, "cycle in cell relations: " + p.labels[c]);
        if (!p.leq_[c][y]) {
          p.leq_[c][y] = true;
          todo.push_back(y);
        }
      }
    }
    p.leq_[c][c] = true;
  }
  p.above.assign(n, {});
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      if (u == v || !p.leq_[u][v]) continue;
      bool cover = true;
      for (int w = 0; w < n && cover; ++w)
        if (w != u && w != v && p.leq_[u][w] && p.leq_[w][v]) cover = false;
      if (cover) p.above[u].push_back(v);
    }
}

}  // namespace

Poset Poset::from_relations(const std::vector<std::string>& labels,
                            const std::vector<std::pair<int, int>>& le_pairs,
                            std::vector<int>* member_cell) {
  int n = static_cast<int>(labels.size());
  std::vector<std::vector<int>> adj(n);
  for (auto [u, v] : le_pairs) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw Error(ErrorCode::InvalidArgument, "relation endpoint out of range");
    adj[u].push_back(v);
  }
  int ncells = 0;
  auto comp = scc_of(n, adj, ncells);

  Poset p;
  p.labels.assign(ncells, "");
  for (int v = 0; v < n; ++v) {
    auto& lbl = p.labels[comp[v]];
    lbl = lbl.empty() ? labels[v] : lbl + "|" + labels[v];
  }
  if (member_cell) *member_cell = comp;

  std::vector<std::vector<int>> cadj(ncells);
  for (int v = 0; v < n; ++v)
    for (int w : adj[v])
      if (comp[v] != comp[w]) cadj[comp[v]].push_back(comp[w]);
  closure_and_hasse(p, cadj, false);
  return p;
}

Poset Poset::from_dag(const std::vector<std::string>& labels,
                      const std::vector<std::pair<int, int>>& le_pairs) {
  int n = static_cast<int>(labels.size());
  std::vector<std::vector<int>> adj(n);
  for (auto [u, v] : le_pairs) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw Error(ErrorCode::InvalidArgument, "relation endpoint out of range");
    if (u != v) adj[u].push_back(v);
  }
  Poset p;
  p.labels = labels;
  closure_and_hasse(p, adj, true);
  return p;
}

std::vector<int> Poset::up_set(int u) const {
  std::vector<int> out;
  for (int v = 0; v < size(); ++v)
    if (leq_[u][v]) out.push_back(v);
  return out;
}

std::vector<std::vector<int>> Poset::chains(int u, int v, int cap) const {
  std::vector<std::vector<int>> out;
  std::vector<int> cur{u};
  std::function<void(int)> dfs = [&](int x) {
    if (static_cast<int>(out.size()) >= cap) return;
    if (x == v) {
      out.push_back(cur);
      return;
    }
    for (int w : above[x]) {
      if (!leq_[w][v] && w != v) continue;
      cur.push_back(w);
      dfs(w);
      cur.pop_back();
    }
  };
  if (leq_[u][v]) dfs(u);
  return out;
}

Vec RestrictionMap::Prim::apply(const Vec& x) const {
  if (x.size() != in_dim) throw Error(ErrorCode::BadDimension, "restriction input size");
  switch (kind) {
    case Kind::Projection: {
      Vec out(out_dim);
      for (int i = 0; i < out_dim; ++i) out[i] = x[select[i]];
      return out;
    }
    case Kind::Affine:
      return a * x + c;
    case Kind::General:
      return fn(x);
  }
  throw Error(ErrorCode::InvalidArgument, "bad map kind");
}

Mat RestrictionMap::Prim::jacobian(const Vec& x) const {
  switch (kind) {
    case Kind::Projection: {
      Mat j = Mat::Zero(out_dim, in_dim);
      for (int i = 0; i < out_dim; ++i) j(i, select[i]) = 1.0;
      return j;
    }
    case Kind::Affine:
      return a;
    case Kind::General: {
      Mat j(out_dim, in_dim);
      Vec xp = x;
      for (int k = 0; k < in_dim; ++k) {
        double h = 1e-5 * std::max(1.0, std::abs(x[k]));
        xp[k] = x[k] + h;
        Vec fplus = fn(xp);
        xp[k] = x[k] - h;
        Vec fminus = fn(xp);
        xp[k] = x[k];
        j.col(k) = (fplus - fminus) / (2.0 * h);
      }
      return j;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "bad map kind");
}

RestrictionMap RestrictionMap::projection(const std::vector<int>& select, int in_dim,
                                          const std::string& label) {
  RestrictionMap m;
  Prim p;
  p.kind = Kind::Projection;
  p.select = select;
  p.in_dim = in_dim;
  p.out_dim = static_cast<int>(select.size());
  for (int s : select)
    if (s < 0 || s >= in_dim) throw Error(ErrorCode::BadDimension, "projection index");
  m.chain.push_back(std::move(p));
  m.label = label;
  return m;
}

RestrictionMap RestrictionMap::affine(const Mat& a, const Vec& c, const std::string& label) {
  RestrictionMap m;
  Prim p;
  p.kind = Kind::Affine;
  p.a = a;
  p.c = c;
  p.in_dim = static_cast<int>(a.cols());
  p.out_dim = static_cast<int>(a.rows());
  if (c.size() != a.rows()) throw Error(ErrorCode::BadDimension, "affine offset size");
  m.chain.push_back(std::move(p));
  m.label = label;
  return m;
}

RestrictionMap RestrictionMap::general(std::function<Vec(const Vec&)> fn, int in_dim,
                                       int out_dim, const std::string& label) {
  RestrictionMap m;
  Prim p;
  p.kind = Kind::General;
  p.fn = std::move(fn);
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  m.chain.push_back(std::move(p));
  m.label = label;
  return m;
}

RestrictionMap RestrictionMap::compose(const RestrictionMap& first, const RestrictionMap& then) {
  if (first.out_dim() != then.in_dim())
    throw Error(ErrorCode::BadDimension, "composition dimension mismatch");
  RestrictionMap m;
  m.chain = first.chain;
  m.chain.insert(m.chain.end(), then.chain.begin(), then.chain.end());
  m.label = first.label.empty() ? then.label : first.label + ";" + then.label;
  return m;
}

Vec RestrictionMap::apply(const Vec& x) const {
  Vec v = x;
  for (const auto& p : chain) v = p.apply(v);
  return v;
}

Mat RestrictionMap::jacobian(const Vec& x) const {
  Vec v = x;
  Mat j = Mat::Identity(chain.front().in_dim, chain.front().in_dim);
  for (const auto& p : chain) {
    j = (p.jacobian(v) * j).eval();
    v = p.apply(v);
  }
  return j;
}

bool RestrictionMap::is_affine() const {
  return std::all_of(chain.begin(), chain.end(),
                     [](const Prim& p) { return p.kind != Kind::General; });
}

Assignment Assignment::empty(int cells) {
  Assignment a;
  a.values.resize(cells);
  a.has.assign(cells, false);
  return a;
}

void Assignment::set(int cell, const Vec& v) {
  values[cell] = v;
  has[cell] = true;
}

bool Assignment::total() const {
  return std::all_of(has.begin(), has.end(), [](bool b) { return b; });
}

void SheafDiagram::add_map(int u, int v, RestrictionMap m) {
  const auto& covers = poset.above[u];
  if (std::find(covers.begin(), covers.end(), v) == covers.end())
    throw Error(ErrorCode::InvalidArgument, "arrow must live on a covering pair");
  if (m.in_dim() != stalks[u].dim || m.out_dim() != stalks[v].dim)
    throw Error(ErrorCode::BadDimension, "arrow dims disagree with stalks");
  cover_maps[{u, v}].push_back(std::move(m));
  composed_cache_.clear();
}

const std::vector<RestrictionMap>& SheafDiagram::maps_between(int u, int v) const {
  auto key = std::make_pair(u, v);
  auto it = composed_cache_.find(key);
  if (it != composed_cache_.end()) return it->second;
  std::vector<RestrictionMap> out;
  if (auto hit = cover_maps.find(key); hit != cover_maps.end()) {
    out = hit->second;
  } else if (poset.leq(u, v) && u != v) {
    auto chains = poset.chains(u, v, 1);
    if (!chains.empty()) {
      const auto& chain = chains.front();
      std::vector<RestrictionMap> acc;
      for (size_t i = 0; i + 1 < chain.size(); ++i) {
        auto step = cover_maps.find({chain[i], chain[i + 1]});
        if (step == cover_maps.end()) {
          acc.clear();
          break;
        }
        if (i == 0) {
          acc = step->second;
          continue;
        }
        std::vector<RestrictionMap> next;
        for (const auto& left : acc)
          for (const auto& right : step->second)
            next.push_back(RestrictionMap::compose(left, right));
        acc = std::move(next);
      }
      out = std::move(acc);
    }
  }
  auto [pos, _] = composed_cache_.emplace(key, std::move(out));
  return pos->second;
}

std::vector<std::pair<int, int>> SheafDiagram::active_pairs() const {
  std::vector<std::pair<int, int>> out;
  int n = poset.size();
  for (int u = 0; u < n; ++u) {
    if (hasse_only) {
      for (int v : poset.above[u])
        if (!maps_between(u, v).empty()) out.push_back({u, v});
    } else {
      for (int v = 0; v < n; ++v)
        if (u != v && poset.leq(u, v) && !maps_between(u, v).empty()) out.push_back({u, v});
    }
  }
  return out;
}

std::vector<FunctorialityViolation> check_functoriality(const SheafDiagram& sheaf, int samples,
                                                        double tol, std::uint64_t seed) {
  std::vector<FunctorialityViolation> out;
  NormalSampler rng(seed);
  int n = sheaf.poset.size();
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v || !sheaf.poset.leq(u, v)) continue;
      auto chains = sheaf.poset.chains(u, v);
      std::vector<RestrictionMap> composites;
      for (const auto& chain : chains) {
        std::vector<RestrictionMap> acc;
        bool ok = true;
        for (size_t i = 0; i + 1 < chain.size() && ok; ++i) {
          auto step = sheaf.cover_maps.find({chain[i], chain[i + 1]});
          if (step == sheaf.cover_maps.end()) {
            ok = false;
            break;
          }
          if (i == 0) {
            acc = step->second;
            continue;
          }
          std::vector<RestrictionMap> next;
          for (const auto& left : acc)
            for (const auto& right : step->second)
              next.push_back(RestrictionMap::compose(left, right));
          acc = std::move(next);
        }
        if (ok) composites.insert(composites.end(), acc.begin(), acc.end());
      }
      if (composites.size() < 2) continue;
      // Multiple arrows per cover (one per port) are legitimately distinct, so
      // only routes built entirely from single-arrow covers are comparable.
      bool branching = false;
      for (const auto& chain : chains)
        for (size_t i = 0; i + 1 < chain.size(); ++i) {
          auto step = sheaf.cover_maps.find({chain[i], chain[i + 1]});
          if (step != sheaf.cover_maps.end() && step->second.size() > 1) branching = true;
        }
      if (branching) continue;
      double worst = 0.0;
      for (int s = 0; s < samples; ++s) {
        Vec x(sheaf.stalks[u].dim);
        for (int k = 0; k < x.size(); ++k) x[k] = rng.gauss();
        Vec ref = composites.front().apply(x);
        for (size_t m = 1; m < composites.size(); ++m)
          worst = std::max(worst, (composites[m].apply(x) - ref).lpNorm<Eigen::Infinity>());
      }
      if (worst > tol)
        out.push_back({u, v, worst,
                       sheaf.poset.labels[u] + " => " + sheaf.poset.labels[v]});
    }
  }
  return out;
}

namespace {

double term_power(const Assignment& a, int u, int v, const RestrictionMap& m, double alpha,
                  double p, Vec* per_coord) {
  Vec diff = m.apply(a.values[u]) - a.values[v];
  double sum = 0.0;
  if (per_coord) per_coord->resize(diff.size());
  for (int i = 0; i < diff.size(); ++i) {
    double t = std::pow(std::abs(alpha * diff[i]), p);
    sum += t;
    if (per_coord) (*per_coord)[i] = t;
  }
  return sum;
}

}  // namespace

double consistency_radius(const SheafDiagram& sheaf, const Assignment& a,
                          const std::map<int, double>& weight_override,
                          std::optional<double> p_override) {
  double p = p_override.value_or(sheaf.p_norm);
  if (p < 1.0) throw Error(ErrorCode::InvalidArgument, "p must be >= 1");
  double acc = 0.0;
  for (auto [u, v] : sheaf.active_pairs()) {
    if (!a.has[u] || !a.has[v]) continue;
    double alpha = sheaf.stalks[v].alpha;
    if (auto it = weight_override.find(v); it != weight_override.end()) alpha = it->second;
    for (const auto& m : sheaf.maps_between(u, v))
      acc += term_power(a, u, v, m, alpha, p, nullptr);
  }
  return std::pow(acc, 1.0 / p);
}

std::vector<PairResidual> residual_breakdown(const SheafDiagram& sheaf, const Assignment& a,
                                             const std::map<int, double>& weight_override) {
  std::vector<PairResidual> out;
  double p = sheaf.p_norm;
  for (auto [u, v] : sheaf.active_pairs()) {
    if (!a.has[u] || !a.has[v]) continue;
    double alpha = sheaf.stalks[v].alpha;
    if (auto it = weight_override.find(v); it != weight_override.end()) alpha = it->second;
    for (const auto& m : sheaf.maps_between(u, v)) {
      PairResidual pr;
      pr.u = u;
      pr.v = v;
      pr.label = sheaf.poset.labels[u] + " -> " + sheaf.poset.labels[v] +
                 (m.label.empty() ? "" : " [" + m.label + "]");
      pr.contribution = term_power(a, u, v, m, alpha, p, &pr.per_coord);
      out.push_back(std::move(pr));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const PairResidual& x, const PairResidual& y) {
              return x.contribution > y.contribution;
            });
  return out;
}

bool is_section(const SheafDiagram& sheaf, const Assignment& a, double tol) {
  if (!a.total()) return false;
  return consistency_radius(sheaf, a) <= tol;
}

double radius_lipschitz_bound(const SheafDiagram& sheaf, const Assignment& a) {
  // radius = || stacked alpha*(R(a_u) - a_v) ||_2; a bound on the stacked
  // Jacobian's 2-norm bounds the change per unit assignment perturbation.
  double acc = 0.0;
  for (auto [u, v] : sheaf.active_pairs()) {
    if (!a.has[u] || !a.has[v]) continue;
    double alpha = sheaf.stalks[v].alpha;
    for (const auto& m : sheaf.maps_between(u, v)) {
      double jn = m.jacobian(a.values[u]).norm();  // Frobenius >= 2-norm
      double row = alpha * (1.0 + jn);
      acc += row * row;
    }
  }
  return std::sqrt(acc);
}

}  // namespace netsheaf
