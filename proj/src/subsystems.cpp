#include "netsheaf/subsystems.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace netsheaf {

namespace {

// Tarjan strongly connected components, emitted in discovery order of their
// smallest member so vertex numbering stays stable.
std::vector<int> condense(int n, const std::vector<std::vector<int>>& adj, int& comps) {
  std::vector<int> idx(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<bool> on(n, false);
  int counter = 0;
  comps = 0;
  // Iterative DFS: (vertex, next-child cursor).
  for (int root = 0; root < n; ++root) {
    if (idx[root] >= 0) continue;
    std::vector<std::pair<int, size_t>> work{{root, 0}};
    while (!work.empty()) {
      auto& [v, cursor] = work.back();
      if (cursor == 0) {
        idx[v] = low[v] = counter++;
        stack.push_back(v);
        on[v] = true;
      }
      if (cursor < adj[v].size()) {
        int w = adj[v][cursor++];
        if (idx[w] < 0)
          work.push_back({w, 0});
        else if (on[w])
          low[v] = std::min(low[v], idx[w]);
      } else {
        if (low[v] == idx[v]) {
          while (true) {
            int w = stack.back();
            stack.pop_back();
            on[w] = false;
            comp[w] = comps;
            if (w == v) break;
          }
          ++comps;
        }
        int finished = v;
        work.pop_back();
        if (!work.empty()) low[work.back().first] = std::min(low[work.back().first], low[finished]);
      }
    }
  }
  // Renumber components by smallest member.
  std::vector<int> first(comps, n);
  for (int v = 0; v < n; ++v) first[comp[v]] = std::min(first[comp[v]], v);
  std::vector<int> order(comps);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return first[a] < first[b]; });
  std::vector<int> renum(comps);
  for (int i = 0; i < comps; ++i) renum[order[i]] = i;
  for (int v = 0; v < n; ++v) comp[v] = renum[comp[v]];
  return comp;
}

void check_table(const std::vector<int>& t, int range, const std::string& what) {
  for (int v : t)
    if (v < 0 || v >= range) throw Error(ErrorCode::InvalidArgument, what + " out of range");
}

std::vector<int> verify_subsystem(const FiniteDyn& f, const std::vector<int>& p) {
  auto chk = check_subsystem(f, p);
  if (!chk.ok)
    throw Error(ErrorCode::InvalidArgument, "projection does not define a subsystem");
  return chk.g;
}

}  // namespace

DsemDag DsemDag::from_spec(const DsemSpec& spec) {
  std::vector<std::string> vars;
  for (const auto& v : spec.variables) vars.push_back(v.name);
  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto& e : spec.edges) edges.push_back({e.from, e.to});
  return from_edges(vars, edges);
}

DsemDag DsemDag::from_edges(const std::vector<std::string>& vars,
                            const std::vector<std::pair<std::string, std::string>>& edges) {
  const int n = static_cast<int>(vars.size());
  std::map<std::string, int> idx;
  for (int i = 0; i < n; ++i) {
    if (idx.count(vars[i])) throw Error(ErrorCode::DuplicateVariable, vars[i]);
    idx[vars[i]] = i;
  }
  std::vector<std::vector<int>> adj(n);
  for (const auto& [a, b] : edges) {
    if (!idx.count(a) || !idx.count(b))
      throw Error(ErrorCode::UnknownVariable, a + "->" + b);
    adj[idx[a]].push_back(idx[b]);
  }

  int comps = 0;
  std::vector<int> comp = condense(n, adj, comps);

  DsemDag dag;
  dag.members.resize(comps);
  for (int v = 0; v < n; ++v) dag.members[comp[v]].push_back(vars[v]);
  for (int c = 0; c < comps; ++c) {
    std::string name;
    for (const auto& m : dag.members[c]) name += (name.empty() ? "" : "+") + m;
    dag.vertices.push_back(name);
    dag.condensed = dag.condensed || dag.members[c].size() > 1;
  }
  std::set<std::pair<int, int>> seen;
  for (int v = 0; v < n; ++v)
    for (int w : adj[v])
      if (comp[v] != comp[w] && seen.insert({comp[v], comp[w]}).second)
        dag.edges.push_back({comp[v], comp[w]});
  return dag;
}

int DsemDag::index_of(const std::string& vertex) const {
  for (size_t i = 0; i < vertices.size(); ++i)
    if (vertices[i] == vertex) return static_cast<int>(i);
  return -1;
}

std::vector<VertexSet> in_closed_sets(const DsemDag& dag, long cap) {
  const int n = static_cast<int>(dag.vertices.size());
  std::vector<std::vector<int>> in_nbrs(n);
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> out(n);
  for (auto [a, b] : dag.edges) {
    in_nbrs[b].push_back(a);
    out[a].push_back(b);
    ++indeg[b];
  }
  // Topological order; acyclic by construction.
  std::vector<int> topo, q;
  for (int v = 0; v < n; ++v)
    if (indeg[v] == 0) q.push_back(v);
  while (!q.empty()) {
    int v = q.front();
    q.erase(q.begin());
    topo.push_back(v);
    for (int w : out[v])
      if (--indeg[w] == 0) q.push_back(w);
  }

  std::vector<VertexSet> result;
  std::vector<bool> in(n, false);
  VertexSet cur;
  // Depth-first over include/exclude choices in topological order; a vertex
  // may join only when every in-neighbor already has.
  std::function<void(size_t)> rec = [&](size_t i) {
    if (i == topo.size()) {
      VertexSet s = cur;
      std::sort(s.begin(), s.end());
      result.push_back(std::move(s));
      if (static_cast<long>(result.size()) > cap)
        throw Error(ErrorCode::TooLarge, "in-closed family exceeds cap");
      return;
    }
    int v = topo[i];
    rec(i + 1);
    bool allowed = true;
    for (int w : in_nbrs[v]) allowed = allowed && in[w];
    if (allowed) {
      in[v] = true;
      cur.push_back(v);
      rec(i + 1);
      cur.pop_back();
      in[v] = false;
    }
  };
  rec(0);

  std::sort(result.begin(), result.end(), [&](const VertexSet& a, const VertexSet& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    std::vector<std::string> an, bn;
    for (int v : a) an.push_back(dag.vertices[v]);
    for (int v : b) bn.push_back(dag.vertices[v]);
    return an < bn;
  });
  return result;
}

std::string set_label(const DsemDag& dag, const VertexSet& s) {
  std::string out = "{";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + dag.vertices[s[i]];
  return out + "}";
}

std::string in_closed_lattice_dot(const DsemDag& dag, const std::vector<VertexSet>& sets) {
  auto contains = [](const VertexSet& big, const VertexSet& small) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
  };
  std::ostringstream os;
  os << "digraph subsystems {\n  rankdir=BT;\n";
  for (const auto& s : sets) os << "  \"" << set_label(dag, s) << "\";\n";
  for (size_t i = 0; i < sets.size(); ++i)
    for (size_t j = 0; j < sets.size(); ++j) {
      if (i == j || sets[i].size() >= sets[j].size() || !contains(sets[j], sets[i])) continue;
      bool cover = true;
      for (size_t k = 0; k < sets.size() && cover; ++k)
        cover = k == i || k == j || !(contains(sets[k], sets[i]) && contains(sets[j], sets[k]) &&
                                      sets[k].size() > sets[i].size() &&
                                      sets[k].size() < sets[j].size());
      if (cover)
        os << "  \"" << set_label(dag, sets[i]) << "\" -> \"" << set_label(dag, sets[j])
           << "\";\n";
    }
  os << "}\n";
  return os.str();
}

bool FiniteDyn::bijective() const {
  std::vector<bool> hit(n, false);
  for (int s : f) {
    if (s < 0 || s >= n || hit[s]) return false;
    hit[s] = true;
  }
  return true;
}

SubsystemCheck check_subsystem(const FiniteDyn& f, const std::vector<int>& p) {
  if (static_cast<int>(f.f.size()) != f.n || static_cast<int>(p.size()) != f.n)
    throw Error(ErrorCode::DimensionMismatch, "tables must cover the state set");
  check_table(f.f, f.n, "dynamics");
  int m = 0;
  for (int b : p) {
    if (b < 0) throw Error(ErrorCode::InvalidArgument, "projection out of range");
    m = std::max(m, b + 1);
  }
  std::vector<bool> hit(m, false);
  for (int b : p) hit[b] = true;
  for (int b = 0; b < m; ++b)
    if (!hit[b]) throw Error(ErrorCode::NotSurjective, "projection skips a state");

  SubsystemCheck out;
  out.g.assign(m, -1);
  std::vector<int> rep(m, -1);
  for (int s = 0; s < f.n; ++s) {
    int b = p[s];
    int gb = p[f.f[s]];
    if (out.g[b] < 0) {
      out.g[b] = gb;
      rep[b] = s;
    } else if (out.g[b] != gb) {
      out.ok = false;
      out.witness = {rep[b], s};
      out.g.clear();
      return out;
    }
  }
  out.ok = true;
  return out;
}

std::vector<std::vector<int>> invariant_sets(const FiniteDyn& f, int bound) {
  if (f.n > bound) throw Error(ErrorCode::TooLarge, "state set exceeds the brute-force bound");
  if (static_cast<int>(f.f.size()) != f.n)
    throw Error(ErrorCode::DimensionMismatch, "dynamics table wrong size");
  check_table(f.f, f.n, "dynamics");

  std::set<std::uint64_t> closures;
  for (int s = 0; s < f.n; ++s) {
    std::uint64_t mask = 0;
    int cur = s;
    while (!(mask >> cur & 1)) {
      mask |= 1ULL << cur;
      cur = f.f[cur];
    }
    closures.insert(mask);
  }
  std::vector<std::uint64_t> gen(closures.begin(), closures.end());
  std::set<std::uint64_t> all{0};
  for (std::uint64_t g : gen) {
    std::set<std::uint64_t> next = all;
    for (std::uint64_t m : all) next.insert(m | g);
    all = std::move(next);
  }

  std::vector<std::vector<int>> out;
  for (std::uint64_t m : all) {
    std::vector<int> s;
    for (int v = 0; v < f.n; ++v)
      if (m >> v & 1) s.push_back(v);
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  return out;
}

int InvariantCosheaf::costalk_of(const std::vector<int>& set) const {
  for (size_t i = 0; i < costalks.size(); ++i)
    if (costalks[i] == set) return static_cast<int>(i);
  return -1;
}

int InvariantCosheaf::glue(const std::vector<int>& cover) const {
  // Disjoint union with one node per (piece, state), then identify equal
  // states across pieces.
  std::vector<std::pair<int, int>> nodes;
  std::map<std::pair<int, int>, int> id;
  for (int c : cover)
    for (int s : costalks.at(c)) {
      id[{c, s}] = static_cast<int>(nodes.size());
      nodes.push_back({c, s});
    }
  std::vector<int> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (size_t a = 0; a < nodes.size(); ++a)
    for (size_t b = a + 1; b < nodes.size(); ++b)
      if (nodes[a].second == nodes[b].second) parent[find(static_cast<int>(a))] = find(static_cast<int>(b));
  std::set<int> classes;
  for (size_t a = 0; a < nodes.size(); ++a) classes.insert(find(static_cast<int>(a)));
  return static_cast<int>(classes.size());
}

bool InvariantCosheaf::glues_to(int target, const std::vector<int>& cover) const {
  std::set<int> u;
  for (int c : cover) u.insert(costalks.at(c).begin(), costalks.at(c).end());
  std::set<int> t(costalks.at(target).begin(), costalks.at(target).end());
  return u == t && glue(cover) == static_cast<int>(t.size());
}

bool InvariantCosheaf::endomorphism_commutes() const {
  // Both composites around an inclusion square send s to f(s); the square
  // closes exactly when each restriction stays inside its own costalk.
  for (auto [small, large] : inclusions)
    for (int s : costalks[small]) {
      int fs = dyn.f[s];
      if (!std::binary_search(costalks[small].begin(), costalks[small].end(), fs) ||
          !std::binary_search(costalks[large].begin(), costalks[large].end(), fs))
        return false;
    }
  return true;
}

InvariantCosheaf cosheaf_of_invariants(const FiniteDyn& f, int bound) {
  InvariantCosheaf out;
  out.dyn = f;
  out.costalks = invariant_sets(f, bound);
  if (out.costalks.size() > 1024)
    throw Error(ErrorCode::TooLarge, "too many invariant sets for the diagram");
  auto contains = [](const std::vector<int>& big, const std::vector<int>& small) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
  };
  for (size_t i = 0; i < out.costalks.size(); ++i)
    for (size_t j = 0; j < out.costalks.size(); ++j) {
      if (i == j || out.costalks[i].size() >= out.costalks[j].size() ||
          !contains(out.costalks[j], out.costalks[i]))
        continue;
      bool cover = true;
      for (size_t k = 0; k < out.costalks.size() && cover; ++k)
        cover = k == i || k == j ||
                !(out.costalks[k].size() > out.costalks[i].size() &&
                  out.costalks[k].size() < out.costalks[j].size() &&
                  contains(out.costalks[k], out.costalks[i]) &&
                  contains(out.costalks[j], out.costalks[k]));
      if (cover) out.inclusions.push_back({static_cast<int>(i), static_cast<int>(j)});
    }
  return out;
}

std::vector<int> pullback_invariant(const FiniteDyn& f, const std::vector<int>& p,
                                    const std::vector<int>& g, const std::vector<int>& v_set) {
  verify_subsystem(f, p);
  int m = static_cast<int>(g.size());
  check_table(g, m, "quotient dynamics");
  for (int s = 0; s < f.n; ++s)
    if (g[p[s]] != p[f.f[s]])
      throw Error(ErrorCode::InvalidArgument, "supplied quotient disagrees with the projection");
  std::vector<int> v_set_sorted = v_set;
  std::sort(v_set_sorted.begin(), v_set_sorted.end());
  for (int v : v_set_sorted) {
    if (v < 0 || v >= m) throw Error(ErrorCode::InvalidArgument, "set outside the quotient");
    if (!std::binary_search(v_set_sorted.begin(), v_set_sorted.end(), g[v]))
      throw Error(ErrorCode::NotInvariant, "set is not invariant downstairs");
  }
  std::vector<int> out;
  for (int s = 0; s < f.n; ++s)
    if (std::binary_search(v_set_sorted.begin(), v_set_sorted.end(), p[s])) out.push_back(s);
  for (int s : out)
    if (!std::binary_search(out.begin(), out.end(), f.f[s]))
      throw Error(ErrorCode::InvalidArgument, "pullback failed invariance");
  return out;
}

MeetResult subsystem_meet(const FiniteDyn& f, const std::vector<int>& p1,
                          const std::vector<int>& g1, const std::vector<int>& p2,
                          const std::vector<int>& g2) {
  std::vector<int> w1 = verify_subsystem(f, p1);
  std::vector<int> w2 = verify_subsystem(f, p2);
  if (w1 != g1 || w2 != g2)
    throw Error(ErrorCode::InvalidArgument, "supplied quotient dynamics disagree");
  const int b1 = static_cast<int>(g1.size());
  const int b2 = static_cast<int>(g2.size());

  std::vector<int> parent(b1 + b2);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int s = 0; s < f.n; ++s) parent[find(p1[s])] = find(b1 + p2[s]);

  MeetResult out;
  std::map<int, int> renum;
  for (int x = 0; x < b1 + b2; ++x) {
    int r = find(x);
    if (!renum.count(r)) renum[r] = out.size++;
  }
  out.q1.resize(b1);
  out.q2.resize(b2);
  for (int x = 0; x < b1; ++x) out.q1[x] = renum[find(x)];
  for (int y = 0; y < b2; ++y) out.q2[y] = renum[find(b1 + y)];
  out.p3.resize(f.n);
  for (int s = 0; s < f.n; ++s) out.p3[s] = out.q1[p1[s]];

  out.g3.assign(out.size, -1);
  auto put = [&](int c, int gc) {
    if (out.g3[c] < 0)
      out.g3[c] = gc;
    else if (out.g3[c] != gc)
      throw Error(ErrorCode::InvalidArgument, "pushout dynamics ill-defined");
  };
  for (int x = 0; x < b1; ++x) put(out.q1[x], out.q1[g1[x]]);
  for (int y = 0; y < b2; ++y) put(out.q2[y], out.q2[g2[y]]);

  for (int x = 0; x < b1; ++x)
    if (out.q1[g1[x]] != out.g3[out.q1[x]])
      throw Error(ErrorCode::InvalidArgument, "left square does not commute");
  for (int y = 0; y < b2; ++y)
    if (out.q2[g2[y]] != out.g3[out.q2[y]])
      throw Error(ErrorCode::InvalidArgument, "right square does not commute");
  for (int s = 0; s < f.n; ++s)
    if (out.p3[f.f[s]] != out.g3[out.p3[s]])
      throw Error(ErrorCode::InvalidArgument, "meet is not a subsystem");
  return out;
}

WindowedDynamics windowed_dynamics(const DsemSpec& spec) {
  spec.validate();
  if (spec.has_free_coefficient())
    throw Error(ErrorCode::FreeCoefficientPresent, "dynamics need numeric coefficients");
  WindowedDynamics wd;
  wd.h = spec.h;
  for (const auto& v : spec.variables) wd.variables.push_back(v.name);
  wd.window.assign(spec.var_count(), 1);
  for (const auto& e : spec.edges) {
    int from = spec.index_of(e.from);
    int to = spec.index_of(e.to);
    wd.window[from] = std::max(wd.window[from], e.lag);
    wd.terms.push_back({from, to, e.lag, e.coeff.value});
  }
  wd.order = spec.lag0_order();
  return wd;
}

int WindowedDynamics::subset_dim(const VertexSet& subset) const {
  int d = 0;
  for (int v : subset) d += window[v];
  return d;
}

Vec WindowedDynamics::step(const Vec& state, const VertexSet& subset) const {
  std::vector<int> pos(variables.size(), -1);
  int d = 0;
  for (int v : subset) {
    pos[v] = d;
    d += window[v];
  }
  if (state.size() != d) throw Error(ErrorCode::DimensionMismatch, "state length");
  for (const auto& t : terms)
    if (pos[t.to] >= 0 && pos[t.from] < 0)
      throw Error(ErrorCode::InvalidArgument, "subset is not closed under incoming edges");

  std::vector<double> fresh(variables.size(), 0.0);
  std::vector<bool> have(variables.size(), false);
  for (int v : order) {
    if (pos[v] < 0) continue;
    double acc = 0.0;
    for (const auto& t : terms) {
      if (t.to != v) continue;
      double src;
      if (t.lag == 0) {
        if (!have[t.from])
          throw Error(ErrorCode::CyclicAtLagZero, variables[v]);
        src = fresh[t.from];
      } else {
        src = state[pos[t.from] + window[t.from] - t.lag];
      }
      acc += t.gamma * src;
    }
    fresh[v] = h * acc;
    have[v] = true;
  }

  Vec out(d);
  for (int v : subset) {
    int w = window[v];
    for (int i = 0; i + 1 < w; ++i) out[pos[v] + i] = state[pos[v] + i + 1];
    out[pos[v] + w - 1] = fresh[v];
  }
  return out;
}

SubsystemSheaf subsystem_sheaf_from_dag(const DsemDag& dag, const DsemSpec* spec, long cap) {
  SubsystemSheaf out;
  out.dag = dag;
  out.sets = in_closed_sets(dag, cap);
  for (const auto& s : out.sets) out.labels.push_back(set_label(dag, s));

  std::vector<int> win(dag.vertices.size(), 1);
  if (spec) {
    if (dag.condensed)
      throw Error(ErrorCode::InvalidArgument,
                  "per-variable dynamics need an uncondensed graph");
    out.dynamics = windowed_dynamics(*spec);
    for (size_t v = 0; v < dag.vertices.size(); ++v) {
      int vi = spec->index_of(dag.members[v][0]);
      win[v] = out.dynamics->window[vi];
    }
  }

  // Larger sets sit lower; the order relation is reverse inclusion.
  std::vector<std::pair<int, int>> rel;
  auto contains = [](const VertexSet& big, const VertexSet& small) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
  };
  for (size_t i = 0; i < out.sets.size(); ++i)
    for (size_t j = 0; j < out.sets.size(); ++j)
      if (i != j && out.sets[i].size() > out.sets[j].size() && contains(out.sets[i], out.sets[j]))
        rel.push_back({static_cast<int>(i), static_cast<int>(j)});

  out.sheaf.poset = Poset::from_dag(out.labels, rel);
  out.sheaf.stalks.resize(out.sets.size());
  for (size_t i = 0; i < out.sets.size(); ++i) {
    int d = 0;
    for (int v : out.sets[i]) d += win[v];
    out.sheaf.stalks[i].dim = d;
    out.sheaf.stalks[i].coord_labels.clear();
    for (int v : out.sets[i])
      for (int k = 0; k < win[v]; ++k)
        out.sheaf.stalks[i].coord_labels.push_back(dag.vertices[v] + "[" + std::to_string(k) +
                                                   "]");
  }

  for (int u = 0; u < out.sheaf.poset.size(); ++u)
    for (int v : out.sheaf.poset.above[u]) {
      std::vector<int> pos(dag.vertices.size(), -1);
      int d = 0;
      for (int m : out.sets[u]) {
        pos[m] = d;
        d += win[m];
      }
      std::vector<int> select;
      for (int m : out.sets[v])
        for (int k = 0; k < win[m]; ++k) select.push_back(pos[m] + k);
      out.sheaf.add_map(u, v,
                        RestrictionMap::projection(select, d, out.labels[u] + ">" + out.labels[v]));
    }

  if (out.dynamics) {
    const WindowedDynamics& wd = *out.dynamics;
    const DsemSpec& sp = *spec;
    for (size_t i = 0; i < out.sets.size(); ++i) {
      VertexSet vars;
      for (int v : out.sets[i]) vars.push_back(sp.index_of(dag.members[v][0]));
      std::sort(vars.begin(), vars.end());
      out.update.push_back([wd, vars](const Vec& x) { return wd.step(x, vars); });
    }
  }
  return out;
}

double SubsystemSheaf::commuting_residual(int samples, std::uint64_t seed) const {
  if (update.empty()) return 0.0;
  NormalSampler rng(seed);
  double worst = 0.0;
  for (auto [u, v] : sheaf.active_pairs()) {
    const auto& maps = sheaf.maps_between(u, v);
    for (const auto& m : maps)
      for (int s = 0; s < samples; ++s) {
        Vec x(sheaf.stalks[u].dim);
        for (int i = 0; i < x.size(); ++i) x[i] = rng.gauss();
        Vec lhs = m.apply(update[u](x));
        Vec rhs = update[v](m.apply(x));
        if (lhs.size() > 0) worst = std::max(worst, (lhs - rhs).lpNorm<Eigen::Infinity>());
      }
  }
  return worst;
}

}  // namespace netsheaf
