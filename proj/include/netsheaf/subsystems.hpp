#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "netsheaf/dsem.hpp"
#include "netsheaf/topology_sheaf.hpp"

namespace netsheaf {

// Variable-level graph of a model, lags dropped. Cyclic inputs are legal:
// strongly connected groups are fused into one vertex, so the result is
// always acyclic.
struct DsemDag {
  std::vector<std::string> vertices;              // fused names join with '+'
  std::vector<std::vector<std::string>> members;  // original variables per vertex
  std::vector<std::pair<int, int>> edges;         // deduped, no self loops
  bool condensed = false;

  static DsemDag from_spec(const DsemSpec& spec);
  static DsemDag from_edges(const std::vector<std::string>& vars,
                            const std::vector<std::pair<std::string, std::string>>& edges);
  int index_of(const std::string& vertex) const;  // -1 if absent
};

using VertexSet = std::vector<int>;  // sorted vertex indices

// All vertex sets closed under incoming edges, including the empty and full
// sets, sorted by size then by member names. Throws TooLarge past `cap`.
std::vector<VertexSet> in_closed_sets(const DsemDag& dag, long cap = 1L << 16);

std::string set_label(const DsemDag& dag, const VertexSet& s);  // "{A,B}"

// Hasse diagram of the in-closed family under inclusion, DOT format.
std::string in_closed_lattice_dot(const DsemDag& dag, const std::vector<VertexSet>& sets);

// Table dynamics on an explicit finite state set 0..n-1.
struct FiniteDyn {
  int n = 0;
  std::vector<int> f;  // f[s], total
  bool bijective() const;
};

struct SubsystemCheck {
  bool ok = false;
  std::vector<int> g;  // induced table on the quotient when ok
  std::pair<int, int> witness{-1, -1};  // p-equal states whose images separate
};

// p maps states onto 0..max(p); g exists exactly when p-equal states stay
// p-equal after one step. Throws NotSurjective when p skips a value.
SubsystemCheck check_subsystem(const FiniteDyn& f, const std::vector<int>& p);

// Every V with f(V) contained in V, as unions of forward-orbit closures.
// Sorted by size then lexicographically. Throws TooLarge past `bound` states.
std::vector<std::vector<int>> invariant_sets(const FiniteDyn& f, int bound = 12);

// Costalks are the invariant sets themselves; extensions are inclusions.
struct InvariantCosheaf {
  FiniteDyn dyn;
  std::vector<std::vector<int>> costalks;
  std::vector<std::pair<int, int>> inclusions;  // (smaller, larger) Hasse pairs

  int costalk_of(const std::vector<int>& set) const;  // -1 if absent
  // Disjoint union of the cover's costalks modulo identification of equal
  // states, by explicit union-find; returns the glued cardinality.
  int glue(const std::vector<int>& cover) const;
  // The cover unions to the target and the glued set bijects with it.
  bool glues_to(int target, const std::vector<int>& cover) const;
  // f restricted to each costalk commutes with every inclusion, as tables.
  bool endomorphism_commutes() const;
};

InvariantCosheaf cosheaf_of_invariants(const FiniteDyn& f, int bound = 12);

// p^{-1}(V) for a verified subsystem (g, p) and a g-invariant V; the result
// is checked to be f-invariant before returning.
std::vector<int> pullback_invariant(const FiniteDyn& f, const std::vector<int>& p,
                                    const std::vector<int>& g, const std::vector<int>& v_set);

// Set pushout of two subsystem projections and the induced dynamics.
struct MeetResult {
  int size = 0;
  std::vector<int> p3;      // S -> S3
  std::vector<int> g3;      // S3 -> S3
  std::vector<int> q1, q2;  // B1 -> S3, B2 -> S3
};

MeetResult subsystem_meet(const FiniteDyn& f, const std::vector<int>& p1,
                          const std::vector<int>& g1, const std::vector<int>& p2,
                          const std::vector<int>& g2);

// Real-valued one-step dynamics with a sliding window per variable, newest
// value last; the Markov form every in-closed subset inherits.
struct WindowedDynamics {
  std::vector<std::string> variables;
  std::vector<int> window;
  double h = 1.0;
  struct Term {
    int from = 0;
    int to = 0;
    int lag = 0;
    double gamma = 0.0;
  };
  std::vector<Term> terms;
  std::vector<int> order;  // contemporaneous evaluation order

  int subset_dim(const VertexSet& subset) const;
  // One step restricted to an in-closed subset; the full system is the
  // subset of all variables. Throws InvalidArgument if not in-closed.
  Vec step(const Vec& state, const VertexSet& subset) const;
};

WindowedDynamics windowed_dynamics(const DsemSpec& spec);

// The subsystem diagram: one cell per in-closed set, larger sets lower,
// restriction maps dropping the complement's coordinates. With dynamics
// supplied, each cell carries its own update map.
struct SubsystemSheaf {
  SheafDiagram sheaf;
  std::vector<std::string> labels;
  std::vector<VertexSet> sets;
  DsemDag dag;
  std::optional<WindowedDynamics> dynamics;
  std::vector<std::function<Vec(const Vec&)>> update;  // per cell, empty without dynamics

  // Largest deviation of projection-after-update from update-after-projection
  // over sampled states and comparable pairs.
  double commuting_residual(int samples = 8, std::uint64_t seed = 17) const;
};

SubsystemSheaf subsystem_sheaf_from_dag(const DsemDag& dag, const DsemSpec* spec = nullptr,
                                        long cap = 1L << 16);

}  // namespace netsheaf
