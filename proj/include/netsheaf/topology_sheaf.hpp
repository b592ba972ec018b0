#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netsheaf/common.hpp"

namespace netsheaf {

// Finite poset of cells. Built from arbitrary relations; strongly connected
// components are condensed into single cells first, so cyclic inputs are legal.
struct Poset {
  std::vector<std::string> labels;
  std::vector<std::vector<int>> above;  // Hasse covers: above[u] = cells covering u
  std::vector<std::vector<bool>> leq_;  // reflexive-transitive closure

  static Poset from_relations(const std::vector<std::string>& labels,
                              const std::vector<std::pair<int, int>>& le_pairs,
                              std::vector<int>* member_cell = nullptr);
  // Order-preserving variant for inputs known to be acyclic; throws on a cycle
  // so cell indices can be relied upon afterwards.
  static Poset from_dag(const std::vector<std::string>& labels,
                        const std::vector<std::pair<int, int>>& le_pairs);

  int size() const { return static_cast<int>(labels.size()); }
  bool leq(int u, int v) const { return leq_[u][v]; }
  bool comparable(int u, int v) const { return leq_[u][v] || leq_[v][u]; }
  std::vector<int> up_set(int u) const;
  // All strictly increasing Hasse chains from u to v (capped).
  std::vector<std::vector<int>> chains(int u, int v, int cap = 64) const;
};

struct Stalk {
  int dim = 0;
  double alpha = 1.0;  // pseudometric weight of this cell
  std::vector<std::string> coord_labels;
};

// A restriction map is a chain of primitive maps. Jacobians are exact for
// projection and affine links and use central differences for general links.
struct RestrictionMap {
  enum class Kind { Projection, Affine, General };
  struct Prim {
    Kind kind = Kind::Affine;
    std::vector<int> select;  // projection: source index per target coord
    Mat a;
    Vec c;
    std::function<Vec(const Vec&)> fn;
    int in_dim = 0;
    int out_dim = 0;

    Vec apply(const Vec& x) const;
    Mat jacobian(const Vec& x) const;
  };
  std::vector<Prim> chain;
  std::string label;

  static RestrictionMap projection(const std::vector<int>& select, int in_dim,
                                   const std::string& label = "");
  static RestrictionMap affine(const Mat& a, const Vec& c, const std::string& label = "");
  static RestrictionMap general(std::function<Vec(const Vec&)> fn, int in_dim, int out_dim,
                                const std::string& label = "");
  static RestrictionMap compose(const RestrictionMap& first, const RestrictionMap& then);

  int in_dim() const { return chain.front().in_dim; }
  int out_dim() const { return chain.back().out_dim; }
  Vec apply(const Vec& x) const;
  Mat jacobian(const Vec& x) const;
  bool is_affine() const;  // every link projection/affine => constant Jacobian
};

// Partial assignment of stalk values to cells.
struct Assignment {
  std::vector<Vec> values;
  std::vector<bool> has;

  static Assignment empty(int cells);
  void set(int cell, const Vec& v);
  bool total() const;
};

struct SheafDiagram {
  Poset poset;
  std::vector<Stalk> stalks;
  // Arrows on Hasse covers; a pair may carry several arrows (one per port).
  std::map<std::pair<int, int>, std::vector<RestrictionMap>> cover_maps;
  double p_norm = 2.0;
  bool hasse_only = false;  // restrict radius terms to covering pairs

  void add_map(int u, int v, RestrictionMap m);
  // Composite arrows for any comparable pair, composed along one canonical
  // chain (functoriality makes the choice immaterial); all branch
  // combinations through multi-arrow covers are kept.
  const std::vector<RestrictionMap>& maps_between(int u, int v) const;
  // Pairs contributing radius terms, honoring hasse_only.
  std::vector<std::pair<int, int>> active_pairs() const;

 private:
  mutable std::map<std::pair<int, int>, std::vector<RestrictionMap>> composed_cache_;
};

struct FunctorialityViolation {
  int u = 0, v = 0;
  double deviation = 0.0;
  std::string detail;
};

// Compares composites along all chain/branch combinations on sampled points.
std::vector<FunctorialityViolation> check_functoriality(const SheafDiagram& sheaf,
                                                        int samples = 8, double tol = 1e-9,
                                                        std::uint64_t seed = 17);

// Weighted p-radius over pairs whose cells are both assigned. Weight overrides
// are keyed by cell index.
double consistency_radius(const SheafDiagram& sheaf, const Assignment& a,
                          const std::map<int, double>& weight_override = {},
                          std::optional<double> p_override = std::nullopt);

struct PairResidual {
  int u = 0, v = 0;
  std::string label;
  double contribution = 0.0;  // p-th power term, pre-root
  Vec per_coord;              // per-coordinate p-th powers
};

// Per-pair contributions, descending; their sum equals radius^p.
std::vector<PairResidual> residual_breakdown(const SheafDiagram& sheaf, const Assignment& a,
                                             const std::map<int, double>& weight_override = {});

bool is_section(const SheafDiagram& sheaf, const Assignment& a, double tol = 1e-10);

// Valid one-sided Lipschitz bound for the radius as a function of the
// assignment, from the active Jacobians at the given point.
double radius_lipschitz_bound(const SheafDiagram& sheaf, const Assignment& a);

}  // namespace netsheaf
