#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netsheaf/common.hpp"

namespace netsheaf {

enum class Transform { None, LogCenter };

struct VariableSpec {
  std::string name;
  int ar_order = 0;
  Transform transform = Transform::None;
};

// A path coefficient is either a number or left free for estimation.
struct Coefficient {
  bool free = false;
  double value = 0.0;
  static Coefficient fixed(double v) { return {false, v}; }
  static Coefficient free_slot() { return {true, 0.0}; }
};

struct PathEdge {
  std::string from;
  std::string to;
  int lag = 0;
  Coefficient coeff;
  int sign = 0;  // -1, 0 (unknown), +1: declared expectation, not enforced
};

struct DsemSpec {
  std::vector<VariableSpec> variables;
  std::vector<PathEdge> edges;
  double h = 1.0;
  double p_norm = 2.0;
  std::map<std::string, double> weights;       // per-variable stalk weight
  std::optional<std::vector<int>> lags;        // declared lag grid; derived if absent

  int index_of(const std::string& name) const;  // UnknownVariable if absent
  int var_count() const { return static_cast<int>(variables.size()); }
  // Sorted distinct lags: declared list, or {0} union {edge lags}.
  std::vector<int> lag_grid() const;
  // Max inbound edge lag per variable (0 when no inbound edges).
  std::vector<int> max_inbound_lag() const;
  bool has_free_coefficient() const;
  // Throws on inconsistencies: duplicate names, unknown endpoints, negative
  // lags, lags outside a declared grid, cyclic lag-0 subgraph.
  void validate() const;
  // Variable order in which a single time step can be filled left to right
  // (topological in the lag-0 subgraph). CyclicAtLagZero if impossible.
  std::vector<int> lag0_order() const;
};

// Path matrix over the (variable, lag) grid, lag-major layout:
// row/col index = lag_index * J + variable_index.
struct PathMatrix {
  Mat P;
  std::vector<int> lags;
  int J = 0;
  int T = 0;
  int index(int var, int lag_index) const { return lag_index * J + var; }
};

// P holds h-scaled path coefficients at ((to, lag 0), (from, lag)) plus unit
// shift entries at ((k, t_l), (k, t_l + h)) whenever both lags are declared.
PathMatrix build_path_matrix(const DsemSpec& spec);

// Inverse of build_path_matrix on the declared edges (subtracts shift entries
// that coincide with a self edge before unscaling by h).
std::vector<double> extract_edge_coefficients(const PathMatrix& pm, const DsemSpec& spec);

struct GmrfModel {
  Mat Q;   // precision, symmetric PSD
  Mat V;   // block-diagonal link covariance, I_T (x) G G^T
};

// g holds the diagonal of the J x J link matrix G. SingularLink on zeros.
GmrfModel assemble_precision(const PathMatrix& pm, const Vec& g_diag);

// Gaussian log density at x for precision Q. NotPositiveDefinite if Q fails
// a Cholesky factorization.
double gmrf_log_density(const Mat& Q, const Vec& x);

struct TimeseriesTable {
  std::vector<long> time;                       // integer time labels, ascending
  std::vector<std::string> names;
  Mat values;                                   // rows = time, cols = variables
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> present;

  int rows() const { return static_cast<int>(time.size()); }
  int cols() const { return static_cast<int>(names.size()); }
  bool complete() const { return present.all(); }
};

// Iterates x_k(t) = h * (sum_e gamma_e x_src(t - lag_e) + eps_kt) with
// eps ~ N(0, noise_sd^2); the first d_k steps (d_k = max inbound lag of k) are
// seeded with init_k. Deterministic for a fixed seed; no missing values.
TimeseriesTable simulate(const DsemSpec& spec, int t_steps, double noise_sd,
                         std::uint64_t seed, const std::map<std::string, double>& init = {});

struct DsemFit {
  std::map<std::string, double> coefficients;  // key: "from->to@lag"
  std::vector<double> edge_values;             // aligned with spec.edges
  double rss = 0.0;
  bool degenerate = false;                     // rank-deficient design
};

std::string edge_key(const PathEdge& e);

// Least-squares estimate of the free coefficients from the simulate recurrence
// residuals; equals the Gaussian ML point estimate under a unit-variance link.
DsemFit fit_dsem_ml(const DsemSpec& spec, const TimeseriesTable& data);

}  // namespace netsheaf
