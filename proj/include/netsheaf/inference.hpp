#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "netsheaf/dsem.hpp"
#include "netsheaf/sheaf_builder.hpp"

namespace netsheaf {

struct SolveOptions {
  int max_iters = 10000;
  double grad_tol = 1e-8;   // infinity norm of the squared-radius gradient
  double step_tol = 1e-10;  // infinity norm of the parameter step
  std::uint64_t seed = 17;
  int restarts = 4;  // total starts; the first is unperturbed
};

// The argmin problem: move every coordinate not pinned by `support` so the
// 2-norm consistency radius is minimal. With `ties` on, slots of one tie
// group share a single parameter, so copies stay exactly equal.
struct SolveRequest {
  Assignment support;  // pinned cells; absent cells are free
  // Per-cell coordinate masks refining `support`: where present, only the
  // flagged coordinates of that cell are pinned.
  std::map<int, std::vector<bool>> partial;
  bool ties = true;
  SolveOptions options;
};

struct SolveResult {
  Assignment assignment;
  double radius = 0.0;
  std::vector<PairResidual> residuals;
  int iterations = 0;
  bool converged = false;
  bool non_unique = false;  // flat minimizer directions detected
  int restarts_used = 1;
  int free_parameters = 0;
};

// Free coordinates packed into one parameter vector. Exposed so gradient
// checks and custom solves can reuse the exact residual assembly.
struct PackedProblem {
  int n_params = 0;
  std::vector<std::vector<int>> param_of;  // per cell, per coordinate; -1 = pinned
  std::vector<std::vector<bool>> pinned;
  Assignment base;  // pinned values; zero elsewhere
  Vec theta0;       // initialization per the documented rules
  bool all_affine = true;

  struct Block {
    int u = 0;
    int v = 0;
    RestrictionMap map;
    double alpha = 1.0;
    int row = 0;  // offset into the stacked residual vector
  };
  std::vector<Block> blocks;
  int residual_dim = 0;

  Assignment unpack(const Vec& theta) const;
  Vec residuals(const Vec& theta) const;
  Mat jacobian(const Vec& theta) const;  // of the stacked residual vector
  double objective(const Vec& theta) const;
  Vec gradient(const Vec& theta) const;  // analytic, of the squared radius
};

PackedProblem pack_problem(const BuiltSheaf& bs, const SolveRequest& req);

// Minimize the squared 2-radius over the free parameters. All-affine
// diagrams solve in one rank-revealing least-squares step (flat directions
// keep their initialization and set non_unique); anything else runs damped
// Gauss-Newton from `restarts` seeded starts.
SolveResult minimize(const BuiltSheaf& bs, const SolveRequest& req);

struct FitResult {
  SolveResult solve;
  std::map<std::string, double> coefficients;  // per path, keyed like "A->B@1"
  std::map<std::string, Vec> ar;               // per variable filter coefficients
  TimeseriesTable completed;                    // every series, gaps filled
};

// Fit an observation-exploded diagram to a table: support = the present
// observations, everything else (series values, path and filter
// coefficients) free. `pin` freezes named cells at given values, which is
// how imputation keeps coefficients fixed.
FitResult fit(const BuiltSheaf& bs, const TimeseriesTable& data, const SolveOptions& opts = {},
              bool ties = true, const std::map<std::string, Vec>& pin = {});

struct ResidualLine {
  std::string low;
  std::string high;
  std::string kind;      // observation | filter | crop | copy | update
  std::string variable;  // owner of the destination cell
  std::string time;      // label of the dominant coordinate, may be empty
  double contribution = 0.0;
  double share = 0.0;  // of the squared radius
};

std::vector<ResidualLine> residual_report(const BuiltSheaf& bs, const SolveResult& res,
                                          int top_k = 10);

}  // namespace netsheaf
