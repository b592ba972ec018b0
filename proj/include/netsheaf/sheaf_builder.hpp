#pragma once

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "netsheaf/netlist.hpp"
#include "netsheaf/topology_sheaf.hpp"

namespace netsheaf {

// Coordinate slots declared equal across cells. Enforced exactly during
// inference by sharing parameters, not by residual terms.
struct TieGroup {
  struct Slot {
    int cell = 0;
    int offset = 0;
    int len = 0;
  };
  std::vector<Slot> slots;
};

struct CellInfo {
  enum class Kind { VarNet, CoefNet, ArNet, LagvarNet, PredNet, Part, CropPart, LcfPart, Obs };
  Kind kind = Kind::VarNet;
  std::string var;  // owning variable; the edge key for coefficient nets
  int time = -1;    // observation cells only
};

// Sheaf diagram plus the bookkeeping inference needs: tie groups, cell
// classification, label lookup. `labels`/`stalk_list`/`arrows` retain the
// construction so the diagram can be rebuilt after structural edits.
struct BuiltSheaf {
  SheafDiagram sheaf;
  std::vector<TieGroup> ties;
  std::vector<CellInfo> info;
  int series_len = 0;
  std::vector<std::string> time_labels;  // one per time index, for reports

  std::vector<std::string> labels;
  std::vector<Stalk> stalk_list;
  std::vector<std::tuple<int, int, RestrictionMap>> arrows;  // low cell -> high cell

  int cell(const std::string& label) const;  // -1 if absent
  int require_cell(const std::string& label) const;
  void finalize();  // rebuild `sheaf` from labels/stalks/arrows
};

// Cells are named "net:<name>" and "part:<name>"; observation cells added by
// explode_observations are named "obs:<net>@<time label>".
BuiltSheaf sheaf_from_netlist(const Netlist& nl,
                              const std::map<std::string, double>& weights = {});

// One scalar cell per time coordinate above each listed series cell, maps
// being coordinate selections. Partial assignments on these cells carry
// per-observation data, so missing values just shrink the support.
void explode_observations(BuiltSheaf& bs, const std::vector<std::string>& cells);
void explode_observations(BuiltSheaf& bs);  // every plain variable net

struct ArPartSpec {
  std::string variable;
  int order = 1;
  std::optional<Vec> coefficients;  // fixed values; estimated when absent
};

// Autoregressive augmentation of one variable: a linear causal filter part
// (inputs: coefficients a in R^k unless fixed, series x in R^n; output
// y_j = sum_i a_i x_{j+k-i} in R^{n-k}), a crop part keeping the last n-k
// entries of x, and a twin-output net where filter and crop meet. Every
// existing consumer of the variable gains an extra input port pinned to that
// net, carrying the lagged duplicate.
void add_ar(Netlist& nl, const ArPartSpec& ar);

// The five-cell straight-line-fit diagram: scalar nets m and b, series nets
// x and y of length n, and one part computing (m*x_1+b, ..., m*x_n+b).
BuiltSheaf regression_sheaf(int n);

// Two values chasing each other: part f maps net x onto net y, part g maps
// y back onto x. Sections are exactly the fixed-point pairs y=f(x), x=g(y).
BuiltSheaf feedback_sheaf(std::function<Vec(const Vec&)> f, std::function<Vec(const Vec&)> g,
                          int dim_x = 1, int dim_y = 1);

// Exhaustive section search with every tie-respecting assignment drawn from a
// finite grid of values. Independent coordinates are the net cells (parts are
// filled in through the tie groups). Throws TooLarge past `cap` combinations.
std::vector<Assignment> grid_sections(const BuiltSheaf& bs, const std::vector<double>& grid,
                                      double tol = 1e-9, long cap = 2000000L);

// Fill part cells of `a` from their tied net slots; net cells must be set.
void fill_ties(const BuiltSheaf& bs, Assignment& a);

// Assignment induced by a complete table: variable nets take their series,
// coefficient nets their fixed values (free ones are skipped), derived nets
// are pushed down through the driving part, parts are filled from ties.
Assignment induced_assignment(const BuiltSheaf& bs, const Netlist& nl,
                              const TimeseriesTable& data);

struct BuildOptions {
  std::optional<int> ar_override;  // AR order applied to all variables; 0 disables
  std::map<std::string, double> weights;
  bool explode = false;
  std::map<std::string, Vec> ar_fixed;  // per-variable hard-coded filter coefficients
};

struct ModelSheaf {
  Netlist netlist;
  BuiltSheaf built;
};

// DSEM -> netlist -> per-variable AR augmentation -> sheaf (-> observations).
ModelSheaf build_model_sheaf(const DsemSpec& spec, int series_len,
                             const BuildOptions& opts = {});

}  // namespace netsheaf
