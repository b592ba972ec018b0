#include <doctest.h>

#include <netsheaf/sheaf_builder.hpp>

#include <cmath>
#include <set>

#include "helpers.hpp"

using namespace netsheaf;
using netsheaf::testing::bering_spec;
using netsheaf::testing::single_edge_spec;

namespace {

TimeseriesTable one_column(const std::string& name, const Vec& v) {
  TimeseriesTable tab;
  tab.names = {name};
  tab.values = v;
  for (int t = 0; t < v.size(); ++t) tab.time.push_back(t);
  tab.present.setConstant(v.size(), 1, true);
  return tab;
}

// One free-floating series variable, optionally put through an AR filter.
Netlist bare_series(const std::string& name, int n) {
  DsemSpec s;
  s.variables = {{name, 0, Transform::None}};
  return netlist_from_dsem(s, n);
}

}  // namespace

TEST_SUITE_BEGIN("sheaf_builder");

TEST_CASE("regression diagram has five cells with shared slots") {
  auto bs = regression_sheaf(3);
  CHECK(bs.labels.size() == 5);
  int part = bs.require_cell("part:line");
  CHECK(bs.stalk_list[part].dim == 5);
  CHECK(bs.sheaf.poset.up_set(part).size() == 5);
  // m, b and x feed the part; y is only driven.
  CHECK(bs.ties.size() == 3);
  for (const auto& g : bs.ties) CHECK(g.slots.size() == 2);
  CHECK(check_functoriality(bs.sheaf).empty());
}

TEST_CASE("flat line against a bump leaves the classic residuals") {
  auto bs = regression_sheaf(3);
  Assignment a = Assignment::empty(5);
  a.set(bs.require_cell("net:m"), Vec::Zero(1));
  a.set(bs.require_cell("net:b"), Vec::Constant(1, 1.0 / 3.0));
  Vec x(3), y(3);
  x << 0, 1, 2;
  y << 0, 1, 0;
  a.set(bs.require_cell("net:x"), x);
  a.set(bs.require_cell("net:y"), y);
  fill_ties(bs, a);
  CHECK(a.total());
  CHECK(consistency_radius(bs.sheaf, a) ==
        doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));

  auto rows = residual_breakdown(bs.sheaf, a);
  REQUIRE_FALSE(rows.empty());
  CHECK(rows[0].contribution == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  REQUIRE(rows[0].per_coord.size() == 3);
  CHECK(rows[0].per_coord[0] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(rows[0].per_coord[1] == doctest::Approx(4.0 / 9.0).epsilon(1e-12));
  CHECK(rows[0].per_coord[2] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].contribution == doctest::Approx(0.0));
}

TEST_CASE("collinear data on the matching line is a section") {
  auto bs = regression_sheaf(3);
  Assignment a = Assignment::empty(5);
  a.set(bs.require_cell("net:m"), Vec::Constant(1, 2.0));
  a.set(bs.require_cell("net:b"), Vec::Zero(1));
  Vec x(3), y(3);
  x << 0, 1, 2;
  y << 0, 2, 4;
  a.set(bs.require_cell("net:x"), x);
  a.set(bs.require_cell("net:y"), y);
  fill_ties(bs, a);
  CHECK(is_section(bs.sheaf, a));
}

TEST_CASE("one point pins no slope") {
  auto bs = regression_sheaf(1);
  Assignment a = Assignment::empty(5);
  a.set(bs.require_cell("net:m"), Vec::Constant(1, 7.0));
  a.set(bs.require_cell("net:b"), Vec::Constant(1, 3.0 - 7.0 * 2.0));
  a.set(bs.require_cell("net:x"), Vec::Constant(1, 2.0));
  a.set(bs.require_cell("net:y"), Vec::Constant(1, 3.0));
  fill_ties(bs, a);
  CHECK(is_section(bs.sheaf, a));
}

TEST_CASE("single edge diagram carries the update map") {
  auto nl = netlist_from_dsem(single_edge_spec(0.6, 0), 4);
  auto bs = sheaf_from_netlist(nl);
  CHECK(bs.labels.size() == 3);
  CHECK(bs.ties.size() == 1);

  Assignment a = Assignment::empty(3);
  Vec xa(4);
  xa << 1, -2, 0.5, 3;
  a.set(bs.require_cell("net:A"), xa);
  a.set(bs.require_cell("net:B"), 0.6 * xa);
  fill_ties(bs, a);
  CHECK(is_section(bs.sheaf, a));

  a.set(bs.require_cell("net:B"), 0.6 * xa + Vec::Constant(4, 0.01));
  CHECK_FALSE(is_section(bs.sheaf, a));
}

TEST_CASE("food web diagram matches the published cell structure") {
  auto nl = netlist_from_dsem(bering_spec(), 40);
  auto bs = sheaf_from_netlist(nl);
  CHECK(bs.labels.size() == 14);
  int survival = bs.require_cell("part:Survival");
  // The part sits under its three source nets and its output net.
  auto up = bs.sheaf.poset.up_set(survival);
  CHECK(up.size() == 5);
  std::set<std::string> names;
  for (int c : up) names.insert(bs.labels[c]);
  CHECK(names == std::set<std::string>{"part:Survival", "net:DietCopepods", "net:DietKrill",
                                       "net:Spawners", "net:Survival"});
}

TEST_CASE("tie groups cover every input pin exactly once") {
  auto nl = netlist_from_dsem(bering_spec(), 7);
  auto bs = sheaf_from_netlist(nl);
  int pins = 0;
  for (const auto& n : nl.nets) pins += static_cast<int>(n.inputs.size());
  std::set<std::pair<int, int>> seen;
  int copies = 0;
  for (const auto& g : bs.ties) {
    // First slot names the net, the rest its copies.
    CHECK(bs.info[g.slots[0].cell].kind == CellInfo::Kind::VarNet);
    for (size_t i = 1; i < g.slots.size(); ++i) {
      ++copies;
      CHECK(seen.insert({g.slots[i].cell, g.slots[i].offset}).second);
    }
  }
  CHECK(copies == pins);
}

TEST_CASE("noiseless simulated tables induce sections, perturbations do not") {
  DsemSpec s;
  s.variables = {{"A", 0, Transform::None}, {"B", 0, Transform::None}, {"C", 0, Transform::None}};
  s.edges = {{"A", "A", 1, Coefficient::fixed(0.9), 0},
             {"A", "B", 1, Coefficient::fixed(0.6), 0},
             {"B", "C", 0, Coefficient::fixed(-0.8), 0}};
  auto data = simulate(s, 12, 0.0, 5, {{"A", 2.0}});
  auto nl = netlist_from_dsem(s, 12);
  auto bs = sheaf_from_netlist(nl);
  auto a = induced_assignment(bs, nl, data);
  CHECK(a.total());
  CHECK(consistency_radius(bs.sheaf, a) <= 1e-10);

  Assignment b = a;
  b.values[bs.require_cell("net:B")][4] += 0.1;
  CHECK(consistency_radius(bs.sheaf, b) > 1e-6);
}

TEST_CASE("observation explosion adds one scalar cell per sample") {
  auto bs = regression_sheaf(3);
  explode_observations(bs, {"net:x", "net:y"});
  CHECK(bs.labels.size() == 11);
  CHECK(bs.require_cell("obs:x@0") >= 0);
  CHECK(bs.require_cell("obs:y@2") >= 0);
  CHECK(check_functoriality(bs.sheaf).empty());

  Assignment a = Assignment::empty(static_cast<int>(bs.labels.size()));
  a.set(bs.require_cell("net:m"), Vec::Constant(1, 2.0));
  a.set(bs.require_cell("net:b"), Vec::Zero(1));
  Vec x(3), y(3);
  x << 0, 1, 2;
  y << 0, 2, 4;
  a.set(bs.require_cell("net:x"), x);
  a.set(bs.require_cell("net:y"), y);
  fill_ties(bs, a);
  for (int t = 0; t < 3; ++t) {
    a.set(bs.require_cell("obs:x@" + std::to_string(t)), x.segment(t, 1));
    a.set(bs.require_cell("obs:y@" + std::to_string(t)), y.segment(t, 1));
  }
  CHECK(is_section(bs.sheaf, a));
}

TEST_CASE("explosion rejects non-series cells") {
  auto bs = regression_sheaf(2);
  CHECK_THROWS_AS(explode_observations(bs, {"net:nope"}), Error);
  try {
    explode_observations(bs, {"part:line"});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::NotSeriesStalk);
  }
}

TEST_CASE("constant sequences pass the unit filter") {
  auto nl = bare_series("X", 4);
  add_ar(nl, {"X", 1, Vec::Ones(1)});
  CHECK(validate(nl).empty());
  auto bs = sheaf_from_netlist(nl);
  auto a = induced_assignment(bs, nl, one_column("X", Vec::Constant(4, 3.0)));
  CHECK(is_section(bs.sheaf, a));
}

TEST_CASE("geometric sequences pass the doubling filter") {
  auto nl = bare_series("X", 4);
  add_ar(nl, {"X", 1, Vec::Constant(1, 2.0)});
  Vec x(4);
  x << 1, 2, 4, 8;
  auto bs = sheaf_from_netlist(nl);
  auto a = induced_assignment(bs, nl, one_column("X", x));
  CHECK(is_section(bs.sheaf, a));
}

TEST_CASE("one broken step leaves exactly one residual") {
  auto nl = bare_series("X", 4);
  add_ar(nl, {"X", 1, Vec::Constant(1, 2.0)});
  Vec x(4);
  x << 1, 2, 4, 9;
  auto bs = sheaf_from_netlist(nl);
  auto a = induced_assignment(bs, nl, one_column("X", x));
  CHECK(consistency_radius(bs.sheaf, a) == doctest::Approx(1.0).epsilon(1e-12));
  auto rows = residual_breakdown(bs.sheaf, a);
  REQUIRE_FALSE(rows.empty());
  CHECK(bs.labels[rows[0].u] == "part:X_lcf");
  CHECK(bs.labels[rows[0].v] == "net:X_lagvar");
  REQUIRE(rows[0].per_coord.size() == 3);
  CHECK(rows[0].per_coord[0] == doctest::Approx(0.0));
  CHECK(rows[0].per_coord[1] == doctest::Approx(0.0));
  CHECK(rows[0].per_coord[2] == doctest::Approx(1.0));
}

TEST_CASE("filter order must leave room in the series") {
  auto nl = bare_series("X", 4);
  try {
    add_ar(nl, {"X", 4, std::nullopt});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::OrderTooLarge);
  }
}

TEST_CASE("consumers gain an inert lagged duplicate") {
  auto s = single_edge_spec(0.6, 0);
  auto nl = netlist_from_dsem(s, 4);
  add_ar(nl, {"A", 1, Vec::Constant(1, 0.5)});
  CHECK(validate(nl).empty());
  const auto& b = nl.part("B");
  REQUIRE(b.inputs.size() == 2);
  CHECK(b.inputs[1].name == "lag:in:A->B@0");
  CHECK(b.inputs[1].dim == 3);

  auto bs = sheaf_from_netlist(nl);
  Vec xa(4);
  xa << 8, 4, 2, 1;  // halving sequence matches the 0.5 filter
  TimeseriesTable tab;
  tab.names = {"A", "B"};
  tab.time = {0, 1, 2, 3};
  tab.values.resize(4, 2);
  tab.values.col(0) = xa;
  tab.values.col(1) = 0.6 * xa;
  tab.present.setConstant(4, 2, true);
  auto a = induced_assignment(bs, nl, tab);
  CHECK(consistency_radius(bs.sheaf, a) <= 1e-10);

  // A sequence violating the filter shows up only on the filter pair.
  tab.values.col(0) << 8, 4, 2, 5;
  tab.values.col(1) = 0.6 * tab.values.col(0);
  auto a2 = induced_assignment(bs, nl, tab);
  CHECK(consistency_radius(bs.sheaf, a2) > 1e-3);
}

TEST_CASE("free filter coefficients surface as their own net") {
  auto nl = bare_series("X", 6);
  add_ar(nl, {"X", 2, std::nullopt});
  CHECK(validate(nl).empty());
  int ci = nl.net_index("ar:X");
  REQUIRE(ci >= 0);
  CHECK(nl.nets[ci].dim == 2);
  auto bs = sheaf_from_netlist(nl);
  CHECK(bs.info[bs.require_cell("net:ar:X")].kind == CellInfo::Kind::ArNet);

  // Fibonacci-style recurrence with coefficients (1, 1).
  Assignment a = Assignment::empty(static_cast<int>(bs.labels.size()));
  Vec x(6);
  x << 1, 1, 2, 3, 5, 8;
  a.set(bs.require_cell("net:X"), x);
  a.set(bs.require_cell("net:ar:X"), Vec::Ones(2));
  a.set(bs.require_cell("net:X_lagvar"), x.tail(4));
  fill_ties(bs, a);
  CHECK(is_section(bs.sheaf, a));
}

TEST_CASE("feedback loops admit only matched pairs") {
  auto flip = [](const Vec& v) { return Vec(Vec::Ones(v.size()) - v); };
  auto ident = [](const Vec& v) { return v; };

  auto bs = feedback_sheaf(flip, ident);
  CHECK(bs.labels.size() == 4);
  Assignment a = Assignment::empty(4);
  a.set(bs.require_cell("net:x"), Vec::Constant(1, 0.5));
  a.set(bs.require_cell("net:y"), Vec::Constant(1, 0.5));
  fill_ties(bs, a);
  CHECK(is_section(bs.sheaf, a));

  a.set(bs.require_cell("net:x"), Vec::Constant(1, 0.25));
  a.set(bs.require_cell("net:y"), Vec::Constant(1, 0.75));
  fill_ties(bs, a);
  CHECK_FALSE(is_section(bs.sheaf, a));

  std::vector<double> grid;
  for (int g = -5; g <= 5; ++g) grid.push_back(g);
  CHECK(grid_sections(bs, grid).empty());

  auto same = feedback_sheaf(ident, ident);
  auto secs = grid_sections(same, {-1.0, 0.0, 1.0});
  CHECK(secs.size() == 3);
  for (const auto& s : secs)
    CHECK(s.values[same.require_cell("net:x")][0] == s.values[same.require_cell("net:y")][0]);
}

TEST_CASE("model pipeline assembles filters for every variable") {
  BuildOptions opts;
  opts.ar_override = 1;
  auto ms = build_model_sheaf(bering_spec(), 10, opts);
  CHECK(validate(ms.netlist).empty());
  // 8 variable + 8 coefficient + 8 filter nets; 6 update + 16 filter parts.
  CHECK(ms.built.require_cell("net:ar:Copepods") >= 0);
  CHECK(ms.built.require_cell("net:Copepods_lagvar") >= 0);
  CHECK(ms.built.labels.size() == 46);
  CHECK(check_functoriality(ms.built.sheaf).empty());

  BuildOptions exploded = opts;
  exploded.explode = true;
  auto ms2 = build_model_sheaf(bering_spec(), 10, exploded);
  CHECK(ms2.built.labels.size() == 46 + 80);
}

TEST_SUITE_END();
