#include <doctest.h>

#include <netsheaf/inference.hpp>

#include <cmath>
#include <set>

#include "helpers.hpp"

using namespace netsheaf;
using netsheaf::testing::single_edge_spec;

namespace {

struct LinePoints {
  Vec x;
  Vec y;
};

// Ordinary least squares through the normal equations.
void ols_oracle(const Vec& x, const Vec& y, double& m, double& b, double& rss) {
  double xm = x.mean(), ym = y.mean();
  double sxx = (x.array() - xm).matrix().squaredNorm();
  double sxy = ((x.array() - xm) * (y.array() - ym)).sum();
  m = sxy / sxx;
  b = ym - m * xm;
  rss = (y - (m * x).eval() - Vec::Constant(x.size(), b)).squaredNorm();
}

// Total least squares with intercept: smallest right singular direction of
// the centered data matrix.
void tls_oracle(const Vec& x, const Vec& y, double& m, double& b, double& dist) {
  Mat d(x.size(), 2);
  d.col(0) = x.array() - x.mean();
  d.col(1) = y.array() - y.mean();
  Eigen::JacobiSVD<Mat> svd(d, Eigen::ComputeThinV);
  Vec v = svd.matrixV().col(1);
  m = -v[0] / v[1];
  b = y.mean() - m * x.mean();
  dist = svd.singularValues()[1];
}

SolveRequest line_request(const BuiltSheaf& bs, const LinePoints& pts) {
  SolveRequest req;
  req.support = Assignment::empty(static_cast<int>(bs.labels.size()));
  req.support.set(bs.require_cell("net:x"), pts.x);
  req.support.set(bs.require_cell("net:y"), pts.y);
  return req;
}

LinePoints bump_points() {
  LinePoints p;
  p.x = Vec(3);
  p.y = Vec(3);
  p.x << 0, 1, 2;
  p.y << 0, 1, 0;
  return p;
}

DsemSpec chain_spec(bool free_coeffs) {
  DsemSpec s;
  s.variables = {{"A", 0, Transform::None}, {"B", 0, Transform::None},
                 {"C", 0, Transform::None}};
  auto coef = [&](double v) { return free_coeffs ? Coefficient::free_slot() : Coefficient::fixed(v); };
  s.edges = {{"A", "A", 1, coef(0.9), 1},
             {"A", "B", 1, coef(0.6), 1},
             {"B", "C", 0, coef(-0.8), -1}};
  return s;
}

// A hand-assembled diagram of affine maps, for derivative and fast-path
// checks independent of the netlist translation.
BuiltSheaf affine_chain(std::uint64_t seed, bool diamond) {
  NormalSampler rng(seed);
  std::vector<int> dims = diamond ? std::vector<int>{2, 3, 2, 3} : std::vector<int>{3, 2, 2, 4};
  std::vector<double> alphas = {1.0, 1.3, 0.7, 2.0};
  BuiltSheaf bs;
  for (int i = 0; i < 4; ++i) {
    bs.labels.push_back("c" + std::to_string(i));
    Stalk s;
    s.dim = dims[i];
    s.alpha = alphas[i];
    bs.stalk_list.push_back(s);
    bs.info.push_back({});
  }
  auto rand_affine = [&](int u, int v) {
    Mat a(dims[v], dims[u]);
    Vec c(dims[v]);
    for (int r = 0; r < a.rows(); ++r) {
      c[r] = rng.gauss();
      for (int q = 0; q < a.cols(); ++q) a(r, q) = rng.gauss();
    }
    bs.arrows.emplace_back(u, v, RestrictionMap::affine(a, c, bs.labels[u] + bs.labels[v]));
  };
  if (diamond) {
    rand_affine(0, 1);
    rand_affine(0, 2);
    rand_affine(1, 3);
    rand_affine(2, 3);
  } else {
    rand_affine(0, 1);
    rand_affine(1, 2);
    rand_affine(2, 3);
  }
  bs.finalize();
  return bs;
}

}  // namespace

TEST_SUITE_BEGIN("inference");

TEST_CASE("pinned points recover the straight line fit") {
  auto bs = regression_sheaf(3);
  auto req = line_request(bs, bump_points());
  auto res = minimize(bs, req);
  CHECK(res.converged);
  CHECK(res.free_parameters == 2);
  CHECK(res.assignment.values[bs.require_cell("net:m")][0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(res.assignment.values[bs.require_cell("net:b")][0] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(res.radius == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-8));
}

TEST_CASE("least squares solution matches the normal equations") {
  const int n = 20;
  NormalSampler rng(42);
  LinePoints pts;
  pts.x = Vec(n);
  pts.y = Vec(n);
  for (int i = 0; i < n; ++i) {
    pts.x[i] = 3.0 * rng.gauss();
    pts.y[i] = 1.7 * pts.x[i] - 0.4 + 0.3 * rng.gauss();
  }
  double m, b, rss;
  ols_oracle(pts.x, pts.y, m, b, rss);

  auto bs = regression_sheaf(n);
  auto res = minimize(bs, line_request(bs, pts));
  CHECK(res.converged);
  CHECK(res.assignment.values[bs.require_cell("net:m")][0] == doctest::Approx(m).epsilon(1e-6));
  CHECK(res.assignment.values[bs.require_cell("net:b")][0] == doctest::Approx(b).epsilon(1e-6));
  CHECK(res.radius * res.radius == doctest::Approx(rss).epsilon(1e-8));
}

TEST_CASE("forward evaluation fills the driven series") {
  auto bs = regression_sheaf(3);
  SolveRequest req;
  req.support = Assignment::empty(static_cast<int>(bs.labels.size()));
  req.support.set(bs.require_cell("net:m"), Vec::Constant(1, 1.5));
  req.support.set(bs.require_cell("net:b"), Vec::Constant(1, -0.5));
  Vec x(3);
  x << -1, 0, 2;
  req.support.set(bs.require_cell("net:x"), x);
  auto res = minimize(bs, req);
  CHECK(res.converged);
  CHECK(res.free_parameters == 3);
  CHECK(res.radius <= 1e-8);
  const Vec& y = res.assignment.values[bs.require_cell("net:y")];
  CHECK(y[0] == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(y[1] == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(y[2] == doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("backward solve inverts an invertible line") {
  auto bs = regression_sheaf(3);
  SolveRequest req;
  req.support = Assignment::empty(static_cast<int>(bs.labels.size()));
  req.support.set(bs.require_cell("net:m"), Vec::Constant(1, 2.0));
  req.support.set(bs.require_cell("net:b"), Vec::Constant(1, 1.0));
  Vec y(3);
  y << 1, 3, 7;
  req.support.set(bs.require_cell("net:y"), y);
  auto res = minimize(bs, req);
  CHECK(res.converged);
  CHECK(res.radius <= 1e-6);
  const Vec& x = res.assignment.values[bs.require_cell("net:x")];
  CHECK(x[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(x[2] == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("flat line leaves the unknown input at its initialization") {
  auto bs = regression_sheaf(3);
  SolveRequest req;
  req.support = Assignment::empty(static_cast<int>(bs.labels.size()));
  req.support.set(bs.require_cell("net:m"), Vec::Zero(1));
  req.support.set(bs.require_cell("net:b"), Vec::Constant(1, 1.0));
  req.support.set(bs.require_cell("net:y"), Vec::Constant(3, 1.0));
  auto res = minimize(bs, req);
  // The output never reacts to x, so the problem is flat along it: x must
  // sit exactly where it started and the flat directions must be reported.
  const Vec& x = res.assignment.values[bs.require_cell("net:x")];
  for (int i = 0; i < 3; ++i) CHECK(x[i] == 0.0);
  CHECK(res.non_unique);
  CHECK(res.radius <= 1e-10);
}

TEST_CASE("total least squares agrees with the singular value analysis") {
  const int n = 10;
  NormalSampler rng(9);
  LinePoints pts;
  pts.x = Vec(n);
  pts.y = Vec(n);
  for (int i = 0; i < n; ++i) {
    pts.x[i] = i;
    pts.y[i] = 1.3 * i - 0.7 + 0.5 * rng.gauss();
  }
  double m, b, dist;
  tls_oracle(pts.x, pts.y, m, b, dist);

  auto bs = regression_sheaf(n);
  auto req = line_request(bs, pts);
  req.ties = false;  // frees the part's own copies of m, b and x
  auto res = minimize(bs, req);
  CHECK(res.converged);
  CHECK(res.assignment.values[bs.require_cell("net:m")][0] == doctest::Approx(m).epsilon(1e-4));
  CHECK(res.assignment.values[bs.require_cell("net:b")][0] == doctest::Approx(b).epsilon(1e-4));
  CHECK(res.radius == doctest::Approx(dist).epsilon(1e-4));
}

TEST_CASE("radius shrinks as more cells are freed") {
  auto bs = regression_sheaf(3);
  auto pts = bump_points();

  auto req_both = line_request(bs, pts);
  auto req_b = line_request(bs, pts);
  req_b.support.set(bs.require_cell("net:m"), Vec::Zero(1));
  auto req_none = line_request(bs, pts);
  req_none.support.set(bs.require_cell("net:m"), Vec::Zero(1));
  req_none.support.set(bs.require_cell("net:b"), Vec::Zero(1));

  double r1 = minimize(bs, req_both).radius;
  double r2 = minimize(bs, req_b).radius;
  double r3 = minimize(bs, req_none).radius;
  CHECK(r1 <= r2 + 1e-12);
  CHECK(r2 <= r3 + 1e-12);
  CHECK(r2 == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-8));
  CHECK(r3 == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("pinned slots keep their exact bit patterns") {
  auto bs = regression_sheaf(3);
  LinePoints pts;
  pts.x = Vec(3);
  pts.y = Vec(3);
  pts.x << 0.1 + 0.2, 1.0 / 3.0, 2.2;
  pts.y << -0.7, 0.1, 1e-3;
  auto res = minimize(bs, line_request(bs, pts));
  const Vec& x = res.assignment.values[bs.require_cell("net:x")];
  const Vec& y = res.assignment.values[bs.require_cell("net:y")];
  for (int i = 0; i < 3; ++i) {
    CHECK(x[i] == pts.x[i]);
    CHECK(y[i] == pts.y[i]);
  }
}

TEST_CASE("tied copies stay exactly equal") {
  auto bs = regression_sheaf(4);
  LinePoints pts;
  pts.x = Vec(4);
  pts.y = Vec(4);
  pts.x << 0, 1, 2, 3;
  pts.y << 0.3, 0.9, 2.2, 2.8;
  auto res = minimize(bs, line_request(bs, pts));
  int part = bs.require_cell("part:line");
  const Vec& p = res.assignment.values[part];
  CHECK(p[0] == res.assignment.values[bs.require_cell("net:m")][0]);
  CHECK(p[1] == res.assignment.values[bs.require_cell("net:b")][0]);
  for (int i = 0; i < 4; ++i)
    CHECK(p[2 + i] == res.assignment.values[bs.require_cell("net:x")][i]);
}

TEST_CASE("analytic gradient matches central differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (bool diamond : {false, true}) {
      auto bs = affine_chain(seed, diamond);
      SolveRequest req;
      req.support = Assignment::empty(4);
      NormalSampler rng(100 + seed);
      Vec pinned(bs.stalk_list[0].dim);
      for (int i = 0; i < pinned.size(); ++i) pinned[i] = rng.gauss();
      req.support.set(0, pinned);
      Vec half = Vec::Zero(bs.stalk_list[3].dim);
      for (int i = 0; i < half.size(); ++i) half[i] = rng.gauss();
      req.support.set(3, half);
      req.partial[3] = {true, false, true};  // only two coordinates held

      auto pp = pack_problem(bs, req);
      REQUIRE(pp.all_affine);
      Vec theta = pp.theta0;
      for (int i = 0; i < theta.size(); ++i) theta[i] += 0.5 * rng.gauss();

      double r2 = consistency_radius(bs.sheaf, pp.unpack(theta));
      CHECK(pp.objective(theta) == doctest::Approx(r2 * r2).epsilon(1e-12));

      Vec g = pp.gradient(theta);
      double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
      for (int i = 0; i < theta.size(); ++i) {
        double h = 1e-6 * std::max(1.0, std::abs(theta[i]));
        Vec tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        double fd = (pp.objective(tp) - pp.objective(tm)) / (2 * h);
        CHECK(std::abs(g[i] - fd) <= 1e-6 * scale);
      }

      // Affine diagrams solve in a single step, and the result is a global
      // minimum: nudging any free coordinate cannot lower the radius.
      auto res = minimize(bs, req);
      CHECK(res.converged);
      CHECK(res.iterations == 1);
      Assignment bumped = res.assignment;
      bumped.values[1][0] += 0.1;
      CHECK(consistency_radius(bs.sheaf, bumped) >= res.radius - 1e-12);
    }
  }
}

TEST_CASE("free path coefficients are recovered from clean data") {
  auto data = simulate(chain_spec(false), 12, 0.0, 7, {{"A", 2.0}});
  BuildOptions opts;
  opts.explode = true;
  auto ms = build_model_sheaf(chain_spec(true), 12, opts);
  auto fr = fit(ms.built, data);
  CHECK(fr.solve.converged);
  CHECK(fr.solve.radius <= 1e-7);
  REQUIRE(fr.coefficients.count("A->A@1") == 1);
  REQUIRE(fr.coefficients.count("A->B@1") == 1);
  REQUIRE(fr.coefficients.count("B->C@0") == 1);
  CHECK(fr.coefficients["A->A@1"] == doctest::Approx(0.9).epsilon(1e-4));
  CHECK(fr.coefficients["A->B@1"] == doctest::Approx(0.6).epsilon(1e-4));
  CHECK(fr.coefficients["B->C@0"] == doctest::Approx(-0.8).epsilon(1e-4));
}

TEST_CASE("missing entries are imputed near the truth") {
  auto data = simulate(chain_spec(false), 16, 0.01, 11, {{"A", 4.0}});
  auto full = data;
  const std::vector<std::pair<int, int>> holes = {{2, 1}, {3, 0}, {4, 2}, {5, 1}, {7, 0},
                                                  {8, 2}, {10, 1}, {12, 0}, {13, 2}};
  for (auto [t, c] : holes) data.present(t, c) = false;

  BuildOptions opts;
  opts.explode = true;
  auto ms = build_model_sheaf(chain_spec(true), 16, opts);
  auto fr = fit(ms.built, data);
  CHECK(fr.solve.converged);
  REQUIRE(fr.completed.names == std::vector<std::string>{"A", "B", "C"});
  REQUIRE(fr.completed.rows() == 16);
  CHECK(fr.completed.complete());
  for (auto [t, c] : holes)
    CHECK(fr.completed.values(t, c) == doctest::Approx(full.values(t, c)).scale(1.0).epsilon(0.05));
}

TEST_CASE("sheaf fit agrees with direct likelihood maximization") {
  auto spec = chain_spec(true);
  auto data = simulate(chain_spec(false), 12, 0.0, 7, {{"A", 2.0}});
  auto ml = fit_dsem_ml(spec, data);
  CHECK_FALSE(ml.degenerate);

  BuildOptions opts;
  opts.explode = true;
  auto ms = build_model_sheaf(spec, 12, opts);
  auto fr = fit(ms.built, data);
  for (const auto& [key, value] : ml.coefficients) {
    REQUIRE(fr.coefficients.count(key) == 1);
    CHECK(fr.coefficients[key] == doctest::Approx(value).epsilon(1e-3));
  }
}

TEST_CASE("report pins the corrupted observation") {
  BuildOptions opts;
  opts.explode = true;
  auto ms = build_model_sheaf(chain_spec(false), 12, opts);
  auto data = simulate(chain_spec(false), 12, 0.0, 7, {{"A", 2.0}});
  Assignment a = induced_assignment(ms.built, ms.netlist, data);
  a.values[ms.built.require_cell("obs:B@5")][0] += 0.5;

  SolveResult res;
  res.assignment = a;
  res.radius = consistency_radius(ms.built.sheaf, a);
  res.residuals = residual_breakdown(ms.built.sheaf, a);
  // The cell sits above three comparable lower cells (its series net and the
  // two parts copying that series), so one bad reading shows up three times.
  auto lines = residual_report(ms.built, res, 5);
  REQUIRE(lines.size() == 3);
  std::set<std::string> lows;
  for (const auto& line : lines) {
    CHECK(line.kind == "observation");
    CHECK(line.variable == "B");
    CHECK(line.time == "5");
    CHECK(line.high == "obs:B@5");
    CHECK(line.contribution == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(line.share == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    lows.insert(line.low);
  }
  CHECK(lows == std::set<std::string>{"net:B", "part:B_predcrop", "part:C"});
}

TEST_CASE("copy discrepancies outrank their update echo") {
  auto ms = build_model_sheaf(chain_spec(false), 12, {});
  auto data = simulate(chain_spec(false), 12, 0.0, 7, {{"A", 2.0}});
  Assignment a = induced_assignment(ms.built, ms.netlist, data);
  // Part C reads series B as its only input; desync one slot of that copy.
  a.values[ms.built.require_cell("part:C")][5] += 0.3;

  SolveResult res;
  res.assignment = a;
  res.residuals = residual_breakdown(ms.built.sheaf, a);
  auto lines = residual_report(ms.built, res, 5);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].kind == "copy");
  CHECK(lines[0].low == "part:C");
  CHECK(lines[0].high == "net:B");
  CHECK(lines[0].variable == "B");
  CHECK(lines[0].time == "5");
  CHECK(lines[0].contribution == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(lines[1].kind == "update");
  CHECK(lines[1].variable == "C");
  CHECK(lines[1].time == "5");
  CHECK(lines[1].contribution == doctest::Approx(0.0576).epsilon(1e-9));
}

TEST_CASE("filter and crop rows share a broken lagged series") {
  DsemSpec s;
  s.variables = {{"X", 0, Transform::None}};
  BuildOptions opts;
  opts.ar_override = 1;
  opts.ar_fixed["X"] = Vec::Constant(1, 0.5);
  auto ms = build_model_sheaf(s, 12, opts);

  // A half-ratio geometric series satisfies the filter exactly.
  TimeseriesTable tab;
  tab.names = {"X"};
  tab.values.resize(12, 1);
  for (int t = 0; t < 12; ++t) {
    tab.time.push_back(t);
    tab.values(t, 0) = 4.0 * std::pow(0.5, t);
  }
  tab.present.setConstant(12, 1, true);
  Assignment a = induced_assignment(ms.built, ms.netlist, tab);
  CHECK(consistency_radius(ms.built.sheaf, a) <= 1e-10);
  a.values[ms.built.require_cell("net:X_lagvar")][5] += 0.3;

  SolveResult res;
  res.assignment = a;
  res.residuals = residual_breakdown(ms.built.sheaf, a);
  auto lines = residual_report(ms.built, res, 5);
  REQUIRE(lines.size() == 2);
  std::set<std::string> kinds = {lines[0].kind, lines[1].kind};
  CHECK(kinds == std::set<std::string>{"filter", "crop"});
  for (const auto& line : lines) {
    CHECK(line.variable == "X");
    CHECK(line.time == "6");  // lagged cells sit one step later than their coordinate
    CHECK(line.contribution == doctest::Approx(0.09).epsilon(1e-12));
  }
}

TEST_CASE("solver runs deterministically") {
  const int n = 10;
  NormalSampler rng(9);
  LinePoints pts;
  pts.x = Vec(n);
  pts.y = Vec(n);
  for (int i = 0; i < n; ++i) {
    pts.x[i] = i;
    pts.y[i] = 1.3 * i - 0.7 + 0.5 * rng.gauss();
  }
  auto bs = regression_sheaf(n);
  auto req = line_request(bs, pts);
  req.ties = false;
  auto res1 = minimize(bs, req);
  auto res2 = minimize(bs, req);
  CHECK(res1.radius == res2.radius);
  for (size_t i = 0; i < res1.assignment.values.size(); ++i)
    for (int c = 0; c < res1.assignment.values[i].size(); ++c)
      CHECK(res1.assignment.values[i][c] == res2.assignment.values[i][c]);
}

TEST_CASE("iteration budget is honored") {
  const int n = 10;
  NormalSampler rng(9);
  LinePoints pts;
  pts.x = Vec(n);
  pts.y = Vec(n);
  for (int i = 0; i < n; ++i) {
    pts.x[i] = i;
    pts.y[i] = 1.3 * i - 0.7 + 0.5 * rng.gauss();
  }
  auto bs = regression_sheaf(n);
  auto req = line_request(bs, pts);
  req.ties = false;
  req.options.max_iters = 1;
  auto res = minimize(bs, req);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations <= 1);
  CHECK(std::isfinite(res.radius));
  CHECK(res.radius >= 0.0);
}

TEST_CASE("partial pins hold chosen coordinates only") {
  auto bs = regression_sheaf(3);
  SolveRequest req;
  req.support = Assignment::empty(static_cast<int>(bs.labels.size()));
  req.support.set(bs.require_cell("net:m"), Vec::Constant(1, 1.0));
  req.support.set(bs.require_cell("net:b"), Vec::Zero(1));
  Vec x(3);
  x << 0, 1, 2;
  req.support.set(bs.require_cell("net:x"), x);
  Vec y(3);
  y << 0, 1, 999;  // last coordinate is a placeholder, left free below
  int yc = bs.require_cell("net:y");
  req.support.set(yc, y);
  req.partial[yc] = {true, true, false};

  auto res = minimize(bs, req);
  CHECK(res.free_parameters == 1);
  CHECK(res.assignment.values[yc][0] == 0.0);
  CHECK(res.assignment.values[yc][1] == 1.0);
  CHECK(res.assignment.values[yc][2] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(res.radius <= 1e-6);
}

TEST_CASE("fully pinned problems just measure the radius") {
  auto bs = regression_sheaf(3);
  auto pts = bump_points();
  auto req = line_request(bs, pts);
  req.support.set(bs.require_cell("net:m"), Vec::Zero(1));
  req.support.set(bs.require_cell("net:b"), Vec::Constant(1, 1.0 / 3.0));
  auto res = minimize(bs, req);
  CHECK(res.converged);
  CHECK(res.free_parameters == 0);
  CHECK(res.iterations == 0);
  CHECK(res.radius == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("parameter packing merges tied slots") {
  auto spec = single_edge_spec(0.7, 0, true);
  auto nl = netlist_from_dsem(spec, 4);
  auto bs = sheaf_from_netlist(nl);
  SolveRequest req;
  req.support = Assignment::empty(static_cast<int>(bs.labels.size()));

  auto tied = pack_problem(bs, req);
  CHECK(tied.n_params == 9);  // A and B series plus one shared coefficient
  CHECK_FALSE(tied.all_affine);
  CHECK(tied.residual_dim == 9);  // two copy rows and the update row
  CHECK(tied.blocks.size() == 3);

  req.ties = false;
  auto loose = pack_problem(bs, req);
  CHECK(loose.n_params == 14);  // every part slot on its own
}

TEST_SUITE_END();
