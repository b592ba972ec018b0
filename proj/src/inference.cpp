#include "netsheaf/inference.hpp"

#include <algorithm>
#include <future>
#include <numeric>

#include "optim.hpp"

namespace netsheaf {

namespace {

// Union-find over global coordinate ids.
struct Classes {
  std::vector<int> parent;
  explicit Classes(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

bool is_part_kind(CellInfo::Kind k) {
  return k == CellInfo::Kind::Part || k == CellInfo::Kind::CropPart ||
         k == CellInfo::Kind::LcfPart;
}

bool is_derived_net(CellInfo::Kind k) {
  return k == CellInfo::Kind::PredNet || k == CellInfo::Kind::LagvarNet;
}

// Anchored linear interpolation: known coordinates kept, gaps filled on the
// straight line between neighbors, 0 outside the anchored range.
Vec interpolate(const std::vector<std::pair<int, double>>& anchors, int dim) {
  Vec out = Vec::Zero(dim);
  for (size_t i = 0; i < anchors.size(); ++i) {
    out[anchors[i].first] = anchors[i].second;
    if (i + 1 < anchors.size()) {
      int t0 = anchors[i].first;
      int t1 = anchors[i + 1].first;
      for (int t = t0 + 1; t < t1; ++t) {
        double w = static_cast<double>(t - t0) / (t1 - t0);
        out[t] = (1.0 - w) * anchors[i].second + w * anchors[i + 1].second;
      }
    }
  }
  return out;
}

}  // namespace

Assignment PackedProblem::unpack(const Vec& theta) const {
  Assignment a = base;
  for (size_t i = 0; i < param_of.size(); ++i)
    for (size_t c = 0; c < param_of[i].size(); ++c)
      if (param_of[i][c] >= 0) a.values[i][c] = theta[param_of[i][c]];
  return a;
}

Vec PackedProblem::residuals(const Vec& theta) const {
  Assignment a = unpack(theta);
  Vec r(residual_dim);
  for (const auto& b : blocks)
    r.segment(b.row, b.map.out_dim()) = b.alpha * (b.map.apply(a.values[b.u]) - a.values[b.v]);
  return r;
}

Mat PackedProblem::jacobian(const Vec& theta) const {
  Assignment a = unpack(theta);
  Mat j = Mat::Zero(residual_dim, n_params);
  for (const auto& b : blocks) {
    int dv = b.map.out_dim();
    Mat jm = b.map.jacobian(a.values[b.u]);
    for (size_t c = 0; c < param_of[b.u].size(); ++c)
      if (int p = param_of[b.u][c]; p >= 0) j.block(b.row, p, dv, 1) += b.alpha * jm.col(c);
    for (size_t c = 0; c < param_of[b.v].size(); ++c)
      if (int p = param_of[b.v][c]; p >= 0) j(b.row + static_cast<int>(c), p) -= b.alpha;
  }
  return j;
}

double PackedProblem::objective(const Vec& theta) const { return residuals(theta).squaredNorm(); }

Vec PackedProblem::gradient(const Vec& theta) const {
  return 2.0 * jacobian(theta).transpose() * residuals(theta);
}

PackedProblem pack_problem(const BuiltSheaf& bs, const SolveRequest& req) {
  const int cells = static_cast<int>(bs.labels.size());
  PackedProblem pp;
  pp.param_of.resize(cells);
  pp.pinned.resize(cells);

  std::vector<int> dim(cells), off(cells);
  int total = 0;
  for (int i = 0; i < cells; ++i) {
    dim[i] = bs.sheaf.stalks[i].dim;
    off[i] = total;
    total += dim[i];
  }

  // Raw pin mask per coordinate.
  std::vector<bool> raw(total, false);
  Vec raw_value = Vec::Zero(total);
  for (int i = 0; i < cells; ++i) {
    if (!req.support.has[i]) continue;
    if (req.support.values[i].size() != dim[i])
      throw Error(ErrorCode::DimensionMismatch,
                  "support for " + bs.labels[i] + " has wrong dimension");
    auto mask_it = req.partial.find(i);
    for (int c = 0; c < dim[i]; ++c) {
      if (mask_it != req.partial.end() &&
          (c >= static_cast<int>(mask_it->second.size()) || !mask_it->second[c]))
        continue;
      raw[off[i] + c] = true;
      raw_value[off[i] + c] = req.support.values[i][c];
    }
  }

  Classes cls(total);
  if (req.ties)
    for (const auto& g : bs.ties) {
      const auto& root = g.slots.front();
      for (size_t s = 1; s < g.slots.size(); ++s)
        for (int c = 0; c < g.slots[s].len; ++c)
          cls.unite(off[g.slots[s].cell] + g.slots[s].offset + c,
                    off[root.cell] + root.offset + c);
    }

  // First pinned member (scan order) fixes its whole class.
  std::vector<int> class_pin(total, -1);
  for (int x = 0; x < total; ++x)
    if (raw[x] && class_pin[cls.find(x)] < 0) class_pin[cls.find(x)] = x;

  std::vector<int> class_param(total, -1);
  for (int i = 0; i < cells; ++i) {
    pp.param_of[i].assign(dim[i], -1);
    pp.pinned[i].assign(dim[i], false);
    for (int c = 0; c < dim[i]; ++c) {
      int r = cls.find(off[i] + c);
      if (class_pin[r] >= 0) {
        pp.pinned[i][c] = true;
      } else {
        if (class_param[r] < 0) class_param[r] = pp.n_params++;
        pp.param_of[i][c] = class_param[r];
      }
    }
  }

  pp.base = Assignment::empty(cells);
  for (int i = 0; i < cells; ++i) {
    Vec v = Vec::Zero(dim[i]);
    for (int c = 0; c < dim[i]; ++c) {
      int pin = class_pin[cls.find(off[i] + c)];
      // Pinned slots carry the support value bit for bit.
      if (pin >= 0) v[c] = raw_value[pin];
    }
    pp.base.set(i, v);
  }

  // Initialization: anchored interpolation for series, 0 for coefficients,
  // the unit filter for AR slots, push-down for everything derived.
  Assignment init = pp.base;
  for (int i = 0; i < cells; ++i) {
    const auto& ci = bs.info[i];
    if (ci.kind == CellInfo::Kind::VarNet) {
      std::vector<std::pair<int, double>> anchors;
      for (int c = 0; c < dim[i]; ++c)
        if (pp.pinned[i][c]) anchors.push_back({c, init.values[i][c]});
      for (int o = 0; o < cells; ++o) {
        const auto& oi = bs.info[o];
        if (oi.kind == CellInfo::Kind::Obs && oi.var == ci.var && oi.time >= 0 &&
            oi.time < dim[i] && pp.pinned[o].size() == 1 && pp.pinned[o][0])
          anchors.push_back({oi.time, pp.base.values[o][0]});
      }
      std::sort(anchors.begin(), anchors.end());
      anchors.erase(std::unique(anchors.begin(), anchors.end(),
                                [](auto& a, auto& b) { return a.first == b.first; }),
                    anchors.end());
      Vec v = interpolate(anchors, dim[i]);
      for (int c = 0; c < dim[i]; ++c)
        if (!pp.pinned[i][c]) init.values[i][c] = v[c];
    } else if (ci.kind == CellInfo::Kind::ArNet) {
      if (dim[i] > 0 && !pp.pinned[i][0]) init.values[i][0] = 1.0;
    }
  }
  // Part stalks copy their tied nets whether or not ties are active.
  for (const auto& g : bs.ties) {
    const auto& root = g.slots.front();
    for (size_t s = 1; s < g.slots.size(); ++s)
      for (int c = 0; c < g.slots[s].len; ++c) {
        int cell = g.slots[s].cell;
        if (!pp.pinned[cell][g.slots[s].offset + c])
          init.values[cell][g.slots[s].offset + c] = init.values[root.cell][root.offset + c];
      }
  }
  for (const auto& [u, v, m] : bs.arrows) {
    if (is_derived_net(bs.info[v].kind) && bs.info[u].kind == CellInfo::Kind::CropPart &&
        m.out_dim() == dim[v]) {
      Vec pushed = m.apply(init.values[u]);
      for (int c = 0; c < dim[v]; ++c)
        if (!pp.pinned[v][c]) init.values[v][c] = pushed[c];
    }
  }
  for (const auto& [u, v, m] : bs.arrows) {
    if (bs.info[v].kind == CellInfo::Kind::Obs && !pp.pinned[v].empty() && !pp.pinned[v][0])
      init.values[v] = m.apply(init.values[u]);
  }

  pp.theta0 = Vec::Zero(pp.n_params);
  std::vector<bool> seeded(pp.n_params, false);
  for (int i = 0; i < cells; ++i)
    for (int c = 0; c < dim[i]; ++c)
      if (int p = pp.param_of[i][c]; p >= 0 && !seeded[p]) {
        pp.theta0[p] = init.values[i][c];
        seeded[p] = true;
      }

  for (auto [u, v] : bs.sheaf.active_pairs())
    for (const auto& m : bs.sheaf.maps_between(u, v)) {
      PackedProblem::Block b;
      b.u = u;
      b.v = v;
      b.map = m;
      b.alpha = bs.sheaf.stalks[v].alpha;
      b.row = pp.residual_dim;
      pp.residual_dim += m.out_dim();
      pp.all_affine = pp.all_affine && m.is_affine();
      pp.blocks.push_back(std::move(b));
    }
  return pp;
}

SolveResult minimize(const BuiltSheaf& bs, const SolveRequest& req) {
  PackedProblem pp = pack_problem(bs, req);
  SolveResult out;
  out.free_parameters = pp.n_params;

  Vec theta = pp.theta0;
  if (pp.n_params == 0) {
    out.converged = true;
  } else if (pp.all_affine) {
    // Residuals are affine in the parameters: one rank-revealing solve, with
    // flat directions held at the initialization.
    Mat j = pp.jacobian(theta);
    Vec r0 = pp.residuals(theta);
    auto sol = optim::linear_least_squares(j, -r0);
    theta += sol.x;
    out.non_unique = sol.rank_deficient;
    out.iterations = 1;
    out.converged = true;
  } else {
    auto run_start = [&pp, &req](int s) {
      Vec x0 = pp.theta0;
      if (s > 0) {
        NormalSampler rng(req.options.seed + static_cast<std::uint64_t>(s));
        for (int i = 0; i < x0.size(); ++i) x0[i] += rng.gauss() * 0.3 * (1.0 + std::abs(x0[i]));
      }
      optim::LmOptions lo;
      lo.max_iters = req.options.max_iters;
      lo.grad_tol = req.options.grad_tol;
      lo.step_tol = req.options.step_tol;
      return optim::levenberg_marquardt([&pp](const Vec& x) { return pp.residuals(x); },
                                        [&pp](const Vec& x) { return pp.jacobian(x); },
                                        std::move(x0), lo);
    };
    int starts = std::max(1, req.options.restarts);
    std::vector<std::future<optim::LmResult>> jobs;
    for (int s = 1; s < starts; ++s)
      jobs.push_back(std::async(std::launch::async, run_start, s));
    optim::LmResult best = run_start(0);
    for (auto& f : jobs) {
      optim::LmResult r = f.get();
      if (r.objective < best.objective) best = std::move(r);
    }
    theta = best.x;
    out.iterations = best.iterations;
    out.converged = best.converged;
    out.restarts_used = starts;
    Eigen::ColPivHouseholderQR<Mat> qr(pp.jacobian(theta));
    out.non_unique = qr.rank() < pp.n_params;
  }

  out.assignment = pp.unpack(theta);
  out.radius = consistency_radius(bs.sheaf, out.assignment);
  out.residuals = residual_breakdown(bs.sheaf, out.assignment);
  return out;
}

FitResult fit(const BuiltSheaf& bs, const TimeseriesTable& data, const SolveOptions& opts,
              bool ties, const std::map<std::string, Vec>& pin) {
  const int cells = static_cast<int>(bs.labels.size());
  bool any_obs = false;
  for (const auto& ci : bs.info) any_obs = any_obs || ci.kind == CellInfo::Kind::Obs;
  if (!any_obs)
    throw Error(ErrorCode::InvalidArgument, "fit needs an observation-exploded diagram");
  if (bs.series_len > 0 && data.rows() != bs.series_len)
    throw Error(ErrorCode::BadDimension, "table length does not match the diagram");

  std::map<std::string, int> col;
  for (int c = 0; c < data.cols(); ++c) {
    if (bs.cell("net:" + data.names[c]) < 0)
      throw Error(ErrorCode::UnknownVariable, data.names[c] + " is not a variable cell");
    col[data.names[c]] = c;
  }

  SolveRequest req;
  req.support = Assignment::empty(cells);
  req.ties = ties;
  req.options = opts;
  std::map<std::string, int> observed;  // sanity: observed columns covered by cells
  for (int i = 0; i < cells; ++i) {
    const auto& ci = bs.info[i];
    if (ci.kind != CellInfo::Kind::Obs || ci.time < 0) continue;
    auto it = col.find(ci.var);
    if (it == col.end() || ci.time >= data.rows()) continue;
    if (!data.present(ci.time, it->second)) continue;
    req.support.set(i, Vec::Constant(1, data.values(ci.time, it->second)));
    ++observed[ci.var];
  }
  for (const auto& [name, c] : col) {
    int have = observed.count(name) ? observed[name] : 0;
    int want = 0;
    for (int t = 0; t < data.rows(); ++t) want += data.present(t, c) ? 1 : 0;
    if (want > have)
      throw Error(ErrorCode::InvalidArgument, "no observation cells for " + name);
  }
  for (const auto& [label, v] : pin) req.support.set(bs.require_cell(label), v);

  FitResult out;
  out.solve = minimize(bs, req);

  for (int i = 0; i < cells; ++i) {
    const auto& ci = bs.info[i];
    if (ci.kind == CellInfo::Kind::CoefNet)
      out.coefficients[ci.var] = out.solve.assignment.values[i][0];
    else if (ci.kind == CellInfo::Kind::ArNet)
      out.ar[ci.var] = out.solve.assignment.values[i];
  }

  for (int i = 0; i < cells; ++i) {
    const auto& ci = bs.info[i];
    if (ci.kind != CellInfo::Kind::VarNet || bs.sheaf.stalks[i].dim != bs.series_len) continue;
    out.completed.names.push_back(ci.var);
  }
  out.completed.values.resize(bs.series_len, static_cast<int>(out.completed.names.size()));
  out.completed.present.setConstant(bs.series_len, static_cast<int>(out.completed.names.size()),
                                    true);
  for (int c = 0; c < static_cast<int>(out.completed.names.size()); ++c) {
    int cell = bs.require_cell("net:" + out.completed.names[c]);
    out.completed.values.col(c) = out.solve.assignment.values[cell];
  }
  if (data.rows() == bs.series_len && !data.time.empty())
    out.completed.time = data.time;
  else
    for (int t = 0; t < bs.series_len; ++t) out.completed.time.push_back(t);
  return out;
}

std::vector<ResidualLine> residual_report(const BuiltSheaf& bs, const SolveResult& res,
                                          int top_k) {
  std::vector<ResidualLine> out;
  double total = 0.0;
  for (const auto& pr : res.residuals) total += pr.contribution;
  for (const auto& pr : res.residuals) {
    if (static_cast<int>(out.size()) >= top_k) break;
    if (pr.contribution <= 1e-18) continue;
    ResidualLine line;
    line.low = bs.labels[pr.u];
    line.high = bs.labels[pr.v];
    line.contribution = pr.contribution;
    line.share = total > 0.0 ? pr.contribution / total : 0.0;
    const auto& lo = bs.info[pr.u];
    const auto& hi = bs.info[pr.v];
    line.variable = hi.var;

    // Pair labels end with the map tag in brackets; output rows carry the
    // driving function's ".out" port there, copy rows an input port name.
    bool output_row = pr.label.size() >= 5 &&
                      pr.label.compare(pr.label.size() - 5, 5, ".out]") == 0;
    if (hi.kind == CellInfo::Kind::Obs)
      line.kind = "observation";
    else if (is_part_kind(lo.kind) && !output_row)
      line.kind = "copy";
    else if (lo.kind == CellInfo::Kind::LcfPart)
      line.kind = "filter";
    else if (lo.kind == CellInfo::Kind::CropPart)
      line.kind = "crop";
    else
      line.kind = "update";

    Eigen::Index coord = 0;
    if (pr.per_coord.size() > 0) pr.per_coord.maxCoeff(&coord);
    int t = -1;
    if (hi.kind == CellInfo::Kind::Obs) {
      t = hi.time;
    } else if (hi.kind == CellInfo::Kind::VarNet || is_derived_net(hi.kind)) {
      int d = bs.series_len - static_cast<int>(pr.per_coord.size());
      if (d >= 0 && bs.sheaf.stalks[pr.v].dim > 1) t = static_cast<int>(coord) + d;
    }
    if (t >= 0 && t < static_cast<int>(bs.time_labels.size())) line.time = bs.time_labels[t];
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace netsheaf
