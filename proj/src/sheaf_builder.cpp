#include "netsheaf/sheaf_builder.hpp"

#include <algorithm>

namespace netsheaf {

namespace {

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

bool starts_with(const std::string& s, const std::string& pre) {
  return s.size() >= pre.size() && s.compare(0, pre.size(), pre) == 0;
}

CellInfo classify_net(const std::string& name) {
  CellInfo ci;
  if (starts_with(name, "coef:")) {
    ci.kind = CellInfo::Kind::CoefNet;
    ci.var = name.substr(5);
  } else if (starts_with(name, "ar:")) {
    ci.kind = CellInfo::Kind::ArNet;
    ci.var = name.substr(3);
  } else if (ends_with(name, "_lagvar")) {
    ci.kind = CellInfo::Kind::LagvarNet;
    ci.var = name.substr(0, name.size() - 7);
  } else if (ends_with(name, "_pred")) {
    ci.kind = CellInfo::Kind::PredNet;
    ci.var = name.substr(0, name.size() - 5);
  } else {
    ci.kind = CellInfo::Kind::VarNet;
    ci.var = name;
  }
  return ci;
}

CellInfo classify_part(const std::string& name) {
  CellInfo ci;
  if (ends_with(name, "_lcf")) {
    ci.kind = CellInfo::Kind::LcfPart;
    ci.var = name.substr(0, name.size() - 4);
  } else if (ends_with(name, "_predcrop")) {
    ci.kind = CellInfo::Kind::CropPart;
    ci.var = name.substr(0, name.size() - 9);
  } else if (ends_with(name, "_crop")) {
    ci.kind = CellInfo::Kind::CropPart;
    ci.var = name.substr(0, name.size() - 5);
  } else {
    ci.kind = CellInfo::Kind::Part;
    ci.var = name;
  }
  return ci;
}

RestrictionMap map_of_function(const PartFunction& fn, const std::string& label) {
  if (fn.kind == PartFunction::Kind::Affine) return RestrictionMap::affine(fn.a, fn.c, label);
  return RestrictionMap::general(fn.fn, fn.in_dim, fn.out_dim, label);
}

PartFunction crop_part_function(int n, int k) {
  PartFunction f;
  f.kind = PartFunction::Kind::Affine;
  f.in_dim = n;
  f.out_dim = n - k;
  f.a = Mat::Zero(n - k, n);
  for (int t = k; t < n; ++t) f.a(t - k, t) = 1.0;
  f.c = Vec::Zero(n - k);
  return f;
}

}  // namespace

int BuiltSheaf::cell(const std::string& label) const {
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<int>(i);
  return -1;
}

int BuiltSheaf::require_cell(const std::string& label) const {
  int i = cell(label);
  if (i < 0) throw Error(ErrorCode::UnknownCell, label);
  return i;
}

void BuiltSheaf::finalize() {
  std::vector<std::pair<int, int>> rel;
  rel.reserve(arrows.size());
  for (const auto& [u, v, m] : arrows) rel.emplace_back(u, v);
  SheafDiagram next;
  next.p_norm = sheaf.p_norm;
  next.hasse_only = sheaf.hasse_only;
  next.poset = Poset::from_dag(labels, rel);
  next.stalks = stalk_list;
  for (const auto& [u, v, m] : arrows) next.add_map(u, v, m);
  sheaf = std::move(next);
}

BuiltSheaf sheaf_from_netlist(const Netlist& nl, const std::map<std::string, double>& weights) {
  auto findings = validate(nl);
  if (!findings.empty())
    throw Error(ErrorCode::InvalidNetlist,
                findings[0].code + " on " + findings[0].subject + ": " + findings[0].message);

  BuiltSheaf bs;
  bs.series_len = nl.series_len;
  for (int t = 0; t < nl.series_len; ++t) bs.time_labels.push_back(std::to_string(t));

  for (const auto& n : nl.nets) {
    bs.labels.push_back("net:" + n.name);
    Stalk s;
    s.dim = n.dim;
    if (auto it = weights.find(n.name); it != weights.end()) s.alpha = it->second;
    bs.stalk_list.push_back(s);
    bs.info.push_back(classify_net(n.name));
  }
  int part_base = static_cast<int>(nl.nets.size());
  for (const auto& p : nl.parts) {
    bs.labels.push_back("part:" + p.name);
    Stalk s;
    s.dim = p.stalk_dim();
    bs.stalk_list.push_back(s);
    bs.info.push_back(classify_part(p.name));
  }

  for (size_t ni = 0; ni < nl.nets.size(); ++ni) {
    const auto& n = nl.nets[ni];
    int vcell = static_cast<int>(ni);
    TieGroup group;
    group.slots.push_back({vcell, 0, n.dim});
    for (const auto& pr : n.inputs) {
      int pi = nl.part_index(pr.part);
      const auto& part = nl.parts[pi];
      int idx = part.input_index(pr.port);
      int off = part.input_offset(idx);
      int ucell = part_base + pi;
      std::vector<int> select(n.dim);
      for (int i = 0; i < n.dim; ++i) select[i] = off + i;
      auto m = RestrictionMap::projection(select, part.stalk_dim(), pr.part + "." + pr.port);
      bs.arrows.emplace_back(ucell, vcell, std::move(m));
      group.slots.push_back({ucell, off, n.dim});
    }
    for (const auto& pr : n.outputs) {
      int pi = nl.part_index(pr.part);
      int ucell = part_base + pi;
      bs.arrows.emplace_back(ucell, vcell,
                             map_of_function(nl.parts[pi].fn, pr.part + ".out"));
    }
    if (group.slots.size() >= 2) bs.ties.push_back(std::move(group));
  }

  bs.finalize();
  return bs;
}

void explode_observations(BuiltSheaf& bs, const std::vector<std::string>& cells) {
  for (const auto& label : cells) {
    int parent = bs.require_cell(label);
    const auto& pinfo = bs.info[parent];
    if (pinfo.kind == CellInfo::Kind::Part || pinfo.kind == CellInfo::Kind::CropPart ||
        pinfo.kind == CellInfo::Kind::LcfPart || pinfo.kind == CellInfo::Kind::Obs)
      throw Error(ErrorCode::NotSeriesStalk, label + " is not a net cell");
    int dim = bs.stalk_list[parent].dim;
    if (dim < 1) throw Error(ErrorCode::NotSeriesStalk, label + " has an empty stalk");
    std::string net_name = label.substr(4);
    bool timed = pinfo.kind == CellInfo::Kind::VarNet && dim == bs.series_len;
    for (int t = 0; t < dim; ++t) {
      std::string tl = timed && t < static_cast<int>(bs.time_labels.size())
                           ? bs.time_labels[t]
                           : std::to_string(t);
      int ocell = static_cast<int>(bs.labels.size());
      bs.labels.push_back("obs:" + net_name + "@" + tl);
      Stalk s;
      s.dim = 1;
      s.alpha = bs.stalk_list[parent].alpha;
      bs.stalk_list.push_back(s);
      CellInfo ci;
      ci.kind = CellInfo::Kind::Obs;
      ci.var = net_name;
      ci.time = t;
      bs.info.push_back(ci);
      bs.arrows.emplace_back(parent, ocell,
                             RestrictionMap::projection({t}, dim, bs.labels.back()));
    }
  }
  bs.finalize();
}

void explode_observations(BuiltSheaf& bs) {
  std::vector<std::string> cells;
  for (size_t i = 0; i < bs.labels.size(); ++i)
    if (bs.info[i].kind == CellInfo::Kind::VarNet) cells.push_back(bs.labels[i]);
  explode_observations(bs, cells);
}

void add_ar(Netlist& nl, const ArPartSpec& ar) {
  int ni = nl.net_index(ar.variable);
  if (ni < 0) throw Error(ErrorCode::UnknownVariable, "net " + ar.variable);
  int n = nl.nets[ni].dim;
  int k = ar.order;
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "filter order must be positive");
  if (k >= n) throw Error(ErrorCode::OrderTooLarge, ar.variable + ": order " + std::to_string(k) +
                                                        " with series length " + std::to_string(n));
  if (ar.coefficients && ar.coefficients->size() != k)
    throw Error(ErrorCode::BadDimension, "expected " + std::to_string(k) + " filter coefficients");
  std::string lcf_name = ar.variable + "_lcf";
  std::string crop_name = ar.variable + "_crop";
  std::string lag_name = ar.variable + "_lagvar";
  if (nl.part_index(lcf_name) >= 0 || nl.net_index(lag_name) >= 0)
    throw Error(ErrorCode::InvalidArgument, ar.variable + " already augmented");

  // Existing consumers, captured before any new pins land on the net.
  auto consumers = nl.nets[ni].inputs;

  Part lcf;
  lcf.name = lcf_name;
  if (ar.coefficients) {
    Vec a = *ar.coefficients;
    lcf.inputs.push_back({"x", n});
    lcf.fn.kind = PartFunction::Kind::Affine;
    lcf.fn.in_dim = n;
    lcf.fn.out_dim = n - k;
    lcf.fn.a = Mat::Zero(n - k, n);
    lcf.fn.c = Vec::Zero(n - k);
    for (int j = 0; j < n - k; ++j)
      for (int i = 1; i <= k; ++i) lcf.fn.a(j, j + k - i) += a[i - 1];
  } else {
    lcf.inputs.push_back({"a", k});
    lcf.inputs.push_back({"x", n});
    lcf.fn.kind = PartFunction::Kind::General;
    lcf.fn.in_dim = k + n;
    lcf.fn.out_dim = n - k;
    lcf.fn.fn = [n, k](const Vec& v) {
      Vec out = Vec::Zero(n - k);
      for (int j = 0; j < n - k; ++j)
        for (int i = 1; i <= k; ++i) out[j] += v[i - 1] * v[k + j + k - i];
      return out;
    };
  }
  lcf.output = {"out", n - k};

  Part crop;
  crop.name = crop_name;
  crop.inputs.push_back({"in", n});
  crop.output = {"out", n - k};
  crop.fn = crop_part_function(n, k);

  nl.parts.push_back(lcf);
  nl.parts.push_back(crop);
  nl.nets[ni].inputs.push_back({lcf_name, "x"});
  nl.nets[ni].inputs.push_back({crop_name, "in"});
  if (!ar.coefficients) {
    Net coef{"ar:" + ar.variable, k, {}, {}, false};
    coef.inputs.push_back({lcf_name, "a"});
    nl.nets.push_back(coef);
  }

  // Filter and crop outputs meet on one twin-output net; every prior consumer
  // gains a lagged duplicate pinned there, inert in its update map.
  Net lagvar{lag_name, n - k, {}, {}, true};
  lagvar.outputs.push_back({lcf_name, "out"});
  lagvar.outputs.push_back({crop_name, "out"});
  for (const auto& pr : consumers) {
    auto& part = nl.part(pr.part);
    std::string pname = "lag:" + pr.port;
    part.inputs.push_back({pname, n - k});
    int old_in = part.fn.in_dim;
    part.fn.in_dim = old_in + (n - k);
    if (part.fn.kind == PartFunction::Kind::Affine) {
      part.fn.a.conservativeResize(Eigen::NoChange, part.fn.in_dim);
      part.fn.a.rightCols(n - k).setZero();
    } else {
      auto inner = part.fn.fn;
      part.fn.fn = [inner, old_in](const Vec& v) { return inner(v.head(old_in)); };
    }
    lagvar.inputs.push_back({pr.part, pname});
  }
  nl.nets.push_back(lagvar);
}

BuiltSheaf regression_sheaf(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "need at least one point");
  Netlist nl;
  nl.series_len = n;
  nl.nets.push_back({"m", 1, {{"line", "m"}}, {}, false});
  nl.nets.push_back({"b", 1, {{"line", "b"}}, {}, false});
  nl.nets.push_back({"x", n, {{"line", "x"}}, {}, false});
  nl.nets.push_back({"y", n, {}, {{"line", "out"}}, false});
  Part line;
  line.name = "line";
  line.inputs = {{"m", 1}, {"b", 1}, {"x", n}};
  line.output = {"out", n};
  line.fn.kind = PartFunction::Kind::General;
  line.fn.in_dim = n + 2;
  line.fn.out_dim = n;
  line.fn.fn = [n](const Vec& v) {
    Vec out(n);
    for (int i = 0; i < n; ++i) out[i] = v[0] * v[2 + i] + v[1];
    return out;
  };
  nl.parts.push_back(line);
  return sheaf_from_netlist(nl);
}

BuiltSheaf feedback_sheaf(std::function<Vec(const Vec&)> f, std::function<Vec(const Vec&)> g,
                          int dim_x, int dim_y) {
  Netlist nl;
  nl.series_len = std::max(dim_x, dim_y);
  nl.nets.push_back({"x", dim_x, {{"f", "x"}}, {{"g", "out"}}, false});
  nl.nets.push_back({"y", dim_y, {{"g", "y"}}, {{"f", "out"}}, false});
  Part pf;
  pf.name = "f";
  pf.inputs = {{"x", dim_x}};
  pf.output = {"out", dim_y};
  pf.fn.kind = PartFunction::Kind::General;
  pf.fn.in_dim = dim_x;
  pf.fn.out_dim = dim_y;
  pf.fn.fn = std::move(f);
  Part pg;
  pg.name = "g";
  pg.inputs = {{"y", dim_y}};
  pg.output = {"out", dim_x};
  pg.fn.kind = PartFunction::Kind::General;
  pg.fn.in_dim = dim_y;
  pg.fn.out_dim = dim_x;
  pg.fn.fn = std::move(g);
  nl.parts.push_back(pf);
  nl.parts.push_back(pg);
  return sheaf_from_netlist(nl);
}

void fill_ties(const BuiltSheaf& bs, Assignment& a) {
  for (size_t i = 0; i < bs.labels.size(); ++i) {
    auto k = bs.info[i].kind;
    bool is_part = k == CellInfo::Kind::Part || k == CellInfo::Kind::CropPart ||
                   k == CellInfo::Kind::LcfPart;
    if (is_part && !a.has[i]) {
      a.values[i] = Vec::Zero(bs.stalk_list[i].dim);
      a.has[i] = true;
    }
  }
  for (const auto& g : bs.ties) {
    const auto& src = g.slots[0];
    if (!a.has[src.cell]) continue;
    for (size_t s = 1; s < g.slots.size(); ++s) {
      const auto& dst = g.slots[s];
      a.values[dst.cell].segment(dst.offset, dst.len) =
          a.values[src.cell].segment(src.offset, src.len);
    }
  }
}

std::vector<Assignment> grid_sections(const BuiltSheaf& bs, const std::vector<double>& grid,
                                      double tol, long cap) {
  if (grid.empty()) return {};
  std::vector<int> gen;  // net cells, enumerated coordinate by coordinate
  long combos = 1;
  for (size_t i = 0; i < bs.labels.size(); ++i) {
    auto k = bs.info[i].kind;
    if (k == CellInfo::Kind::Part || k == CellInfo::Kind::CropPart ||
        k == CellInfo::Kind::LcfPart || k == CellInfo::Kind::Obs)
      continue;
    for (int c = 0; c < bs.stalk_list[i].dim; ++c) gen.push_back(static_cast<int>(i));
    for (int c = 0; c < bs.stalk_list[i].dim; ++c) {
      combos *= static_cast<long>(grid.size());
      if (combos > cap) throw Error(ErrorCode::TooLarge, "grid search space");
    }
  }

  std::vector<Assignment> sections;
  std::vector<int> odo(gen.size(), 0);
  while (true) {
    Assignment a = Assignment::empty(static_cast<int>(bs.labels.size()));
    size_t pos = 0;
    for (size_t i = 0; i < bs.labels.size(); ++i) {
      auto k = bs.info[i].kind;
      if (k == CellInfo::Kind::Part || k == CellInfo::Kind::CropPart ||
          k == CellInfo::Kind::LcfPart || k == CellInfo::Kind::Obs)
        continue;
      Vec v(bs.stalk_list[i].dim);
      for (int c = 0; c < v.size(); ++c) v[c] = grid[odo[pos++]];
      a.set(static_cast<int>(i), v);
    }
    fill_ties(bs, a);
    for (size_t i = 0; i < bs.labels.size(); ++i) {
      if (bs.info[i].kind != CellInfo::Kind::Obs) continue;
      int t = bs.info[i].time;
      int parent = bs.require_cell("net:" + bs.info[i].var);
      a.set(static_cast<int>(i), a.values[parent].segment(t, 1));
    }
    if (is_section(bs.sheaf, a, tol)) sections.push_back(a);

    size_t d = 0;
    while (d < odo.size() && ++odo[d] == static_cast<int>(grid.size())) odo[d++] = 0;
    if (d == odo.size()) break;
  }
  return sections;
}

Assignment induced_assignment(const BuiltSheaf& bs, const Netlist& nl,
                              const TimeseriesTable& data) {
  if (!data.complete()) throw Error(ErrorCode::MissingData, "induced assignment needs full data");
  Assignment a = Assignment::empty(static_cast<int>(bs.labels.size()));

  auto col_of = [&](const std::string& var) {
    for (int c = 0; c < data.cols(); ++c)
      if (data.names[c] == var) return c;
    throw Error(ErrorCode::UnknownVariable, var + " not in table");
  };

  // Source nets first: observed series, fixed filter seeds, zero coefficients.
  for (size_t i = 0; i < bs.labels.size(); ++i) {
    const auto& ci = bs.info[i];
    if (ci.kind == CellInfo::Kind::VarNet) {
      int c = col_of(ci.var);
      Vec v(data.rows());
      for (int t = 0; t < data.rows(); ++t) v[t] = data.values(t, c);
      a.set(static_cast<int>(i), v);
    } else if (ci.kind == CellInfo::Kind::CoefNet) {
      a.set(static_cast<int>(i), Vec::Zero(bs.stalk_list[i].dim));
    } else if (ci.kind == CellInfo::Kind::ArNet) {
      Vec v = Vec::Zero(bs.stalk_list[i].dim);
      v[0] = 1.0;
      a.set(static_cast<int>(i), v);
    }
  }

  // Derived nets are pushed down through their crop driver so the result
  // depends only on data, never on coefficient seeds.
  for (size_t i = 0; i < bs.labels.size(); ++i) {
    const auto& ci = bs.info[i];
    if (ci.kind != CellInfo::Kind::PredNet && ci.kind != CellInfo::Kind::LagvarNet) continue;
    int net_idx = nl.net_index(bs.labels[i].substr(4));
    if (net_idx < 0) throw Error(ErrorCode::UnknownCell, bs.labels[i]);
    const Net& net = nl.nets[net_idx];
    const Part* driver = nullptr;
    for (const auto& pr : net.outputs) {
      const Part& p = nl.part(pr.part);
      auto pk = classify_part(p.name).kind;
      if (pk == CellInfo::Kind::CropPart) driver = &p;
    }
    if (!driver && !net.outputs.empty()) driver = &nl.part(net.outputs[0].part);
    if (!driver) continue;
    Vec in(driver->stalk_dim());
    for (size_t q = 0; q < driver->inputs.size(); ++q) {
      // Every crop input is a plain variable port fed by one net.
      const Port& port = driver->inputs[q];
      std::string feeding;
      for (const auto& n2 : nl.nets)
        for (const auto& pr : n2.inputs)
          if (pr.part == driver->name && pr.port == port.name) feeding = n2.name;
      int src = bs.require_cell("net:" + feeding);
      if (!a.has[src])
        throw Error(ErrorCode::MissingData, "cannot derive " + bs.labels[i]);
      in.segment(driver->input_offset(static_cast<int>(q)), port.dim) = a.values[src];
    }
    a.set(static_cast<int>(i), driver->fn.apply(in));
  }

  fill_ties(bs, a);

  for (size_t i = 0; i < bs.labels.size(); ++i) {
    if (bs.info[i].kind != CellInfo::Kind::Obs) continue;
    int parent = bs.require_cell("net:" + bs.info[i].var);
    a.set(static_cast<int>(i), a.values[parent].segment(bs.info[i].time, 1));
  }
  return a;
}

ModelSheaf build_model_sheaf(const DsemSpec& spec, int series_len, const BuildOptions& opts) {
  ModelSheaf ms;
  ms.netlist = netlist_from_dsem(spec, series_len);
  for (const auto& v : spec.variables) {
    int k = opts.ar_override ? *opts.ar_override : v.ar_order;
    if (k <= 0) continue;
    ArPartSpec ar;
    ar.variable = v.name;
    ar.order = k;
    if (auto it = opts.ar_fixed.find(v.name); it != opts.ar_fixed.end()) ar.coefficients = it->second;
    add_ar(ms.netlist, ar);
  }
  std::map<std::string, double> weights = spec.weights;
  for (const auto& [k, v] : opts.weights) weights[k] = v;
  ms.built = sheaf_from_netlist(ms.netlist, weights);
  ms.built.sheaf.p_norm = spec.p_norm;
  if (opts.explode) explode_observations(ms.built);
  return ms;
}

}  // namespace netsheaf
