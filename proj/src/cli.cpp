#include "netsheaf/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "netsheaf/inference.hpp"
#include "netsheaf/sheaf_builder.hpp"
#include "netsheaf/subsystems.hpp"

namespace netsheaf {

namespace {

using json = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ParseError, path + ": cannot write");
  out << text;
}

std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw Error(ErrorCode::ParseError, where + " is missing \"" + key + "\"");
  return j.at(key);
}

double need_number(const json& j, const char* key, const std::string& where) {
  const json& v = need(j, key, where);
  if (!v.is_number()) throw Error(ErrorCode::ParseError, where + "." + key + " must be a number");
  return v.get<double>();
}

std::string need_string(const json& j, const char* key, const std::string& where) {
  const json& v = need(j, key, where);
  if (!v.is_string()) throw Error(ErrorCode::ParseError, where + "." + key + " must be a string");
  return v.get<std::string>();
}

}  // namespace

DsemSpec parse_model_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, origin + ": " + e.what());
  }

  DsemSpec spec;
  const json& vars = need(j, "variables", origin);
  if (!vars.is_array() || vars.empty())
    throw Error(ErrorCode::ParseError, origin + ".variables must be a non-empty list");
  for (size_t i = 0; i < vars.size(); ++i) {
    std::string where = origin + ".variables[" + std::to_string(i) + "]";
    VariableSpec v;
    v.name = need_string(vars[i], "name", where);
    if (vars[i].contains("ar_order")) {
      if (!vars[i]["ar_order"].is_number_integer() || vars[i]["ar_order"].get<int>() < 0)
        throw Error(ErrorCode::ParseError, where + ".ar_order must be a non-negative integer");
      v.ar_order = vars[i]["ar_order"].get<int>();
    }
    if (vars[i].contains("transform")) {
      std::string t = vars[i]["transform"].get<std::string>();
      if (t == "none")
        v.transform = Transform::None;
      else if (t == "log_center")
        v.transform = Transform::LogCenter;
      else
        throw Error(ErrorCode::ParseError, where + ".transform must be none or log_center");
    }
    spec.variables.push_back(std::move(v));
  }

  if (j.contains("paths")) {
    const json& paths = j.at("paths");
    if (!paths.is_array()) throw Error(ErrorCode::ParseError, origin + ".paths must be a list");
    for (size_t i = 0; i < paths.size(); ++i) {
      std::string where = origin + ".paths[" + std::to_string(i) + "]";
      PathEdge e;
      e.from = need_string(paths[i], "from", where);
      e.to = need_string(paths[i], "to", where);
      const json& lag = need(paths[i], "lag", where);
      if (!lag.is_number_integer() || lag.get<int>() < 0)
        throw Error(ErrorCode::ParseError, where + ".lag must be a non-negative integer");
      e.lag = lag.get<int>();
      const json& c = need(paths[i], "coefficient", where);
      if (c.is_number())
        e.coeff = Coefficient::fixed(c.get<double>());
      else if (c.is_string() && c.get<std::string>() == "free")
        e.coeff = Coefficient::free_slot();
      else
        throw Error(ErrorCode::ParseError, where + ".coefficient must be a number or \"free\"");
      if (paths[i].contains("sign")) {
        std::string s = paths[i]["sign"].get<std::string>();
        if (s == "+")
          e.sign = 1;
        else if (s == "-")
          e.sign = -1;
        else if (s == "?")
          e.sign = 0;
        else
          throw Error(ErrorCode::ParseError, where + ".sign must be +, - or ?");
      }
      spec.edges.push_back(std::move(e));
    }
  }

  if (j.contains("options")) {
    const json& o = j.at("options");
    std::string where = origin + ".options";
    if (o.contains("h")) {
      spec.h = need_number(o, "h", origin);
      if (!(spec.h > 0)) throw Error(ErrorCode::ParseError, where + ".h must be positive");
    }
    if (o.contains("p_norm")) {
      spec.p_norm = need_number(o, "p_norm", origin);
      if (!(spec.p_norm >= 1))
        throw Error(ErrorCode::ParseError, where + ".p_norm must be at least 1");
    }
    if (o.contains("weights")) {
      if (!o["weights"].is_object())
        throw Error(ErrorCode::ParseError, where + ".weights must be an object");
      for (auto& [k, v] : o["weights"].items()) {
        if (!v.is_number())
          throw Error(ErrorCode::ParseError, where + ".weights." + k + " must be a number");
        spec.weights[k] = v.get<double>();
      }
    }
  }
  return spec;
}

DsemSpec ingest_model(const std::string& path) { return parse_model_text(read_file(path), path); }

TimeseriesTable parse_csv_text(const std::string& text, const DsemSpec& spec,
                               const std::string& origin) {
  auto fail = [&](int line, int col, const std::string& msg) -> Error {
    return Error(ErrorCode::ParseError,
                 origin + ": line " + std::to_string(line) + ", column " + std::to_string(col) +
                     ": " + msg);
  };

  std::vector<std::vector<std::string>> rows;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() && in.eof()) break;
      std::vector<std::string> fields;
      std::string cur;
      for (char ch : line) {
        if (ch == ',') {
          fields.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(ch);
        }
      }
      fields.push_back(cur);
      rows.push_back(std::move(fields));
    }
  }
  if (rows.empty()) throw fail(1, 1, "empty file");
  const auto& header = rows[0];
  if (header.empty() || header[0] != "time") throw fail(1, 1, "first column must be \"time\"");

  // Column -> variable mapping; all model variables get a column in the
  // result, absent ones entirely missing.
  std::vector<int> col_var(header.size(), -1);
  for (size_t c = 1; c < header.size(); ++c) {
    bool found = false;
    for (int v = 0; v < spec.var_count() && !found; ++v)
      if (spec.variables[v].name == header[c]) {
        col_var[c] = v;
        found = true;
      }
    if (!found) throw fail(1, static_cast<int>(c + 1), "unknown variable " + header[c]);
    for (size_t c2 = 1; c2 < c; ++c2)
      if (header[c2] == header[c])
        throw fail(1, static_cast<int>(c + 1), "duplicate column " + header[c]);
  }

  TimeseriesTable tab;
  for (const auto& v : spec.variables) tab.names.push_back(v.name);
  const int n = static_cast<int>(rows.size()) - 1;
  tab.values = Mat::Zero(n, spec.var_count());
  tab.present.setConstant(n, spec.var_count(), false);

  for (int r = 0; r < n; ++r) {
    const auto& fields = rows[r + 1];
    int line = r + 2;
    if (fields.size() != header.size())
      throw fail(line, 1,
                 "expected " + std::to_string(header.size()) + " fields, got " +
                     std::to_string(fields.size()));
    const std::string& ts = fields[0];
    long t = 0;
    auto res = std::from_chars(ts.data(), ts.data() + ts.size(), t);
    if (res.ec != std::errc() || res.ptr != ts.data() + ts.size())
      throw fail(line, 1, "bad time value \"" + ts + "\"");
    if (!tab.time.empty() && t <= tab.time.back())
      throw fail(line, 1, "time must be strictly increasing");
    tab.time.push_back(t);
    for (size_t c = 1; c < fields.size(); ++c) {
      const std::string& cell = fields[c];
      if (cell.empty()) continue;  // missing value
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size())
        throw fail(line, static_cast<int>(c + 1), "bad number \"" + cell + "\"");
      tab.values(r, col_var[c]) = v;
      tab.present(r, col_var[c]) = true;
    }
  }
  return tab;
}

std::vector<TransformReport> apply_transforms(const DsemSpec& spec, TimeseriesTable& table) {
  std::vector<TransformReport> out;
  for (int v = 0; v < spec.var_count(); ++v) {
    if (spec.variables[v].transform != Transform::LogCenter) continue;
    int c = -1;
    for (int k = 0; k < table.cols(); ++k)
      if (table.names[k] == spec.variables[v].name) c = k;
    if (c < 0) continue;
    double sum = 0.0;
    int count = 0;
    for (int t = 0; t < table.rows(); ++t) {
      if (!table.present(t, c)) continue;
      if (!(table.values(t, c) > 0.0))
        throw Error(ErrorCode::NonPositiveForLog,
                    table.names[c] + " at time " + std::to_string(table.time[t]));
      table.values(t, c) = std::log(table.values(t, c));
      sum += table.values(t, c);
      ++count;
    }
    double center = count > 0 ? sum / count : 0.0;
    for (int t = 0; t < table.rows(); ++t)
      if (table.present(t, c)) table.values(t, c) -= center;
    out.push_back({table.names[c], "log_center", center});
  }
  return out;
}

TimeseriesTable ingest_data(const std::string& path, const DsemSpec& spec,
                            std::vector<TransformReport>* transforms) {
  TimeseriesTable tab = parse_csv_text(read_file(path), spec, path);
  auto applied = apply_transforms(spec, tab);
  if (transforms) *transforms = std::move(applied);
  return tab;
}

std::string format_csv(const TimeseriesTable& table) {
  std::ostringstream os;
  os << "time";
  for (const auto& n : table.names) os << "," << n;
  os << "\n";
  for (int t = 0; t < table.rows(); ++t) {
    os << table.time[t];
    for (int c = 0; c < table.cols(); ++c) {
      os << ",";
      if (table.present(t, c)) os << fmt_double(table.values(t, c));
    }
    os << "\n";
  }
  return os.str();
}

namespace {

struct CommonArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string completed;
  std::string fit_report;
  int ar = -1;  // -1 keeps the per-variable orders
  bool free_paths = false;
  bool no_ties = false;
  std::uint64_t seed = 17;
  int restarts = 4;
  int max_iters = 10000;
  int top = 10;
};

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_file(out_path, j.dump(2) + "\n");
}

void emit_text(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else
    write_file(out_path, text);
}

// Substitute a previous fit's estimates into the free slots of the model.
std::map<std::string, Vec> apply_fit_report(DsemSpec& spec, const std::string& path) {
  std::map<std::string, Vec> ar_fixed;
  if (path.empty()) return ar_fixed;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  std::map<std::string, double> est;
  if (j.contains("coefficients"))
    for (const auto& c : j.at("coefficients"))
      est[c.at("path").get<std::string>()] = c.at("estimate").get<double>();
  for (auto& e : spec.edges)
    if (e.coeff.free) {
      auto it = est.find(edge_key(e));
      if (it != est.end()) e.coeff = Coefficient::fixed(it->second);
    }
  if (j.contains("ar_coefficients"))
    for (const auto& a : j.at("ar_coefficients")) {
      const auto& arr = a.at("estimate");
      Vec v(arr.size());
      for (size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
      ar_fixed[a.at("variable").get<std::string>()] = v;
    }
  return ar_fixed;
}

ModelSheaf build_sheaf(const DsemSpec& spec, int series_len, const CommonArgs& a,
                       const std::map<std::string, Vec>& ar_fixed, bool explode) {
  BuildOptions o;
  if (a.ar >= 0) o.ar_override = a.ar;
  o.ar_fixed = ar_fixed;
  o.explode = explode;
  return build_model_sheaf(spec, series_len, o);
}

void require_numeric(const BuiltSheaf& bs) {
  for (size_t i = 0; i < bs.labels.size(); ++i)
    if (bs.info[i].kind == CellInfo::Kind::CoefNet || bs.info[i].kind == CellInfo::Kind::ArNet)
      throw Error(ErrorCode::FreeCoefficientPresent,
                  bs.labels[i] + " is free; fit first and pass --fit-report");
}

SolveOptions solve_options(const CommonArgs& a) {
  SolveOptions o;
  o.seed = a.seed;
  o.restarts = a.restarts;
  o.max_iters = a.max_iters;
  return o;
}

json coefficients_json(const DsemSpec& spec, const std::map<std::string, double>& fitted) {
  json out = json::array();
  for (const auto& e : spec.edges) {
    json c;
    c["path"] = edge_key(e);
    bool free = e.coeff.free;
    double value = free ? fitted.at(edge_key(e)) : e.coeff.value;
    c["estimate"] = value;
    c["free"] = free;
    c["sign"] = e.sign > 0 ? "+" : e.sign < 0 ? "-" : "?";
    if (e.sign != 0) c["sign_ok"] = (e.sign > 0) == (value > 0);
    out.push_back(std::move(c));
  }
  return out;
}

json ar_json(const FitResult& fr) {
  json out = json::array();
  for (const auto& [var, v] : fr.ar) {
    json a;
    a["variable"] = var;
    a["order"] = static_cast<int>(v.size());
    a["estimate"] = json::array();
    for (int i = 0; i < v.size(); ++i) a["estimate"].push_back(v[i]);
    out.push_back(std::move(a));
  }
  return out;
}

json transforms_json(const std::vector<TransformReport>& ts) {
  json out = json::array();
  for (const auto& t : ts)
    out.push_back(json{{"variable", t.variable}, {"kind", t.kind}, {"center", t.center}});
  return out;
}

json residual_json(const BuiltSheaf& bs, const SolveResult& res, int top) {
  json out = json::array();
  for (const auto& line : residual_report(bs, res, top)) {
    json r;
    r["low"] = line.low;
    r["high"] = line.high;
    r["kind"] = line.kind;
    r["variable"] = line.variable;
    r["time"] = line.time;
    r["contribution"] = line.contribution;
    r["share"] = line.share;
    out.push_back(std::move(r));
  }
  return out;
}

json assignment_json(const BuiltSheaf& bs, const Assignment& a) {
  json out = json::object();
  for (size_t i = 0; i < bs.labels.size(); ++i) {
    if (!a.has[i]) continue;
    json arr = json::array();
    for (int c = 0; c < a.values[i].size(); ++c) arr.push_back(a.values[i][c]);
    out[bs.labels[i]] = std::move(arr);
  }
  return out;
}

json solve_json(const SolveResult& s) {
  json out;
  out["radius"] = s.radius;
  out["converged"] = s.converged;
  out["iterations"] = s.iterations;
  out["non_unique"] = s.non_unique;
  out["free_parameters"] = s.free_parameters;
  out["restarts"] = s.restarts_used;
  return out;
}

int cmd_simulate(const CommonArgs& a, int steps, double noise,
                 const std::vector<std::string>& inits) {
  DsemSpec spec = ingest_model(a.model);
  spec.validate();
  std::map<std::string, double> init;
  for (const auto& kv : inits) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ParseError, "--init expects name=value, got " + kv);
    std::string name = kv.substr(0, eq);
    spec.index_of(name);  // UnknownVariable on typos
    init[name] = std::stod(kv.substr(eq + 1));
  }
  TimeseriesTable tab = simulate(spec, steps, noise, a.seed, init);
  emit_text(format_csv(tab), a.out);
  return 0;
}

int cmd_fit(const CommonArgs& a) {
  DsemSpec spec = ingest_model(a.model);
  if (a.free_paths)
    for (auto& e : spec.edges) e.coeff = Coefficient::free_slot();
  spec.validate();
  std::vector<TransformReport> transforms;
  TimeseriesTable data = ingest_data(a.data, spec, &transforms);
  ModelSheaf ms = build_sheaf(spec, data.rows(), a, {}, true);
  FitResult fr = fit(ms.built, data, solve_options(a), !a.no_ties);

  json rep;
  rep["command"] = "fit";
  rep["model"] = a.model;
  rep["data"] = a.data;
  json sj = solve_json(fr.solve);
  for (auto& [k, v] : sj.items()) rep[k] = v;
  rep["coefficients"] = coefficients_json(spec, fr.coefficients);
  rep["ar_coefficients"] = ar_json(fr);
  rep["transforms"] = transforms_json(transforms);
  rep["residual_top"] = residual_json(ms.built, fr.solve, a.top);
  rep["assignment"] = assignment_json(ms.built, fr.solve.assignment);
  rep["diagnostics"] = json::array();
  emit(rep, a.out);
  if (!a.completed.empty()) write_file(a.completed, format_csv(fr.completed));
  return 0;
}

int cmd_complete(const CommonArgs& a, const char* name) {
  DsemSpec spec = ingest_model(a.model);
  std::map<std::string, Vec> ar_fixed = apply_fit_report(spec, a.fit_report);
  spec.validate();
  if (spec.has_free_coefficient())
    throw Error(ErrorCode::FreeCoefficientPresent,
                "path coefficients must be numeric; fit first and pass --fit-report");
  std::vector<TransformReport> transforms;
  TimeseriesTable data = ingest_data(a.data, spec, &transforms);
  ModelSheaf ms = build_sheaf(spec, data.rows(), a, ar_fixed, true);
  require_numeric(ms.built);
  FitResult fr = fit(ms.built, data, solve_options(a), !a.no_ties);

  json filled = json::array();
  for (int t = 0; t < data.rows(); ++t)
    for (int c = 0; c < data.cols(); ++c)
      if (!data.present(t, c))
        filled.push_back(json{{"variable", data.names[c]},
                              {"time", data.time[t]},
                              {"value", fr.completed.values(t, c)}});

  json rep;
  rep["command"] = name;
  rep["model"] = a.model;
  rep["data"] = a.data;
  json sj = solve_json(fr.solve);
  for (auto& [k, v] : sj.items()) rep[k] = v;
  rep["filled"] = std::move(filled);
  rep["transforms"] = transforms_json(transforms);
  rep["residual_top"] = residual_json(ms.built, fr.solve, a.top);
  rep["diagnostics"] = json::array();
  emit(rep, a.out);
  if (!a.completed.empty()) write_file(a.completed, format_csv(fr.completed));
  return 0;
}

int cmd_residuals(const CommonArgs& a) {
  DsemSpec spec = ingest_model(a.model);
  if (a.free_paths)
    for (auto& e : spec.edges) e.coeff = Coefficient::free_slot();
  std::map<std::string, Vec> ar_fixed = apply_fit_report(spec, a.fit_report);
  spec.validate();
  std::vector<TransformReport> transforms;
  TimeseriesTable data = ingest_data(a.data, spec, &transforms);
  ModelSheaf ms = build_sheaf(spec, data.rows(), a, ar_fixed, true);
  FitResult fr = fit(ms.built, data, solve_options(a), !a.no_ties);

  json rep;
  rep["command"] = "residuals";
  rep["model"] = a.model;
  rep["data"] = a.data;
  rep["radius"] = fr.solve.radius;
  rep["residual_top"] = residual_json(ms.built, fr.solve, a.top);
  rep["transforms"] = transforms_json(transforms);
  rep["diagnostics"] = json::array();
  emit(rep, a.out);
  return 0;
}

int cmd_subsystems(const CommonArgs& a, const std::string& dot_path, long cap) {
  DsemSpec spec = ingest_model(a.model);
  spec.validate();
  DsemDag dag = DsemDag::from_spec(spec);
  auto sets = in_closed_sets(dag, cap);
  std::string dot = in_closed_lattice_dot(dag, sets);

  json rep;
  rep["command"] = "subsystems";
  rep["model"] = a.model;
  rep["vertices"] = dag.vertices;
  rep["condensed"] = dag.condensed;
  rep["count"] = sets.size();
  json jsets = json::array();
  for (const auto& s : sets) {
    json names = json::array();
    for (int v : s) names.push_back(dag.vertices[v]);
    jsets.push_back(std::move(names));
  }
  rep["sets"] = std::move(jsets);
  if (!dag.condensed && !spec.has_free_coefficient()) {
    SubsystemSheaf ss = subsystem_sheaf_from_dag(dag, &spec, cap);
    rep["commuting_residual"] = ss.commuting_residual();
  }
  rep["dot"] = dot;
  rep["diagnostics"] = json::array();
  emit(rep, a.out);
  if (!dot_path.empty()) write_file(dot_path, dot);
  return 0;
}

int cmd_check(const CommonArgs& a, const std::string& assignment_path, int length, double tol,
              bool hasse_only) {
  DsemSpec spec = ingest_model(a.model);
  if (a.free_paths)
    for (auto& e : spec.edges) e.coeff = Coefficient::free_slot();
  std::map<std::string, Vec> ar_fixed = apply_fit_report(spec, a.fit_report);
  spec.validate();

  json rep;
  rep["command"] = "check";
  rep["model"] = a.model;
  rep["valid"] = true;

  Assignment asg = Assignment::empty(0);
  ModelSheaf ms;
  bool have_assignment = false;
  std::vector<TransformReport> transforms;

  if (!assignment_path.empty()) {
    json j;
    try {
      j = json::parse(read_file(assignment_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, assignment_path + ": " + e.what());
    }
    if (j.contains("assignment")) j = j.at("assignment");
    int series_len = -1;
    for (const auto& v : spec.variables)
      if (j.contains("net:" + v.name)) series_len = static_cast<int>(j.at("net:" + v.name).size());
    if (series_len < 2)
      throw Error(ErrorCode::ParseError, assignment_path + ": no usable series cell");
    bool exploded = false;
    for (auto& [k, v] : j.items()) exploded = exploded || k.rfind("obs:", 0) == 0;
    ms = build_sheaf(spec, series_len, a, ar_fixed, exploded);
    asg = Assignment::empty(static_cast<int>(ms.built.labels.size()));
    for (auto& [label, arr] : j.items()) {
      int cell = ms.built.require_cell(label);
      Vec v(arr.size());
      for (size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
      if (v.size() != ms.built.sheaf.stalks[cell].dim)
        throw Error(ErrorCode::BadDimension, label + " has the wrong dimension");
      asg.set(cell, v);
    }
    have_assignment = true;
  } else if (!a.data.empty()) {
    TimeseriesTable data = ingest_data(a.data, spec, &transforms);
    ms = build_sheaf(spec, data.rows(), a, ar_fixed, false);
    require_numeric(ms.built);
    asg = induced_assignment(ms.built, ms.netlist, data);
    have_assignment = true;
  } else {
    ms = build_sheaf(spec, length, a, ar_fixed, false);
  }

  auto violations = check_functoriality(ms.built.sheaf);
  rep["functorial"] = violations.empty();
  json jv = json::array();
  for (const auto& v : violations)
    jv.push_back(json{{"detail", v.detail}, {"deviation", v.deviation}});
  rep["violations"] = std::move(jv);
  rep["cells"] = ms.built.labels.size();

  if (have_assignment) {
    if (hasse_only) ms.built.sheaf.hasse_only = true;
    double r = consistency_radius(ms.built.sheaf, asg);
    rep["radius"] = r;
    rep["tolerance"] = tol;
    rep["is_section"] = asg.total() && r <= tol;
  }
  rep["transforms"] = transforms_json(transforms);
  rep["diagnostics"] = json::array();
  emit(rep, a.out);
  return violations.empty() ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Netlist sheaf toolkit: fit, simulate and dissect timeseries path models"};
  app.require_subcommand(1);

  CommonArgs a;
  int steps = 10;
  double noise = 0.0;
  std::vector<std::string> inits;
  std::string dot_path;
  std::string assignment_path;
  long cap = 1L << 16;
  int length = 8;
  double tol = 1e-9;
  bool hasse_only = false;

  auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--model", a.model, "model JSON file")
        ->required()
        ->check(CLI::ExistingFile);
  };
  auto add_data = [&](CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--data", a.data, "data CSV file")->check(CLI::ExistingFile);
    if (required) opt->required();
  };
  auto add_solver = [&](CLI::App* cmd) {
    cmd->add_option("--seed", a.seed, "random seed");
    cmd->add_option("--restarts", a.restarts, "optimizer starts")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iters", a.max_iters, "iteration budget")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-ties", a.no_ties, "model copies as residual terms, not shared slots");
    cmd->add_option("--ar", a.ar, "filter order for every variable, 0 disables")
        ->check(CLI::NonNegativeNumber);
  };
  auto add_out = [&](CLI::App* cmd) { cmd->add_option("--out", a.out, "report file"); };

  auto* sim = app.add_subcommand("simulate", "integrate the model and write a CSV");
  add_model(sim);
  sim->add_option("--steps", steps, "number of samples")->required()->check(CLI::PositiveNumber);
  sim->add_option("--noise", noise, "noise standard deviation")->check(CLI::NonNegativeNumber);
  sim->add_option("--seed", a.seed, "random seed");
  sim->add_option("--init", inits, "seed value, name=value");
  add_out(sim);

  auto* fit_cmd = app.add_subcommand("fit", "estimate free coefficients and fill the series");
  add_model(fit_cmd);
  add_data(fit_cmd, true);
  add_solver(fit_cmd);
  fit_cmd->add_flag("--free-paths", a.free_paths, "treat every path coefficient as free");
  fit_cmd->add_option("--top", a.top, "residual lines to report");
  add_out(fit_cmd);
  fit_cmd->add_option("--completed", a.completed, "completed series CSV file");

  auto* pred = app.add_subcommand("predict", "solve for unobserved cells under fixed paths");
  auto* imp = app.add_subcommand("impute", "fill gaps with coefficients frozen");
  for (auto* cmd : {pred, imp}) {
    add_model(cmd);
    add_data(cmd, true);
    add_solver(cmd);
    cmd->add_option("--fit-report", a.fit_report, "earlier fit report supplying coefficients")
        ->check(CLI::ExistingFile);
    cmd->add_option("--top", a.top, "residual lines to report");
    add_out(cmd);
    cmd->add_option("--completed", a.completed, "completed series CSV file");
  }

  auto* res = app.add_subcommand("residuals", "rank the worst relations of a fit");
  add_model(res);
  add_data(res, true);
  add_solver(res);
  res->add_flag("--free-paths", a.free_paths, "treat every path coefficient as free");
  res->add_option("--fit-report", a.fit_report, "earlier fit report supplying coefficients")
      ->check(CLI::ExistingFile);
  res->add_option("--top", a.top, "residual lines to report");
  add_out(res);

  auto* sub = app.add_subcommand("subsystems", "enumerate closed variable sets");
  add_model(sub);
  sub->add_option("--dot", dot_path, "lattice drawing file");
  sub->add_option("--cap", cap, "largest family to enumerate");
  add_out(sub);

  auto* chk = app.add_subcommand("check", "validate a model and test an assignment");
  add_model(chk);
  add_data(chk, false);
  chk->add_option("--assignment", assignment_path, "assignment JSON (or fit report)")
      ->check(CLI::ExistingFile);
  chk->add_option("--fit-report", a.fit_report, "earlier fit report supplying coefficients")
      ->check(CLI::ExistingFile);
  chk->add_flag("--free-paths", a.free_paths, "treat every path coefficient as free");
  chk->add_option("--ar", a.ar, "filter order for every variable, 0 disables")
      ->check(CLI::NonNegativeNumber);
  chk->add_option("--length", length, "series length for structure-only checks")
      ->check(CLI::PositiveNumber);
  chk->add_option("--tol", tol, "section tolerance");
  chk->add_flag("--hasse-only", hasse_only, "measure covering relations only");
  add_out(chk);

  std::vector<std::string> full = args;
  full.insert(full.begin(), "netsheaf");
  std::vector<const char*> argv;
  for (const auto& s : full) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(a, steps, noise, inits);
    if (fit_cmd->parsed()) return cmd_fit(a);
    if (pred->parsed()) return cmd_complete(a, "predict");
    if (imp->parsed()) return cmd_complete(a, "impute");
    if (res->parsed()) return cmd_residuals(a);
    if (sub->parsed()) return cmd_subsystems(a, dot_path, cap);
    if (chk->parsed()) return cmd_check(a, assignment_path, length, tol, hasse_only);
  } catch (const Error& e) {
    json rep;
    rep["diagnostics"] = json::array({json{{"error", e.what()}}});
    std::cerr << rep.dump(2) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace netsheaf
