#include "netsheaf/netlist.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace netsheaf {

Vec PartFunction::apply(const Vec& x) const {
  if (x.size() != in_dim) throw Error(ErrorCode::BadDimension, "part function input size");
  if (kind == Kind::Affine) return a * x + c;
  return fn(x);
}

int Part::stalk_dim() const {
  int d = 0;
  for (const auto& p : inputs) d += p.dim;
  return d;
}

int Part::input_offset(int port_index) const {
  int off = 0;
  for (int i = 0; i < port_index; ++i) off += inputs[i].dim;
  return off;
}

int Part::input_index(const std::string& port_name) const {
  for (size_t i = 0; i < inputs.size(); ++i)
    if (inputs[i].name == port_name) return static_cast<int>(i);
  return -1;
}

int Netlist::part_index(const std::string& name) const {
  for (size_t i = 0; i < parts.size(); ++i)
    if (parts[i].name == name) return static_cast<int>(i);
  return -1;
}

int Netlist::net_index(const std::string& name) const {
  for (size_t i = 0; i < nets.size(); ++i)
    if (nets[i].name == name) return static_cast<int>(i);
  return -1;
}

Part& Netlist::part(const std::string& name) {
  int i = part_index(name);
  if (i < 0) throw Error(ErrorCode::UnknownVariable, "part " + name);
  return parts[i];
}
const Part& Netlist::part(const std::string& name) const {
  return const_cast<Netlist*>(this)->part(name);
}
Net& Netlist::net(const std::string& name) {
  int i = net_index(name);
  if (i < 0) throw Error(ErrorCode::UnknownVariable, "net " + name);
  return nets[i];
}
const Net& Netlist::net(const std::string& name) const {
  return const_cast<Netlist*>(this)->net(name);
}

namespace {

struct InboundEdge {
  int spec_index;
  int lag;
  double value;
  bool free;
};

// Update map of one part: out[t - d] = h * sum_e gamma_e * in_e[t - lag_e].
PartFunction dsem_part_function(const std::vector<InboundEdge>& in_edges, double h, int n,
                                int d) {
  PartFunction f;
  int m = static_cast<int>(in_edges.size());
  f.in_dim = m * n;
  int free_count = 0;
  for (const auto& e : in_edges) free_count += e.free ? 1 : 0;
  f.in_dim += free_count;
  f.out_dim = n - d;
  bool any_free = free_count > 0;
  if (!any_free) {
    f.kind = PartFunction::Kind::Affine;
    f.a = Mat::Zero(f.out_dim, f.in_dim);
    f.c = Vec::Zero(f.out_dim);
    for (int e = 0; e < m; ++e)
      for (int t = d; t < n; ++t) f.a(t - d, e * n + (t - in_edges[e].lag)) += h * in_edges[e].value;
    return f;
  }
  f.kind = PartFunction::Kind::General;
  std::vector<InboundEdge> edges = in_edges;
  f.fn = [edges, h, n, d, m](const Vec& x) {
    Vec out = Vec::Zero(n - d);
    int coef_slot = m * n;
    for (int e = 0; e < m; ++e) {
      double gamma = edges[e].free ? x[coef_slot++] : edges[e].value;
      for (int t = d; t < n; ++t) out[t - d] += h * gamma * x[e * n + (t - edges[e].lag)];
    }
    return out;
  };
  return f;
}

PartFunction crop_function(int n, int d) {
  PartFunction f;
  f.kind = PartFunction::Kind::Affine;
  f.in_dim = n;
  f.out_dim = n - d;
  f.a = Mat::Zero(n - d, n);
  for (int t = d; t < n; ++t) f.a(t - d, t) = 1.0;
  f.c = Vec::Zero(n - d);
  return f;
}

}  // namespace

Netlist netlist_from_dsem(const DsemSpec& spec, int series_len) {
  spec.validate();
  if (series_len < 2) throw Error(ErrorCode::InvalidArgument, "series_len too small");
  auto dvec = spec.max_inbound_lag();
  Netlist nl;
  nl.series_len = series_len;

  for (const auto& v : spec.variables) nl.nets.push_back({v.name, series_len, {}, {}, false});

  for (int k = 0; k < spec.var_count(); ++k) {
    std::vector<InboundEdge> in_edges;
    for (size_t i = 0; i < spec.edges.size(); ++i) {
      const auto& e = spec.edges[i];
      if (spec.index_of(e.to) != k) continue;
      in_edges.push_back({static_cast<int>(i), e.lag, e.coeff.value, e.coeff.free});
    }
    if (in_edges.empty()) continue;
    int d = dvec[k];
    if (d > series_len - 2) throw Error(ErrorCode::InvalidArgument, "series_len too small for lags");

    Part part;
    part.name = spec.variables[k].name;
    for (const auto& ie : in_edges) {
      const auto& e = spec.edges[ie.spec_index];
      part.inputs.push_back({"in:" + edge_key(e), series_len});
      nl.net(e.from).inputs.push_back({part.name, "in:" + edge_key(e)});
    }
    for (const auto& ie : in_edges) {
      if (!ie.free) continue;
      const auto& e = spec.edges[ie.spec_index];
      std::string cname = "coef:" + edge_key(e);
      part.inputs.push_back({cname, 1});
      if (nl.net_index(cname) < 0) nl.nets.push_back({cname, 1, {}, {}, false});
      nl.net(cname).inputs.push_back({part.name, cname});
    }
    part.output = {"out", series_len - d};
    part.fn = dsem_part_function(in_edges, spec.h, series_len, d);
    nl.parts.push_back(part);

    if (d == 0) {
      nl.net(part.name).outputs.push_back({part.name, "out"});
    } else {
      // Determined suffix meets the cropped series on a twin-output net.
      std::string cname = part.name + "_predcrop";
      Part crop;
      crop.name = cname;
      crop.inputs.push_back({"in", series_len});
      crop.output = {"out", series_len - d};
      crop.fn = crop_function(series_len, d);
      nl.parts.push_back(crop);
      nl.net(part.name).inputs.push_back({cname, "in"});
      Net pred{part.name + "_pred", series_len - d, {}, {}, true};
      pred.outputs.push_back({part.name, "out"});
      pred.outputs.push_back({cname, "out"});
      nl.nets.push_back(pred);
    }
  }
  return nl;
}

std::vector<Diagnostic> validate(const Netlist& nl) {
  std::vector<Diagnostic> out;
  std::map<std::pair<std::string, std::string>, int> port_uses;
  std::set<std::string> part_names;
  for (const auto& p : nl.parts)
    if (!part_names.insert(p.name).second) out.push_back({"DuplicatePart", p.name, "part name reused"});
  std::set<std::string> net_names;
  for (const auto& n : nl.nets)
    if (!net_names.insert(n.name).second) out.push_back({"DuplicateNet", n.name, "net name reused"});

  for (const auto& n : nl.nets) {
    if (!n.unchecked && n.outputs.size() > 1)
      out.push_back({"MultipleDrivers", n.name, "net driven by more than one output port"});
    for (const auto& pr : n.inputs) {
      int pi = nl.part_index(pr.part);
      if (pi < 0) {
        out.push_back({"UnknownPart", n.name, "input pin names missing part " + pr.part});
        continue;
      }
      int idx = nl.parts[pi].input_index(pr.port);
      if (idx < 0) {
        out.push_back({"UnknownPort", n.name, pr.part + " has no input port " + pr.port});
        continue;
      }
      if (nl.parts[pi].inputs[idx].dim != n.dim)
        out.push_back({"DimensionMismatch", n.name,
                       "port " + pr.port + " dim != net dim"});
      ++port_uses[{pr.part, pr.port}];
    }
    for (const auto& pr : n.outputs) {
      int pi = nl.part_index(pr.part);
      if (pi < 0) {
        out.push_back({"UnknownPart", n.name, "output pin names missing part " + pr.part});
        continue;
      }
      if (nl.parts[pi].output.name != pr.port)
        out.push_back({"UnknownPort", n.name, pr.part + " has no output port " + pr.port});
      else if (nl.parts[pi].output.dim != n.dim)
        out.push_back({"DimensionMismatch", n.name, "output port dim != net dim"});
      ++port_uses[{pr.part, pr.port}];
    }
  }
  for (const auto& [key, uses] : port_uses)
    if (uses > 1)
      out.push_back({"PortReused", key.first + "." + key.second, "port appears in several nets"});

  for (const auto& p : nl.parts) {
    if (p.fn.in_dim != p.stalk_dim())
      out.push_back({"ArityMismatch", p.name, "function arity != total input dims"});
    if (p.fn.out_dim != p.output.dim)
      out.push_back({"ArityMismatch", p.name, "function output dim != output port dim"});
  }

  for (const auto& n : nl.nets) {
    // External output: must hang off exactly one port, an output port. Nets
    // with no pins at all are pure external inputs and stay legal.
    if (n.inputs.empty() && !n.unchecked && n.outputs.size() > 1)
      out.push_back({"ExternalOutputShape", n.name,
                     "external output must attach to exactly one output port"});
  }
  return out;
}

ExternalIo external_io(const Netlist& nl) {
  ExternalIo io;
  for (const auto& n : nl.nets) {
    if (n.outputs.empty()) io.inputs.push_back(n.name);
    else if (n.inputs.empty()) io.outputs.push_back(n.name);
  }
  return io;
}

NetlistGraph netlist_graph(const Netlist& nl) {
  NetlistGraph g;
  for (const auto& p : nl.parts) g.part_labels.push_back(p.name);
  for (const auto& n : nl.nets) g.net_labels.push_back(n.name);
  for (size_t ni = 0; ni < nl.nets.size(); ++ni) {
    for (const auto& pr : nl.nets[ni].inputs)
      g.edges.push_back({nl.part_index(pr.part), static_cast<int>(ni), pr.port, false});
    for (const auto& pr : nl.nets[ni].outputs)
      g.edges.push_back({nl.part_index(pr.part), static_cast<int>(ni), pr.port, true});
  }
  return g;
}

std::vector<int> NetlistGraph::topo_order() const {
  // Every edge runs part -> net, so parts-then-nets is always topological;
  // assert it anyway against the edge list.
  std::vector<int> order;
  int np = static_cast<int>(part_labels.size());
  for (int i = 0; i < np; ++i) order.push_back(i);
  for (size_t i = 0; i < net_labels.size(); ++i) order.push_back(np + static_cast<int>(i));
  for (const auto& e : edges)
    if (e.part < 0 || e.part >= np || e.net < 0 || e.net >= static_cast<int>(net_labels.size()))
      throw Error(ErrorCode::InvalidArgument, "edge endpoint out of range");
  return order;
}

WiringHypergraph to_wiring_hypergraph(const Netlist& nl) {
  WiringHypergraph h;
  for (const auto& p : nl.parts) h.parts.push_back(p.name);
  for (const auto& n : nl.nets) {
    WiringHypergraph::Hyperedge e;
    e.net = n.name;
    for (const auto& pr : n.inputs) e.input_pins.push_back({pr.part, pr.port});
    for (const auto& pr : n.outputs) e.output_pins.push_back({pr.part, pr.port});
    h.nets.push_back(e);
  }
  return h;
}

WiringHypergraph graph_to_hypergraph(const NetlistGraph& g) {
  WiringHypergraph h;
  h.parts = g.part_labels;
  h.nets.resize(g.net_labels.size());
  for (size_t i = 0; i < g.net_labels.size(); ++i) h.nets[i].net = g.net_labels[i];
  for (const auto& e : g.edges) {
    auto pin = std::make_pair(g.part_labels[e.part], e.port);
    if (e.from_output)
      h.nets[e.net].output_pins.push_back(pin);
    else
      h.nets[e.net].input_pins.push_back(pin);
  }
  return h;
}

NetlistGraph hypergraph_to_graph(const WiringHypergraph& h) {
  NetlistGraph g;
  g.part_labels = h.parts;
  auto part_of = [&](const std::string& name) {
    for (size_t i = 0; i < h.parts.size(); ++i)
      if (h.parts[i] == name) return static_cast<int>(i);
    throw Error(ErrorCode::UnknownVariable, "part " + name);
  };
  for (size_t ni = 0; ni < h.nets.size(); ++ni) {
    g.net_labels.push_back(h.nets[ni].net);
    for (const auto& [part, port] : h.nets[ni].input_pins)
      g.edges.push_back({part_of(part), static_cast<int>(ni), port, false});
    for (const auto& [part, port] : h.nets[ni].output_pins)
      g.edges.push_back({part_of(part), static_cast<int>(ni), port, true});
  }
  return g;
}

std::string WiringHypergraph::canonical() const {
  std::vector<std::string> part_lines(parts.begin(), parts.end());
  std::sort(part_lines.begin(), part_lines.end());
  std::vector<std::string> net_lines;
  for (const auto& n : nets) {
    std::vector<std::string> pins;
    for (const auto& [part, port] : n.input_pins) pins.push_back("i/" + part + "." + port);
    for (const auto& [part, port] : n.output_pins) pins.push_back("o/" + part + "." + port);
    std::sort(pins.begin(), pins.end());
    std::ostringstream os;
    os << n.net << "{";
    for (const auto& p : pins) os << p << ";";
    os << "}";
    net_lines.push_back(os.str());
  }
  std::sort(net_lines.begin(), net_lines.end());
  std::ostringstream os;
  os << "parts:";
  for (const auto& p : part_lines) os << p << ",";
  os << " nets:";
  for (const auto& n : net_lines) os << n << " ";
  return os.str();
}

}  // namespace netsheaf
