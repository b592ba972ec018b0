#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "netsheaf/dsem.hpp"

namespace netsheaf {

struct Port {
  std::string name;
  int dim = 0;
};

// Input-output function of a part: concatenated input ports -> output port.
struct PartFunction {
  enum class Kind { Affine, General };
  Kind kind = Kind::Affine;
  Mat a;  // affine payload
  Vec c;
  std::function<Vec(const Vec&)> fn;  // general payload
  int in_dim = 0;
  int out_dim = 0;

  Vec apply(const Vec& x) const;
};

struct Part {
  std::string name;
  std::vector<Port> inputs;
  Port output;
  PartFunction fn;

  int stalk_dim() const;
  int input_offset(int port_index) const;
  int input_index(const std::string& port_name) const;  // -1 if absent
};

struct PortRef {
  std::string part;
  std::string port;
  bool operator==(const PortRef&) const = default;
};

struct Net {
  std::string name;
  int dim = 0;
  std::vector<PortRef> inputs;   // input ports fed by this net
  std::vector<PortRef> outputs;  // at most one unless `unchecked`
  bool unchecked = false;
};

struct Netlist {
  std::vector<Part> parts;
  std::vector<Net> nets;
  int series_len = 0;

  int part_index(const std::string& name) const;  // -1 if absent
  int net_index(const std::string& name) const;
  Part& part(const std::string& name);
  const Part& part(const std::string& name) const;
  Net& net(const std::string& name);
  const Net& net(const std::string& name) const;
};

struct Diagnostic {
  std::string code;
  std::string subject;
  std::string message;
};

// One net per variable; one part per variable with inbound edges, its function
// being the h-scaled lag-shifted update. Parts with max inbound lag d >= 1
// emit the determined suffix into a twin-output "<var>_pred" net alongside a
// crop part, leaving seed coordinates unconstrained. Free coefficients become
// 1-dimensional "coef:" nets feeding dedicated ports.
Netlist netlist_from_dsem(const DsemSpec& spec, int series_len);

// Structural checks: port/net dimension agreement, single drivers (unless
// unchecked), ports used at most once, function arity, external outputs
// attached to exactly one port. Returns findings instead of throwing.
std::vector<Diagnostic> validate(const Netlist& nl);

struct ExternalIo {
  std::vector<std::string> inputs;   // nets without a driving output port
  std::vector<std::string> outputs;  // nets feeding no input port
};
ExternalIo external_io(const Netlist& nl);

// Bipartite incidence digraph: one vertex per part and per net, one edge
// part -> net per port attachment. Acyclic by construction.
struct NetlistGraph {
  struct Edge {
    int part;
    int net;
    std::string port;
    bool from_output;
  };
  std::vector<std::string> part_labels;
  std::vector<std::string> net_labels;
  std::vector<Edge> edges;
  std::vector<int> topo_order() const;  // part vertices then net vertices
};

NetlistGraph netlist_graph(const Netlist& nl);

// Wiring hypergraph: vertices are parts, one hyperedge per net listing its
// pinned ports. Carries the same information as the netlist graph.
struct WiringHypergraph {
  std::vector<std::string> parts;
  struct Hyperedge {
    std::string net;
    std::vector<std::pair<std::string, std::string>> input_pins;  // (part, port)
    std::vector<std::pair<std::string, std::string>> output_pins;
  };
  std::vector<Hyperedge> nets;
  std::string canonical() const;
};

WiringHypergraph to_wiring_hypergraph(const Netlist& nl);
WiringHypergraph graph_to_hypergraph(const NetlistGraph& g);
NetlistGraph hypergraph_to_graph(const WiringHypergraph& h);

}  // namespace netsheaf
