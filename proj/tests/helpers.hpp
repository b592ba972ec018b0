#pragma once

#include <netsheaf/dsem.hpp>

#include <map>
#include <string>
#include <vector>

namespace netsheaf::testing {

inline DsemSpec single_edge_spec(double gamma, int lag, bool free_coeff = false,
                                 double h = 1.0) {
  DsemSpec s;
  s.variables = {{"A", 0, Transform::None}, {"B", 0, Transform::None}};
  PathEdge e{"A", "B", lag, free_coeff ? Coefficient::free_slot() : Coefficient::fixed(gamma), 1};
  s.edges = {e};
  s.h = h;
  return s;
}

struct BeringEdge {
  const char* from;
  const char* to;
  double gamma;
  int sign;
};

// Cross paths of the pollock food-web model, coefficients as published.
inline const std::vector<BeringEdge>& bering_edges() {
  static const std::vector<BeringEdge> e = {
      {"SeaIce", "ColdPool", 0.6, 1},       {"ColdPool", "Copepods", 1.79, 1},
      {"ColdPool", "Krill", 0.18, 0},       {"Copepods", "DietCopepods", 0.29, 1},
      {"Krill", "DietKrill", 0.06, 1},      {"DietCopepods", "Survival", 0.15, 1},
      {"DietKrill", "Survival", 0.13, 1},   {"Spawners", "Survival", -0.59, -1},
  };
  return e;
}

inline const std::vector<std::string>& bering_variables() {
  static const std::vector<std::string> v = {"SeaIce",   "ColdPool", "Copepods",
                                             "Krill",    "Spawners", "DietCopepods",
                                             "DietKrill", "Survival"};
  return v;
}

// Contemporaneous cross paths only; suits structure tests and section checks.
inline DsemSpec bering_spec(bool free_coeffs = false) {
  DsemSpec s;
  for (const auto& n : bering_variables()) s.variables.push_back({n, 0, Transform::None});
  for (const auto& e : bering_edges())
    s.edges.push_back({e.from, e.to,
                       0, free_coeffs ? Coefficient::free_slot() : Coefficient::fixed(e.gamma),
                       e.sign});
  return s;
}

// First-order memory per variable (published magnitudes where available) so
// simulated paths carry informative transients, plus the cross paths above.
inline DsemSpec bering_sim_spec(bool free_cross = false) {
  DsemSpec s = bering_spec(free_cross);
  static const std::map<std::string, double> self = {
      {"SeaIce", 0.361},   {"ColdPool", 0.582},     {"Copepods", 0.828},
      {"Krill", 0.692},    {"Spawners", 1.01},      {"DietCopepods", 0.886},
      {"DietKrill", 0.060}, {"Survival", 0.5},
  };
  for (auto& v : s.variables) {
    v.ar_order = 1;
    s.edges.push_back({v.name, v.name, 1, Coefficient::fixed(self.at(v.name)), 0});
  }
  return s;
}

// Seed levels chosen diverse and well above the noise floor, so every
// regressor carries a decaying but informative transient.
inline std::map<std::string, double> bering_init() {
  return {{"SeaIce", 10.0},  {"ColdPool", 8.0},     {"Copepods", 12.0}, {"Krill", 9.0},
          {"Spawners", 10.0}, {"DietCopepods", 7.0}, {"DietKrill", 5.0}, {"Survival", 6.0}};
}

}  // namespace netsheaf::testing
