#include "cgbn/fixture.hpp"

#include <array>
#include <string>

namespace cgbn {

namespace {

constexpr int kWasteTypes = 5;

NodeSpec discrete(std::string label, std::vector<std::string> states, std::vector<std::string> parents,
                  std::vector<std::vector<double>> cpt) {
  NodeSpec s;
  s.label = std::move(label);
  s.kind = NodeKind::discrete;
  s.states = std::move(states);
  s.parents = std::move(parents);
  s.cpt = std::move(cpt);
  return s;
}

NodeSpec continuous(std::string label, std::vector<std::string> parents, std::vector<ClgBlock> clg) {
  NodeSpec s;
  s.label = std::move(label);
  s.kind = NodeKind::continuous;
  s.parents = std::move(parents);
  s.clg = std::move(clg);
  return s;
}

std::vector<std::vector<double>> binary_rows(const std::vector<double>& p_second) {
  std::vector<std::vector<double>> rows;
  for (double p : p_second) rows.push_back({1.0 - p, p});
  return rows;
}

}  // namespace

Network reference_network() {
  std::vector<NodeSpec> nodes;
  nodes.push_back(discrete("WC", {"wt-0", "wt-1", "wt-2", "wt-3", "wt-4"}, {}, {{0.35, 0.15, 0.15, 0.25, 0.10}}));

  // P(present | WC) for each characteristic
  const std::array<std::array<double, kWasteTypes>, 7> present{{
      {0.8, 0.3, 0.2, 0.6, 0.1},
      {0.2, 0.7, 0.4, 0.3, 0.5},
      {0.6, 0.5, 0.1, 0.7, 0.3},
      {0.3, 0.2, 0.8, 0.4, 0.6},
      {0.7, 0.4, 0.3, 0.2, 0.9},
      {0.1, 0.6, 0.5, 0.8, 0.4},
      {0.5, 0.5, 0.6, 0.3, 0.2},
  }};
  const std::vector<std::string> presence{"absent", "present"};
  for (int c = 0; c < 7; ++c)
    nodes.push_back(discrete("CH" + std::to_string(c + 1), presence, {"WC"},
                             binary_rows({present[c].begin(), present[c].end()})));

  // Rows ordered (absent,absent), (absent,present), (present,absent), (present,present).
  nodes.push_back(discrete("L", {"intact", "leaking"}, {"CH1", "CH2"}, binary_rows({0.1, 0.4, 0.5, 0.85})));
  nodes.push_back(discrete("M", {"low", "high"}, {"CH3", "CH4"}, binary_rows({0.2, 0.5, 0.45, 0.8})));
  nodes.push_back(discrete("F", {"dispersed", "particulate"}, {"CH5", "CH6"}, binary_rows({0.15, 0.5, 0.4, 0.75})));

  // Pit-section source contamination, by (WC, L).
  const std::array<double, kWasteTypes> source{1.0, 0.6, 0.2, 0.4, 0.0};
  std::vector<ClgBlock> src;
  for (int w = 0; w < kWasteTypes; ++w)
    for (double leak : {0.0, 0.8}) src.push_back({source[w] + leak, {}, 0.5});
  nodes.push_back(continuous("SRC", {"WC", "L"}, src));

  // Contamination reaching the soil, by M.
  nodes.push_back(continuous("SPR", {"SRC", "M"}, {{0.0, {0.8}, 0.3}, {-0.4, {0.8}, 0.3}}));

  // Batch assay: contaminate density and measured density.
  nodes.push_back(continuous("ACD", {"SPR"}, {{0.0, {1.0}, 0.1}}));
  const std::array<double, kWasteTypes> density{2.0, 1.0, 0.5, 0.0, -0.5};
  std::vector<ClgBlock> amd;
  for (double d : density) amd.push_back({d, {0.5}, 0.2});
  nodes.push_back(continuous("AMD", {"SPR", "WC"}, amd));

  // Per-sample contamination by (WC, F); particulate form is hotter and more variable.
  const std::array<double, kWasteTypes> offset{-8.0, -2.0, 0.0, 2.0, 3.0};
  std::vector<ClgBlock> scd;
  for (int w = 0; w < kWasteTypes; ++w) {
    scd.push_back({offset[w], {1.0}, 0.6});
    scd.push_back({offset[w] + 0.5, {1.0}, 1.5});
  }
  nodes.push_back(continuous("SCD", {"SPR", "WC", "F"}, scd));

  // Gamma response relative to contamination, by WC.
  const std::array<double, kWasteTypes> response{14.0, 6.0, 4.0, 1.0, 0.0};
  std::vector<ClgBlock> smd;
  for (double r : response) smd.push_back({r, {1.0}, 0.5});
  nodes.push_back(continuous("SMD", {"SCD", "WC"}, smd));

  nodes.push_back(continuous("SS", {"SMD"}, {{0.0, {1.0}, 0.3}}));
  return Network(std::move(nodes));
}

Evidence reference_slow_evidence(const Network& net) {
  Evidence e;
  e.continuous[net.id(kReferenceAssay)] = 0.5;
  return e;
}

Policy reference_policy() { return {2.0, 1.0, 10.0}; }

}  // namespace cgbn
