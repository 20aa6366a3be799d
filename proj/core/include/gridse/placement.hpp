#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gridse/grid_model.hpp"

namespace gridse {

/// PMU locations. A PMU at bus b contributes the bus voltage phasor plus one
/// current phasor per branch incident to b, oriented out of b.
struct Placement {
    std::vector<int> pmu_buses; // internal bus ids, kept sorted ascending
};

/// Greedy observability-driven placement: repeatedly add the bus whose PMU
/// most increases the Jacobian rank, lowest bus id on ties, until rank = 2n.
Placement greedy_place(const PowerNetwork& network);

/// (voltage phasor count, current phasor count) = (|pmu_buses|, sum of degrees).
std::pair<int, int> phasor_inventory(const PowerNetwork& network, const Placement& placement);

/// Placement file: one external bus id per line, '#' comments.
Placement load_placement(const std::string& text, const PowerNetwork& network);
Placement load_placement_file(const std::string& path, const PowerNetwork& network);
std::string serialize_placement(const PowerNetwork& network, const Placement& placement);

} // namespace gridse
