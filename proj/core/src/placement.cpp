#include "gridse/placement.hpp"

#include <algorithm>
#include <sstream>

#include "gridse/fileio.hpp"
#include "gridse/measurement.hpp"
#include "gridse/wls.hpp"

namespace gridse {

namespace {

Eigen::MatrixXd structural_jacobian(const PowerNetwork& network, const Placement& placement) {
    const auto kinds = placement_phasors(network, placement);
    const int n = network.n();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * static_cast<int>(kinds.size()), 2 * n);
    for (std::size_t p = 0; p < kinds.size(); ++p) {
        const auto [row_re, row_im] = measurement_rows(kinds[p], network);
        for (const auto& [idx, c] : row_re.coeffs) H(2 * p, idx) = c;
        for (const auto& [idx, c] : row_im.coeffs) H(2 * p + 1, idx) = c;
    }
    return H;
}

} // namespace

Placement greedy_place(const PowerNetwork& network) {
    validate_network(network);
    const int n = network.n();
    Placement chosen;
    int rank = 0;
    std::vector<char> used(n, 0);
    while (rank < 2 * n) {
        int best_bus = -1, best_rank = rank;
        for (int b = 0; b < n; ++b) {
            if (used[b]) continue;
            Placement trial = chosen;
            trial.pmu_buses.push_back(b);
            std::sort(trial.pmu_buses.begin(), trial.pmu_buses.end());
            const auto [r, obs] = observability_rank(structural_jacobian(network, trial));
            (void)obs;
            if (r > best_rank) { // strict improvement; ties keep the lowest id
                best_rank = r;
                best_bus = b;
            }
        }
        if (best_bus < 0)
            break; // no single PMU improves rank further; cannot happen on connected networks
        used[best_bus] = 1;
        chosen.pmu_buses.push_back(best_bus);
        std::sort(chosen.pmu_buses.begin(), chosen.pmu_buses.end());
        rank = best_rank;
    }
    return chosen;
}

std::pair<int, int> phasor_inventory(const PowerNetwork& network, const Placement& placement) {
    int currents = 0;
    const auto incident = network.incident_branches();
    for (int b : placement.pmu_buses) {
        if (b < 0 || b >= network.n())
            throw ArgumentError("placement references unknown bus index " + std::to_string(b));
        currents += static_cast<int>(incident[b].size());
    }
    return {static_cast<int>(placement.pmu_buses.size()), currents};
}

Placement load_placement(const std::string& text, const PowerNetwork& network) {
    Placement p;
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        long ext;
        if (!(ls >> ext)) continue;
        std::string rest;
        if (ls >> rest) throw ParseError("expected one bus id per line", no);
        int idx = network.bus_index(static_cast<int>(ext));
        if (idx < 0)
            throw ArgumentError("placement names unknown bus " + std::to_string(ext));
        p.pmu_buses.push_back(idx);
    }
    std::sort(p.pmu_buses.begin(), p.pmu_buses.end());
    p.pmu_buses.erase(std::unique(p.pmu_buses.begin(), p.pmu_buses.end()), p.pmu_buses.end());
    return p;
}

Placement load_placement_file(const std::string& path, const PowerNetwork& network) {
    return load_placement(read_text_file(path), network);
}

std::string serialize_placement(const PowerNetwork& network, const Placement& placement) {
    std::ostringstream out;
    out << "# PMU buses, one external id per line\n";
    std::vector<int> buses = placement.pmu_buses;
    std::sort(buses.begin(), buses.end());
    for (int b : buses) {
        if (b < 0 || b >= network.n())
            throw ArgumentError("placement references unknown bus index " + std::to_string(b));
        out << network.buses[b].external_id << "\n";
    }
    return out.str();
}

} // namespace gridse
