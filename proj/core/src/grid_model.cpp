#include "gridse/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace gridse {

std::vector<std::vector<int>> PowerNetwork::incident_branches() const {
    std::vector<std::vector<int>> inc(buses.size());
    for (int e = 0; e < static_cast<int>(branches.size()); ++e) {
        inc[branches[e].from_bus].push_back(e);
        inc[branches[e].to_bus].push_back(e);
    }
    return inc;
}

std::vector<std::vector<int>> PowerNetwork::adjacency() const {
    std::vector<std::vector<int>> adj(buses.size());
    for (const Branch& br : branches) {
        adj[br.from_bus].push_back(br.to_bus);
        adj[br.to_bus].push_back(br.from_bus);
    }
    for (auto& nbrs : adj) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    return adj;
}

Eigen::Matrix2cd branch_admittance(const Branch& branch) {
    const cd y(branch.g, branch.b);
    const cd ys(0.0, branch.b_sh);
    const cd alpha = (1.0 / branch.tau) * std::exp(cd(0.0, -branch.phi));
    Eigen::Matrix2cd block;
    block(0, 0) = (y + ys) / (branch.tau * branch.tau);
    block(0, 1) = -std::conj(alpha) * y;
    block(1, 0) = -alpha * y;
    block(1, 1) = y + ys;
    return block;
}

Eigen::MatrixXcd bus_admittance_matrix(const PowerNetwork& network) {
    const int n = network.n();
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (const Branch& br : network.branches) {
        const Eigen::Matrix2cd blk = branch_admittance(br);
        Y(br.from_bus, br.from_bus) += blk(0, 0);
        Y(br.from_bus, br.to_bus) += blk(0, 1);
        Y(br.to_bus, br.from_bus) += blk(1, 0);
        Y(br.to_bus, br.to_bus) += blk(1, 1);
    }
    for (const Bus& bus : network.buses)
        Y(bus.id, bus.id) += cd(bus.shunt_g, bus.shunt_b);
    return Y;
}

namespace {

bool finite(double v) { return std::isfinite(v); }

} // namespace

void validate_network(const PowerNetwork& network) {
    const int n = network.n();
    if (n == 0) throw ValidationError("network has no buses");
    if (network.branches.empty()) throw ValidationError("network has no branches");
    if (!finite(network.base_mva) || network.base_mva <= 0)
        throw ValidationError("base_mva must be positive");

    int slack_count = 0;
    for (int i = 0; i < n; ++i) {
        const Bus& bus = network.buses[i];
        if (bus.id != i) throw ValidationError("bus ids must be dense and 0-based");
        if (!finite(bus.load_p) || !finite(bus.load_q) || !finite(bus.gen_p) ||
            !finite(bus.gen_v) || !finite(bus.shunt_g) || !finite(bus.shunt_b))
            throw ValidationError("non-finite bus field at bus " + std::to_string(bus.external_id));
        if (bus.bus_kind == BusKind::Slack) ++slack_count;
        if (bus.bus_kind != BusKind::PQ && bus.gen_v <= 0)
            throw ValidationError("generator bus " + std::to_string(bus.external_id) +
                                  " needs a positive voltage setpoint");
    }
    if (slack_count != 1)
        throw ValidationError("network must have exactly one slack bus, found " +
                              std::to_string(slack_count));

    for (const Branch& br : network.branches) {
        if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
            throw ValidationError("branch references a nonexistent bus");
        if (br.from_bus == br.to_bus) throw ValidationError("branch endpoints must differ");
        if (!(br.tau > 0)) throw ValidationError("branch tap ratio must be positive");
        if (!finite(br.g) || !finite(br.b) || !finite(br.b_sh) || !finite(br.tau) || !finite(br.phi))
            throw ValidationError("non-finite branch parameter");
    }

    // connectivity by breadth-first search from bus 0
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    const auto adj = network.adjacency();
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
    }
    for (int i = 0; i < n; ++i)
        if (!seen[i])
            throw ValidationError("network graph is disconnected (bus " +
                                  std::to_string(network.buses[i].external_id) + " unreachable)");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_float(float v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    return buf;
}

} // namespace gridse
