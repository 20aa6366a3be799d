#include "gridse/factor_graph.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace gridse {

FactorGraph build_factor_graph(const PowerNetwork& network, const MeasurementSet& mset,
                               const Eigen::VectorXd* labels) {
    const int n = network.n();
    FactorGraph g;
    g.n_bus = n;
    g.variables.reserve(2 * n);
    for (int i = 0; i < n; ++i) g.variables.push_back({i, i, NodePart::Re});
    for (int i = 0; i < n; ++i) g.variables.push_back({n + i, i, NodePart::Im});

    for (int p = 0; p < mset.phasor_count(); ++p) {
        const PhasorMeasurement& ph = mset.phasors[p];
        const auto [row_re, row_im] = measurement_rows(ph.kind, network);
        std::array<double, 3> onehot{};
        onehot[static_cast<int>(ph.kind.type)] = 1.0;
        for (NodePart part : {NodePart::Re, NodePart::Im}) {
            FactorNode f;
            f.phasor_index = p;
            f.part = part;
            f.kind = ph.kind;
            const bool re = part == NodePart::Re;
            f.feature = {re ? ph.value_re : ph.value_im, re ? ph.var_re : ph.var_im,
                         onehot[0], onehot[1], onehot[2]};
            const int fpos = g.factor_count();
            g.factors.push_back(f);
            const JacobianRow& row = re ? row_re : row_im;
            for (const auto& [idx, coeff] : row.coeffs) {
                (void)coeff; // structural sparsity, value irrelevant
                g.fv_edges.emplace_back(fpos, idx);
            }
        }
    }
    if (labels) {
        if (labels->size() != 2 * n) throw ArgumentError("label length must be 2n");
        g.labels = *labels;
    }
    return g;
}

FactorGraph augment(FactorGraph graph, const PowerNetwork& network) {
    if (graph.variable_count() != 2 * network.n())
        throw ArgumentError("graph was not built from this network");
    const int n = network.n();
    graph.vv_edges.clear();
    std::set<std::pair<int, int>> seen;
    auto add = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        if (seen.insert({a, b}).second) graph.vv_edges.emplace_back(a, b);
    };
    for (int i = 0; i < n; ++i) add(i, n + i);
    for (const Branch& br : network.branches) {
        const int i = br.from_bus, j = br.to_bus;
        add(i, j);
        add(i, n + j);
        add(n + i, j);
        add(n + i, n + j);
    }
    graph.augmented = true;
    return graph;
}

FactorGraph khop_subgraph(const FactorGraph& graph, int variable_index, int K) {
    if (K < 0) throw ArgumentError("K must be nonnegative");
    const int start = graph.variable_pos(variable_index);
    if (start < 0)
        throw ArgumentError("unknown variable node index " + std::to_string(variable_index));

    const int nv = graph.variable_count();
    const int total = nv + graph.factor_count();
    std::vector<std::vector<int>> adj(total);
    for (const auto& [f, v] : graph.fv_edges) {
        adj[nv + f].push_back(v);
        adj[v].push_back(nv + f);
    }
    for (const auto& [a, b] : graph.vv_edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }

    std::vector<int> dist(total, -1);
    std::deque<int> queue{start};
    dist[start] = 0;
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        if (dist[u] == K) continue;
        for (int w : adj[u])
            if (dist[w] < 0) {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
    }

    FactorGraph sub;
    sub.n_bus = graph.n_bus;
    sub.augmented = graph.augmented;
    sub.labels = graph.labels;
    std::vector<int> vmap(nv, -1), fmap(graph.factor_count(), -1);
    for (int v = 0; v < nv; ++v)
        if (dist[v] >= 0) {
            vmap[v] = sub.variable_count();
            sub.variables.push_back(graph.variables[v]);
        }
    for (int f = 0; f < graph.factor_count(); ++f)
        if (dist[nv + f] >= 0) {
            fmap[f] = sub.factor_count();
            sub.factors.push_back(graph.factors[f]);
        }
    for (const auto& [f, v] : graph.fv_edges)
        if (fmap[f] >= 0 && vmap[v] >= 0) sub.fv_edges.emplace_back(fmap[f], vmap[v]);
    for (const auto& [a, b] : graph.vv_edges)
        if (vmap[a] >= 0 && vmap[b] >= 0) sub.vv_edges.emplace_back(vmap[a], vmap[b]);
    return sub;
}

} // namespace gridse
