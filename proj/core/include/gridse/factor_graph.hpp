#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "gridse/measurement.hpp"

namespace gridse {

enum class NodePart { Re, Im };

/// One state variable. index is the position in the flattened state (and the
/// node's one-hot feature index); it is preserved verbatim in subgraphs.
struct VariableNode {
    int index = 0; // 0..2n-1
    int bus = 0;   // internal bus id
    NodePart part = NodePart::Re;
};

/// One real measurement component. feature = [value, variance, kind one-hot
/// over {V, I_from, I_to}], length 5.
struct FactorNode {
    int phasor_index = 0; // position of the parent phasor in the measurement set
    NodePart part = NodePart::Re;
    PhasorKind kind;
    std::array<double, 5> feature{};
};

/// Heterogeneous factor graph. Edges reference storage positions (not
/// original indices) so induced subgraphs stay compact; node identity lives
/// in the node structs.
struct FactorGraph {
    int n_bus = 0;
    std::vector<VariableNode> variables;
    std::vector<FactorNode> factors;
    std::vector<std::pair<int, int>> fv_edges; // (factor position, variable position)
    std::vector<std::pair<int, int>> vv_edges; // (variable position a < b), undirected
    bool augmented = false;
    Eigen::VectorXd labels; // length 2n when present, else empty

    int variable_count() const { return static_cast<int>(variables.size()); }
    int factor_count() const { return static_cast<int>(factors.size()); }

    /// Storage position of the variable with the given original index, or -1.
    int variable_pos(int index) const {
        for (int i = 0; i < variable_count(); ++i)
            if (variables[i].index == index) return i;
        return -1;
    }
};

/// Non-augmented factor graph: 2n variable nodes plus two factor nodes per
/// phasor, fv edges following the Jacobian row sparsity exactly.
FactorGraph build_factor_graph(const PowerNetwork& network, const MeasurementSet& mset,
                               const Eigen::VectorXd* labels = nullptr);

/// Add the variable-variable edges derived from the physical topology:
/// (Re V_i, Im V_i) for every bus plus all four cross pairs for every branch.
/// Independent of which measurements are present; idempotent.
FactorGraph augment(FactorGraph graph, const PowerNetwork& network);

/// Induced subgraph on every node within K edges of the variable node with
/// the given original index. Node identities (indices, features, labels) are
/// preserved.
FactorGraph khop_subgraph(const FactorGraph& graph, int variable_index, int K);

} // namespace gridse
