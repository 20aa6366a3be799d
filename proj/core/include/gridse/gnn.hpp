#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridse/factor_graph.hpp"
#include "gridse/rng.hpp"

namespace gridse {

enum class Normalization { Off, MeanBatch };

struct Hyperparams {
    int s = 64;        // node embedding size
    int layers = 4;    // message-passing iterations K
    double lr = 4e-4;
    int batch = 32;
    double clip = 0.5; // global gradient-norm clip
    int epochs = 100;
    std::string activation = "relu"; // the only supported activation
    Normalization normalization = Normalization::MeanBatch;
};

void validate_hyperparams(const Hyperparams& h);

/// Directed edge types of the heterogeneous graph.
///   0: variable -> factor   (factor-node aggregation, theta^Layer_f)
///   1: factor -> variable   (theta^Layer_v, first parameter set)
///   2: variable -> variable (theta^Layer_v, second parameter set)
constexpr int kEdgeTypes = 3;

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// All trainable parameters. One message net + attention per edge type
/// (shared across the K iterations), one gated recurrent update per node
/// type, linear input embeddings, and the prediction head.
template <class S>
struct Tensors {
    using Mat = RowMat<S>;
    using Vec = ColVec<S>;

    Mat embed_v; // 2n x s, one-hot row lookup
    Mat embed_f; // 5 x s

    struct Message {
        Mat w1r, w1s; // receiver/sender halves of the 2s x s first layer
        Vec b1;       // s
        Mat w2;       // s x s
        Vec b2;       // s
        Vec ar, as_;  // receiver/sender halves of the attention vector (each s)
    };
    std::array<Message, kEdgeTypes> msg;

    struct Gru {
        Mat wz, uz, wr, ur, wh, uh; // each s x s (w* act on the message, u* on the state)
        Vec bz, br, bh;
    };
    std::array<Gru, 2> gru; // 0: factor nodes, 1: variable nodes

    Mat pred_w1; // s x s
    Vec pred_b1; // s
    Vec pred_w2; // s
    S pred_b2 = S(0);

    /// Visit every tensor as (name, data pointer, element count), in a fixed
    /// order. Init, Adam, clipping and checkpoints all rely on this order.
    template <class Fn>
    void for_each(Fn&& fn);
    template <class Fn>
    void for_each(Fn&& fn) const;

    void setup(int n, int s); // allocate with the shapes implied by (n, s)
    void set_zero();
};

template <class S>
struct GnnModel {
    Hyperparams hyper;
    int n = 0; // bus count; one-hot width is 2n
    Tensors<S> params;
    /// Mean-only batch-norm running means: layers x kEdgeTypes vectors of
    /// length s (empty when normalization is Off).
    std::vector<ColVec<S>> bn_mean;
    /// Per-variable label bounds observed during training (train + val),
    /// carried for per-node dump output. May be empty.
    Eigen::VectorXd bound_min, bound_max;
    std::string graph_variant = "augmented"; // which graphs the model was trained on

    int bn_index(int layer, int type) const { return layer * kEdgeTypes + type; }
};

using GnnModelF = GnnModel<float>;
using GnnModelD = GnnModel<double>;

/// Glorot-uniform weights (a = sqrt(6/(fan_in+fan_out))), zero biases,
/// deterministic given the rng state.
template <class S>
GnnModel<S> init_model(const Hyperparams& hyper, int n, Rng& rng);

/// Flat, GNN-ready view of a FactorGraph (or a disjoint union of several).
/// Node space: variables first (storage order), then factors. Directed edges
/// are sorted by (receiver, type, sender) and grouped per receiver.
template <class S>
struct GraphTensors {
    int n = 0;  // bus count
    int nv = 0; // variable node count
    int nf = 0; // factor node count
    int graphs = 1;
    struct Edge {
        int recv, send; // node ids (factors offset by nv)
        int type;
        int tpos; // position within its type's packed arrays
    };
    std::vector<Edge> edges;
    std::vector<int> seg_offset;          // nv+nf+1 offsets into edges
    std::array<int, kEdgeTypes> type_count{};
    std::vector<int> var_onehot;          // nv one-hot indices
    RowMat<S> f_feat;                     // nf x 5
    std::vector<int> var_index;           // nv original variable indices (same as one-hot)
    std::vector<int> var_graph;           // nv graph-of-origin indices within a union
    Eigen::VectorXd labels;               // nv labels aligned with variables (may be empty)

    int total_nodes() const { return nv + nf; }
};

template <class S>
GraphTensors<S> tensorize(const FactorGraph& graph);

/// Disjoint union; keeps per-graph node blocks contiguous and in input order.
template <class S>
GraphTensors<S> concat_graphs(const std::vector<const GraphTensors<S>*>& parts);

enum class ForwardMode {
    Train,    // batch-norm uses minibatch means and updates running means
    Eval      // batch-norm uses running means; nothing is mutated
};

/// Intermediate state retained for backward (and for tests that inspect
/// attention weights).
template <class S>
struct Workspace {
    std::vector<RowMat<S>> h;                           // layers+1 node embedding mats
    std::vector<std::array<RowMat<S>, kEdgeTypes>> hid; // per layer, per type, post-relu
    std::vector<std::array<RowMat<S>, kEdgeTypes>> msg; // per layer, per type
    std::vector<ColVec<S>> score;                       // per layer, raw scores per edge
    std::vector<ColVec<S>> alpha;                       // per layer, attention weights
    std::vector<RowMat<S>> agg;                         // per layer, aggregated messages
    std::vector<RowMat<S>> gate_z, gate_r, gate_h;      // per layer
    RowMat<S> pred_hidden;                              // nv x s
};

/// Run the K message-passing iterations and the prediction head. Returns one
/// prediction per variable node, aligned with the graph's variable order.
/// In Train mode the model's running means are updated (MeanBatch only).
template <class S>
ColVec<S> forward(GnnModel<S>& model, const GraphTensors<S>& gt, ForwardMode mode,
                  Workspace<S>* ws = nullptr);

/// Batch loss: sum of squared errors / (2n * B).
template <class S>
double batch_loss(const ColVec<S>& pred, const Eigen::VectorXd& labels, int n, int graphs);

/// Loss and exact parameter gradients for one minibatch (forward in Train
/// mode + reverse-mode backward). Throws NumericError naming the offending
/// graph when a prediction is non-finite.
template <class S>
double gradients(GnnModel<S>& model, const GraphTensors<S>& batch, Tensors<S>& grads);

struct TrainHistory {
    std::vector<double> train_loss; // per epoch, mean over minibatches
    std::vector<double> val_loss;   // per epoch, batch loss over the whole set
    int best_epoch = -1;            // epoch whose parameters were kept
};

struct TrainOptions {
    bool verbose = false; // progress lines on stderr
};

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with global gradient-norm
/// clipping; samples reshuffled every epoch from the given rng; returns with
/// the best-validation parameters restored.
template <class S>
TrainHistory train(GnnModel<S>& model, const std::vector<GraphTensors<S>>& train_set,
                   const std::vector<GraphTensors<S>>& val_set, Rng& rng,
                   const TrainOptions& opts = {});

// --- template member definitions ---

template <class S>
void Tensors<S>::setup(int n, int s) {
    embed_v = Mat::Zero(2 * n, s);
    embed_f = Mat::Zero(5, s);
    for (auto& m : msg) {
        m.w1r = Mat::Zero(s, s);
        m.w1s = Mat::Zero(s, s);
        m.b1 = Vec::Zero(s);
        m.w2 = Mat::Zero(s, s);
        m.b2 = Vec::Zero(s);
        m.ar = Vec::Zero(s);
        m.as_ = Vec::Zero(s);
    }
    for (auto& g : gru) {
        g.wz = Mat::Zero(s, s);
        g.uz = Mat::Zero(s, s);
        g.wr = Mat::Zero(s, s);
        g.ur = Mat::Zero(s, s);
        g.wh = Mat::Zero(s, s);
        g.uh = Mat::Zero(s, s);
        g.bz = Vec::Zero(s);
        g.br = Vec::Zero(s);
        g.bh = Vec::Zero(s);
    }
    pred_w1 = Mat::Zero(s, s);
    pred_b1 = Vec::Zero(s);
    pred_w2 = Vec::Zero(s);
    pred_b2 = S(0);
}

template <class S>
void Tensors<S>::set_zero() {
    for_each([](const char*, S* p, long count) { std::fill(p, p + count, S(0)); });
}

namespace detail {
constexpr const char* kMsgTag[kEdgeTypes] = {"v2f", "f2v", "v2v"};
constexpr const char* kGruTag[2] = {"f", "v"};
}

template <class S>
template <class Fn>
void Tensors<S>::for_each(Fn&& fn) {
    std::string name;
    fn("embed_v", embed_v.data(), static_cast<long>(embed_v.size()));
    fn("embed_f", embed_f.data(), static_cast<long>(embed_f.size()));
    for (int t = 0; t < kEdgeTypes; ++t) {
        auto& m = msg[t];
        const std::string base = std::string("msg_") + detail::kMsgTag[t] + "_";
        fn((name = base + "w1r").c_str(), m.w1r.data(), static_cast<long>(m.w1r.size()));
        fn((name = base + "w1s").c_str(), m.w1s.data(), static_cast<long>(m.w1s.size()));
        fn((name = base + "b1").c_str(), m.b1.data(), static_cast<long>(m.b1.size()));
        fn((name = base + "w2").c_str(), m.w2.data(), static_cast<long>(m.w2.size()));
        fn((name = base + "b2").c_str(), m.b2.data(), static_cast<long>(m.b2.size()));
        fn((name = base + "ar").c_str(), m.ar.data(), static_cast<long>(m.ar.size()));
        fn((name = base + "as").c_str(), m.as_.data(), static_cast<long>(m.as_.size()));
    }
    for (int t = 0; t < 2; ++t) {
        auto& g = gru[t];
        const std::string base = std::string("gru_") + detail::kGruTag[t] + "_";
        fn((name = base + "wz").c_str(), g.wz.data(), static_cast<long>(g.wz.size()));
        fn((name = base + "uz").c_str(), g.uz.data(), static_cast<long>(g.uz.size()));
        fn((name = base + "bz").c_str(), g.bz.data(), static_cast<long>(g.bz.size()));
        fn((name = base + "wr").c_str(), g.wr.data(), static_cast<long>(g.wr.size()));
        fn((name = base + "ur").c_str(), g.ur.data(), static_cast<long>(g.ur.size()));
        fn((name = base + "br").c_str(), g.br.data(), static_cast<long>(g.br.size()));
        fn((name = base + "wh").c_str(), g.wh.data(), static_cast<long>(g.wh.size()));
        fn((name = base + "uh").c_str(), g.uh.data(), static_cast<long>(g.uh.size()));
        fn((name = base + "bh").c_str(), g.bh.data(), static_cast<long>(g.bh.size()));
    }
    fn("pred_w1", pred_w1.data(), static_cast<long>(pred_w1.size()));
    fn("pred_b1", pred_b1.data(), static_cast<long>(pred_b1.size()));
    fn("pred_w2", pred_w2.data(), static_cast<long>(pred_w2.size()));
    fn("pred_b2", &pred_b2, 1L);
}

template <class S>
template <class Fn>
void Tensors<S>::for_each(Fn&& fn) const {
    const_cast<Tensors<S>*>(this)->for_each(
        [&](const char* name, S* p, long count) { fn(name, const_cast<const S*>(p), count); });
}

} // namespace gridse
