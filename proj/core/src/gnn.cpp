#include "gridse/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gridse/kernels.hpp"

namespace gridse {

void validate_hyperparams(const Hyperparams& h) {
    if (h.s < 1 || h.layers < 1 || h.batch < 1 || h.epochs < 0)
        throw ArgumentError("hyperparameters s, layers, batch must be >= 1 and epochs >= 0");
    if (!(h.lr >= 0) || !(h.clip > 0))
        throw ArgumentError("hyperparameters need lr >= 0 and clip > 0");
    if (h.activation != "relu")
        throw ArgumentError("unsupported activation '" + h.activation + "'");
}

template <class S>
GnnModel<S> init_model(const Hyperparams& hyper, int n, Rng& rng) {
    validate_hyperparams(hyper);
    if (n < 1) throw ArgumentError("bus count must be positive");
    GnnModel<S> model;
    model.hyper = hyper;
    model.n = n;
    model.params.setup(n, hyper.s);
    const int s = hyper.s;

    auto fill = [&](auto& tensor, double fan_in, double fan_out) {
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        S* p = tensor.data();
        for (long i = 0; i < static_cast<long>(tensor.size()); ++i)
            p[i] = static_cast<S>(rng.uniform(-a, a));
    };

    fill(model.params.embed_v, 2.0 * n, s);
    fill(model.params.embed_f, 5.0, s);
    for (auto& m : model.params.msg) {
        fill(m.w1r, 2.0 * s, s); // halves of the 2s x s concat map
        fill(m.w1s, 2.0 * s, s);
        fill(m.w2, s, s);
        fill(m.ar, 2.0 * s, 1.0);
        fill(m.as_, 2.0 * s, 1.0);
    }
    for (auto& g : model.params.gru) {
        fill(g.wz, s, s);
        fill(g.uz, s, s);
        fill(g.wr, s, s);
        fill(g.ur, s, s);
        fill(g.wh, s, s);
        fill(g.uh, s, s);
    }
    fill(model.params.pred_w1, s, s);
    fill(model.params.pred_w2, s, 1.0);

    if (hyper.normalization == Normalization::MeanBatch)
        model.bn_mean.assign(static_cast<std::size_t>(hyper.layers) * kEdgeTypes,
                             ColVec<S>::Zero(s));
    return model;
}

template <class S>
GraphTensors<S> tensorize(const FactorGraph& graph) {
    GraphTensors<S> gt;
    gt.n = graph.n_bus;
    gt.nv = graph.variable_count();
    gt.nf = graph.factor_count();
    gt.graphs = 1;

    gt.var_onehot.resize(gt.nv);
    gt.var_index.resize(gt.nv);
    for (int v = 0; v < gt.nv; ++v) {
        gt.var_onehot[v] = graph.variables[v].index;
        gt.var_index[v] = graph.variables[v].index;
    }
    gt.f_feat.resize(gt.nf, 5);
    for (int f = 0; f < gt.nf; ++f)
        for (int j = 0; j < 5; ++j)
            gt.f_feat(f, j) = static_cast<S>(graph.factors[f].feature[j]);

    gt.edges.reserve(2 * graph.fv_edges.size() + 2 * graph.vv_edges.size());
    for (const auto& [f, v] : graph.fv_edges) {
        gt.edges.push_back({gt.nv + f, v, 0, 0});
        gt.edges.push_back({v, gt.nv + f, 1, 0});
    }
    for (const auto& [a, b] : graph.vv_edges) {
        gt.edges.push_back({a, b, 2, 0});
        gt.edges.push_back({b, a, 2, 0});
    }
    std::sort(gt.edges.begin(), gt.edges.end(), [](const auto& x, const auto& y) {
        if (x.recv != y.recv) return x.recv < y.recv;
        if (x.type != y.type) return x.type < y.type;
        return x.send < y.send;
    });
    gt.type_count.fill(0);
    for (auto& e : gt.edges) e.tpos = gt.type_count[e.type]++;

    gt.seg_offset.assign(gt.total_nodes() + 1, 0);
    for (const auto& e : gt.edges) ++gt.seg_offset[e.recv + 1];
    for (int u = 0; u < gt.total_nodes(); ++u) gt.seg_offset[u + 1] += gt.seg_offset[u];

    gt.var_graph.assign(gt.nv, 0);
    if (graph.labels.size() > 0) {
        gt.labels.resize(gt.nv);
        for (int v = 0; v < gt.nv; ++v) gt.labels[v] = graph.labels[graph.variables[v].index];
    }
    return gt;
}

template <class S>
GraphTensors<S> concat_graphs(const std::vector<const GraphTensors<S>*>& parts) {
    if (parts.empty()) throw ArgumentError("cannot concatenate zero graphs");
    GraphTensors<S> out;
    out.n = parts[0]->n;
    out.graphs = 0;
    int nv = 0, nf = 0;
    std::size_t ne = 0;
    bool have_labels = true;
    for (const auto* p : parts) {
        if (p->n != out.n) throw ArgumentError("cannot batch graphs over different networks");
        nv += p->nv;
        nf += p->nf;
        ne += p->edges.size();
        have_labels = have_labels && p->labels.size() == p->nv;
    }
    out.nv = nv;
    out.nf = nf;
    out.f_feat.resize(nf, 5);
    out.var_onehot.resize(nv);
    out.var_index.resize(nv);
    out.var_graph.resize(nv);
    if (have_labels) out.labels.resize(nv);
    out.edges.reserve(ne);

    int voff = 0, foff = 0, gid = 0;
    for (const auto* p : parts) {
        for (int v = 0; v < p->nv; ++v) {
            out.var_onehot[voff + v] = p->var_onehot[v];
            out.var_index[voff + v] = p->var_index[v];
            out.var_graph[voff + v] = gid;
            if (have_labels) out.labels[voff + v] = p->labels[v];
        }
        out.f_feat.middleRows(foff, p->nf) = p->f_feat;
        for (const auto& e : p->edges) {
            typename GraphTensors<S>::Edge ne2;
            ne2.recv = e.recv < p->nv ? e.recv + voff : nv + foff + (e.recv - p->nv);
            ne2.send = e.send < p->nv ? e.send + voff : nv + foff + (e.send - p->nv);
            ne2.type = e.type;
            ne2.tpos = 0;
            out.edges.push_back(ne2);
        }
        voff += p->nv;
        foff += p->nf;
        ++gid;
    }
    out.graphs = gid;
    std::sort(out.edges.begin(), out.edges.end(), [](const auto& x, const auto& y) {
        if (x.recv != y.recv) return x.recv < y.recv;
        if (x.type != y.type) return x.type < y.type;
        return x.send < y.send;
    });
    out.type_count.fill(0);
    for (auto& e : out.edges) e.tpos = out.type_count[e.type]++;
    out.seg_offset.assign(out.total_nodes() + 1, 0);
    for (const auto& e : out.edges) ++out.seg_offset[e.recv + 1];
    for (int u = 0; u < out.total_nodes(); ++u) out.seg_offset[u + 1] += out.seg_offset[u];
    return out;
}

namespace {

template <class S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

constexpr double kLeakySlope = 0.2;

/// Block of node rows playing the receiver/sender role for an edge type.
/// Types: 0 var->factor, 1 factor->var, 2 var->var.
inline bool recv_is_factor(int type) { return type == 0; }
inline bool send_is_factor(int type) { return type == 1; }

} // namespace

template <class S>
ColVec<S> forward(GnnModel<S>& model, const GraphTensors<S>& gt, ForwardMode mode,
                  Workspace<S>* ws_out) {
    if (gt.n != model.n) throw ArgumentError("graph bus count does not match the model");
    const int s = model.hyper.s;
    const int K = model.hyper.layers;
    const int nv = gt.nv, nf = gt.nf, N = nv + nf;
    const int E = static_cast<int>(gt.edges.size());
    const bool bn = model.hyper.normalization == Normalization::MeanBatch;
    if (bn && model.bn_mean.size() != static_cast<std::size_t>(K) * kEdgeTypes)
        throw ArgumentError("model normalization state has the wrong shape");

    Workspace<S> local;
    Workspace<S>& ws = ws_out ? *ws_out : local;
    const bool retain = ws_out != nullptr;
    ws.h.assign(K + 1, RowMat<S>());
    ws.hid.assign(K, {});
    ws.msg.assign(K, {});
    ws.score.assign(K, ColVec<S>());
    ws.alpha.assign(K, ColVec<S>());
    ws.agg.assign(K, RowMat<S>());
    ws.gate_z.assign(retain ? K : 0, RowMat<S>());
    ws.gate_r.assign(retain ? K : 0, RowMat<S>());
    ws.gate_h.assign(retain ? K : 0, RowMat<S>());

    // initial embeddings
    {
        RowMat<S> h0(N, s);
        for (int v = 0; v < nv; ++v) h0.row(v) = model.params.embed_v.row(gt.var_onehot[v]);
        for (int f = 0; f < nf; ++f)
            kern::matvec_set(gt.f_feat.row(f).data(), model.params.embed_f.data(),
                             h0.row(nv + f).data(), 5, s);
        ws.h[0] = std::move(h0);
    }

    RowMat<S> proj_r[kEdgeTypes], proj_s[kEdgeTypes];
    ColVec<S> att_r[kEdgeTypes], att_s[kEdgeTypes];

    for (int k = 0; k < K; ++k) {
        const RowMat<S>& h = ws.h[k];

        // per-node projections of the split message weights and attention vectors
        for (int t = 0; t < kEdgeTypes; ++t) {
            if (gt.type_count[t] == 0) continue;
            const auto& mp = model.params.msg[t];
            const int r0 = recv_is_factor(t) ? nv : 0;
            const int rn = recv_is_factor(t) ? nf : nv;
            const int s0 = send_is_factor(t) ? nv : 0;
            const int sn = send_is_factor(t) ? nf : nv;
            proj_r[t].resize(rn, s);
            proj_s[t].resize(sn, s);
            att_r[t].resize(rn);
            att_s[t].resize(sn);
            for (int i = 0; i < rn; ++i) {
                kern::matvec_set(h.row(r0 + i).data(), mp.w1r.data(), proj_r[t].row(i).data(), s, s);
                att_r[t][i] = kern::dot(h.row(r0 + i).data(), mp.ar.data(), s);
            }
            for (int i = 0; i < sn; ++i) {
                kern::matvec_set(h.row(s0 + i).data(), mp.w1s.data(), proj_s[t].row(i).data(), s, s);
                att_s[t][i] = kern::dot(h.row(s0 + i).data(), mp.as_.data(), s);
            }
        }

        // per-edge hidden pre-activations and raw attention scores
        auto& hid = ws.hid[k];
        for (int t = 0; t < kEdgeTypes; ++t) hid[t].resize(gt.type_count[t], s);
        ColVec<S>& score = ws.score[k];
        score.resize(E);
        for (int e = 0; e < E; ++e) {
            const auto& ed = gt.edges[e];
            const int t = ed.type;
            const int lr = recv_is_factor(t) ? ed.recv - nv : ed.recv;
            const int ls = send_is_factor(t) ? ed.send - nv : ed.send;
            S* out = hid[t].row(ed.tpos).data();
            const S* pr = proj_r[t].row(lr).data();
            const S* ps = proj_s[t].row(ls).data();
            const S* b1 = model.params.msg[t].b1.data();
            for (int j = 0; j < s; ++j) out[j] = pr[j] + ps[j] + b1[j];
            score[e] = att_r[t][lr] + att_s[t][ls];
        }

        // mean-only batch normalization on the hidden pre-activations
        if (bn) {
            for (int t = 0; t < kEdgeTypes; ++t) {
                const int cnt = gt.type_count[t];
                if (cnt == 0) continue;
                ColVec<S>& running = model.bn_mean[model.bn_index(k, t)];
                ColVec<S> mu(s);
                if (mode == ForwardMode::Train) {
                    for (int j = 0; j < s; ++j) {
                        double acc = 0;
                        for (int r = 0; r < cnt; ++r) acc += static_cast<double>(hid[t](r, j));
                        mu[j] = static_cast<S>(acc / cnt);
                    }
                    running = S(0.9) * running + S(0.1) * mu;
                } else {
                    mu = running;
                }
                hid[t].rowwise() -= mu.transpose();
            }
        }

        // relu + second message layer
        auto& msg = ws.msg[k];
        for (int t = 0; t < kEdgeTypes; ++t) {
            const int cnt = gt.type_count[t];
            msg[t].resize(cnt, s);
            if (cnt == 0) continue;
            hid[t] = hid[t].cwiseMax(S(0));
            const auto& mp = model.params.msg[t];
            for (int r = 0; r < cnt; ++r) {
                S* out = msg[t].row(r).data();
                kern::matvec_set(hid[t].row(r).data(), mp.w2.data(), out, s, s);
                for (int j = 0; j < s; ++j) out[j] += mp.b2[j];
            }
        }

        // softmax attention per receiver (over its full neighborhood) + sum
        ColVec<S>& alpha = ws.alpha[k];
        alpha.resize(E);
        RowMat<S>& agg = ws.agg[k];
        agg = RowMat<S>::Zero(N, s);
        for (int u = 0; u < N; ++u) {
            const int b0 = gt.seg_offset[u], b1e = gt.seg_offset[u + 1];
            if (b0 == b1e) continue;
            S mx = -std::numeric_limits<S>::infinity();
            for (int e = b0; e < b1e; ++e) {
                const S raw = score[e];
                const S leaky = raw > S(0) ? raw : S(kLeakySlope) * raw;
                if (leaky > mx) mx = leaky;
            }
            S denom = S(0);
            for (int e = b0; e < b1e; ++e) {
                const S raw = score[e];
                const S leaky = raw > S(0) ? raw : S(kLeakySlope) * raw;
                const S ex = std::exp(leaky - mx);
                alpha[e] = ex;
                denom += ex;
            }
            S* arow = agg.row(u).data();
            for (int e = b0; e < b1e; ++e) {
                alpha[e] /= denom;
                const auto& ed = gt.edges[e];
                const S* mrow = msg[ed.type].row(ed.tpos).data();
                const S a = alpha[e];
                for (int j = 0; j < s; ++j) arow[j] += a * mrow[j];
            }
        }

        // simultaneous gated recurrent update of both node types
        RowMat<S> hnew(N, s);
        RowMat<S>*gz = nullptr, *gr = nullptr, *gh = nullptr;
        if (retain) {
            ws.gate_z[k].resize(N, s);
            ws.gate_r[k].resize(N, s);
            ws.gate_h[k].resize(N, s);
            gz = &ws.gate_z[k];
            gr = &ws.gate_r[k];
            gh = &ws.gate_h[k];
        }
        std::vector<S> zbuf(s), rbuf(s), hbuf(s), rh(s);
        for (int u = 0; u < N; ++u) {
            const auto& g = model.params.gru[u < nv ? 1 : 0];
            const S* mrow = agg.row(u).data();
            const S* hrow = h.row(u).data();
            kern::matvec_set(mrow, g.wz.data(), zbuf.data(), s, s);
            kern::matvec_acc(hrow, g.uz.data(), zbuf.data(), s, s);
            kern::matvec_set(mrow, g.wr.data(), rbuf.data(), s, s);
            kern::matvec_acc(hrow, g.ur.data(), rbuf.data(), s, s);
            for (int j = 0; j < s; ++j) {
                zbuf[j] = sigmoid(zbuf[j] + g.bz[j]);
                rbuf[j] = sigmoid(rbuf[j] + g.br[j]);
                rh[j] = rbuf[j] * hrow[j];
            }
            kern::matvec_set(mrow, g.wh.data(), hbuf.data(), s, s);
            kern::matvec_acc(rh.data(), g.uh.data(), hbuf.data(), s, s);
            S* out = hnew.row(u).data();
            for (int j = 0; j < s; ++j) {
                const S hb = std::tanh(hbuf[j] + g.bh[j]);
                out[j] = (S(1) - zbuf[j]) * hrow[j] + zbuf[j] * hb;
                if (retain) {
                    (*gz)(u, j) = zbuf[j];
                    (*gr)(u, j) = rbuf[j];
                    (*gh)(u, j) = hb;
                }
            }
        }
        ws.h[k + 1] = std::move(hnew);
        if (!retain) {
            // keep only what the next iteration needs
            ws.h[k] = RowMat<S>();
            for (int t = 0; t < kEdgeTypes; ++t) {
                hid[t] = RowMat<S>();
                msg[t] = RowMat<S>();
            }
            ws.agg[k] = RowMat<S>();
        }
    }

    // prediction head on variable nodes
    const RowMat<S>& hK = ws.h[K];
    ws.pred_hidden.resize(nv, s);
    ColVec<S> pred(nv);
    for (int v = 0; v < nv; ++v) {
        S* ph = ws.pred_hidden.row(v).data();
        kern::matvec_set(hK.row(v).data(), model.params.pred_w1.data(), ph, s, s);
        for (int j = 0; j < s; ++j) {
            ph[j] += model.params.pred_b1[j];
            if (ph[j] < S(0)) ph[j] = S(0);
        }
        pred[v] = kern::dot(ph, model.params.pred_w2.data(), s) + model.params.pred_b2;
    }
    return pred;
}

template <class S>
double batch_loss(const ColVec<S>& pred, const Eigen::VectorXd& labels, int n, int graphs) {
    if (pred.size() != labels.size()) throw ArgumentError("prediction/label shape mismatch");
    if (n < 1 || graphs < 1) throw ArgumentError("need n >= 1 and graphs >= 1");
    double acc = 0;
    for (long i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - labels[i];
        acc += d * d;
    }
    return acc / (2.0 * n * graphs);
}

namespace {

/// Reverse-mode pass matching forward() exactly. dpred is dL/dprediction.
template <class S>
void backward(const GnnModel<S>& model, const GraphTensors<S>& gt, const Workspace<S>& ws,
              const ColVec<S>& dpred, Tensors<S>& grads) {
    using Mat = RowMat<S>;
    const int s = model.hyper.s;
    const int K = model.hyper.layers;
    const int nv = gt.nv, nf = gt.nf, N = nv + nf;
    const int E = static_cast<int>(gt.edges.size());
    const bool bn = model.hyper.normalization == Normalization::MeanBatch;

    Mat dH = Mat::Zero(N, s);

    // prediction head
    {
        const Mat& hK = ws.h[K];
        Mat dhidp(nv, s);
        for (int v = 0; v < nv; ++v) {
            const S dy = dpred[v];
            grads.pred_b2 += dy;
            for (int j = 0; j < s; ++j) {
                const S act = ws.pred_hidden(v, j);
                grads.pred_w2[j] += dy * act;
                dhidp(v, j) = act > S(0) ? dy * model.params.pred_w2[j] : S(0);
            }
        }
        grads.pred_w1.noalias() += hK.topRows(nv).transpose() * dhidp;
        grads.pred_b1.noalias() += dhidp.colwise().sum().transpose();
        dH.topRows(nv).noalias() += dhidp * model.params.pred_w1.transpose();
    }

    Mat dM(N, s);
    std::array<Mat, kEdgeTypes> dmsg, dhid;
    std::vector<S> dalpha;

    for (int k = K - 1; k >= 0; --k) {
        const Mat& h = ws.h[k];
        const Mat& agg = ws.agg[k];

        // gated recurrent update backward, per node-type block
        Mat dh_prev = Mat::Zero(N, s);
        for (int block = 0; block < 2; ++block) {
            const int r0 = block == 0 ? 0 : nv;
            const int cnt = block == 0 ? nv : nf;
            if (cnt == 0) continue;
            const auto& g = model.params.gru[block == 0 ? 1 : 0];
            auto& gg = grads.gru[block == 0 ? 1 : 0];

            auto hB = h.middleRows(r0, cnt);
            auto mB = agg.middleRows(r0, cnt);
            auto zB = ws.gate_z[k].middleRows(r0, cnt);
            auto rB = ws.gate_r[k].middleRows(r0, cnt);
            auto bB = ws.gate_h[k].middleRows(r0, cnt);
            auto dHB = dH.middleRows(r0, cnt);

            Mat dz = dHB.array() * (bB.array() - hB.array());
            Mat dhb = dHB.array() * zB.array();
            Mat dhp = dHB.array() * (S(1) - zB.array());

            Mat dhb_pre = dhb.array() * (S(1) - bB.array().square());
            gg.wh.noalias() += mB.transpose() * dhb_pre;
            gg.bh.noalias() += dhb_pre.colwise().sum().transpose();
            Mat dm = dhb_pre * g.wh.transpose();
            Mat rh = rB.array() * hB.array();
            gg.uh.noalias() += rh.transpose() * dhb_pre;
            Mat drh = dhb_pre * g.uh.transpose();
            Mat dr = drh.array() * hB.array();
            dhp.array() += drh.array() * rB.array();

            Mat dz_pre = dz.array() * zB.array() * (S(1) - zB.array());
            Mat dr_pre = dr.array() * rB.array() * (S(1) - rB.array());
            gg.wz.noalias() += mB.transpose() * dz_pre;
            gg.uz.noalias() += hB.transpose() * dz_pre;
            gg.bz.noalias() += dz_pre.colwise().sum().transpose();
            gg.wr.noalias() += mB.transpose() * dr_pre;
            gg.ur.noalias() += hB.transpose() * dr_pre;
            gg.br.noalias() += dr_pre.colwise().sum().transpose();
            dm.noalias() += dz_pre * g.wz.transpose();
            dm.noalias() += dr_pre * g.wr.transpose();
            dhp.noalias() += dz_pre * g.uz.transpose();
            dhp.noalias() += dr_pre * g.ur.transpose();

            dM.middleRows(r0, cnt) = dm;
            dh_prev.middleRows(r0, cnt) = dhp;
        }

        // attention aggregation backward
        for (int t = 0; t < kEdgeTypes; ++t) dmsg[t] = Mat::Zero(gt.type_count[t], s);
        ColVec<S> dscore_raw = ColVec<S>::Zero(E);
        const ColVec<S>& alpha = ws.alpha[k];
        const ColVec<S>& score = ws.score[k];
        for (int u = 0; u < N; ++u) {
            const int b0 = gt.seg_offset[u], b1e = gt.seg_offset[u + 1];
            if (b0 == b1e) continue;
            const S* dmu = dM.row(u).data();
            dalpha.assign(b1e - b0, S(0));
            S sdot = S(0);
            for (int e = b0; e < b1e; ++e) {
                const auto& ed = gt.edges[e];
                const S* mrow = ws.msg[k][ed.type].row(ed.tpos).data();
                S da = S(0);
                for (int j = 0; j < s; ++j) da += dmu[j] * mrow[j];
                dalpha[e - b0] = da;
                sdot += alpha[e] * da;
                S* dmrow = dmsg[ed.type].row(ed.tpos).data();
                const S a = alpha[e];
                for (int j = 0; j < s; ++j) dmrow[j] += a * dmu[j];
            }
            for (int e = b0; e < b1e; ++e) {
                const S ds = alpha[e] * (dalpha[e - b0] - sdot);
                dscore_raw[e] = score[e] > S(0) ? ds : S(kLeakySlope) * ds;
            }
        }

        // message nets backward
        for (int t = 0; t < kEdgeTypes; ++t) {
            const int cnt = gt.type_count[t];
            if (cnt == 0) continue;
            const auto& mp = model.params.msg[t];
            auto& gm = grads.msg[t];
            const Mat& hid_relu = ws.hid[k][t];

            gm.w2.noalias() += hid_relu.transpose() * dmsg[t];
            gm.b2.noalias() += dmsg[t].colwise().sum().transpose();
            dhid[t].noalias() = dmsg[t] * mp.w2.transpose();
            dhid[t] = (hid_relu.array() > S(0)).select(dhid[t], S(0));
            if (bn) {
                // y = x - mean(x): subtract the per-channel mean of the gradient
                Eigen::Matrix<S, 1, Eigen::Dynamic> gmean = dhid[t].colwise().sum() / S(cnt);
                dhid[t].rowwise() -= gmean;
            }
            gm.b1.noalias() += dhid[t].colwise().sum().transpose();
        }

        // scatter per-edge gradients into per-node projection gradients
        std::array<Mat, kEdgeTypes> dPr, dPs;
        std::array<ColVec<S>, kEdgeTypes> ddr, dds;
        for (int t = 0; t < kEdgeTypes; ++t) {
            if (gt.type_count[t] == 0) continue;
            dPr[t] = Mat::Zero(recv_is_factor(t) ? nf : nv, s);
            dPs[t] = Mat::Zero(send_is_factor(t) ? nf : nv, s);
            ddr[t] = ColVec<S>::Zero(recv_is_factor(t) ? nf : nv);
            dds[t] = ColVec<S>::Zero(send_is_factor(t) ? nf : nv);
        }
        for (int e = 0; e < E; ++e) {
            const auto& ed = gt.edges[e];
            const int t = ed.type;
            const int lr = recv_is_factor(t) ? ed.recv - nv : ed.recv;
            const int ls = send_is_factor(t) ? ed.send - nv : ed.send;
            dPr[t].row(lr) += dhid[t].row(ed.tpos);
            dPs[t].row(ls) += dhid[t].row(ed.tpos);
            ddr[t][lr] += dscore_raw[e];
            dds[t][ls] += dscore_raw[e];
        }
        for (int t = 0; t < kEdgeTypes; ++t) {
            if (gt.type_count[t] == 0) continue;
            const auto& mp = model.params.msg[t];
            auto& gm = grads.msg[t];
            const int r0 = recv_is_factor(t) ? nv : 0;
            const int rn = recv_is_factor(t) ? nf : nv;
            const int s0 = send_is_factor(t) ? nv : 0;
            const int sn = send_is_factor(t) ? nf : nv;
            auto hR = h.middleRows(r0, rn);
            auto hS = h.middleRows(s0, sn);
            gm.w1r.noalias() += hR.transpose() * dPr[t];
            gm.w1s.noalias() += hS.transpose() * dPs[t];
            dh_prev.middleRows(r0, rn).noalias() += dPr[t] * mp.w1r.transpose();
            dh_prev.middleRows(s0, sn).noalias() += dPs[t] * mp.w1s.transpose();
            gm.ar.noalias() += hR.transpose() * ddr[t];
            gm.as_.noalias() += hS.transpose() * dds[t];
            dh_prev.middleRows(r0, rn).noalias() += ddr[t] * mp.ar.transpose();
            dh_prev.middleRows(s0, sn).noalias() += dds[t] * mp.as_.transpose();
        }

        dH = std::move(dh_prev);
    }

    // input embeddings
    for (int v = 0; v < nv; ++v) grads.embed_v.row(gt.var_onehot[v]) += dH.row(v);
    if (nf > 0) grads.embed_f.noalias() += gt.f_feat.transpose() * dH.bottomRows(nf);
}

} // namespace

template <class S>
double gradients(GnnModel<S>& model, const GraphTensors<S>& batch, Tensors<S>& grads) {
    if (batch.labels.size() != batch.nv)
        throw ArgumentError("batch has no labels");
    Workspace<S> ws;
    ColVec<S> pred = forward(model, batch, ForwardMode::Train, &ws);

    const double denom = 2.0 * batch.n * batch.graphs;
    double loss = 0;
    ColVec<S> dpred(batch.nv);
    for (int v = 0; v < batch.nv; ++v) {
        const double d = static_cast<double>(pred[v]) - batch.labels[v];
        loss += d * d;
        dpred[v] = static_cast<S>(2.0 * d / denom);
    }
    loss /= denom;
    if (!std::isfinite(loss)) {
        long bad = 0;
        for (int v = 0; v < batch.nv; ++v)
            if (!std::isfinite(static_cast<double>(pred[v]))) {
                bad = batch.var_graph[v];
                break;
            }
        throw NumericError("non-finite loss", bad);
    }

    grads.setup(model.n, model.hyper.s);
    backward(model, batch, ws, dpred, grads);
    return loss;
}

namespace {

template <class S>
std::vector<std::pair<S*, long>> tensor_spans(Tensors<S>& t) {
    std::vector<std::pair<S*, long>> spans;
    t.for_each([&](const char*, S* p, long count) { spans.emplace_back(p, count); });
    return spans;
}

template <class S>
double eval_loss(GnnModel<S>& model, const std::vector<GraphTensors<S>>& set, int chunk) {
    double acc = 0;
    long nodes = 0;
    for (std::size_t i = 0; i < set.size(); i += chunk) {
        std::vector<const GraphTensors<S>*> parts;
        for (std::size_t j = i; j < std::min(set.size(), i + chunk); ++j) parts.push_back(&set[j]);
        GraphTensors<S> uni = concat_graphs(parts);
        ColVec<S> pred = forward<S>(model, uni, ForwardMode::Eval, nullptr);
        for (int v = 0; v < uni.nv; ++v) {
            const double d = static_cast<double>(pred[v]) - uni.labels[v];
            acc += d * d;
        }
        nodes += uni.nv;
    }
    (void)nodes;
    return acc / (2.0 * model.n * set.size());
}

} // namespace

template <class S>
TrainHistory train(GnnModel<S>& model, const std::vector<GraphTensors<S>>& train_set,
                   const std::vector<GraphTensors<S>>& val_set, Rng& rng,
                   const TrainOptions& opts) {
    if (train_set.empty() || val_set.empty())
        throw ArgumentError("training and validation sets must be nonempty");
    for (const auto& gt : train_set)
        if (gt.labels.size() != gt.nv) throw ArgumentError("training sample has no labels");
    const Hyperparams& hp = model.hyper;
    validate_hyperparams(hp);

    Tensors<S> grads, m1, m2;
    m1.setup(model.n, hp.s);
    m2.setup(model.n, hp.s);
    auto pspan = tensor_spans(model.params);
    auto m1span = tensor_spans(m1);
    auto m2span = tensor_spans(m2);

    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    TrainHistory hist;
    double best_val = std::numeric_limits<double>::infinity();
    Tensors<S> best_params = model.params;
    std::vector<ColVec<S>> best_bn = model.bn_mean;

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        rng.shuffle(order);
        double tl_sum = 0;
        int batches = 0;
        for (std::size_t at = 0; at < order.size(); at += hp.batch) {
            std::vector<const GraphTensors<S>*> parts;
            for (std::size_t j = at; j < std::min(order.size(), at + hp.batch); ++j)
                parts.push_back(&train_set[order[j]]);
            GraphTensors<S> uni = concat_graphs(parts);
            tl_sum += gradients(model, uni, grads);
            ++batches;

            auto gspan = tensor_spans(grads);
            double norm2 = 0;
            for (const auto& [p, cnt] : gspan)
                for (long i = 0; i < cnt; ++i) norm2 += static_cast<double>(p[i]) * p[i];
            const double norm = std::sqrt(norm2);
            const S scale = static_cast<S>(norm > hp.clip ? hp.clip / norm : 1.0);

            ++step;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t ti = 0; ti < gspan.size(); ++ti) {
                S* g = gspan[ti].first;
                S* pm = m1span[ti].first;
                S* pv = m2span[ti].first;
                S* pp = pspan[ti].first;
                const long cnt = gspan[ti].second;
                for (long i = 0; i < cnt; ++i) {
                    const double gi = static_cast<double>(g[i]) * scale;
                    const double mi = beta1 * pm[i] + (1.0 - beta1) * gi;
                    const double vi = beta2 * pv[i] + (1.0 - beta2) * gi * gi;
                    pm[i] = static_cast<S>(mi);
                    pv[i] = static_cast<S>(vi);
                    pp[i] -= static_cast<S>(hp.lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
                }
            }
        }
        hist.train_loss.push_back(tl_sum / batches);
        const double vl = eval_loss(model, val_set, hp.batch);
        hist.val_loss.push_back(vl);
        if (vl < best_val) {
            best_val = vl;
            best_params = model.params;
            best_bn = model.bn_mean;
            hist.best_epoch = epoch;
        }
        if (opts.verbose)
            std::fprintf(stderr, "epoch %d/%d train %.6e val %.6e%s\n", epoch, hp.epochs,
                         hist.train_loss.back(), vl, hist.best_epoch == epoch ? " *" : "");
    }
    model.params = best_params;
    model.bn_mean = best_bn;
    return hist;
}

// explicit instantiations
template GnnModel<float> init_model<float>(const Hyperparams&, int, Rng&);
template GnnModel<double> init_model<double>(const Hyperparams&, int, Rng&);
template GraphTensors<float> tensorize<float>(const FactorGraph&);
template GraphTensors<double> tensorize<double>(const FactorGraph&);
template GraphTensors<float> concat_graphs<float>(const std::vector<const GraphTensors<float>*>&);
template GraphTensors<double> concat_graphs<double>(const std::vector<const GraphTensors<double>*>&);
template ColVec<float> forward<float>(GnnModel<float>&, const GraphTensors<float>&, ForwardMode,
                                      Workspace<float>*);
template ColVec<double> forward<double>(GnnModel<double>&, const GraphTensors<double>&, ForwardMode,
                                        Workspace<double>*);
template double batch_loss<float>(const ColVec<float>&, const Eigen::VectorXd&, int, int);
template double batch_loss<double>(const ColVec<double>&, const Eigen::VectorXd&, int, int);
template double gradients<float>(GnnModel<float>&, const GraphTensors<float>&, Tensors<float>&);
template double gradients<double>(GnnModel<double>&, const GraphTensors<double>&, Tensors<double>&);
template TrainHistory train<float>(GnnModel<float>&, const std::vector<GraphTensors<float>>&,
                                   const std::vector<GraphTensors<float>>&, Rng&,
                                   const TrainOptions&);
template TrainHistory train<double>(GnnModel<double>&, const std::vector<GraphTensors<double>>&,
                                    const std::vector<GraphTensors<double>>&, Rng&,
                                    const TrainOptions&);

} // namespace gridse
