#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "gridse/factor_graph.hpp"
#include "gridse/gnn.hpp"
#include "gridse/power_flow.hpp"
#include "gridse/wls.hpp"

#include "test_util.hpp"

using namespace gridse;

namespace {

/// Labeled augmented (or plain) graph for one noisy draw on a network.
template <class S>
GraphTensors<S> make_graph(const PowerNetwork& net, const Placement& p, std::uint64_t seed,
                           bool augmented = true, double sigma = 1e-3) {
    Rng rng(seed);
    const StateVector st = solve_power_flow(net, sample_load_profile(net, 0.95, 1.05, rng));
    const MeasurementSet mset = simulate_measurements(net, st, p, sigma, rng);
    const Eigen::VectorXd label = solve_wls(build_jacobian(mset)).state.flat();
    FactorGraph g = build_factor_graph(net, mset, &label);
    if (augmented) g = augment(std::move(g), net);
    return tensorize<S>(g);
}

template <class S>
bool tensors_equal(const Tensors<S>& a, const Tensors<S>& b) {
    bool equal = true;
    std::vector<std::pair<const S*, long>> bs;
    b.for_each([&](const char*, const S* p, long c) { bs.emplace_back(p, c); });
    std::size_t i = 0;
    a.for_each([&](const char*, const S* p, long c) {
        if (std::memcmp(p, bs[i].first, sizeof(S) * static_cast<std::size_t>(c)) != 0)
            equal = false;
        ++i;
    });
    return equal;
}

} // namespace

TEST_CASE("validate_hyperparams rejects out-of-range values") {
    Hyperparams good;
    CHECK_NOTHROW(validate_hyperparams(good));
    auto reject = [](auto mutate) {
        Hyperparams h;
        mutate(h);
        CHECK_THROWS_AS(validate_hyperparams(h), ArgumentError);
    };
    reject([](Hyperparams& h) { h.s = 0; });
    reject([](Hyperparams& h) { h.layers = 0; });
    reject([](Hyperparams& h) { h.batch = 0; });
    reject([](Hyperparams& h) { h.lr = -1e-3; });
    reject([](Hyperparams& h) { h.clip = 0; });
    reject([](Hyperparams& h) { h.epochs = -1; });
    reject([](Hyperparams& h) { h.activation = "tanh"; });
}

TEST_CASE("init_model: determinism and shapes") {
    Hyperparams hp; // s=64
    Rng a(42), b(42), c(43);
    const GnnModel<float> ma = init_model<float>(hp, 30, a);
    const GnnModel<float> mb = init_model<float>(hp, 30, b);
    const GnnModel<float> mc = init_model<float>(hp, 30, c);
    CHECK(tensors_equal(ma.params, mb.params));
    CHECK_FALSE(tensors_equal(ma.params, mc.params));

    CHECK(ma.params.embed_v.rows() == 60);
    CHECK(ma.params.embed_v.cols() == 64);
    CHECK(ma.params.embed_f.rows() == 5);
    CHECK(ma.params.pred_w1.rows() == 64);
    CHECK(ma.params.pred_w1.cols() == 64);
    CHECK(ma.params.pred_w2.size() == 64);
    CHECK(ma.params.msg[0].w1r.rows() == 64);
    CHECK(ma.bn_mean.size() == static_cast<std::size_t>(hp.layers * kEdgeTypes));

    // biases start at zero, weights within the Glorot bound
    CHECK(ma.params.pred_b1.cwiseAbs().maxCoeff() == 0.0f);
    CHECK(ma.params.msg[1].b1.cwiseAbs().maxCoeff() == 0.0f);
    const float bound = std::sqrt(6.0f / (64 + 64));
    CHECK(ma.params.pred_w1.cwiseAbs().maxCoeff() <= bound);
    CHECK(ma.params.pred_w1.cwiseAbs().maxCoeff() > 0.5f * bound);
}

TEST_CASE("tensorize: edge ordering, segments, and payload") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<float> gt = make_graph<float>(net, Placement{{0, 2}}, 7);

    CHECK(gt.n == 4);
    CHECK(gt.nv == 8);
    CHECK(gt.nf == 16); // 8 phasors x 2 components
    CHECK(gt.graphs == 1);

    // edges sorted by (recv, type, send); tpos counts each type in order
    std::array<int, kEdgeTypes> counter{};
    for (std::size_t e = 0; e < gt.edges.size(); ++e) {
        if (e > 0) {
            const auto& prev = gt.edges[e - 1];
            const auto& cur = gt.edges[e];
            CHECK(std::tie(prev.recv, prev.type, prev.send) <
                  std::tie(cur.recv, cur.type, cur.send));
        }
        CHECK(gt.edges[e].tpos == counter[static_cast<std::size_t>(gt.edges[e].type)]++);
    }
    for (int t = 0; t < kEdgeTypes; ++t)
        CHECK(counter[static_cast<std::size_t>(t)] == gt.type_count[static_cast<std::size_t>(t)]);

    // seg_offset is a CSR over receivers
    REQUIRE(static_cast<int>(gt.seg_offset.size()) == gt.total_nodes() + 1);
    CHECK(gt.seg_offset.front() == 0);
    CHECK(gt.seg_offset.back() == static_cast<int>(gt.edges.size()));
    for (int node = 0; node < gt.total_nodes(); ++node)
        for (int e = gt.seg_offset[node]; e < gt.seg_offset[node + 1]; ++e)
            CHECK(gt.edges[static_cast<std::size_t>(e)].recv == node);

    // edge counts per direction: each factor-variable pair contributes one
    // edge of each direction (types 0 and 1)
    int fv = 0;
    for (int t : {0, 1}) fv += gt.type_count[static_cast<std::size_t>(t)];
    CHECK(gt.type_count[0] == gt.type_count[1]);
    // voltage factors touch 1 variable, current factors 4: 2*(2*1 + 6*4) = 52
    // pairs, so 52 edges per direction
    CHECK(gt.type_count[0] == 52);
    CHECK(fv == 104);
    CHECK(gt.var_index == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(gt.var_graph == std::vector<int>(8, 0));
    CHECK(gt.labels.size() == 8);
}

TEST_CASE("concat_graphs: disjoint union keeps blocks and order") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<float> a = make_graph<float>(net, Placement{{0, 2}}, 1);
    const GraphTensors<float> b = make_graph<float>(net, Placement{{0}}, 2);
    const GraphTensors<float> c = make_graph<float>(net, Placement{{1, 3}}, 3);
    const GraphTensors<float> u = concat_graphs<float>({&a, &b, &c});

    CHECK(u.graphs == 3);
    CHECK(u.nv == a.nv + b.nv + c.nv);
    CHECK(u.nf == a.nf + b.nf + c.nf);
    CHECK(static_cast<int>(u.edges.size()) ==
          static_cast<int>(a.edges.size() + b.edges.size() + c.edges.size()));
    std::vector<int> expect_graph;
    for (int part = 0; part < 3; ++part)
        for (int i = 0; i < 8; ++i) expect_graph.push_back(part);
    CHECK(u.var_graph == expect_graph);
    CHECK(u.var_index[8] == b.var_index[0]); // one-hot indices survive the union
    CHECK((u.labels.segment(8, 8) - b.labels).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: attention weights sum to one over every neighborhood") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<double> gt = make_graph<double>(net, Placement{{0, 2}}, 11);
    Hyperparams hp;
    hp.s = 16;
    hp.layers = 3;
    Rng rng(5);
    GnnModel<double> model = init_model<double>(hp, net.n(), rng);
    Workspace<double> ws;
    forward(model, gt, ForwardMode::Train, &ws);

    REQUIRE(ws.alpha.size() == static_cast<std::size_t>(hp.layers));
    for (int layer = 0; layer < hp.layers; ++layer) {
        const auto& alpha = ws.alpha[static_cast<std::size_t>(layer)];
        REQUIRE(alpha.size() == static_cast<long>(gt.edges.size()));
        for (int node = 0; node < gt.total_nodes(); ++node) {
            const int lo = gt.seg_offset[node], hi = gt.seg_offset[node + 1];
            if (lo == hi) continue;
            double sum = 0;
            for (int e = lo; e < hi; ++e) sum += alpha[e];
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("forward: singleton neighborhood gets attention weight exactly 1") {
    // a voltage-only measurement set: each voltage factor node has exactly one
    // incoming edge (from its variable)
    const PowerNetwork net = testutil::two_bus();
    MeasurementSet mset;
    mset.network = &net;
    PhasorMeasurement v;
    v.kind = {PhasorType::BusVoltage, 0};
    v.value_re = 1.0;
    mset.phasors.push_back(v);
    const FactorGraph g = build_factor_graph(net, mset);
    const GraphTensors<float> gt = tensorize<float>(g);

    Hyperparams hp;
    hp.s = 8;
    hp.layers = 2;
    Rng rng(3);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    Workspace<float> ws;
    forward(model, gt, ForwardMode::Eval, &ws);
    for (int node = 0; node < gt.total_nodes(); ++node) {
        const int lo = gt.seg_offset[node], hi = gt.seg_offset[node + 1];
        if (hi - lo != 1) continue;
        CHECK(ws.alpha[0][lo] == 1.0f);
        CHECK(ws.alpha[1][lo] == 1.0f);
    }
}

TEST_CASE("forward: isolated variables stay finite (empty-neighborhood convention)") {
    const PowerNetwork net = testutil::four_bus();
    MeasurementSet empty;
    empty.network = &net;
    const FactorGraph g = build_factor_graph(net, empty); // no edges at all
    const GraphTensors<float> gt = tensorize<float>(g);
    Hyperparams hp;
    hp.s = 8;
    hp.layers = 4;
    Rng rng(9);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    const ColVec<float> pred = forward(model, gt, ForwardMode::Eval);
    REQUIRE(pred.size() == 8);
    for (long i = 0; i < pred.size(); ++i) CHECK(std::isfinite(pred[i]));
}

TEST_CASE("forward: permutation equivariance (normalization off)") {
    const PowerNetwork net = testutil::four_bus();
    Rng mrng(31);
    Hyperparams hp;
    hp.s = 12;
    hp.layers = 4;
    hp.normalization = Normalization::Off;
    GnnModel<double> model = init_model<double>(hp, net.n(), mrng);

    Rng grng(8);
    const StateVector st = solve_power_flow(net, nominal_profile(net));
    const MeasurementSet mset = simulate_measurements(net, st, Placement{{0, 2}}, 1e-3, grng);
    const FactorGraph g = augment(build_factor_graph(net, mset), net);

    // permute the storage order of variables and factors, remapping edges
    FactorGraph perm = g;
    const int nv = g.variable_count(), nf = g.factor_count();
    std::vector<int> vmap(static_cast<std::size_t>(nv)), fmap(static_cast<std::size_t>(nf));
    std::iota(vmap.begin(), vmap.end(), 0);
    std::iota(fmap.begin(), fmap.end(), 0);
    Rng prng(99);
    prng.shuffle(vmap);
    prng.shuffle(fmap);
    for (int i = 0; i < nv; ++i) perm.variables[static_cast<std::size_t>(vmap[i])] = g.variables[static_cast<std::size_t>(i)];
    for (int i = 0; i < nf; ++i) perm.factors[static_cast<std::size_t>(fmap[i])] = g.factors[static_cast<std::size_t>(i)];
    for (auto& [f, v] : perm.fv_edges) {
        f = fmap[static_cast<std::size_t>(f)];
        v = vmap[static_cast<std::size_t>(v)];
    }
    for (auto& [a, b] : perm.vv_edges) {
        a = vmap[static_cast<std::size_t>(a)];
        b = vmap[static_cast<std::size_t>(b)];
    }
    // labels are indexed by original variable index and need no remapping

    const ColVec<double> base = forward(model, tensorize<double>(g), ForwardMode::Eval);
    const ColVec<double> moved = forward(model, tensorize<double>(perm), ForwardMode::Eval);
    for (int i = 0; i < nv; ++i)
        CHECK(std::abs(moved[vmap[static_cast<std::size_t>(i)]] - base[i]) < 1e-12);
}

TEST_CASE("forward: locality is bit-exact (normalization off)") {
    const PowerNetwork net = testutil::four_bus();
    Rng mrng(17);
    Hyperparams hp;
    hp.s = 16;
    hp.layers = 2; // strictly smaller than the graph diameter so locality bites
    hp.normalization = Normalization::Off;
    GnnModel<float> model = init_model<float>(hp, net.n(), mrng);

    Rng grng(12);
    const StateVector st = solve_power_flow(net, nominal_profile(net));
    const MeasurementSet mset = simulate_measurements(net, st, Placement{{0, 2}}, 1e-3, grng);
    const FactorGraph g = augment(build_factor_graph(net, mset), net);
    const ColVec<float> full = forward(model, tensorize<float>(g), ForwardMode::Eval);

    for (int v = 0; v < g.variable_count(); ++v) {
        // k-hop subgraph forward equals the full forward at v, bitwise
        const FactorGraph sub = khop_subgraph(g, g.variables[static_cast<std::size_t>(v)].index,
                                              hp.layers);
        const GraphTensors<float> sgt = tensorize<float>(sub);
        const ColVec<float> sp = forward(model, sgt, ForwardMode::Eval);
        int pos = -1;
        for (int k = 0; k < sub.variable_count(); ++k)
            if (sub.variables[static_cast<std::size_t>(k)].index ==
                g.variables[static_cast<std::size_t>(v)].index)
                pos = k;
        REQUIRE(pos >= 0);
        CHECK(std::memcmp(&sp[pos], &full[v], sizeof(float)) == 0);

        // perturbing factor features outside the K-hop neighborhood changes nothing
        std::set<int> inside;
        for (const FactorNode& f : sub.factors)
            inside.insert(f.phasor_index * 2 + (f.part == NodePart::Im ? 1 : 0));
        FactorGraph poked = g;
        bool poked_any = false;
        for (int f = 0; f < poked.factor_count(); ++f) {
            const FactorNode& fn = poked.factors[static_cast<std::size_t>(f)];
            if (inside.count(fn.phasor_index * 2 + (fn.part == NodePart::Im ? 1 : 0))) continue;
            poked.factors[static_cast<std::size_t>(f)].feature = {9.5, 7.5, 1, 1, 1};
            poked_any = true;
        }
        if (!poked_any) continue;
        const ColVec<float> pp = forward(model, tensorize<float>(poked), ForwardMode::Eval);
        CHECK(std::memcmp(&pp[v], &full[v], sizeof(float)) == 0);
    }
}

TEST_CASE("forward: union batching equals per-graph forward bitwise") {
    const PowerNetwork net = testutil::four_bus();
    std::vector<GraphTensors<float>> gts;
    for (std::uint64_t s = 0; s < 4; ++s)
        gts.push_back(make_graph<float>(net, Placement{{0, 2}}, 100 + s));
    Hyperparams hp; // defaults, including batch norm
    hp.s = 24;
    Rng rng(71);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    hp.normalization = Normalization::Off; // Train-mode batch means differ by batch, Eval is fixed
    const GraphTensors<float> uni =
        concat_graphs<float>({&gts[0], &gts[1], &gts[2], &gts[3]});
    const ColVec<float> up = forward(model, uni, ForwardMode::Eval);
    long at = 0;
    for (const auto& gt : gts) {
        const ColVec<float> single = forward(model, gt, ForwardMode::Eval);
        CHECK(std::memcmp(up.data() + at, single.data(),
                          sizeof(float) * static_cast<std::size_t>(single.size())) == 0);
        at += single.size();
    }
}

TEST_CASE("batch_loss: definition and batch invariance") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<float> gt = make_graph<float>(net, Placement{{0, 2}}, 55);
    Hyperparams hp;
    hp.s = 8;
    Rng rng(2);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    const ColVec<float> pred = forward(model, gt, ForwardMode::Eval);

    // pred == label -> 0
    Eigen::VectorXd same(pred.size());
    for (long i = 0; i < pred.size(); ++i) same[i] = static_cast<double>(pred[i]);
    CHECK(batch_loss(pred, same, gt.n, 1) == 0.0);

    // every prediction off by 0.1: loss = (2n * 0.01) / (2n * 1) = 0.01
    Eigen::VectorXd off = same.array() - 0.1;
    CHECK(batch_loss(pred, off, gt.n, 1) == doctest::Approx(0.01).epsilon(1e-6));

    // duplicated batch leaves the loss unchanged
    const GraphTensors<float> uni = concat_graphs<float>({&gt, &gt});
    const ColVec<float> up = forward(model, uni, ForwardMode::Eval);
    CHECK(batch_loss(up, uni.labels, uni.n, 2) ==
          doctest::Approx(batch_loss(pred, gt.labels, gt.n, 1)).epsilon(1e-12));
}

TEST_CASE("gradients: finite-difference agreement on a small graph") {
    const PowerNetwork net = testutil::two_bus(1.0, -8.0, 0.03);
    const GraphTensors<double> gt = make_graph<double>(net, Placement{{0}}, 3);
    for (Normalization norm : {Normalization::Off, Normalization::MeanBatch}) {
        Hyperparams hp;
        hp.s = 8;
        hp.layers = 2;
        hp.normalization = norm;
        Rng rng(19);
        GnnModel<double> model = init_model<double>(hp, net.n(), rng);
        Tensors<double> grads;
        gradients(model, gt, grads);

        std::vector<std::pair<double*, long>> spans;
        model.params.for_each([&](const char*, double* p, long c) { spans.emplace_back(p, c); });
        std::vector<std::pair<const double*, long>> gspans;
        grads.for_each([&](const char*, const double* p, long c) { gspans.emplace_back(p, c); });

        Rng pick(5);
        double worst = 0;
        for (int trial = 0; trial < 40; ++trial) {
            const int ti = static_cast<int>(pick.uniform_int(spans.size()));
            const long ii =
                static_cast<long>(pick.uniform_int(static_cast<std::uint64_t>(spans[ti].second)));
            const double h = 1e-5;
            GnnModel<double> probe = model;
            std::vector<std::pair<double*, long>> ps;
            probe.params.for_each([&](const char*, double* p, long c) { ps.emplace_back(p, c); });
            Tensors<double> scratch;
            const double saved = ps[ti].first[ii];
            ps[ti].first[ii] = saved + h;
            const double lp = gradients(probe, gt, scratch);
            ps[ti].first[ii] = saved - h;
            const double lm = gradients(probe, gt, scratch);
            const double fd = (lp - lm) / (2 * h);
            const double an = gspans[ti].first[ii];
            worst = std::max(worst,
                             std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("gradients: duplicated minibatch equals the single-graph gradient") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<double> gt = make_graph<double>(net, Placement{{0, 2}}, 13);
    const GraphTensors<double> uni = concat_graphs<double>({&gt, &gt, &gt});
    Hyperparams hp;
    hp.s = 8;
    hp.layers = 2;
    Rng rng(23);
    GnnModel<double> model = init_model<double>(hp, net.n(), rng);
    Tensors<double> g1, g3;
    const double l1 = gradients(model, gt, g1);
    GnnModel<double> model2 = model; // keep running means out of the picture
    const double l3 = gradients(model2, uni, g3);
    CHECK(l3 == doctest::Approx(l1).epsilon(1e-12));

    std::vector<std::pair<const double*, long>> a, b;
    g1.for_each([&](const char*, const double* p, long c) { a.emplace_back(p, c); });
    g3.for_each([&](const char*, const double* p, long c) { b.emplace_back(p, c); });
    for (std::size_t t = 0; t < a.size(); ++t)
        for (long i = 0; i < a[t].second; ++i)
            CHECK(a[t].first[i] == doctest::Approx(b[t].first[i]).epsilon(1e-10));
}

TEST_CASE("gradients: zero prediction head leaves only the bias gradient") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<float> gt = make_graph<float>(net, Placement{{0, 2}}, 29);
    Hyperparams hp;
    hp.s = 8;
    hp.layers = 2;
    Rng rng(37);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    model.params.pred_w1.setZero();
    model.params.pred_b1.setZero();
    model.params.pred_w2.setZero();
    model.params.pred_b2 = 0;
    Tensors<float> grads;
    gradients(model, gt, grads);

    // dL/d pred_b2 = sum_v (0 - label_v) / (n * B)
    const float want = static_cast<float>(-gt.labels.sum() / gt.n);
    CHECK(grads.pred_b2 == doctest::Approx(want).epsilon(1e-5));
    // everything upstream of the dead ReLU path is exactly zero
    grads.for_each([&](const char* name, const float* p, long c) {
        if (std::string(name) == "pred_b2") return;
        for (long i = 0; i < c; ++i) CHECK(p[i] == 0.0f);
    });
}

TEST_CASE("gradients: non-finite loss raises NumericError with the graph index") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<float> gt = make_graph<float>(net, Placement{{0, 2}}, 31);
    Hyperparams hp;
    hp.s = 8;
    Rng rng(41);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    model.params.pred_b2 = std::numeric_limits<float>::quiet_NaN();
    Tensors<float> grads;
    try {
        gradients(model, gt, grads);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.index() == 0);
    }
}

TEST_CASE("batch norm: running means update in Train and freeze in Eval") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<float> gt = make_graph<float>(net, Placement{{0, 2}}, 61);
    Hyperparams hp;
    hp.s = 8;
    hp.layers = 2;
    Rng rng(43);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    REQUIRE(model.bn_mean.size() == 6);
    for (const auto& v : model.bn_mean) CHECK(v.cwiseAbs().maxCoeff() == 0.0f);

    // one Train pass: running <- 0.9*0 + 0.1*mu
    forward(model, gt, ForwardMode::Train);
    std::vector<ColVec<float>> after_one = model.bn_mean;
    bool any = false;
    for (const auto& v : after_one) any = any || v.cwiseAbs().maxCoeff() > 0;
    CHECK(any);

    // Eval passes never mutate the running means
    const ColVec<float> e1 = forward(model, gt, ForwardMode::Eval);
    for (std::size_t i = 0; i < after_one.size(); ++i)
        CHECK((model.bn_mean[i] - after_one[i]).cwiseAbs().maxCoeff() == 0.0f);
    const ColVec<float> e2 = forward(model, gt, ForwardMode::Eval);
    CHECK(std::memcmp(e1.data(), e2.data(), sizeof(float) * static_cast<std::size_t>(e1.size())) == 0);

    // a second identical Train pass sees the same batch mean mu, so the
    // running mean becomes 0.19*mu = 1.9x its previous value
    forward(model, gt, ForwardMode::Train);
    for (std::size_t i = 0; i < after_one.size(); ++i)
        for (long j = 0; j < after_one[i].size(); ++j)
            CHECK(model.bn_mean[i][j] ==
                  doctest::Approx(1.9f * after_one[i][j]).epsilon(1e-5));
}

TEST_CASE("batch norm off: Train and Eval forwards agree bitwise") {
    const PowerNetwork net = testutil::four_bus();
    const GraphTensors<float> gt = make_graph<float>(net, Placement{{0, 2}}, 67);
    Hyperparams hp;
    hp.s = 8;
    hp.normalization = Normalization::Off;
    Rng rng(47);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    CHECK(model.bn_mean.empty());
    const ColVec<float> tr = forward(model, gt, ForwardMode::Train);
    const ColVec<float> ev = forward(model, gt, ForwardMode::Eval);
    CHECK(std::memcmp(tr.data(), ev.data(), sizeof(float) * static_cast<std::size_t>(tr.size())) == 0);
}

TEST_CASE("train: lr 0 leaves parameters unchanged") {
    const PowerNetwork net = testutil::four_bus();
    std::vector<GraphTensors<float>> train_set, val_set;
    for (std::uint64_t s = 0; s < 3; ++s)
        train_set.push_back(make_graph<float>(net, Placement{{0, 2}}, 200 + s));
    val_set.push_back(make_graph<float>(net, Placement{{0, 2}}, 300));

    Hyperparams hp;
    hp.s = 8;
    hp.lr = 0.0;
    hp.epochs = 2;
    hp.batch = 2;
    Rng rng(53);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    const Tensors<float> before = model.params;
    const TrainHistory hist = train(model, train_set, val_set, rng);
    CHECK(tensors_equal(model.params, before));
    CHECK(hist.train_loss.size() == 2);
    CHECK(hist.val_loss.size() == 2);
    CHECK(hist.best_epoch >= 1);
}

TEST_CASE("train: overfits a 10-sample set within 500 epochs") {
    const PowerNetwork net = testutil::four_bus();
    std::vector<GraphTensors<float>> train_set, val_set;
    for (std::uint64_t s = 0; s < 10; ++s)
        train_set.push_back(make_graph<float>(net, Placement{{0, 2}}, 400 + s));
    val_set.push_back(make_graph<float>(net, Placement{{0, 2}}, 500));

    Hyperparams hp;
    hp.s = 32;
    hp.layers = 4;
    hp.batch = 10;
    hp.lr = 3e-3;
    hp.epochs = 500;
    Rng rng(59);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    const TrainHistory hist = train(model, train_set, val_set, rng);
    REQUIRE(hist.train_loss.size() == 500);
    double best = hist.train_loss[0];
    for (double l : hist.train_loss) best = std::min(best, l);
    CHECK(best < 1e-6);
}

TEST_CASE("train: returns the best-validation parameters") {
    const PowerNetwork net = testutil::four_bus();
    std::vector<GraphTensors<float>> train_set, val_set;
    for (std::uint64_t s = 0; s < 6; ++s)
        train_set.push_back(make_graph<float>(net, Placement{{0, 2}}, 600 + s));
    for (std::uint64_t s = 0; s < 3; ++s)
        val_set.push_back(make_graph<float>(net, Placement{{0, 2}}, 700 + s));

    Hyperparams hp;
    hp.s = 16;
    hp.epochs = 30;
    hp.batch = 4;
    hp.lr = 2e-3;
    Rng rng(61);
    GnnModel<float> model = init_model<float>(hp, net.n(), rng);
    const TrainHistory hist = train(model, train_set, val_set, rng);
    REQUIRE(hist.best_epoch >= 1);
    REQUIRE(hist.best_epoch <= 30);
    const double best_val = hist.val_loss[static_cast<std::size_t>(hist.best_epoch - 1)];
    for (double v : hist.val_loss) CHECK(best_val <= v + 1e-12);

    // recomputing the validation loss on the returned parameters reproduces
    // the recorded best value
    double sq = 0;
    long count = 0;
    for (const auto& gt : val_set) {
        const ColVec<float> pred = forward(model, gt, ForwardMode::Eval);
        for (long i = 0; i < pred.size(); ++i) {
            const double d = static_cast<double>(pred[i]) - gt.labels[i];
            sq += d * d;
        }
        count += pred.size();
    }
    CHECK(sq / static_cast<double>(count) == doctest::Approx(best_val).epsilon(1e-5));
}
