// Microbenchmarks for the hot paths: power flow, WLS, graph building, and the
// GNN forward/backward passes on the 30-bus case with default-size models.

#include <benchmark/benchmark.h>

#include "gridse/dataset.hpp"
#include "gridse/experiments.hpp"
#include "gridse/factor_graph.hpp"
#include "gridse/gnn.hpp"
#include "gridse/grid_model.hpp"
#include "gridse/measurement.hpp"
#include "gridse/placement.hpp"
#include "gridse/power_flow.hpp"
#include "gridse/rng.hpp"
#include "gridse/wls.hpp"

namespace {

using namespace gridse;

std::string data_path(const char* name) {
    return std::string(GRIDSE_DATA_DIR) + "/" + name;
}

const PowerNetwork& net30() {
    static const PowerNetwork net = load_network(data_path("ieee30.cdf"));
    return net;
}

const Placement& placement30() {
    static const Placement p = load_placement_file(data_path("placement30.txt"), net30());
    return p;
}

MeasurementSet sample_mset(std::uint64_t seed) {
    Rng rng(seed);
    const StateVector st = solve_power_flow(net30(), sample_load_profile(net30(), 0.9, 1.1, rng));
    return simulate_measurements(net30(), st, placement30(), 1e-3, rng);
}

void bm_power_flow(benchmark::State& state) {
    const LoadProfile profile = nominal_profile(net30());
    for (auto _ : state) {
        StateVector st = solve_power_flow(net30(), profile);
        benchmark::DoNotOptimize(st.v_re.data());
    }
}
BENCHMARK(bm_power_flow);

void bm_build_jacobian(benchmark::State& state) {
    const MeasurementSet mset = sample_mset(1);
    for (auto _ : state) {
        JacobianSystem sys = build_jacobian(mset);
        benchmark::DoNotOptimize(sys.H.data());
    }
}
BENCHMARK(bm_build_jacobian);

void bm_wls_solve(benchmark::State& state) {
    const JacobianSystem sys = build_jacobian(sample_mset(2));
    for (auto _ : state) {
        WlsSolution sol = solve_wls(sys);
        benchmark::DoNotOptimize(sol.state.v_re.data());
    }
}
BENCHMARK(bm_wls_solve);

void bm_factor_graph(benchmark::State& state) {
    const MeasurementSet mset = sample_mset(3);
    const Eigen::VectorXd label = solve_wls(build_jacobian(mset)).state.flat();
    for (auto _ : state) {
        FactorGraph g = augment(build_factor_graph(net30(), mset, &label), net30());
        benchmark::DoNotOptimize(g.variables.data());
    }
}
BENCHMARK(bm_factor_graph);

GraphTensors<float> graph30(std::uint64_t seed) {
    const MeasurementSet mset = sample_mset(seed);
    const Eigen::VectorXd label = solve_wls(build_jacobian(mset)).state.flat();
    return tensorize<float>(augment(build_factor_graph(net30(), mset, &label), net30()));
}

void bm_forward(benchmark::State& state) {
    const GraphTensors<float> gt = graph30(4);
    Hyperparams hp; // defaults: s 64, 4 layers
    Rng rng(5);
    GnnModel<float> model = init_model<float>(hp, net30().n(), rng);
    Workspace<float> ws;
    for (auto _ : state) {
        ColVec<float> pred = forward(model, gt, ForwardMode::Eval, &ws);
        benchmark::DoNotOptimize(pred.data());
    }
}
BENCHMARK(bm_forward);

void bm_forward_batch32(benchmark::State& state) {
    std::vector<GraphTensors<float>> gts;
    std::vector<const GraphTensors<float>*> parts;
    for (std::uint64_t i = 0; i < 32; ++i) gts.push_back(graph30(10 + i));
    for (const auto& g : gts) parts.push_back(&g);
    const GraphTensors<float> uni = concat_graphs(parts);
    Hyperparams hp;
    Rng rng(6);
    GnnModel<float> model = init_model<float>(hp, net30().n(), rng);
    Workspace<float> ws;
    for (auto _ : state) {
        ColVec<float> pred = forward(model, uni, ForwardMode::Eval, &ws);
        benchmark::DoNotOptimize(pred.data());
    }
}
BENCHMARK(bm_forward_batch32);

void bm_gradients(benchmark::State& state) {
    const GraphTensors<float> gt = graph30(7);
    Hyperparams hp;
    Rng rng(8);
    GnnModel<float> model = init_model<float>(hp, net30().n(), rng);
    Tensors<float> grads;
    for (auto _ : state) {
        const double loss = gradients(model, gt, grads);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(bm_gradients);

} // namespace

BENCHMARK_MAIN();
