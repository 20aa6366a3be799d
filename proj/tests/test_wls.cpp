#include <doctest.h>

#include <cmath>

#include "gridse/measurement.hpp"
#include "gridse/wls.hpp"

#include "test_util.hpp"

using namespace gridse;

namespace {

/// Independent naive oracle: form the dense normal equations and solve them.
Eigen::VectorXd normal_equation_oracle(const Eigen::MatrixXd& H, const Eigen::VectorXd& R,
                                       const Eigen::VectorXd& z) {
    const Eigen::MatrixXd Rinv = R.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd N = H.transpose() * Rinv * H;
    const Eigen::VectorXd rhs = H.transpose() * Rinv * z;
    return N.ldlt().solve(rhs);
}

double weighted_ssr(const Eigen::MatrixXd& H, const Eigen::VectorXd& R, const Eigen::VectorXd& z,
                    const Eigen::VectorXd& x) {
    const Eigen::VectorXd r = z - H * x;
    return (r.array().square() / R.array()).sum();
}

} // namespace

TEST_CASE("solve_wls: square noiseless system is exact") {
    const PowerNetwork net = testutil::two_bus(1.0, -10.0);
    StateVector st;
    st.v_re.resize(2);
    st.v_im.resize(2);
    st.v_re << 1.0, 0.95;
    st.v_im << 0.0, -0.05;
    const MeasurementSet mset = testutil::exact_two_bus_measurements(net, st);
    const JacobianSystem sys = build_jacobian(mset);
    REQUIRE(sys.H.rows() == sys.H.cols()); // minimal observable set
    const WlsSolution sol = solve_wls(sys);
    CHECK(std::abs(sol.state.v_re[0] - 1.0) < 1e-10);
    CHECK(std::abs(sol.state.v_im[0] - 0.0) < 1e-10);
    CHECK(std::abs(sol.state.v_re[1] - 0.95) < 1e-10);
    CHECK(std::abs(sol.state.v_im[1] - -0.05) < 1e-10);
    CHECK(sol.residual_norm < 1e-10);
}

TEST_CASE("solve_wls: normal-equation residual bound") {
    Rng rng(440);
    for (int trial = 0; trial < 20; ++trial) {
        const PowerNetwork net = testutil::random_network(3 + static_cast<int>(rng.uniform_int(8)), rng);
        const Placement p = testutil::random_observable_placement(net, rng);
        const MeasurementSet mset =
            simulate_measurements(net, testutil::random_state(net.n(), rng), p, 1e-3, rng);
        const JacobianSystem sys = build_jacobian(mset);
        const WlsSolution sol = solve_wls(sys);
        const Eigen::MatrixXd Rinv = sys.R.cwiseInverse().asDiagonal();
        const Eigen::VectorXd lhs = sys.H.transpose() * Rinv * sys.H * sol.state.flat();
        const Eigen::VectorXd rhs = sys.H.transpose() * Rinv * sys.z;
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <=
              1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("solve_wls: agrees with the dense normal-equation oracle") {
    Rng rng(512);
    for (int trial = 0; trial < 40; ++trial) {
        const PowerNetwork net = testutil::random_network(2 + static_cast<int>(rng.uniform_int(10)), rng);
        const Placement p = testutil::random_observable_placement(net, rng);
        const double sigma = trial % 2 ? 1e-3 : 0.0;
        const MeasurementSet mset =
            simulate_measurements(net, testutil::random_state(net.n(), rng), p, sigma, rng);
        const JacobianSystem sys = build_jacobian(mset);
        const WlsSolution sol = solve_wls(sys);
        const Eigen::VectorXd oracle = normal_equation_oracle(sys.H, sys.R, sys.z);
        const double rel = (sol.state.flat() - oracle).norm() / std::max(1.0, oracle.norm());
        CHECK(rel < 1e-8);
    }
}

TEST_CASE("solve_wls: solution minimizes the weighted residual") {
    const PowerNetwork net = testutil::four_bus();
    Rng rng(77);
    const MeasurementSet mset =
        simulate_measurements(net, testutil::random_state(4, rng), Placement{{0, 2}}, 1e-3, rng);
    const JacobianSystem sys = build_jacobian(mset);
    const WlsSolution sol = solve_wls(sys);
    const Eigen::VectorXd x = sol.state.flat();
    const double best = weighted_ssr(sys.H, sys.R, sys.z, x);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd delta(x.size());
        for (long i = 0; i < delta.size(); ++i) delta[i] = rng.uniform(-1e-4, 1e-4);
        CHECK(weighted_ssr(sys.H, sys.R, sys.z, x + delta) >= best);
    }
}

TEST_CASE("solve_wls: common variance scaling leaves the solution unchanged") {
    const PowerNetwork net = testutil::four_bus();
    Rng rng(78);
    const MeasurementSet mset =
        simulate_measurements(net, testutil::random_state(4, rng), Placement{{0, 2}}, 1e-3, rng);
    const JacobianSystem sys = build_jacobian(mset);
    const Eigen::VectorXd base = solve_wls(sys).state.flat();
    for (double scale : {1e-4, 0.5, 3.0, 1e4}) {
        const Eigen::VectorXd scaled = solve_wls(sys.H, sys.R * scale, sys.z).state.flat();
        CHECK((scaled - base).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("solve_wls: unobservable system raises SingularityError with the rank") {
    const PowerNetwork net = load_network(testutil::data_path("ieee30.cdf"));
    const Placement p = load_placement_file(testutil::data_path("placement30.txt"), net);
    Rng rng(11);
    const MeasurementSet full =
        simulate_measurements(net, testutil::flat_state(net.n()), p, 1e-3, rng);
    const MeasurementSet one_left =
        exclude_phasors(full, rng.sample_without_replacement(50, 49));
    REQUIRE(one_left.phasor_count() == 1);
    try {
        solve_wls(build_jacobian(one_left));
        FAIL("expected SingularityError");
    } catch (const SingularityError& e) {
        CHECK(e.rank() < 60);
        CHECK(e.needed() == 60);
    }
}

TEST_CASE("observability_rank: full placement, empty rows, degraded placement") {
    const PowerNetwork net = load_network(testutil::data_path("ieee30.cdf"));
    const Placement p = load_placement_file(testutil::data_path("placement30.txt"), net);
    Rng rng(6);
    const MeasurementSet mset =
        simulate_measurements(net, testutil::flat_state(net.n()), p, 1e-3, rng);
    const JacobianSystem sys = build_jacobian(mset);
    const auto [rank, obs] = observability_rank(sys.H);
    CHECK(rank == 60);
    CHECK(obs);

    CHECK(observability_rank(Eigen::MatrixXd::Zero(4, 4)).first == 0);

    // dropping the voltage phasor of a minimal 2-bus placement kills rank
    const PowerNetwork two = testutil::two_bus();
    Rng r2(1);
    const MeasurementSet m2 =
        simulate_measurements(two, testutil::flat_state(2), Placement{{0}}, 0.0, r2);
    const auto full2 = observability_rank(build_jacobian(m2).H);
    CHECK(full2.first == 4);
    CHECK(full2.second);
    const MeasurementSet dropped = exclude_phasors(m2, {0});
    const auto degraded = observability_rank(build_jacobian(dropped).H);
    CHECK(degraded.first < 4);
    CHECK_FALSE(degraded.second);
}
