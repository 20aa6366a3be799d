#include <doctest.h>

#include "gridse/measurement.hpp"
#include "gridse/placement.hpp"
#include "gridse/wls.hpp"

#include "test_util.hpp"

using namespace gridse;

namespace {

std::pair<int, bool> placement_rank(const PowerNetwork& net, const Placement& p) {
    Rng rng(1);
    const MeasurementSet mset =
        simulate_measurements(net, testutil::flat_state(net.n()), p, 0.0, rng);
    return observability_rank(build_jacobian(mset).H);
}

} // namespace

TEST_CASE("greedy_place: one PMU covers a 2-bus line") {
    const PowerNetwork net = testutil::two_bus();
    const Placement p = greedy_place(net);
    CHECK(p.pmu_buses.size() == 1);
    CHECK(placement_rank(net, p).second);
}

TEST_CASE("greedy_place: star network needs only the hub") {
    const PowerNetwork net = testutil::star_network(6);
    const Placement p = greedy_place(net);
    REQUIRE(p.pmu_buses.size() == 1);
    CHECK(p.pmu_buses[0] == 0);
    CHECK(placement_rank(net, p).second);
}

TEST_CASE("greedy_place: IEEE 30-bus is observable with at most 12 PMUs") {
    const PowerNetwork net = load_network(testutil::data_path("ieee30.cdf"));
    const Placement p = greedy_place(net);
    CHECK(p.pmu_buses.size() <= 12);
    const auto [rank, obs] = placement_rank(net, p);
    CHECK(rank == 60);
    CHECK(obs);
    // deterministic
    const Placement again = greedy_place(net);
    CHECK(again.pmu_buses == p.pmu_buses);
}

TEST_CASE("greedy_place: observable on random connected networks") {
    Rng rng(2024);
    for (int trial = 0; trial < 15; ++trial) {
        const PowerNetwork net =
            testutil::random_network(2 + static_cast<int>(rng.uniform_int(14)), rng);
        const Placement p = greedy_place(net);
        const auto [rank, obs] = placement_rank(net, p);
        CHECK(rank == 2 * net.n());
        CHECK(obs);
    }
}

TEST_CASE("shipped 30-bus placement: 10 PMUs, (10, 40) phasors, rank 60") {
    const PowerNetwork net = load_network(testutil::data_path("ieee30.cdf"));
    const Placement p = load_placement_file(testutil::data_path("placement30.txt"), net);
    CHECK(p.pmu_buses.size() == 10);
    const auto [nv, ni] = phasor_inventory(net, p);
    CHECK(nv == 10);
    CHECK(ni == 40);
    const auto [rank, obs] = placement_rank(net, p);
    CHECK(rank == 60);
    CHECK(obs);
}

TEST_CASE("phasor_inventory: empty and full placements") {
    const PowerNetwork net = load_network(testutil::data_path("ieee30.cdf"));
    CHECK(phasor_inventory(net, Placement{}) == std::pair<int, int>{0, 0});
    Placement all;
    for (int i = 0; i < net.n(); ++i) all.pmu_buses.push_back(i);
    const auto [nv, ni] = phasor_inventory(net, all);
    CHECK(nv == 30);
    CHECK(ni == 82); // sum of degrees = 2 x 41 branches
}

TEST_CASE("placement file I/O") {
    const PowerNetwork net = testutil::four_bus();
    const Placement p{{0, 2}};
    const std::string text = serialize_placement(net, p);
    const Placement back = load_placement(text, net);
    CHECK(back.pmu_buses == p.pmu_buses);

    // files use external ids and accept comments; unknown ids are rejected
    const Placement named = load_placement("# hand written\n3\n1\n", net);
    CHECK(named.pmu_buses == std::vector<int>{0, 2}); // sorted internal ids
    CHECK_THROWS_AS(load_placement("99\n", net), ArgumentError);
}
