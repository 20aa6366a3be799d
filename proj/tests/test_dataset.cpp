#include <doctest.h>

#include <cstdio>
#include <string>

#include "gridse/dataset.hpp"
#include "gridse/wls.hpp"

#include "test_util.hpp"

using namespace gridse;
using namespace testutil;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/gridse-test-" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("dataset: noiseless labels reproduce the power-flow state") {
    const PowerNetwork net = four_bus();
    Rng rng(11);
    const Placement p = random_observable_placement(net, rng);
    const Dataset ds = generate_dataset(net, p, 3, 0.0, 0.95, 1.05, 42);
    REQUIRE(ds.samples.size() == 3);
    const int n = static_cast<int>(net.buses.size());
    for (const Sample& s : ds.samples) {
        // re-run the power flow at the recorded profile; with sigma = 0 the
        // WLS label must coincide with the true state to solver accuracy
        const StateVector st = solve_power_flow(net, s.profile);
        for (int b = 0; b < n; ++b) {
            CHECK(std::abs(s.label[b] - st.v_re[b]) < 1e-10);
            CHECK(std::abs(s.label[n + b] - st.v_im[b]) < 1e-10);
        }
        CHECK(s.mset.phasors.size() == placement_phasors(net, p).size());
        CHECK(s.mset.network == &ds.network);
    }
}

TEST_CASE("dataset: labels solve the stored noisy measurements") {
    const PowerNetwork net = four_bus();
    Rng rng(5);
    const Placement p = random_observable_placement(net, rng);
    const Dataset ds = generate_dataset(net, p, 4, 1e-3, 0.9, 1.1, 7);
    for (const Sample& s : ds.samples) {
        const WlsSolution w = solve_wls(build_jacobian(s.mset));
        CHECK((w.state.flat() - s.label).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("dataset: generation is deterministic and seed-sensitive") {
    const PowerNetwork net = four_bus();
    Rng rng(5);
    const Placement p = random_observable_placement(net, rng);
    const Dataset a = generate_dataset(net, p, 5, 1e-3, 0.9, 1.1, 123);
    const Dataset b = generate_dataset(net, p, 5, 1e-3, 0.9, 1.1, 123);
    const Dataset c = generate_dataset(net, p, 5, 1e-3, 0.9, 1.1, 124);
    CHECK(serialize_dataset(a) == serialize_dataset(b));
    CHECK(serialize_dataset(a) != serialize_dataset(c));

    // per-sample streams: a longer run starts with the same samples
    const Dataset d = generate_dataset(net, p, 8, 1e-3, 0.9, 1.1, 123);
    for (int i = 0; i < 5; ++i) {
        CHECK(d.samples[i].seed == a.samples[i].seed);
        CHECK((d.samples[i].label - a.samples[i].label).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("dataset: file round trip preserves every byte of the serialization") {
    const PowerNetwork net = four_bus();
    Rng rng(9);
    const Placement p = random_observable_placement(net, rng);
    const Dataset ds = generate_dataset(net, p, 3, 1e-3, 0.9, 1.1, 55);
    TempFile f("dataset-roundtrip");
    save_dataset(ds, f.path);
    const Dataset back = load_dataset(f.path);
    CHECK(serialize_dataset(back) == serialize_dataset(ds));
    CHECK(back.sigma == ds.sigma);
    CHECK(back.load_lo == ds.load_lo);
    CHECK(back.load_hi == ds.load_hi);
    CHECK(back.seed == ds.seed);
    REQUIRE(back.samples.size() == ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& x = ds.samples[i];
        const Sample& y = back.samples[i];
        CHECK(y.seed == x.seed);
        CHECK((y.label - x.label).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE(y.mset.phasors.size() == x.mset.phasors.size());
        for (std::size_t k = 0; k < x.mset.phasors.size(); ++k) {
            CHECK(y.mset.phasors[k].value_re == x.mset.phasors[k].value_re);
            CHECK(y.mset.phasors[k].value_im == x.mset.phasors[k].value_im);
            CHECK(y.mset.phasors[k].var_re == x.mset.phasors[k].var_re);
            CHECK(y.mset.phasors[k].var_im == x.mset.phasors[k].var_im);
        }
        CHECK(y.mset.network == &back.network);
    }
}

TEST_CASE("dataset: unobservable placements are rejected") {
    const PowerNetwork net = path_network(5);
    const Placement p{{4}}; // one terminal PMU cannot observe a 5-bus path
    CHECK_THROWS_AS(generate_dataset(net, p, 1, 0.0, 1.0, 1.0, 1), ValidationError);
}

TEST_CASE("dataset: copies and moves rebind sample networks") {
    const PowerNetwork net = four_bus();
    Rng rng(13);
    const Placement p = random_observable_placement(net, rng);
    Dataset ds = generate_dataset(net, p, 2, 0.0, 1.0, 1.0, 3);

    Dataset copy = ds;
    CHECK(copy.samples[0].mset.network == &copy.network);
    CHECK(copy.samples[1].mset.network == &copy.network);
    CHECK(ds.samples[0].mset.network == &ds.network); // source untouched

    Dataset moved = std::move(copy);
    CHECK(moved.samples[0].mset.network == &moved.network);
    CHECK(moved.samples[1].mset.network == &moved.network);

    // the rebinding keeps the WLS label reproducible from the copy alone
    const WlsSolution w = solve_wls(build_jacobian(moved.samples[0].mset));
    CHECK((w.state.flat() - moved.samples[0].label).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dataset: parse rejects corrupted text") {
    const PowerNetwork net = four_bus();
    Rng rng(17);
    const Placement p = random_observable_placement(net, rng);
    const Dataset ds = generate_dataset(net, p, 2, 1e-3, 0.9, 1.1, 21);
    const std::string text = serialize_dataset(ds);
    CHECK_THROWS_AS(parse_dataset(text.substr(0, text.size() / 2)), ParseError);
    CHECK_THROWS_AS(parse_dataset("gibberish\n" + text), ParseError);
}
