#include "gridse/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridse/errors.hpp"
#include "gridse/rng.hpp"
#include "gridse/wls.hpp"

namespace gridse {

namespace {

constexpr const char* kMagic = "gridse-dataset v1";
constexpr int kMaxResamples = 100;

void require(bool ok, const std::string& what) {
    if (!ok) throw ParseError("dataset file: " + what);
}

std::string getline_or_throw(std::istream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(std::string("dataset truncated before ") + what);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::string block_until(std::istream& in, const std::string& terminator) {
    std::string block, line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == terminator) return block;
        block += line;
        block += '\n';
    }
    throw ParseError("dataset missing terminator '" + terminator + "'");
}

void append_vector(std::string& out, const char* key, const Eigen::VectorXd& v) {
    out += key;
    for (long i = 0; i < v.size(); ++i) {
        out += ' ';
        out += format_double(v[i]);
    }
    out += '\n';
}

Eigen::VectorXd parse_vector(const std::string& line, const char* key, long expect) {
    std::istringstream in(line);
    std::string kw;
    in >> kw;
    require(kw == key, std::string("expected '") + key + "' record");
    std::vector<double> vals;
    double d;
    while (in >> d) vals.push_back(d);
    require(static_cast<long>(vals.size()) == expect,
            std::string(key) + " record has the wrong length");
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
}

} // namespace

Dataset generate_dataset(const PowerNetwork& net, const Placement& placement, int count,
                         double sigma, double load_lo, double load_hi, std::uint64_t seed) {
    if (count < 0) throw ArgumentError("sample count must be non-negative");
    if (!(load_lo <= load_hi)) throw ArgumentError("load bounds must satisfy lo <= hi");
    if (sigma < 0) throw ArgumentError("sigma must be non-negative");

    // refuse unobservable placements up front, reporting the structural rank
    {
        MeasurementSet probe;
        probe.network = &net;
        for (const PhasorKind& k : placement_phasors(net, placement))
            probe.phasors.push_back({k, 0.0, 0.0, 1.0, 1.0});
        const JacobianSystem sys = build_jacobian(probe);
        const auto [rank, observable] = observability_rank(sys.H);
        if (!observable)
            throw ValidationError("placement is unobservable: rank " + std::to_string(rank) +
                                  " of " + std::to_string(2 * net.n()) + " required");
    }

    Dataset ds;
    ds.network = net;
    ds.placement = placement;
    ds.sigma = sigma;
    ds.load_lo = load_lo;
    ds.load_hi = load_hi;
    ds.seed = seed;
    ds.samples.reserve(count);

    for (int i = 0; i < count; ++i) {
        const std::uint64_t sample_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        Rng rng(sample_seed);
        Sample sample;
        sample.seed = sample_seed;
        StateVector state;
        bool solved = false;
        for (int attempt = 0; attempt < kMaxResamples && !solved; ++attempt) {
            sample.profile = sample_load_profile(net, load_lo, load_hi, rng);
            try {
                state = solve_power_flow(net, sample.profile);
                solved = true;
            } catch (const DivergenceError&) {
                std::fprintf(stderr, "note: resampling sample %d after a divergent power flow\n",
                             i);
            }
        }
        if (!solved)
            throw DivergenceError("sample " + std::to_string(i) +
                                      " found no convergent load profile after " +
                                      std::to_string(kMaxResamples) + " attempts",
                                  0.0, 0);
        sample.mset = simulate_measurements(net, state, placement, sigma, rng);
        sample.label = solve_wls(build_jacobian(sample.mset)).state.flat();
        ds.samples.push_back(std::move(sample));
    }
    ds.rebind();
    return ds;
}

std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    out.reserve(1 << 20);
    out += kMagic;
    out += '\n';
    out += "network_hash " + network_hash(ds.network) + '\n';
    out += "sigma " + format_double(ds.sigma) + '\n';
    out += "load_lo " + format_double(ds.load_lo) + '\n';
    out += "load_hi " + format_double(ds.load_hi) + '\n';
    out += "seed " + std::to_string(ds.seed) + '\n';
    out += "count " + std::to_string(ds.samples.size()) + '\n';
    out += "[network]\n";
    out += serialize_network(ds.network);
    out += "[endnetwork]\n";
    out += "[placement]\n";
    out += serialize_placement(ds.network, ds.placement);
    out += "[endplacement]\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        out += "[sample " + std::to_string(i) + "]\n";
        out += "seed " + std::to_string(s.seed) + '\n';
        append_vector(out, "scale_p", s.profile.scale_p);
        append_vector(out, "scale_q", s.profile.scale_q);
        append_vector(out, "label", s.label);
        std::ostringstream csv;
        write_measurement_csv(csv, s.mset);
        out += csv.str();
        out += "[endsample]\n";
    }
    out += "end\n";
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    const std::string text = serialize_dataset(ds);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

Dataset parse_dataset(const std::string& text) {
    std::istringstream in(text);
    require(getline_or_throw(in, "magic") == kMagic, "bad magic line");

    Dataset ds;
    std::string hash_recorded;
    std::size_t count = 0;
    std::string line;
    while (true) {
        line = getline_or_throw(in, "header");
        if (line == "[network]") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "network_hash")
            ls >> hash_recorded;
        else if (key == "sigma")
            ls >> ds.sigma;
        else if (key == "load_lo")
            ls >> ds.load_lo;
        else if (key == "load_hi")
            ls >> ds.load_hi;
        else if (key == "seed")
            ls >> ds.seed;
        else if (key == "count")
            ls >> count;
        else
            require(false, "unknown header record '" + key + "'");
        require(!ls.fail(), "bad value in header record '" + key + "'");
    }

    ds.network = parse_network(block_until(in, "[endnetwork]"));
    if (!hash_recorded.empty())
        require(network_hash(ds.network) == hash_recorded,
                "embedded network does not match its recorded hash");
    require(getline_or_throw(in, "placement") == "[placement]", "expected [placement]");
    ds.placement = load_placement(block_until(in, "[endplacement]"), ds.network);

    const long two_n = 2L * ds.network.n();
    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        require(getline_or_throw(in, "sample") == "[sample " + std::to_string(i) + "]",
                "expected [sample " + std::to_string(i) + "]");
        Sample s;
        {
            std::istringstream ls(getline_or_throw(in, "sample seed"));
            std::string kw;
            ls >> kw >> s.seed;
            require(kw == "seed" && !ls.fail(), "bad sample seed record");
        }
        s.profile.scale_p =
            parse_vector(getline_or_throw(in, "scale_p"), "scale_p", ds.network.n());
        s.profile.scale_q =
            parse_vector(getline_or_throw(in, "scale_q"), "scale_q", ds.network.n());
        s.label = parse_vector(getline_or_throw(in, "label"), "label", two_n);
        std::istringstream csv(block_until(in, "[endsample]"));
        s.mset = read_measurement_csv(csv, ds.network);
        ds.samples.push_back(std::move(s));
    }
    require(getline_or_throw(in, "end") == "end", "missing end marker");
    ds.rebind();
    return ds;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_dataset(buf.str());
}

} // namespace gridse
