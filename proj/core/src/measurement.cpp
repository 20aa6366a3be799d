#include "gridse/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace gridse {

namespace {

void put(JacobianRow& row, int index, double coeff) {
    row.coeffs.emplace_back(index, coeff);
}

} // namespace

std::pair<JacobianRow, JacobianRow> measurement_rows(PhasorKind kind,
                                                     const PowerNetwork& network) {
    const int n = network.n();
    JacobianRow re, im;
    switch (kind.type) {
        case PhasorType::BusVoltage: {
            if (kind.element < 0 || kind.element >= n)
                throw ArgumentError("voltage phasor references unknown bus");
            put(re, kind.element, 1.0);
            put(im, n + kind.element, 1.0);
            break;
        }
        case PhasorType::BranchCurrentFrom: {
            if (kind.element < 0 || kind.element >= static_cast<int>(network.branches.size()))
                throw ArgumentError("current phasor references unknown branch");
            const Branch& br = network.branches[kind.element];
            const int i = br.from_bus, j = br.to_bus;
            const double q = br.g / (br.tau * br.tau);
            const double w = (br.b + br.b_sh) / (br.tau * br.tau);
            const double r = (br.g / br.tau) * std::cos(br.phi);
            const double t = (br.b / br.tau) * std::sin(br.phi);
            const double u = (br.b / br.tau) * std::cos(br.phi);
            const double p = (br.g / br.tau) * std::sin(br.phi);
            // Re I_ij = q ReVi - w ImVi - (r - t) ReVj + (u + p) ImVj
            put(re, i, q);
            put(re, n + i, -w);
            put(re, j, -(r - t));
            put(re, n + j, u + p);
            // Im I_ij = w ReVi + q ImVi - (u + p) ReVj - (r - t) ImVj
            put(im, i, w);
            put(im, n + i, q);
            put(im, j, -(u + p));
            put(im, n + j, -(r - t));
            break;
        }
        case PhasorType::BranchCurrentTo: {
            if (kind.element < 0 || kind.element >= static_cast<int>(network.branches.size()))
                throw ArgumentError("current phasor references unknown branch");
            const Branch& br = network.branches[kind.element];
            const int i = br.from_bus, j = br.to_bus;
            const double r = (br.g / br.tau) * std::cos(br.phi);
            const double t = (br.b / br.tau) * std::sin(br.phi);
            const double u = (br.b / br.tau) * std::cos(br.phi);
            const double p = (br.g / br.tau) * std::sin(br.phi);
            const double z = br.g;
            const double e = br.b + br.b_sh;
            // Re I_ji = -(r + t) ReVi + (u - p) ImVi + z ReVj - e ImVj
            put(re, i, -(r + t));
            put(re, n + i, u - p);
            put(re, j, z);
            put(re, n + j, -e);
            // Im I_ji = -(u - p) ReVi - (r + t) ImVi + e ReVj + z ImVj
            put(im, i, -(u - p));
            put(im, n + i, -(r + t));
            put(im, j, e);
            put(im, n + j, z);
            break;
        }
    }
    auto by_index = [](const auto& a, const auto& b) { return a.first < b.first; };
    std::sort(re.coeffs.begin(), re.coeffs.end(), by_index);
    std::sort(im.coeffs.begin(), im.coeffs.end(), by_index);
    return {re, im};
}

JacobianSystem build_jacobian(const MeasurementSet& mset) {
    if (!mset.network) throw ArgumentError("measurement set has no network");
    if (mset.phasors.empty()) throw ArgumentError("measurement set is empty");
    const int n = mset.network->n();
    const int k = mset.component_count();
    JacobianSystem sys;
    sys.H = Eigen::MatrixXd::Zero(k, 2 * n);
    sys.R.resize(k);
    sys.z.resize(k);
    for (int p = 0; p < mset.phasor_count(); ++p) {
        const PhasorMeasurement& ph = mset.phasors[p];
        const auto [row_re, row_im] = measurement_rows(ph.kind, *mset.network);
        for (const auto& [idx, c] : row_re.coeffs) sys.H(2 * p, idx) = c;
        for (const auto& [idx, c] : row_im.coeffs) sys.H(2 * p + 1, idx) = c;
        sys.R[2 * p] = ph.var_re;
        sys.R[2 * p + 1] = ph.var_im;
        sys.z[2 * p] = ph.value_re;
        sys.z[2 * p + 1] = ph.value_im;
    }
    return sys;
}

std::vector<PhasorKind> placement_phasors(const PowerNetwork& network,
                                          const Placement& placement) {
    std::vector<int> buses = placement.pmu_buses;
    std::sort(buses.begin(), buses.end());
    buses.erase(std::unique(buses.begin(), buses.end()), buses.end());
    for (int b : buses)
        if (b < 0 || b >= network.n())
            throw ArgumentError("placement references unknown bus index " + std::to_string(b));
    const auto incident = network.incident_branches();
    std::vector<PhasorKind> out;
    for (int b : buses) {
        out.push_back({PhasorType::BusVoltage, b});
        for (int e : incident[b]) {
            out.push_back({network.branches[e].from_bus == b ? PhasorType::BranchCurrentFrom
                                                             : PhasorType::BranchCurrentTo,
                           e});
        }
    }
    return out;
}

MeasurementSet simulate_measurements(const PowerNetwork& network, const StateVector& state,
                                     const Placement& placement, double sigma, Rng& rng) {
    if (sigma < 0) throw ArgumentError("sigma must be nonnegative");
    if (state.n() != network.n()) throw ArgumentError("state length does not match network");
    const Eigen::VectorXd x = state.flat();
    const double var = sigma > 0 ? sigma * sigma : 1.0;
    MeasurementSet mset;
    mset.network = &network;
    for (PhasorKind kind : placement_phasors(network, placement)) {
        const auto [row_re, row_im] = measurement_rows(kind, network);
        PhasorMeasurement ph;
        ph.kind = kind;
        ph.value_re = row_re.dot(x);
        ph.value_im = row_im.dot(x);
        if (sigma > 0) {
            ph.value_re += rng.normal(0.0, sigma);
            ph.value_im += rng.normal(0.0, sigma);
        }
        ph.var_re = var;
        ph.var_im = var;
        mset.phasors.push_back(ph);
    }
    return mset;
}

MeasurementSet exclude_phasors(const MeasurementSet& mset, const std::vector<int>& indices) {
    std::vector<char> drop(mset.phasors.size(), 0);
    for (int i : indices) {
        if (i < 0 || i >= mset.phasor_count())
            throw ArgumentError("exclusion index " + std::to_string(i) + " out of range");
        drop[i] = 1;
    }
    MeasurementSet out;
    out.network = mset.network;
    for (std::size_t i = 0; i < mset.phasors.size(); ++i)
        if (!drop[i]) out.phasors.push_back(mset.phasors[i]);
    return out;
}

namespace {

const char* kind_tag(PhasorType t) {
    switch (t) {
        case PhasorType::BusVoltage: return "V";
        case PhasorType::BranchCurrentFrom: return "IF";
        default: return "IT";
    }
}

} // namespace

void write_measurement_csv(std::ostream& out, const MeasurementSet& mset) {
    out << "# kind,elem_id,value_re,value_im,var_re,var_im\n";
    for (const PhasorMeasurement& ph : mset.phasors) {
        int elem = ph.kind.element;
        if (ph.kind.type == PhasorType::BusVoltage)
            elem = mset.network->buses[elem].external_id;
        out << kind_tag(ph.kind.type) << ',' << elem << ',' << format_double(ph.value_re)
            << ',' << format_double(ph.value_im) << ',' << format_double(ph.var_re) << ','
            << format_double(ph.var_im) << "\n";
    }
}

MeasurementSet read_measurement_csv(std::istream& in, const PowerNetwork& network) {
    MeasurementSet mset;
    mset.network = &network;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        bool blank = true;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) { blank = false; break; }
        if (blank) continue;

        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 6) throw ParseError("measurement record needs 6 fields", no);
        auto strip = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        PhasorMeasurement ph;
        const std::string tag = strip(f[0]);
        long elem = std::strtol(strip(f[1]).c_str(), nullptr, 10);
        if (tag == "V") {
            ph.kind.type = PhasorType::BusVoltage;
            int idx = network.bus_index(static_cast<int>(elem));
            if (idx < 0) throw ParseError("unknown bus " + std::to_string(elem), no);
            ph.kind.element = idx;
        } else if (tag == "IF" || tag == "IT") {
            ph.kind.type = tag == "IF" ? PhasorType::BranchCurrentFrom : PhasorType::BranchCurrentTo;
            if (elem < 0 || elem >= static_cast<long>(network.branches.size()))
                throw ParseError("unknown branch index " + std::to_string(elem), no);
            ph.kind.element = static_cast<int>(elem);
        } else {
            throw ParseError("unknown phasor kind '" + tag + "'", no);
        }
        auto num = [&](const std::string& s) {
            char* end = nullptr;
            std::string t = strip(s);
            double v = std::strtod(t.c_str(), &end);
            if (end == t.c_str() || *end != '\0')
                throw ParseError("expected a number, got '" + t + "'", no);
            return v;
        };
        ph.value_re = num(f[2]);
        ph.value_im = num(f[3]);
        ph.var_re = num(f[4]);
        ph.var_im = num(f[5]);
        if (!(ph.var_re > 0) || !(ph.var_im > 0))
            throw ParseError("variances must be positive", no);
        mset.phasors.push_back(ph);
    }
    return mset;
}

} // namespace gridse
