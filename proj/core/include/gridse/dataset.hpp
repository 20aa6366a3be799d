#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridse/measurement.hpp"
#include "gridse/placement.hpp"
#include "gridse/power_flow.hpp"

namespace gridse {

/// One (measurements, label) pair. The label is always the WLS solution of
/// the full measurement set; exclusions applied later alter inputs only.
struct Sample {
    MeasurementSet mset;
    Eigen::VectorXd label; // 2n, [real parts | imaginary parts]
    std::uint64_t seed = 0;
    LoadProfile profile;
};

struct Dataset {
    PowerNetwork network;
    Placement placement;
    double sigma = 0;
    double load_lo = 1;
    double load_hi = 1;
    std::uint64_t seed = 0;
    std::vector<Sample> samples;

    /// Point every sample's measurement set at this dataset's network copy.
    /// Copies and moves do this automatically.
    void rebind() {
        for (Sample& s : samples) s.mset.network = &network;
    }

    Dataset() = default;
    Dataset(const Dataset& o) { *this = o; }
    Dataset(Dataset&& o) noexcept { *this = std::move(o); }
    Dataset& operator=(const Dataset& o) {
        if (this != &o) {
            network = o.network;
            placement = o.placement;
            sigma = o.sigma;
            load_lo = o.load_lo;
            load_hi = o.load_hi;
            seed = o.seed;
            samples = o.samples;
        }
        rebind();
        return *this;
    }
    Dataset& operator=(Dataset&& o) noexcept {
        if (this != &o) {
            network = std::move(o.network);
            placement = std::move(o.placement);
            sigma = o.sigma;
            load_lo = o.load_lo;
            load_hi = o.load_hi;
            seed = o.seed;
            samples = std::move(o.samples);
        }
        rebind();
        return *this;
    }
};

/// Draw `count` samples: load profile -> power flow -> noisy measurements ->
/// WLS label. Divergent power flows are resampled (a note goes to stderr).
/// Fully deterministic given `seed`; each sample uses its own derived stream.
Dataset generate_dataset(const PowerNetwork& net, const Placement& placement, int count,
                         double sigma, double load_lo, double load_hi, std::uint64_t seed);

/// Self-contained versioned text file embedding the network, the placement,
/// and every sample (see docs/formats.md).
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);

} // namespace gridse
