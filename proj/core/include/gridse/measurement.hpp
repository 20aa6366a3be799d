#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridse/placement.hpp"
#include "gridse/power_flow.hpp"
#include "gridse/rng.hpp"

namespace gridse {

enum class PhasorType { BusVoltage, BranchCurrentFrom, BranchCurrentTo };

/// What a phasor measures. element is the internal bus id for BusVoltage and
/// the 0-based branch index for the current kinds. From means the PMU sits at
/// the branch's from_bus terminal, To at the to_bus terminal.
struct PhasorKind {
    PhasorType type = PhasorType::BusVoltage;
    int element = 0;

    bool operator==(const PhasorKind&) const = default;
};

/// One phasor = two real measurement components (rectangular coordinates).
struct PhasorMeasurement {
    PhasorKind kind;
    double value_re = 0.0;
    double value_im = 0.0;
    double var_re = 1.0;
    double var_im = 1.0;
};

struct MeasurementSet {
    const PowerNetwork* network = nullptr;
    std::vector<PhasorMeasurement> phasors;

    int phasor_count() const { return static_cast<int>(phasors.size()); }
    int component_count() const { return 2 * phasor_count(); }
};

/// One sparse row of the measurement Jacobian. State variable layout is
/// [Re V_1 .. Re V_n, Im V_1 .. Im V_n]; entries are kept sorted by index.
struct JacobianRow {
    std::vector<std::pair<int, double>> coeffs;

    double dot(const Eigen::VectorXd& x) const {
        double acc = 0;
        for (const auto& [idx, c] : coeffs) acc += c * x[idx];
        return acc;
    }
};

/// Dense assembly of the linear system z = Hx + e, diag(R) as a vector.
struct JacobianSystem {
    Eigen::MatrixXd H;
    Eigen::VectorXd R;
    Eigen::VectorXd z;
};

/// The (real, imaginary) measurement-function rows for one phasor.
///
/// BusVoltage(i) selects Re V_i and Im V_i directly. Current rows carry the
/// real/imaginary decomposition of the branch admittance block row:
/// from-side coefficients q = g/tau^2, w = (b + b_sh)/tau^2,
/// r = (g/tau) cos phi, t = (b/tau) sin phi, u = (b/tau) cos phi,
/// p = (g/tau) sin phi; to-side coefficients use z = g, e = b + b_sh and the
/// conjugate transformer factor.
std::pair<JacobianRow, JacobianRow> measurement_rows(PhasorKind kind,
                                                     const PowerNetwork& network);

/// Stack every phasor's rows in (phasor order) x (re then im) order.
JacobianSystem build_jacobian(const MeasurementSet& mset);

/// Ordered phasor list implied by a placement: buses ascending; per bus the
/// voltage phasor first, then current phasors by ascending branch index.
std::vector<PhasorKind> placement_phasors(const PowerNetwork& network,
                                          const Placement& placement);

/// Exact values H x plus independent Normal(0, sigma^2) noise on every real
/// component. Reported variances are sigma^2, or 1 when sigma = 0 (the WLS
/// solution is invariant to the common scale, and variances must stay
/// positive).
MeasurementSet simulate_measurements(const PowerNetwork& network, const StateVector& state,
                                     const Placement& placement, double sigma, Rng& rng);

/// Copy without the listed phasors (both components each); order of the rest
/// is preserved. Throws ArgumentError on an out-of-range index.
MeasurementSet exclude_phasors(const MeasurementSet& mset, const std::vector<int>& indices);

/// CSV records: kind,elem_id,value_re,value_im,var_re,var_im with kind in
/// {V, IF, IT}; elem_id is the external bus number for V and the 0-based
/// branch index for IF/IT.
void write_measurement_csv(std::ostream& out, const MeasurementSet& mset);
MeasurementSet read_measurement_csv(std::istream& in, const PowerNetwork& network);

} // namespace gridse
