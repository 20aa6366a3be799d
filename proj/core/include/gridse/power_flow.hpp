#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridse/grid_model.hpp"
#include "gridse/rng.hpp"

namespace gridse {

/// Rectangular system state: x = [Re V_1 .. Re V_n, Im V_1 .. Im V_n].
struct StateVector {
    Eigen::VectorXd v_re;
    Eigen::VectorXd v_im;

    int n() const { return static_cast<int>(v_re.size()); }
    cd v(int bus) const { return cd(v_re[bus], v_im[bus]); }

    /// Flattened [all re | all im] vector, the layout every Jacobian uses.
    Eigen::VectorXd flat() const {
        Eigen::VectorXd x(2 * n());
        x.head(n()) = v_re;
        x.tail(n()) = v_im;
        return x;
    }
    static StateVector from_flat(const Eigen::VectorXd& x) {
        StateVector s;
        const int n = static_cast<int>(x.size()) / 2;
        s.v_re = x.head(n);
        s.v_im = x.tail(n);
        return s;
    }
};

/// Multiplicative load factors per bus.
struct LoadProfile {
    Eigen::VectorXd scale_p;
    Eigen::VectorXd scale_q;
};

/// Nominal profile (all factors 1).
LoadProfile nominal_profile(const PowerNetwork& network);

/// Independent uniform factors on [lo, hi] for each bus's P and Q.
LoadProfile sample_load_profile(const PowerNetwork& network, double lo, double hi, Rng& rng);

struct PowerFlowInfo {
    int iterations = 0;     // Newton updates applied
    double mismatch = 0.0;  // max absolute power mismatch at exit
};

/// Newton-Raphson power flow in polar coordinates, flat start. PV buses hold
/// their voltage setpoint; reactive limits are not enforced. Throws
/// DivergenceError when max_iter is exhausted and SingularityError when the
/// Jacobian is singular.
StateVector solve_power_flow(const PowerNetwork& network, const LoadProfile& profile,
                             double tol = 1e-8, int max_iter = 20,
                             PowerFlowInfo* info = nullptr);

/// Terminal currents (I_ij, I_ji) of every branch, from the branch admittance
/// block applied to (V_i, V_j).
std::vector<std::pair<cd, cd>> branch_terminal_currents(const PowerNetwork& network,
                                                        const StateVector& state);

} // namespace gridse
