#pragma once

#include <utility>

#include <Eigen/Dense>

#include "gridse/measurement.hpp"
#include "gridse/power_flow.hpp"

namespace gridse {

struct WlsSolution {
    StateVector state;
    double residual_norm = 0.0;       // || R^{-1/2} (z - H x) ||_2
    double condition_estimate = 0.0;  // |r_00 / r_{kk}| of the QR factor
};

/// Solve H^T R^{-1} H x = H^T R^{-1} z via QR of R^{-1/2} H (never forms the
/// normal equations). Throws SingularityError, naming the deficient rank,
/// when the system is unobservable.
WlsSolution solve_wls(const Eigen::MatrixXd& H, const Eigen::VectorXd& R,
                      const Eigen::VectorXd& z);

WlsSolution solve_wls(const JacobianSystem& sys);

/// Numerical rank of H from a rank-revealing QR with threshold 1e-8 * ||H||;
/// observable iff rank equals the column count 2n.
std::pair<int, bool> observability_rank(const Eigen::MatrixXd& H);

} // namespace gridse
