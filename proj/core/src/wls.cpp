#include "gridse/wls.hpp"

#include <cmath>
#include <limits>

namespace gridse {

WlsSolution solve_wls(const Eigen::MatrixXd& H, const Eigen::VectorXd& R,
                      const Eigen::VectorXd& z) {
    const int k = static_cast<int>(H.rows());
    const int m = static_cast<int>(H.cols());
    if (R.size() != k || z.size() != k)
        throw ArgumentError("H, R, z dimensions disagree");
    if (k == 0 || m == 0) throw ArgumentError("empty system");
    for (int i = 0; i < k; ++i)
        if (!(R[i] > 0)) throw ArgumentError("variances must be positive");

    const Eigen::VectorXd w = R.cwiseSqrt().cwiseInverse(); // R^{-1/2} diagonal
    const Eigen::MatrixXd A = w.asDiagonal() * H;
    const Eigen::VectorXd b = w.asDiagonal() * z;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    if (rank < m)
        throw SingularityError("unobservable system: H^T R^-1 H is rank deficient", rank, m);

    WlsSolution sol;
    Eigen::VectorXd x = qr.solve(b);
    sol.state = StateVector::from_flat(x);
    sol.residual_norm = (b - A * x).norm();
    const Eigen::MatrixXd& qrm = qr.matrixR();
    double dmax = 0, dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        double d = std::abs(qrm(i, i));
        dmax = std::max(dmax, d);
        dmin = std::min(dmin, d);
    }
    sol.condition_estimate = dmin > 0 ? dmax / dmin : std::numeric_limits<double>::infinity();
    return sol;
}

WlsSolution solve_wls(const JacobianSystem& sys) { return solve_wls(sys.H, sys.R, sys.z); }

std::pair<int, bool> observability_rank(const Eigen::MatrixXd& H) {
    const int m = static_cast<int>(H.cols());
    if (H.rows() == 0 || H.norm() == 0) return {0, false};
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H);
    qr.setThreshold(1e-8);
    const int rank = static_cast<int>(qr.rank());
    return {rank, rank == m};
}

} // namespace gridse
