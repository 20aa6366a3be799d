#include "gridse/power_flow.hpp"

#include <cmath>

namespace gridse {

LoadProfile nominal_profile(const PowerNetwork& network) {
    LoadProfile p;
    p.scale_p = Eigen::VectorXd::Ones(network.n());
    p.scale_q = Eigen::VectorXd::Ones(network.n());
    return p;
}

LoadProfile sample_load_profile(const PowerNetwork& network, double lo, double hi, Rng& rng) {
    if (!(lo > 0) || !(lo <= hi))
        throw ArgumentError("load bounds need 0 < lo <= hi");
    LoadProfile p;
    const int n = network.n();
    p.scale_p.resize(n);
    p.scale_q.resize(n);
    for (int i = 0; i < n; ++i) {
        p.scale_p[i] = rng.uniform(lo, hi);
        p.scale_q[i] = rng.uniform(lo, hi);
    }
    return p;
}

StateVector solve_power_flow(const PowerNetwork& network, const LoadProfile& profile,
                             double tol, int max_iter, PowerFlowInfo* info) {
    if (!(tol > 0)) throw ArgumentError("tolerance must be positive");
    const int n = network.n();
    if (profile.scale_p.size() != n || profile.scale_q.size() != n)
        throw ArgumentError("load profile length does not match network");

    const Eigen::MatrixXcd Y = bus_admittance_matrix(network);
    const Eigen::MatrixXd G = Y.real();
    const Eigen::MatrixXd B = Y.imag();

    // unknown ordering: theta at every non-slack bus, then V at every PQ bus
    std::vector<int> ang_bus, mag_bus;
    int slack = -1;
    for (int i = 0; i < n; ++i) {
        switch (network.buses[i].bus_kind) {
            case BusKind::Slack: slack = i; break;
            case BusKind::PV: ang_bus.push_back(i); break;
            case BusKind::PQ:
                ang_bus.push_back(i);
                mag_bus.push_back(i);
                break;
        }
    }

    Eigen::VectorXd p_spec(n), q_spec(n);
    for (int i = 0; i < n; ++i) {
        const Bus& bus = network.buses[i];
        p_spec[i] = bus.gen_p - bus.load_p * profile.scale_p[i];
        q_spec[i] = -bus.load_q * profile.scale_q[i];
    }

    // flat start; regulated buses at their setpoints
    Eigen::VectorXd vm = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
    vm[slack] = network.buses[slack].gen_v;
    for (int i : ang_bus)
        if (network.buses[i].bus_kind == BusKind::PV) vm[i] = network.buses[i].gen_v;

    const int na = static_cast<int>(ang_bus.size());
    const int nm = static_cast<int>(mag_bus.size());
    Eigen::VectorXd p_calc(n), q_calc(n);

    auto compute_injections = [&]() {
        for (int i = 0; i < n; ++i) {
            double pi = 0, qi = 0;
            for (int j = 0; j < n; ++j) {
                const double th = va[i] - va[j];
                const double c = std::cos(th), s = std::sin(th);
                pi += vm[i] * vm[j] * (G(i, j) * c + B(i, j) * s);
                qi += vm[i] * vm[j] * (G(i, j) * s - B(i, j) * c);
            }
            p_calc[i] = pi;
            q_calc[i] = qi;
        }
    };

    auto mismatch_vector = [&]() {
        Eigen::VectorXd f(na + nm);
        for (int a = 0; a < na; ++a) f[a] = p_spec[ang_bus[a]] - p_calc[ang_bus[a]];
        for (int m = 0; m < nm; ++m) f[na + m] = q_spec[mag_bus[m]] - q_calc[mag_bus[m]];
        return f;
    };

    double worst = 0.0;
    for (int iter = 0; iter <= max_iter; ++iter) {
        compute_injections();
        if (!vm.allFinite() || !va.allFinite())
            throw DivergenceError("power flow produced a non-finite state", worst, iter);
        Eigen::VectorXd f = mismatch_vector();
        worst = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        if (worst < tol) {
            if (info) {
                info->iterations = iter;
                info->mismatch = worst;
            }
            StateVector s;
            s.v_re = vm.array() * va.array().cos();
            s.v_im = vm.array() * va.array().sin();
            return s;
        }
        if (iter == max_iter) break;

        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(na + nm, na + nm);
        for (int r = 0; r < na; ++r) {
            const int i = ang_bus[r];
            for (int c = 0; c < na; ++c) {
                const int j = ang_bus[c];
                if (i == j) {
                    J(r, c) = -q_calc[i] - B(i, i) * vm[i] * vm[i];
                } else {
                    const double th = va[i] - va[j];
                    J(r, c) = vm[i] * vm[j] * (G(i, j) * std::sin(th) - B(i, j) * std::cos(th));
                }
            }
            for (int c = 0; c < nm; ++c) {
                const int j = mag_bus[c];
                if (i == j) {
                    J(r, na + c) = p_calc[i] / vm[i] + G(i, i) * vm[i];
                } else {
                    const double th = va[i] - va[j];
                    J(r, na + c) = vm[i] * (G(i, j) * std::cos(th) + B(i, j) * std::sin(th));
                }
            }
        }
        for (int r = 0; r < nm; ++r) {
            const int i = mag_bus[r];
            for (int c = 0; c < na; ++c) {
                const int j = ang_bus[c];
                if (i == j) {
                    J(na + r, c) = p_calc[i] - G(i, i) * vm[i] * vm[i];
                } else {
                    const double th = va[i] - va[j];
                    J(na + r, c) = -vm[i] * vm[j] * (G(i, j) * std::cos(th) + B(i, j) * std::sin(th));
                }
            }
            for (int c = 0; c < nm; ++c) {
                const int j = mag_bus[c];
                if (i == j) {
                    J(na + r, na + c) = q_calc[i] / vm[i] - B(i, i) * vm[i];
                } else {
                    const double th = va[i] - va[j];
                    J(na + r, na + c) = vm[i] * (G(i, j) * std::sin(th) - B(i, j) * std::cos(th));
                }
            }
        }

        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible())
            throw SingularityError("power flow Jacobian is singular",
                                   static_cast<int>(lu.rank()), na + nm);
        Eigen::VectorXd dx = lu.solve(f);
        for (int a = 0; a < na; ++a) va[ang_bus[a]] += dx[a];
        for (int m = 0; m < nm; ++m) vm[mag_bus[m]] += dx[na + m];
    }
    throw DivergenceError("power flow did not converge", worst, max_iter);
}

std::vector<std::pair<cd, cd>> branch_terminal_currents(const PowerNetwork& network,
                                                        const StateVector& state) {
    if (state.n() != network.n())
        throw ArgumentError("state length does not match network");
    std::vector<std::pair<cd, cd>> currents;
    currents.reserve(network.branches.size());
    for (const Branch& br : network.branches) {
        const Eigen::Matrix2cd blk = branch_admittance(br);
        const cd vi = state.v(br.from_bus);
        const cd vj = state.v(br.to_bus);
        currents.emplace_back(blk(0, 0) * vi + blk(0, 1) * vj,
                              blk(1, 0) * vi + blk(1, 1) * vj);
    }
    return currents;
}

} // namespace gridse
