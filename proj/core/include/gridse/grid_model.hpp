#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridse/errors.hpp"

namespace gridse {

using cd = std::complex<double>;

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id = 0;          // dense 0-based internal index
    int external_id = 0; // numbering used by the source file
    double load_p = 0.0; // per-unit active demand
    double load_q = 0.0; // per-unit reactive demand
    double gen_p = 0.0;  // per-unit generator active setpoint (0 if none)
    double gen_v = 0.0;  // generator voltage setpoint (0 if none)
    double shunt_g = 0.0; // bus shunt conductance (Y-bus diagonal only)
    double shunt_b = 0.0; // bus shunt susceptance (Y-bus diagonal only)
    BusKind bus_kind = BusKind::PQ;
};

/// Pi-model branch. The series admittance is y = g + jb, the charging
/// admittance at each terminal is j*b_sh, and the ideal transformer
/// tau * e^{j phi} sits at the from_bus side.
struct Branch {
    int from_bus = 0; // internal bus id
    int to_bus = 0;   // internal bus id
    double g = 0.0;
    double b = 0.0;
    double b_sh = 0.0;
    double tau = 1.0;
    double phi = 0.0; // radians
};

struct PowerNetwork {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    double base_mva = 100.0;

    int n() const { return static_cast<int>(buses.size()); }

    /// Internal index for an external bus number, or -1 when absent.
    int bus_index(int external_id) const {
        for (const Bus& b : buses)
            if (b.external_id == external_id) return b.id;
        return -1;
    }

    /// Branch ids incident to each bus, ascending.
    std::vector<std::vector<int>> incident_branches() const;

    /// Neighbor bus ids of each bus (deduplicated, ascending).
    std::vector<std::vector<int>> adjacency() const;
};

/// 2x2 complex admittance block of one branch:
///   [ I_ij ]   [ (y + y_s)/tau^2   -conj(alpha) y ] [ V_i ]
///   [ I_ji ] = [ -alpha y           y + y_s       ] [ V_j ]
/// with y = g + jb, y_s = j b_sh, alpha = (1/tau) e^{-j phi}.
Eigen::Matrix2cd branch_admittance(const Branch& branch);

/// Dense bus admittance matrix assembled from branch blocks plus bus shunts.
Eigen::MatrixXcd bus_admittance_matrix(const PowerNetwork& network);

/// Throws ValidationError when an invariant fails (slack count, dangling
/// endpoints, tau <= 0, self-loops, non-finite fields, disconnected graph).
void validate_network(const PowerNetwork& network);

/// Parse a network document. Accepts the IEEE Common Data Format and the
/// native format (sniffed from the content). Validates before returning.
PowerNetwork parse_network(const std::string& text);

/// parse_network applied to a file's contents.
PowerNetwork load_network(const std::string& path);

/// Serialize to the native format; parse(serialize(net)) reproduces the
/// network exactly (doubles are printed round-trip safe).
std::string serialize_network(const PowerNetwork& network);

/// FNV-1a hash of the serialized form, as a 16-digit hex string. Used to tie
/// dataset files to the network they were generated from.
std::string network_hash(const PowerNetwork& network);

/// Round-trip safe formatting helpers shared by every writer in the library.
std::string format_double(double v);
std::string format_float(float v);

} // namespace gridse
