#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <sstream>

#include "gridse/fileio.hpp"
#include "gridse/grid_model.hpp"

namespace gridse {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

double parse_number(const std::string& s, std::size_t line_no) {
    std::string t = trim(s);
    if (t.empty()) return 0.0;
    const char* begin = t.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw ParseError("expected a number, got '" + t + "'", line_no);
    return v;
}

long parse_integer(const std::string& s, std::size_t line_no) {
    std::string t = trim(s);
    if (t.empty()) return 0;
    const char* begin = t.c_str();
    char* end = nullptr;
    long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0')
        throw ParseError("expected an integer, got '" + t + "'", line_no);
    return v;
}

/// 1-based inclusive column slice per the Common Data Format card layouts.
std::string columns(const std::string& line, std::size_t first, std::size_t last) {
    if (line.size() < first) return "";
    return line.substr(first - 1, std::min(last, line.size()) - (first - 1));
}

bool is_section_end(const std::string& line) {
    std::string t = trim(line);
    return t.rfind("-999", 0) == 0 || t.rfind("-99", 0) == 0;
}

PowerNetwork parse_cdf(const std::vector<std::string>& lines) {
    PowerNetwork net;
    if (lines.empty()) throw ParseError("empty document");
    double base = parse_number(columns(lines[0], 32, 37), 1);
    net.base_mva = base > 0 ? base : 100.0;

    std::size_t i = 1;
    auto find_section = [&](const char* tag) {
        while (i < lines.size() && trim(lines[i]).rfind(tag, 0) != 0) ++i;
        if (i == lines.size()) throw ParseError(std::string("missing section '") + tag + "'");
        ++i;
    };

    find_section("BUS DATA FOLLOWS");
    std::vector<int> external_ids;
    while (i < lines.size() && !is_section_end(lines[i])) {
        const std::string& ln = lines[i];
        const std::size_t no = i + 1;
        if (trim(ln).empty()) { ++i; continue; }
        Bus bus;
        bus.external_id = static_cast<int>(parse_integer(columns(ln, 1, 4), no));
        long type = parse_integer(columns(ln, 25, 26), no);
        double final_v = parse_number(columns(ln, 28, 33), no);
        bus.load_p = parse_number(columns(ln, 41, 49), no) / net.base_mva;
        bus.load_q = parse_number(columns(ln, 50, 59), no) / net.base_mva;
        bus.gen_p = parse_number(columns(ln, 60, 67), no) / net.base_mva;
        double desired_v = parse_number(columns(ln, 85, 90), no);
        bus.shunt_g = parse_number(columns(ln, 107, 114), no);
        bus.shunt_b = parse_number(columns(ln, 115, 122), no);
        switch (type) {
            case 3: bus.bus_kind = BusKind::Slack; break;
            case 2: bus.bus_kind = BusKind::PV; break;
            default: bus.bus_kind = BusKind::PQ; break;
        }
        if (bus.bus_kind != BusKind::PQ)
            bus.gen_v = desired_v > 0 ? desired_v : final_v;
        bus.id = static_cast<int>(net.buses.size());
        external_ids.push_back(bus.external_id);
        net.buses.push_back(bus);
        ++i;
    }
    if (i == lines.size()) throw ParseError("bus section not terminated");
    ++i;

    auto to_internal = [&](int ext, std::size_t no) {
        int idx = net.bus_index(ext);
        if (idx < 0)
            throw ParseError("branch references unknown bus " + std::to_string(ext), no);
        return idx;
    };

    find_section("BRANCH DATA FOLLOWS");
    while (i < lines.size() && !is_section_end(lines[i])) {
        const std::string& ln = lines[i];
        const std::size_t no = i + 1;
        if (trim(ln).empty()) { ++i; continue; }
        Branch br;
        br.from_bus = to_internal(static_cast<int>(parse_integer(columns(ln, 1, 4), no)), no);
        br.to_bus = to_internal(static_cast<int>(parse_integer(columns(ln, 6, 9), no)), no);
        double r = parse_number(columns(ln, 20, 29), no);
        double x = parse_number(columns(ln, 30, 40), no);
        double b_total = parse_number(columns(ln, 41, 50), no);
        double ratio = parse_number(columns(ln, 77, 82), no);
        double shift_deg = parse_number(columns(ln, 84, 90), no);
        double den = r * r + x * x;
        if (den == 0) throw ParseError("branch has zero impedance", no);
        br.g = r / den;
        br.b = -x / den;
        br.b_sh = b_total / 2.0;
        br.tau = ratio > 0 ? ratio : 1.0;
        br.phi = shift_deg * kPi / 180.0;
        net.branches.push_back(br);
        ++i;
    }
    if (i == lines.size()) throw ParseError("branch section not terminated");
    return net;
}

BusKind parse_kind(const std::string& s, std::size_t no) {
    if (s == "slack") return BusKind::Slack;
    if (s == "pv") return BusKind::PV;
    if (s == "pq") return BusKind::PQ;
    throw ParseError("unknown bus kind '" + s + "'", no);
}

const char* kind_name(BusKind k) {
    switch (k) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        default: return "pq";
    }
}

PowerNetwork parse_native(const std::vector<std::string>& lines) {
    PowerNetwork net;
    enum class Section { None, Buses, Branches } section = Section::None;
    struct RawBranch { int from_ext, to_ext; Branch br; std::size_t no; };
    std::vector<RawBranch> raw_branches;

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t no = i + 1;
        std::string ln = lines[i];
        std::size_t hash = ln.find('#');
        if (hash != std::string::npos) ln = ln.substr(0, hash);
        ln = trim(ln);
        if (ln.empty()) continue;
        if (ln == "[buses]") { section = Section::Buses; continue; }
        if (ln == "[branches]") { section = Section::Branches; continue; }
        if (ln.rfind("base_mva", 0) == 0) {
            net.base_mva = parse_number(ln.substr(8), no);
            continue;
        }
        if (section == Section::Buses) {
            auto f = split_csv(ln);
            if (f.size() != 6 && f.size() != 8)
                throw ParseError("bus record needs 6 or 8 fields, got " + std::to_string(f.size()), no);
            Bus bus;
            bus.external_id = static_cast<int>(parse_integer(f[0], no));
            bus.load_p = parse_number(f[1], no);
            bus.load_q = parse_number(f[2], no);
            bus.gen_p = parse_number(f[3], no);
            bus.gen_v = parse_number(f[4], no);
            bus.bus_kind = parse_kind(f[5], no);
            if (f.size() == 8) {
                bus.shunt_g = parse_number(f[6], no);
                bus.shunt_b = parse_number(f[7], no);
            }
            bus.id = static_cast<int>(net.buses.size());
            net.buses.push_back(bus);
        } else if (section == Section::Branches) {
            auto f = split_csv(ln);
            if (f.size() != 7)
                throw ParseError("branch record needs 7 fields, got " + std::to_string(f.size()), no);
            RawBranch rb;
            rb.from_ext = static_cast<int>(parse_integer(f[0], no));
            rb.to_ext = static_cast<int>(parse_integer(f[1], no));
            rb.br.g = parse_number(f[2], no);
            rb.br.b = parse_number(f[3], no);
            rb.br.b_sh = parse_number(f[4], no);
            rb.br.tau = parse_number(f[5], no);
            rb.br.phi = parse_number(f[6], no);
            rb.no = no;
            raw_branches.push_back(rb);
        } else {
            throw ParseError("record outside of any section", no);
        }
    }

    for (const RawBranch& rb : raw_branches) {
        Branch br = rb.br;
        int fi = net.bus_index(rb.from_ext);
        int ti = net.bus_index(rb.to_ext);
        if (fi < 0 || ti < 0)
            throw ValidationError("branch references unknown bus " +
                                  std::to_string(fi < 0 ? rb.from_ext : rb.to_ext));
        br.from_bus = fi;
        br.to_bus = ti;
        net.branches.push_back(br);
    }
    return net;
}

} // namespace

PowerNetwork parse_network(const std::string& text) {
    const auto lines = split_lines(text);
    bool cdf = false;
    for (const std::string& ln : lines)
        if (ln.find("BUS DATA FOLLOWS") != std::string::npos) { cdf = true; break; }
    PowerNetwork net = cdf ? parse_cdf(lines) : parse_native(lines);
    validate_network(net);
    return net;
}

PowerNetwork load_network(const std::string& path) { return parse_network(read_text_file(path)); }

std::string serialize_network(const PowerNetwork& network) {
    std::ostringstream out;
    out << "# gridse network v1\n";
    out << "base_mva " << format_double(network.base_mva) << "\n";
    out << "[buses]\n";
    out << "# external_id,load_p,load_q,gen_p,gen_v,kind,shunt_g,shunt_b\n";
    for (const Bus& bus : network.buses) {
        out << bus.external_id << ',' << format_double(bus.load_p) << ','
            << format_double(bus.load_q) << ',' << format_double(bus.gen_p) << ','
            << format_double(bus.gen_v) << ',' << kind_name(bus.bus_kind) << ','
            << format_double(bus.shunt_g) << ',' << format_double(bus.shunt_b) << "\n";
    }
    out << "[branches]\n";
    out << "# from,to,g,b,b_sh,tau,phi\n";
    for (const Branch& br : network.branches) {
        out << network.buses[br.from_bus].external_id << ','
            << network.buses[br.to_bus].external_id << ',' << format_double(br.g) << ','
            << format_double(br.b) << ',' << format_double(br.b_sh) << ','
            << format_double(br.tau) << ',' << format_double(br.phi) << "\n";
    }
    return out.str();
}

std::string network_hash(const PowerNetwork& network) {
    const std::string text = serialize_network(network);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace gridse
