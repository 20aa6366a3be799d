#include "gridse/config.hpp"

#include <fstream>
#include <sstream>

#include "gridse/errors.hpp"
#include "gridse/grid_model.hpp"

namespace gridse {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& v, int line) {
    std::vector<int> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ParseError("bad integer '" + item + "' in list", line);
        }
    }
    if (out.empty()) throw ParseError("empty integer list", line);
    return out;
}

template <class T>
T parse_number(const std::string& v, int line) {
    std::istringstream in(v);
    T out{};
    in >> out;
    if (in.fail()) throw ParseError("bad numeric value '" + v + "'", line);
    std::string rest;
    if (in >> rest) throw ParseError("trailing content after value '" + v + "'", line);
    return out;
}

} // namespace

Config parse_config(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", ln);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (val.empty()) throw ParseError("empty value for '" + key + "'", ln);

        if (key == "s")
            cfg.hyper.s = parse_number<int>(val, ln);
        else if (key == "layers")
            cfg.hyper.layers = parse_number<int>(val, ln);
        else if (key == "lr")
            cfg.hyper.lr = parse_number<double>(val, ln);
        else if (key == "batch")
            cfg.hyper.batch = parse_number<int>(val, ln);
        else if (key == "clip")
            cfg.hyper.clip = parse_number<double>(val, ln);
        else if (key == "epochs")
            cfg.hyper.epochs = parse_number<int>(val, ln);
        else if (key == "activation")
            cfg.hyper.activation = val;
        else if (key == "normalization") {
            if (val == "mean_batch")
                cfg.hyper.normalization = Normalization::MeanBatch;
            else if (val == "off")
                cfg.hyper.normalization = Normalization::Off;
            else
                throw ParseError("normalization must be 'mean_batch' or 'off'", ln);
        } else if (key == "network")
            cfg.network = val;
        else if (key == "placement")
            cfg.placement = val;
        else if (key == "sigma")
            cfg.sigma = parse_number<double>(val, ln);
        else if (key == "load_lo")
            cfg.load_lo = parse_number<double>(val, ln);
        else if (key == "load_hi")
            cfg.load_hi = parse_number<double>(val, ln);
        else if (key == "seed")
            cfg.seed = parse_number<std::uint64_t>(val, ln);
        else if (key == "graph") {
            if (val != "plain" && val != "augmented")
                throw ParseError("graph must be 'plain' or 'augmented'", ln);
            cfg.graph = val;
        } else if (key == "out")
            cfg.out = val;
        else if (key == "sizes")
            cfg.sizes = parse_int_list(val, ln);
        else if (key == "epoch_list")
            cfg.epoch_list = parse_int_list(val, ln);
        else if (key == "val_count")
            cfg.val_count = parse_number<int>(val, ln);
        else if (key == "test_count")
            cfg.test_count = parse_number<int>(val, ln);
        else
            throw ParseError("unknown config key '" + key + "'", ln);
    }
    validate_hyperparams(cfg.hyper);
    if (cfg.sizes.size() != cfg.epoch_list.size())
        throw ValidationError("sizes and epoch_list must have equal length");
    return cfg;
}

Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const Config& cfg) {
    std::string out;
    auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + '\n'; };
    kv("s", std::to_string(cfg.hyper.s));
    kv("layers", std::to_string(cfg.hyper.layers));
    kv("lr", format_double(cfg.hyper.lr));
    kv("batch", std::to_string(cfg.hyper.batch));
    kv("clip", format_double(cfg.hyper.clip));
    kv("epochs", std::to_string(cfg.hyper.epochs));
    kv("activation", cfg.hyper.activation);
    kv("normalization",
       cfg.hyper.normalization == Normalization::MeanBatch ? "mean_batch" : "off");
    if (!cfg.network.empty()) kv("network", cfg.network);
    if (!cfg.placement.empty()) kv("placement", cfg.placement);
    kv("sigma", format_double(cfg.sigma));
    kv("load_lo", format_double(cfg.load_lo));
    kv("load_hi", format_double(cfg.load_hi));
    kv("seed", std::to_string(cfg.seed));
    kv("graph", cfg.graph);
    if (!cfg.out.empty()) kv("out", cfg.out);
    auto list = [](const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(v[i]);
        }
        return s;
    };
    kv("sizes", list(cfg.sizes));
    kv("epoch_list", list(cfg.epoch_list));
    kv("val_count", std::to_string(cfg.val_count));
    kv("test_count", std::to_string(cfg.test_count));
    return out;
}

} // namespace gridse
