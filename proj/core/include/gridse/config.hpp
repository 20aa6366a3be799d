#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridse/gnn.hpp"

namespace gridse {

/// Declarative run configuration: `key = value` lines, `#` comments.
/// Keys map 1:1 onto Hyperparams plus the generation/experiment parameters
/// below; unknown keys are rejected. Every value can be overridden by a CLI
/// flag; no environment variables are consulted.
struct Config {
    Hyperparams hyper;

    std::string network;   // network file path
    std::string placement; // placement file path
    double sigma = 1e-3;
    double load_lo = 0.9;
    double load_hi = 1.1;
    std::uint64_t seed = 1;
    std::string graph = "augmented"; // "plain" or "augmented"
    std::string out;                 // output path for scenario CSVs

    // sample-efficiency schedule: sizes[i] trains for epoch_list[i] epochs
    std::vector<int> sizes = {100, 1000, 10000};
    std::vector<int> epoch_list = {10000, 1000, 100};
    int val_count = 100;
    int test_count = 100;
};

Config parse_config(const std::string& text);
Config load_config(const std::string& path);
std::string serialize_config(const Config& cfg);

} // namespace gridse
