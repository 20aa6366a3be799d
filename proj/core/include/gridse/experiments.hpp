#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "gridse/config.hpp"
#include "gridse/dataset.hpp"
#include "gridse/gnn.hpp"

namespace gridse {

struct Metrics {
    double mse = 0;
    double pearson = 0;
};

/// Pooled over the flattened (samples x 2n) arrays: mse is the mean squared
/// element-wise difference, pearson the correlation of the two flat vectors.
Metrics compute_metrics(const std::vector<Eigen::VectorXd>& preds,
                        const std::vector<Eigen::VectorXd>& labels);

/// Random per-sample phasor exclusions; sample i draws `count` distinct
/// indices from the stream derive_seed(seed, i), so different counts are
/// independent and every run is reproducible.
struct ExclusionSpec {
    int count = 0;
    std::uint64_t seed = 0;
};

struct EvalResult {
    Metrics metrics;
    std::vector<Eigen::VectorXd> preds;  // one 2n vector per sample
    std::vector<Eigen::VectorXd> labels; // copied from the dataset
};

/// GNN-ready graphs for a whole dataset. `augmented` adds the
/// variable-to-variable edges before tensorizing.
std::vector<GraphTensors<float>> dataset_tensors(const Dataset& ds, bool augmented);

/// Evaluate on the dataset with per-sample random exclusions (spec.count may
/// be 0). Graphs follow the model's recorded graph variant; forward runs in
/// Eval mode, batched by the model's minibatch size.
EvalResult evaluate_model(GnnModel<float>& model, const Dataset& ds, const ExclusionSpec& spec);

/// Evaluate with explicit exclusion lists (exclusions(i) gives sample i's
/// excluded phasor indices).
EvalResult evaluate_model(GnnModel<float>& model, const Dataset& ds,
                          const std::function<std::vector<int>(int)>& exclusions);

struct SweepRow {
    int excluded = 0;
    double mse_augmented = 0;
    double mse_plain = 0;
};

/// Average test MSE of both models at 0..49 excluded phasors per sample.
std::vector<SweepRow> exclusion_sweep(GnnModel<float>& model_augmented,
                                      GnnModel<float>& model_plain, const Dataset& test,
                                      std::uint64_t seed);

struct PmuFailResult {
    Metrics metrics;
    EvalResult eval;
    std::vector<int> removed_phasors; // indices into the placement's phasor list
    std::vector<int> marked_vars;     // variable indices within 1 hop of removed factors
};

/// Remove every phasor of two adjacent PMU buses (given by external id) from
/// each test sample and evaluate. marked_vars lists the variable nodes
/// adjacent to the removed factor nodes in the full graph.
PmuFailResult pmu_failure_scenario(GnnModel<float>& model, const Dataset& test, int bus_a_ext,
                                   int bus_b_ext);

struct EfficiencyRow {
    int size = 0;
    int epochs = 0;
    double mse = 0;
    double pearson = 0;
};

/// Train one model per (cfg.sizes[i], cfg.epoch_list[i]) pair and evaluate
/// them all on one shared test set.
std::vector<EfficiencyRow> sample_efficiency(const Config& cfg, bool verbose = false);

/// Per-node label bounds (min and max over every sample), used for the
/// per-node dump curves.
void label_bounds(const Dataset& ds, Eigen::VectorXd& lo, Eigen::VectorXd& hi);

// CSV emitters (headers documented in docs/formats.md)
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_dump_csv(std::ostream& out, const EvalResult& result, const Eigen::VectorXd& bound_min,
                    const Eigen::VectorXd& bound_max, const std::vector<int>& marked_vars);
void write_efficiency_csv(std::ostream& out, const std::vector<EfficiencyRow>& rows);

} // namespace gridse
