#include "gridse/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "gridse/errors.hpp"
#include "gridse/rng.hpp"
#include "gridse/wls.hpp"

namespace gridse {

Metrics compute_metrics(const std::vector<Eigen::VectorXd>& preds,
                        const std::vector<Eigen::VectorXd>& labels) {
    if (preds.size() != labels.size() || preds.empty())
        throw ArgumentError("metrics need equally many (and at least one) predictions and labels");
    long total = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].size() != labels[i].size())
            throw ArgumentError("prediction/label length mismatch");
        total += preds[i].size();
    }

    double sum_p = 0, sum_l = 0, se = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (long j = 0; j < preds[i].size(); ++j) {
            const double p = preds[i][j], l = labels[i][j];
            sum_p += p;
            sum_l += l;
            const double d = p - l;
            se += d * d;
        }
    const double mean_p = sum_p / total, mean_l = sum_l / total;
    double cov = 0, var_p = 0, var_l = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (long j = 0; j < preds[i].size(); ++j) {
            const double dp = preds[i][j] - mean_p, dl = labels[i][j] - mean_l;
            cov += dp * dl;
            var_p += dp * dp;
            var_l += dl * dl;
        }
    Metrics m;
    m.mse = se / total;
    const double denom = std::sqrt(var_p) * std::sqrt(var_l);
    m.pearson = denom > 0 ? cov / denom : 0.0;
    return m;
}

std::vector<GraphTensors<float>> dataset_tensors(const Dataset& ds, bool augmented) {
    std::vector<GraphTensors<float>> out;
    out.reserve(ds.samples.size());
    for (const Sample& s : ds.samples) {
        FactorGraph g = build_factor_graph(ds.network, s.mset, &s.label);
        if (augmented) g = augment(std::move(g), ds.network);
        out.push_back(tensorize<float>(g));
    }
    return out;
}

EvalResult evaluate_model(GnnModel<float>& model, const Dataset& ds,
                          const std::function<std::vector<int>(int)>& exclusions) {
    if (ds.samples.empty()) throw ArgumentError("dataset is empty");
    if (ds.network.n() != model.n)
        throw ArgumentError("dataset network size does not match the model");
    const bool augmented = model.graph_variant == "augmented";
    const int chunk = std::max(1, model.hyper.batch);

    EvalResult res;
    res.preds.reserve(ds.samples.size());
    res.labels.reserve(ds.samples.size());

    std::vector<GraphTensors<float>> gts;
    gts.reserve(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        const std::vector<int> excl = exclusions ? exclusions(static_cast<int>(i))
                                                 : std::vector<int>{};
        MeasurementSet mset = excl.empty() ? s.mset : exclude_phasors(s.mset, excl);
        FactorGraph g = build_factor_graph(ds.network, mset, &s.label);
        if (augmented) g = augment(std::move(g), ds.network);
        gts.push_back(tensorize<float>(g));
        res.labels.push_back(s.label);
    }

    for (std::size_t at = 0; at < gts.size(); at += chunk) {
        std::vector<const GraphTensors<float>*> parts;
        for (std::size_t j = at; j < std::min(gts.size(), at + chunk); ++j)
            parts.push_back(&gts[j]);
        GraphTensors<float> uni = concat_graphs(parts);
        const ColVec<float> pred = forward<float>(model, uni, ForwardMode::Eval, nullptr);
        int offset = 0;
        for (const auto* p : parts) {
            Eigen::VectorXd pv(2 * model.n);
            pv.setConstant(0.0);
            for (int v = 0; v < p->nv; ++v)
                pv[p->var_index[v]] = static_cast<double>(pred[offset + v]);
            res.preds.push_back(std::move(pv));
            offset += p->nv;
        }
    }
    res.metrics = compute_metrics(res.preds, res.labels);
    return res;
}

EvalResult evaluate_model(GnnModel<float>& model, const Dataset& ds, const ExclusionSpec& spec) {
    if (spec.count < 0) throw ArgumentError("exclusion count must be non-negative");
    if (spec.count == 0) return evaluate_model(model, ds, nullptr);
    return evaluate_model(model, ds, [&](int i) {
        const Sample& s = ds.samples[static_cast<std::size_t>(i)];
        if (spec.count > s.mset.phasor_count())
            throw ArgumentError("cannot exclude more phasors than the sample has");
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
        return rng.sample_without_replacement(s.mset.phasor_count(), spec.count);
    });
}

std::vector<SweepRow> exclusion_sweep(GnnModel<float>& model_augmented,
                                      GnnModel<float>& model_plain, const Dataset& test,
                                      std::uint64_t seed) {
    std::vector<SweepRow> rows;
    rows.reserve(50);
    for (int count = 0; count <= 49; ++count) {
        ExclusionSpec spec{count, derive_seed(seed, static_cast<std::uint64_t>(count))};
        SweepRow row;
        row.excluded = count;
        row.mse_augmented = evaluate_model(model_augmented, test, spec).metrics.mse;
        row.mse_plain = evaluate_model(model_plain, test, spec).metrics.mse;
        rows.push_back(row);
    }
    return rows;
}

PmuFailResult pmu_failure_scenario(GnnModel<float>& model, const Dataset& test, int bus_a_ext,
                                   int bus_b_ext) {
    const PowerNetwork& net = test.network;
    const int a = net.bus_index(bus_a_ext);
    const int b = net.bus_index(bus_b_ext);
    const auto& pmus = test.placement.pmu_buses;
    auto has = [&](int bus) { return std::find(pmus.begin(), pmus.end(), bus) != pmus.end(); };
    if (!has(a) || !has(b))
        throw ArgumentError("both buses must carry a PMU in the dataset's placement");
    bool adjacent = false;
    for (const Branch& br : net.branches)
        if ((br.from_bus == a && br.to_bus == b) || (br.from_bus == b && br.to_bus == a))
            adjacent = true;
    if (!adjacent) throw ArgumentError("the PMU buses must be adjacent");

    // phasor ownership follows the placement order: V belongs to its bus,
    // from-side currents to the branch's from bus, to-side to its to bus
    const auto kinds = placement_phasors(net, test.placement);
    PmuFailResult res;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        const PhasorKind& k = kinds[i];
        int owner = -1;
        if (k.type == PhasorType::BusVoltage)
            owner = k.element;
        else if (k.type == PhasorType::BranchCurrentFrom)
            owner = net.branches[static_cast<std::size_t>(k.element)].from_bus;
        else
            owner = net.branches[static_cast<std::size_t>(k.element)].to_bus;
        if (owner == a || owner == b) res.removed_phasors.push_back(static_cast<int>(i));
    }

    std::set<int> marked;
    for (int p : res.removed_phasors) {
        const auto [row_re, row_im] = measurement_rows(kinds[static_cast<std::size_t>(p)], net);
        for (const auto& [idx, c] : row_re.coeffs) marked.insert(idx);
        for (const auto& [idx, c] : row_im.coeffs) marked.insert(idx);
    }
    res.marked_vars.assign(marked.begin(), marked.end());

    res.eval = evaluate_model(model, test, [&](int) { return res.removed_phasors; });
    res.metrics = res.eval.metrics;
    return res;
}

std::vector<EfficiencyRow> sample_efficiency(const Config& cfg, bool verbose) {
    if (cfg.network.empty() || cfg.placement.empty())
        throw ArgumentError("sample efficiency needs network and placement paths in the config");
    const PowerNetwork net = load_network(cfg.network);
    const Placement placement = load_placement_file(cfg.placement, net);

    const Dataset val = generate_dataset(net, placement, cfg.val_count, cfg.sigma, cfg.load_lo,
                                         cfg.load_hi, derive_seed(cfg.seed, 1000001));
    const Dataset test = generate_dataset(net, placement, cfg.test_count, cfg.sigma, cfg.load_lo,
                                          cfg.load_hi, derive_seed(cfg.seed, 1000002));
    const bool augmented = cfg.graph == "augmented";
    const auto val_gts = dataset_tensors(val, augmented);

    std::vector<EfficiencyRow> rows;
    for (std::size_t i = 0; i < cfg.sizes.size(); ++i) {
        const int size = cfg.sizes[i];
        Hyperparams hyper = cfg.hyper;
        hyper.epochs = cfg.epoch_list[i];
        if (verbose)
            std::fprintf(stderr, "training on %d samples for %d epochs\n", size, hyper.epochs);

        const Dataset train_ds =
            generate_dataset(net, placement, size, cfg.sigma, cfg.load_lo, cfg.load_hi,
                             derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        const auto train_gts = dataset_tensors(train_ds, augmented);

        Rng rng(derive_seed(cfg.seed, 2000000 + static_cast<std::uint64_t>(i)));
        GnnModel<float> model = init_model<float>(hyper, net.n(), rng);
        model.graph_variant = cfg.graph;
        TrainOptions opts;
        opts.verbose = verbose;
        train(model, train_gts, val_gts, rng, opts);

        const EvalResult ev = evaluate_model(model, test, ExclusionSpec{});
        rows.push_back({size, hyper.epochs, ev.metrics.mse, ev.metrics.pearson});
    }
    return rows;
}

void label_bounds(const Dataset& ds, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
    const long m = 2L * ds.network.n();
    lo = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
    hi = Eigen::VectorXd::Constant(m, -std::numeric_limits<double>::infinity());
    for (const Sample& s : ds.samples)
        for (long j = 0; j < m; ++j) {
            lo[j] = std::min(lo[j], s.label[j]);
            hi[j] = std::max(hi[j], s.label[j]);
        }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "excluded,mse_augmented,mse_plain\n";
    for (const SweepRow& r : rows)
        out << r.excluded << ',' << format_double(r.mse_augmented) << ','
            << format_double(r.mse_plain) << '\n';
}

void write_dump_csv(std::ostream& out, const EvalResult& result, const Eigen::VectorXd& bound_min,
                    const Eigen::VectorXd& bound_max, const std::vector<int>& marked_vars) {
    out << "sample,var_index,prediction,label,bound_min,bound_max,marked\n";
    std::set<int> marked(marked_vars.begin(), marked_vars.end());
    for (std::size_t i = 0; i < result.preds.size(); ++i)
        for (long v = 0; v < result.preds[i].size(); ++v) {
            out << i << ',' << v << ',' << format_double(result.preds[i][v]) << ','
                << format_double(result.labels[i][v]) << ',';
            if (bound_min.size() > v) out << format_double(bound_min[v]);
            out << ',';
            if (bound_max.size() > v) out << format_double(bound_max[v]);
            out << ',' << (marked.count(static_cast<int>(v)) ? 1 : 0) << '\n';
        }
}

void write_efficiency_csv(std::ostream& out, const std::vector<EfficiencyRow>& rows) {
    out << "train_size,epochs,mse,pearson\n";
    for (const EfficiencyRow& r : rows)
        out << r.size << ',' << r.epochs << ',' << format_double(r.mse) << ','
            << format_double(r.pearson) << '\n';
}

} // namespace gridse
