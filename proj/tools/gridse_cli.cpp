#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gridse/checkpoint.hpp"
#include "gridse/config.hpp"
#include "gridse/dataset.hpp"
#include "gridse/errors.hpp"
#include "gridse/experiments.hpp"
#include "gridse/fileio.hpp"
#include "gridse/gnn.hpp"
#include "gridse/grid_model.hpp"
#include "gridse/measurement.hpp"
#include "gridse/placement.hpp"
#include "gridse/rng.hpp"
#include "gridse/wls.hpp"

namespace {

using namespace gridse;

// fixed streams so evaluation-time draws never collide with the generation
// streams already derived from a dataset's seed
constexpr std::uint64_t kEvaluateStream = 0x45564c31;
constexpr std::uint64_t kSweepStream = 0x53575031;

struct TrainArgs {
    std::string dataset, val, config, checkpoint_out;
    std::string graph = "augmented";
    std::uint64_t seed = 1;
    bool verbose = false;
    // hyperparameter overrides (negative / empty means "keep config value")
    int s = -1, layers = -1, batch = -1, epochs = -1;
    double lr = -1, clip = -1;
    std::string normalization;
};

void combine_bounds(const Dataset& ds, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
    Eigen::VectorXd l, h;
    label_bounds(ds, l, h);
    if (lo.size() == 0) {
        lo = l;
        hi = h;
        return;
    }
    for (long i = 0; i < lo.size(); ++i) {
        lo[i] = std::min(lo[i], l[i]);
        hi[i] = std::max(hi[i], h[i]);
    }
}

int run_generate(const std::string& network_path, const std::string& placement_path, int count,
                 double sigma, double load_lo, double load_hi, std::uint64_t seed,
                 const std::string& out) {
    const PowerNetwork net = load_network(network_path);
    const Placement placement = load_placement_file(placement_path, net);
    const Dataset ds = generate_dataset(net, placement, count, sigma, load_lo, load_hi, seed);
    save_dataset(ds, out);
    std::printf("wrote %zu samples to %s (network %s, %d phasors per sample)\n",
                ds.samples.size(), out.c_str(), network_hash(net).c_str(),
                ds.samples.empty() ? 0 : ds.samples.front().mset.phasor_count());
    return 0;
}

int run_place(const std::string& network_path, const std::string& out) {
    const PowerNetwork net = load_network(network_path);
    const Placement placement = greedy_place(net);
    write_text_file(out, serialize_placement(net, placement));
    const auto [nv, ni] = phasor_inventory(net, placement);
    std::printf("placed %zu PMUs: %d voltage + %d current phasors\n", placement.pmu_buses.size(),
                nv, ni);
    return 0;
}

int run_solve(const std::string& network_path, const std::string& measurements_path,
              const std::string& out) {
    const PowerNetwork net = load_network(network_path);
    std::ifstream mf(measurements_path);
    if (!mf) throw IoError("cannot open '" + measurements_path + "'");
    const MeasurementSet mset = read_measurement_csv(mf, net);
    const WlsSolution sol = solve_wls(build_jacobian(mset));

    std::string csv = "bus,v_re,v_im\n";
    for (int i = 0; i < net.n(); ++i) {
        csv += std::to_string(net.buses[i].external_id) + ',' +
               format_double(sol.state.v_re[i]) + ',' + format_double(sol.state.v_im[i]) + '\n';
    }
    write_text_file(out, csv);
    std::printf("solved %d-bus state from %d phasors, residual %s\n", net.n(),
                mset.phasor_count(), format_double(sol.residual_norm).c_str());
    return 0;
}

int run_train(const TrainArgs& args) {
    Config cfg;
    if (!args.config.empty()) cfg = load_config(args.config);
    if (args.s > 0) cfg.hyper.s = args.s;
    if (args.layers > 0) cfg.hyper.layers = args.layers;
    if (args.batch > 0) cfg.hyper.batch = args.batch;
    if (args.epochs >= 0) cfg.hyper.epochs = args.epochs;
    if (args.lr >= 0) cfg.hyper.lr = args.lr;
    if (args.clip > 0) cfg.hyper.clip = args.clip;
    if (!args.normalization.empty()) {
        if (args.normalization == "mean_batch")
            cfg.hyper.normalization = Normalization::MeanBatch;
        else if (args.normalization == "off")
            cfg.hyper.normalization = Normalization::Off;
        else
            throw ArgumentError("--normalization must be mean_batch or off");
    }
    validate_hyperparams(cfg.hyper);

    const Dataset train_ds = load_dataset(args.dataset);
    const Dataset val_ds = load_dataset(args.val);
    if (network_hash(train_ds.network) != network_hash(val_ds.network))
        throw ValidationError("training and validation datasets use different networks");

    const bool augmented = args.graph == "augmented";
    const auto train_gts = dataset_tensors(train_ds, augmented);
    const auto val_gts = dataset_tensors(val_ds, augmented);

    Rng rng(args.seed);
    GnnModel<float> model = init_model<float>(cfg.hyper, train_ds.network.n(), rng);
    model.graph_variant = args.graph;
    combine_bounds(train_ds, model.bound_min, model.bound_max);
    combine_bounds(val_ds, model.bound_min, model.bound_max);

    TrainOptions opts;
    opts.verbose = args.verbose;
    const TrainHistory hist = train(model, train_gts, val_gts, rng, opts);
    save_checkpoint(model, args.checkpoint_out);

    std::printf("trained %d epochs on %zu samples; best epoch %d, val loss %s\n",
                cfg.hyper.epochs, train_ds.samples.size(), hist.best_epoch,
                hist.best_epoch > 0
                    ? format_double(hist.val_loss[static_cast<std::size_t>(hist.best_epoch - 1)])
                          .c_str()
                    : "n/a");
    return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& test_path, int exclude,
                 const std::string& dump_path, std::uint64_t seed, bool seed_given) {
    GnnModel<float> model = load_checkpoint<float>(checkpoint);
    const Dataset test = load_dataset(test_path);
    ExclusionSpec spec;
    spec.count = exclude;
    spec.seed = seed_given ? seed : derive_seed(test.seed, kEvaluateStream);
    const EvalResult res = evaluate_model(model, test, spec);
    std::printf("mse %s\npearson %s\n", format_double(res.metrics.mse).c_str(),
                format_double(res.metrics.pearson).c_str());
    if (!dump_path.empty()) {
        Eigen::VectorXd lo = model.bound_min, hi = model.bound_max;
        combine_bounds(test, lo, hi);
        std::ostringstream out;
        out << "# pearson pooled over flattened predictions/labels\n";
        out << "# exclusions: " << exclude << " per sample, reusing the stored test noise draws\n";
        write_dump_csv(out, res, lo, hi, {});
        write_text_file(dump_path, out.str());
    }
    return 0;
}

int run_sweep(const std::string& ckpt_aug, const std::string& ckpt_plain,
              const std::string& test_path, const std::string& out, std::uint64_t seed,
              bool seed_given) {
    GnnModel<float> aug = load_checkpoint<float>(ckpt_aug);
    GnnModel<float> plain = load_checkpoint<float>(ckpt_plain);
    if (aug.graph_variant != "augmented" || plain.graph_variant != "plain")
        throw ValidationError("sweep expects --checkpoint-aug trained on augmented graphs and "
                              "--checkpoint-plain on plain graphs");
    const Dataset test = load_dataset(test_path);
    const std::uint64_t run_seed = seed_given ? seed : derive_seed(test.seed, kSweepStream);
    const auto rows = exclusion_sweep(aug, plain, test, run_seed);
    std::ostringstream csv;
    csv << "# exclusion test sets reuse the base test samples' noise draws\n";
    write_sweep_csv(csv, rows);
    write_text_file(out, csv.str());
    std::printf("wrote %zu sweep rows to %s\n", rows.size(), out.c_str());
    return 0;
}

int run_pmu_fail(const std::string& checkpoint, const std::string& test_path,
                 const std::string& buses, const std::string& dump_path) {
    GnnModel<float> model = load_checkpoint<float>(checkpoint);
    const Dataset test = load_dataset(test_path);
    int a = 0, b = 0;
    {
        std::istringstream in(buses);
        char comma = 0;
        if (!(in >> a >> comma >> b) || comma != ',')
            throw ArgumentError("--buses expects two external bus ids as a,b");
    }
    const PmuFailResult res = pmu_failure_scenario(model, test, a, b);
    std::printf("removed %zu phasors\nmse %s\npearson %s\n", res.removed_phasors.size(),
                format_double(res.metrics.mse).c_str(),
                format_double(res.metrics.pearson).c_str());
    if (!dump_path.empty()) {
        Eigen::VectorXd lo = model.bound_min, hi = model.bound_max;
        combine_bounds(test, lo, hi);
        std::ostringstream out;
        out << "# marked = variable nodes within 1 hop of the removed factor nodes\n";
        write_dump_csv(out, res.eval, lo, hi, res.marked_vars);
        write_text_file(dump_path, out.str());
    }
    return 0;
}

int run_efficiency(const std::string& config_path, const std::string& out_override,
                   bool verbose) {
    Config cfg = load_config(config_path);
    if (!out_override.empty()) cfg.out = out_override;
    const auto rows = sample_efficiency(cfg, verbose);
    std::ostringstream csv;
    write_efficiency_csv(csv, rows);
    if (cfg.out.empty())
        std::fputs(csv.str().c_str(), stdout);
    else {
        write_text_file(cfg.out, csv.str());
        std::printf("wrote %zu rows to %s\n", rows.size(), cfg.out.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power system state estimation with PMU measurements: WLS solver, dataset "
                 "tooling, and a graph neural network surrogate"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Sample (measurements, WLS label) datasets");
    std::string gen_network, gen_placement, gen_out;
    int gen_count = 100;
    double gen_sigma = 1e-3, gen_lo = 0.9, gen_hi = 1.1;
    std::uint64_t gen_seed = 1;
    gen->add_option("--network", gen_network, "network file (native or CDF)")->required();
    gen->add_option("--placement", gen_placement, "PMU placement file")->required();
    gen->add_option("--count", gen_count, "number of samples");
    gen->add_option("--sigma", gen_sigma, "measurement noise standard deviation");
    gen->add_option("--load-lo", gen_lo, "lower load-scale bound");
    gen->add_option("--load-hi", gen_hi, "upper load-scale bound");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "output dataset file")->required();

    // place-pmus
    auto* place = app.add_subcommand("place-pmus", "Greedy observability-driven PMU placement");
    std::string place_network, place_out;
    place->add_option("--network", place_network, "network file")->required();
    place->add_option("--out", place_out, "output placement file")->required();

    // solve-se
    auto* solve = app.add_subcommand("solve-se", "WLS state estimate from a measurement CSV");
    std::string solve_network, solve_meas, solve_out;
    solve->add_option("--network", solve_network, "network file")->required();
    solve->add_option("--measurements", solve_meas, "measurement CSV")->required();
    solve->add_option("--out", solve_out, "output state CSV")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train the GNN on a generated dataset");
    TrainArgs targs;
    tr->add_option("--dataset", targs.dataset, "training dataset file")->required();
    tr->add_option("--val", targs.val, "validation dataset file")->required();
    tr->add_option("--config", targs.config, "config file (defaults used when omitted)");
    tr->add_option("--seed", targs.seed, "init/shuffle seed");
    tr->add_option("--checkpoint-out", targs.checkpoint_out, "output checkpoint")->required();
    tr->add_option("--graph", targs.graph, "graph variant: plain|augmented")
        ->check(CLI::IsMember({"plain", "augmented"}));
    tr->add_option("--s", targs.s, "embedding size override");
    tr->add_option("--layers", targs.layers, "layer count override");
    tr->add_option("--lr", targs.lr, "learning rate override");
    tr->add_option("--batch", targs.batch, "minibatch size override");
    tr->add_option("--clip", targs.clip, "gradient clip override");
    tr->add_option("--epochs", targs.epochs, "epoch count override");
    tr->add_option("--normalization", targs.normalization, "mean_batch|off");
    tr->add_flag("--verbose", targs.verbose, "per-epoch progress on stderr");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Metrics (and per-node dump) on a test dataset");
    std::string ev_ckpt, ev_test, ev_dump;
    int ev_exclude = 0;
    std::uint64_t ev_seed = 0;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--test", ev_test, "test dataset file")->required();
    ev->add_option("--exclude", ev_exclude, "phasors to exclude per sample");
    ev->add_option("--dump-nodes", ev_dump, "write a per-node prediction CSV here");
    auto* ev_seed_opt = ev->add_option("--seed", ev_seed, "exclusion seed (default: derived "
                                                          "from the dataset seed)");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Exclusion sweep 0..49 for two models");
    std::string sw_aug, sw_plain, sw_test, sw_out;
    std::uint64_t sw_seed = 0;
    sw->add_option("--checkpoint-aug", sw_aug, "augmented-graph checkpoint")->required();
    sw->add_option("--checkpoint-plain", sw_plain, "plain-graph checkpoint")->required();
    sw->add_option("--test", sw_test, "test dataset file")->required();
    sw->add_option("--out", sw_out, "output CSV")->required();
    auto* sw_seed_opt = sw->add_option("--seed", sw_seed, "exclusion seed (default: derived "
                                                          "from the dataset seed)");

    // pmu-fail
    auto* pf = app.add_subcommand("pmu-fail", "Two-adjacent-PMU failure scenario");
    std::string pf_ckpt, pf_test, pf_buses, pf_dump;
    pf->add_option("--checkpoint", pf_ckpt, "model checkpoint")->required();
    pf->add_option("--test", pf_test, "test dataset file")->required();
    pf->add_option("--buses", pf_buses, "two adjacent PMU buses as a,b (external ids)")
        ->required();
    pf->add_option("--dump-nodes", pf_dump, "write a per-node prediction CSV here");

    // sample-efficiency
    auto* se = app.add_subcommand("sample-efficiency",
                                  "Train/evaluate across training set sizes");
    std::string se_config, se_out;
    bool se_verbose = false;
    se->add_option("--config", se_config, "config file")->required();
    se->add_option("--out", se_out, "output CSV override");
    se->add_flag("--verbose", se_verbose, "progress on stderr");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return run_generate(gen_network, gen_placement, gen_count, gen_sigma, gen_lo, gen_hi,
                                gen_seed, gen_out);
        if (place->parsed()) return run_place(place_network, place_out);
        if (solve->parsed()) return run_solve(solve_network, solve_meas, solve_out);
        if (tr->parsed()) return run_train(targs);
        if (ev->parsed())
            return run_evaluate(ev_ckpt, ev_test, ev_exclude, ev_dump, ev_seed,
                                ev_seed_opt->count() > 0);
        if (sw->parsed())
            return run_sweep(sw_aug, sw_plain, sw_test, sw_out, sw_seed,
                             sw_seed_opt->count() > 0);
        if (pf->parsed()) return run_pmu_fail(pf_ckpt, pf_test, pf_buses, pf_dump);
        if (se->parsed()) return run_efficiency(se_config, se_out, se_verbose);
    } catch (const gridse::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
