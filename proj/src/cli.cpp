#include "synernet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "synernet/pipeline.hpp"

namespace synernet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json eval_report_json(const EvalReport& rep) {
    json j;
    j["mode"] = rep.mode == VocabularyMode::OodOnly ? "ood_only" : "composite";
    j["ood_top1"] = rep.ood_top1;
    if (rep.sc_top1 >= 0.0)
        j["sc_top1"] = rep.sc_top1;
    else
        j["sc_top1"] = nullptr;
    j["composite_top1"] = rep.composite_top1;
    j["n_samples"] = rep.n_samples;
    j["per_class"] = rep.per_class;
    return j;
}

json config_json(const TrainConfig& cfg) {
    json j;
    j["K"] = cfg.K;
    j["epochs"] = cfg.epochs;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["lr_grid"] = cfg.lr_grid;
    j["ablation"] = ablation_to_names(cfg.ablation);
    j["per_sample_difficulty"] = cfg.per_sample_difficulty;
    j["adapter"] = {{"n_c", cfg.adapter.n_c},
                    {"beta", cfg.adapter.beta},
                    {"lambda", cfg.adapter.lambda},
                    {"tau_lo", cfg.adapter.tau_lo},
                    {"tau_hi", cfg.adapter.tau_hi},
                    {"difficulty_bias", cfg.adapter.difficulty_bias}};
    return j;
}

json aggregate_json(const SeedAggregate& a) {
    return json{{"mean", a.mean}, {"std", a.stddev}, {"per_seed", a.values}};
}

void write_json(const json& j, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(Errc::io, "cannot write " + path);
    f << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(Errc::io, "cannot open " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) fail(Errc::io, "invalid JSON: " + path);
    return j;
}

struct CommonTrainOpts {
    std::string data;
    std::string out;
    std::vector<uint64_t> seeds{0, 1, 2};
    TrainConfig cfg;
    std::vector<std::string> ablation_names;
};

void add_train_options(CLI::App* cmd, CommonTrainOpts& o) {
    cmd->add_option("--data", o.data, "dataset directory")->required();
    cmd->add_option("--out", o.out, "run output directory")->required();
    cmd->add_option("--K", o.cfg.K, "shots per OOD class (1,2,4,8,16)");
    cmd->add_option("--epochs", o.cfg.epochs, "training epochs (full-batch steps)");
    cmd->add_option("--lr", o.cfg.lr, "learning rate");
    cmd->add_option("--lr-grid", o.cfg.lr_grid, "grid of learning rates in [1e-5,1e-3]");
    cmd->add_option("--weight-decay", o.cfg.weight_decay, "decoupled weight decay");
    cmd->add_option("--ablate", o.ablation_names,
                    "ablation flags (NO_VISUAL, NO_LING, NO_NOM, NO_COORD, NO_CTX_EXCH, "
                    "SIMPLE_CONCAT, NO_DIFF, NO_DYNBAL)");
    cmd->add_option("--n-c", o.cfg.adapter.n_c, "learned vectors per concept");
    cmd->add_option("--beta", o.cfg.adapter.beta, "robust-encoding residual coefficient");
    cmd->add_option("--lambda", o.cfg.adapter.lambda, "contextual mixing coefficient");
    cmd->add_flag("--per-sample-difficulty", o.cfg.per_sample_difficulty,
                  "score difficulty per sample instead of on the batch mean");
}

int cmd_synth(const std::string& out, uint64_t seed, const BenchmarkConfig& cfg) {
    Benchmark bench = generate_benchmark(cfg, seed);
    save_benchmark(bench, out);
    std::cout << "dataset written to " << out << " (classes=" << bench.n_classes()
              << ", samples=" << bench.sample_count()
              << ", backbone=" << bench.encoders.content_hash(bench.vocab) << ")\n";
    return 0;
}

int cmd_train(CommonTrainOpts& o) {
    o.cfg.ablation = ablation_from_names(o.ablation_names);
    Benchmark bench = load_benchmark(o.data);
    fs::create_directories(o.out);

    json per_seed = json::array();
    std::vector<double> ood_vals, comp_vals, sc_vals;
    for (size_t i = 0; i < o.seeds.size(); ++i) {
        TrainConfig cfg = o.cfg;
        cfg.seed = o.seeds[i];
        DatasetSplit split = make_split(bench, cfg.K, cfg.seed);
        save_split(split, o.data);

        TrainResult tr = train_few_shot(bench, split, cfg);
        EvalReport ood = evaluate(bench, split, tr.params, VocabularyMode::OodOnly, cfg);
        EvalReport comp = evaluate(bench, split, tr.params, VocabularyMode::Composite, cfg);

        const std::string log_path =
            o.out + "/training_log_s" + std::to_string(cfg.seed) + ".csv";
        write_training_log(tr.log, log_path);
        save_adapter(tr.params, o.out + "/adapter_s" + std::to_string(cfg.seed), tr.backbone_hash);
        save_trace(tr.first_step_trace, o.out + "/trace_s" + std::to_string(cfg.seed) + ".jsonl");
        if (i == 0) {
            write_training_log(tr.log, o.out + "/training_log.csv");
            save_trace(tr.first_step_trace, o.out + "/trace.jsonl");
        }

        per_seed.push_back({{"seed", cfg.seed},
                            {"lr_used", tr.lr_used},
                            {"initial_loss", tr.initial_loss},
                            {"final_loss", tr.final_loss},
                            {"adapter_hash", tr.adapter_hash},
                            {"ood_only", eval_report_json(ood)},
                            {"composite", eval_report_json(comp)}});
        ood_vals.push_back(ood.ood_top1);
        comp_vals.push_back(comp.composite_top1);
        sc_vals.push_back(comp.sc_top1);
    }

    json report;
    report["command"] = "train";
    report["dataset"] = {{"path", o.data},
                         {"seed", bench.seed},
                         {"backbone_hash", bench.encoders.content_hash(bench.vocab)},
                         {"config",
                          {{"n_seen", bench.config.n_seen},
                           {"n_ood", bench.config.n_ood},
                           {"d_raw", bench.config.d_raw},
                           {"d_embed", bench.config.d_embed},
                           {"d_tok", bench.config.d_tok},
                           {"samples_per_class", bench.config.samples_per_class},
                           {"spread", bench.config.spread},
                           {"mean_scale", bench.config.mean_scale},
                           {"min_sep_factor", bench.config.min_sep_factor}}}};
    report["config"] = config_json(o.cfg);
    report["seeds"] = o.seeds;
    report["per_seed"] = per_seed;
    report["aggregate"] = {{"ood_only_top1", aggregate_json(aggregate(o.seeds, ood_vals))},
                           {"composite_top1", aggregate_json(aggregate(o.seeds, comp_vals))},
                           {"composite_sc_top1", aggregate_json(aggregate(o.seeds, sc_vals))}};
    write_json(report, o.out + "/report.json");
    std::cout << "train done: mean ood_top1=" << aggregate(o.seeds, ood_vals).mean
              << " mean composite_top1=" << aggregate(o.seeds, comp_vals).mean << "\n";
    return 0;
}

int cmd_eval(const std::string& data, const std::string& adapter_dir, int K, uint64_t seed,
             const std::string& mode_name, const std::string& out,
             const std::vector<std::string>& ablation_names, const std::string& features_path) {
    Benchmark bench = load_benchmark(data);
    DatasetSplit split;
    try {
        split = load_split(data, K, seed);
    } catch (const Error&) {
        split = make_split(bench, K, seed);
    }
    TrainConfig cfg;
    cfg.K = K;
    cfg.seed = seed;
    cfg.ablation = ablation_from_names(ablation_names);

    AdapterParams params = adapter_dir.empty() ? init_adapter(bench, cfg.adapter, seed)
                                               : load_adapter(adapter_dir, bench);

    std::unique_ptr<PrecomputedFeatureProvider> provider;
    if (!features_path.empty())
        provider = std::make_unique<PrecomputedFeatureProvider>(
            PrecomputedFeatureProvider::load(features_path, bench.config.d_embed));

    fs::create_directories(out);
    json report;
    report["command"] = "eval";
    report["dataset"] = {{"path", data},
                         {"seed", bench.seed},
                         {"backbone_hash", bench.encoders.content_hash(bench.vocab)}};
    report["K"] = K;
    report["seed"] = seed;
    report["adapter"] = adapter_dir.empty() ? "untrained" : adapter_dir;
    report["ablation"] = ablation_names;

    if (mode_name == "ood" || mode_name == "both") {
        EvalReport rep = evaluate(bench, split, params, VocabularyMode::OodOnly, cfg, provider.get());
        report["ood_only"] = eval_report_json(rep);
        std::cout << "ood_only ood_top1=" << rep.ood_top1 << "\n";
    }
    if (mode_name == "composite" || mode_name == "both") {
        EvalReport rep = evaluate(bench, split, params, VocabularyMode::Composite, cfg, provider.get());
        report["composite"] = eval_report_json(rep);
        std::cout << "composite top1=" << rep.composite_top1 << "\n";
    }
    dump_embeddings(bench, split, params, cfg, out);
    write_json(report, out + "/report.json");
    return 0;
}

int cmd_ablate(const std::string& data, int K, const std::vector<uint64_t>& seeds,
               const std::string& out, TrainConfig cfg, int jobs) {
    Benchmark bench = load_benchmark(data);
    const auto rows = run_ablation(bench, K, seeds, cfg, jobs);
    fs::create_directories(out);
    {
        std::ofstream f(out + "/ablation.csv", std::ios::trunc);
        if (!f) fail(Errc::io, "cannot write ablation.csv");
        f << ablation_csv(rows);
    }
    json j;
    j["command"] = "ablate";
    j["K"] = K;
    j["seeds"] = seeds;
    j["config"] = config_json(cfg);
    j["rows"] = json::array();
    for (const auto& r : rows)
        j["rows"].push_back({{"variant", r.variant},
                             {"mean", r.mean},
                             {"std", r.stddev},
                             {"drop", r.drop},
                             {"per_seed", r.per_seed}});
    write_json(j, out + "/report.json");
    std::cout << ablation_csv(rows);
    return 0;
}

int cmd_gradcheck(const std::string& data, double tolerance, uint64_t seed) {
    Benchmark bench = load_benchmark(data);
    TrainConfig cfg;
    AdapterParams params = init_adapter(bench, cfg.adapter, seed);

    // Check at a generic interior point in parameter space: jitter every
    // block and keep the clipped scalars strictly inside their intervals.
    Rng rng(derive_seed(seed, 0x6a697474ULL));
    for (auto& b : param_blocks(params))
        for (size_t i = 0; i < b.size; ++i) b.data[i] += 0.1 * rng.gaussian();
    params.coordinator.kappa_param = 1.1;
    params.coordinator.w_con_param = 1.2;
    params.coordinator.w_cls_param = 0.55;

    GradCheckReport rep = grad_check(params, bench, cfg, tolerance, seed);
    for (const auto& g : rep.groups)
        std::cout << g.group << " max_rel_err=" << g.max_rel_err << " (" << g.param_count
                  << " params)\n";
    std::cout << "max rel. err " << rep.max_rel_err << " tolerance " << rep.tolerance
              << (rep.passed ? " PASS" : " FAIL") << "\n";
    return rep.passed ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
    fs::create_directories(out);
    std::ostringstream summary;
    summary << "run,command,K,mean_ood_top1,std_ood_top1,mean_composite_top1\n";
    std::ostringstream shots;
    shots << "K,mean_ood_top1,std_ood_top1\n";
    summary.precision(10);
    shots.precision(10);

    for (const auto& run : runs) {
        json j = read_json(run + "/report.json");
        const std::string command = j.value("command", "?");
        if (command == "train") {
            const auto& agg = j.at("aggregate");
            const int K = j.at("config").at("K").get<int>();
            const double mean_ood = agg.at("ood_only_top1").at("mean").get<double>();
            const double std_ood = agg.at("ood_only_top1").at("std").get<double>();
            const double mean_comp = agg.at("composite_top1").at("mean").get<double>();
            summary << run << ",train," << K << ',' << mean_ood << ',' << std_ood << ','
                    << mean_comp << "\n";
            shots << K << ',' << mean_ood << ',' << std_ood << "\n";
        } else {
            summary << run << ',' << command << ",,,,\n";
        }
    }
    std::ofstream sf(out + "/summary.csv", std::ios::trunc);
    sf << summary.str();
    std::ofstream cf(out + "/shots_curve.csv", std::ios::trunc);
    cf << shots.str();
    std::cout << summary.str();
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Synthetic few-shot adaptation benchmark for frozen dual-encoder models"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read option defaults from a config file");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out;
    uint64_t synth_seed = 7;
    BenchmarkConfig bcfg;
    synth->add_option("--out", synth_out, "dataset directory")->required();
    synth->add_option("--seed", synth_seed, "dataset seed")->envname("SYNERNET_SEED");
    synth->add_option("--n-seen", bcfg.n_seen, "seen classes");
    synth->add_option("--n-ood", bcfg.n_ood, "ood classes");
    synth->add_option("--d-raw", bcfg.d_raw, "raw dimensionality");
    synth->add_option("--d-embed", bcfg.d_embed, "embedding dimensionality");
    synth->add_option("--d-tok", bcfg.d_tok, "token dimensionality");
    synth->add_option("--samples", bcfg.samples_per_class, "samples per class");
    synth->add_option("--spread", bcfg.spread, "cluster spread");
    synth->add_option("--mean-scale", bcfg.mean_scale, "class mean scale");

    // train
    auto* train = app.add_subcommand("train", "few-shot training on the OOD classes");
    CommonTrainOpts topts;
    add_train_options(train, topts);
    train->add_option("--seeds", topts.seeds, "training seeds")->envname("SYNERNET_SEED");
    uint64_t train_single_seed = 0;
    auto* seed_opt = train->add_option("--seed", train_single_seed, "single training seed")
                         ->excludes("--seeds");

    // eval
    auto* eval = app.add_subcommand("eval", "zero-shot evaluation of an adapter");
    std::string eval_data, eval_adapter, eval_mode = "both", eval_out, eval_features;
    int eval_K = 16;
    uint64_t eval_seed = 0;
    std::vector<std::string> eval_ablate;
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--adapter", eval_adapter, "adapter directory (omit for untrained)");
    eval->add_option("--K", eval_K, "split shots");
    eval->add_option("--seed", eval_seed, "split seed")->envname("SYNERNET_SEED");
    eval->add_option("--mode", eval_mode, "ood | composite | both")
        ->check(CLI::IsMember({"ood", "composite", "both"}));
    eval->add_option("--out", eval_out, "output directory")->required();
    eval->add_option("--ablate", eval_ablate, "ablation flags");
    eval->add_option("--features", eval_features, "precomputed visual features (f32 rows)");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run the ablation variant table");
    CommonTrainOpts aopts;
    std::string ablate_data, ablate_out;
    int ablate_K = 16, ablate_seeds = 5, ablate_jobs = 1;
    ablate->add_option("--data", ablate_data, "dataset directory")->required();
    ablate->add_option("--out", ablate_out, "output directory")->required();
    ablate->add_option("--K", ablate_K, "shots per OOD class");
    ablate->add_option("--seeds", ablate_seeds, "number of seeds (0..n-1)");
    ablate->add_option("--jobs", ablate_jobs, "parallel variant workers");
    ablate->add_option("--epochs", aopts.cfg.epochs, "training epochs");
    ablate->add_option("--lr", aopts.cfg.lr, "learning rate");
    ablate->add_option("--weight-decay", aopts.cfg.weight_decay, "decoupled weight decay");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient validation");
    std::string gc_data;
    double gc_tol = 1e-4;
    uint64_t gc_seed = 0;
    gradcheck->add_option("--data", gc_data, "dataset directory")->required();
    gradcheck->add_option("--tolerance", gc_tol, "max relative error");
    gradcheck->add_option("--seed", gc_seed, "parameter jitter seed")->envname("SYNERNET_SEED");

    // report
    auto* report = app.add_subcommand("report", "render CSV summaries from run directories");
    std::vector<std::string> report_runs;
    std::string report_out;
    report->add_option("--runs", report_runs, "run directories")->required();
    report->add_option("--out", report_out, "output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_out, synth_seed, bcfg);
        if (train->parsed()) {
            if (seed_opt->count()) topts.seeds = {train_single_seed};
            return cmd_train(topts);
        }
        if (eval->parsed())
            return cmd_eval(eval_data, eval_adapter, eval_K, eval_seed, eval_mode, eval_out,
                            eval_ablate, eval_features);
        if (ablate->parsed()) {
            std::vector<uint64_t> seeds;
            for (int s = 0; s < ablate_seeds; ++s) seeds.push_back(uint64_t(s));
            return cmd_ablate(ablate_data, ablate_K, seeds, ablate_out, aopts.cfg, ablate_jobs);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(gc_data, gc_tol, gc_seed);
        if (report->parsed()) return cmd_report(report_runs, report_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.code()) {
            case Errc::frozen_violation:
            case Errc::checksum_mismatch:
            case Errc::version_mismatch:
                return 3;
            default:
                return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

}  // namespace synernet
