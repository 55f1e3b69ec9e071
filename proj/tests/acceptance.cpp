// Acceptance suite: runs the numbered criteria and prints one PASS/FAIL line
// per criterion. Usage: acceptance [criterion ...]; no arguments runs all.

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <filesystem>
#include <fstream>

#include "synernet/cli.hpp"
#include "synernet/pipeline.hpp"

using namespace synernet;

namespace {

struct Checker {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << "    failed: " << what << "\n";
        }
    }
    void note(const std::string& what) { detail << "    " << what << "\n"; }
};

Benchmark default_benchmark() { return generate_benchmark(BenchmarkConfig{}, 7); }

TrainConfig default_config(int K, uint64_t seed) {
    TrainConfig cfg;
    cfg.K = K;
    cfg.seed = seed;
    return cfg;
}

double train_eval_ood(const Benchmark& bench, int K, uint64_t seed) {
    TrainConfig cfg = default_config(K, seed);
    const DatasetSplit split = make_split(bench, K, seed);
    TrainResult tr = train_few_shot(bench, split, cfg);
    return evaluate(bench, split, tr.params, VocabularyMode::OodOnly, cfg).ood_top1;
}

// --------------------------------------------------------------------------

bool criterion1(Checker& c) {
    SimilarityMatrix s4;
    s4.n = s4.m = 4;
    s4.s.assign(16, 0.37);
    const double j4 = contrastive_loss(s4, 1.0).loss;
    c.expect(std::fabs(j4 - std::log(4.0)) <= 1e-6, "contrastive(const 4x4) == ln 4");

    SimilarityMatrix s1;
    s1.n = s1.m = 1;
    s1.s.assign(1, 0.9);
    c.expect(contrastive_loss(s1, 1.0).loss == 0.0, "contrastive(N=1) == 0 exactly");

    Mat head(4, 6);
    std::vector<Vec> feats(3, Vec(6));
    Rng rng(5);
    for (auto& f : feats)
        for (double& x : f) x = rng.gaussian();
    const double jc = classification_loss(feats, {0, 1, 3}, head).loss;
    c.expect(std::fabs(jc - std::log(4.0)) <= 1e-6, "classification(zero logits, C=4) == ln 4");

    for (int rep = 0; rep < 10; ++rep) {
        Vec row(9);
        for (double& x : row) x = rng.gaussian();
        const Vec p = zero_shot_probs(row, 1.0);
        double total = 0.0;
        for (double v : p) total += v;
        c.expect(std::fabs(total - 1.0) <= 1e-9, "zero_shot_probs sums to 1");
        Vec shifted(row);
        for (double& x : shifted) x += 11.25;
        const Vec q = zero_shot_probs(shifted, 1.0);
        for (size_t i = 0; i < p.size(); ++i)
            c.expect(std::fabs(p[i] - q[i]) <= 1e-9, "zero_shot_probs shift invariance");
    }
    return c.ok;
}

bool criterion2(Checker& c) {
    c.expect(gc_temperature(0.1) == 0.5, "gc_temperature(0.1) == 0.5");
    c.expect(gc_temperature(5.0) == 2.0, "gc_temperature(5.0) == 2.0");
    c.expect(gc_temperature(1.0) == 1.0, "gc_temperature(1.0) == 1.0");

    const auto even = balance_weights(1.0, 1.0);
    c.expect(std::fabs(even.w_con - 0.5) <= 1e-9 && std::fabs(even.w_cls - 0.5) <= 1e-9,
             "balance_weights(1,1) == (0.5, 0.5)");
    const auto clipped = balance_weights(4.0, 1.0);
    c.expect(std::fabs(clipped.w_con - 0.4) <= 1e-9 && std::fabs(clipped.w_cls - 0.2) <= 1e-9,
             "balance_weights(4,1) == (0.4, 0.2)");
    return c.ok;
}

bool criterion3(Checker& c) {
    const Benchmark bench = default_benchmark();
    TrainConfig cfg;
    AdapterParams params = init_adapter(bench, cfg.adapter, 0);
    Rng rng(derive_seed(0, 0x6a697474ULL));
    for (auto& b : param_blocks(params))
        for (size_t i = 0; i < b.size; ++i) b.data[i] += 0.1 * rng.gaussian();
    params.coordinator.kappa_param = 1.1;
    params.coordinator.w_con_param = 1.2;
    params.coordinator.w_cls_param = 0.55;

    const GradCheckReport rep = grad_check(params, bench, cfg, 1e-4, 0);
    for (const auto& g : rep.groups) {
        std::ostringstream line;
        line << g.group << " rel_err=" << g.max_rel_err;
        c.note(line.str());
        c.expect(g.max_rel_err < 1e-4, "gradient group " + g.group + " under tolerance");
    }

    // The detached residual of the robust encoding contributes exactly zero
    // gradient: the analytic jacobian equals the jacobian of e/‖e‖ alone.
    Vec e(6);
    for (double& x : e) x = rng.gaussian();
    const Mat jac = vpu_robust_jacobian(e);
    const double beta = 0.5;
    double max_dev = 0.0;
    const double h = 1e-5;
    for (size_t in = 0; in < e.size(); ++in) {
        Vec ep = e, em = e;
        ep[in] += h;
        em[in] -= h;
        const Vec np = normalized(ep), nm = normalized(em);
        const Vec fp = vpu_robust_from_feature(ep, beta), fm = vpu_robust_from_feature(em, beta);
        for (size_t out = 0; out < e.size(); ++out) {
            const double fd_norm = (np[out] - nm[out]) / (2.0 * h);
            max_dev = std::max(max_dev, std::fabs(jac.at(out, in) - fd_norm));
            const double fd_full = (fp[out] - fm[out]) / (2.0 * h);
            const double residual_part = fd_full - jac.at(out, in);
            const double expected = out == in ? beta : 0.0;
            max_dev = std::max(max_dev, std::fabs(residual_part - expected));
        }
    }
    c.expect(max_dev < 1e-6, "residual term carries zero analytic gradient");
    return c.ok;
}

bool criterion4(Checker& c) {
    const Benchmark bench = default_benchmark();
    const double chance = 1.0 / double(bench.config.n_ood);

    std::vector<double> untrained, trained;
    for (uint64_t seed : {0, 1, 2}) {
        TrainConfig cfg = default_config(16, seed);
        const DatasetSplit split = make_split(bench, 16, seed);
        // baseline: no learned names, so every OOD prompt reduces to UNK
        TrainConfig baseline = cfg;
        baseline.ablation.no_nom = true;
        AdapterParams fresh = init_adapter(bench, cfg.adapter, seed);
        untrained.push_back(
            evaluate(bench, split, fresh, VocabularyMode::OodOnly, baseline).ood_top1);
        TrainResult tr = train_few_shot(bench, split, cfg);
        trained.push_back(evaluate(bench, split, tr.params, VocabularyMode::OodOnly, cfg).ood_top1);
    }
    const double u_mean = (untrained[0] + untrained[1] + untrained[2]) / 3.0;
    const double t_mean = (trained[0] + trained[1] + trained[2]) / 3.0;
    {
        std::ostringstream line;
        line << "untrained ood_top1 mean=" << u_mean << " trained mean=" << t_mean;
        c.note(line.str());
    }
    c.expect(std::fabs(u_mean - chance) <= 0.05, "untrained OOD accuracy equals chance +/- 0.05");
    c.expect(t_mean >= chance + 0.15, "trained OOD accuracy >= chance + 0.15");
    return c.ok;
}

bool criterion5(Checker& c) {
    const Benchmark bench = default_benchmark();
    TrainConfig cfg = default_config(16, 0);
    const std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
    const auto rows = run_ablation(bench, 16, seeds, cfg, 3);

    c.expect(rows.size() == 9, "nine ablation rows");
    const double full_mean = rows[0].mean;
    for (const auto& r : rows) {
        std::ostringstream line;
        line << r.variant << " mean=" << r.mean << " drop=" << r.drop;
        c.note(line.str());
        c.expect(full_mean >= r.mean, "full >= " + r.variant);
    }

    std::map<std::string, double> drops;
    for (const auto& r : rows) drops[r.variant] = r.drop;
    const double nom_drop = drops.at("no_nominal_unit");
    for (const std::string removal :
         {"no_visual_unit", "no_linguistic_unit", "no_coordinator_unit"})
        c.expect(nom_drop >= drops.at(removal),
                 "nominal-unit removal has the largest drop among agent removals (vs " + removal + ")");
    return c.ok;
}

bool criterion6(Checker& c) {
    const Benchmark bench = default_benchmark();
    std::vector<double> untrained_sc, trained_sc;
    for (uint64_t seed : {0, 1, 2}) {
        TrainConfig cfg = default_config(16, seed);
        const DatasetSplit split = make_split(bench, 16, seed);
        TrainConfig baseline = cfg;
        baseline.ablation.no_nom = true;
        AdapterParams fresh = init_adapter(bench, cfg.adapter, seed);
        untrained_sc.push_back(
            evaluate(bench, split, fresh, VocabularyMode::Composite, baseline).sc_top1);
        TrainResult tr = train_few_shot(bench, split, cfg);
        trained_sc.push_back(
            evaluate(bench, split, tr.params, VocabularyMode::Composite, cfg).sc_top1);
    }
    const double u = (untrained_sc[0] + untrained_sc[1] + untrained_sc[2]) / 3.0;
    const double t = (trained_sc[0] + trained_sc[1] + trained_sc[2]) / 3.0;
    {
        std::ostringstream line;
        line << "sc_top1 untrained=" << u << " trained=" << t;
        c.note(line.str());
    }
    c.expect(t >= 0.9 * u, "composite SC accuracy retained within 0.9x of untrained");
    return c.ok;
}

bool criterion7(Checker& c) {
    const Benchmark bench = default_benchmark();
    std::vector<double> k1, k16;
    for (uint64_t seed : {0, 1, 2}) {
        k1.push_back(train_eval_ood(bench, 1, seed));
        k16.push_back(train_eval_ood(bench, 16, seed));
    }
    const SeedAggregate a1 = aggregate({0, 1, 2}, k1);
    const SeedAggregate a16 = aggregate({0, 1, 2}, k16);
    const double pooled =
        std::sqrt((a1.stddev * a1.stddev + a16.stddev * a16.stddev) / 2.0);
    {
        std::ostringstream line;
        line << "K=1 mean=" << a1.mean << " (std " << a1.stddev << "), K=16 mean=" << a16.mean
             << " (std " << a16.stddev << "), pooled std=" << pooled;
        c.note(line.str());
    }
    c.expect(a16.mean - a1.mean >= pooled, "K=16 exceeds K=1 by at least one pooled std");
    return c.ok;
}

bool criterion8(Checker& c) {
    const Benchmark bench = default_benchmark();
    TrainConfig cfg = default_config(4, 1);
    const DatasetSplit split = make_split(bench, 4, 1);

    const std::string backbone_before = bench.encoders.content_hash(bench.vocab);
    TrainResult a = train_few_shot(bench, split, cfg);
    TrainResult b = train_few_shot(bench, split, cfg);
    c.expect(a.adapter_hash == b.adapter_hash, "identical adapter hashes across reruns");

    const EvalReport ra = evaluate(bench, split, a.params, VocabularyMode::Composite, cfg);
    const EvalReport rb = evaluate(bench, split, b.params, VocabularyMode::Composite, cfg);
    c.expect(ra.composite_top1 == rb.composite_top1 && ra.ood_top1 == rb.ood_top1 &&
                 ra.sc_top1 == rb.sc_top1,
             "bit-identical accuracy fields");
    c.expect(ra.per_class == rb.per_class, "bit-identical per-class accuracies");
    c.expect(bench.encoders.content_hash(bench.vocab) == backbone_before,
             "frozen backbone hash unchanged");
    c.expect(a.backbone_hash == backbone_before, "training observed the same backbone hash");

    // end to end through the CLI: two identical runs write byte-identical
    // report.json files
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "synernet_accept_c8";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string ds = (root / "ds").string();
    c.expect(dispatch({"synth", "--out", ds, "--seed", "7"}) == 0, "synth exits 0");
    for (const char* run : {"runA", "runB"})
        c.expect(dispatch({"train", "--data", ds, "--K", "4", "--seed", "1", "--out",
                           (root / run).string()}) == 0,
                 "train exits 0");
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    const std::string ja = slurp(root / "runA" / "report.json");
    const std::string jb = slurp(root / "runB" / "report.json");
    c.expect(!ja.empty() && ja == jb, "byte-identical report.json across reruns");
    fs::remove_all(root);
    return c.ok;
}

bool criterion9(Checker& c) {
    const Benchmark bench = default_benchmark();
    TrainConfig cfg = default_config(4, 0);
    AdapterParams params = init_adapter(bench, cfg.adapter, 0);
    const DatasetSplit split = make_split(bench, 4, 0);
    const TrainBatch batch = batch_from_split(split);

    MessageBus bus;
    for (AgentId id : {AgentId::Visual, AgentId::Linguistic, AgentId::Nominal, AgentId::Coordinator})
        bus.register_agent(id);
    AgentSet agents(params.view(), bench.encoders, bench.vocab, cfg.ablation, false);
    gc_coordinate(bus, agents, bench, batch, 0);

    // conservation: every post drained exactly once, trace holds each once
    c.expect(bus.posted_count() == bus.trace().size(), "trace length equals posted count");
    c.expect(bus.drained_count() == bus.posted_count(), "every message drained exactly once");
    for (AgentId id : {AgentId::Visual, AgentId::Linguistic, AgentId::Nominal, AgentId::Coordinator})
        c.expect(bus.drain(id).empty(), "no undrained messages remain");

    // replay from the serialized trace reproduces the embeddings bit-exactly
    const auto trace = trace_from_jsonl(trace_to_jsonl(bus.trace()));
    const ReplayResult replay = replay_round(trace, params, bench, cfg);
    const FeaturesPayload* traced_visual = nullptr;
    const FeaturesPayload* traced_text = nullptr;
    for (const auto& m : trace) {
        if (m.sender == AgentId::Visual && m.receiver == AgentId::Coordinator)
            if (const auto* f = std::get_if<FeaturesPayload>(&m.payload)) traced_visual = f;
        if (m.sender == AgentId::Linguistic && m.receiver == AgentId::Coordinator)
            if (const auto* f = std::get_if<FeaturesPayload>(&m.payload)) traced_text = f;
    }
    c.expect(traced_visual && traced_text, "trace carries both feature payloads");
    if (traced_visual && traced_text) {
        bool exact = replay.visual_features.size() == traced_visual->features.size() &&
                     replay.text_features.size() == traced_text->features.size();
        if (exact) {
            for (size_t i = 0; i < replay.visual_features.size(); ++i)
                exact = exact &&
                        replay.visual_features[i].values == traced_visual->features[i].values;
            for (size_t i = 0; i < replay.text_features.size(); ++i)
                exact = exact && replay.text_features[i].values == traced_text->features[i].values;
        }
        c.expect(exact, "replayed embeddings are bit-exact");
    }
    return c.ok;
}

bool criterion10(Checker& c) {
    const std::vector<PromptTemplate> bank = {
        {"a photo of {}", "ada"}, {"a painting of {}", "bix"}, {"a sketch of {}", "cor"}};
    const auto pairs = neu_context_exchange({"ada", "bix", "cor"}, bank);
    c.expect(pairs.size() == 9, "exactly 9 descriptions for 3 concepts x 1 template");

    std::set<std::pair<std::string, std::string>> got(pairs.begin(), pairs.end());
    const std::vector<std::pair<std::string, std::string>> swaps = {
        {"ada", "a painting of ada"}, {"ada", "a sketch of ada"},
        {"bix", "a photo of bix"},    {"bix", "a sketch of bix"},
        {"cor", "a photo of cor"},    {"cor", "a painting of cor"}};
    for (const auto& sw : swaps)
        c.expect(got.count(sw) == 1, "swapped description present: " + sw.second);
    return c.ok;
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<std::string, std::function<bool(Checker&)>>> criteria = {
        {1, {"equation unit identities", criterion1}},
        {2, {"clip semantics for temperature and balance weights", criterion2}},
        {3, {"gradient fidelity against central finite differences", criterion3}},
        {4, {"collapse at chance and repair after 16-shot training", criterion4}},
        {5, {"ablation table ordering with nominal unit most critical", criterion5}},
        {6, {"no catastrophic forgetting of seen concepts", criterion6}},
        {7, {"shot-count monotonicity from K=1 to K=16", criterion7}},
        {8, {"determinism and frozen-backbone invariance", criterion8}},
        {9, {"message conservation and bit-exact trace replay", criterion9}},
        {10, {"context-exchange combinatorics", criterion10}},
    };

    std::vector<int> which;
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
    if (which.empty())
        for (const auto& [k, v] : criteria) which.push_back(k);

    bool all_ok = true;
    for (int k : which) {
        auto it = criteria.find(k);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion: " << k << "\n";
            return 2;
        }
        Checker c;
        bool ok = false;
        try {
            ok = it->second.second(c);
        } catch (const std::exception& e) {
            c.detail << "    exception: " << e.what() << "\n";
            ok = false;
        }
        std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << k << ": " << it->second.first
                  << "\n";
        if (!ok || k == 5 || k == 3) std::cout << c.detail.str();
        all_ok = all_ok && ok;
    }
    return all_ok ? 0 : 1;
}
