#include "synernet/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

namespace synernet {

using nlohmann::json;

SeedAggregate aggregate(const std::vector<uint64_t>& seeds, const std::vector<double>& values) {
    SeedAggregate a;
    a.seeds = seeds;
    a.values = values;
    if (values.empty()) return a;
    for (double v : values) a.mean += v;
    a.mean /= double(values.size());
    if (values.size() > 1) {
        double acc = 0.0;
        for (double v : values) acc += (v - a.mean) * (v - a.mean);
        a.stddev = std::sqrt(acc / double(values.size() - 1));
    }
    return a;
}

TrainBatch batch_from_split(const DatasetSplit& split) {
    TrainBatch b;
    for (const auto& [id, c] : split.train) {
        b.sample_ids.push_back(id);
        b.class_ids.push_back(c);
    }
    return b;
}

// ---------------------------------------------------------------------------
// One training step: coordination round + losses + analytic backward
// ---------------------------------------------------------------------------

StepEval eval_train_step(const Benchmark& benchmark, const TrainBatch& batch, AdapterParams& params,
                         const TrainConfig& config, AdapterParams* grads, int step_index,
                         AgentSet* agents) {
    MessageBus bus;
    for (AgentId id : {AgentId::Visual, AgentId::Linguistic, AgentId::Nominal, AgentId::Coordinator})
        bus.register_agent(id);
    AgentSet local(params.view(), benchmark.encoders, benchmark.vocab, config.ablation,
                   config.per_sample_difficulty);
    AgentSet& set = agents ? *agents : local;

    StepEval ev;
    ev.outputs = gc_coordinate(bus, set, benchmark, batch, step_index);
    StepOutputs& so = ev.outputs;

    const size_t n_classes = so.text.size();

    // Class visual prototypes keep the contrastive matrix square when a
    // class contributes several shots: the image row for a class is the mean
    // of its normalized features.
    std::vector<Vec> proto_norm(n_classes);
    std::vector<size_t> proto_count(n_classes, 0);
    for (size_t c = 0; c < n_classes; ++c) proto_norm[c] = Vec(benchmark.config.d_embed, 0.0);
    for (size_t i = 0; i < so.visual_features.size(); ++i) {
        const int label = so.labels[i];
        axpy(proto_norm[size_t(label)], 1.0, normalized(so.visual_features[i].values));
        proto_count[size_t(label)] += 1;
    }
    std::vector<Embedding> protos(n_classes);
    for (size_t c = 0; c < n_classes; ++c) {
        if (proto_count[c] == 0) fail(Errc::invalid_argument, "class without samples in batch");
        for (double& x : proto_norm[c]) x /= double(proto_count[c]);
        protos[c].values = proto_norm[c];
        protos[c].modality = Modality::Visual;
        protos[c].normalized = false;
    }

    std::vector<Embedding> text_feats(n_classes);
    for (size_t c = 0; c < n_classes; ++c) {
        text_feats[c].values = so.text[c].feature;
        text_feats[c].modality = Modality::Text;
        text_feats[c].normalized = false;
    }

    const SimilarityMatrix sim = similarity_matrix(protos, text_feats);
    const ContrastiveResult con = contrastive_loss(sim, so.kappa);
    const ClassificationResult cls =
        classification_loss(so.encoder_features, so.labels, params.cls_head);
    ev.bundle = total_loss(con.loss, cls.loss, so.w_con, so.w_cls, so.kappa);
    ev.trace = bus.trace();

    if (!grads) return ev;

    // --- backward ---
    const AblationFlags& fl = config.ablation;
    const double w_con = so.w_con;
    const double w_cls = so.w_cls;

    // classifier head
    for (size_t i = 0; i < grads->cls_head.data.size(); ++i)
        grads->cls_head.data[i] += w_cls * cls.d_head.data[i];

    // temperature and balance parameters
    if (!fl.no_coord) {
        grads->coordinator.kappa_param +=
            w_con * con.d_kappa * gc_temperature_grad(params.coordinator.kappa_param);
        if (!fl.no_dynbal) {
            const BalanceWeights bw =
                balance_weights(params.coordinator.w_con_param, params.coordinator.w_cls_param);
            grads->coordinator.w_con_param +=
                con.loss * bw.d_wcon_d_p + cls.loss * bw.d_wcls_d_p;
            grads->coordinator.w_cls_param +=
                con.loss * bw.d_wcon_d_q + cls.loss * bw.d_wcls_d_q;
        }
    }

    // similarity -> per-class text feature
    std::vector<Vec> vhat(n_classes), that(n_classes);
    std::vector<double> tlen(n_classes);
    for (size_t c = 0; c < n_classes; ++c) {
        vhat[c] = normalized(protos[c].values);
        tlen[c] = norm2(text_feats[c].values);
        that[c] = text_feats[c].values;
        for (double& x : that[c]) x /= tlen[c];
    }

    const double lambda = params.linguistic.lambda;
    for (size_t j = 0; j < n_classes; ++j) {
        Vec acc(benchmark.config.d_embed, 0.0);
        for (size_t i = 0; i < n_classes; ++i)
            axpy(acc, w_con * con.d_sim[i * n_classes + j], vhat[i]);
        // through the column normalization: dt = (acc - that <that,acc>)/‖t‖
        const double proj = dot(that[j], acc);
        Vec d_feature(acc.size());
        for (size_t k = 0; k < acc.size(); ++k)
            d_feature[k] = (acc[k] - that[j][k] * proj) / tlen[j];

        const auto& cls_cache = so.text[j];
        const double desc_scale = 1.0 / double(cls_cache.descriptions.size());
        for (const auto& desc : cls_cache.descriptions) {
            Vec g(d_feature);
            for (double& x : g) x *= desc_scale;

            Vec d_psi(g.size(), 0.0);
            if (desc.lcu.contextual) {
                if (desc.lcu.simple_concat) {
                    const double f = lambda + (1.0 - lambda) * 0.5;
                    for (size_t k = 0; k < g.size(); ++k) d_psi[k] = f * g[k];
                } else {
                    for (size_t k = 0; k < g.size(); ++k) d_psi[k] = lambda * g[k];
                    Vec d_g(g);
                    for (double& x : d_g) x *= (1.0 - lambda);
                    Vec d_h(desc.lcu.concat_input.size(), 0.0);
                    ctx_integrate_backward_into(desc.lcu.ctx, params.linguistic, d_g,
                                                grads->linguistic.theta3, grads->linguistic.b3,
                                                grads->linguistic.theta4, grads->linguistic.b4, d_h);
                    for (size_t k = 0; k < d_psi.size(); ++k) d_psi[k] += d_h[k];
                    // second half of d_h is the visual context: frozen upstream
                }
            } else {
                d_psi = g;
            }

            if (desc.concept_index >= 0 && !fl.no_nom && !desc.name_positions.empty()) {
                const Vec dm = benchmark.encoders.encode_text_backward_mean(desc.lcu.text, d_psi);
                Mat& concept_grad = grads->names.concepts[size_t(desc.concept_index)].vectors;
                const double share = double(desc.name_positions.size()) /
                                     (double(desc.token_count) * double(concept_grad.rows));
                for (size_t r = 0; r < concept_grad.rows; ++r)
                    for (size_t k = 0; k < concept_grad.cols; ++k)
                        concept_grad.at(r, k) += share * dm[k];
            }
        }
    }

    return ev;
}

// ---------------------------------------------------------------------------
// train_few_shot
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<Vec> m;
    std::vector<Vec> v;
};

static double cosine_lr(double base, int step, int total) {
    if (total <= 1) return base;
    return base * 0.5 * (1.0 + std::cos(M_PI * double(step) / double(total)));
}

static TrainResult train_single(const Benchmark& benchmark, const DatasetSplit& split,
                                const TrainConfig& config, double lr) {
    TrainResult result;
    result.lr_used = lr;
    result.backbone_hash = benchmark.encoders.content_hash(benchmark.vocab);

    result.params = init_adapter(benchmark, config.adapter, config.seed);
    AdapterParams& params = result.params;
    const TrainBatch batch = batch_from_split(split);
    AgentSet agents(params.view(), benchmark.encoders, benchmark.vocab, config.ablation,
                    config.per_sample_difficulty);

    auto blocks = param_blocks(params);
    AdamState adam;
    adam.m.resize(blocks.size());
    adam.v.resize(blocks.size());
    for (size_t b = 0; b < blocks.size(); ++b) {
        adam.m[b] = Vec(blocks[b].size, 0.0);
        adam.v[b] = Vec(blocks[b].size, 0.0);
    }
    // double-precision training: the fp32-era 1e-8 epsilon would dominate
    // small late-stage second moments
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-12;

    for (int step = 0; step < config.epochs; ++step) {
        AdapterParams grads = zero_like(params);
        StepEval ev;
        try {
            ev = eval_train_step(benchmark, batch, params, config, &grads, step, &agents);
        } catch (const Error& e) {
            if (e.code() == Errc::numeric)
                fail(Errc::numeric, "training aborted at step " + std::to_string(step) + ": " + e.what());
            throw;
        }
        if (step == 0) {
            result.initial_loss = ev.bundle.j_total;
            result.first_step_trace = ev.trace;
        }
        if (step == config.epochs - 1) params.train_context = ev.outputs.visual_context;

        const double lr_t = cosine_lr(lr, step, config.epochs);
        auto gblocks = param_blocks(grads);
        for (size_t b = 0; b < blocks.size(); ++b) {
            // The balance scalars follow the raw gradient flow. Adam's
            // sign-normalized steps drive their denominator into a runaway
            // (the weights decay toward zero at full learning-rate speed no
            // matter how small the gradient gets), which is an optimizer
            // artifact rather than a property of the weighting equations.
            const bool plain_gd = blocks[b].name == "coordinator.w_con_param" ||
                                  blocks[b].name == "coordinator.w_cls_param";
            Vec& m = adam.m[b];
            Vec& v = adam.v[b];
            const double bc1 = 1.0 - std::pow(beta1, double(step + 1));
            const double bc2 = 1.0 - std::pow(beta2, double(step + 1));
            for (size_t i = 0; i < blocks[b].size; ++i) {
                const double g = gblocks[b].data[i];
                if (plain_gd) {
                    blocks[b].data[i] -= lr_t * (g + config.weight_decay * blocks[b].data[i]);
                    continue;
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                blocks[b].data[i] -= lr_t * (mh / (std::sqrt(vh) + eps) +
                                             config.weight_decay * blocks[b].data[i]);
            }
        }

        result.log.push_back(StepRecord{step, ev.bundle, lr_t});
        result.final_loss = ev.bundle.j_total;
    }

    const std::string after = benchmark.encoders.content_hash(benchmark.vocab);
    if (after != result.backbone_hash)
        fail(Errc::frozen_violation, "frozen backbone hash changed during training");
    result.adapter_hash = adapter_content_hash(params);
    return result;
}

TrainResult train_few_shot(const Benchmark& benchmark, const DatasetSplit& split,
                           const TrainConfig& config) {
    if (split.K != config.K)
        fail(Errc::invalid_argument, "split K does not match config K");
    if (!config.lr_grid.empty()) {
        for (double lr : config.lr_grid)
            if (lr < 1e-5 || lr > 1e-3)
                fail(Errc::invalid_argument, "grid lr outside [1e-5, 1e-3]");
        TrainResult best;
        bool have = false;
        for (double lr : config.lr_grid) {
            TrainResult r = train_single(benchmark, split, config, lr);
            if (!have || r.final_loss < best.final_loss) {
                best = std::move(r);
                have = true;
            }
        }
        return best;
    }
    return train_single(benchmark, split, config, config.lr);
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

EvalReport accuracy_from_predictions(const Benchmark& benchmark,
                                     const std::vector<std::pair<size_t, size_t>>& samples,
                                     const std::vector<size_t>& predicted_class_ids,
                                     VocabularyMode mode) {
    if (samples.size() != predicted_class_ids.size())
        fail(Errc::invalid_argument, "predictions/samples size mismatch");
    EvalReport rep;
    rep.mode = mode;
    rep.n_samples = samples.size();

    std::map<std::string, std::pair<size_t, size_t>> per_class;  // correct, total
    size_t ood_correct = 0, ood_total = 0, sc_correct = 0, sc_total = 0, all_correct = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const size_t true_class = samples[i].second;
        const bool correct = predicted_class_ids[i] == true_class;
        auto& pc = per_class[benchmark.classes[true_class].name];
        pc.second += 1;
        if (correct) pc.first += 1;
        if (benchmark.classes[true_class].tag == ClassTag::Ood) {
            ood_total += 1;
            if (correct) ood_correct += 1;
        } else {
            sc_total += 1;
            if (correct) sc_correct += 1;
        }
        if (correct) all_correct += 1;
    }
    for (auto& [name, counts] : per_class)
        rep.per_class[name] = double(counts.first) / double(counts.second);
    rep.ood_top1 = ood_total ? double(ood_correct) / double(ood_total) : -1.0;
    rep.sc_top1 = sc_total ? double(sc_correct) / double(sc_total) : -1.0;
    rep.composite_top1 = samples.empty() ? 0.0 : double(all_correct) / double(samples.size());
    return rep;
}

struct EvalTextSide {
    std::vector<size_t> vocab_class_ids;
    std::vector<Embedding> text;
};

static EvalTextSide eval_text_side(const Benchmark& benchmark, AdapterParams& params,
                                   VocabularyMode mode, const TrainConfig& config,
                                   const std::optional<Vec>& context) {
    const AblationFlags& fl = config.ablation;
    EvalTextSide out;
    for (size_t c = 0; c < benchmark.n_classes(); ++c) {
        if (mode == VocabularyMode::OodOnly && benchmark.classes[c].tag != ClassTag::Ood) continue;
        out.vocab_class_ids.push_back(c);
    }

    const PromptTemplate canon = canonical_template();
    const bool contextual = context.has_value() && !fl.no_ling && !fl.no_visual;
    for (size_t c : out.vocab_class_ids) {
        const std::string& name = benchmark.classes[c].name;
        // SEEN prompts stay on the pretrained zero-shot path; only OOD
        // prompts run through the adapted pipeline.
        if (benchmark.classes[c].tag == ClassTag::Seen) {
            const PromptBuild build = build_vocab_prompt(name, canon, benchmark.vocab);
            out.text.push_back(benchmark.encoders.encode_text(build.token_vectors));
            continue;
        }
        PromptBuild build;
        if (!fl.no_nom && params.names.has_concept(name))
            build = neu_generate_prompt(name, params.names, canon, benchmark.vocab);
        else
            build = build_vocab_prompt(name, canon, benchmark.vocab);
        Embedding e = lcu_encode(build.token_vectors,
                                 contextual ? TextMode::Contextual : TextMode::Standard, context,
                                 params.linguistic, benchmark.encoders, fl.simple_concat, nullptr);
        out.text.push_back(std::move(e));
    }
    return out;
}

EvalReport evaluate(const Benchmark& benchmark, const DatasetSplit& split, AdapterParams& params,
                    VocabularyMode mode, const TrainConfig& config, const FeatureProvider* provider) {
    std::vector<std::pair<size_t, size_t>> samples;
    for (const auto& [id, c] : split.test) {
        if (mode == VocabularyMode::OodOnly && benchmark.classes[c].tag != ClassTag::Ood) continue;
        samples.emplace_back(id, c);
    }
    if (samples.empty()) fail(Errc::invalid_argument, "evaluate: no test samples for mode");

    EncoderFeatureProvider default_provider(benchmark.encoders, benchmark.samples,
                                            benchmark.config.d_raw);
    const FeatureProvider& feats = provider ? *provider : default_provider;

    std::vector<Embedding> visual(samples.size());
    Vec batch_context(benchmark.config.d_embed, 0.0);
    for (size_t i = 0; i < samples.size(); ++i) {
        visual[i] = feats.visual(samples[i].first);
        axpy(batch_context, 1.0, normalized(visual[i].values));
    }
    for (double& x : batch_context) x /= double(samples.size());

    // Fusion consumes the context remembered from training when there is
    // one; an adapter that never trained falls back to the batch context.
    const Vec& context = params.train_context.empty() ? batch_context : params.train_context;
    const EvalTextSide text =
        eval_text_side(benchmark, params, mode, config, std::optional<Vec>(context));
    if (text.text.empty()) fail(Errc::invalid_argument, "evaluate: empty vocabulary");

    const double kappa =
        config.ablation.no_coord ? 1.0 : gc_temperature(params.coordinator.kappa_param);

    const SimilarityMatrix sim = similarity_matrix(visual, text.text);
    std::vector<size_t> predictions(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        Vec row(sim.s.begin() + long(i * sim.m), sim.s.begin() + long((i + 1) * sim.m));
        const Vec probs = zero_shot_probs(row, kappa);
        size_t best = 0;
        for (size_t j = 1; j < probs.size(); ++j)
            if (probs[j] > probs[best]) best = j;
        predictions[i] = text.vocab_class_ids[best];
    }

    EvalReport rep = accuracy_from_predictions(benchmark, samples, predictions, mode);
    rep.backbone_hash = benchmark.encoders.content_hash(benchmark.vocab);
    return rep;
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

const std::vector<std::string>& ablation_variant_names() {
    static const std::vector<std::string> names = {
        "full",        "no_visual_unit", "no_linguistic_unit", "no_nominal_unit",
        "no_coordinator_unit", "no_context_exchange", "simple_concat", "no_difficulty_assessment",
        "no_dynamic_balancing",
    };
    return names;
}

static AblationFlags flags_for_variant(const std::string& variant) {
    AblationFlags f;
    if (variant == "full") return f;
    if (variant == "no_visual_unit") f.no_visual = true;
    else if (variant == "no_linguistic_unit") f.no_ling = true;
    else if (variant == "no_nominal_unit") f.no_nom = true;
    else if (variant == "no_coordinator_unit") f.no_coord = true;
    else if (variant == "no_context_exchange") f.no_ctx_exch = true;
    else if (variant == "simple_concat") f.simple_concat = true;
    else if (variant == "no_difficulty_assessment") f.no_diff = true;
    else if (variant == "no_dynamic_balancing") f.no_dynbal = true;
    else fail(Errc::invalid_argument, "unknown ablation variant: " + variant);
    return f;
}

static std::vector<double> run_variant(const Benchmark& benchmark, int K,
                                       const std::vector<uint64_t>& seeds, TrainConfig config) {
    std::vector<double> out;
    for (uint64_t seed : seeds) {
        config.seed = seed;
        const DatasetSplit split = make_split(benchmark, K, seed);
        TrainResult tr = train_few_shot(benchmark, split, config);
        EvalReport rep = evaluate(benchmark, split, tr.params, VocabularyMode::Composite, config);
        out.push_back(rep.composite_top1);
    }
    return out;
}

std::vector<AblationRow> run_ablation(const Benchmark& benchmark, int K,
                                      const std::vector<uint64_t>& seeds,
                                      const TrainConfig& base_config, int jobs) {
    const auto& variants = ablation_variant_names();
    std::vector<std::future<std::vector<double>>> futures(variants.size());
    std::vector<std::vector<double>> results(variants.size());

    const auto launch = jobs > 1 ? std::launch::async : std::launch::deferred;
    for (size_t i = 0; i < variants.size(); ++i) {
        TrainConfig cfg = base_config;
        cfg.K = K;
        cfg.ablation = flags_for_variant(variants[i]);
        futures[i] = std::async(launch, run_variant, std::cref(benchmark), K, std::cref(seeds), cfg);
    }
    for (size_t i = 0; i < variants.size(); ++i) results[i] = futures[i].get();

    std::vector<AblationRow> rows(variants.size());
    SeedAggregate full_agg = aggregate(seeds, results[0]);
    for (size_t i = 0; i < variants.size(); ++i) {
        SeedAggregate agg = aggregate(seeds, results[i]);
        rows[i].variant = variants[i];
        rows[i].mean = agg.mean;
        rows[i].stddev = agg.stddev;
        rows[i].drop = full_agg.mean - agg.mean;
        rows[i].per_seed = results[i];
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "variant,mean_composite_top1,std,drop_vs_full\n";
    for (const auto& r : rows)
        out << r.variant << ',' << r.mean << ',' << r.stddev << ',' << r.drop << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

static TrainBatch gradcheck_batch(const Benchmark& benchmark, uint64_t seed) {
    TrainBatch batch;
    Rng rng(derive_seed(seed, 0x67636261ULL));
    const auto ood = benchmark.ood_class_ids();
    const size_t n = std::min<size_t>(8, ood.size());
    for (size_t i = 0; i < n; ++i) {
        const size_t c = ood[i];
        const size_t pick = rng.index(benchmark.classes[c].n_samples);
        batch.sample_ids.push_back(benchmark.class_offsets[c] + pick);
        batch.class_ids.push_back(c);
    }
    return batch;
}

GradCheckReport grad_check(AdapterParams& params, const Benchmark& benchmark,
                           const TrainConfig& config, double tolerance, uint64_t batch_seed) {
    const TrainBatch batch = gradcheck_batch(benchmark, batch_seed);

    AdapterParams grads = zero_like(params);
    eval_train_step(benchmark, batch, params, config, &grads);

    auto pblocks = param_blocks(params);
    auto gblocks = param_blocks(grads);

    GradCheckReport report;
    report.tolerance = tolerance;
    const double h = 1e-5;
    for (size_t b = 0; b < pblocks.size(); ++b) {
        GradCheckGroup group;
        group.group = pblocks[b].name;
        group.param_count = pblocks[b].size;
        for (size_t i = 0; i < pblocks[b].size; ++i) {
            const double saved = pblocks[b].data[i];
            pblocks[b].data[i] = saved + h;
            const double jp = eval_train_step(benchmark, batch, params, config, nullptr).bundle.j_total;
            pblocks[b].data[i] = saved - h;
            const double jm = eval_train_step(benchmark, batch, params, config, nullptr).bundle.j_total;
            pblocks[b].data[i] = saved;

            const double fd = (jp - jm) / (2.0 * h);
            const double an = gblocks[b].data[i];
            const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-4});
            group.max_rel_err = std::max(group.max_rel_err, rel);
            group.max_abs_analytic = std::max(group.max_abs_analytic, std::fabs(an));
        }
        report.max_rel_err = std::max(report.max_rel_err, group.max_rel_err);
        report.groups.push_back(group);
    }
    report.passed = report.max_rel_err < tolerance;
    return report;
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

ReplayResult replay_round(const std::vector<Message>& trace, AdapterParams& params,
                          const Benchmark& benchmark, const TrainConfig& config) {
    AgentSet agents(params.view(), benchmark.encoders, benchmark.vocab, config.ablation,
                    config.per_sample_difficulty);

    auto inbox_of = [&](AgentId id) {
        std::vector<Message> inbox;
        for (const auto& m : trace)
            if (m.receiver == id) inbox.push_back(m);
        return inbox;
    };

    ReplayResult out;
    auto [vout, vstate] = agents.visual.step(inbox_of(AgentId::Visual), agents.visual_state, 0);
    out.visual_features = vout.visual_features;
    auto [lout, lstate] =
        agents.linguistic.step(inbox_of(AgentId::Linguistic), agents.linguistic_state, 0);
    for (const auto& cls : lout.text) {
        Embedding e;
        e.values = cls.feature;
        e.modality = Modality::Text;
        e.normalized = false;
        out.text_features.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

void write_training_log(const std::vector<StepRecord>& log, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(Errc::io, "cannot write " + path);
    f << loss_bundle_csv_header() << "\n";
    for (const auto& r : log) f << loss_bundle_csv_row(r.step, r.bundle) << "\n";
}

void dump_embeddings(const Benchmark& benchmark, const DatasetSplit& split, AdapterParams& params,
                     const TrainConfig& config, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<float> rows;
    json index = json::array();

    Vec context(benchmark.config.d_embed, 0.0);
    std::vector<Embedding> visual;
    for (const auto& [id, c] : split.test) {
        Embedding e = benchmark.encoders.encode_image(benchmark.sample_copy(id));
        axpy(context, 1.0, normalized(e.values));
        visual.push_back(std::move(e));
    }
    for (double& x : context) x /= double(split.test.size());
    if (!params.train_context.empty()) context = params.train_context;

    for (size_t i = 0; i < split.test.size(); ++i) {
        for (double x : visual[i].values) rows.push_back(float(x));
        index.push_back({{"row", i},
                         {"kind", "visual"},
                         {"class", benchmark.classes[split.test[i].second].name},
                         {"sample_id", split.test[i].first}});
    }
    const EvalTextSide text = eval_text_side(benchmark, params, VocabularyMode::Composite, config,
                                             std::optional<Vec>(context));
    for (size_t j = 0; j < text.text.size(); ++j) {
        for (double x : text.text[j].values) rows.push_back(float(x));
        index.push_back({{"row", split.test.size() + j},
                         {"kind", "text"},
                         {"class", benchmark.classes[text.vocab_class_ids[j]].name}});
    }

    std::ofstream bf(dir + "/embeddings_dump.f32", std::ios::binary | std::ios::trunc);
    bf.write(reinterpret_cast<const char*>(rows.data()), std::streamsize(rows.size() * sizeof(float)));
    std::ofstream jf(dir + "/embeddings_index.json", std::ios::trunc);
    jf << index.dump(2) << "\n";
}

}  // namespace synernet
