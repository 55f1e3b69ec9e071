#include "synernet/agents.hpp"

#include <algorithm>
#include <sstream>

#include "synernet/objectives.hpp"

namespace synernet {

// ---------------------------------------------------------------------------
// Ablation flags
// ---------------------------------------------------------------------------

AblationFlags ablation_from_names(const std::vector<std::string>& names) {
    AblationFlags f;
    for (const auto& n : names) {
        if (n == "NO_VISUAL") f.no_visual = true;
        else if (n == "NO_LING") f.no_ling = true;
        else if (n == "NO_NOM") f.no_nom = true;
        else if (n == "NO_COORD") f.no_coord = true;
        else if (n == "NO_CTX_EXCH") f.no_ctx_exch = true;
        else if (n == "SIMPLE_CONCAT") f.simple_concat = true;
        else if (n == "NO_DIFF") f.no_diff = true;
        else if (n == "NO_DYNBAL") f.no_dynbal = true;
        else fail(Errc::invalid_argument, "unknown ablation flag: " + n);
    }
    return f;
}

std::vector<std::string> ablation_to_names(const AblationFlags& f) {
    std::vector<std::string> out;
    if (f.no_visual) out.push_back("NO_VISUAL");
    if (f.no_ling) out.push_back("NO_LING");
    if (f.no_nom) out.push_back("NO_NOM");
    if (f.no_coord) out.push_back("NO_COORD");
    if (f.no_ctx_exch) out.push_back("NO_CTX_EXCH");
    if (f.simple_concat) out.push_back("SIMPLE_CONCAT");
    if (f.no_diff) out.push_back("NO_DIFF");
    if (f.no_dynbal) out.push_back("NO_DYNBAL");
    return out;
}

// ---------------------------------------------------------------------------
// NameTable
// ---------------------------------------------------------------------------

bool NameTable::has_concept(const std::string& name) const {
    for (const auto& c : concepts)
        if (c.name == name) return true;
    return false;
}

size_t NameTable::concept_index(const std::string& name) const {
    for (size_t i = 0; i < concepts.size(); ++i)
        if (concepts[i].name == name) return i;
    fail(Errc::invalid_argument, "concept not in name table: " + name);
}

Vec NameTable::concept_mean(size_t index) const {
    const Mat& vs = concepts.at(index).vectors;
    Vec mean(vs.cols, 0.0);
    for (size_t r = 0; r < vs.rows; ++r)
        for (size_t c = 0; c < vs.cols; ++c) mean[c] += vs.at(r, c);
    for (double& x : mean) x /= double(vs.rows);
    return mean;
}

const PromptTemplate& NameTable::template_of(const std::string& owner) const {
    for (const auto& t : template_bank)
        if (t.owner_concept && *t.owner_concept == owner) return t;
    fail(Errc::invalid_argument, "no template owned by concept: " + owner);
}

// ---------------------------------------------------------------------------
// Visual Perception Unit
// ---------------------------------------------------------------------------

Vec vpu_robust_from_feature(const Vec& e, double beta) {
    const double len = norm2(e);
    if (len == 0.0)
        fail(Errc::degenerate, "robust encoding of a zero-norm visual feature");
    Vec out(e.size());
    for (size_t i = 0; i < e.size(); ++i) out[i] = e[i] / len + beta * e[i];
    return out;
}

Embedding vpu_encode(const std::vector<float>& raw, VisualMode mode, const VisualUnitParams& params,
                     const FrozenEncoders& enc) {
    Embedding e = enc.encode_image(raw);
    if (mode == VisualMode::Standard) return e;
    Embedding out;
    out.modality = Modality::Visual;
    out.values = vpu_robust_from_feature(e.values, params.beta);
    out.normalized = params.beta == 0.0;
    return out;
}

Mat vpu_robust_jacobian(const Vec& e) {
    // The residual term is detached, so this is d(e/‖e‖)/de.
    const double len = norm2(e);
    if (len == 0.0) fail(Errc::degenerate, "jacobian of a zero-norm feature");
    const size_t n = e.size();
    Mat j(n, n);
    for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < n; ++c) {
            const double kron = r == c ? 1.0 : 0.0;
            j.at(r, c) = (kron - e[r] * e[c] / (len * len)) / len;
        }
    return j;
}

static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

static double difficulty_of(const Vec& feat, const VisualUnitParams& p) {
    Vec u = matvec(p.theta1, feat);
    for (size_t i = 0; i < u.size(); ++i) u[i] = std::max(0.0, u[i] + p.b1[i]);
    double z = p.b2;
    for (size_t i = 0; i < u.size(); ++i) z += p.theta2.data[i] * u[i];
    return sigmoid(z);
}

std::vector<double> estimate_difficulty(const std::vector<Embedding>& batch_features,
                                        const VisualUnitParams& params, bool per_sample) {
    if (batch_features.empty()) fail(Errc::invalid_argument, "estimate_difficulty: empty batch");
    std::vector<double> out(batch_features.size());
    if (per_sample) {
        for (size_t i = 0; i < batch_features.size(); ++i)
            out[i] = difficulty_of(batch_features[i].values, params);
        return out;
    }
    Vec mean(batch_features[0].values.size(), 0.0);
    for (const auto& f : batch_features) axpy(mean, 1.0, f.values);
    for (double& x : mean) x /= double(batch_features.size());
    const double d = difficulty_of(mean, params);
    std::fill(out.begin(), out.end(), d);
    return out;
}

double estimate_difficulty_scalar(const std::vector<Embedding>& batch_features,
                                  const VisualUnitParams& params) {
    return estimate_difficulty(batch_features, params, false)[0];
}

StrategyTag select_strategy(double delta, double tau_lo, double tau_hi) {
    if (delta < tau_lo) return StrategyTag::Standard;
    if (delta < tau_hi) return StrategyTag::Robust;
    return StrategyTag::RobustAugmented;
}

// ---------------------------------------------------------------------------
// Linguistic Context Unit
// ---------------------------------------------------------------------------

Vec ctx_integrate(const Vec& h, const LinguisticUnitParams& params, CtxIntegrateCache* cache) {
    if (h.size() != params.theta3.cols)
        fail(Errc::dimension_mismatch, "ctx_integrate: expected input of size " +
                                           std::to_string(params.theta3.cols));
    Vec u = matvec(params.theta3, h);
    for (size_t i = 0; i < u.size(); ++i) u[i] += params.b3[i];
    Vec r(u.size());
    for (size_t i = 0; i < u.size(); ++i) r[i] = std::max(0.0, u[i]);
    Vec out = matvec(params.theta4, r);
    for (size_t i = 0; i < out.size(); ++i) out[i] += params.b4[i];
    if (cache) {
        cache->input = h;
        cache->hidden_pre = u;
        cache->hidden_act = r;
        cache->output = out;
    }
    return out;
}

void ctx_integrate_backward_into(const CtxIntegrateCache& cache, const LinguisticUnitParams& params,
                                 const Vec& d_output, Mat& d_theta3, Vec& d_b3, Mat& d_theta4,
                                 Vec& d_b4, Vec& d_input) {
    add_outer(d_theta4, d_output, cache.hidden_act);
    for (size_t i = 0; i < d_b4.size(); ++i) d_b4[i] += d_output[i];
    Vec dr = matvec_t(params.theta4, d_output);
    for (size_t i = 0; i < dr.size(); ++i)
        if (cache.hidden_pre[i] <= 0.0) dr[i] = 0.0;
    add_outer(d_theta3, dr, cache.input);
    for (size_t i = 0; i < d_b3.size(); ++i) d_b3[i] += dr[i];
    Vec dh = matvec_t(params.theta3, dr);
    for (size_t i = 0; i < d_input.size(); ++i) d_input[i] += dh[i];
}

CtxIntegrateGrads ctx_integrate_backward(const CtxIntegrateCache& cache,
                                         const LinguisticUnitParams& params, const Vec& d_output) {
    CtxIntegrateGrads g;
    g.d_theta3 = Mat(params.theta3.rows, params.theta3.cols);
    g.d_b3 = Vec(params.b3.size(), 0.0);
    g.d_theta4 = Mat(params.theta4.rows, params.theta4.cols);
    g.d_b4 = Vec(params.b4.size(), 0.0);
    g.d_input = Vec(cache.input.size(), 0.0);
    ctx_integrate_backward_into(cache, params, d_output, g.d_theta3, g.d_b3, g.d_theta4, g.d_b4,
                                g.d_input);
    return g;
}

Embedding lcu_encode(const std::vector<Vec>& prompt_tokens, TextMode mode,
                     const std::optional<Vec>& visual_context, const LinguisticUnitParams& params,
                     const FrozenEncoders& enc, bool simple_concat, LcuEncodeCache* cache) {
    LcuEncodeCache local;
    LcuEncodeCache& c = cache ? *cache : local;
    Embedding psi = enc.encode_text(prompt_tokens, &c.text);
    c.contextual = false;
    c.simple_concat = simple_concat;
    if (mode == TextMode::Standard) {
        c.fused = psi.values;
        return psi;
    }
    if (!visual_context)
        fail(Errc::protocol, "contextual encoding requested without a visual context message");
    c.contextual = true;

    const Vec& ctx = *visual_context;
    Vec h(psi.values.size() + ctx.size());
    std::copy(psi.values.begin(), psi.values.end(), h.begin());
    std::copy(ctx.begin(), ctx.end(), h.begin() + long(psi.values.size()));
    c.concat_input = h;

    Vec g;
    if (simple_concat) {
        // Fixed projection [I/2, I/2] of the concatenation; no learned fusion.
        g.resize(psi.values.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = 0.5 * (psi.values[i] + ctx[i]);
    } else {
        g = ctx_integrate(h, params, &c.ctx);
    }

    Embedding out;
    out.modality = Modality::Text;
    out.normalized = false;
    if (params.lambda == 1.0) {
        out.values = psi.values;  // exact degeneracy of the mixing equation
        out.normalized = true;
    } else {
        out.values.resize(psi.values.size());
        for (size_t i = 0; i < out.values.size(); ++i)
            out.values[i] = params.lambda * psi.values[i] + (1.0 - params.lambda) * g[i];
    }
    c.fused = out.values;
    return out;
}

// ---------------------------------------------------------------------------
// Nominal Embedding Unit
// ---------------------------------------------------------------------------

NameTable neu_init_concepts(const std::vector<std::string>& ood_names, size_t n_c, uint64_t seed,
                            const PretrainedVocab& vocab) {
    if (n_c < 1) fail(Errc::invalid_argument, "n_c must be >= 1");
    {
        std::vector<std::string> sorted(ood_names);
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            fail(Errc::invalid_argument, "duplicate concept names");
    }
    NameTable table;
    const size_t d_tok = vocab.unk.size();
    for (size_t i = 0; i < ood_names.size(); ++i) {
        ConceptVectors cv;
        cv.name = ood_names[i];
        cv.vectors = Mat(n_c, d_tok);
        Rng rng(derive_seed(seed, 0x6e6575ULL + i));
        for (size_t v = 0; v < n_c; ++v)
            for (size_t d = 0; d < d_tok; ++d)
                cv.vectors.at(v, d) = double(vocab.unk[d]) + 0.02 * rng.gaussian();
        table.concepts.push_back(std::move(cv));
        table.template_bank.push_back(template_for_concept(i, ood_names[i]));
    }
    return table;
}

static PromptBuild build_prompt_impl(const std::string& name, const PromptTemplate& tmpl,
                                     const PretrainedVocab& vocab, const Vec* injected) {
    const size_t pos = tmpl.text.find("{}");
    if (pos == std::string::npos) fail(Errc::invalid_argument, "template has no placeholder");
    const auto prefix = tokenize(tmpl.text.substr(0, pos));
    const auto suffix = tokenize(tmpl.text.substr(pos + 2));
    const auto name_toks = tokenize(name);

    PromptBuild out;
    auto push_vocab = [&](const std::string& tok) {
        const auto& v = vocab.token_vector(tok);
        out.token_vectors.emplace_back(v.begin(), v.end());
    };
    for (const auto& t : prefix) push_vocab(t);
    for (const auto& t : name_toks) {
        out.name_positions.push_back(out.token_vectors.size());
        if (injected)
            out.token_vectors.push_back(*injected);
        else
            push_vocab(t);
    }
    for (const auto& t : suffix) push_vocab(t);
    out.token_count = out.token_vectors.size();
    return out;
}

PromptBuild neu_generate_prompt(const std::string& concept_name, const NameTable& table,
                                const PromptTemplate& tmpl, const PretrainedVocab& vocab) {
    const size_t idx = table.concept_index(concept_name);
    const Vec mean = table.concept_mean(idx);
    return build_prompt_impl(concept_name, tmpl, vocab, &mean);
}

PromptBuild build_vocab_prompt(const std::string& name, const PromptTemplate& tmpl,
                               const PretrainedVocab& vocab) {
    return build_prompt_impl(name, tmpl, vocab, nullptr);
}

std::vector<std::pair<std::string, std::string>> neu_context_exchange(
    const std::vector<std::string>& concepts, const std::vector<PromptTemplate>& template_bank) {
    if (template_bank.empty()) fail(Errc::invalid_argument, "empty template bank");
    auto first_of = [&](const std::string& owner) -> const PromptTemplate* {
        for (const auto& t : template_bank)
            if (t.owner_concept && *t.owner_concept == owner) return &t;
        return nullptr;
    };
    for (const auto& c : concepts)
        if (!first_of(c)) fail(Errc::invalid_argument, "no template for concept: " + c);

    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& c : concepts)
        for (const auto& t : template_bank)
            if (t.owner_concept && *t.owner_concept == c)
                out.emplace_back(c, render_prompt(t, c));
    for (const auto& c : concepts)
        for (const auto& other : concepts) {
            if (other == c) continue;
            out.emplace_back(c, render_prompt(*first_of(other), c));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Global Coordinator scalars
// ---------------------------------------------------------------------------

double gc_temperature(double kappa_param) { return clip(kappa_param, 0.5, 2.0); }
double gc_temperature_grad(double kappa_param) { return clip_grad(kappa_param, 0.5, 2.0); }

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

AgentState Agent::make_state() const {
    AgentState s;
    s.agent_id = id_;
    return s;
}

void Agent::check_state(const AgentState& state) const {
    if (state.agent_id != id_)
        fail(Errc::invalid_argument, std::string("state belongs to ") + agent_name(state.agent_id) +
                                         ", not " + agent_name(id_));
}

static std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out.push_back(sep);
        out += parts[i];
    }
    return out;
}

static std::vector<std::string> split_str(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty() || !s.empty()) out.push_back(cur);
    return out;
}

std::pair<VisualStepOutput, AgentState> VisualAgent::step(const std::vector<Message>& inbox,
                                                          const AgentState& state,
                                                          int step_index) const {
    check_state(state);
    VisualStepOutput out;

    const FeaturesPayload* batch = nullptr;
    for (const auto& m : inbox)
        if (const auto* f = std::get_if<FeaturesPayload>(&m.payload)) batch = f;
    if (!batch) fail(Errc::protocol, "missing edge coordinator->visual (raw batch)");

    for (const auto& e : batch->features) {
        std::vector<float> raw(e.values.begin(), e.values.end());
        out.encoder_features.push_back(enc_.encode_image(raw).values);
    }

    std::vector<Embedding> enc_embeddings(out.encoder_features.size());
    for (size_t i = 0; i < out.encoder_features.size(); ++i) {
        enc_embeddings[i].values = out.encoder_features[i];
        enc_embeddings[i].modality = Modality::Visual;
    }

    if (flags_.no_visual) {
        out.strategy = StrategyTag::Standard;
        out.difficulty = 0.0;
    } else if (flags_.no_diff) {
        out.strategy = StrategyTag::Robust;
        out.difficulty = 0.0;
    } else {
        const auto scores = estimate_difficulty(enc_embeddings, params_, per_sample_);
        double mean_score = 0.0;
        for (double d : scores) mean_score += d;
        mean_score /= double(scores.size());
        out.difficulty = mean_score;
        out.strategy = select_strategy(mean_score, params_.tau_lo, params_.tau_hi);
    }

    for (const auto& e : out.encoder_features) {
        Embedding phi;
        phi.modality = Modality::Visual;
        if (out.strategy == StrategyTag::Standard) {
            phi.values = e;
            phi.normalized = false;
        } else {
            phi.values = vpu_robust_from_feature(e, params_.beta);
            phi.normalized = params_.beta == 0.0;
        }
        out.visual_features.push_back(std::move(phi));
    }

    out.context = Vec(enc_.d_embed, 0.0);
    for (const auto& phi : out.visual_features) axpy(out.context, 1.0, normalized(phi.values));
    for (double& x : out.context) x /= double(out.visual_features.size());

    Message feat;
    feat.sender = AgentId::Visual;
    feat.receiver = AgentId::Coordinator;
    feat.step_index = step_index;
    feat.payload = FeaturesPayload{out.visual_features};
    out.messages.push_back(std::move(feat));

    Message strat;
    strat.sender = AgentId::Visual;
    strat.receiver = AgentId::Coordinator;
    strat.step_index = step_index;
    strat.payload = StrategyPayload{out.strategy, out.difficulty};
    out.messages.push_back(strat);

    if (!flags_.no_visual) {
        Message ctx;
        ctx.sender = AgentId::Visual;
        ctx.receiver = AgentId::Linguistic;
        ctx.step_index = step_index;
        Embedding c;
        c.values = out.context;
        c.modality = Modality::Visual;
        c.normalized = false;
        ctx.payload = ContextPayload{std::move(c)};
        out.messages.push_back(std::move(ctx));
    }

    AgentState next = state;
    next.step_counter += 1;
    // memory: latest batch-mean encoder feature
    next.running_feature_mean = Vec(enc_.d_embed, 0.0);
    for (const auto& e : out.encoder_features) axpy(next.running_feature_mean, 1.0, e);
    for (double& x : next.running_feature_mean) x /= double(out.encoder_features.size());
    next.last_difficulty = out.difficulty;
    return {std::move(out), std::move(next)};
}

std::pair<NominalStepOutput, AgentState> NominalAgent::step(const std::vector<Message>& inbox,
                                                            const AgentState& state,
                                                            int step_index) const {
    check_state(state);
    NominalStepOutput out;

    std::vector<std::string> class_names;
    bool gate_open = false;
    for (const auto& m : inbox) {
        if (const auto* md = std::get_if<MetadataPayload>(&m.payload)) {
            auto it = md->entries.find("classes");
            if (it != md->entries.end()) class_names = split_str(it->second, ',');
            auto ag = md->entries.find("augment");
            if (ag != md->entries.end()) gate_open = ag->second == "1";
        }
    }
    if (class_names.empty()) fail(Errc::protocol, "missing edge coordinator->nominal (class list)");

    const bool augment = gate_open && !flags_.no_ctx_exch && !flags_.no_nom;

    for (const auto& name : class_names) {
        const bool learned = !flags_.no_nom && table_.has_concept(name);

        // Description templates: the concept's own, plus every other
        // concept's template when context exchange is active. Augmentation
        // rotates through the exchanged descriptions one per round.
        std::vector<const PromptTemplate*> tmpls;
        const PromptTemplate canon = canonical_template();
        const PromptTemplate* own = nullptr;
        for (const auto& t : table_.template_bank)
            if (t.owner_concept && *t.owner_concept == name) own = &t;
        tmpls.push_back(own ? own : &canon);
        if (augment)
            for (const auto& t : table_.template_bank)
                if (own == nullptr || &t != own) tmpls.push_back(&t);
        const PromptTemplate* pick = tmpls[size_t(step_index) % tmpls.size()];

        std::vector<PromptBuild> builds;
        if (learned)
            builds.push_back(neu_generate_prompt(name, table_, *pick, vocab_));
        else
            builds.push_back(build_vocab_prompt(name, *pick, vocab_));

        std::vector<std::string> pos_strs;
        for (const auto& b : builds) {
            std::vector<std::string> ps;
            for (size_t p : b.name_positions) ps.push_back(std::to_string(p));
            pos_strs.push_back(join(ps, ','));
        }

        Message header;
        header.sender = AgentId::Nominal;
        header.receiver = AgentId::Linguistic;
        header.step_index = step_index;
        MetadataPayload md;
        md.entries["class"] = name;
        md.entries["concept_index"] =
            std::to_string(learned ? int(table_.concept_index(name)) : -1);
        md.entries["n_descriptions"] = std::to_string(builds.size());
        md.entries["name_positions"] = join(pos_strs, '|');
        header.payload = std::move(md);
        out.messages.push_back(std::move(header));

        for (const auto& b : builds) {
            Message desc;
            desc.sender = AgentId::Nominal;
            desc.receiver = AgentId::Linguistic;
            desc.step_index = step_index;
            FeaturesPayload fp;
            for (const auto& tv : b.token_vectors) {
                Embedding e;
                e.values = tv;
                e.modality = Modality::Text;
                e.normalized = false;
                fp.features.push_back(std::move(e));
            }
            desc.payload = std::move(fp);
            out.messages.push_back(std::move(desc));
        }
    }

    AgentState next = state;
    next.step_counter += 1;
    return {std::move(out), std::move(next)};
}

std::pair<LinguisticStepOutput, AgentState> LinguisticAgent::step(const std::vector<Message>& inbox,
                                                                  const AgentState& state,
                                                                  int step_index) const {
    check_state(state);
    LinguisticStepOutput out;

    std::optional<Vec> context;
    for (const auto& m : inbox)
        if (const auto* c = std::get_if<ContextPayload>(&m.payload)) context = c->context.values;

    const bool contextual = context.has_value() && !flags_.no_ling;

    size_t i = 0;
    // Skip any leading non-nominal messages; description blocks arrive in
    // FIFO order as header metadata followed by token-vector messages.
    std::vector<const Message*> nominal_msgs;
    for (const auto& m : inbox)
        if (m.sender == AgentId::Nominal) nominal_msgs.push_back(&m);
    if (nominal_msgs.empty()) fail(Errc::protocol, "missing edge nominal->linguistic (prompts)");

    while (i < nominal_msgs.size()) {
        const auto* md = std::get_if<MetadataPayload>(&nominal_msgs[i]->payload);
        if (!md) fail(Errc::protocol, "expected description block header from nominal unit");
        ClassTextCache cls;
        cls.class_name = md->entries.at("class");
        cls.concept_index = std::stoi(md->entries.at("concept_index"));
        const size_t n_desc = std::stoul(md->entries.at("n_descriptions"));
        const auto pos_blocks = split_str(md->entries.at("name_positions"), '|');
        ++i;
        if (i + n_desc > nominal_msgs.size() || pos_blocks.size() != n_desc)
            fail(Errc::protocol, "truncated description block from nominal unit");

        for (size_t d = 0; d < n_desc; ++d, ++i) {
            const auto* fp = std::get_if<FeaturesPayload>(&nominal_msgs[i]->payload);
            if (!fp) fail(Errc::protocol, "expected token vectors from nominal unit");
            std::vector<Vec> tokens;
            for (const auto& e : fp->features) tokens.push_back(e.values);

            TextDescCache desc;
            desc.token_count = tokens.size();
            desc.concept_index = cls.concept_index;
            for (const auto& p : split_str(pos_blocks[d], ','))
                if (!p.empty()) desc.name_positions.push_back(std::stoul(p));

            lcu_encode(tokens, contextual ? TextMode::Contextual : TextMode::Standard, context,
                       params_, enc_, flags_.simple_concat, &desc.lcu);
            cls.descriptions.push_back(std::move(desc));
        }

        cls.feature = Vec(enc_.d_embed, 0.0);
        for (const auto& d : cls.descriptions) axpy(cls.feature, 1.0, d.lcu.fused);
        for (double& x : cls.feature) x /= double(cls.descriptions.size());
        out.text.push_back(std::move(cls));
    }

    Message feat;
    feat.sender = AgentId::Linguistic;
    feat.receiver = AgentId::Coordinator;
    feat.step_index = step_index;
    FeaturesPayload fp;
    std::vector<std::string> names;
    for (const auto& cls : out.text) {
        Embedding e;
        e.values = cls.feature;
        e.modality = Modality::Text;
        e.normalized = false;
        fp.features.push_back(std::move(e));
        names.push_back(cls.class_name);
    }
    feat.payload = std::move(fp);

    Message order;
    order.sender = AgentId::Linguistic;
    order.receiver = AgentId::Coordinator;
    order.step_index = step_index;
    MetadataPayload md;
    md.entries["classes"] = join(names, ',');
    order.payload = std::move(md);

    out.messages.push_back(std::move(order));
    out.messages.push_back(std::move(feat));

    AgentState next = state;
    next.step_counter += 1;
    if (context) next.last_visual_context = *context;
    return {std::move(out), std::move(next)};
}

std::pair<StepOutputs, AgentState> CoordinatorAgent::collect(const std::vector<Message>& inbox,
                                                             const AgentState& state,
                                                             const std::vector<ClassTextCache>& text,
                                                             const std::vector<int>& labels) const {
    check_state(state);
    StepOutputs out;

    const FeaturesPayload* visual = nullptr;
    const FeaturesPayload* textual = nullptr;
    const StrategyPayload* strat = nullptr;
    for (const auto& m : inbox) {
        if (const auto* f = std::get_if<FeaturesPayload>(&m.payload)) {
            if (m.sender == AgentId::Visual) visual = f;
            if (m.sender == AgentId::Linguistic) textual = f;
        } else if (const auto* s = std::get_if<StrategyPayload>(&m.payload)) {
            strat = s;
        }
    }
    if (!visual) fail(Errc::protocol, "missing edge visual->coordinator (features)");
    if (!textual) fail(Errc::protocol, "missing edge linguistic->coordinator (features)");

    out.visual_features = visual->features;
    out.text = text;
    out.labels = labels;
    if (strat) {
        out.strategy = strat->strategy;
        out.difficulty = strat->difficulty;
    }

    if (flags_.no_coord) {
        out.kappa = 1.0;
    } else {
        out.kappa = gc_temperature(params_.kappa_param);
    }
    if (flags_.no_coord || flags_.no_dynbal) {
        out.w_con = 0.5;
        out.w_cls = 0.5;
    } else {
        const BalanceWeights bw = balance_weights(params_.w_con_param, params_.w_cls_param);
        out.w_con = bw.w_con;
        out.w_cls = bw.w_cls;
    }

    AgentState next = state;
    next.step_counter += 1;
    return {std::move(out), std::move(next)};
}

// ---------------------------------------------------------------------------
// Coordination round
// ---------------------------------------------------------------------------

AgentSet::AgentSet(const AdapterView& view, const FrozenEncoders& enc, const PretrainedVocab& vocab,
                   const AblationFlags& flags, bool per_sample_difficulty)
    : visual(*view.visual, enc, flags, per_sample_difficulty),
      nominal(*view.names, vocab, flags),
      linguistic(*view.linguistic, enc, flags),
      coordinator(*view.coordinator, flags),
      flags(flags),
      visual_state(visual.make_state()),
      nominal_state(nominal.make_state()),
      linguistic_state(linguistic.make_state()),
      coordinator_state(coordinator.make_state()) {}

std::vector<size_t> batch_class_order(const TrainBatch& batch) {
    std::vector<size_t> order;
    for (size_t c : batch.class_ids)
        if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
    return order;
}

StepOutputs gc_coordinate(MessageBus& bus, AgentSet& agents, const Benchmark& benchmark,
                          const TrainBatch& batch, int step_index) {
    for (AgentId id : {AgentId::Visual, AgentId::Linguistic, AgentId::Nominal, AgentId::Coordinator})
        if (!bus.is_registered(id))
            fail(Errc::routing, std::string("agent not registered: ") + agent_name(id));
    if (batch.sample_ids.empty()) fail(Errc::invalid_argument, "empty batch");

    const auto class_order = batch_class_order(batch);
    std::vector<int> labels(batch.sample_ids.size(), -1);
    for (size_t i = 0; i < batch.sample_ids.size(); ++i) {
        for (size_t j = 0; j < class_order.size(); ++j)
            if (class_order[j] == batch.class_ids[i]) labels[i] = int(j);
    }

    // Round opening: the coordinator posts the raw batch and the class list,
    // so every agent input lives in the trace.
    Message raw;
    raw.sender = AgentId::Coordinator;
    raw.receiver = AgentId::Visual;
    raw.step_index = step_index;
    FeaturesPayload rawfp;
    for (size_t id : batch.sample_ids) {
        Embedding e;
        const float* row = benchmark.sample_row(id);
        e.values.assign(row, row + benchmark.config.d_raw);
        e.modality = Modality::Visual;
        e.normalized = false;
        rawfp.features.push_back(std::move(e));
    }
    raw.payload = std::move(rawfp);
    bus.post(raw);

    auto [vout, vstate] = agents.visual.step(bus.drain(AgentId::Visual), agents.visual_state, step_index);
    agents.visual_state = std::move(vstate);
    for (const auto& m : vout.messages) bus.post(m);

    // The coordinator reads the visual unit's strategy report and relays the
    // augmentation gate to the nominal unit together with the class list.
    std::vector<Message> coord_inbox = bus.drain(AgentId::Coordinator);
    bool gate_open = false;
    if (!agents.flags.no_coord)
        for (const auto& m : coord_inbox)
            if (const auto* s = std::get_if<StrategyPayload>(&m.payload))
                gate_open = s->strategy == StrategyTag::RobustAugmented;

    Message classes;
    classes.sender = AgentId::Coordinator;
    classes.receiver = AgentId::Nominal;
    classes.step_index = step_index;
    MetadataPayload cmd;
    std::string joined;
    for (size_t j = 0; j < class_order.size(); ++j) {
        if (j) joined.push_back(',');
        joined += benchmark.classes[class_order[j]].name;
    }
    cmd.entries["classes"] = joined;
    cmd.entries["augment"] = gate_open ? "1" : "0";
    classes.payload = std::move(cmd);
    bus.post(classes);

    auto [nout, nstate] = agents.nominal.step(bus.drain(AgentId::Nominal), agents.nominal_state, step_index);
    agents.nominal_state = std::move(nstate);
    for (const auto& m : nout.messages) bus.post(m);

    auto [lout, lstate] =
        agents.linguistic.step(bus.drain(AgentId::Linguistic), agents.linguistic_state, step_index);
    agents.linguistic_state = std::move(lstate);
    for (const auto& m : lout.messages) bus.post(m);

    {
        const std::vector<Message> late = bus.drain(AgentId::Coordinator);
        coord_inbox.insert(coord_inbox.end(), late.begin(), late.end());
    }
    auto [sout, cstate] =
        agents.coordinator.collect(coord_inbox, agents.coordinator_state, lout.text, labels);
    agents.coordinator_state = std::move(cstate);

    sout.encoder_features = std::move(vout.encoder_features);
    sout.visual_context = std::move(vout.context);
    return std::move(sout);
}

}  // namespace synernet
