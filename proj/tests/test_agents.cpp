#include <doctest.h>

#include <algorithm>

#include "support.hpp"
#include "synernet/adapter.hpp"
#include "synernet/agents.hpp"

using namespace synernet;

TEST_CASE("robust visual encoding: value, norm, degenerate input") {
    const Vec e = {3.0, 4.0};
    const Vec r = vpu_robust_from_feature(e, 0.5);
    CHECK(r[0] == doctest::Approx(2.1).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(2.8).epsilon(1e-12));

    const Vec unit = vpu_robust_from_feature(e, 0.0);
    CHECK(norm2(unit) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(vpu_robust_from_feature(Vec(4, 0.0), 0.5), Error);
}

TEST_CASE("robust-path jacobian detaches the residual term") {
    Rng rng(3);
    Vec e(5);
    for (double& x : e) x = rng.gaussian();
    const double beta = 0.5;
    const Mat jac = vpu_robust_jacobian(e);

    // FD on the non-detached path e/‖e‖ must match the analytic jacobian.
    double max_err = 0.0;
    for (size_t out = 0; out < 5; ++out)
        for (size_t in = 0; in < 5; ++in) {
            auto f_norm = [&](double x) {
                Vec p = e;
                p[in] = x;
                return normalized(p)[out];
            };
            const double fd = testsupport::central_diff(f_norm, e[in]);
            max_err = std::max(max_err, testsupport::rel_err(jac.at(out, in), fd));
        }
    CHECK(max_err < 1e-4);

    // FD on the full forward differs from the analytic jacobian by exactly
    // beta on the diagonal: the residual contributes to values, not gradients.
    for (size_t out = 0; out < 5; ++out)
        for (size_t in = 0; in < 5; ++in) {
            auto f_full = [&](double x) {
                Vec p = e;
                p[in] = x;
                return vpu_robust_from_feature(p, beta)[out];
            };
            const double fd = testsupport::central_diff(f_full, e[in]);
            const double expected = jac.at(out, in) + (out == in ? beta : 0.0);
            CHECK(testsupport::rel_err(expected, fd) < 1e-4);
        }
}

namespace {

VisualUnitParams zero_visual_params(size_t d) {
    VisualUnitParams p;
    p.theta1 = Mat(d, d);
    p.b1 = Vec(d, 0.0);
    p.theta2 = Mat(1, d);
    p.b2 = 0.0;
    return p;
}

std::vector<Embedding> random_features(size_t n, size_t d, uint64_t seed) {
    Rng rng(seed);
    std::vector<Embedding> out(n);
    for (auto& e : out) {
        e.values.resize(d);
        for (double& x : e.values) x = rng.gaussian();
        e.modality = Modality::Visual;
    }
    return out;
}

}  // namespace

TEST_CASE("difficulty estimation: sigmoid midpoint, range, permutation invariance") {
    const size_t d = 6;
    auto params = zero_visual_params(d);
    auto feats = random_features(5, d, 21);

    const auto scores = estimate_difficulty(feats, params, false);
    for (double s : scores) CHECK(s == doctest::Approx(0.5));

    Rng rng(22);
    for (double& w : params.theta1.data) w = rng.gaussian();
    for (double& w : params.theta2.data) w = rng.gaussian();
    params.b2 = 0.3;

    const auto literal = estimate_difficulty(feats, params, false);
    for (double s : literal) {
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        CHECK(s == literal[0]);  // broadcast
    }

    auto shuffled = feats;
    std::swap(shuffled[0], shuffled[3]);
    std::swap(shuffled[1], shuffled[4]);
    CHECK(estimate_difficulty(shuffled, params, false)[0] ==
          doctest::Approx(literal[0]).epsilon(1e-12));

    const auto per_sample = estimate_difficulty(feats, params, true);
    bool any_diff = false;
    for (double s : per_sample) any_diff = any_diff || s != per_sample[0];
    CHECK(any_diff);

    CHECK_THROWS_AS(estimate_difficulty({}, params, false), Error);
}

TEST_CASE("strategy selection partitions (0,1)") {
    CHECK(select_strategy(0.2, 0.33, 0.66) == StrategyTag::Standard);
    CHECK(select_strategy(0.5, 0.33, 0.66) == StrategyTag::Robust);
    CHECK(select_strategy(0.9, 0.33, 0.66) == StrategyTag::RobustAugmented);
    for (int i = 1; i < 100; ++i) {
        const double delta = double(i) / 100.0;
        int buckets = 0;
        if (select_strategy(delta, 0.33, 0.66) == StrategyTag::Standard) ++buckets;
        if (select_strategy(delta, 0.33, 0.66) == StrategyTag::Robust) ++buckets;
        if (select_strategy(delta, 0.33, 0.66) == StrategyTag::RobustAugmented) ++buckets;
        CHECK(buckets == 1);
    }
}

namespace {

LinguisticUnitParams random_ling(size_t d, uint64_t seed, double lambda) {
    LinguisticUnitParams p;
    p.lambda = lambda;
    p.theta3 = Mat(d, 2 * d);
    p.b3 = Vec(d, 0.0);
    p.theta4 = Mat(d, d);
    p.b4 = Vec(d, 0.0);
    Rng rng(seed);
    for (double& w : p.theta3.data) w = rng.gaussian() * 0.4;
    for (double& w : p.theta4.data) w = rng.gaussian() * 0.4;
    for (double& w : p.b3) w = rng.gaussian() * 0.1;
    for (double& w : p.b4) w = rng.gaussian() * 0.1;
    return p;
}

}  // namespace

TEST_CASE("context integration module: closed forms and gradients") {
    const size_t d = 4;
    LinguisticUnitParams zero;
    zero.theta3 = Mat(d, 2 * d);
    zero.b3 = Vec(d, 0.0);
    zero.theta4 = Mat(d, d);
    zero.b4 = {1.0, -2.0, 0.5, 3.0};
    Vec h(2 * d, 0.7);
    CHECK(ctx_integrate(h, zero) == zero.b4);

    // identity-padded theta3, identity theta4, all-negative input -> zero
    LinguisticUnitParams ident = zero;
    for (size_t i = 0; i < d; ++i) ident.theta3.at(i, i) = 1.0;
    for (size_t i = 0; i < d; ++i) ident.theta4.at(i, i) = 1.0;
    ident.b4 = Vec(d, 0.0);
    CHECK(ctx_integrate(Vec(2 * d, -1.0), ident) == Vec(d, 0.0));

    CHECK_THROWS_AS(ctx_integrate(Vec(3, 0.0), ident), Error);

    // analytic parameter gradients vs finite differences
    auto params = random_ling(d, 5, 0.5);
    Rng rng(6);
    Vec input(2 * d), up(d);
    for (double& x : input) x = rng.gaussian();
    for (double& x : up) x = rng.gaussian();

    CtxIntegrateCache cache;
    ctx_integrate(input, params, &cache);
    const auto grads = ctx_integrate_backward(cache, params, up);

    auto objective = [&](const LinguisticUnitParams& p, const Vec& in) {
        return dot(up, ctx_integrate(in, p));
    };
    double max_err = 0.0;
    for (size_t i = 0; i < params.theta3.data.size(); ++i) {
        auto f = [&](double x) {
            auto p = params;
            p.theta3.data[i] = x;
            return objective(p, input);
        };
        max_err = std::max(max_err, testsupport::rel_err(grads.d_theta3.data[i],
                                                         testsupport::central_diff(f, params.theta3.data[i])));
    }
    for (size_t i = 0; i < params.theta4.data.size(); ++i) {
        auto f = [&](double x) {
            auto p = params;
            p.theta4.data[i] = x;
            return objective(p, input);
        };
        max_err = std::max(max_err, testsupport::rel_err(grads.d_theta4.data[i],
                                                         testsupport::central_diff(f, params.theta4.data[i])));
    }
    for (size_t i = 0; i < d; ++i) {
        auto f3 = [&](double x) {
            auto p = params;
            p.b3[i] = x;
            return objective(p, input);
        };
        auto f4 = [&](double x) {
            auto p = params;
            p.b4[i] = x;
            return objective(p, input);
        };
        max_err = std::max(max_err, testsupport::rel_err(grads.d_b3[i],
                                                         testsupport::central_diff(f3, params.b3[i])));
        max_err = std::max(max_err, testsupport::rel_err(grads.d_b4[i],
                                                         testsupport::central_diff(f4, params.b4[i])));
    }
    for (size_t i = 0; i < input.size(); ++i) {
        auto f = [&](double x) {
            auto in = input;
            in[i] = x;
            return objective(params, in);
        };
        max_err = std::max(max_err, testsupport::rel_err(grads.d_input[i],
                                                         testsupport::central_diff(f, input[i])));
    }
    CHECK(max_err < 1e-4);
}

TEST_CASE("contextual text encoding: mixing degeneracies and errors") {
    auto bench = testsupport::tiny_benchmark();
    const size_t d = bench.config.d_embed;
    auto table = neu_init_concepts({"zulq", "vopt", "kilm"}, 2, 3, bench.vocab);
    const auto prompt = neu_generate_prompt("zulq", table, canonical_template(), bench.vocab);

    Rng rng(8);
    Vec ctx(d);
    for (double& x : ctx) x = rng.gaussian() * 0.3;

    auto params = random_ling(d, 9, 1.0);
    const Embedding std_out =
        lcu_encode(prompt.token_vectors, TextMode::Standard, std::nullopt, params, bench.encoders);
    const Embedding mixed = lcu_encode(prompt.token_vectors, TextMode::Contextual,
                                       std::optional<Vec>(ctx), params, bench.encoders);
    CHECK(mixed.values == std_out.values);  // lambda = 1 bit-equality
    CHECK(mixed.values.size() == d);

    params.lambda = 0.0;
    const Embedding pure_ctx = lcu_encode(prompt.token_vectors, TextMode::Contextual,
                                          std::optional<Vec>(ctx), params, bench.encoders);
    Vec h(std_out.values);
    h.insert(h.end(), ctx.begin(), ctx.end());
    CHECK(pure_ctx.values == ctx_integrate(h, params));

    CHECK_THROWS_AS(
        lcu_encode(prompt.token_vectors, TextMode::Contextual, std::nullopt, params, bench.encoders),
        Error);

    params.lambda = 0.7;
    const Embedding simple = lcu_encode(prompt.token_vectors, TextMode::Contextual,
                                        std::optional<Vec>(ctx), params, bench.encoders, true);
    for (size_t i = 0; i < d; ++i)
        CHECK(simple.values[i] ==
              doctest::Approx(0.7 * std_out.values[i] + 0.3 * 0.5 * (std_out.values[i] + ctx[i])));
}

TEST_CASE("name table initialization: counts, determinism, closeness to UNK") {
    auto bench = testsupport::tiny_benchmark();
    const auto names = std::vector<std::string>{"qaz", "wsx", "edc", "rfv"};
    const NameTable a = neu_init_concepts(names, 2, 17, bench.vocab);
    CHECK(a.concepts.size() == 4);
    size_t total = 0;
    for (const auto& c : a.concepts) total += c.vectors.rows;
    CHECK(total == 8);

    const NameTable b = neu_init_concepts(names, 2, 17, bench.vocab);
    for (size_t i = 0; i < a.concepts.size(); ++i)
        CHECK(a.concepts[i].vectors.data == b.concepts[i].vectors.data);

    CHECK_THROWS_AS(neu_init_concepts({"dup", "dup"}, 2, 0, bench.vocab), Error);
    CHECK_THROWS_AS(neu_init_concepts(names, 0, 0, bench.vocab), Error);

    // Monte-Carlo check of the initializer at scale 0.02, d_tok = 16: the
    // vector should land within 0.2 of UNK essentially always.
    PretrainedVocab wide = bench.vocab;
    wide.unk = std::vector<float>(16, 0.25f);
    size_t within = 0, n_draws = 0;
    for (uint64_t s = 0; s < 500; ++s) {
        const NameTable t = neu_init_concepts({"zzz"}, 4, s, wide);
        for (size_t r = 0; r < t.concepts[0].vectors.rows; ++r) {
            Vec diff(16);
            for (size_t k = 0; k < 16; ++k)
                diff[k] = t.concepts[0].vectors.at(r, k) - double(wide.unk[k]);
            if (norm2(diff) <= 0.2) ++within;
            ++n_draws;
        }
    }
    CHECK(double(within) / double(n_draws) >= 0.99);
}

TEST_CASE("prompt generation injects the concept mean at name positions") {
    auto bench = testsupport::tiny_benchmark();
    auto table = neu_init_concepts({"zulq", "vopt"}, 2, 3, bench.vocab);

    const PromptTemplate bare{"{}", std::nullopt};
    const auto p = neu_generate_prompt("zulq", table, bare, bench.vocab);
    CHECK(p.token_count == tokenize("zulq").size());
    const Vec mean = table.concept_mean(0);
    for (const auto& tv : p.token_vectors) CHECK(tv == mean);

    const auto a = neu_generate_prompt("zulq", table, canonical_template(), bench.vocab);
    const auto b = neu_generate_prompt("vopt", table, canonical_template(), bench.vocab);
    REQUIRE(a.token_count == b.token_count);
    for (size_t i = 0; i < a.token_count; ++i) {
        const bool is_name = std::find(a.name_positions.begin(), a.name_positions.end(), i) !=
                             a.name_positions.end();
        if (is_name)
            CHECK_FALSE(a.token_vectors[i] == b.token_vectors[i]);
        else
            CHECK(a.token_vectors[i] == b.token_vectors[i]);
    }

    CHECK_THROWS_AS(neu_generate_prompt("missing", table, bare, bench.vocab), Error);

    // downstream gradient w.r.t. a learned vector is nonzero
    TextEncodeCache cache;
    bench.encoders.encode_text(a.token_vectors, &cache);
    Vec up(bench.config.d_embed, 1.0);
    const Vec dm = bench.encoders.encode_text_backward_mean(cache, up);
    CHECK(norm2(dm) > 0.0);

    auto loss = [&](double x) {
        auto t2 = table;
        t2.concepts[0].vectors.at(0, 0) = x;
        const auto pb = neu_generate_prompt("zulq", t2, canonical_template(), bench.vocab);
        const Embedding e = bench.encoders.encode_text(pb.token_vectors);
        return dot(up, e.values);
    };
    const double fd = testsupport::central_diff(loss, table.concepts[0].vectors.at(0, 0));
    CHECK(std::fabs(fd) > 1e-8);
}

TEST_CASE("context exchange emits standard plus swapped descriptions") {
    std::vector<PromptTemplate> bank = {
        {"a photo of {}", "dog"},
        {"a painting of {}", "mural"},
    };
    const auto pairs = neu_context_exchange({"dog", "mural"}, bank);
    bool found = false;
    for (const auto& [c, d] : pairs)
        if (c == "dog" && d == "a painting of dog") found = true;
    CHECK(found);

    const auto solo = neu_context_exchange({"dog"}, {{"a photo of {}", "dog"}});
    CHECK(solo.size() == 1);
    CHECK(solo[0].second == "a photo of dog");

    std::vector<PromptTemplate> bank3 = {
        {"a photo of {}", "a"}, {"a painting of {}", "b"}, {"a sketch of {}", "c"}};
    const auto nine = neu_context_exchange({"a", "b", "c"}, bank3);
    CHECK(nine.size() == 9);

    CHECK_THROWS_AS(neu_context_exchange({"a"}, {}), Error);
    CHECK_THROWS_AS(neu_context_exchange({"zz"}, bank3), Error);
}

TEST_CASE("temperature clipping and its gradient") {
    CHECK(gc_temperature(1.0) == 1.0);
    CHECK(gc_temperature(0.1) == 0.5);
    CHECK(gc_temperature(5.0) == 2.0);
    CHECK(gc_temperature_grad(1.0) == 1.0);
    CHECK(gc_temperature_grad(0.1) == 0.0);
    CHECK(gc_temperature_grad(5.0) == 0.0);
}

namespace {

struct RoundFixture {
    Benchmark bench = testsupport::tiny_benchmark();
    AdapterParams params;
    TrainBatch batch;

    explicit RoundFixture(AblationFlags flags = {}) {
        AdapterInitConfig cfg;
        params = init_adapter(bench, cfg, 0);
        (void)flags;
        const auto split = make_split(bench, 2, 0);
        for (const auto& [id, c] : split.train) {
            batch.sample_ids.push_back(id);
            batch.class_ids.push_back(c);
        }
    }
};

}  // namespace

TEST_CASE("agent steps are pure and count steps") {
    RoundFixture fx;
    AblationFlags flags;
    VisualAgent agent(fx.params.visual, fx.bench.encoders, flags, false);
    AgentState state = agent.make_state();
    CHECK(state.step_counter == 0);

    Message raw;
    raw.sender = AgentId::Coordinator;
    raw.receiver = AgentId::Visual;
    raw.step_index = 0;
    FeaturesPayload fp;
    for (size_t i = 0; i < 4; ++i) {
        Embedding e;
        const float* row = fx.bench.sample_row(fx.batch.sample_ids[i]);
        e.values.assign(row, row + fx.bench.config.d_raw);
        e.modality = Modality::Visual;
        fp.features.push_back(e);
    }
    raw.payload = fp;

    auto [out1, s1] = agent.step({raw}, state, 0);
    auto [out2, s2] = agent.step({raw}, state, 0);
    CHECK(s1.step_counter == 1);
    CHECK(s2.step_counter == 1);
    REQUIRE(out1.messages.size() == out2.messages.size());
    for (size_t i = 0; i < out1.messages.size(); ++i)
        CHECK(payload_equal(out1.messages[i].payload, out2.messages[i].payload));
    CHECK(s1.running_feature_mean == s2.running_feature_mean);

    bool has_strategy = false, has_features = false;
    for (const auto& m : out1.messages) {
        if (std::holds_alternative<StrategyPayload>(m.payload)) has_strategy = true;
        if (std::holds_alternative<FeaturesPayload>(m.payload)) has_features = true;
    }
    CHECK(has_strategy);
    CHECK(has_features);

    AgentState wrong = state;
    wrong.agent_id = AgentId::Nominal;
    CHECK_THROWS_AS(agent.step({raw}, wrong, 0), Error);
}

TEST_CASE("a coordination round covers the required edges deterministically") {
    RoundFixture fx;
    AblationFlags flags;

    auto run_round = [&](MessageBus& bus) {
        for (AgentId id :
             {AgentId::Visual, AgentId::Linguistic, AgentId::Nominal, AgentId::Coordinator})
            bus.register_agent(id);
        AgentSet agents(fx.params.view(), fx.bench.encoders, fx.bench.vocab, flags, false);
        return gc_coordinate(bus, agents, fx.bench, fx.batch, 0);
    };

    MessageBus bus;
    const StepOutputs so = run_round(bus);
    CHECK(bus.trace().size() >= 4);

    auto has_edge = [&](AgentId from, AgentId to) {
        for (const auto& m : bus.trace())
            if (m.sender == from && m.receiver == to) return true;
        return false;
    };
    CHECK(has_edge(AgentId::Visual, AgentId::Linguistic));
    CHECK(has_edge(AgentId::Visual, AgentId::Coordinator));
    CHECK(has_edge(AgentId::Nominal, AgentId::Linguistic));
    CHECK(has_edge(AgentId::Linguistic, AgentId::Coordinator));

    CHECK(so.text.size() == batch_class_order(fx.batch).size());
    CHECK(so.kappa == 1.0);

    MessageBus bus2;
    const StepOutputs so2 = run_round(bus2);
    REQUIRE(bus.trace().size() == bus2.trace().size());
    for (size_t i = 0; i < bus.trace().size(); ++i)
        CHECK(payload_equal(bus.trace()[i].payload, bus2.trace()[i].payload));

    // unregistered agents are a routing error
    MessageBus empty_bus;
    AgentSet agents(fx.params.view(), fx.bench.encoders, fx.bench.vocab, flags, false);
    CHECK_THROWS_AS(gc_coordinate(empty_bus, agents, fx.bench, fx.batch, 0), Error);
}

TEST_CASE("a missing edge raises a protocol error naming it") {
    RoundFixture fx;
    AblationFlags flags;
    LinguisticAgent ling(fx.params.linguistic, fx.bench.encoders, flags);
    CHECK_THROWS_WITH_AS(ling.step({}, ling.make_state(), 0),
                         doctest::Contains("nominal->linguistic"), Error);

    VisualAgent vis(fx.params.visual, fx.bench.encoders, flags, false);
    CHECK_THROWS_WITH_AS(vis.step({}, vis.make_state(), 0),
                         doctest::Contains("coordinator->visual"), Error);
}

TEST_CASE("disabling context consumption falls back to standard encoding") {
    RoundFixture fx;
    AblationFlags no_ling;
    no_ling.no_ling = true;

    MessageBus bus;
    for (AgentId id : {AgentId::Visual, AgentId::Linguistic, AgentId::Nominal, AgentId::Coordinator})
        bus.register_agent(id);
    AgentSet agents(fx.params.view(), fx.bench.encoders, fx.bench.vocab, no_ling, false);
    const StepOutputs so = gc_coordinate(bus, agents, fx.bench, fx.batch, 0);
    REQUIRE(!so.text.empty());
    for (const auto& cls : so.text)
        for (const auto& d : cls.descriptions) CHECK_FALSE(d.lcu.contextual);
}
