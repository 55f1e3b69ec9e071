#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synernet/datagen.hpp"
#include "synernet/messaging.hpp"

namespace synernet {

// ---------------------------------------------------------------------------
// Parameter containers
// ---------------------------------------------------------------------------

struct VisualUnitParams {
    double beta = 0.5;        // residual coefficient, not trained
    double tau_lo = 0.33;     // strategy thresholds
    double tau_hi = 0.66;
    Mat theta1;               // hidden x d_embed
    Vec b1;                   // hidden
    Mat theta2;               // 1 x hidden
    double b2 = 0.0;
};

struct LinguisticUnitParams {
    double lambda = 0.7;      // mixing scalar, not trained
    Mat theta3;               // hidden x 2*d_embed
    Vec b3;                   // hidden
    Mat theta4;               // d_embed x hidden
    Vec b4;                   // d_embed
};

struct ConceptVectors {
    std::string name;
    Mat vectors;  // n_c x d_tok, each row a learnable token vector
};

struct NameTable {
    std::vector<ConceptVectors> concepts;
    std::vector<PromptTemplate> template_bank;  // one owner concept per entry

    bool has_concept(const std::string& name) const;
    size_t concept_index(const std::string& name) const;
    Vec concept_mean(size_t index) const;
    const PromptTemplate& template_of(const std::string& owner) const;
};

// Balance init: w_con_param sits in its clipped regime so the contrastive
// weight starts at exactly clip(3)/(3+1) = 0.5 and the pair then tracks the
// loss ratio inside bounded equalization dynamics; starting both parameters
// low makes the denominator run away and bleed contrastive weight instead.
struct CoordinatorParams {
    double kappa_param = 1.0;
    double w_con_param = 3.0;
    double w_cls_param = 1.0;
};

// ---------------------------------------------------------------------------
// Stateful agent interface (uniform across the four units)
// ---------------------------------------------------------------------------

struct AgentState {
    AgentId agent_id = AgentId::Coordinator;
    int step_counter = 0;
    // agent-specific memory
    Vec running_feature_mean;   // visual unit
    Vec last_visual_context;    // linguistic unit
    double last_difficulty = 0.0;
    std::map<std::string, std::string> notes;
};

struct AblationFlags {
    bool no_visual = false;
    bool no_ling = false;
    bool no_nom = false;
    bool no_coord = false;
    bool no_ctx_exch = false;
    bool simple_concat = false;
    bool no_diff = false;
    bool no_dynbal = false;
};

AblationFlags ablation_from_names(const std::vector<std::string>& names);
std::vector<std::string> ablation_to_names(const AblationFlags& flags);

// ---------------------------------------------------------------------------
// Visual Perception Unit operations
// ---------------------------------------------------------------------------

enum class VisualMode { Standard, Robust };

// Standard: E_v(z). Robust: E_v(z)/‖E_v(z)‖ + beta·detach(E_v(z)); the
// residual term is a constant for gradient purposes.
Embedding vpu_encode(const std::vector<float>& raw, VisualMode mode,
                     const VisualUnitParams& params, const FrozenEncoders& enc);

// Robust-path output for an already-computed encoder feature e.
Vec vpu_robust_from_feature(const Vec& e, double beta);

// Analytic Jacobian of the robust output w.r.t. e. Equals the Jacobian of
// e/‖e‖ alone; the detached residual contributes nothing.
Mat vpu_robust_jacobian(const Vec& e);

// sigma(theta2·ReLU(theta1·feat + b1) + b2), feat = batch mean (literal mode)
// or each sample (per-sample mode).
std::vector<double> estimate_difficulty(const std::vector<Embedding>& batch_features,
                                        const VisualUnitParams& params, bool per_sample);
double estimate_difficulty_scalar(const std::vector<Embedding>& batch_features,
                                  const VisualUnitParams& params);

StrategyTag select_strategy(double delta, double tau_lo, double tau_hi);

// ---------------------------------------------------------------------------
// Linguistic Context Unit operations
// ---------------------------------------------------------------------------

enum class TextMode { Standard, Contextual };

struct CtxIntegrateCache {
    Vec input;        // h
    Vec hidden_pre;   // theta3·h + b3
    Vec hidden_act;   // ReLU of the above
    Vec output;
};

Vec ctx_integrate(const Vec& h, const LinguisticUnitParams& params, CtxIntegrateCache* cache = nullptr);

struct CtxIntegrateGrads {
    Mat d_theta3;
    Vec d_b3;
    Mat d_theta4;
    Vec d_b4;
    Vec d_input;
};

CtxIntegrateGrads ctx_integrate_backward(const CtxIntegrateCache& cache,
                                         const LinguisticUnitParams& params, const Vec& d_output);
void ctx_integrate_backward_into(const CtxIntegrateCache& cache, const LinguisticUnitParams& params,
                                 const Vec& d_output, Mat& d_theta3, Vec& d_b3, Mat& d_theta4,
                                 Vec& d_b4, Vec& d_input);

struct LcuEncodeCache {
    TextEncodeCache text;
    bool contextual = false;
    bool simple_concat = false;
    Vec concat_input;            // [psi_std; c]
    CtxIntegrateCache ctx;
    Vec fused;
};

// Standard: encode_text of the prompt tokens. Contextual:
// lambda·psi_std + (1-lambda)·G_ctx([psi_std; c]).
Embedding lcu_encode(const std::vector<Vec>& prompt_tokens, TextMode mode,
                     const std::optional<Vec>& visual_context, const LinguisticUnitParams& params,
                     const FrozenEncoders& enc, bool simple_concat = false,
                     LcuEncodeCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Nominal Embedding Unit operations
// ---------------------------------------------------------------------------

NameTable neu_init_concepts(const std::vector<std::string>& ood_names, size_t n_c, uint64_t seed,
                            const PretrainedVocab& vocab);

struct PromptBuild {
    std::vector<Vec> token_vectors;
    std::vector<size_t> name_positions;  // positions holding the concept mean
    size_t token_count = 0;
};

// Render template with the concept name, tokenize, then substitute the mean
// of the concept's learned vectors at every name-token position.
PromptBuild neu_generate_prompt(const std::string& concept_name, const NameTable& table,
                                const PromptTemplate& tmpl, const PretrainedVocab& vocab);

// Plain prompt with vocabulary lookups only (OOD names collapse to UNK).
PromptBuild build_vocab_prompt(const std::string& name, const PromptTemplate& tmpl,
                               const PretrainedVocab& vocab);

// Standard description of every concept plus each ordered swap
// template_{c'}(c), c' != c.
std::vector<std::pair<std::string, std::string>> neu_context_exchange(
    const std::vector<std::string>& concepts, const std::vector<PromptTemplate>& template_bank);

// ---------------------------------------------------------------------------
// Global Coordinator operations
// ---------------------------------------------------------------------------

double gc_temperature(double kappa_param);
double gc_temperature_grad(double kappa_param);

// ---------------------------------------------------------------------------
// Coordination round
// ---------------------------------------------------------------------------

struct TextDescCache {
    LcuEncodeCache lcu;
    std::vector<size_t> name_positions;
    size_t token_count = 0;
    int concept_index = -1;  // index into NameTable, -1 when no injection
};

struct ClassTextCache {
    std::string class_name;
    int concept_index = -1;
    std::vector<TextDescCache> descriptions;
    Vec feature;  // mean over fused description embeddings
};

struct StepOutputs {
    std::vector<Vec> encoder_features;     // e_i = E_v(z_i)
    std::vector<Embedding> visual_features;  // strategy-dependent Phi_i
    Vec visual_context;
    double difficulty = 0.0;
    StrategyTag strategy = StrategyTag::Standard;
    std::vector<ClassTextCache> text;      // one entry per distinct batch class
    std::vector<int> labels;               // per sample, index into `text`
    double kappa = 1.0;
    double w_con = 0.5;
    double w_cls = 0.5;
};

struct AgentSet;  // forward declaration

struct TrainBatch {
    std::vector<size_t> sample_ids;
    std::vector<size_t> class_ids;  // benchmark class ids, parallel to sample_ids
};

class Agent {
  public:
    explicit Agent(AgentId id) : id_(id) {}
    virtual ~Agent() = default;
    AgentId id() const { return id_; }

    AgentState make_state() const;
    void check_state(const AgentState& state) const;

  private:
    AgentId id_;
};

struct AdapterView {
    const VisualUnitParams* visual = nullptr;
    const LinguisticUnitParams* linguistic = nullptr;
    const NameTable* names = nullptr;
    const CoordinatorParams* coordinator = nullptr;
};

struct VisualStepOutput {
    std::vector<Message> messages;
    std::vector<Vec> encoder_features;
    std::vector<Embedding> visual_features;
    Vec context;
    double difficulty = 0.0;
    StrategyTag strategy = StrategyTag::Standard;
};

class VisualAgent : public Agent {
  public:
    VisualAgent(const VisualUnitParams& params, const FrozenEncoders& enc, const AblationFlags& flags,
                bool per_sample_difficulty)
        : Agent(AgentId::Visual), params_(params), enc_(enc), flags_(flags),
          per_sample_(per_sample_difficulty) {}

    // inputs: drained messages (raw batch from the coordinator)
    std::pair<VisualStepOutput, AgentState> step(const std::vector<Message>& inbox,
                                                 const AgentState& state, int step_index) const;

  private:
    const VisualUnitParams& params_;
    const FrozenEncoders& enc_;
    AblationFlags flags_;
    bool per_sample_;
};

struct NominalStepOutput {
    std::vector<Message> messages;
};

class NominalAgent : public Agent {
  public:
    NominalAgent(const NameTable& table, const PretrainedVocab& vocab, const AblationFlags& flags)
        : Agent(AgentId::Nominal), table_(table), vocab_(vocab), flags_(flags) {}

    std::pair<NominalStepOutput, AgentState> step(const std::vector<Message>& inbox,
                                                  const AgentState& state, int step_index) const;

  private:
    const NameTable& table_;
    const PretrainedVocab& vocab_;
    AblationFlags flags_;
};

struct LinguisticStepOutput {
    std::vector<Message> messages;
    std::vector<ClassTextCache> text;
};

class LinguisticAgent : public Agent {
  public:
    LinguisticAgent(const LinguisticUnitParams& params, const FrozenEncoders& enc,
                    const AblationFlags& flags)
        : Agent(AgentId::Linguistic), params_(params), enc_(enc), flags_(flags) {}

    std::pair<LinguisticStepOutput, AgentState> step(const std::vector<Message>& inbox,
                                                     const AgentState& state, int step_index) const;

  private:
    const LinguisticUnitParams& params_;
    const FrozenEncoders& enc_;
    AblationFlags flags_;
};

class CoordinatorAgent : public Agent {
  public:
    CoordinatorAgent(const CoordinatorParams& params, const AblationFlags& flags)
        : Agent(AgentId::Coordinator), params_(params), flags_(flags) {}

    std::pair<StepOutputs, AgentState> collect(const std::vector<Message>& inbox,
                                               const AgentState& state,
                                               const std::vector<ClassTextCache>& text,
                                               const std::vector<int>& labels) const;

  private:
    const CoordinatorParams& params_;
    AblationFlags flags_;
};

struct AgentSet {
    VisualAgent visual;
    NominalAgent nominal;
    LinguisticAgent linguistic;
    CoordinatorAgent coordinator;
    AblationFlags flags;
    AgentState visual_state;
    AgentState nominal_state;
    AgentState linguistic_state;
    AgentState coordinator_state;

    AgentSet(const AdapterView& view, const FrozenEncoders& enc, const PretrainedVocab& vocab,
             const AblationFlags& flags, bool per_sample_difficulty);
};

// One full coordination round over a batch: the coordinator seeds the round
// by posting the raw batch, then Omega_V -> (Omega_N, Omega_L) -> Omega_L ->
// Omega_C in fixed order. Every agent input travels through the bus, so a
// round can be replayed from the trace alone.
StepOutputs gc_coordinate(MessageBus& bus, AgentSet& agents, const Benchmark& benchmark,
                          const TrainBatch& batch, int step_index);

// Deterministic class order of a batch: distinct class ids in first-seen order.
std::vector<size_t> batch_class_order(const TrainBatch& batch);

}  // namespace synernet
