#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synernet/adapter.hpp"
#include "synernet/objectives.hpp"

namespace synernet {

struct TrainConfig {
    int K = 16;
    int epochs = 4000;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    uint64_t seed = 0;
    std::vector<double> lr_grid;  // optional; each value must lie in [1e-5, 1e-3]
    AblationFlags ablation;
    AdapterInitConfig adapter;
    bool per_sample_difficulty = false;
};

struct StepRecord {
    int step = 0;
    LossBundle bundle;
    double lr = 0.0;
};

struct TrainResult {
    AdapterParams params;
    std::vector<StepRecord> log;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double lr_used = 0.0;
    std::string backbone_hash;
    std::string adapter_hash;
    std::vector<Message> first_step_trace;  // replayable record of step 0
};

enum class VocabularyMode { OodOnly, Composite };

struct EvalReport {
    VocabularyMode mode = VocabularyMode::Composite;
    std::map<std::string, double> per_class;
    double ood_top1 = 0.0;
    double sc_top1 = -1.0;        // -1 when the mode has no SEEN samples
    double composite_top1 = 0.0;
    size_t n_samples = 0;
    std::string backbone_hash;
};

struct SeedAggregate {
    std::vector<uint64_t> seeds;
    std::vector<double> values;
    double mean = 0.0;
    double stddev = 0.0;
};

SeedAggregate aggregate(const std::vector<uint64_t>& seeds, const std::vector<double>& values);

// Full-batch AdamW training with cosine-annealed lr over the K-shot split.
// Only adapter parameters change; the frozen-backbone hash is checked before
// and after.
TrainResult train_few_shot(const Benchmark& benchmark, const DatasetSplit& split,
                           const TrainConfig& config);

// Top-1 accuracy of the zero-shot softmax classifier over the requested vocabulary.
EvalReport evaluate(const Benchmark& benchmark, const DatasetSplit& split, AdapterParams& params,
                    VocabularyMode mode, const TrainConfig& config,
                    const FeatureProvider* provider = nullptr);

// Accuracy bookkeeping shared by evaluate(); exposed for oracle tests.
EvalReport accuracy_from_predictions(const Benchmark& benchmark,
                                     const std::vector<std::pair<size_t, size_t>>& samples,
                                     const std::vector<size_t>& predicted_class_ids,
                                     VocabularyMode mode);

struct AblationRow {
    std::string variant;
    double mean = 0.0;
    double stddev = 0.0;
    double drop = 0.0;  // full mean - variant mean
    std::vector<double> per_seed;
};

// The nine Table-style variants, in fixed order, mean±std composite accuracy
// over the given seeds.
std::vector<AblationRow> run_ablation(const Benchmark& benchmark, int K,
                                      const std::vector<uint64_t>& seeds,
                                      const TrainConfig& base_config, int jobs = 1);

const std::vector<std::string>& ablation_variant_names();

std::string ablation_csv(const std::vector<AblationRow>& rows);

struct GradCheckGroup {
    std::string group;
    double max_rel_err = 0.0;
    double max_abs_analytic = 0.0;
    size_t param_count = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_err = 0.0;
    bool passed = false;
    double tolerance = 0.0;
};

// Central finite differences of J_total against the analytic gradients for
// every trainable scalar, on a batch of at most 8.
GradCheckReport grad_check(AdapterParams& params, const Benchmark& benchmark,
                           const TrainConfig& config, double tolerance, uint64_t batch_seed = 0);

// Forward + analytic backward of one full training step. Exposed for grad
// checking and the replay test.
struct StepEval {
    LossBundle bundle;
    StepOutputs outputs;
    std::vector<Message> trace;
};

// `agents` may carry persistent agent states across a run; when null a fresh
// set is used for the single round.
StepEval eval_train_step(const Benchmark& benchmark, const TrainBatch& batch,
                         AdapterParams& params, const TrainConfig& config,
                         AdapterParams* grads, int step_index = 0, AgentSet* agents = nullptr);

// Re-run the linguistic/visual agents from the inbound messages recorded in a
// trace and return the recomputed outbound feature payloads.
struct ReplayResult {
    std::vector<Embedding> visual_features;
    std::vector<Embedding> text_features;
};

ReplayResult replay_round(const std::vector<Message>& trace, AdapterParams& params,
                          const Benchmark& benchmark, const TrainConfig& config);

TrainBatch batch_from_split(const DatasetSplit& split);

// Per-run artifacts.
void write_training_log(const std::vector<StepRecord>& log, const std::string& path);
void dump_embeddings(const Benchmark& benchmark, const DatasetSplit& split, AdapterParams& params,
                     const TrainConfig& config, const std::string& dir);

}  // namespace synernet
