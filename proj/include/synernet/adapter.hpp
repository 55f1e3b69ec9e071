#pragma once

#include <string>
#include <vector>

#include "synernet/agents.hpp"

namespace synernet {

// Everything the optimizer may touch, plus the fixed hyperparameters the
// agents read. Gradients reuse the same layout.
struct AdapterParams {
    VisualUnitParams visual;
    LinguisticUnitParams linguistic;
    NameTable names;
    CoordinatorParams coordinator;
    Mat cls_head;  // n_train_classes x d_embed

    // Non-trainable buffer: the linguistic unit's remembered visual context
    // from training, reused as the fusion input at evaluation time.
    Vec train_context;

    AdapterView view() const { return AdapterView{&visual, &linguistic, &names, &coordinator}; }
};

struct ParamBlockRef {
    std::string name;
    double* data = nullptr;
    size_t size = 0;
};

// Trainable blocks only (beta, lambda, thresholds stay fixed).
std::vector<ParamBlockRef> param_blocks(AdapterParams& params);

struct AdapterInitConfig {
    size_t n_c = 2;
    double beta = 0.5;
    double lambda = 0.7;
    double tau_lo = 0.33;
    double tau_hi = 0.66;
    // Difficulty head bias; positive so the default regime starts in the
    // augmented tier (only OOD data is seen in training, so samples are
    // presumed hard until the head says otherwise).
    double difficulty_bias = 1.0;
};

AdapterParams init_adapter(const Benchmark& benchmark, const AdapterInitConfig& config, uint64_t seed);

// Zeroed gradients with the same block layout as `params`.
AdapterParams zero_like(const AdapterParams& params);

size_t total_param_count(AdapterParams& params);

std::string adapter_content_hash(AdapterParams& params);

// adapter.json (schema, block table, hashes) + adapter.f32 (block data).
void save_adapter(AdapterParams& params, const std::string& dir, const std::string& backbone_hash);
AdapterParams load_adapter(const std::string& dir, const Benchmark& benchmark);

}  // namespace synernet
