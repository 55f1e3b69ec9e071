#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "synernet/common.hpp"

namespace synernet {

enum class Modality { Visual, Text };

struct Embedding {
    Vec values;
    Modality modality = Modality::Visual;
    bool normalized = false;
};

// Whitespace tokenizer: lowercase, punctuation stripped. Stable across calls.
std::vector<std::string> tokenize(const std::string& text);

struct PromptTemplate {
    std::string text;  // contains exactly one "{}" placeholder
    std::optional<std::string> owner_concept;
};

std::string render_prompt(const PromptTemplate& tmpl, const std::string& name);

// Canonical template used for evaluation-time prompts and the fixed list the
// per-concept template bank is drawn from. All template words are folded into
// the pretrained vocabulary at dataset generation time.
const std::vector<std::string>& builtin_template_texts();
PromptTemplate canonical_template();
PromptTemplate template_for_concept(size_t concept_index, const std::string& owner);

// Token -> vector table emulating a pretrained text vocabulary. Unknown
// tokens all map to the shared `unk` vector; that collision is what collapses
// OOD names.
struct PretrainedVocab {
    std::vector<std::string> words;
    std::vector<std::vector<float>> vectors;  // parallel to words, d_tok each
    std::vector<float> unk;
    uint64_t seed = 0;

    std::unordered_map<std::string, size_t> index;

    void rebuild_index();
    bool contains(const std::string& token) const { return index.count(token) != 0; }
    const std::vector<float>& token_vector(const std::string& token) const;
    bool all_unknown(const std::string& name) const;
};

// Cache of the encode_text forward pass, consumed by encode_text_backward.
struct TextEncodeCache {
    size_t token_count = 0;
    Vec token_mean;
    Vec pre_norm;       // y = W_t · mean
    double pre_norm_len = 0.0;
    Vec embedding;      // y / ‖y‖
};

// Frozen visual/text feature maps. Weights are seed-determined, stored as
// f32, and never change after construction; content_hash() guards that.
struct FrozenEncoders {
    uint64_t seed = 0;
    size_t d_raw = 0;
    size_t d_embed = 0;
    size_t d_tok = 0;
    std::vector<float> w_visual;  // d_embed x d_raw, row-major
    std::vector<float> w_text;    // d_embed x d_tok, row-major

    static FrozenEncoders create(uint64_t seed, size_t d_raw, size_t d_embed, size_t d_tok);

    // tanh(W_v · raw)
    Embedding encode_image(const std::vector<float>& raw) const;
    Embedding encode_image(const Vec& raw) const;

    // normalize(W_t · mean(token_vectors)); differentiable w.r.t. the tokens
    Embedding encode_text(const std::vector<Vec>& token_vectors) const;
    Embedding encode_text(const std::vector<Vec>& token_vectors, TextEncodeCache* cache) const;

    // Per-token gradients for an upstream d(loss)/d(embedding).
    std::vector<Vec> encode_text_backward(const TextEncodeCache& cache, const Vec& d_embedding) const;
    // Gradient w.r.t. the token mean; callers divide by token count or route
    // shares into learned name vectors.
    Vec encode_text_backward_mean(const TextEncodeCache& cache, const Vec& d_embedding) const;

    Vec text_pre_normalize(const Vec& token_mean) const;  // W_t · m

    std::string content_hash(const PretrainedVocab& vocab) const;
};

// Embedding source used by evaluation: either run the frozen visual encoder
// or serve precomputed rows loaded from a flat f32 file.
class FeatureProvider {
  public:
    virtual ~FeatureProvider() = default;
    virtual Embedding visual(size_t sample_id) const = 0;
};

class EncoderFeatureProvider : public FeatureProvider {
  public:
    EncoderFeatureProvider(const FrozenEncoders& enc, const std::vector<float>& samples, size_t d_raw)
        : enc_(enc), samples_(samples), d_raw_(d_raw) {}
    Embedding visual(size_t sample_id) const override;

  private:
    const FrozenEncoders& enc_;
    const std::vector<float>& samples_;
    size_t d_raw_;
};

class PrecomputedFeatureProvider : public FeatureProvider {
  public:
    PrecomputedFeatureProvider(std::vector<float> rows, size_t d_embed);
    static PrecomputedFeatureProvider load(const std::string& path, size_t d_embed);
    Embedding visual(size_t sample_id) const override;
    size_t count() const { return rows_.size() / d_embed_; }

  private:
    std::vector<float> rows_;
    size_t d_embed_;
};

}  // namespace synernet
