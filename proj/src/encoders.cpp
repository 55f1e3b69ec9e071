#include "synernet/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace synernet {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            continue;
        }
        if (std::isalnum(static_cast<unsigned char>(ch)))
            cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

static size_t placeholder_pos(const std::string& text) {
    const size_t pos = text.find("{}");
    if (pos == std::string::npos) fail(Errc::invalid_argument, "template has no {} placeholder: " + text);
    if (text.find("{}", pos + 2) != std::string::npos)
        fail(Errc::invalid_argument, "template has more than one placeholder: " + text);
    return pos;
}

std::string render_prompt(const PromptTemplate& tmpl, const std::string& name) {
    const size_t pos = placeholder_pos(tmpl.text);
    std::string out = tmpl.text;
    out.replace(pos, 2, name);
    return out;
}

const std::vector<std::string>& builtin_template_texts() {
    static const std::vector<std::string> texts = {
        "a photo of {}",
        "a painting of {}",
        "a sketch of {}",
        "a blurry picture of {}",
        "a close shot of {}",
        "a drawing of {}",
        "a bright image of {}",
        "a dark scene with {}",
        "a cropped view of {}",
        "a grainy snapshot of {}",
        "a detailed render of {}",
        "a faded print of {}",
        "a wide frame around {}",
        "a tiny figure of {}",
        "a colorful poster of {}",
        "a plain backdrop behind {}",
    };
    return texts;
}

PromptTemplate canonical_template() {
    return PromptTemplate{builtin_template_texts()[0], std::nullopt};
}

PromptTemplate template_for_concept(size_t concept_index, const std::string& owner) {
    const auto& texts = builtin_template_texts();
    return PromptTemplate{texts[concept_index % texts.size()], owner};
}

// ---------------------------------------------------------------------------
// PretrainedVocab
// ---------------------------------------------------------------------------

void PretrainedVocab::rebuild_index() {
    index.clear();
    for (size_t i = 0; i < words.size(); ++i) index[words[i]] = i;
}

const std::vector<float>& PretrainedVocab::token_vector(const std::string& token) const {
    auto it = index.find(token);
    if (it == index.end()) return unk;
    return vectors[it->second];
}

bool PretrainedVocab::all_unknown(const std::string& name) const {
    const auto toks = tokenize(name);
    if (toks.empty()) return false;
    for (const auto& t : toks)
        if (contains(t)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// FrozenEncoders
// ---------------------------------------------------------------------------

FrozenEncoders FrozenEncoders::create(uint64_t seed, size_t d_raw, size_t d_embed, size_t d_tok) {
    FrozenEncoders enc;
    enc.seed = seed;
    enc.d_raw = d_raw;
    enc.d_embed = d_embed;
    enc.d_tok = d_tok;

    Rng rv(derive_seed(seed, 0x76697375616cULL));  // visual stream
    enc.w_visual.resize(d_embed * d_raw);
    const double sv = 1.0 / std::sqrt(double(d_raw));
    for (float& w : enc.w_visual) w = float(rv.gaussian() * sv);

    Rng rt(derive_seed(seed, 0x74657874ULL));  // text stream
    enc.w_text.resize(d_embed * d_tok);
    const double st = 1.0 / std::sqrt(double(d_tok));
    for (float& w : enc.w_text) w = float(rt.gaussian() * st);
    return enc;
}

Embedding FrozenEncoders::encode_image(const std::vector<float>& raw) const {
    Vec v(raw.begin(), raw.end());
    return encode_image(v);
}

Embedding FrozenEncoders::encode_image(const Vec& raw) const {
    if (raw.size() != d_raw)
        fail(Errc::dimension_mismatch,
             "encode_image: expected d_raw=" + std::to_string(d_raw) + ", got " + std::to_string(raw.size()));
    Embedding out;
    out.modality = Modality::Visual;
    out.normalized = false;
    out.values.resize(d_embed);
    for (size_t r = 0; r < d_embed; ++r) {
        double acc = 0.0;
        const float* row = &w_visual[r * d_raw];
        for (size_t c = 0; c < d_raw; ++c) acc += double(row[c]) * raw[c];
        out.values[r] = std::tanh(acc);
    }
    return out;
}

Vec FrozenEncoders::text_pre_normalize(const Vec& token_mean) const {
    if (token_mean.size() != d_tok) fail(Errc::dimension_mismatch, "text_pre_normalize: bad token dim");
    Vec y(d_embed, 0.0);
    for (size_t r = 0; r < d_embed; ++r) {
        double acc = 0.0;
        const float* row = &w_text[r * d_tok];
        for (size_t c = 0; c < d_tok; ++c) acc += double(row[c]) * token_mean[c];
        y[r] = acc;
    }
    return y;
}

Embedding FrozenEncoders::encode_text(const std::vector<Vec>& token_vectors) const {
    return encode_text(token_vectors, nullptr);
}

Embedding FrozenEncoders::encode_text(const std::vector<Vec>& token_vectors, TextEncodeCache* cache) const {
    if (token_vectors.empty()) fail(Errc::invalid_argument, "encode_text: empty token list");
    Vec mean(d_tok, 0.0);
    for (const Vec& t : token_vectors) {
        if (t.size() != d_tok) fail(Errc::dimension_mismatch, "encode_text: bad token dim");
        axpy(mean, 1.0, t);
    }
    for (double& x : mean) x /= double(token_vectors.size());

    Vec y = text_pre_normalize(mean);
    const double len = norm2(y);
    if (len == 0.0) fail(Errc::degenerate, "encode_text: zero pre-normalization output");

    Embedding out;
    out.modality = Modality::Text;
    out.normalized = true;
    out.values = y;
    for (double& x : out.values) x /= len;

    if (cache) {
        cache->token_count = token_vectors.size();
        cache->token_mean = mean;
        cache->pre_norm = y;
        cache->pre_norm_len = len;
        cache->embedding = out.values;
    }
    return out;
}

Vec FrozenEncoders::encode_text_backward_mean(const TextEncodeCache& cache, const Vec& d_embedding) const {
    // psi = y/‖y‖ -> d y = (g - psi <psi,g>) / ‖y‖, then dm = W_t^T dy.
    const Vec& psi = cache.embedding;
    const double proj = dot(psi, d_embedding);
    Vec dy(d_embed);
    for (size_t i = 0; i < d_embed; ++i) dy[i] = (d_embedding[i] - psi[i] * proj) / cache.pre_norm_len;

    Vec dm(d_tok, 0.0);
    for (size_t r = 0; r < d_embed; ++r) {
        const float* row = &w_text[r * d_tok];
        for (size_t c = 0; c < d_tok; ++c) dm[c] += double(row[c]) * dy[r];
    }
    return dm;
}

std::vector<Vec> FrozenEncoders::encode_text_backward(const TextEncodeCache& cache,
                                                      const Vec& d_embedding) const {
    Vec dm = encode_text_backward_mean(cache, d_embedding);
    for (double& x : dm) x /= double(cache.token_count);
    return std::vector<Vec>(cache.token_count, dm);
}

std::string FrozenEncoders::content_hash(const PretrainedVocab& vocab) const {
    Fnv1a h;
    const uint64_t dims[3] = {d_raw, d_embed, d_tok};
    h.update(dims, sizeof(dims));
    h.update_f32(w_visual);
    h.update_f32(w_text);
    for (size_t i = 0; i < vocab.words.size(); ++i) {
        h.update_str(vocab.words[i]);
        h.update_f32(vocab.vectors[i]);
    }
    h.update_f32(vocab.unk);
    return h.hex();
}

// ---------------------------------------------------------------------------
// Feature providers
// ---------------------------------------------------------------------------

Embedding EncoderFeatureProvider::visual(size_t sample_id) const {
    std::vector<float> row(samples_.begin() + long(sample_id * d_raw_),
                           samples_.begin() + long((sample_id + 1) * d_raw_));
    return enc_.encode_image(row);
}

PrecomputedFeatureProvider::PrecomputedFeatureProvider(std::vector<float> rows, size_t d_embed)
    : rows_(std::move(rows)), d_embed_(d_embed) {
    if (d_embed_ == 0 || rows_.size() % d_embed_ != 0)
        fail(Errc::dimension_mismatch, "precomputed features: size not a multiple of d_embed");
}

PrecomputedFeatureProvider PrecomputedFeatureProvider::load(const std::string& path, size_t d_embed) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::io, "cannot open " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff bytes = f.tellg();
    f.seekg(0);
    if (bytes < 0 || bytes % std::streamoff(sizeof(float)) != 0)
        fail(Errc::io, "bad f32 file size: " + path);
    std::vector<float> rows(size_t(bytes) / sizeof(float));
    f.read(reinterpret_cast<char*>(rows.data()), bytes);
    if (!f) fail(Errc::io, "short read: " + path);
    return PrecomputedFeatureProvider(std::move(rows), d_embed);
}

Embedding PrecomputedFeatureProvider::visual(size_t sample_id) const {
    if ((sample_id + 1) * d_embed_ > rows_.size())
        fail(Errc::invalid_argument, "precomputed features: sample id out of range");
    Embedding out;
    out.modality = Modality::Visual;
    out.normalized = false;
    out.values.assign(rows_.begin() + long(sample_id * d_embed_),
                      rows_.begin() + long((sample_id + 1) * d_embed_));
    return out;
}

}  // namespace synernet
