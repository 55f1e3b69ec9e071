#include "synernet/datagen.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <set>

#include <json.hpp>

namespace synernet {

namespace fs = std::filesystem;
using nlohmann::json;

static constexpr int kFormatVersion = 1;
static const int kAllowedShots[] = {1, 2, 4, 8, 16};

// ---------------------------------------------------------------------------
// Benchmark accessors
// ---------------------------------------------------------------------------

std::vector<float> Benchmark::sample_copy(size_t sample_id) const {
    const float* row = sample_row(sample_id);
    return std::vector<float>(row, row + config.d_raw);
}

size_t Benchmark::class_of_sample(size_t sample_id) const {
    for (size_t c = classes.size(); c-- > 0;)
        if (sample_id >= class_offsets[c]) return c;
    fail(Errc::invalid_argument, "sample id out of range");
}

std::vector<size_t> Benchmark::ood_class_ids() const {
    std::vector<size_t> out;
    for (size_t c = 0; c < classes.size(); ++c)
        if (classes[c].tag == ClassTag::Ood) out.push_back(c);
    return out;
}

std::vector<size_t> Benchmark::seen_class_ids() const {
    std::vector<size_t> out;
    for (size_t c = 0; c < classes.size(); ++c)
        if (classes[c].tag == ClassTag::Seen) out.push_back(c);
    return out;
}

bool operator==(const Benchmark& a, const Benchmark& b) {
    return a.config == b.config && a.seed == b.seed && a.classes == b.classes &&
           a.samples == b.samples && a.class_offsets == b.class_offsets &&
           a.vocab.words == b.vocab.words && a.vocab.vectors == b.vocab.vectors &&
           a.vocab.unk == b.vocab.unk && a.vocab.seed == b.vocab.seed &&
           a.encoders.seed == b.encoders.seed && a.encoders.d_raw == b.encoders.d_raw &&
           a.encoders.d_embed == b.encoders.d_embed && a.encoders.d_tok == b.encoders.d_tok &&
           a.encoders.w_visual == b.encoders.w_visual && a.encoders.w_text == b.encoders.w_text;
}

// ---------------------------------------------------------------------------
// Name and vocabulary construction
// ---------------------------------------------------------------------------

static std::string make_word(Rng& rng) {
    static const char* cons = "bcdfgklmnprstvz";
    static const char* vows = "aeiou";
    const size_t n_cons = 15, n_vows = 5;
    std::string w;
    const size_t syllables = 2 + rng.index(2);
    for (size_t s = 0; s < syllables; ++s) {
        w.push_back(cons[rng.index(n_cons)]);
        w.push_back(vows[rng.index(n_vows)]);
    }
    if (rng.index(2) == 0) w.push_back(cons[rng.index(n_cons)]);
    return w;
}

static std::vector<std::string> template_words() {
    std::set<std::string> words;
    for (const auto& t : builtin_template_texts())
        for (const auto& tok : tokenize(render_prompt(PromptTemplate{t, std::nullopt}, "x")))
            if (tok != "x") words.insert(tok);
    return std::vector<std::string>(words.begin(), words.end());
}

static std::vector<float> random_unit_f32(Rng& rng, size_t dim) {
    Vec v(dim);
    for (double& x : v) x = rng.gaussian();
    v = normalized(v);
    std::vector<float> out(dim);
    for (size_t i = 0; i < dim; ++i) out[i] = float(v[i]);
    return out;
}

// Least-squares preimage of `target` under W_t (exact when d_tok == d_embed).
static Vec text_preimage(const FrozenEncoders& enc, const Vec& target) {
    Mat gram(enc.d_embed, enc.d_embed);
    for (size_t i = 0; i < enc.d_embed; ++i)
        for (size_t j = 0; j < enc.d_embed; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < enc.d_tok; ++k)
                acc += double(enc.w_text[i * enc.d_tok + k]) * double(enc.w_text[j * enc.d_tok + k]);
            gram.at(i, j) = acc;
        }
    Vec z = solve_linear(gram, target);
    Vec u(enc.d_tok, 0.0);
    for (size_t r = 0; r < enc.d_embed; ++r)
        for (size_t c = 0; c < enc.d_tok; ++c) u[c] += double(enc.w_text[r * enc.d_tok + c]) * z[r];
    return u;
}

// ---------------------------------------------------------------------------
// generate_benchmark
// ---------------------------------------------------------------------------

static void validate_config(const BenchmarkConfig& cfg) {
    if (cfg.n_seen < 2) fail(Errc::invalid_argument, "n_seen must be >= 2");
    if (cfg.n_ood < 2) fail(Errc::invalid_argument, "n_ood must be >= 2");
    if (cfg.d_raw < 4) fail(Errc::invalid_argument, "d_raw must be >= 4");
    if (cfg.samples_per_class < 36) fail(Errc::invalid_argument, "samples per class must be >= 36");
    if (cfg.spread <= 0.0) fail(Errc::invalid_argument, "spread must be positive");
    if (cfg.d_embed < 2 || cfg.d_tok < 2) fail(Errc::invalid_argument, "embedding dims must be >= 2");
}

Benchmark generate_benchmark(const BenchmarkConfig& config, uint64_t seed) {
    validate_config(config);
    Benchmark bench;
    bench.config = config;
    bench.seed = seed;

    const size_t n_classes = config.n_seen + config.n_ood;

    // Class names: synthetic words, unique, disjoint from template words.
    const auto reserved_words = template_words();
    std::set<std::string> taken(reserved_words.begin(), reserved_words.end());
    Rng name_rng(derive_seed(seed, 0x6e616d6573ULL));
    std::vector<std::string> names;
    while (names.size() < n_classes) {
        std::string w = make_word(name_rng);
        if (taken.insert(w).second) names.push_back(w);
    }

    // Class means with a minimum-separation guarantee.
    Rng mean_rng(derive_seed(seed, 0x6d65616e73ULL));
    const double required = config.min_sep_factor * config.spread;
    std::vector<Vec> means;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
        means.assign(n_classes, Vec(config.d_raw));
        for (auto& m : means)
            for (double& x : m) x = mean_rng.gaussian() * config.mean_scale;
        ok = true;
        for (size_t a = 0; a < n_classes && ok; ++a)
            for (size_t b = a + 1; b < n_classes && ok; ++b) {
                Vec d = means[a];
                axpy(d, -1.0, means[b]);
                if (norm2(d) <= required) ok = false;
            }
    }
    if (!ok)
        fail(Errc::degenerate,
             "could not satisfy the class-separation constraint in 1000 attempts (spread too "
             "large for the mean scale)");

    bench.classes.resize(n_classes);
    for (size_t c = 0; c < n_classes; ++c) {
        bench.classes[c].name = names[c];
        bench.classes[c].tag = c < config.n_seen ? ClassTag::Seen : ClassTag::Ood;
        bench.classes[c].mean = means[c];
        bench.classes[c].spread = config.spread;
        bench.classes[c].n_samples = config.samples_per_class;
    }

    // Samples: isotropic Gaussian clusters, stored as f32 so persistence is
    // bit-exact.
    bench.samples.resize(n_classes * config.samples_per_class * config.d_raw);
    bench.class_offsets.resize(n_classes);
    for (size_t c = 0; c < n_classes; ++c) {
        bench.class_offsets[c] = c * config.samples_per_class;
        Rng srng(derive_seed(seed, 0x73616d70ULL + c));
        float* dst = &bench.samples[bench.class_offsets[c] * config.d_raw];
        for (size_t s = 0; s < config.samples_per_class; ++s)
            for (size_t d = 0; d < config.d_raw; ++d)
                *dst++ = float(means[c][d] + config.spread * srng.gaussian());
    }

    bench.encoders = FrozenEncoders::create(seed, config.d_raw, config.d_embed, config.d_tok);

    // Vocabulary: template words + SEEN class names. OOD names stay out, so
    // they tokenize entirely to UNK and their text embeddings collapse.
    PretrainedVocab& vocab = bench.vocab;
    vocab.seed = seed;
    Rng vrng(derive_seed(seed, 0x766f636162ULL));
    for (const auto& w : reserved_words) {
        vocab.words.push_back(w);
        vocab.vectors.push_back(random_unit_f32(vrng, config.d_tok));
    }
    vocab.unk = random_unit_f32(vrng, config.d_tok);
    for (size_t c = 0; c < config.n_seen; ++c) {
        vocab.words.push_back(bench.classes[c].name);
        vocab.vectors.push_back(random_unit_f32(vrng, config.d_tok));
    }
    vocab.rebuild_index();

    // Pretraining stand-in: solve each SEEN name vector so the canonical
    // prompt embedding points at the class's mean visual direction. This is
    // what gives the substrate its seen-concept alignment while OOD names
    // stay blind.
    const PromptTemplate canon = canonical_template();
    const auto canon_tokens = tokenize(render_prompt(canon, "x"));
    for (size_t c = 0; c < config.n_seen; ++c) {
        Vec dir(config.d_embed, 0.0);
        for (size_t s = 0; s < config.samples_per_class; ++s) {
            const size_t id = bench.class_offsets[c] + s;
            Embedding e = bench.encoders.encode_image(bench.sample_copy(id));
            axpy(dir, 1.0, normalized(e.values));
        }
        dir = normalized(dir);

        Vec ctx_sum(config.d_tok, 0.0);
        size_t n_tokens = 0;
        for (const auto& tok : canon_tokens) {
            ++n_tokens;
            if (tok == "x") continue;
            const auto& v = vocab.token_vector(tok);
            for (size_t i = 0; i < config.d_tok; ++i) ctx_sum[i] += double(v[i]);
        }

        Vec u = text_preimage(bench.encoders, dir);
        u = normalized(u);
        auto& nv = vocab.vectors[vocab.index.at(bench.classes[c].name)];
        for (size_t i = 0; i < config.d_tok; ++i)
            nv[i] = float(double(n_tokens) * u[i] - ctx_sum[i]);
    }

    for (size_t c = 0; c < n_classes; ++c) {
        const bool known = vocab.contains(bench.classes[c].name);
        const bool seen = bench.classes[c].tag == ClassTag::Seen;
        if (known != seen)
            fail(Errc::degenerate, "vocabulary construction violated the seen/ood contract");
    }
    return bench;
}

// ---------------------------------------------------------------------------
// make_split
// ---------------------------------------------------------------------------

DatasetSplit make_split(const Benchmark& benchmark, int K, uint64_t seed) {
    if (std::find(std::begin(kAllowedShots), std::end(kAllowedShots), K) == std::end(kAllowedShots))
        fail(Errc::invalid_argument, "K must be one of {1,2,4,8,16}, got " + std::to_string(K));
    for (size_t c : benchmark.ood_class_ids())
        if (benchmark.classes[c].n_samples < size_t(K) + 20)
            fail(Errc::invalid_argument,
                 "class " + benchmark.classes[c].name + " has fewer than K+20 samples");

    DatasetSplit split;
    split.K = K;
    split.seed = seed;

    std::vector<char> in_train(benchmark.sample_count(), 0);
    for (size_t c : benchmark.ood_class_ids()) {
        const size_t base = benchmark.class_offsets[c];
        const size_t n = benchmark.classes[c].n_samples;
        std::vector<size_t> ids(n);
        for (size_t i = 0; i < n; ++i) ids[i] = base + i;
        Rng rng(derive_seed(seed, 0x73706c6974ULL + c));
        for (size_t i = 0; i < size_t(K); ++i)  // partial Fisher-Yates
            std::swap(ids[i], ids[i + rng.index(n - i)]);
        std::vector<size_t> chosen(ids.begin(), ids.begin() + K);
        std::sort(chosen.begin(), chosen.end());
        for (size_t id : chosen) {
            split.train.emplace_back(id, c);
            in_train[id] = 1;
        }
    }
    for (size_t c = 0; c < benchmark.n_classes(); ++c) {
        const size_t base = benchmark.class_offsets[c];
        for (size_t s = 0; s < benchmark.classes[c].n_samples; ++s)
            if (!in_train[base + s]) split.test.emplace_back(base + s, c);
    }
    return split;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

static void write_file(const std::string& path, const void* data, size_t bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::io, "cannot write " + path);
    f.write(static_cast<const char*>(data), std::streamsize(bytes));
    if (!f) fail(Errc::io, "write failed: " + path);
}

static std::vector<char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::io, "cannot open " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff bytes = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<size_t>(bytes), '\0');
    f.read(buf.data(), bytes);
    if (!f) fail(Errc::io, "short read: " + path);
    return buf;
}

std::string split_filename(int K, uint64_t seed) {
    return "split_K" + std::to_string(K) + "_s" + std::to_string(seed) + ".json";
}

static std::vector<float> encoder_blob(const Benchmark& b) {
    std::vector<float> blob;
    blob.insert(blob.end(), b.encoders.w_visual.begin(), b.encoders.w_visual.end());
    blob.insert(blob.end(), b.encoders.w_text.begin(), b.encoders.w_text.end());
    for (const auto& v : b.vocab.vectors) blob.insert(blob.end(), v.begin(), v.end());
    blob.insert(blob.end(), b.vocab.unk.begin(), b.vocab.unk.end());
    return blob;
}

void save_benchmark(const Benchmark& b, const std::string& path) {
    fs::create_directories(path);

    const auto enc = encoder_blob(b);
    write_file(path + "/samples.f32", b.samples.data(), b.samples.size() * sizeof(float));
    write_file(path + "/encoders.f32", enc.data(), enc.size() * sizeof(float));

    json j;
    j["format_version"] = kFormatVersion;
    j["seed"] = b.seed;
    j["config"] = {
        {"n_seen", b.config.n_seen},       {"n_ood", b.config.n_ood},
        {"d_raw", b.config.d_raw},         {"d_embed", b.config.d_embed},
        {"d_tok", b.config.d_tok},         {"samples_per_class", b.config.samples_per_class},
        {"spread", b.config.spread},       {"mean_scale", b.config.mean_scale},
        {"min_sep_factor", b.config.min_sep_factor},
    };
    j["classes"] = json::array();
    for (size_t c = 0; c < b.classes.size(); ++c) {
        const auto& cs = b.classes[c];
        j["classes"].push_back({{"name", cs.name},
                                {"tag", cs.tag == ClassTag::Seen ? "seen" : "ood"},
                                {"mean", cs.mean},
                                {"spread", cs.spread},
                                {"n_samples", cs.n_samples},
                                {"offset", b.class_offsets[c]}});
    }
    j["vocab"] = {{"seed", b.vocab.seed}, {"words", b.vocab.words}};
    j["encoders"] = {{"seed", b.encoders.seed}};
    j["checksums"] = {
        {"samples_f32", fnv1a_hex(b.samples.data(), b.samples.size() * sizeof(float))},
        {"encoders_f32", fnv1a_hex(enc.data(), enc.size() * sizeof(float))},
    };
    j["backbone_hash"] = b.encoders.content_hash(b.vocab);

    std::ofstream mf(path + "/manifest.json", std::ios::trunc);
    if (!mf) fail(Errc::io, "cannot write manifest.json");
    mf << j.dump(2) << "\n";
}

void save_split(const DatasetSplit& split, const std::string& path) {
    json j;
    j["format_version"] = kFormatVersion;
    j["K"] = split.K;
    j["seed"] = split.seed;
    j["train"] = json::array();
    for (auto& [id, c] : split.train) j["train"].push_back({id, c});
    j["test"] = json::array();
    for (auto& [id, c] : split.test) j["test"].push_back({id, c});
    std::ofstream f(path + "/" + split_filename(split.K, split.seed), std::ios::trunc);
    if (!f) fail(Errc::io, "cannot write split file");
    f << j.dump() << "\n";
}

void save_dataset(const Benchmark& benchmark, const DatasetSplit& split, const std::string& path) {
    save_benchmark(benchmark, path);
    save_split(split, path);
}

static json parse_json_file(const std::string& path) {
    const auto buf = read_file(path);
    json j = json::parse(buf.begin(), buf.end(), nullptr, false);
    if (j.is_discarded()) fail(Errc::io, "invalid JSON: " + path);
    return j;
}

Benchmark load_benchmark(const std::string& path) {
    json j = parse_json_file(path + "/manifest.json");
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion)
        fail(Errc::version_mismatch, "manifest format_version " + std::to_string(version) +
                                         " unsupported (expected " + std::to_string(kFormatVersion) + ")");

    Benchmark b;
    b.seed = j.at("seed").get<uint64_t>();
    const auto& jc = j.at("config");
    b.config.n_seen = jc.at("n_seen").get<size_t>();
    b.config.n_ood = jc.at("n_ood").get<size_t>();
    b.config.d_raw = jc.at("d_raw").get<size_t>();
    b.config.d_embed = jc.at("d_embed").get<size_t>();
    b.config.d_tok = jc.at("d_tok").get<size_t>();
    b.config.samples_per_class = jc.at("samples_per_class").get<size_t>();
    b.config.spread = jc.at("spread").get<double>();
    b.config.mean_scale = jc.at("mean_scale").get<double>();
    b.config.min_sep_factor = jc.at("min_sep_factor").get<double>();

    for (const auto& e : j.at("classes")) {
        ClassSpec cs;
        cs.name = e.at("name").get<std::string>();
        cs.tag = e.at("tag").get<std::string>() == "seen" ? ClassTag::Seen : ClassTag::Ood;
        cs.mean = e.at("mean").get<Vec>();
        cs.spread = e.at("spread").get<double>();
        cs.n_samples = e.at("n_samples").get<size_t>();
        b.classes.push_back(cs);
        b.class_offsets.push_back(e.at("offset").get<size_t>());
    }

    const auto sample_buf = read_file(path + "/samples.f32");
    const std::string sample_sum = fnv1a_hex(sample_buf.data(), sample_buf.size());
    if (sample_sum != j.at("checksums").at("samples_f32").get<std::string>())
        fail(Errc::checksum_mismatch, "samples.f32 checksum mismatch");
    b.samples.resize(sample_buf.size() / sizeof(float));
    std::memcpy(b.samples.data(), sample_buf.data(), sample_buf.size());

    const auto enc_buf = read_file(path + "/encoders.f32");
    const std::string enc_sum = fnv1a_hex(enc_buf.data(), enc_buf.size());
    if (enc_sum != j.at("checksums").at("encoders_f32").get<std::string>())
        fail(Errc::checksum_mismatch, "encoders.f32 checksum mismatch");

    b.encoders.seed = j.at("encoders").at("seed").get<uint64_t>();
    b.encoders.d_raw = b.config.d_raw;
    b.encoders.d_embed = b.config.d_embed;
    b.encoders.d_tok = b.config.d_tok;
    const float* p = reinterpret_cast<const float*>(enc_buf.data());
    const size_t n_floats = enc_buf.size() / sizeof(float);
    const size_t nv = b.config.d_embed * b.config.d_raw;
    const size_t nt = b.config.d_embed * b.config.d_tok;
    b.vocab.seed = j.at("vocab").at("seed").get<uint64_t>();
    b.vocab.words = j.at("vocab").at("words").get<std::vector<std::string>>();
    if (n_floats != nv + nt + (b.vocab.words.size() + 1) * b.config.d_tok)
        fail(Errc::io, "encoders.f32 size does not match manifest");
    b.encoders.w_visual.assign(p, p + nv);
    p += nv;
    b.encoders.w_text.assign(p, p + nt);
    p += nt;
    for (size_t w = 0; w < b.vocab.words.size(); ++w) {
        b.vocab.vectors.emplace_back(p, p + b.config.d_tok);
        p += b.config.d_tok;
    }
    b.vocab.unk.assign(p, p + b.config.d_tok);
    b.vocab.rebuild_index();
    return b;
}

DatasetSplit load_split(const std::string& path, int K, uint64_t seed) {
    json j = parse_json_file(path + "/" + split_filename(K, seed));
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion)
        fail(Errc::version_mismatch, "split format_version unsupported");
    DatasetSplit s;
    s.K = j.at("K").get<int>();
    s.seed = j.at("seed").get<uint64_t>();
    for (const auto& e : j.at("train")) s.train.emplace_back(e[0].get<size_t>(), e[1].get<size_t>());
    for (const auto& e : j.at("test")) s.test.emplace_back(e[0].get<size_t>(), e[1].get<size_t>());
    return s;
}

std::pair<Benchmark, DatasetSplit> load_dataset(const std::string& path, int K, uint64_t seed) {
    return {load_benchmark(path), load_split(path, K, seed)};
}

}  // namespace synernet
