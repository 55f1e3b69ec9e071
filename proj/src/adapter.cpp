#include "synernet/adapter.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace synernet {

using nlohmann::json;

std::vector<ParamBlockRef> param_blocks(AdapterParams& p) {
    std::vector<ParamBlockRef> blocks;
    auto add_mat = [&](const std::string& name, Mat& m) {
        blocks.push_back({name, m.data.data(), m.data.size()});
    };
    auto add_vec = [&](const std::string& name, Vec& v) {
        blocks.push_back({name, v.data(), v.size()});
    };
    auto add_scalar = [&](const std::string& name, double& s) { blocks.push_back({name, &s, 1}); };

    add_mat("visual.theta1", p.visual.theta1);
    add_vec("visual.b1", p.visual.b1);
    add_mat("visual.theta2", p.visual.theta2);
    add_scalar("visual.b2", p.visual.b2);
    add_mat("linguistic.theta3", p.linguistic.theta3);
    add_vec("linguistic.b3", p.linguistic.b3);
    add_mat("linguistic.theta4", p.linguistic.theta4);
    add_vec("linguistic.b4", p.linguistic.b4);
    for (auto& cv : p.names.concepts) add_mat("names." + cv.name, cv.vectors);
    add_scalar("coordinator.kappa_param", p.coordinator.kappa_param);
    add_scalar("coordinator.w_con_param", p.coordinator.w_con_param);
    add_scalar("coordinator.w_cls_param", p.coordinator.w_cls_param);
    add_mat("cls.head", p.cls_head);
    return blocks;
}

size_t total_param_count(AdapterParams& params) {
    size_t n = 0;
    for (const auto& b : param_blocks(params)) n += b.size;
    return n;
}

AdapterParams init_adapter(const Benchmark& benchmark, const AdapterInitConfig& config,
                           uint64_t seed) {
    const size_t d = benchmark.config.d_embed;
    const size_t hidden = d;

    AdapterParams p;
    p.visual.beta = config.beta;
    p.visual.tau_lo = config.tau_lo;
    p.visual.tau_hi = config.tau_hi;
    p.visual.theta1 = Mat(hidden, d);
    p.visual.b1 = Vec(hidden, 0.0);
    p.visual.theta2 = Mat(1, hidden);
    p.visual.b2 = config.difficulty_bias;
    {
        Rng rng(derive_seed(seed, 0x763121ULL));
        const double s1 = 1.0 / std::sqrt(double(d));
        for (double& w : p.visual.theta1.data) w = rng.gaussian() * s1;
        const double s2 = 1.0 / std::sqrt(double(hidden));
        for (double& w : p.visual.theta2.data) w = rng.gaussian() * s2;
    }

    p.linguistic.lambda = config.lambda;
    p.linguistic.theta3 = Mat(hidden, 2 * d);
    p.linguistic.b3 = Vec(hidden, 0.0);
    p.linguistic.theta4 = Mat(d, hidden);  // zero init: fusion starts as identity mixing
    p.linguistic.b4 = Vec(d, 0.0);
    {
        Rng rng(derive_seed(seed, 0x6c3321ULL));
        const double s3 = 1.0 / std::sqrt(double(2 * d));
        for (double& w : p.linguistic.theta3.data) w = rng.gaussian() * s3;
    }

    std::vector<std::string> ood_names;
    for (size_t c : benchmark.ood_class_ids()) ood_names.push_back(benchmark.classes[c].name);
    p.names = neu_init_concepts(ood_names, config.n_c, seed, benchmark.vocab);

    p.coordinator = CoordinatorParams{};

    p.cls_head = Mat(ood_names.size(), d);
    return p;
}

AdapterParams zero_like(const AdapterParams& params) {
    AdapterParams z = params;
    for (auto& b : param_blocks(z)) std::fill(b.data, b.data + b.size, 0.0);
    return z;
}

static std::vector<float> blocks_to_f32(AdapterParams& params) {
    std::vector<float> out;
    for (const auto& b : param_blocks(params))
        for (size_t i = 0; i < b.size; ++i) out.push_back(float(b.data[i]));
    return out;
}

std::string adapter_content_hash(AdapterParams& params) {
    Fnv1a h;
    for (const auto& b : param_blocks(params)) h.update_str(b.name);
    h.update_f32(blocks_to_f32(params));
    std::vector<float> ctx(params.train_context.begin(), params.train_context.end());
    h.update_f32(ctx);
    return h.hex();
}

void save_adapter(AdapterParams& params, const std::string& dir, const std::string& backbone_hash) {
    std::filesystem::create_directories(dir);
    const auto blob = blocks_to_f32(params);
    {
        std::ofstream f(dir + "/adapter.f32", std::ios::binary | std::ios::trunc);
        if (!f) fail(Errc::io, "cannot write adapter.f32");
        f.write(reinterpret_cast<const char*>(blob.data()),
                std::streamsize(blob.size() * sizeof(float)));
    }
    json j;
    j["format_version"] = 1;
    j["blocks"] = json::array();
    for (const auto& b : param_blocks(params)) j["blocks"].push_back({{"name", b.name}, {"size", b.size}});
    j["fixed"] = {{"beta", params.visual.beta},
                  {"lambda", params.linguistic.lambda},
                  {"tau_lo", params.visual.tau_lo},
                  {"tau_hi", params.visual.tau_hi},
                  {"n_c", params.names.concepts.empty() ? 0 : params.names.concepts[0].vectors.rows}};
    j["train_context"] = params.train_context;
    j["adapter_hash"] = adapter_content_hash(params);
    j["backbone_hash"] = backbone_hash;
    std::ofstream f(dir + "/adapter.json", std::ios::trunc);
    if (!f) fail(Errc::io, "cannot write adapter.json");
    f << j.dump(2) << "\n";
}

AdapterParams load_adapter(const std::string& dir, const Benchmark& benchmark) {
    std::ifstream mf(dir + "/adapter.json");
    if (!mf) fail(Errc::io, "cannot open adapter.json");
    json j = json::parse(mf, nullptr, false);
    if (j.is_discarded()) fail(Errc::io, "invalid adapter.json");
    if (j.at("format_version").get<int>() != 1) fail(Errc::version_mismatch, "adapter format_version unsupported");

    AdapterInitConfig cfg;
    cfg.beta = j.at("fixed").at("beta").get<double>();
    cfg.lambda = j.at("fixed").at("lambda").get<double>();
    cfg.tau_lo = j.at("fixed").at("tau_lo").get<double>();
    cfg.tau_hi = j.at("fixed").at("tau_hi").get<double>();
    cfg.n_c = j.at("fixed").at("n_c").get<size_t>();
    AdapterParams p = init_adapter(benchmark, cfg, 0);
    p.train_context = j.at("train_context").get<Vec>();

    std::ifstream bf(dir + "/adapter.f32", std::ios::binary);
    if (!bf) fail(Errc::io, "cannot open adapter.f32");
    bf.seekg(0, std::ios::end);
    const std::streamoff bytes = bf.tellg();
    bf.seekg(0);
    std::vector<float> blob(size_t(bytes) / sizeof(float));
    bf.read(reinterpret_cast<char*>(blob.data()), bytes);
    if (!bf) fail(Errc::io, "short read: adapter.f32");

    size_t off = 0;
    const auto& jblocks = j.at("blocks");
    auto blocks = param_blocks(p);
    if (jblocks.size() != blocks.size()) fail(Errc::io, "adapter block table mismatch");
    for (size_t i = 0; i < blocks.size(); ++i) {
        if (jblocks[i].at("name").get<std::string>() != blocks[i].name ||
            jblocks[i].at("size").get<size_t>() != blocks[i].size)
            fail(Errc::io, "adapter block layout mismatch at " + blocks[i].name);
        if (off + blocks[i].size > blob.size()) fail(Errc::io, "adapter.f32 too short");
        for (size_t k = 0; k < blocks[i].size; ++k) blocks[i].data[k] = double(blob[off + k]);
        off += blocks[i].size;
    }
    const std::string expect = j.at("adapter_hash").get<std::string>();
    const std::string got = adapter_content_hash(p);
    if (expect != got) fail(Errc::checksum_mismatch, "adapter hash mismatch");
    return p;
}

}  // namespace synernet
