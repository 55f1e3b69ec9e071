#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "support.hpp"
#include "synernet/datagen.hpp"

using namespace synernet;
namespace fs = std::filesystem;

namespace {

BenchmarkConfig default_small() {
    BenchmarkConfig cfg;
    cfg.n_seen = 4;
    cfg.n_ood = 4;
    cfg.d_raw = 16;
    cfg.d_embed = 8;
    cfg.d_tok = 8;
    cfg.samples_per_class = 40;
    cfg.spread = 0.7;
    return cfg;
}

}  // namespace

TEST_CASE("generate_benchmark is deterministic and satisfies its geometry") {
    auto cfg = default_small();
    const Benchmark a = generate_benchmark(cfg, 7);
    const Benchmark b = generate_benchmark(cfg, 7);
    CHECK(a.n_classes() == 8);
    CHECK(a == b);
    CHECK(a.samples == b.samples);  // bit-identical raw samples

    const Benchmark c = generate_benchmark(cfg, 8);
    CHECK_FALSE(c.samples == a.samples);

    // min pairwise mean distance / max spread > 2
    double min_dist = 1e300, max_spread = 0.0;
    for (size_t i = 0; i < a.n_classes(); ++i) {
        max_spread = std::max(max_spread, a.classes[i].spread);
        for (size_t j = i + 1; j < a.n_classes(); ++j) {
            Vec d = a.classes[i].mean;
            axpy(d, -1.0, a.classes[j].mean);
            min_dist = std::min(min_dist, norm2(d));
        }
    }
    CHECK(min_dist / max_spread > 2.0);
}

TEST_CASE("OOD names collapse to UNK, SEEN names are in vocabulary") {
    const Benchmark b = generate_benchmark(default_small(), 7);
    for (size_t c : b.ood_class_ids()) CHECK(b.vocab.all_unknown(b.classes[c].name));
    for (size_t c : b.seen_class_ids()) CHECK(b.vocab.contains(b.classes[c].name));
}

TEST_CASE("degenerate geometry is rejected after 1000 attempts") {
    auto cfg = default_small();
    cfg.spread = 50.0;  // separation of 100 is unreachable at mean_scale 1
    CHECK_THROWS_AS(generate_benchmark(cfg, 7), Error);
}

TEST_CASE("config preconditions are enforced") {
    auto cfg = default_small();
    cfg.n_seen = 1;
    CHECK_THROWS_AS(generate_benchmark(cfg, 7), Error);
    cfg = default_small();
    cfg.n_ood = 1;
    CHECK_THROWS_AS(generate_benchmark(cfg, 7), Error);
    cfg = default_small();
    cfg.d_raw = 3;
    CHECK_THROWS_AS(generate_benchmark(cfg, 7), Error);
    cfg = default_small();
    cfg.samples_per_class = 35;
    CHECK_THROWS_AS(generate_benchmark(cfg, 7), Error);
}

TEST_CASE("make_split honors shot counts and the OOD-only train rule") {
    const Benchmark b = generate_benchmark(default_small(), 7);

    const DatasetSplit s1 = make_split(b, 1, 3);
    CHECK(s1.train.size() == b.config.n_ood);

    const DatasetSplit s16 = make_split(b, 16, 3);
    CHECK(s16.train.size() == 64);  // K=16, n_ood=4

    for (const auto& split : {s1, s16}) {
        std::map<size_t, size_t> per_class;
        std::set<size_t> train_ids;
        for (const auto& [id, c] : split.train) {
            CHECK(b.classes[c].tag == ClassTag::Ood);
            CHECK(b.class_of_sample(id) == c);
            per_class[c] += 1;
            train_ids.insert(id);
        }
        for (const auto& [c, n] : per_class) CHECK(n == size_t(split.K));
        for (const auto& [id, c] : split.test) CHECK(train_ids.count(id) == 0);
        CHECK(split.train.size() + split.test.size() == b.sample_count());
    }

    CHECK_THROWS_AS(make_split(b, 3, 0), Error);
    CHECK_THROWS_AS(make_split(b, 32, 0), Error);

    Benchmark starved = b;
    starved.classes[b.ood_class_ids()[0]].n_samples = 30;  // below K+20 for K=16
    CHECK_THROWS_AS(make_split(starved, 16, 0), Error);
}

TEST_CASE("dataset persistence round-trips bit-exactly") {
    const Benchmark b = generate_benchmark(default_small(), 7);
    const DatasetSplit split = make_split(b, 4, 5);

    const std::string dir = (fs::temp_directory_path() / "synernet_ds_test").string();
    fs::remove_all(dir);
    save_dataset(b, split, dir);

    auto [b2, split2] = load_dataset(dir, 4, 5);
    CHECK(b2 == b);
    CHECK(split2 == split);

    SUBCASE("corrupted checksum is detected") {
        std::fstream f(dir + "/samples.f32", std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(8);
        char byte = 0x5a;
        f.write(&byte, 1);
        f.close();
        CHECK_THROWS_WITH_AS(load_benchmark(dir), doctest::Contains("checksum"), Error);
    }

    SUBCASE("future format version is rejected without partial state") {
        auto manifest = dir + "/manifest.json";
        std::ifstream in(manifest);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const auto pos = text.find("\"format_version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 19, "\"format_version\": 2");
        std::ofstream out(manifest, std::ios::trunc);
        out << text;
        out.close();
        CHECK_THROWS_WITH_AS(load_benchmark(dir), doctest::Contains("version"), Error);
    }

    fs::remove_all(dir);
}
