#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "support.hpp"
#include "synernet/cli.hpp"

using namespace synernet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliSandbox {
    fs::path root;
    CliSandbox() {
        root = fs::temp_directory_path() / "synernet_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~CliSandbox() { fs::remove_all(root); }
    std::string path(const std::string& rel) const { return (root / rel).string(); }
};

json read_json(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    return json::parse(f);
}

// tiny dataset so CLI tests stay fast
std::vector<std::string> synth_args(const CliSandbox& sb) {
    return {"synth",  "--out",    sb.path("ds"), "--seed",    "7",  "--n-seen", "3",
            "--n-ood", "3",       "--d-raw",     "8",         "--d-embed", "8",
            "--samples", "40",    "--spread",    "0.6"};
}

}  // namespace

TEST_CASE("synth then train produces a run directory with the echoed config") {
    CliSandbox sb;
    REQUIRE(dispatch(synth_args(sb)) == 0);
    CHECK(fs::exists(sb.path("ds/manifest.json")));
    CHECK(fs::exists(sb.path("ds/samples.f32")));
    CHECK(fs::exists(sb.path("ds/encoders.f32")));

    REQUIRE(dispatch({"train", "--data", sb.path("ds"), "--K", "4", "--seeds", "0", "--epochs",
                      "10", "--out", sb.path("run0")}) == 0);
    CHECK(fs::exists(sb.path("run0/report.json")));
    CHECK(fs::exists(sb.path("run0/training_log.csv")));
    CHECK(fs::exists(sb.path("ds/split_K4_s0.json")));

    const json report = read_json(sb.path("run0/report.json"));
    CHECK(report.at("config").at("K").get<int>() == 4);
    CHECK(report.at("per_seed").size() == 1);
    CHECK(report.at("config").contains("lr"));
    CHECK(report.at("config").contains("epochs"));
    CHECK(report.at("config").at("adapter").contains("lambda"));

    SUBCASE("eval consumes the trained adapter") {
        REQUIRE(dispatch({"eval", "--data", sb.path("ds"), "--adapter", sb.path("run0/adapter_s0"),
                          "--K", "4", "--seed", "0", "--mode", "both", "--out",
                          sb.path("eval0")}) == 0);
        const json erep = read_json(sb.path("eval0/report.json"));
        CHECK(erep.contains("ood_only"));
        CHECK(erep.contains("composite"));
        CHECK(fs::exists(sb.path("eval0/embeddings_dump.f32")));
    }

    SUBCASE("report renders CSV summaries without mutating runs") {
        const auto before = fs::last_write_time(sb.path("run0/report.json"));
        REQUIRE(dispatch({"report", "--runs", sb.path("run0"), "--out", sb.path("summary")}) == 0);
        CHECK(fs::exists(sb.path("summary/summary.csv")));
        CHECK(fs::exists(sb.path("summary/shots_curve.csv")));
        CHECK(fs::last_write_time(sb.path("run0/report.json")) == before);
    }
}

TEST_CASE("ablate writes the nine-row table") {
    CliSandbox sb;
    REQUIRE(dispatch(synth_args(sb)) == 0);
    REQUIRE(dispatch({"ablate", "--data", sb.path("ds"), "--K", "2", "--seeds", "1", "--epochs",
                      "5", "--jobs", "2", "--out", sb.path("ab")}) == 0);
    std::ifstream f(sb.path("ab/ablation.csv"));
    REQUIRE(f.good());
    size_t lines = 0;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 10);  // header + 9 variants
}

TEST_CASE("gradcheck exits zero under the tolerance") {
    CliSandbox sb;
    REQUIRE(dispatch(synth_args(sb)) == 0);
    CHECK(dispatch({"gradcheck", "--data", sb.path("ds"), "--tolerance", "1e-4"}) == 0);
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(dispatch({"frobnicate"}) == 2);
    CHECK(dispatch({"synth", "--no-such-flag"}) == 2);
    CHECK(dispatch({}) == 2);
}

TEST_CASE("invariant failures exit with code 3") {
    CliSandbox sb;
    REQUIRE(dispatch(synth_args(sb)) == 0);
    {
        std::fstream f(sb.path("ds/samples.f32"),
                       std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(4);
        const char byte = 0x77;
        f.write(&byte, 1);
    }
    CHECK(dispatch({"train", "--data", sb.path("ds"), "--K", "2", "--seeds", "0", "--epochs", "2",
                    "--out", sb.path("runX")}) == 3);
}
