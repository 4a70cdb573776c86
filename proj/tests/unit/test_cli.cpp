#include "gen.hpp"
#include "synth.hpp"

#include "endoseg/file_util.hpp"

#include <catch_amalgamated.hpp>

#include "json.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <map>

using namespace endoseg;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

Result cli(const std::string& args) {
    const std::string cmd = quote(ENDOSEG_CLI_PATH) + " " + args + " 2>&1";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& root) {
    std::map<std::string, std::vector<std::uint8_t>> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file_bytes(e.path());
    }
    return out;
}

struct CliRun {
    testing::TempDir dir{"cli"};
    testing::SynthDataset ds;
    std::string run;

    CliRun() {
        testing::SynthOptions opt;
        opt.n_images = 12;
        ds = make_synthetic_dataset(dir / "data", opt);
        run = quote((dir / "run").string());
    }
    std::string inputs() const {
        return "--manifest " + quote(ds.manifest.string()) + " --features " + quote(ds.features.string()) +
               " --config " + quote(ds.config.string());
    }
};

}  // namespace

TEST_CASE("usage and configuration errors exit with 2") {
    CliRun r;
    CHECK(cli("").code == 2);
    CHECK(cli("segment").code == 2);  // --run-dir missing
    CHECK(cli("segment --run-dir " + r.run + " --bogus").code == 2);
    CHECK(cli("eval-knn --run-dir " + r.run + " --task full-24").code == 2);
    CHECK(cli("segment --run-dir " + r.run).code == 2);  // new run without --manifest
    CHECK(cli("segment --run-dir " + r.run + " " + r.inputs() + " --color-weight -1").code == 2);
    CHECK(cli("segment --run-dir " + r.run + " " + r.inputs() + " --extractor 'cp x {out}'").code == 2);

    write_file_atomic(r.dir / "bad.json", std::string_view("{\"colour_weight\": 1}"));
    CHECK(cli("segment --run-dir " + r.run + " " + r.inputs() + " --config " + quote((r.dir / "bad.json").string()))
              .code == 2);
    CHECK(cli("--help").code == 0);
}

TEST_CASE("missing data exits with 3 and names the stage and image") {
    CliRun r;
    fs::remove(r.ds.features / (r.ds.images[4].id + ".pft"));
    const Result res = cli("segment --run-dir " + r.run + " " + r.inputs());
    CHECK(res.code == 3);
    CHECK_THAT(res.output, Catch::Matchers::ContainsSubstring("segment [" + r.ds.images[4].id + "]"));

    testing::TempDir empty("cli-empty");
    const Result missing_manifest = cli("segment --run-dir " + quote((empty / "run").string()) + " --manifest " +
                                        quote((empty / "none.json").string()) + " --features " +
                                        quote(r.ds.features.string()));
    CHECK(missing_manifest.code == 3);
}

TEST_CASE("full verb sequence, flag scoping and idempotent reruns") {
    CliRun r;
    const std::string seg = "segment --run-dir " + r.run + " " + r.inputs() + " --color-weight 1.0 --seed 5";
    REQUIRE(cli(seg).code == 0);
    const fs::path run_dir = r.dir / "run";
    for (const auto& img : r.ds.images) CHECK(fs::exists(run_dir / "segments" / (img.id + ".json")));

    REQUIRE(cli("embed --run-dir " + r.run).code == 0);
    REQUIRE(cli("fit-concepts --run-dir " + r.run + " --k 3 --pca-dim 8").code == 0);
    REQUIRE(cli("render --run-dir " + r.run).code == 0);
    const json cfg = json::parse(read_file_text(run_dir / "config.json"));
    CHECK(cfg["kmeans_k"] == 3);
    CHECK(cfg["knn_k"] == 20);
    CHECK(cfg["color_weight"] == 1.0);

    // --k on eval-knn sets the neighbour count, not the cluster count.
    REQUIRE(cli("eval-knn --run-dir " + r.run + " --task mces-3 --k 2").code == 0);
    const json knn = json::parse(read_file_text(run_dir / "reports" / "mces-3-knn.json"));
    CHECK(knn["folds"][0]["k"] == 2);
    CHECK(json::parse(read_file_text(run_dir / "config.json"))["kmeans_k"] == 3);
    CHECK(knn.contains("params"));

    REQUIRE(cli("eval-probe --run-dir " + r.run + " --task full-23 --csv").code == 0);
    CHECK(fs::exists(run_dir / "reports" / "full-23-probe.csv"));
    REQUIRE(cli("eval-polyp --run-dir " + r.run).code == 0);
    CHECK(fs::exists(run_dir / "reports" / "polyp-probe.json"));
    REQUIRE(cli("eval-polyp-unsup --run-dir " + r.run + " --cluster 0").code == 0);
    CHECK(json::parse(read_file_text(run_dir / "reports" / "polyp-unsup.json"))["chosen_cluster"] == 0);
    CHECK(cli("eval-polyp-unsup --run-dir " + r.run + " --cluster 7").code == 2);
    CHECK(cli("eval-polyp-unsup --run-dir " + r.run + " --cluster nonsense").code == 2);
    REQUIRE(cli("export-review --run-dir " + r.run + " --frames 3").code == 0);

    const auto before = snapshot(run_dir);
    for (const std::string verb : {"segment", "embed", "render"}) {
        const Result again = cli(verb + " --run-dir " + r.run);
        CHECK(again.code == 0);
        CHECK_THAT(again.output, Catch::Matchers::ContainsSubstring(" 0 computed"));
    }
    REQUIRE(cli("eval-knn --run-dir " + r.run + " --task mces-3 --k 2").code == 0);
    CHECK(snapshot(run_dir) == before);
}

TEST_CASE("k = 20 writes the mces-3 KNN report when folds are large enough") {
    testing::TempDir dir("cli-k20");
    testing::SynthOptions opt;
    opt.n_images = 126;  // 21 MCES-labelled images per fold
    const auto ds = make_synthetic_dataset(dir / "data", opt);
    const std::string run = quote((dir / "run").string());
    const std::string in = "--manifest " + quote(ds.manifest.string()) + " --features " + quote(ds.features.string()) +
                           " --config " + quote(ds.config.string());
    const Result res = cli("eval-knn --run-dir " + run + " " + in + " --task mces-3 --k 20");
    INFO(res.output);
    REQUIRE(res.code == 0);
    const json rep = json::parse(read_file_text(dir / "run" / "reports" / "mces-3-knn.json"));
    CHECK(rep["task"] == "mces-3");
    CHECK(rep["folds"][0]["k"] == 20);
}

TEST_CASE("k larger than a training fold falls back to the whole fold") {
    CliRun r;
    REQUIRE(cli("eval-knn --run-dir " + r.run + " " + r.inputs() + " --task mces-3 --k 20").code == 0);
    const json rep = json::parse(read_file_text(r.dir / "run" / "reports" / "mces-3-knn.json"));
    CHECK(rep["folds"][0]["k"] == rep["folds"][0]["n_train"]);
    CHECK(rep["folds"][0]["k_requested"] == 20);
}
