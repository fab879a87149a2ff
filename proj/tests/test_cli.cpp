#include "support.hpp"

#include "morphogen/cli.hpp"
#include "morphogen/formats.hpp"
#include "morphogen/io.hpp"
#include "morphogen/render.hpp"

#include <doctest.h>

#include <sstream>

using namespace morphogen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// Ten stroke-like classes: class c lights a bar whose position depends on c.
void write_idx(const fs::path& images, const fs::path& labels, std::size_t n, std::uint64_t seed) {
    RawIdxImages raw;
    raw.count = static_cast<std::uint32_t>(n);
    raw.rows = raw.cols = 28;
    raw.pixels.assign(n * 784, 0);
    LabelSet lab;
    lab.count = raw.count;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % 10);
        lab.labels.push_back(static_cast<std::uint8_t>(c));
        for (int r = 4; r < 24; ++r)
            for (int w = 0; w < 3; ++w) {
                const int col = 4 + 2 * c + w;
                raw.pixels[i * 784 + r * 28 + col] = static_cast<std::uint8_t>(200 + rng.below(56));
            }
    }
    write_file_atomic(images, serialize_idx_images(raw));
    write_file_atomic(labels, serialize_idx_labels(lab));
}

struct Fixture {
    fs::path root, images, labels, model, generated;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture x;
        x.root = testing::scratch_dir("cli");
        x.images = x.root / "images.idx";
        x.labels = x.root / "labels.idx";
        write_idx(x.images, x.labels, 60, 5);
        const auto t = run({"train", "--images", x.images.string(), "--labels", x.labels.string(), "--epochs", "2",
                            "--batch", "16", "--out", (x.root / "train").string()});
        REQUIRE_MESSAGE(t.code == 0, t.err);
        x.model = x.root / "train" / "model.ckpt";
        const auto g = run({"generate", "--checkpoint", x.model.string(), "--count", "6", "--max-iterations", "8",
                            "--out", (x.root / "gen").string()});
        REQUIRE_MESSAGE(g.code == 0, g.err);
        x.generated = x.root / "gen";
        return x;
    }();
    return f;
}

Json read_json(const fs::path& p) {
    const Bytes b = read_file(p);
    return Json::parse(std::string(b.begin(), b.end()));
}

std::size_t count_files(const fs::path& dir) {
    if (!fs::exists(dir)) return 0;
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}

} // namespace

TEST_CASE("missing input file is a usage error naming the flag") {
    const auto r = run({"train", "--images", "/nonexistent/images.idx", "--out", "/tmp/morphogen-never"});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("--images") != std::string::npos);
    CHECK_FALSE(fs::exists("/tmp/morphogen-never"));
}

TEST_CASE("unknown subcommand and missing subcommand are usage errors") {
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"render", "--out", "/tmp/morphogen-never"}).code == kExitUsage);
}

TEST_CASE("version and help") {
    const auto v = run({"--version"});
    CHECK(v.code == 0);
    CHECK(v.out.find(kToolVersion) != std::string::npos);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("existing output directory is refused without --force") {
    const auto& f = fixture();
    const auto dir = testing::scratch_dir("cli-occupied");
    write_file_atomic(dir / "keep.txt", std::string_view("x"));
    const auto r = run({"render", "--images", f.images.string(), "--count", "2", "--out", dir.string()});
    CHECK(r.code == kExitUsage);
    CHECK(fs::exists(dir / "keep.txt"));
    const auto forced = run({"render", "--images", f.images.string(), "--count", "2", "--out", dir.string(), "--force"});
    CHECK(forced.code == kExitUsage);

    const auto prior = f.root / "render-prior";
    REQUIRE(run({"render", "--images", f.images.string(), "--count", "2", "--out", prior.string()}).code == 0);
    CHECK(run({"render", "--images", f.images.string(), "--count", "3", "--out", prior.string()}).code == kExitUsage);
    CHECK(run({"render", "--images", f.images.string(), "--count", "3", "--out", prior.string(), "--force"}).code == 0);
    CHECK(read_pgm(prior / "grid.pgm").width == 3 * 28 + 2 * 2);
}

TEST_CASE("corrupt checkpoint fails at runtime with a checksum error") {
    const auto& f = fixture();
    Bytes b = read_file(f.model);
    b[b.size() / 2] ^= 0x10;
    const auto bad = f.root / "corrupt.ckpt";
    write_file_atomic(bad, b);
    const auto r = run({"generate", "--checkpoint", bad.string(), "--count", "1", "--out", (f.root / "gen-bad").string()});
    CHECK(r.code == kExitFailure);
    CHECK(r.err.find("ChecksumFailure") != std::string::npos);
}

TEST_CASE("train writes a checkpoint, a log and a valid manifest") {
    const auto& f = fixture();
    const auto dir = f.root / "train";
    CHECK(fs::exists(dir / "model.ckpt"));
    const auto log = TrainingLog::from_csv([&] {
        const Bytes b = read_file(dir / "train_log.csv");
        return std::string(b.begin(), b.end());
    }());
    CHECK(log.epochs.size() == 2);
    const Json m = read_json(dir / "manifest.json");
    CHECK(schema_violation(m).empty());
    const RunManifest man = manifest_from_json(m);
    CHECK(man.command == "train");
    CHECK(std::find(man.args.begin(), man.args.end(), "--out") == man.args.end());
    CHECK(man.checkpoint_checksum == hex32(model_checksum(deserialize(read_file(dir / "model.ckpt")))));
    for (const auto& o : man.outputs) CHECK(o.crc32 == crc32(read_file(dir / o.path)));
}

TEST_CASE("generate with trajectories writes one strip per seed") {
    const auto& f = fixture();
    const auto dir = f.root / "gen-traj";
    const auto r = run({"generate", "--checkpoint", f.model.string(), "--count", "4", "--max-iterations", "6",
                        "--trajectory", "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(count_files(dir / "trajectories") == 4);
    CHECK(count_files(dir / "finals") == 4);
    const GeneratedSet set = load_generated(dir);
    REQUIRE(set.items.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.pgm", i);
        const Raster strip = read_pgm(dir / "trajectories" / name);
        const int panels = set.items[i].summary.iterations + 1;
        CHECK(strip.width == panels * 28 + (panels - 1) * 2);
        CHECK(strip.height == 28);
    }
}

TEST_CASE("cluster writes one montage per new-type cluster") {
    const auto& f = fixture();
    const auto dir = f.root / "cluster";
    const auto r = run({"cluster", "--checkpoint", f.model.string(), "--generated", f.generated.string(), "--images",
                        f.images.string(), "--labels", f.labels.string(), "--count", "40", "-k", "5", "--restarts",
                        "2", "--threshold", "0.5", "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Json j = read_json(dir / "clusters.json");
    CHECK(j.at("k") == 5);
    CHECK(j.at("rows").size() == 46);
    CHECK(count_files(dir / "montages") == j.at("new_type_count").get<std::size_t>());
    CHECK(schema_violation(read_json(dir / "manifest.json")).empty());
}

TEST_CASE("cluster refuses a generated set from another checkpoint") {
    const auto& f = fixture();
    const auto other = f.root / "train-other";
    REQUIRE(run({"train", "--images", f.images.string(), "--labels", f.labels.string(), "--epochs", "1", "--batch",
                 "16", "--init-seed", "9", "--out", other.string()})
                .code == 0);
    const auto r = run({"cluster", "--checkpoint", (other / "model.ckpt").string(), "--generated", f.generated.string(),
                        "--images", f.images.string(), "--labels", f.labels.string(), "--count", "20", "-k", "3",
                        "--out", (f.root / "cluster-mismatch").string()});
    CHECK(r.code == kExitFailure);
    CHECK(r.err.find("InvalidConfig") != std::string::npos);
}

TEST_CASE("embed writes one CSV row per object") {
    const auto& f = fixture();
    const auto dir = f.root / "embed";
    const auto r = run({"embed", "--checkpoint", f.model.string(), "--generated", f.generated.string(), "--images",
                        f.images.string(), "--labels", f.labels.string(), "--count", "30", "--perplexity", "5",
                        "--iterations", "100", "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const Bytes csv = read_file(dir / "embedding.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 30 + 6);
    CHECK(read_pgm(dir / "scatter.pgm").width == 1024);

    const auto bad = run({"embed", "--checkpoint", f.model.string(), "--generated", f.generated.string(), "--images",
                          f.images.string(), "--labels", f.labels.string(), "--count", "3", "--perplexity", "50",
                          "--out", (f.root / "embed-bad").string()});
    CHECK(bad.code == kExitFailure);
    CHECK(bad.err.find("PerplexityInfeasible") != std::string::npos);
}

TEST_CASE("perturb writes a report and exactly two grids") {
    const auto& f = fixture();
    const auto dir = f.root / "perturb";
    const auto r = run({"perturb", "--checkpoint", f.model.string(), "--images", f.images.string(), "--labels",
                        f.labels.string(), "--count", "30", "--offspring", "12", "--grid", "4", "--out",
                        dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::size_t grids = 0;
    for (const auto& e : fs::directory_iterator(dir)) grids += e.path().extension() == ".pgm";
    CHECK(grids == 2);
    const Json j = read_json(dir / "comparison.json");
    CHECK(j.at("pixel").at("samples") == 12);
    CHECK(j.at("code").at("samples") == 12);
}

TEST_CASE("rerun reproduces deterministic outputs") {
    const auto& f = fixture();
    const auto first = f.root / "rerun-src";
    REQUIRE(run({"--seed", "3", "generate", "--checkpoint", f.model.string(), "--count", "3", "--max-iterations", "5",
                 "--out", first.string()})
                .code == 0);
    const auto again = f.root / "rerun-dst";
    const auto r = run({"rerun", "--manifest", (first / "manifest.json").string(), "--out", again.string()});
    CHECK_MESSAGE(r.code == 0, (r.out + r.err));
    CHECK(read_file(first / "generated.bin") == read_file(again / "generated.bin"));

    const auto train_again = f.root / "rerun-train";
    const auto t = run({"rerun", "--manifest", (f.root / "train" / "manifest.json").string(), "--out",
                        train_again.string()});
    CHECK_MESSAGE(t.code == 0, (t.out + t.err));
    CHECK(read_file(f.root / "train" / "model.ckpt") == read_file(train_again / "model.ckpt"));
}
