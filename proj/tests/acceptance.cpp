// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--mnist DIR] [--cache DIR] [--fresh] [--checkpoint FILE] [--only N[,N...]]
//
// The trained model of criterion 2 is cached under --cache, keyed by the
// data checksum and every training setting, and reused by criteria 3-5.

#include "morphogen/cli.hpp"
#include "morphogen/dataset.hpp"
#include "morphogen/formats.hpp"
#include "morphogen/generator.hpp"
#include "morphogen/io.hpp"
#include "morphogen/network.hpp"
#include "morphogen/perturb.hpp"
#include "morphogen/random.hpp"
#include "morphogen/taxonomy.hpp"
#include "morphogen/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace morphogen;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes of the criteria.
constexpr double kGradEpsilon = 1e-5;
constexpr double kGradMaxRelError = 1e-4;
constexpr std::size_t kGradSamples = 200;
constexpr double kGradSeconds = 120.0;

constexpr std::size_t kTrainSubset = 10000;
constexpr double kValFraction = 0.1;
constexpr std::uint64_t kSplitSeed = 7;
constexpr double kTrainRatio = 0.25;
constexpr double kValOverTrain = 1.5;
constexpr double kTrainTargetSeconds = 30 * 60.0;

constexpr std::size_t kSeeds = 1000;
constexpr double kConvergedFraction = 0.9;
constexpr double kFixedPointResidual = 1e-6;  // per pixel
constexpr double kNonIncreasingFraction = 0.8;

constexpr std::size_t kHeldOut = 2000;
constexpr int kClusters = 30;
constexpr int kRestarts = 5;
constexpr double kNewTypeFraction = 0.9;

constexpr double kMutationRate = 0.2;
constexpr std::size_t kOffspring = 200;

constexpr int kLloydInstances = 100;
constexpr std::size_t kEmbedPoints = 1000;
constexpr int kTrustNeighbors = 12;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path mnist;
    fs::path cache;
    bool fresh = false;
    fs::path checkpoint;  // evaluate this model instead of training one

    std::optional<ModelParams> model;
    std::optional<Dataset> train_split;
    std::optional<Dataset> held_out;
    std::vector<GeneratedItem> finals;
    std::optional<KnownClassModel> known;

    fs::path file(const char* name) const { return mnist / name; }
    bool have_data() const {
        for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                              "t10k-labels-idx1-ubyte"})
            if (!fs::exists(file(f))) return false;
        return true;
    }
};

Verdict gradients(Context&) {
    const auto t0 = std::chrono::steady_clock::now();
    ArchConfig arch;
    arch.input_rows = arch.input_cols = 12;
    arch.coder_layers = {{4, 3, 1}, {8, 3, 1}, {8, 3, 1}};
    arch.decoder_filter_size = 5;
    const ModelParams p = init_params(arch);
    Rng rng(11);
    Image x(12, 12);
    for (double& v : x.pixels) v = rng.bernoulli(0.3) ? rng.uniform() : 0.0;
    const GradientCheckResult r = gradient_check(p, x, kGradEpsilon, kGradSamples, 3);
    const double secs = seconds_since(t0);
    Verdict v;
    v.pass = r.checked == kGradSamples && r.max_relative_error < kGradMaxRelError && secs < kGradSeconds;
    v.detail = fmt("max relative error %.3g over %zu parameters (%zu skipped as mask-unstable), %.1fs",
                   r.max_relative_error, r.checked, r.skipped_unstable, secs);
    return v;
}

std::string cache_key(const Context& ctx, const ArchConfig& arch, const TrainConfig& cfg) {
    const Json key = {{"tool_version", kToolVersion},
                      {"images_crc32", hex32(crc32(read_file(ctx.file("train-images-idx3-ubyte"))))},
                      {"subset", kTrainSubset},
                      {"val_fraction", kValFraction},
                      {"split_seed", kSplitSeed},
                      {"arch", to_json(arch)},
                      {"train", to_json(cfg)}};
    return key.dump();
}

Verdict learning(Context& ctx) {
    const Dataset all = load_idx_dataset(ctx.file("train-images-idx3-ubyte"), ctx.file("train-labels-idx1-ubyte"));
    const Dataset subset = take_prefix(all, kTrainSubset);
    auto [train_set, val_set] = split(subset, kValFraction, kSplitSeed);
    const ArchConfig arch;
    const TrainConfig cfg;

    const std::string key = cache_key(ctx, arch, cfg);
    const fs::path ckpt = ctx.cache / "model.ckpt";
    const fs::path key_file = ctx.cache / "model.key";
    const fs::path log_file = ctx.cache / "train_log.csv";
    double train_seconds = 0.0;
    ModelParams params;
    auto text = [](const fs::path& p) {
        const Bytes b = read_file(p);
        return std::string(b.begin(), b.end());
    };
    std::string origin;
    if (!ctx.checkpoint.empty()) {
        params = deserialize(read_file(ctx.checkpoint));
        origin = ", provided checkpoint " + ctx.checkpoint.string();
    } else if (!ctx.fresh && fs::exists(ckpt) && fs::exists(key_file) && fs::exists(log_file) && text(key_file) == key) {
        params = deserialize(read_file(ckpt));
        for (const auto& r : TrainingLog::from_csv(text(log_file)).epochs) train_seconds += r.seconds;
        origin = ", cached";
    } else {
        fs::create_directories(ctx.cache);
        TrainHooks hooks;
        hooks.on_epoch = [](const EpochRecord& r) {
            std::fprintf(stderr, "  epoch %2d train %.4f val %.4f lr %.6f %.1fs\n", r.epoch, r.train_mse, r.val_mse,
                         r.learning_rate, r.seconds);
        };
        const TrainResult result = train(train_set, val_set, arch, cfg, hooks);
        for (const auto& r : result.log.epochs) train_seconds += r.seconds;
        params = result.params;
        write_file_atomic(ckpt, serialize(params));
        write_file_atomic(log_file, result.log.to_csv());
        write_file_atomic(key_file, key);
    }

    const double untrained = evaluate(init_params(arch), train_set);
    const double final_train = evaluate(params, train_set);
    const double final_val = evaluate(params, val_set);
    ctx.model = params;
    ctx.train_split = train_set;

    Verdict v;
    v.pass = final_train < kTrainRatio * untrained && final_val <= kValOverTrain * final_train;
    v.detail = fmt("train %.3f vs untrained %.3f (ratio %.3f, bound %.2f); val %.3f (val/train %.3f, bound %.1f); "
                   "%d epochs in %.0fs%s (target %.0fs)",
                   final_train, untrained, final_train / untrained, kTrainRatio, final_val, final_val / final_train,
                   kValOverTrain, cfg.epochs, train_seconds, origin.c_str(), kTrainTargetSeconds);
    return v;
}

Verdict fixed_points(Context& ctx);

// Criteria 3-5 build on the outputs of earlier criteria; run those first when
// they were not selected.
void ensure_model(Context& ctx) {
    if (!ctx.model) learning(ctx);
}

void ensure_finals(Context& ctx) {
    ensure_model(ctx);
    if (ctx.finals.empty()) fixed_points(ctx);
}

const Dataset& held_out(Context& ctx) {
    if (!ctx.held_out)
        ctx.held_out = take_prefix(
            load_idx_dataset(ctx.file("t10k-images-idx3-ubyte"), ctx.file("t10k-labels-idx1-ubyte")), kHeldOut);
    return *ctx.held_out;
}

// Class centroids from the training split define novelty.
const KnownClassModel& known_classes(Context& ctx) {
    ensure_model(ctx);
    if (!ctx.known) {
        std::vector<CodeTag> tags;
        for (std::size_t i = 0; i < ctx.train_split->size(); ++i)
            tags.push_back(CodeTag::known((*ctx.train_split->labels)[i]));
        ctx.known = fit_known_classes(extract_features(*ctx.model, ctx.train_split->images, tags));
    }
    return *ctx.known;
}

Verdict fixed_points(Context& ctx) {
    ensure_model(ctx);
    const ModelParams& params = *ctx.model;
    SeedConfig seeds;
    seeds.distribution = SeedDistribution::Uniform;
    const ConvergenceConfig conv;
    std::size_t converged = 0, fixed_ok = 0, monotone = 0, net_decrease = 0, unique = 0;
    double worst_fixed = 0.0;
    std::set<std::vector<std::uint8_t>> distinct;
    ctx.finals.clear();
    for (std::size_t i = 0; i < kSeeds; ++i) {
        const GenerationTrajectory t = iterate(params, sample_seed(seeds, i), conv);
        const Image& x = t.final_image();
        if (t.converged) {
            ++converged;
            const double r = distortion(x, apply_model(params, x)) / static_cast<double>(x.pixels.size());
            worst_fixed = std::max(worst_fixed, r);
            fixed_ok += r < kFixedPointResidual;
        }
        const std::vector<double> residuals = residual_trace(t);
        monotone += residuals_non_increasing(residuals);
        net_decrease += residuals.size() > 1 && residuals.back() < residuals.front();
        std::vector<std::uint8_t> key(x.pixels.size());
        for (std::size_t j = 0; j < key.size(); ++j) key[j] = static_cast<std::uint8_t>(std::lround(255 * x.pixels[j]));
        distinct.insert(std::move(key));
        GeneratedItem item;
        item.final_image = x;
        item.code = t.status == TrajectoryStatus::NonFinite ? FeatureMaps{} : encode(params, x);
        item.summary = {t.iterations, t.converged, t.status, t.step_distances.empty() ? 0.0 : t.step_distances.back()};
        ctx.finals.push_back(std::move(item));
    }
    unique = distinct.size();
    const double conv_frac = static_cast<double>(converged) / kSeeds;
    const double mono_frac = static_cast<double>(monotone) / kSeeds;
    Verdict v;
    v.pass = conv_frac >= kConvergedFraction && fixed_ok == converged && mono_frac >= kNonIncreasingFraction;
    v.detail = fmt("%.1f%% of %zu uniform seeds converged (bound %.0f%%); %zu/%zu converged finals have residual/784 < "
                   "1e-6 (worst %.2e); residual non-increasing on %.1f%% (bound %.0f%%), net decrease on %.1f%%; %zu "
                   "distinct finals",
                   100 * conv_frac, kSeeds, 100 * kConvergedFraction, fixed_ok, converged, worst_fixed, 100 * mono_frac,
                   100 * kNonIncreasingFraction, 100.0 * static_cast<double>(net_decrease) / kSeeds, unique);
    return v;
}

Verdict new_types(Context& ctx) {
    ensure_finals(ctx);
    const ModelParams& params = *ctx.model;
    const Dataset& test = held_out(ctx);

    CodeMatrix codes;
    for (const auto& item : ctx.finals)
        if (!item.code.data.empty()) codes.add_row(item.code.data, CodeTag::generated());
    const std::size_t generated = codes.size();
    std::vector<CodeTag> tags;
    for (std::size_t i = 0; i < test.size(); ++i) tags.push_back(CodeTag::known((*test.labels)[i]));
    codes.append(extract_features(params, test.images, tags));

    const std::vector<double> novelty = novelty_scores(known_classes(ctx), codes);
    const double med_generated = median({novelty.begin(), novelty.begin() + static_cast<std::ptrdiff_t>(generated)});
    const double med_known = median({novelty.begin() + static_cast<std::ptrdiff_t>(generated), novelty.end()});

    const Clustering clustering = kmeans(codes, kClusters, kRestarts, 1, 300);
    const ClusterReport report = build_report(clustering, codes, kNewTypeFraction);
    std::size_t largest = 0;
    for (const auto& c : report.clusters)
        if (c.new_type) largest = std::max(largest, c.size);
    Verdict v;
    v.pass = report.new_type_count >= 1 && med_generated > med_known;
    v.detail = fmt("%d of %d clusters have generated fraction >= %.1f (largest has %zu members); median novelty "
                   "generated %.3f vs held-out %.3f",
                   report.new_type_count, kClusters, kNewTypeFraction, largest, med_generated, med_known);
    return v;
}

Verdict perturbation(Context& ctx) {
    const KnownClassModel& known = known_classes(ctx);
    const ModelParams& params = *ctx.model;
    CompareConfig cfg;
    cfg.pixel.mutation_rate = cfg.code.mutation_rate = kMutationRate;
    cfg.offspring = kOffspring;
    const ComparisonReport r = compare_spaces(params, held_out(ctx).images, known, cfg);
    Verdict v;
    v.pass = r.code.samples >= kOffspring && r.pixel.samples == r.code.samples &&
             r.code.mean_residual < r.pixel.mean_residual;
    v.detail = fmt("mean residual code %.4f vs pixel %.4f over %zu offspring each (baselines %.4f / %.4f)",
                   r.code.mean_residual, r.pixel.mean_residual, r.code.samples, r.code.mean_baseline_residual,
                   r.pixel.mean_baseline_residual);
    return v;
}

CodeMatrix gaussian_blobs(const std::vector<std::vector<double>>& centres, std::size_t per, double sd, Rng& rng) {
    CodeMatrix m;
    m.dim = centres.front().size();
    std::vector<double> row(m.dim);
    for (std::size_t c = 0; c < centres.size(); ++c)
        for (std::size_t i = 0; i < per; ++i) {
            for (std::size_t d = 0; d < m.dim; ++d) row[d] = centres[c][d] + sd * rng.normal();
            m.add_row(row, CodeTag::known(static_cast<int>(c)));
        }
    return m;
}

Verdict oracles(Context& ctx) {
    std::vector<std::string> notes;
    bool pass = true;

    int lloyd_ok = 0;
    for (int inst = 0; inst < kLloydInstances; ++inst) {
        Rng rng(1000 + static_cast<std::uint64_t>(inst));
        const std::size_t n = 10 + rng.below(41);
        const std::size_t dim = 1 + rng.below(6);
        const int k = 1 + static_cast<int>(rng.below(std::min<std::size_t>(n, 8)));
        CodeMatrix m;
        m.dim = dim;
        std::vector<double> row(dim);
        for (std::size_t i = 0; i < n; ++i) {
            for (double& v : row) v = rng.bernoulli(0.3) ? 0.0 : rng.normal() * 3.0;
            m.add_row(row, CodeTag::generated());
        }
        const Clustering c = kmeans(m, k, 1, static_cast<std::uint64_t>(inst), 100);
        bool ok = !c.objective_trace.empty();
        for (std::size_t t = 1; t < c.objective_trace.size(); ++t)
            ok = ok && c.objective_trace[t] <= c.objective_trace[t - 1] * (1 + 1e-12) + 1e-12;
        lloyd_ok += ok;
    }
    pass = pass && lloyd_ok == kLloydInstances;
    notes.push_back(fmt("Lloyd objective non-increasing on %d/%d instances", lloyd_ok, kLloydInstances));

    Rng rng(5);
    const CodeMatrix blobs = gaussian_blobs({std::vector<double>(5, -10.0), std::vector<double>(5, 10.0)}, 100, 1.0, rng);
    const Clustering two = kmeans(blobs, 2, 5, 2, 100);
    bool exact = true;
    for (std::size_t i = 0; i < blobs.size(); ++i)
        exact = exact && (two.assignments[i] == two.assignments[0]) == (blobs.tags[i].label == blobs.tags[0].label);
    pass = pass && exact;
    notes.push_back(std::string("two Gaussians recovered ") + (exact ? "exactly" : "WITH ERRORS"));

    CodeMatrix sample;
    std::string source;
    if (ctx.model && ctx.have_data()) {
        const Dataset& test = held_out(ctx);
        const std::size_t n = std::min(kEmbedPoints, test.size());
        std::vector<CodeTag> tags;
        for (std::size_t i = 0; i < n; ++i) tags.push_back(CodeTag::known((*test.labels)[i]));
        sample = extract_features(*ctx.model, std::span(test.images).first(n), tags);
        source = "held-out digit codes";
    } else {
        Rng r2(9);
        std::vector<std::vector<double>> centres;
        for (int c = 0; c < 10; ++c) {
            std::vector<double> centre(20);
            for (double& v : centre) v = 4.0 * r2.normal();
            centres.push_back(centre);
        }
        sample = gaussian_blobs(centres, kEmbedPoints / 10, 1.0, r2);
        source = "Gaussian clusters";
    }
    const Embedding2D e = embed_2d(sample, EmbeddingConfig{});
    const double kl0 = e.kl_trace.front().second;
    const auto d = pairwise_squared_distances(sample);
    const double t_embed = trustworthiness(d, sample.size(), e.points, kTrustNeighbors);
    const auto proj = random_projection_2d(sample, 3);
    const double t_proj = trustworthiness(d, sample.size(), proj, kTrustNeighbors);
    const bool kl_ok = e.kl_divergence < kl0;
    pass = pass && kl_ok && t_embed > t_proj;
    notes.push_back(fmt("KL %.4f -> %.4f; trustworthiness(%d) %.4f vs random projection %.4f on %zu %s", kl0,
                        e.kl_divergence, kTrustNeighbors, t_embed, t_proj, sample.size(), source.c_str()));

    std::string detail;
    for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
    return {pass, detail};
}

int cli(const std::vector<std::string>& args, std::string* err = nullptr) {
    std::ostringstream out, e;
    const int code = run_cli(args, out, e);
    if (err) *err = e.str() + out.str();
    return code;
}

// Tiny two-class IDX pair used when the criterion must run without MNIST.
void write_synthetic_idx(const fs::path& images, const fs::path& labels, std::size_t n) {
    RawIdxImages raw;
    raw.count = static_cast<std::uint32_t>(n);
    raw.rows = raw.cols = 28;
    raw.pixels.assign(n * 784, 0);
    LabelSet lab;
    lab.count = raw.count;
    Rng rng(3);
    for (std::size_t i = 0; i < n; ++i) {
        lab.labels.push_back(static_cast<std::uint8_t>(i % 10));
        for (int j = 0; j < 60; ++j) raw.pixels[i * 784 + rng.below(784)] = static_cast<std::uint8_t>(rng.below(256));
    }
    write_file_atomic(images, serialize_idx_images(raw));
    write_file_atomic(labels, serialize_idx_labels(lab));
}

Verdict plumbing(Context& ctx) {
    std::vector<std::string> notes;
    bool pass = true;

    std::size_t idx_files = 0, idx_exact = 0;
    for (const char* f : {"train-images-idx3-ubyte", "t10k-images-idx3-ubyte"})
        if (fs::exists(ctx.file(f))) {
            const Bytes b = read_maybe_gzip(ctx.file(f));
            ++idx_files;
            idx_exact += serialize_idx_images(parse_idx_images(b)) == b;
        }
    for (const char* f : {"train-labels-idx1-ubyte", "t10k-labels-idx1-ubyte"})
        if (fs::exists(ctx.file(f))) {
            const Bytes b = read_maybe_gzip(ctx.file(f));
            ++idx_files;
            idx_exact += serialize_idx_labels(parse_idx_labels(b)) == b;
        }
    pass = pass && idx_files == 4 && idx_exact == idx_files;
    notes.push_back(fmt("IDX round trip bit-exact on %zu/%zu MNIST files", idx_exact, std::size_t{4}));

    const ModelParams params = ctx.model ? *ctx.model : init_params(ArchConfig{});
    const Bytes ckpt = serialize(params);
    const ModelParams back = deserialize(ckpt);
    bool ckpt_exact = serialize(back) == ckpt && back.values.size() == params.values.size();
    for (std::size_t i = 0; ckpt_exact && i < params.values.size(); ++i)
        ckpt_exact = std::bit_cast<std::uint64_t>(back.values[i]) == std::bit_cast<std::uint64_t>(params.values[i]);
    pass = pass && ckpt_exact;
    notes.push_back(std::string("checkpoint round trip ") + (ckpt_exact ? "bit-exact" : "DIFFERS"));

    const fs::path work = fs::temp_directory_path() / "morphogen-acceptance-plumbing";
    fs::remove_all(work);
    fs::create_directories(work);
    fs::path images = ctx.file("t10k-images-idx3-ubyte"), labels = ctx.file("t10k-labels-idx1-ubyte");
    if (!fs::exists(images) || !fs::exists(labels)) {
        images = work / "images.idx";
        labels = work / "labels.idx";
        write_synthetic_idx(images, labels, 300);
    }
    const std::string I = images.string(), L = labels.string();
    auto out = [&](const char* name) { return (work / name).string(); };
    const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
        {"train", {"train", "--images", I, "--labels", L, "--limit", "200", "--epochs", "2", "--batch", "32", "--out",
                   out("train")}},
        {"generate", {"--seed", "4", "generate", "--checkpoint", out("train") + "/model.ckpt", "--count", "12",
                      "--max-iterations", "20", "--trajectory", "--out", out("generate")}},
        {"cluster", {"cluster", "--checkpoint", out("train") + "/model.ckpt", "--generated", out("generate"),
                     "--images", I, "--labels", L, "--count", "100", "-k", "6", "--restarts", "2", "--out",
                     out("cluster")}},
        {"embed", {"embed", "--checkpoint", out("train") + "/model.ckpt", "--generated", out("generate"), "--images", I,
                   "--labels", L, "--count", "60", "--perplexity", "10", "--iterations", "200", "--out",
                   out("embed")}},
        {"perturb", {"perturb", "--checkpoint", out("train") + "/model.ckpt", "--images", I, "--labels", L,
                     "--count", "100", "--offspring", "30", "--out", out("perturb")}},
        {"render", {"render", "--images", I, "--count", "16", "--columns", "4", "--out", out("render")}},
    };
    std::size_t reproduced = 0;
    std::string failures;
    for (const auto& [name, args] : runs) {
        std::string err;
        if (cli(args, &err) != 0) {
            failures += " " + name + "(run: " + err.substr(0, 120) + ")";
            continue;
        }
        const fs::path manifest = work / name / "manifest.json";
        if (cli({"rerun", "--manifest", manifest.string(), "--out", out((name + "-rerun").c_str())}, &err) == 0)
            ++reproduced;
        else
            failures += " " + name + "(rerun: " + err.substr(0, 120) + ")";
    }
    pass = pass && reproduced == runs.size();
    notes.push_back(fmt("%zu/%zu manifests rerun with identical output checksums", reproduced, runs.size()) + failures);

    std::string detail;
    for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
    return {pass, detail};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    Context ctx;
    std::string mnist = MORPHOGEN_TEST_MNIST_DIR;
    std::string cache = (fs::temp_directory_path() / "morphogen-acceptance-cache").string();
    std::vector<int> only;
    app.add_option("--mnist", mnist, "directory with the four MNIST IDX files")->capture_default_str();
    app.add_option("--cache", cache, "directory for the trained model cache")->capture_default_str();
    app.add_flag("--fresh", ctx.fresh, "retrain even when a cached model matches");
    std::string checkpoint;
    app.add_option("--checkpoint", checkpoint, "use this trained model instead of training")->check(CLI::ExistingFile);
    app.add_option("--only", only, "run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    ctx.mnist = mnist;
    ctx.cache = cache;
    ctx.checkpoint = checkpoint;

    const bool data = ctx.have_data();
    struct Criterion {
        int id;
        const char* name;
        bool needs_data;
        std::function<Verdict(Context&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "gradient correctness", false, gradients},   {2, "learning works", true, learning},
        {3, "fixed-point generation", true, fixed_points}, {4, "new types exist", true, new_types},
        {5, "code space beats pixel space", true, perturbation}, {6, "algorithmic oracles", false, oracles},
        {7, "plumbing exactness", false, plumbing},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        if (c.needs_data && !data) {
            v = {false, "MNIST not found in " + ctx.mnist.string()};
        } else {
            try {
                v = c.run(ctx);
            } catch (const std::exception& e) {
                v = {false, std::string("exception: ") + e.what()};
            }
        }
        failed += !v.pass;
        std::printf("criterion %d %s: %s (%s) [%.0fs]\n", c.id, c.name, v.pass ? "PASS" : "FAIL", v.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
