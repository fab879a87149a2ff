#include "morphogen/cli.hpp"

#include "morphogen/dataset.hpp"
#include "morphogen/error.hpp"
#include "morphogen/formats.hpp"
#include "morphogen/generator.hpp"
#include "morphogen/io.hpp"
#include "morphogen/network.hpp"
#include "morphogen/perturb.hpp"
#include "morphogen/render.hpp"
#include "morphogen/taxonomy.hpp"
#include "morphogen/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>

namespace fs = std::filesystem;

namespace morphogen {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Global {
    std::uint64_t seed = 1;
    std::string out;
    bool force = false;
};

struct TrainArgs {
    std::string images, labels;
    double val_fraction = 0.1;
    std::size_t limit = 0;
    TrainConfig cfg;
    std::uint64_t init_seed = 42;
    int winners = 1;
    double lifetime_rate = 0.2;
    bool sparsify_all = false;
};

struct GenerateArgs {
    std::string checkpoint;
    std::size_t count = 100;
    std::string distribution = "bernoulli";
    double on_probability = 0.12;
    ConvergenceConfig conv;
    bool trajectory = false;
    int columns = 10;
};

struct KnownArgs {
    std::string images, labels;
    std::size_t count = 2000;
    std::size_t offset = 0;
};

struct ClusterArgs {
    std::string checkpoint, generated;
    KnownArgs known;
    std::string reference_images, reference_labels;
    std::size_t reference_count = 10000;
    int k = 30;
    int restarts = 5;
    int max_iters = 100;
    double threshold = 0.9;
    int columns = 10;
    std::size_t montage_max = 100;
};

struct EmbedArgs {
    std::string checkpoint, generated;
    KnownArgs known{"", "", 500, 0};
    std::size_t generated_count = 0;
    EmbeddingConfig cfg;
};

struct PerturbArgs {
    std::string checkpoint;
    KnownArgs parents{"", "", 1000, 0};
    std::size_t offspring = 200;
    double rate = 0.2;
    double pixel_scale = 0.5;
    double code_scale = 1.0;
    std::string crossover = "uniform";
    std::size_t grid = 16;
    int columns = 4;
};

struct RenderArgs {
    std::string images, generated;
    std::vector<std::string> pgm;
    std::size_t count = 100;
    std::size_t offset = 0;
    int columns = 10;
};

struct RerunArgs {
    std::string manifest;
};

// Creates the output directory. An existing one is only replaced with
// --force, and only if it is empty or holds a previous run (manifest.json).
fs::path prepare_out(const Global& g) {
    if (g.out.empty()) throw UsageError("--out is required");
    const fs::path dir = fs::absolute(g.out);
    if (fs::exists(dir)) {
        if (!g.force) throw UsageError("--out: " + dir.string() + " already exists (use --force to replace it)");
        if (!fs::is_directory(dir) || (!fs::is_empty(dir) && !fs::exists(dir / "manifest.json")))
            throw UsageError("--out: refusing to replace " + dir.string() + ", it is not a previous run directory");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
    return dir;
}

Dataset slice(const Dataset& data, std::size_t offset, std::size_t count) {
    Dataset out;
    out.split_tag = data.split_tag;
    const std::size_t begin = std::min(offset, data.size());
    const std::size_t end = count == 0 ? data.size() : std::min(data.size(), begin + count);
    out.images.assign(data.images.begin() + static_cast<std::ptrdiff_t>(begin),
                      data.images.begin() + static_cast<std::ptrdiff_t>(end));
    if (data.labels)
        out.labels = std::vector<std::uint8_t>(data.labels->begin() + static_cast<std::ptrdiff_t>(begin),
                                               data.labels->begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

std::optional<fs::path> optional_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
}

std::string index_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu", i);
    return buf;
}

class Run {
public:
    Run(std::string command, std::vector<std::string> args, const Global& g)
        : dir_(prepare_out(g)) {
        manifest_.command = std::move(command);
        manifest_.args = std::move(args);
        manifest_.working_directory = fs::current_path().string();
        manifest_.started_at = utc_timestamp();
        manifest_.seeds["seed"] = g.seed;
    }

    const fs::path& dir() const { return dir_; }
    RunManifest& manifest() { return manifest_; }

    void input(const std::string& role, const std::string& path) {
        if (!path.empty()) manifest_.inputs.push_back(record_input(role, path));
    }

    void write(const std::string& relative, std::span<const std::uint8_t> data, bool deterministic = true) {
        const fs::path p = dir_ / relative;
        fs::create_directories(p.parent_path());
        write_file_atomic(p, data);
        pending_.emplace_back(relative, deterministic);
    }

    void write(const std::string& relative, const std::string& text, bool deterministic = true) {
        write(relative, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), deterministic);
    }

    void adopt(const std::string& relative, bool deterministic = true) { pending_.emplace_back(relative, deterministic); }

    void finish() {
        for (const auto& [path, det] : pending_) manifest_.outputs.push_back(record_output(dir_, path, det));
        manifest_.finished_at = utc_timestamp();
        write_file_atomic(dir_ / "manifest.json", to_json(manifest_).dump(2) + "\n");
    }

private:
    fs::path dir_;
    RunManifest manifest_;
    std::vector<std::pair<std::string, bool>> pending_;
};

ModelParams load_checkpoint(Run& run, const std::string& path) {
    run.input("checkpoint", path);
    ModelParams params = deserialize(read_file(path));
    run.manifest().checkpoint_checksum = hex32(model_checksum(params));
    return params;
}

Dataset load_known(Run& run, const KnownArgs& a, const char* role) {
    run.input(std::string(role) + "_images", a.images);
    run.input(std::string(role) + "_labels", a.labels);
    return slice(load_idx_dataset(a.images, optional_path(a.labels)), a.offset, a.count);
}

std::vector<CodeTag> known_tags(const Dataset& data) {
    std::vector<CodeTag> tags;
    for (std::size_t i = 0; i < data.size(); ++i)
        tags.push_back(data.labels ? CodeTag::known((*data.labels)[i]) : CodeTag::known(-1));
    return tags;
}

CodeMatrix generated_codes(const GeneratedSet& set, std::size_t limit) {
    CodeMatrix codes;
    const std::size_t n = limit == 0 ? set.items.size() : std::min(limit, set.items.size());
    for (std::size_t i = 0; i < n; ++i) codes.add_row(set.items[i].code.data, CodeTag::generated());
    return codes;
}

GeneratedSet load_generated_for(Run& run, const std::string& dir, const ModelParams& params) {
    run.input("generated", (fs::path(dir) / "generated.bin").string());
    GeneratedSet set = load_generated(dir);
    if (set.model_checksum != model_checksum(params))
        throw Error(ErrorCode::InvalidConfig, "generated set " + dir + " was produced by a different checkpoint");
    return set;
}

int cmd_train(const TrainArgs& a, const Global& g, const std::vector<std::string>& argv, std::ostream& out) {
    Run run("train", argv, g);
    ArchConfig arch;
    arch.rng_seed = a.init_seed;
    arch.sparsity.spatial_winners_per_map = a.winners;
    arch.sparsity.lifetime_rate = a.lifetime_rate;
    arch.sparsify_all_layers = a.sparsify_all;
    validate(arch);
    TrainConfig cfg = a.cfg;
    cfg.shuffle_seed = g.seed;
    validate(cfg);

    run.input("images", a.images);
    run.input("labels", a.labels);
    const Dataset all = slice(load_idx_dataset(a.images, optional_path(a.labels)), 0, a.limit);
    auto [train_set, val_set] = split(all, a.val_fraction, g.seed);
    out << "train " << train_set.size() << " images, validation " << val_set.size() << "\n";

    auto& m = run.manifest();
    m.config = {{"arch", to_json(arch)}, {"train", to_json(cfg)}, {"val_fraction", a.val_fraction}, {"limit", a.limit}};
    m.seeds["init_seed"] = a.init_seed;
    m.seeds["shuffle_seed"] = cfg.shuffle_seed;
    m.seeds["split_seed"] = g.seed;

    TrainHooks hooks;
    hooks.checkpoint_path = run.dir() / "model.ckpt";
    hooks.on_epoch = [&](const EpochRecord& r) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %d train_mse %.4f val_mse %.4f lr %.6g (%.1fs)\n", r.epoch, r.train_mse,
                      r.val_mse, r.learning_rate, r.seconds);
        out << line << std::flush;
    };
    const TrainResult result = train(train_set, val_set, arch, cfg, hooks);
    run.adopt("model.ckpt");
    m.checkpoint_checksum = hex32(model_checksum(result.params));
    run.write("train_log.csv", result.log.to_csv(), false);
    run.finish();
    return kExitOk;
}

int cmd_generate(const GenerateArgs& a, const Global& g, const std::vector<std::string>& argv, std::ostream& out) {
    Run run("generate", argv, g);
    const ModelParams params = load_checkpoint(run, a.checkpoint);
    SeedConfig seed_cfg;
    seed_cfg.distribution = a.distribution == "uniform" ? SeedDistribution::Uniform : SeedDistribution::Bernoulli;
    seed_cfg.bernoulli_on_probability = a.on_probability;
    seed_cfg.rng_seed = g.seed;
    validate(seed_cfg);
    validate(a.conv);
    run.manifest().config = {{"count", a.count},
                             {"seed", to_json(seed_cfg)},
                             {"convergence", to_json(a.conv)},
                             {"trajectory", a.trajectory},
                             {"columns", a.columns}};

    std::vector<GenerationTrajectory> trajectories;
    const GeneratedSet set = generate_batch(params, a.count, seed_cfg, a.conv, a.trajectory ? &trajectories : nullptr);
    save_generated(run.dir(), set);
    run.adopt("generated.bin");
    run.adopt("generated.json");

    std::vector<Image> finals;
    std::size_t converged = 0;
    for (std::size_t i = 0; i < set.items.size(); ++i) {
        finals.push_back(set.items[i].final_image);
        converged += set.items[i].summary.converged;
        run.write("finals/" + index_name(i) + ".pgm", encode_pgm(render_grid(std::span(&finals.back(), 1), 1)));
    }
    if (!finals.empty()) run.write("finals_grid.pgm", encode_pgm(render_grid(finals, a.columns)));
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const auto& steps = trajectories[i].steps;
        run.write("trajectories/" + index_name(i) + ".pgm",
                  encode_pgm(render_grid(steps, static_cast<int>(steps.size()))));
    }
    out << converged << " of " << set.items.size() << " trajectories converged\n";
    run.finish();
    return kExitOk;
}

int cmd_cluster(const ClusterArgs& a, const Global& g, const std::vector<std::string>& argv, std::ostream& out) {
    Run run("cluster", argv, g);
    const ModelParams params = load_checkpoint(run, a.checkpoint);
    const GeneratedSet set = load_generated_for(run, a.generated, params);
    const Dataset known = load_known(run, a.known, "known");

    CodeMatrix codes = generated_codes(set, 0);
    codes.append(extract_features(params, known.images, known_tags(known)));

    std::vector<double> novelty;
    if (!a.reference_images.empty()) {
        const Dataset ref = load_known(run, {a.reference_images, a.reference_labels, a.reference_count, 0}, "reference");
        novelty = novelty_scores(fit_known_classes(extract_features(params, ref.images, known_tags(ref))), codes);
    } else {
        novelty = novelty_scores(codes);
    }

    const Clustering clustering = kmeans(codes, a.k, a.restarts, g.seed, a.max_iters);
    const ClusterReport report = build_report(clustering, codes, a.threshold);
    run.manifest().config = {{"k", a.k},
                             {"restarts", a.restarts},
                             {"max_iters", a.max_iters},
                             {"threshold", a.threshold},
                             {"known_count", known.size()},
                             {"known_offset", a.known.offset},
                             {"generated_count", set.items.size()},
                             {"reference_count", a.reference_images.empty() ? 0 : a.reference_count}};
    run.manifest().seeds["kmeans_seed"] = g.seed;

    Json j = to_json(report, codes, novelty);
    j["objective"] = clustering.objective;
    j["objective_trace"] = clustering.objective_trace;
    run.write("clusters.json", j.dump(2) + "\n");

    auto image_of = [&](std::size_t row) -> const Image& {
        return row < set.items.size() ? set.items[row].final_image : known.images[row - set.items.size()];
    };
    for (const auto& c : report.clusters) {
        if (!c.new_type) continue;
        std::vector<Image> members;
        for (std::size_t r : c.members) {
            if (members.size() >= a.montage_max) break;
            members.push_back(image_of(r));
        }
        run.write("montages/cluster_" + index_name(static_cast<std::size_t>(c.cluster)) + ".pgm",
                  encode_pgm(render_grid(members, a.columns)));
    }
    out << report.new_type_count << " new-type clusters of " << report.clusters.size() << "\n";
    run.finish();
    return kExitOk;
}

int cmd_embed(const EmbedArgs& a, const Global& g, const std::vector<std::string>& argv, std::ostream& out) {
    Run run("embed", argv, g);
    const ModelParams params = load_checkpoint(run, a.checkpoint);
    const GeneratedSet set = load_generated_for(run, a.generated, params);
    const Dataset known = load_known(run, a.known, "known");
    CodeMatrix codes = generated_codes(set, a.generated_count);
    codes.append(extract_features(params, known.images, known_tags(known)));

    EmbeddingConfig cfg = a.cfg;
    cfg.rng_seed = g.seed;
    const Embedding2D emb = embed_2d(codes, cfg);
    run.manifest().config = {{"embedding", to_json(cfg)},
                             {"known_count", known.size()},
                             {"generated_count", codes.size() - known.size()}};
    run.manifest().seeds["embedding_seed"] = cfg.rng_seed;

    run.write("embedding.csv", embedding_csv(emb, codes));
    run.write("embedding.json", kl_trace_json(emb).dump(2) + "\n");
    std::vector<std::uint8_t> levels;
    for (const auto& t : codes.tags) levels.push_back(t.origin == Origin::Known ? 0 : 160);
    run.write("scatter.pgm", encode_pgm(render_scatter(emb.points, levels)));
    out << "embedded " << codes.size() << " rows, KL " << emb.kl_divergence << "\n";
    run.finish();
    return kExitOk;
}

int cmd_perturb(const PerturbArgs& a, const Global& g, const std::vector<std::string>& argv, std::ostream& out) {
    Run run("perturb", argv, g);
    const ModelParams params = load_checkpoint(run, a.checkpoint);
    const Dataset pool = load_known(run, a.parents, "parents");
    if (!pool.labels) throw UsageError("--labels is required for perturb (novelty needs digit classes)");

    const std::map<std::string, CrossoverMode> modes = {
        {"uniform", CrossoverMode::Uniform}, {"single-point", CrossoverMode::SinglePoint}, {"none", CrossoverMode::None}};
    CompareConfig cfg;
    cfg.pixel = {a.rate, a.pixel_scale, modes.at(a.crossover), g.seed, PerturbSpace::Pixel};
    cfg.code = {a.rate, a.code_scale, modes.at(a.crossover), g.seed, PerturbSpace::Code};
    cfg.offspring = a.offspring;
    cfg.pair_seed = g.seed;
    cfg.grid_samples = a.grid;

    const KnownClassModel known = fit_known_classes(extract_features(params, pool.images, known_tags(pool)));
    const ComparisonReport report = compare_spaces(params, pool.images, known, cfg);
    run.manifest().config = {{"pixel", to_json(cfg.pixel)},
                             {"code", to_json(cfg.code)},
                             {"offspring", cfg.offspring},
                             {"pool", pool.size()},
                             {"grid", cfg.grid_samples},
                             {"columns", a.columns}};
    run.manifest().seeds["pair_seed"] = cfg.pair_seed;

    run.write("comparison.json", to_json(report).dump(2) + "\n");
    run.write("pixel_grid.pgm", encode_pgm(render_grid(report.pixel.grid, a.columns)));
    run.write("code_grid.pgm", encode_pgm(render_grid(report.code.grid, a.columns)));
    char line[160];
    std::snprintf(line, sizeof line, "mean residual: pixel %.4f code %.4f over %zu offspring\n",
                  report.pixel.mean_residual, report.code.mean_residual, report.pixel.samples);
    out << line;
    run.finish();
    return kExitOk;
}

int cmd_render(const RenderArgs& a, const Global& g, const std::vector<std::string>& argv, std::ostream& out) {
    const int sources = !a.images.empty() + !a.generated.empty() + !a.pgm.empty();
    if (sources != 1) throw UsageError("render needs exactly one of --images, --generated or --pgm");
    Run run("render", argv, g);
    std::vector<Image> images;
    if (!a.images.empty()) {
        run.input("images", a.images);
        images = slice(load_idx_dataset(a.images, std::nullopt), a.offset, a.count).images;
    } else if (!a.generated.empty()) {
        run.input("generated", (fs::path(a.generated) / "generated.bin").string());
        const GeneratedSet set = load_generated(a.generated);
        for (std::size_t i = a.offset; i < set.items.size() && images.size() < a.count; ++i)
            images.push_back(set.items[i].final_image);
    } else {
        for (const auto& p : a.pgm) {
            run.input("pgm", p);
            const Raster r = read_pgm(p);
            Image img(r.height, r.width);
            for (std::size_t i = 0; i < r.pixels.size(); ++i) img.pixels[i] = r.pixels[i] / 255.0;
            images.push_back(std::move(img));
        }
    }
    run.manifest().config = {{"count", a.count}, {"offset", a.offset}, {"columns", a.columns}};
    run.write("grid.pgm", encode_pgm(render_grid(images, a.columns)));
    out << "rendered " << images.size() << " images\n";
    run.finish();
    return kExitOk;
}

int cmd_rerun(const RerunArgs& a, const Global& g, std::ostream& out, std::ostream& err) {
    const Bytes text = read_file(a.manifest);
    Json j;
    try {
        j = Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedContainer, std::string("manifest: ") + e.what());
    }
    const RunManifest m = manifest_from_json(j);
    if (m.command == "rerun") throw UsageError("--manifest: cannot rerun a rerun");
    if (g.out.empty()) throw UsageError("--out is required");
    const fs::path target = fs::absolute(g.out);

    std::vector<std::string> args = m.args;
    args.insert(args.end(), {"--out", target.string()});
    if (g.force) args.push_back("--force");
    const fs::path previous = fs::current_path();
    fs::current_path(m.working_directory);
    int code = kExitFailure;
    try {
        code = run_cli(args, out, err);
    } catch (...) {
        fs::current_path(previous);
        throw;
    }
    fs::current_path(previous);
    if (code != kExitOk) return code;

    std::size_t compared = 0;
    std::size_t mismatched = 0;
    for (const auto& o : m.outputs) {
        if (!o.deterministic) continue;
        ++compared;
        const fs::path p = target / o.path;
        if (!fs::exists(p) || crc32(read_file(p)) != o.crc32) {
            ++mismatched;
            err << "mismatch: " << o.path << "\n";
        }
    }
    out << "rerun reproduced " << (compared - mismatched) << " of " << compared << " deterministic outputs\n";
    return mismatched == 0 ? kExitOk : kExitFailure;
}

// argv without --out/--force, as stored in manifests.
std::vector<std::string> recordable(const std::vector<std::string>& args) {
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--force") continue;
        if (args[i] == "--out") {
            ++i;
            continue;
        }
        if (args[i].rfind("--out=", 0) == 0) continue;
        kept.push_back(args[i]);
    }
    return kept;
}

void add_known(CLI::App* app, KnownArgs& k, bool labels_required) {
    app->add_option("--images", k.images, "IDX image file")->required()->check(CLI::ExistingFile);
    auto* labels = app->add_option("--labels", k.labels, "IDX label file")->check(CLI::ExistingFile);
    if (labels_required) labels->required();
    app->add_option("--count", k.count, "images to use (0 = all)")->capture_default_str();
    app->add_option("--offset", k.offset, "index of the first image")->capture_default_str();
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse convolutional autoencoder: training, fixed-point generation and new-type analysis", "morphogen"};
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option("--seed", g.seed, "seed for every random choice of the command")->capture_default_str();
    app.add_option("--out", g.out, "output directory");
    app.add_flag("--force", g.force, "replace an existing output directory from a previous run");
    app.set_version_flag("--version", kToolVersion);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train a model on IDX images");
    train_cmd->add_option("--images", ta.images, "IDX image file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--labels", ta.labels, "IDX label file")->check(CLI::ExistingFile);
    train_cmd->add_option("--val-fraction", ta.val_fraction)->capture_default_str();
    train_cmd->add_option("--limit", ta.limit, "use only the first N images (0 = all)")->capture_default_str();
    train_cmd->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
    train_cmd->add_option("--batch", ta.cfg.minibatch_size)->capture_default_str();
    train_cmd->add_option("--lr", ta.cfg.learning_rate)->capture_default_str();
    train_cmd->add_option("--lr-decay", ta.cfg.lr_decay)->capture_default_str();
    train_cmd->add_option("--checkpoint-every", ta.cfg.checkpoint_every)->capture_default_str();
    train_cmd->add_flag("--lifetime", ta.cfg.lifetime_sparsity, "apply lifetime sparsity within minibatches");
    train_cmd->add_flag("--exact-train-metric", ta.cfg.exact_train_metric, "re-evaluate the training set every epoch");
    train_cmd->add_option("--init-seed", ta.init_seed)->capture_default_str();
    train_cmd->add_option("--winners", ta.winners, "spatial winners per feature map")->capture_default_str();
    train_cmd->add_option("--lifetime-rate", ta.lifetime_rate)->capture_default_str();
    train_cmd->add_flag("--sparsify-all-layers", ta.sparsify_all);

    GenerateArgs ga;
    auto* gen_cmd = app.add_subcommand("generate", "iterate the model from random seeds to fixed points");
    gen_cmd->add_option("--checkpoint", ga.checkpoint)->required()->check(CLI::ExistingFile);
    gen_cmd->add_option("--count", ga.count)->capture_default_str();
    gen_cmd->add_option("--distribution", ga.distribution)->check(CLI::IsMember({"bernoulli", "uniform"}))->capture_default_str();
    gen_cmd->add_option("--on-probability", ga.on_probability)->capture_default_str();
    gen_cmd->add_option("--tolerance", ga.conv.tolerance)->capture_default_str();
    gen_cmd->add_option("--max-iterations", ga.conv.max_iterations)->capture_default_str();
    gen_cmd->add_flag("--trajectory", ga.trajectory, "also write one strip per trajectory");
    gen_cmd->add_option("--columns", ga.columns)->capture_default_str();

    ClusterArgs ca;
    auto* cluster_cmd = app.add_subcommand("cluster", "k-means over generated and known codes");
    cluster_cmd->add_option("--checkpoint", ca.checkpoint)->required()->check(CLI::ExistingFile);
    cluster_cmd->add_option("--generated", ca.generated, "output directory of generate")->required()->check(CLI::ExistingDirectory);
    add_known(cluster_cmd, ca.known, true);
    cluster_cmd->add_option("--reference-images", ca.reference_images, "images whose class centroids define novelty")->check(CLI::ExistingFile);
    cluster_cmd->add_option("--reference-labels", ca.reference_labels)->check(CLI::ExistingFile);
    cluster_cmd->add_option("--reference-count", ca.reference_count)->capture_default_str();
    cluster_cmd->add_option("-k,--clusters", ca.k)->capture_default_str();
    cluster_cmd->add_option("--restarts", ca.restarts)->capture_default_str();
    cluster_cmd->add_option("--max-iterations", ca.max_iters)->capture_default_str();
    cluster_cmd->add_option("--threshold", ca.threshold, "generated fraction marking a new type")->capture_default_str();
    cluster_cmd->add_option("--columns", ca.columns)->capture_default_str();
    cluster_cmd->add_option("--montage-max", ca.montage_max)->capture_default_str();

    EmbedArgs ea;
    auto* embed_cmd = app.add_subcommand("embed", "2-D embedding of generated and known codes");
    embed_cmd->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
    embed_cmd->add_option("--generated", ea.generated)->required()->check(CLI::ExistingDirectory);
    add_known(embed_cmd, ea.known, true);
    embed_cmd->add_option("--generated-count", ea.generated_count, "generated rows to use (0 = all)")->capture_default_str();
    embed_cmd->add_option("--perplexity", ea.cfg.perplexity)->capture_default_str();
    embed_cmd->add_option("--iterations", ea.cfg.iterations)->capture_default_str();

    PerturbArgs pa;
    auto* perturb_cmd = app.add_subcommand("perturb", "compare crossover and mutation in pixel and code space");
    perturb_cmd->add_option("--checkpoint", pa.checkpoint)->required()->check(CLI::ExistingFile);
    add_known(perturb_cmd, pa.parents, true);
    perturb_cmd->add_option("--offspring", pa.offspring)->capture_default_str();
    perturb_cmd->add_option("--rate", pa.rate, "mutation rate in both spaces")->capture_default_str();
    perturb_cmd->add_option("--pixel-scale", pa.pixel_scale)->capture_default_str();
    perturb_cmd->add_option("--code-scale", pa.code_scale, "multiple of the active-code standard deviation")->capture_default_str();
    perturb_cmd->add_option("--crossover", pa.crossover)->check(CLI::IsMember({"uniform", "single-point", "none"}))->capture_default_str();
    perturb_cmd->add_option("--grid", pa.grid, "offspring shown per grid")->capture_default_str();
    perturb_cmd->add_option("--columns", pa.columns)->capture_default_str();

    RenderArgs ra;
    auto* render_cmd = app.add_subcommand("render", "montage of images as a PGM grid");
    render_cmd->add_option("--images", ra.images, "IDX image file")->check(CLI::ExistingFile);
    render_cmd->add_option("--generated", ra.generated)->check(CLI::ExistingDirectory);
    render_cmd->add_option("--pgm", ra.pgm, "PGM files")->check(CLI::ExistingFile);
    render_cmd->add_option("--count", ra.count)->capture_default_str();
    render_cmd->add_option("--offset", ra.offset)->capture_default_str();
    render_cmd->add_option("--columns", ra.columns)->capture_default_str();

    RerunArgs rr;
    auto* rerun_cmd = app.add_subcommand("rerun", "repeat a run from its manifest and compare output checksums");
    rerun_cmd->add_option("--manifest", rr.manifest)->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    const std::vector<std::string> argv = recordable(args);
    try {
        if (train_cmd->parsed()) return cmd_train(ta, g, argv, out);
        if (gen_cmd->parsed()) return cmd_generate(ga, g, argv, out);
        if (cluster_cmd->parsed()) return cmd_cluster(ca, g, argv, out);
        if (embed_cmd->parsed()) return cmd_embed(ea, g, argv, out);
        if (perturb_cmd->parsed()) return cmd_perturb(pa, g, argv, out);
        if (render_cmd->parsed()) return cmd_render(ra, g, argv, out);
        if (rerun_cmd->parsed()) return cmd_rerun(rr, g, out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace morphogen
