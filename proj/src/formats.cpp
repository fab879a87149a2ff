#include "morphogen/formats.hpp"

#include "morphogen/error.hpp"
#include "morphogen/io.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <ctime>

namespace morphogen {

namespace {

constexpr std::uint16_t kGeneratedVersion = 1;

const char* name(SeedDistribution d) { return d == SeedDistribution::Uniform ? "uniform" : "bernoulli"; }

const char* name(TrajectoryStatus s) {
    switch (s) {
    case TrajectoryStatus::Converged: return "converged";
    case TrajectoryStatus::MaxIterations: return "max_iterations";
    case TrajectoryStatus::NonFinite: return "non_finite";
    }
    return "?";
}

const char* name(CrossoverMode m) {
    switch (m) {
    case CrossoverMode::Uniform: return "uniform";
    case CrossoverMode::SinglePoint: return "single-point";
    case CrossoverMode::None: return "none";
    }
    return "?";
}

const char* name(PerturbSpace s) { return s == PerturbSpace::Pixel ? "pixel" : "code"; }

TrajectoryStatus status_from(const std::string& s) {
    if (s == "converged") return TrajectoryStatus::Converged;
    if (s == "non_finite") return TrajectoryStatus::NonFinite;
    if (s == "max_iterations") return TrajectoryStatus::MaxIterations;
    throw Error(ErrorCode::MalformedContainer, "unknown trajectory status '" + s + "'");
}

Json stats_json(const SpaceStats& s) {
    return {{"space", name(s.space)},
            {"samples", s.samples},
            {"mean_residual", s.mean_residual},
            {"mean_baseline_residual", s.mean_baseline_residual},
            {"mean_novelty", s.mean_novelty},
            {"residuals", s.residuals},
            {"baseline_residuals", s.baseline_residuals},
            {"novelty", s.novelty}};
}

void need(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::MalformedContainer, what);
}

std::uint32_t parse_hex32(const std::string& s) {
    need(s.size() == 8 && s.find_first_not_of("0123456789abcdef") == std::string::npos, "bad checksum '" + s + "'");
    return static_cast<std::uint32_t>(std::stoul(s, nullptr, 16));
}

} // namespace

std::string hex32(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

Json to_json(const ArchConfig& arch) {
    Json coders = Json::array();
    for (const auto& c : arch.coder_layers)
        coders.push_back({{"filters", c.filter_count}, {"size", c.filter_size}, {"stride", c.stride}});
    return {{"input", {arch.input_rows, arch.input_cols}},
            {"coders", coders},
            {"decoder_size", arch.decoder_filter_size},
            {"spatial_winners", arch.sparsity.spatial_winners_per_map},
            {"lifetime_rate", arch.sparsity.lifetime_rate},
            {"init_seed", arch.rng_seed},
            {"allow_any_depth", arch.allow_any_depth},
            {"sparsify_all_layers", arch.sparsify_all_layers}};
}

Json to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"minibatch_size", cfg.minibatch_size},
            {"learning_rate", cfg.learning_rate},
            {"lr_decay", cfg.lr_decay},
            {"shuffle_seed", cfg.shuffle_seed},
            {"checkpoint_every", cfg.checkpoint_every},
            {"lifetime_sparsity", cfg.lifetime_sparsity}};
}

Json to_json(const SeedConfig& cfg) {
    return {{"distribution", name(cfg.distribution)},
            {"bernoulli_on_probability", cfg.bernoulli_on_probability},
            {"rng_seed", cfg.rng_seed}};
}

Json to_json(const ConvergenceConfig& cfg) {
    return {{"tolerance", cfg.tolerance}, {"max_iterations", cfg.max_iterations}};
}

Json to_json(const PerturbConfig& cfg) {
    return {{"mutation_rate", cfg.mutation_rate},
            {"mutation_scale", cfg.mutation_scale},
            {"crossover_mode", name(cfg.crossover_mode)},
            {"rng_seed", cfg.rng_seed},
            {"space", name(cfg.space)}};
}

Json to_json(const EmbeddingConfig& cfg) {
    return {{"perplexity", cfg.perplexity},
            {"iterations", cfg.iterations},
            {"rng_seed", cfg.rng_seed},
            {"learning_rate", cfg.learning_rate},
            {"exaggeration", cfg.exaggeration},
            {"exaggeration_iterations", cfg.exaggeration_iterations},
            {"momentum_switch", cfg.momentum_switch}};
}

Json to_json(const ClusterReport& report, const CodeMatrix& codes, const std::vector<double>& novelty) {
    Json clusters = Json::array();
    std::vector<int> assignment(codes.size(), -1);
    for (const auto& c : report.clusters) {
        for (std::size_t m : c.members) assignment[m] = c.cluster;
        clusters.push_back({{"cluster", c.cluster},
                            {"size", c.size},
                            {"generated_count", c.generated_count},
                            {"generated_fraction", c.generated_fraction},
                            {"known_histogram", c.known_histogram},
                            {"new_type", c.new_type},
                            {"medoid_row", c.medoid_row},
                            {"members", c.members}});
    }
    Json rows = Json::array();
    for (std::size_t i = 0; i < codes.size(); ++i) {
        Json row = {{"id", i},
                    {"origin", codes.tags[i].origin == Origin::Known ? "known" : "generated"},
                    {"label", codes.tags[i].label},
                    {"cluster", assignment[i]}};
        if (!novelty.empty()) row["novelty"] = novelty[i];
        rows.push_back(std::move(row));
    }
    return {{"threshold", report.threshold},
            {"k", report.clusters.size()},
            {"new_type_count", report.new_type_count},
            {"clusters", clusters},
            {"rows", rows}};
}

Json to_json(const ComparisonReport& report) {
    Json parents = Json::array();
    for (const auto& [a, b] : report.parents) parents.push_back({a, b});
    return {{"pixel_config", to_json(report.config.pixel)},
            {"code_config", to_json(report.config.code)},
            {"offspring", report.config.offspring},
            {"pair_seed", report.config.pair_seed},
            {"code_scale", report.code_scale},
            {"parents", parents},
            {"pixel", stats_json(report.pixel)},
            {"code", stats_json(report.code)},
            {"code_below_pixel", report.code.mean_residual < report.pixel.mean_residual}};
}

Json kl_trace_json(const Embedding2D& embedding) {
    Json trace = Json::array();
    for (const auto& [it, kl] : embedding.kl_trace) trace.push_back({{"iteration", it}, {"kl", kl}});
    return {{"config", to_json(embedding.config)},
            {"kl_divergence", embedding.kl_divergence},
            {"bandwidth_failures", embedding.bandwidth_failures},
            {"kl_trace", trace}};
}

std::string embedding_csv(const Embedding2D& embedding, const CodeMatrix& codes) {
    if (embedding.points.size() != codes.size()) throw Error(ErrorCode::ShapeMismatch, "embedding and codes differ in size");
    std::string out = "id,origin,label,u,v\n";
    char buf[128];
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const bool known = codes.tags[i].origin == Origin::Known;
        out += std::to_string(i) + (known ? ",known," + std::to_string(codes.tags[i].label) : std::string(",generated,"));
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", embedding.points[i][0], embedding.points[i][1]);
        out += buf;
    }
    return out;
}

Bytes encode_generated(const GeneratedSet& set) {
    Bytes out = {'M', 'G', 'E', 'N'};
    put_u16(out, kGeneratedVersion);
    put_u64(out, set.items.size());
    const Image* img = set.items.empty() ? nullptr : &set.items[0].final_image;
    const FeatureMaps* code = set.items.empty() ? nullptr : &set.items[0].code;
    put_u32(out, img ? static_cast<std::uint32_t>(img->rows) : 0);
    put_u32(out, img ? static_cast<std::uint32_t>(img->cols) : 0);
    put_u32(out, code ? static_cast<std::uint32_t>(code->channels) : 0);
    put_u32(out, code ? static_cast<std::uint32_t>(code->rows) : 0);
    put_u32(out, code ? static_cast<std::uint32_t>(code->cols) : 0);
    for (const auto& item : set.items) {
        if (!item.final_image.same_shape(*img) || item.code.data.size() != code->data.size())
            throw Error(ErrorCode::ShapeMismatch, "generated items differ in shape");
        for (double v : item.final_image.pixels) put_u64(out, std::bit_cast<std::uint64_t>(v));
        std::uint32_t nnz = 0;
        for (double v : item.code.data) nnz += v != 0.0;
        put_u32(out, nnz);
        for (std::size_t i = 0; i < item.code.data.size(); ++i) {
            if (item.code.data[i] == 0.0) continue;
            put_u32(out, static_cast<std::uint32_t>(i));
            put_u64(out, std::bit_cast<std::uint64_t>(item.code.data[i]));
        }
    }
    put_u32(out, crc32(out));
    return out;
}

GeneratedSet decode_generated(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t header = 4 + 2 + 8 + 5 * 4;
    if (bytes.size() < header + 4) throw Error(ErrorCode::MalformedContainer, "generated container too short");
    if (bytes[0] != 'M' || bytes[1] != 'G' || bytes[2] != 'E' || bytes[3] != 'N')
        throw Error(ErrorCode::BadMagic, "not a generated-set container");
    const auto version = static_cast<std::uint16_t>(get_le(bytes, 4, 2));
    if (version != kGeneratedVersion)
        throw Error(ErrorCode::VersionMismatch, "generated container version " + std::to_string(version));
    const std::size_t body = bytes.size() - 4;
    if (crc32(bytes.first(body)) != static_cast<std::uint32_t>(get_le(bytes, body, 4)))
        throw Error(ErrorCode::ChecksumFailure, "generated container CRC mismatch");
    const std::uint64_t count = get_le(bytes, 6, 8);
    const auto rows = static_cast<int>(get_le(bytes, 14, 4));
    const auto cols = static_cast<int>(get_le(bytes, 18, 4));
    const auto ch = static_cast<int>(get_le(bytes, 22, 4));
    const auto crows = static_cast<int>(get_le(bytes, 26, 4));
    const auto ccols = static_cast<int>(get_le(bytes, 30, 4));
    std::size_t pos = header;
    const std::size_t pixels = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    const std::size_t code_dim = static_cast<std::size_t>(ch) * static_cast<std::size_t>(crows) * static_cast<std::size_t>(ccols);
    GeneratedSet set;
    for (std::uint64_t n = 0; n < count; ++n) {
        need(pos + pixels * 8 + 4 <= body, "generated container truncated");
        GeneratedItem item;
        item.final_image = Image(rows, cols);
        for (std::size_t i = 0; i < pixels; ++i, pos += 8)
            item.final_image.pixels[i] = std::bit_cast<double>(get_le(bytes, pos, 8));
        const std::uint64_t nnz = get_le(bytes, pos, 4);
        pos += 4;
        need(nnz <= code_dim && pos + nnz * 12 <= body, "generated container truncated");
        item.code = FeatureMaps(ch, crows, ccols);
        for (std::uint64_t k = 0; k < nnz; ++k, pos += 12) {
            const std::uint64_t idx = get_le(bytes, pos, 4);
            need(idx < code_dim, "code index out of range");
            item.code.data[idx] = std::bit_cast<double>(get_le(bytes, pos + 4, 8));
        }
        set.items.push_back(std::move(item));
    }
    need(pos == body, "trailing bytes in generated container");
    return set;
}

void save_generated(const std::filesystem::path& dir, const GeneratedSet& set) {
    write_file_atomic(dir / "generated.bin", encode_generated(set));
    Json items = Json::array();
    for (std::size_t i = 0; i < set.items.size(); ++i) {
        const auto& s = set.items[i].summary;
        items.push_back({{"index", i},
                         {"iterations", s.iterations},
                         {"converged", s.converged},
                         {"status", name(s.status)},
                         {"last_step", s.last_step}});
    }
    const Json j = {{"model_checksum", hex32(set.model_checksum)},
                    {"seed_config", to_json(set.seed_config)},
                    {"convergence_config", to_json(set.convergence_config)},
                    {"count", set.items.size()},
                    {"items", items}};
    write_file_atomic(dir / "generated.json", j.dump(2) + "\n");
}

GeneratedSet load_generated(const std::filesystem::path& dir) {
    GeneratedSet set = decode_generated(read_file(dir / "generated.bin"));
    const Bytes text = read_file(dir / "generated.json");
    Json j;
    try {
        j = Json::parse(text.begin(), text.end());
        set.model_checksum = parse_hex32(j.at("model_checksum").get<std::string>());
        const auto& sc = j.at("seed_config");
        set.seed_config.distribution =
            sc.at("distribution").get<std::string>() == "uniform" ? SeedDistribution::Uniform : SeedDistribution::Bernoulli;
        set.seed_config.bernoulli_on_probability = sc.at("bernoulli_on_probability").get<double>();
        set.seed_config.rng_seed = sc.at("rng_seed").get<std::uint64_t>();
        set.convergence_config.tolerance = j.at("convergence_config").at("tolerance").get<double>();
        set.convergence_config.max_iterations = j.at("convergence_config").at("max_iterations").get<int>();
        const auto& items = j.at("items");
        need(items.size() == set.items.size(), "generated.json and generated.bin disagree on item count");
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto& s = set.items[i].summary;
            s.iterations = items[i].at("iterations").get<int>();
            s.converged = items[i].at("converged").get<bool>();
            s.status = status_from(items[i].at("status").get<std::string>());
            s.last_step = items[i].at("last_step").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedContainer, std::string("generated.json: ") + e.what());
    }
    return set;
}

Json to_json(const RunManifest& m) {
    Json inputs = Json::array();
    for (const auto& in : m.inputs) inputs.push_back({{"role", in.role}, {"path", in.path}, {"crc32", hex32(in.crc32)}});
    Json outputs = Json::array();
    for (const auto& out : m.outputs)
        outputs.push_back(
            {{"path", out.path}, {"crc32", hex32(out.crc32)}, {"bytes", out.bytes}, {"deterministic", out.deterministic}});
    return {{"schema", kManifestSchema},
            {"tool_version", kToolVersion},
            {"command", m.command},
            {"args", m.args},
            {"working_directory", m.working_directory},
            {"config", m.config},
            {"seeds", m.seeds},
            {"inputs", inputs},
            {"checkpoint_checksum", m.checkpoint_checksum},
            {"started_at", m.started_at},
            {"finished_at", m.finished_at},
            {"outputs", outputs}};
}

std::string schema_violation(const Json& j) {
    if (!j.is_object()) return "manifest is not an object";
    auto has = [&](const char* key, auto pred, const char* type) -> std::string {
        if (!j.contains(key)) return std::string("missing '") + key + "'";
        if (!pred(j.at(key))) return std::string("'") + key + "' must be " + type;
        return "";
    };
    const auto is_string = [](const Json& v) { return v.is_string(); };
    const auto is_object = [](const Json& v) { return v.is_object(); };
    const auto is_array = [](const Json& v) { return v.is_array(); };
    for (const char* k : {"schema", "tool_version", "command", "working_directory", "checkpoint_checksum", "started_at",
                          "finished_at"})
        if (auto e = has(k, is_string, "a string"); !e.empty()) return e;
    if (j.at("schema") != kManifestSchema) return "unsupported schema '" + j.at("schema").get<std::string>() + "'";
    for (const char* k : {"config", "seeds"})
        if (auto e = has(k, is_object, "an object"); !e.empty()) return e;
    for (const char* k : {"args", "inputs", "outputs"})
        if (auto e = has(k, is_array, "an array"); !e.empty()) return e;
    for (const auto& a : j.at("args"))
        if (!a.is_string()) return "'args' entries must be strings";
    const auto is_crc = [](const Json& v) {
        return v.is_string() && v.get<std::string>().size() == 8 &&
               v.get<std::string>().find_first_not_of("0123456789abcdef") == std::string::npos;
    };
    for (const auto& in : j.at("inputs"))
        if (!in.is_object() || !in.contains("role") || !in.at("role").is_string() || !in.contains("path") ||
            !in.at("path").is_string() || !in.contains("crc32") || !is_crc(in.at("crc32")))
            return "'inputs' entries need string role, path and 8-digit hex crc32";
    for (const auto& out : j.at("outputs"))
        if (!out.is_object() || !out.contains("path") || !out.at("path").is_string() || !out.contains("crc32") ||
            !is_crc(out.at("crc32")) || !out.contains("bytes") || !out.at("bytes").is_number_unsigned() ||
            !out.contains("deterministic") || !out.at("deterministic").is_boolean())
            return "'outputs' entries need path, crc32, bytes and deterministic";
    return "";
}

RunManifest manifest_from_json(const Json& j) {
    if (auto e = schema_violation(j); !e.empty()) throw Error(ErrorCode::MalformedContainer, "manifest: " + e);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.working_directory = j.at("working_directory").get<std::string>();
    m.config = j.at("config");
    m.seeds = j.at("seeds");
    for (const auto& in : j.at("inputs"))
        m.inputs.push_back({in.at("role").get<std::string>(), in.at("path").get<std::string>(),
                            parse_hex32(in.at("crc32").get<std::string>())});
    m.checkpoint_checksum = j.at("checkpoint_checksum").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    for (const auto& out : j.at("outputs"))
        m.outputs.push_back({out.at("path").get<std::string>(), parse_hex32(out.at("crc32").get<std::string>()),
                             out.at("bytes").get<std::uint64_t>(), out.at("deterministic").get<bool>()});
    return m;
}

OutputRecord record_output(const std::filesystem::path& dir, const std::string& relative, bool deterministic) {
    const Bytes data = read_file(dir / relative);
    return {relative, crc32(data), data.size(), deterministic};
}

InputRecord record_input(const std::string& role, const std::filesystem::path& path) {
    return {role, std::filesystem::absolute(path).lexically_normal().string(), crc32(read_file(path))};
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace morphogen
