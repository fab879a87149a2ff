#pragma once

#include "morphogen/generator.hpp"
#include "morphogen/perturb.hpp"
#include "morphogen/taxonomy.hpp"
#include "morphogen/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace morphogen {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kManifestSchema = "morphogen.manifest/1";

std::string hex32(std::uint32_t v);

Json to_json(const ArchConfig& arch);
Json to_json(const TrainConfig& cfg);
Json to_json(const SeedConfig& cfg);
Json to_json(const ConvergenceConfig& cfg);
Json to_json(const PerturbConfig& cfg);
Json to_json(const EmbeddingConfig& cfg);

// `novelty` may be empty; otherwise one score per code row.
Json to_json(const ClusterReport& report, const CodeMatrix& codes, const std::vector<double>& novelty);
Json to_json(const ComparisonReport& report);
Json kl_trace_json(const Embedding2D& embedding);

// id,origin,label,u,v with one row per code row; label is empty for generated rows.
std::string embedding_csv(const Embedding2D& embedding, const CodeMatrix& codes);

// Generated finals and their sparse codes in one binary container:
// "MGEN" | u16 version | u64 count | u32 rows, cols | u32 channels, code rows, code cols |
// per item: rows*cols f64 pixels, u32 nnz, nnz x (u32 index, f64 value) | u32 CRC-32.
Bytes encode_generated(const GeneratedSet& set);
// Throws BadMagic, VersionMismatch, ChecksumFailure, MalformedContainer. Summaries are not stored here.
GeneratedSet decode_generated(std::span<const std::uint8_t> bytes);

// generated.bin, generated.json (configs and per-item summaries).
void save_generated(const std::filesystem::path& dir, const GeneratedSet& set);
GeneratedSet load_generated(const std::filesystem::path& dir);

struct OutputRecord {
    std::string path;  // relative to the output directory
    std::uint32_t crc32 = 0;
    std::uint64_t bytes = 0;
    bool deterministic = true;
};

struct InputRecord {
    std::string role;
    std::string path;
    std::uint32_t crc32 = 0;
};

struct RunManifest {
    std::string command;
    std::vector<std::string> args;  // argv after the program name, without --out/--force
    std::string working_directory;
    Json config = Json::object();
    Json seeds = Json::object();
    std::vector<InputRecord> inputs;
    std::string checkpoint_checksum;  // hex, empty if none
    std::string started_at;
    std::string finished_at;
    std::vector<OutputRecord> outputs;
};

Json to_json(const RunManifest& manifest);
// Throws MalformedContainer listing the first schema violation.
RunManifest manifest_from_json(const Json& j);
// Empty string when valid, otherwise a description of the first violation.
std::string schema_violation(const Json& j);

OutputRecord record_output(const std::filesystem::path& dir, const std::string& relative, bool deterministic = true);
InputRecord record_input(const std::string& role, const std::filesystem::path& path);

std::string utc_timestamp();

} // namespace morphogen
