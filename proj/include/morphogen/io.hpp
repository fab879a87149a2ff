#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace morphogen {

using Bytes = std::vector<std::uint8_t>;

std::uint32_t crc32(std::span<const std::uint8_t> data);

Bytes read_file(const std::filesystem::path& path);

// Raw bytes of a file, gunzipped when the content starts with the gzip magic.
Bytes read_maybe_gzip(const std::filesystem::path& path);

Bytes gunzip(std::span<const std::uint8_t> data);
Bytes gzip(std::span<const std::uint8_t> data);

// Writes to a sibling temporary file and renames it over `path`, so readers
// see either the old content or the complete new content.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

// Little-endian integer encoding for the binary containers.
void put_u16(Bytes& out, std::uint16_t v);
void put_u32(Bytes& out, std::uint32_t v);
void put_u64(Bytes& out, std::uint64_t v);
// Reads `width` bytes at `offset`; the caller checks bounds.
std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, int width);

} // namespace morphogen
