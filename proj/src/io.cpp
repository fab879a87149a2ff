#include "morphogen/io.hpp"

#include "morphogen/error.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace morphogen {

std::uint32_t crc32(std::span<const std::uint8_t> data) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t offset = 0;
    while (offset < data.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - offset, 1u << 30));
        crc = ::crc32(crc, data.data() + offset, chunk);
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::Io, "read failed for " + path.string());
    return bytes;
}

Bytes read_maybe_gzip(const std::filesystem::path& path) {
    Bytes bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes);
    return bytes;
}

Bytes gunzip(std::span<const std::uint8_t> data) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw Error(ErrorCode::Io, "inflateInit2 failed");
    zs.next_in = const_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    Bytes out;
    std::uint8_t buffer[1 << 16];
    int status = Z_OK;
    while (status != Z_STREAM_END) {
        zs.next_out = buffer;
        zs.avail_out = sizeof(buffer);
        status = inflate(&zs, Z_NO_FLUSH);
        if (status != Z_OK && status != Z_STREAM_END) {
            inflateEnd(&zs);
            throw Error(ErrorCode::Io, "corrupt gzip stream");
        }
        out.insert(out.end(), buffer, buffer + (sizeof(buffer) - zs.avail_out));
        if (status == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw Error(ErrorCode::Io, "truncated gzip stream");
        }
    }
    inflateEnd(&zs);
    return out;
}

Bytes gzip(std::span<const std::uint8_t> data) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw Error(ErrorCode::Io, "deflateInit2 failed");
    zs.next_in = const_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    Bytes out;
    std::uint8_t buffer[1 << 16];
    int status = Z_OK;
    while (status != Z_STREAM_END) {
        zs.next_out = buffer;
        zs.avail_out = sizeof(buffer);
        status = deflate(&zs, Z_FINISH);
        if (status == Z_STREAM_ERROR) {
            deflateEnd(&zs);
            throw Error(ErrorCode::Io, "deflate failed");
        }
        out.insert(out.end(), buffer, buffer + (sizeof(buffer) - zs.avail_out));
    }
    deflateEnd(&zs);
    return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string());
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::Io, "rename to " + path.string() + " failed: " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, int width) {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t{bytes[offset + static_cast<std::size_t>(i)]} << (8 * i);
    return v;
}

} // namespace morphogen
