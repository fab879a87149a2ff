#include "morphogen/render.hpp"

#include "morphogen/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace morphogen {

std::uint8_t to_gray(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(255.0 * v));
}

Raster render_grid(std::span<const Image> images, int columns) {
    if (images.empty()) throw Error(ErrorCode::EmptyInput, "nothing to render");
    if (columns < 1) throw Error(ErrorCode::InvalidConfig, "columns must be >= 1");
    const int rows_n = images[0].rows;
    const int cols_n = images[0].cols;
    const int count = static_cast<int>(images.size());
    const int cols = std::min(columns, count);
    const int rows = (count + cols - 1) / cols;
    Raster out(cols * cols_n + (cols - 1) * kGridGap, rows * rows_n + (rows - 1) * kGridGap, kGridGapLevel);
    for (int cell = 0; cell < rows * cols; ++cell) {
        const int ox = (cell % cols) * (cols_n + kGridGap);
        const int oy = (cell / cols) * (rows_n + kGridGap);
        const Image* img = cell < count ? &images[static_cast<std::size_t>(cell)] : nullptr;
        if (img && (img->rows != rows_n || img->cols != cols_n))
            throw Error(ErrorCode::ShapeMismatch, "grid images must share one size");
        for (int y = 0; y < rows_n; ++y)
            for (int x = 0; x < cols_n; ++x) out.at(ox + x, oy + y) = img ? to_gray(img->at(y, x)) : 0;
    }
    return out;
}

Bytes encode_pgm(const Raster& raster) {
    const std::string header = "P5\n" + std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.insert(out.end(), raster.pixels.begin(), raster.pixels.end());
    return out;
}

Raster decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&] {
        skip_space();
        long v = 0;
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(bytes[pos]) && v < 1'000'000) v = v * 10 + (bytes[pos++] - '0');
        if (pos == start) throw Error(ErrorCode::MalformedContainer, "PGM header field missing");
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw Error(ErrorCode::BadMagic, "not a binary PGM");
    pos = 2;
    const long w = number();
    const long h = number();
    const long maxval = number();
    if (maxval != 255) throw Error(ErrorCode::MalformedContainer, "only 8-bit PGM is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error(ErrorCode::MalformedContainer, "bad PGM header");
    ++pos;
    Raster out(static_cast<int>(w), static_cast<int>(h));
    if (bytes.size() - pos != out.pixels.size()) throw Error(ErrorCode::TruncatedPayload, "PGM payload size mismatch");
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), out.pixels.begin());
    return out;
}

void write_pgm(const std::filesystem::path& path, const Raster& raster) { write_file_atomic(path, encode_pgm(raster)); }

Raster read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

Raster render_scatter(std::span<const std::array<double, 2>> points, std::span<const std::uint8_t> levels, int size) {
    if (points.size() != levels.size()) throw Error(ErrorCode::ShapeMismatch, "one gray level per point");
    Raster out(size, size, 255);
    if (points.empty()) return out;
    double lo[2] = {points[0][0], points[0][1]};
    double hi[2] = {points[0][0], points[0][1]};
    for (const auto& p : points)
        for (int d = 0; d < 2; ++d) {
            lo[d] = std::min(lo[d], p[d]);
            hi[d] = std::max(hi[d], p[d]);
        }
    const double margin = 8.0;
    const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-12});
    const double scale = (size - 1 - 2 * margin) / extent;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const int cx = static_cast<int>(std::lround(margin + (points[i][0] - lo[0]) * scale));
        const int cy = static_cast<int>(std::lround(margin + (hi[1] - points[i][1]) * scale));
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int x = cx + dx;
                const int y = cy + dy;
                if (x >= 0 && y >= 0 && x < size && y < size) out.at(x, y) = levels[i];
            }
    }
    return out;
}

} // namespace morphogen
