#pragma once

#include "morphogen/image.hpp"
#include "morphogen/io.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace morphogen {

// 8-bit grayscale raster.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Raster() = default;
    Raster(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const Raster&, const Raster&) = default;
};

inline constexpr int kGridGap = 2;
inline constexpr std::uint8_t kGridGapLevel = 128;

// round(255 * clamp(v, 0, 1)).
std::uint8_t to_gray(double v);

// Row-major montage with 2 px separators at 128; unused cells are 0.
// Throws EmptyInput, InvalidConfig on columns < 1, ShapeMismatch on mixed sizes.
Raster render_grid(std::span<const Image> images, int columns);

Bytes encode_pgm(const Raster& raster);
// Throws MalformedContainer.
Raster decode_pgm(std::span<const std::uint8_t> bytes);

void write_pgm(const std::filesystem::path& path, const Raster& raster);
Raster read_pgm(const std::filesystem::path& path);

// Points scaled to fit a size x size white canvas with a margin, drawn as
// 3x3 dots in the given gray level; later points paint over earlier ones.
Raster render_scatter(std::span<const std::array<double, 2>> points, std::span<const std::uint8_t> levels,
                      int size = 1024);

} // namespace morphogen
