#pragma once

#include <cstddef>
#include <vector>

namespace morphogen {

inline constexpr int kMnistSide = 28;

// Grayscale raster, row-major, intensities nominally in [0, 1].
struct Image {
    int rows = 0;
    int cols = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int r, int c, double fill = 0.0)
        : rows(r), cols(c), pixels(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    std::size_t size() const noexcept { return pixels.size(); }
    double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * cols + x]; }
    double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * cols + x]; }

    bool same_shape(const Image& other) const noexcept { return rows == other.rows && cols == other.cols; }

    friend bool operator==(const Image&, const Image&) = default;
};

// A stack of equally sized spatial grids, one per filter: data[c][y][x].
struct FeatureMaps {
    int channels = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    FeatureMaps() = default;
    FeatureMaps(int c, int r, int w)
        : channels(c), rows(r), cols(w),
          data(static_cast<std::size_t>(c) * static_cast<std::size_t>(r) * static_cast<std::size_t>(w), 0.0) {}

    std::size_t map_size() const noexcept { return static_cast<std::size_t>(rows) * cols; }
    double* map(int c) { return data.data() + static_cast<std::size_t>(c) * map_size(); }
    const double* map(int c) const { return data.data() + static_cast<std::size_t>(c) * map_size(); }
    double& at(int c, int y, int x) { return map(c)[static_cast<std::size_t>(y) * cols + x]; }
    double at(int c, int y, int x) const { return map(c)[static_cast<std::size_t>(y) * cols + x]; }

    friend bool operator==(const FeatureMaps&, const FeatureMaps&) = default;
};

// Copy with every pixel clamped to [0, 1].
Image clamp_unit(Image image);

bool all_finite(const Image& image);

} // namespace morphogen
