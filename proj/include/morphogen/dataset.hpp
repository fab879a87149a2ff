#pragma once

#include "morphogen/image.hpp"
#include "morphogen/io.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace morphogen {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct RawIdxImages {
    std::uint32_t magic = kIdxImageMagic;
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> pixels;

    friend bool operator==(const RawIdxImages&, const RawIdxImages&) = default;
};

struct LabelSet {
    std::uint32_t magic = kIdxLabelMagic;
    std::uint32_t count = 0;
    std::vector<std::uint8_t> labels;

    friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

enum class SplitTag { Train, Validation };

struct Dataset {
    std::vector<Image> images;
    std::optional<std::vector<std::uint8_t>> labels;
    SplitTag split_tag = SplitTag::Train;

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }
};

// Big-endian IDX decoding. Throws BadMagic / TruncatedPayload / LabelOutOfRange.
RawIdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
LabelSet parse_idx_labels(std::span<const std::uint8_t> bytes);

Bytes serialize_idx_images(const RawIdxImages& raw);
Bytes serialize_idx_labels(const LabelSet& labels);

// Pixel byte b becomes b / 255. Throws CountMismatch if the label count
// differs from the image count.
Dataset normalize(const RawIdxImages& raw, const std::optional<LabelSet>& labels);

// Seeded partition into (train, validation). The validation side receives
// round(n * validation_fraction) items; both sides keep the input order.
std::pair<Dataset, Dataset> split(const Dataset& data, double validation_fraction, std::uint64_t rng_seed);

// First `count` items (all items if count exceeds the size).
Dataset take_prefix(const Dataset& data, std::size_t count);

Dataset concatenate(const Dataset& a, const Dataset& b);

// Reads (optionally gzip-compressed) IDX files and normalizes them.
Dataset load_idx_dataset(const std::filesystem::path& images_path,
                         const std::optional<std::filesystem::path>& labels_path);

} // namespace morphogen
