#include "morphogen/dataset.hpp"

#include "morphogen/error.hpp"
#include "morphogen/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace morphogen {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

Dataset select(const Dataset& data, const std::vector<std::size_t>& indices, SplitTag tag) {
    Dataset out;
    out.split_tag = tag;
    out.images.reserve(indices.size());
    if (data.labels) out.labels.emplace().reserve(indices.size());
    for (std::size_t i : indices) {
        out.images.push_back(data.images[i]);
        if (data.labels) out.labels->push_back((*data.labels)[i]);
    }
    return out;
}

} // namespace

RawIdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16) throw Error(ErrorCode::TruncatedPayload, "IDX image header needs 16 bytes");
    RawIdxImages raw;
    raw.magic = read_be32(bytes, 0);
    if (raw.magic != kIdxImageMagic)
        throw Error(ErrorCode::BadMagic, "expected image magic 2051, got " + std::to_string(raw.magic));
    raw.count = read_be32(bytes, 4);
    raw.rows = read_be32(bytes, 8);
    raw.cols = read_be32(bytes, 12);
    const std::uint64_t expected = std::uint64_t{raw.count} * raw.rows * raw.cols;
    if (bytes.size() - 16 != expected)
        throw Error(ErrorCode::TruncatedPayload, "payload has " + std::to_string(bytes.size() - 16) +
                                                     " bytes, header implies " + std::to_string(expected));
    raw.pixels.assign(bytes.begin() + 16, bytes.end());
    return raw;
}

LabelSet parse_idx_labels(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw Error(ErrorCode::TruncatedPayload, "IDX label header needs 8 bytes");
    LabelSet set;
    set.magic = read_be32(bytes, 0);
    if (set.magic != kIdxLabelMagic)
        throw Error(ErrorCode::BadMagic, "expected label magic 2049, got " + std::to_string(set.magic));
    set.count = read_be32(bytes, 4);
    if (bytes.size() - 8 != set.count)
        throw Error(ErrorCode::TruncatedPayload, "payload has " + std::to_string(bytes.size() - 8) +
                                                     " bytes, header implies " + std::to_string(set.count));
    set.labels.assign(bytes.begin() + 8, bytes.end());
    for (std::size_t i = 0; i < set.labels.size(); ++i)
        if (set.labels[i] > 9)
            throw Error(ErrorCode::LabelOutOfRange,
                        "label " + std::to_string(set.labels[i]) + " at index " + std::to_string(i));
    return set;
}

Bytes serialize_idx_images(const RawIdxImages& raw) {
    Bytes out;
    out.reserve(16 + raw.pixels.size());
    write_be32(out, raw.magic);
    write_be32(out, raw.count);
    write_be32(out, raw.rows);
    write_be32(out, raw.cols);
    out.insert(out.end(), raw.pixels.begin(), raw.pixels.end());
    return out;
}

Bytes serialize_idx_labels(const LabelSet& labels) {
    Bytes out;
    out.reserve(8 + labels.labels.size());
    write_be32(out, labels.magic);
    write_be32(out, labels.count);
    out.insert(out.end(), labels.labels.begin(), labels.labels.end());
    return out;
}

Dataset normalize(const RawIdxImages& raw, const std::optional<LabelSet>& labels) {
    if (labels && labels->count != raw.count)
        throw Error(ErrorCode::CountMismatch, std::to_string(raw.count) + " images vs " +
                                                  std::to_string(labels->count) + " labels");
    Dataset data;
    const auto rows = static_cast<int>(raw.rows);
    const auto cols = static_cast<int>(raw.cols);
    const std::size_t per = raw.rows * raw.cols;
    data.images.reserve(raw.count);
    for (std::size_t i = 0; i < raw.count; ++i) {
        Image img(rows, cols);
        const std::uint8_t* src = raw.pixels.data() + i * per;
        for (std::size_t p = 0; p < per; ++p) img.pixels[p] = src[p] / 255.0;
        data.images.push_back(std::move(img));
    }
    if (labels) data.labels = labels->labels;
    return data;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double validation_fraction, std::uint64_t rng_seed) {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw Error(ErrorCode::DegenerateSplit, "validation fraction must lie in (0, 1)");
    const std::size_t n = data.size();
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * validation_fraction));
    if (n_val < 1 || n_val >= n)
        throw Error(ErrorCode::DegenerateSplit, "split of " + std::to_string(n) + " items leaves an empty side");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(rng_seed);
    rng.shuffle(order.begin(), order.end());

    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    return {select(data, train_idx, SplitTag::Train), select(data, val_idx, SplitTag::Validation)};
}

Dataset take_prefix(const Dataset& data, std::size_t count) {
    count = std::min(count, data.size());
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return select(data, idx, data.split_tag);
}

Dataset concatenate(const Dataset& a, const Dataset& b) {
    if (a.labels.has_value() != b.labels.has_value())
        throw Error(ErrorCode::CountMismatch, "cannot concatenate labeled with unlabeled data");
    Dataset out = a;
    out.images.insert(out.images.end(), b.images.begin(), b.images.end());
    if (out.labels) out.labels->insert(out.labels->end(), b.labels->begin(), b.labels->end());
    return out;
}

Dataset load_idx_dataset(const std::filesystem::path& images_path,
                         const std::optional<std::filesystem::path>& labels_path) {
    const RawIdxImages raw = parse_idx_images(read_maybe_gzip(images_path));
    std::optional<LabelSet> labels;
    if (labels_path) labels = parse_idx_labels(read_maybe_gzip(*labels_path));
    return normalize(raw, labels);
}

} // namespace morphogen
