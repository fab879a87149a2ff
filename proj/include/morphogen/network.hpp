#pragma once

#include "morphogen/image.hpp"
#include "morphogen/io.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace morphogen {

struct CoderLayerSpec {
    int filter_count = 0;
    int filter_size = 5;
    int stride = 1;

    friend bool operator==(const CoderLayerSpec&, const CoderLayerSpec&) = default;
};

struct SparsityConfig {
    int spatial_winners_per_map = 1;
    // Fraction of minibatch samples for which a filter may fire. Only used
    // by minibatch training.
    double lifetime_rate = 0.2;

    friend bool operator==(const SparsityConfig&, const SparsityConfig&) = default;
};

struct ArchConfig {
    int input_rows = kMnistSide;
    int input_cols = kMnistSide;
    std::vector<CoderLayerSpec> coder_layers{{16, 5, 1}, {32, 5, 1}, {64, 5, 1}};
    int decoder_filter_size = 11;
    SparsityConfig sparsity;
    std::uint64_t rng_seed = 42;
    // The coder stack is three layers deep unless this is set.
    bool allow_any_depth = false;
    // Spatial/lifetime sparsity after every coder, or only after the top one.
    bool sparsify_all_layers = false;

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// Throws InvalidArch.
void validate(const ArchConfig& arch);

// Line-oriented text form stored in checkpoints. Reals are written as hex
// floats so parsing restores them exactly.
std::string to_canonical_text(const ArchConfig& arch);
ArchConfig parse_canonical_text(std::string_view text);

struct LayerShape {
    int in_channels = 0;
    int in_rows = 0;
    int in_cols = 0;
    int out_channels = 0;
    int out_rows = 0;
    int out_cols = 0;
    int size = 0;
    int stride = 1;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_channels) * in_channels * size * size;
    }
};

// Coders: same-padded strided correlations, weights[o][c][ky][kx].
// Decoder: one transposed convolution from the top maps to a single image
// channel, weights[m][ky][kx] and a scalar bias.
struct ParamLayout {
    std::vector<LayerShape> coders;
    LayerShape decoder;
    std::size_t total = 0;
};

ParamLayout layout_for(const ArchConfig& arch);

struct ModelParams {
    ArchConfig arch;
    ParamLayout layout;
    std::vector<double> values;

    std::span<const double> coder_weights(std::size_t layer) const;
    std::span<const double> coder_bias(std::size_t layer) const;
    std::span<const double> decoder_weights() const;
    double decoder_bias() const { return values[layout.decoder.bias_offset]; }

    std::span<double> coder_weights(std::size_t layer);
    std::span<double> coder_bias(std::size_t layer);
    std::span<double> decoder_weights();
    double& decoder_bias() { return values[layout.decoder.bias_offset]; }

    std::size_t size() const noexcept { return values.size(); }
};

// Same flat layout as ModelParams::values.
struct GradientVector {
    std::vector<double> values;
};

struct Activations {
    std::vector<FeatureMaps> layers;  // post-rectifier, post-sparsity y^1..y^L
    Image reconstruction;             // raw decoder output, not clamped
};

// Zero-mean uniform weights with standard deviation 1/sqrt(fan_in); zero biases.
ModelParams init_params(const ArchConfig& arch);

// Keeps the `winners` largest entries of each map (ties go to the lowest
// row-major index) and zeroes the rest.
void apply_spatial_wta(FeatureMaps& maps, int winners);

// For each channel, keeps only the ceil(rate * batch) samples with the
// largest peak activation in that channel (ties go to the lowest sample
// index) and zeroes the channel in every other sample.
void apply_lifetime_wta(std::span<FeatureMaps> batch, double rate);

// Spatial WTA on every sample, then lifetime WTA across the batch if requested.
void apply_wta(std::span<FeatureMaps> batch, const SparsityConfig& config, bool lifetime);

Activations forward(const ModelParams& params, const Image& x, bool sparsify);

// Layer-by-layer forward over a minibatch so lifetime sparsity can compare
// samples before the next layer runs.
std::vector<Activations> forward_batch(const ModelParams& params, std::span<const Image> batch, bool sparsify,
                                       bool lifetime);

Image decode(const ModelParams& params, const FeatureMaps& top);

// Top-layer code y^L with spatial sparsity.
FeatureMaps encode(const ModelParams& params, const Image& x);

// One application of the model as an image-to-image map: sparse forward
// pass, reconstruction clamped to [0, 1].
Image apply_model(const ModelParams& params, const Image& x);

// Squared Euclidean pixel distance.
double distortion(const Image& x, const Image& x_prime);

// Gradient of distortion(x, reconstruction) with the sparsity masks of
// `activations` held fixed. Adds into `grad` and returns the loss.
double accumulate_gradient(const ModelParams& params, const Image& x, const Activations& activations,
                           GradientVector& grad);

// Exact gradient and loss for one image under spatial sparsity. Throws
// NonFiniteLoss.
std::pair<GradientVector, double> backward(const ModelParams& params, const Image& x);

GradientVector zero_gradient(const ModelParams& params);

ModelParams sgd_step(const ModelParams& params, const GradientVector& grad, double learning_rate);
void sgd_step_in_place(ModelParams& params, const GradientVector& grad, double learning_rate);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_unstable = 0;
};

// Compares analytic gradients with central differences on `samples`
// randomly chosen parameters. Parameters whose +/-epsilon probes change any
// sparsity mask are skipped, counted and replaced by further draws (at most
// 10 * samples draws in total). Throws InvalidEpsilon.
GradientCheckResult gradient_check(const ModelParams& params, const Image& x, double epsilon,
                                   std::size_t samples = 200, std::uint64_t seed = 0);

inline constexpr std::uint16_t kCheckpointVersion = 1;

// "MRPH" | u16 version | u32 text length | canonical ArchConfig text |
// u64 value count | f64 LE values | u32 CRC-32 of everything before it.
Bytes serialize(const ModelParams& params);
ModelParams deserialize(std::span<const std::uint8_t> bytes);

// CRC-32 of the serialized container payload (the stored trailer).
std::uint32_t model_checksum(const ModelParams& params);

} // namespace morphogen
