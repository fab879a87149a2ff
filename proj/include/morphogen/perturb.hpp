#pragma once

#include "morphogen/image.hpp"
#include "morphogen/network.hpp"
#include "morphogen/taxonomy.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace morphogen {

// None returns the first parent unchanged.
enum class CrossoverMode { Uniform, SinglePoint, None };
enum class PerturbSpace { Pixel, Code };

struct PerturbConfig {
    double mutation_rate = 0.2;
    double mutation_scale = 0.5;  // code space: multiple of the active-code standard deviation
    CrossoverMode crossover_mode = CrossoverMode::Uniform;
    std::uint64_t rng_seed = 1;
    PerturbSpace space = PerturbSpace::Pixel;
};

// Throws InvalidConfig.
void validate(const PerturbConfig& cfg);

// Deterministic in (a, b, cfg.rng_seed, stream). Throws DimensionMismatch.
std::vector<double> crossover(std::span<const double> a, std::span<const double> b, const PerturbConfig& cfg,
                              std::uint64_t stream = 0);

// Entries [0, cut) from a, [cut, n) from b.
std::vector<double> crossover_at(std::span<const double> a, std::span<const double> b, std::size_t cut);

// Adds uniform noise in [-scale, scale] to ceil(rate * n) distinct entries.
// Pixel space clamps to [0, 1]; code space leaves zero entries at zero.
std::vector<double> mutate(std::span<const double> x, const PerturbConfig& cfg, std::uint64_t stream = 0);

struct CompareConfig {
    PerturbConfig pixel{0.2, 0.5, CrossoverMode::Uniform, 1, PerturbSpace::Pixel};
    PerturbConfig code{0.2, 1.0, CrossoverMode::Uniform, 1, PerturbSpace::Code};
    std::size_t offspring = 200;
    std::uint64_t pair_seed = 1;
    std::size_t grid_samples = 16;
};

struct SpaceStats {
    PerturbSpace space = PerturbSpace::Pixel;
    std::size_t samples = 0;
    double mean_residual = 0.0;
    double mean_baseline_residual = 0.0;
    double mean_novelty = 0.0;
    std::vector<double> residuals;           // distortion(z, f(z)) per offspring
    std::vector<double> baseline_residuals;  // same for the unperturbed first parent
    std::vector<double> novelty;
    std::vector<Image> grid;                 // first grid_samples offspring as images
};

struct ComparisonReport {
    CompareConfig config;
    double code_scale = 0.0;  // absolute code-space noise scale actually used
    std::vector<std::pair<std::size_t, std::size_t>> parents;
    SpaceStats pixel;
    SpaceStats code;
};

// One offspring per parent pair in each space, from the same pairs. Code
// offspring are decoded and clamped; the code-space baseline of a parent is
// clamp(decode(encode(a))). Throws EmptyInput on fewer than two images.
ComparisonReport compare_spaces(const ModelParams& params, std::span<const Image> data, const KnownClassModel& known,
                                const CompareConfig& cfg);

} // namespace morphogen
