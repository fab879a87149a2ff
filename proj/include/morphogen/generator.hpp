#pragma once

#include "morphogen/image.hpp"
#include "morphogen/network.hpp"

#include <cstdint>
#include <vector>

namespace morphogen {

enum class SeedDistribution { Uniform, Bernoulli };

struct SeedConfig {
    SeedDistribution distribution = SeedDistribution::Bernoulli;
    double bernoulli_on_probability = 0.12;
    std::uint64_t rng_seed = 1;
};

struct ConvergenceConfig {
    double tolerance = 1e-6;  // mean squared per-pixel step
    int max_iterations = 100;
};

// Throws InvalidConfig.
void validate(const SeedConfig& cfg);
void validate(const ConvergenceConfig& cfg);

enum class TrajectoryStatus { Converged, MaxIterations, NonFinite };

struct GenerationTrajectory {
    std::vector<Image> steps;           // x_0 .. x_K
    std::vector<double> step_distances;  // distortion(x_k, x_{k-1}), k = 1..K
    bool converged = false;
    int iterations = 0;
    TrajectoryStatus status = TrajectoryStatus::MaxIterations;

    const Image& final_image() const { return steps.back(); }
};

struct TrajectorySummary {
    int iterations = 0;
    bool converged = false;
    TrajectoryStatus status = TrajectoryStatus::MaxIterations;
    double last_step = 0.0;  // distortion of the final step
};

struct GeneratedItem {
    Image final_image;
    FeatureMaps code;
    TrajectorySummary summary;
};

struct GeneratedSet {
    std::vector<GeneratedItem> items;
    std::uint32_t model_checksum = 0;
    SeedConfig seed_config;
    ConvergenceConfig convergence_config;
};

// Draw `index` of the seed stream; depends only on (cfg.rng_seed, index).
Image sample_seed(const SeedConfig& cfg, std::uint64_t index, int rows = kMnistSide, int cols = kMnistSide);

// x_k = clamp(f(x_{k-1})) until distortion(x_k, x_{k-1}) / pixels < tolerance
// and the residual distortion(f(x_k), x_k) / pixels is below tolerance too,
// or max_iterations. A small step whose next residual is large does not stop
// the iteration. A non-finite iterate ends the trajectory with status
// NonFinite; it is flagged, not thrown.
GenerationTrajectory iterate(const ModelParams& params, const Image& x0, const ConvergenceConfig& cfg);

// Trajectory for seed index i is iterate(sample_seed(seed_cfg, i)). Items
// that did not converge are kept and flagged.
GeneratedSet generate_batch(const ModelParams& params, std::size_t n, const SeedConfig& seed_cfg,
                            const ConvergenceConfig& conv_cfg, std::vector<GenerationTrajectory>* trajectories = nullptr);

// Reconstruction residual distortion(x_k, f(x_k)) for every recorded step
// but the last; entry k equals step_distances[k].
std::vector<double> residual_trace(const GenerationTrajectory& trajectory);

// True when no residual exceeds its predecessor by more than relative
// slack `rel` (plus `abs`).
bool residuals_non_increasing(const std::vector<double>& residuals, double rel = 1e-9, double abs = 1e-12);

} // namespace morphogen
