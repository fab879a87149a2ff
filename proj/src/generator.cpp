#include "morphogen/generator.hpp"

#include "morphogen/error.hpp"
#include "morphogen/parallel.hpp"
#include "morphogen/random.hpp"

#include <cmath>

namespace morphogen {

void validate(const SeedConfig& cfg) {
    if (cfg.distribution == SeedDistribution::Bernoulli &&
        !(cfg.bernoulli_on_probability > 0.0 && cfg.bernoulli_on_probability < 1.0))
        throw Error(ErrorCode::InvalidConfig, "bernoulli on-probability must lie in (0, 1)");
}

void validate(const ConvergenceConfig& cfg) {
    if (!(cfg.tolerance > 0.0)) throw Error(ErrorCode::InvalidConfig, "tolerance must be > 0");
    if (cfg.max_iterations < 1) throw Error(ErrorCode::InvalidConfig, "max_iterations must be >= 1");
}

Image sample_seed(const SeedConfig& cfg, std::uint64_t index, int rows, int cols) {
    validate(cfg);
    Rng rng(cfg.rng_seed, index);
    Image img(rows, cols);
    for (double& p : img.pixels) {
        p = cfg.distribution == SeedDistribution::Uniform ? rng.uniform()
                                                          : (rng.bernoulli(cfg.bernoulli_on_probability) ? 1.0 : 0.0);
    }
    return img;
}

GenerationTrajectory iterate(const ModelParams& params, const Image& x0, const ConvergenceConfig& cfg) {
    validate(cfg);
    GenerationTrajectory t;
    t.steps.push_back(x0);
    const auto pixels = static_cast<double>(x0.size());
    Image next = apply_model(params, x0);
    for (int k = 1; k <= cfg.max_iterations; ++k) {
        t.iterations = k;
        if (!all_finite(next)) {
            t.status = TrajectoryStatus::NonFinite;
            t.step_distances.push_back(std::nan(""));
            t.steps.push_back(std::move(next));
            return t;
        }
        const double step = distortion(next, t.steps.back());
        t.step_distances.push_back(step);
        t.steps.push_back(std::move(next));
        next = apply_model(params, t.steps.back());
        if (step / pixels < cfg.tolerance && all_finite(next) &&
            distortion(next, t.steps.back()) / pixels < cfg.tolerance) {
            t.converged = true;
            t.status = TrajectoryStatus::Converged;
            return t;
        }
    }
    t.status = TrajectoryStatus::MaxIterations;
    return t;
}

GeneratedSet generate_batch(const ModelParams& params, std::size_t n, const SeedConfig& seed_cfg,
                            const ConvergenceConfig& conv_cfg, std::vector<GenerationTrajectory>* trajectories) {
    validate(seed_cfg);
    validate(conv_cfg);
    if (n < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
    GeneratedSet set;
    set.model_checksum = model_checksum(params);
    set.seed_config = seed_cfg;
    set.convergence_config = conv_cfg;
    set.items.resize(n);
    if (trajectories) trajectories->assign(n, {});
    parallel_for(n, [&](std::size_t i) {
        GenerationTrajectory t = iterate(params, sample_seed(seed_cfg, i, params.arch.input_rows, params.arch.input_cols), conv_cfg);
        GeneratedItem& item = set.items[i];
        item.final_image = t.final_image();
        item.summary = {t.iterations, t.converged, t.status, t.step_distances.back()};
        if (t.status != TrajectoryStatus::NonFinite) {
            item.code = encode(params, item.final_image);
        } else {
            const LayerShape& top = params.layout.decoder;
            item.code = FeatureMaps(top.in_channels, top.in_rows, top.in_cols);
        }
        if (trajectories) (*trajectories)[i] = std::move(t);
    });
    return set;
}

std::vector<double> residual_trace(const GenerationTrajectory& trajectory) {
    return trajectory.step_distances;
}

bool residuals_non_increasing(const std::vector<double>& residuals, double rel, double abs) {
    for (std::size_t k = 1; k < residuals.size(); ++k)
        if (residuals[k] > residuals[k - 1] * (1.0 + rel) + abs) return false;
    return true;
}

} // namespace morphogen
