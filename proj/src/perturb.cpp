#include "morphogen/perturb.hpp"

#include "morphogen/error.hpp"
#include "morphogen/parallel.hpp"
#include "morphogen/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace morphogen {

namespace {

constexpr std::uint64_t kCrossoverStream = 0x43524f53;
constexpr std::uint64_t kMutateStream = 0x4d555441;

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void finish(SpaceStats& s) {
    s.samples = s.residuals.size();
    s.mean_residual = mean(s.residuals);
    s.mean_baseline_residual = mean(s.baseline_residuals);
    s.mean_novelty = mean(s.novelty);
}

Image as_image(std::vector<double> pixels, const Image& shape) {
    Image out(shape.rows, shape.cols);
    out.pixels = std::move(pixels);
    return out;
}

FeatureMaps as_code(std::vector<double> values, const FeatureMaps& shape) {
    FeatureMaps out(shape.channels, shape.rows, shape.cols);
    out.data = std::move(values);
    return out;
}

} // namespace

void validate(const PerturbConfig& cfg) {
    if (!(cfg.mutation_rate >= 0.0 && cfg.mutation_rate <= 1.0))
        throw Error(ErrorCode::InvalidConfig, "mutation rate must lie in [0, 1]");
    if (!(cfg.mutation_scale > 0.0) || !std::isfinite(cfg.mutation_scale))
        throw Error(ErrorCode::InvalidConfig, "mutation scale must be positive");
}

std::vector<double> crossover_at(std::span<const double> a, std::span<const double> b, std::size_t cut) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "parents differ in length");
    cut = std::min(cut, a.size());
    std::vector<double> out(b.begin(), b.end());
    std::copy(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(cut), out.begin());
    return out;
}

std::vector<double> crossover(std::span<const double> a, std::span<const double> b, const PerturbConfig& cfg,
                              std::uint64_t stream) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "parents differ in length");
    Rng rng(substream_seed(cfg.rng_seed, kCrossoverStream), stream);
    switch (cfg.crossover_mode) {
    case CrossoverMode::None:
        return {a.begin(), a.end()};
    case CrossoverMode::SinglePoint:
        return crossover_at(a, b, static_cast<std::size_t>(rng.below(a.size() + 1)));
    case CrossoverMode::Uniform:
        break;
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = rng.bernoulli(0.5) ? a[i] : b[i];
    return out;
}

std::vector<double> mutate(std::span<const double> x, const PerturbConfig& cfg, std::uint64_t stream) {
    std::vector<double> out(x.begin(), x.end());
    const std::size_t n = x.size();
    const auto m = std::min(n, static_cast<std::size_t>(std::ceil(cfg.mutation_rate * static_cast<double>(n))));
    if (m == 0) return out;
    Rng rng(substream_seed(cfg.rng_seed, kMutateStream), stream);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = order[i];
        const double noise = rng.uniform(-cfg.mutation_scale, cfg.mutation_scale);
        if (cfg.space == PerturbSpace::Code) {
            if (out[j] != 0.0) out[j] += noise;
        } else {
            out[j] = std::clamp(out[j] + noise, 0.0, 1.0);
        }
    }
    return out;
}

ComparisonReport compare_spaces(const ModelParams& params, std::span<const Image> data, const KnownClassModel& known,
                                const CompareConfig& cfg) {
    if (data.size() < 2) throw Error(ErrorCode::EmptyInput, "need at least two parent images");
    validate(cfg.pixel);
    validate(cfg.code);
    ComparisonReport report;
    report.config = cfg;
    const std::size_t n = cfg.offspring;

    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(cfg.pair_seed, i);
        const std::size_t a = rng.below(data.size());
        std::size_t b = rng.below(data.size() - 1);
        if (b >= a) ++b;
        report.parents.emplace_back(a, b);
    }

    std::vector<FeatureMaps> code_a(n);
    std::vector<FeatureMaps> code_b(n);
    parallel_for(n, [&](std::size_t i) {
        code_a[i] = encode(params, data[report.parents[i].first]);
        code_b[i] = encode(params, data[report.parents[i].second]);
    });

    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t active = 0;
    for (const auto* set : {&code_a, &code_b})
        for (const auto& c : *set)
            for (double v : c.data)
                if (v != 0.0) {
                    sum += v;
                    sum_sq += v * v;
                    ++active;
                }
    const double active_mean = active ? sum / static_cast<double>(active) : 0.0;
    const double active_sd =
        active ? std::sqrt(std::max(0.0, sum_sq / static_cast<double>(active) - active_mean * active_mean)) : 0.0;
    report.code_scale = cfg.code.mutation_scale * (active_sd > 0.0 ? active_sd : 1.0);
    PerturbConfig code_cfg = cfg.code;
    code_cfg.space = PerturbSpace::Code;
    code_cfg.mutation_scale = report.code_scale;
    PerturbConfig pixel_cfg = cfg.pixel;
    pixel_cfg.space = PerturbSpace::Pixel;

    std::vector<Image> pixel_kids(n);
    std::vector<Image> code_kids(n);
    std::vector<double> pixel_res(n);
    std::vector<double> code_res(n);
    std::vector<double> pixel_base(n);
    std::vector<double> code_base(n);
    std::vector<double> pixel_nov(n);
    std::vector<double> code_nov(n);
    parallel_for(n, [&](std::size_t i) {
        const Image& a = data[report.parents[i].first];
        const Image& b = data[report.parents[i].second];
        const auto residual = [&](const Image& z) { return distortion(z, apply_model(params, z)); };
        const auto novelty = [&](const Image& z) {
            CodeMatrix m;
            m.add_row(encode(params, z).data, CodeTag::generated());
            return novelty_score(known, m.rows[0]);
        };

        pixel_kids[i] = as_image(mutate(crossover(a.pixels, b.pixels, pixel_cfg, i), pixel_cfg, i), a);
        pixel_res[i] = residual(pixel_kids[i]);
        pixel_base[i] = residual(a);
        pixel_nov[i] = novelty(pixel_kids[i]);

        const FeatureMaps child =
            as_code(mutate(crossover(code_a[i].data, code_b[i].data, code_cfg, i), code_cfg, i), code_a[i]);
        code_kids[i] = clamp_unit(decode(params, child));
        code_res[i] = residual(code_kids[i]);
        code_base[i] = residual(clamp_unit(decode(params, code_a[i])));
        code_nov[i] = novelty(code_kids[i]);
    });

    const std::size_t grid = std::min(cfg.grid_samples, n);
    report.pixel.space = PerturbSpace::Pixel;
    report.pixel.residuals = std::move(pixel_res);
    report.pixel.baseline_residuals = std::move(pixel_base);
    report.pixel.novelty = std::move(pixel_nov);
    report.pixel.grid.assign(pixel_kids.begin(), pixel_kids.begin() + static_cast<std::ptrdiff_t>(grid));
    report.code.space = PerturbSpace::Code;
    report.code.residuals = std::move(code_res);
    report.code.baseline_residuals = std::move(code_base);
    report.code.novelty = std::move(code_nov);
    report.code.grid.assign(code_kids.begin(), code_kids.begin() + static_cast<std::ptrdiff_t>(grid));
    finish(report.pixel);
    finish(report.code);
    return report;
}

} // namespace morphogen
