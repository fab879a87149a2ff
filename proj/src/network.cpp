#include "morphogen/network.hpp"

#include "morphogen/error.hpp"
#include "morphogen/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <sstream>

namespace morphogen {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

int coder_padding(const LayerShape& l) { return (l.size - 1) / 2; }
int decoder_offset(const LayerShape& l) { return (l.size - l.stride) / 2; }

// Scatter form of a same-padded strided correlation: each nonzero input
// adds into the outputs whose window covers it. Used for sparse inputs.
void coder_forward_scatter(const LayerShape& l, std::span<const double> w, const double* in, FeatureMaps& out) {
    const std::size_t out_map = out.map_size();
    const int pad = coder_padding(l);
    const std::size_t w_out_stride = static_cast<std::size_t>(l.in_channels) * l.size * l.size;
    for (int c = 0; c < l.in_channels; ++c) {
        for (int iy = 0; iy < l.in_rows; ++iy) {
            for (int ix = 0; ix < l.in_cols; ++ix) {
                const double v = in[(static_cast<std::size_t>(c) * l.in_rows + iy) * l.in_cols + ix];
                if (v == 0.0) continue;
                for (int ky = 0; ky < l.size; ++ky) {
                    const int ny = iy - ky + pad;
                    if (ny < 0 || ny % l.stride != 0) continue;
                    const int oy = ny / l.stride;
                    if (oy >= l.out_rows) continue;
                    for (int kx = 0; kx < l.size; ++kx) {
                        const int nx = ix - kx + pad;
                        if (nx < 0 || nx % l.stride != 0) continue;
                        const int ox = nx / l.stride;
                        if (ox >= l.out_cols) continue;
                        const double* wp = w.data() + (static_cast<std::size_t>(c) * l.size + ky) * l.size + kx;
                        double* op = out.data.data() + static_cast<std::size_t>(oy) * l.out_cols + ox;
                        for (int o = 0; o < l.out_channels; ++o) op[o * out_map] += v * wp[o * w_out_stride];
                    }
                }
            }
        }
    }
}

// Dense inputs: unfold receptive fields into columns and multiply by the
// filter matrix [out_channels x (in_channels * size * size)].
void coder_forward_gemm(const LayerShape& l, std::span<const double> w, const double* in, FeatureMaps& out) {
    const int pad = coder_padding(l);
    const int taps = l.in_channels * l.size * l.size;
    const int positions = l.out_rows * l.out_cols;
    thread_local std::vector<double> columns;
    columns.assign(static_cast<std::size_t>(taps) * positions, 0.0);
    for (int c = 0; c < l.in_channels; ++c) {
        for (int ky = 0; ky < l.size; ++ky) {
            for (int kx = 0; kx < l.size; ++kx) {
                double* row = columns.data() + static_cast<std::size_t>((c * l.size + ky) * l.size + kx) * positions;
                for (int oy = 0; oy < l.out_rows; ++oy) {
                    const int iy = oy * l.stride + ky - pad;
                    if (iy < 0 || iy >= l.in_rows) continue;
                    const double* src = in + (static_cast<std::size_t>(c) * l.in_rows + iy) * l.in_cols;
                    double* dst = row + static_cast<std::size_t>(oy) * l.out_cols;
                    for (int ox = 0; ox < l.out_cols; ++ox) {
                        const int ix = ox * l.stride + kx - pad;
                        if (ix >= 0 && ix < l.in_cols) dst[ox] = src[ix];
                    }
                }
            }
        }
    }
    ConstMatrixMap filters(w.data(), l.out_channels, taps);
    ConstMatrixMap unfolded(columns.data(), taps, positions);
    MatrixMap(out.data.data(), l.out_channels, positions).noalias() += filters * unfolded;
}

FeatureMaps coder_forward(const LayerShape& l, std::span<const double> w, std::span<const double> b,
                          const double* in) {
    FeatureMaps out(l.out_channels, l.out_rows, l.out_cols);
    const std::size_t out_map = out.map_size();
    for (int o = 0; o < l.out_channels; ++o) std::fill_n(out.map(o), out_map, b[static_cast<std::size_t>(o)]);
    const std::size_t n_in = static_cast<std::size_t>(l.in_channels) * l.in_rows * l.in_cols;
    const auto nonzero = static_cast<std::size_t>(std::count_if(in, in + n_in, [](double v) { return v != 0.0; }));
    if (nonzero * 10 < n_in)
        coder_forward_scatter(l, w, in, out);
    else
        coder_forward_gemm(l, w, in, out);
    return out;
}

void rectify(FeatureMaps& maps) {
    for (double& v : maps.data) v = std::max(v, 0.0);
}

// Backpropagates through one coder. `gout` holds dL/dy for this layer's
// outputs; only units with y > 0 pass gradient. When `gin` is non-null it
// receives dL/dy for the (nonzero) inputs.
void coder_backward(const LayerShape& l, std::span<const double> w, const double* in, const FeatureMaps& out,
                    const FeatureMaps& gout, std::span<double> dw, std::span<double> db, FeatureMaps* gin) {
    const int pad = coder_padding(l);
    for (int o = 0; o < l.out_channels; ++o) {
        for (int oy = 0; oy < l.out_rows; ++oy) {
            for (int ox = 0; ox < l.out_cols; ++ox) {
                if (out.at(o, oy, ox) <= 0.0) continue;
                const double g = gout.at(o, oy, ox);
                if (g == 0.0) continue;
                db[static_cast<std::size_t>(o)] += g;
                for (int c = 0; c < l.in_channels; ++c) {
                    const std::size_t wbase = (static_cast<std::size_t>(o) * l.in_channels + c) * l.size * l.size;
                    for (int ky = 0; ky < l.size; ++ky) {
                        const int iy = oy * l.stride + ky - pad;
                        if (iy < 0 || iy >= l.in_rows) continue;
                        for (int kx = 0; kx < l.size; ++kx) {
                            const int ix = ox * l.stride + kx - pad;
                            if (ix < 0 || ix >= l.in_cols) continue;
                            const std::size_t ii = (static_cast<std::size_t>(c) * l.in_rows + iy) * l.in_cols + ix;
                            const double v = in[ii];
                            if (v == 0.0) continue;
                            const std::size_t wi = wbase + static_cast<std::size_t>(ky) * l.size + kx;
                            dw[wi] += g * v;
                            if (gin) gin->data[ii] += g * w[wi];
                        }
                    }
                }
            }
        }
    }
}

// Same result as coder_backward for layers where many units carry gradient:
// only output positions with some nonzero gradient are unfolded, then
// dW += G * columns^T and dX = col2im(W^T * G).
void coder_backward_gemm(const LayerShape& l, std::span<const double> w, const double* in, const FeatureMaps& out,
                         const FeatureMaps& gout, std::span<double> dw, std::span<double> db, FeatureMaps* gin) {
    const int pad = coder_padding(l);
    const int taps = l.in_channels * l.size * l.size;
    const int positions = l.out_rows * l.out_cols;
    thread_local std::vector<int> selected;
    selected.clear();
    for (int p = 0; p < positions; ++p) {
        for (int o = 0; o < l.out_channels; ++o) {
            const std::size_t i = static_cast<std::size_t>(o) * positions + p;
            if (out.data[i] > 0.0 && gout.data[i] != 0.0) {
                selected.push_back(p);
                break;
            }
        }
    }
    const int n = static_cast<int>(selected.size());
    if (n == 0) return;
    thread_local std::vector<double> g;
    thread_local std::vector<double> columns;
    g.assign(static_cast<std::size_t>(l.out_channels) * n, 0.0);
    for (int o = 0; o < l.out_channels; ++o) {
        double sum = 0.0;
        for (int s = 0; s < n; ++s) {
            const std::size_t i = static_cast<std::size_t>(o) * positions + selected[static_cast<std::size_t>(s)];
            const double v = out.data[i] > 0.0 ? gout.data[i] : 0.0;
            g[static_cast<std::size_t>(o) * n + s] = v;
            sum += v;
        }
        db[static_cast<std::size_t>(o)] += sum;
    }
    auto source = [&](int tap, int s) -> std::ptrdiff_t {
        const int c = tap / (l.size * l.size);
        const int ky = tap / l.size % l.size;
        const int kx = tap % l.size;
        const int p = selected[static_cast<std::size_t>(s)];
        const int iy = p / l.out_cols * l.stride + ky - pad;
        const int ix = p % l.out_cols * l.stride + kx - pad;
        if (iy < 0 || iy >= l.in_rows || ix < 0 || ix >= l.in_cols) return -1;
        return (static_cast<std::ptrdiff_t>(c) * l.in_rows + iy) * l.in_cols + ix;
    };
    columns.assign(static_cast<std::size_t>(taps) * n, 0.0);
    for (int t = 0; t < taps; ++t)
        for (int s = 0; s < n; ++s)
            if (const auto src = source(t, s); src >= 0) columns[static_cast<std::size_t>(t) * n + s] = in[src];
    ConstMatrixMap grads(g.data(), l.out_channels, n);
    MatrixMap(dw.data(), l.out_channels, taps).noalias() += grads * ConstMatrixMap(columns.data(), taps, n).transpose();
    if (!gin) return;
    MatrixMap(columns.data(), taps, n).noalias() = ConstMatrixMap(w.data(), l.out_channels, taps).transpose() * grads;
    for (int t = 0; t < taps; ++t)
        for (int s = 0; s < n; ++s)
            if (const auto src = source(t, s); src >= 0) gin->data[static_cast<std::size_t>(src)] += columns[static_cast<std::size_t>(t) * n + s];
}

void coder_backward_any(const LayerShape& l, std::span<const double> w, const double* in, const FeatureMaps& out,
                        const FeatureMaps& gout, std::span<double> dw, std::span<double> db, FeatureMaps* gin) {
    std::size_t live = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i) live += out.data[i] > 0.0 && gout.data[i] != 0.0;
    if (live * 20 < out.data.size())
        coder_backward(l, w, in, out, gout, dw, db, gin);
    else
        coder_backward_gemm(l, w, in, out, gout, dw, db, gin);
}

void check_input(const ModelParams& params, const Image& x) {
    if (x.rows != params.arch.input_rows || x.cols != params.arch.input_cols ||
        x.pixels.size() != static_cast<std::size_t>(x.rows) * x.cols)
        throw Error(ErrorCode::ShapeMismatch, "image is " + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
                                                  ", model expects " + std::to_string(params.arch.input_rows) + "x" +
                                                  std::to_string(params.arch.input_cols));
}

std::string hexfloat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

} // namespace

void validate(const ArchConfig& arch) {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidArch, why); };
    if (arch.input_rows < 1 || arch.input_cols < 1) fail("input dimensions must be positive");
    if (arch.coder_layers.empty()) fail("at least one coder layer is required");
    if (!arch.allow_any_depth && arch.coder_layers.size() != 3)
        fail("expected 3 coder layers, got " + std::to_string(arch.coder_layers.size()));
    for (const auto& layer : arch.coder_layers) {
        if (layer.filter_count < 1) fail("filter counts must be >= 1");
        if (layer.filter_size < 3 || layer.filter_size % 2 == 0)
            fail("filter size " + std::to_string(layer.filter_size) + " must be odd and >= 3");
        if (layer.stride < 1) fail("strides must be >= 1");
    }
    const int ds = arch.decoder_filter_size;
    if (ds < 3 || ds % 2 == 0) fail("decoder filter size " + std::to_string(ds) + " must be odd and >= 3");
    int total_stride = 1;
    for (const auto& layer : arch.coder_layers) total_stride *= layer.stride;
    if (ds < total_stride) fail("decoder filter must cover the total coder stride");
    if (arch.sparsity.spatial_winners_per_map < 1) fail("spatial winners must be >= 1");
    if (!(arch.sparsity.lifetime_rate > 0.0 && arch.sparsity.lifetime_rate <= 1.0))
        fail("lifetime rate must lie in (0, 1]");
}

std::string to_canonical_text(const ArchConfig& arch) {
    std::ostringstream out;
    out << "morphogen-arch 1\n";
    out << "input " << arch.input_rows << ' ' << arch.input_cols << '\n';
    for (const auto& l : arch.coder_layers) out << "coder " << l.filter_count << ' ' << l.filter_size << ' ' << l.stride << '\n';
    out << "decoder " << arch.decoder_filter_size << '\n';
    out << "winners " << arch.sparsity.spatial_winners_per_map << '\n';
    out << "lifetime " << hexfloat(arch.sparsity.lifetime_rate) << '\n';
    out << "seed " << arch.rng_seed << '\n';
    out << "any_depth " << (arch.allow_any_depth ? 1 : 0) << '\n';
    out << "sparsify_all " << (arch.sparsify_all_layers ? 1 : 0) << '\n';
    return out.str();
}

ArchConfig parse_canonical_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    auto fail = [](const std::string& why) -> ArchConfig { throw Error(ErrorCode::MalformedContainer, why); };
    std::string key;
    int version = 0;
    if (!(in >> key >> version) || key != "morphogen-arch" || version != 1) return fail("bad architecture header");
    ArchConfig arch;
    arch.coder_layers.clear();
    while (in >> key) {
        if (key == "input") {
            in >> arch.input_rows >> arch.input_cols;
        } else if (key == "coder") {
            CoderLayerSpec l;
            in >> l.filter_count >> l.filter_size >> l.stride;
            arch.coder_layers.push_back(l);
        } else if (key == "decoder") {
            in >> arch.decoder_filter_size;
        } else if (key == "winners") {
            in >> arch.sparsity.spatial_winners_per_map;
        } else if (key == "lifetime") {
            std::string v;
            in >> v;
            arch.sparsity.lifetime_rate = std::strtod(v.c_str(), nullptr);
        } else if (key == "seed") {
            in >> arch.rng_seed;
        } else if (key == "sparsify_all") {
            int flag = 0;
            in >> flag;
            arch.sparsify_all_layers = flag != 0;
        } else if (key == "any_depth") {
            int flag = 0;
            in >> flag;
            arch.allow_any_depth = flag != 0;
        } else {
            return fail("unknown architecture key '" + key + "'");
        }
        if (!in) return fail("truncated value for '" + key + "'");
    }
    return arch;
}

ParamLayout layout_for(const ArchConfig& arch) {
    validate(arch);
    ParamLayout layout;
    int channels = 1;
    int rows = arch.input_rows;
    int cols = arch.input_cols;
    int total_stride = 1;
    std::size_t offset = 0;
    for (const auto& spec : arch.coder_layers) {
        LayerShape l;
        l.in_channels = channels;
        l.in_rows = rows;
        l.in_cols = cols;
        l.out_channels = spec.filter_count;
        l.out_rows = (rows + spec.stride - 1) / spec.stride;
        l.out_cols = (cols + spec.stride - 1) / spec.stride;
        l.size = spec.filter_size;
        l.stride = spec.stride;
        l.weight_offset = offset;
        offset += l.weight_count();
        l.bias_offset = offset;
        offset += static_cast<std::size_t>(l.out_channels);
        layout.coders.push_back(l);
        channels = l.out_channels;
        rows = l.out_rows;
        cols = l.out_cols;
        total_stride *= spec.stride;
    }
    LayerShape& d = layout.decoder;
    d.in_channels = channels;
    d.in_rows = rows;
    d.in_cols = cols;
    d.out_channels = 1;
    d.out_rows = arch.input_rows;
    d.out_cols = arch.input_cols;
    d.size = arch.decoder_filter_size;
    d.stride = total_stride;
    d.weight_offset = offset;
    offset += static_cast<std::size_t>(channels) * d.size * d.size;
    d.bias_offset = offset;
    offset += 1;
    layout.total = offset;
    return layout;
}

std::span<const double> ModelParams::coder_weights(std::size_t layer) const {
    const auto& l = layout.coders.at(layer);
    return std::span(values).subspan(l.weight_offset, l.weight_count());
}
std::span<const double> ModelParams::coder_bias(std::size_t layer) const {
    const auto& l = layout.coders.at(layer);
    return std::span(values).subspan(l.bias_offset, static_cast<std::size_t>(l.out_channels));
}
std::span<const double> ModelParams::decoder_weights() const {
    const auto& d = layout.decoder;
    return std::span(values).subspan(d.weight_offset, static_cast<std::size_t>(d.in_channels) * d.size * d.size);
}
std::span<double> ModelParams::coder_weights(std::size_t layer) {
    const auto& l = layout.coders.at(layer);
    return std::span(values).subspan(l.weight_offset, l.weight_count());
}
std::span<double> ModelParams::coder_bias(std::size_t layer) {
    const auto& l = layout.coders.at(layer);
    return std::span(values).subspan(l.bias_offset, static_cast<std::size_t>(l.out_channels));
}
std::span<double> ModelParams::decoder_weights() {
    const auto& d = layout.decoder;
    return std::span(values).subspan(d.weight_offset, static_cast<std::size_t>(d.in_channels) * d.size * d.size);
}

ModelParams init_params(const ArchConfig& arch) {
    ModelParams params;
    params.arch = arch;
    params.layout = layout_for(arch);
    params.values.assign(params.layout.total, 0.0);
    Rng rng(arch.rng_seed);
    auto fill = [&](std::span<double> w, double fan_in) {
        const double half_width = std::sqrt(3.0 / fan_in);
        for (double& v : w) v = rng.uniform(-half_width, half_width);
    };
    for (std::size_t i = 0; i < params.layout.coders.size(); ++i) {
        const auto& l = params.layout.coders[i];
        fill(params.coder_weights(i), static_cast<double>(l.in_channels) * l.size * l.size);
    }
    const auto& d = params.layout.decoder;
    const double overlap = static_cast<double>(d.size) / d.stride;
    fill(params.decoder_weights(), static_cast<double>(d.in_channels) * overlap * overlap);
    return params;
}

void apply_spatial_wta(FeatureMaps& maps, int winners) {
    const std::size_t n = maps.map_size();
    if (winners < 1 || static_cast<std::size_t>(winners) >= n) return;
    const auto k = static_cast<std::size_t>(winners);
    std::vector<std::size_t> order(n);
    std::vector<char> keep(n);
    for (int c = 0; c < maps.channels; ++c) {
        double* m = maps.map(c);
        if (k == 1) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (m[i] > m[best]) best = i;
            const double v = m[best];
            std::fill_n(m, n, 0.0);
            m[best] = v;
            continue;
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [m](std::size_t a, std::size_t b) { return m[a] > m[b] || (m[a] == m[b] && a < b); });
        std::fill(keep.begin(), keep.end(), 0);
        for (std::size_t i = 0; i < k; ++i) keep[order[i]] = 1;
        for (std::size_t i = 0; i < n; ++i)
            if (!keep[i]) m[i] = 0.0;
    }
}

void apply_lifetime_wta(std::span<FeatureMaps> batch, double rate) {
    if (batch.empty()) return;
    const std::size_t n = batch.size();
    const auto keep = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
    if (keep >= n) return;
    const int channels = batch.front().channels;
    const std::size_t map = batch.front().map_size();
    std::vector<double> peak(n);
    std::vector<std::size_t> order(n);
    for (int c = 0; c < channels; ++c) {
        for (std::size_t s = 0; s < n; ++s) {
            const double* m = batch[s].map(c);
            peak[s] = *std::max_element(m, m + map);
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return peak[a] > peak[b]; });
        for (std::size_t r = keep; r < n; ++r) std::fill_n(batch[order[r]].map(c), map, 0.0);
    }
}

void apply_wta(std::span<FeatureMaps> batch, const SparsityConfig& config, bool lifetime) {
    for (auto& maps : batch) apply_spatial_wta(maps, config.spatial_winners_per_map);
    if (lifetime) apply_lifetime_wta(batch, config.lifetime_rate);
}

Image decode(const ModelParams& params, const FeatureMaps& top) {
    const LayerShape& d = params.layout.decoder;
    if (top.channels != d.in_channels || top.rows != d.in_rows || top.cols != d.in_cols)
        throw Error(ErrorCode::ShapeMismatch, "code shape does not match the decoder");
    Image out(d.out_rows, d.out_cols, params.decoder_bias());
    const auto w = params.decoder_weights();
    const int off = decoder_offset(d);
    for (int m = 0; m < d.in_channels; ++m) {
        for (int qy = 0; qy < d.in_rows; ++qy) {
            for (int qx = 0; qx < d.in_cols; ++qx) {
                const double v = top.at(m, qy, qx);
                if (v == 0.0) continue;
                const double* wm = w.data() + static_cast<std::size_t>(m) * d.size * d.size;
                for (int ky = 0; ky < d.size; ++ky) {
                    const int oy = qy * d.stride + ky - off;
                    if (oy < 0 || oy >= d.out_rows) continue;
                    for (int kx = 0; kx < d.size; ++kx) {
                        const int ox = qx * d.stride + kx - off;
                        if (ox < 0 || ox >= d.out_cols) continue;
                        out.at(oy, ox) += v * wm[ky * d.size + kx];
                    }
                }
            }
        }
    }
    return out;
}

std::vector<Activations> forward_batch(const ModelParams& params, std::span<const Image> batch, bool sparsify,
                                       bool lifetime) {
    for (const auto& x : batch) check_input(params, x);
    const std::size_t n = batch.size();
    std::vector<Activations> acts(n);
    std::vector<FeatureMaps> current(n);
    for (std::size_t layer = 0; layer < params.layout.coders.size(); ++layer) {
        const auto& shape = params.layout.coders[layer];
        for (std::size_t s = 0; s < n; ++s) {
            const double* in = layer == 0 ? batch[s].pixels.data() : acts[s].layers.back().data.data();
            current[s] = coder_forward(shape, params.coder_weights(layer), params.coder_bias(layer), in);
            rectify(current[s]);
        }
        const bool top = layer + 1 == params.layout.coders.size();
        if (sparsify && (top || params.arch.sparsify_all_layers)) apply_wta(current, params.arch.sparsity, lifetime);
        for (std::size_t s = 0; s < n; ++s) acts[s].layers.push_back(std::move(current[s]));
    }
    for (auto& a : acts) a.reconstruction = decode(params, a.layers.back());
    return acts;
}

Activations forward(const ModelParams& params, const Image& x, bool sparsify) {
    auto acts = forward_batch(params, std::span(&x, 1), sparsify, false);
    return std::move(acts.front());
}

FeatureMaps encode(const ModelParams& params, const Image& x) {
    return std::move(forward(params, x, true).layers.back());
}

Image apply_model(const ModelParams& params, const Image& x) {
    return clamp_unit(forward(params, x, true).reconstruction);
}

double distortion(const Image& x, const Image& x_prime) {
    if (!x.same_shape(x_prime) || x.pixels.size() != x_prime.pixels.size())
        throw Error(ErrorCode::ShapeMismatch, "distortion needs images of equal shape");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
        const double d = x.pixels[i] - x_prime.pixels[i];
        sum += d * d;
    }
    return sum;
}

GradientVector zero_gradient(const ModelParams& params) { return GradientVector{std::vector<double>(params.size(), 0.0)}; }

double accumulate_gradient(const ModelParams& params, const Image& x, const Activations& activations,
                           GradientVector& grad) {
    if (grad.values.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "gradient/parameter size mismatch");
    const double loss = distortion(x, activations.reconstruction);
    if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "reconstruction loss is not finite");

    std::span<double> g(grad.values);
    const LayerShape& d = params.layout.decoder;
    const auto& recon = activations.reconstruction;
    std::vector<double> grecon(recon.pixels.size());
    double bias_grad = 0.0;
    for (std::size_t i = 0; i < grecon.size(); ++i) {
        grecon[i] = 2.0 * (recon.pixels[i] - x.pixels[i]);
        bias_grad += grecon[i];
    }
    g[d.bias_offset] += bias_grad;

    const FeatureMaps& top = activations.layers.back();
    FeatureMaps gtop(top.channels, top.rows, top.cols);
    const auto dw = params.decoder_weights();
    const int off = decoder_offset(d);
    for (int m = 0; m < d.in_channels; ++m) {
        const std::size_t wbase = static_cast<std::size_t>(m) * d.size * d.size;
        for (int qy = 0; qy < d.in_rows; ++qy) {
            for (int qx = 0; qx < d.in_cols; ++qx) {
                const double v = top.at(m, qy, qx);
                if (v <= 0.0) continue;
                double acc = 0.0;
                for (int ky = 0; ky < d.size; ++ky) {
                    const int oy = qy * d.stride + ky - off;
                    if (oy < 0 || oy >= d.out_rows) continue;
                    for (int kx = 0; kx < d.size; ++kx) {
                        const int ox = qx * d.stride + kx - off;
                        if (ox < 0 || ox >= d.out_cols) continue;
                        const double go = grecon[static_cast<std::size_t>(oy) * d.out_cols + ox];
                        const std::size_t wi = wbase + static_cast<std::size_t>(ky) * d.size + kx;
                        g[d.weight_offset + wi] += v * go;
                        acc += dw[wi] * go;
                    }
                }
                gtop.at(m, qy, qx) = acc;
            }
        }
    }

    FeatureMaps gout = std::move(gtop);
    for (std::size_t layer = params.layout.coders.size(); layer-- > 0;) {
        const auto& shape = params.layout.coders[layer];
        const double* in = layer == 0 ? x.pixels.data() : activations.layers[layer - 1].data.data();
        FeatureMaps gin;
        if (layer > 0) gin = FeatureMaps(shape.in_channels, shape.in_rows, shape.in_cols);
        coder_backward_any(shape, params.coder_weights(layer), in, activations.layers[layer], gout,
                       g.subspan(shape.weight_offset, shape.weight_count()),
                       g.subspan(shape.bias_offset, static_cast<std::size_t>(shape.out_channels)),
                       layer > 0 ? &gin : nullptr);
        gout = std::move(gin);
    }
    return loss;
}

std::pair<GradientVector, double> backward(const ModelParams& params, const Image& x) {
    const Activations acts = forward(params, x, true);
    GradientVector grad = zero_gradient(params);
    const double loss = accumulate_gradient(params, x, acts, grad);
    return {std::move(grad), loss};
}

void sgd_step_in_place(ModelParams& params, const GradientVector& grad, double learning_rate) {
    if (grad.values.size() != params.values.size())
        throw Error(ErrorCode::ShapeMismatch, "gradient/parameter size mismatch");
    for (std::size_t i = 0; i < params.values.size(); ++i) params.values[i] -= learning_rate * grad.values[i];
}

ModelParams sgd_step(const ModelParams& params, const GradientVector& grad, double learning_rate) {
    ModelParams next = params;
    sgd_step_in_place(next, grad, learning_rate);
    return next;
}

GradientCheckResult gradient_check(const ModelParams& params, const Image& x, double epsilon, std::size_t samples,
                                   std::uint64_t seed) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw Error(ErrorCode::InvalidEpsilon, "finite-difference step must be a positive real");
    const auto [analytic, base_loss] = backward(params, x);
    (void)base_loss;
    const Activations base = forward(params, x, true);

    auto same_masks = [&](const Activations& probe) {
        for (std::size_t l = 0; l < base.layers.size(); ++l) {
            const auto& a = base.layers[l].data;
            const auto& b = probe.layers[l].data;
            for (std::size_t i = 0; i < a.size(); ++i)
                if ((a[i] > 0.0) != (b[i] > 0.0)) return false;
        }
        return true;
    };

    GradientCheckResult result;
    Rng rng(seed);
    ModelParams probe = params;
    const std::size_t max_draws = 10 * samples;
    for (std::size_t draw = 0; result.checked < samples && draw < max_draws; ++draw) {
        const auto i = static_cast<std::size_t>(rng.below(params.size()));
        const double original = probe.values[i];
        probe.values[i] = original + epsilon;
        const Activations plus = forward(probe, x, true);
        probe.values[i] = original - epsilon;
        const Activations minus = forward(probe, x, true);
        probe.values[i] = original;
        if (!same_masks(plus) || !same_masks(minus)) {
            ++result.skipped_unstable;
            continue;
        }
        const double numeric =
            (distortion(x, plus.reconstruction) - distortion(x, minus.reconstruction)) / (2.0 * epsilon);
        const double a = analytic.values[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
        ++result.checked;
    }
    return result;
}

Bytes serialize(const ModelParams& params) {
    const std::string text = to_canonical_text(params.arch);
    Bytes out;
    out.reserve(4 + 2 + 4 + text.size() + 8 + params.values.size() * 8 + 4);
    out.insert(out.end(), {'M', 'R', 'P', 'H'});
    put_u16(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    put_u64(out, params.values.size());
    for (double v : params.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
    put_u32(out, crc32(out));
    return out;
}

ModelParams deserialize(std::span<const std::uint8_t> bytes) {
    auto fail = [](const std::string& why) -> ModelParams { throw Error(ErrorCode::MalformedContainer, why); };
    if (bytes.size() < 4 + 2 + 4 + 8 + 4) return fail("checkpoint too short");
    if (std::memcmp(bytes.data(), "MRPH", 4) != 0) throw Error(ErrorCode::BadMagic, "not a MRPH checkpoint");
    const auto version = static_cast<std::uint16_t>(get_le(bytes, 4, 2));
    if (version != kCheckpointVersion)
        throw Error(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                    ", this build reads " + std::to_string(kCheckpointVersion));
    const std::size_t body = bytes.size() - 4;
    const auto stored_crc = static_cast<std::uint32_t>(get_le(bytes, body, 4));
    if (crc32(bytes.first(body)) != stored_crc) throw Error(ErrorCode::ChecksumFailure, "checkpoint CRC-32 mismatch");

    const auto text_len = static_cast<std::size_t>(get_le(bytes, 6, 4));
    std::size_t pos = 10;
    if (pos + text_len + 8 > body) return fail("architecture text overruns container");
    const std::string_view text(reinterpret_cast<const char*>(bytes.data() + pos), text_len);
    pos += text_len;
    const auto count = get_le(bytes, pos, 8);
    pos += 8;
    if (body - pos != count * 8) return fail("parameter payload size mismatch");

    ModelParams params;
    params.arch = parse_canonical_text(text);
    params.layout = layout_for(params.arch);
    if (params.layout.total != count) return fail("parameter count does not match architecture");
    params.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) params.values[i] = std::bit_cast<double>(get_le(bytes, pos + 8 * i, 8));
    return params;
}

// The container ends in the CRC of everything before it; hashing the whole
// container would give the same residue for every model.
std::uint32_t model_checksum(const ModelParams& params) {
    const Bytes b = serialize(params);
    return static_cast<std::uint32_t>(get_le(b, b.size() - 4, 4));
}

} // namespace morphogen
