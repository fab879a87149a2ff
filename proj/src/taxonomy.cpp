#include "morphogen/taxonomy.hpp"

#include "morphogen/error.hpp"
#include "morphogen/parallel.hpp"
#include "morphogen/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace morphogen {

namespace {

double dot(const SparseRow& a, std::span<const double> dense) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.index.size(); ++i) s += a.value[i] * dense[a.index[i]];
    return s;
}

double squared_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

struct Assignment {
    int cluster;
    double squared_distance;
};

Assignment nearest(const SparseRow& row, const std::vector<std::vector<double>>& centroids,
                   const std::vector<double>& norms) {
    Assignment best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(row, centroids[c], norms[c]);
        if (d < best.squared_distance) best = {static_cast<int>(c), d};
    }
    return best;
}

std::vector<std::vector<double>> kmeanspp_seed(const CodeMatrix& codes, int k, Rng& rng) {
    const std::size_t n = codes.size();
    std::vector<std::vector<double>> centroids;
    centroids.push_back(codes.dense_row(rng.below(n)));
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    while (centroids.size() < static_cast<std::size_t>(k)) {
        const auto& last = centroids.back();
        const double last_norm = squared_norm(last);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            best[i] = std::min(best[i], squared_distance(codes.rows[i], last, last_norm));
            total += best[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (pick = 0; pick + 1 < n; ++pick) {
                target -= best[pick];
                if (target < 0.0) break;
            }
        } else {
            pick = rng.below(n);
        }
        centroids.push_back(codes.dense_row(pick));
    }
    return centroids;
}

double entropy_and_row(std::span<const double> d, std::size_t self, double beta, std::span<double> row) {
    double sum = 0.0;
    double weighted = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        if (j == self) {
            row[j] = 0.0;
            continue;
        }
        row[j] = std::exp(-beta * d[j]);
        sum += row[j];
        weighted += d[j] * row[j];
    }
    if (sum <= 0.0) return 0.0;
    for (double& p : row) p /= sum;
    return std::log(sum) + beta * weighted / sum;
}

} // namespace

void CodeMatrix::add_row(std::span<const double> dense, CodeTag tag) {
    if (rows.empty() && dim == 0) dim = dense.size();
    if (dense.size() != dim) throw Error(ErrorCode::DimensionMismatch, "code rows must share one dimensionality");
    SparseRow row;
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] == 0.0) continue;
        row.index.push_back(static_cast<std::uint32_t>(i));
        row.value.push_back(dense[i]);
        row.squared_norm += dense[i] * dense[i];
    }
    rows.push_back(std::move(row));
    tags.push_back(tag);
}

std::vector<double> CodeMatrix::dense_row(std::size_t i) const {
    std::vector<double> out(dim, 0.0);
    const auto& r = rows.at(i);
    for (std::size_t j = 0; j < r.index.size(); ++j) out[r.index[j]] = r.value[j];
    return out;
}

void CodeMatrix::append(const CodeMatrix& other) {
    if (other.size() == 0) return;
    if (size() == 0 && dim == 0) dim = other.dim;
    if (other.dim != dim) throw Error(ErrorCode::DimensionMismatch, "code matrices differ in dimensionality");
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    tags.insert(tags.end(), other.tags.begin(), other.tags.end());
}

double squared_distance(const SparseRow& a, const SparseRow& b) {
    double cross = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.index.size() && j < b.index.size()) {
        if (a.index[i] == b.index[j]) {
            cross += a.value[i++] * b.value[j++];
        } else if (a.index[i] < b.index[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return std::max(0.0, a.squared_norm + b.squared_norm - 2.0 * cross);
}

double squared_distance(const SparseRow& a, std::span<const double> dense, double dense_squared_norm) {
    return std::max(0.0, a.squared_norm + dense_squared_norm - 2.0 * dot(a, dense));
}

CodeMatrix extract_features(const ModelParams& params, std::span<const Image> images, std::span<const CodeTag> tags) {
    if (tags.size() != images.size()) throw Error(ErrorCode::ShapeMismatch, "one tag per image is required");
    std::vector<FeatureMaps> codes(images.size());
    parallel_for(images.size(), [&](std::size_t i) { codes[i] = encode(params, images[i]); });
    CodeMatrix out;
    const auto& top = params.layout.decoder;
    out.dim = static_cast<std::size_t>(top.in_channels) * top.in_rows * top.in_cols;
    for (std::size_t i = 0; i < codes.size(); ++i) out.add_row(codes[i].data, tags[i]);
    return out;
}

Clustering lloyd(const CodeMatrix& codes, std::vector<std::vector<double>> centroids, int max_iters) {
    const std::size_t n = codes.size();
    const int k = static_cast<int>(centroids.size());
    Clustering result;
    result.k = k;
    result.assignments.assign(n, -1);
    std::vector<double> norms(centroids.size());
    std::vector<Assignment> step(n);
    for (int it = 0; it < max_iters; ++it) {
        for (std::size_t c = 0; c < centroids.size(); ++c) norms[c] = squared_norm(centroids[c]);
        parallel_for(n, [&](std::size_t i) { step[i] = nearest(codes.rows[i], centroids, norms); });
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (step[i].cluster != result.assignments[i]) {
                changed = true;
                result.assignments[i] = step[i].cluster;
            }
        }
        if (!changed) break;

        // Update; an empty cluster keeps its previous centroid.
        std::vector<std::vector<double>> sums(centroids.size(), std::vector<double>(codes.dim, 0.0));
        std::vector<std::size_t> counts(centroids.size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[static_cast<std::size_t>(result.assignments[i])];
            const auto& r = codes.rows[i];
            for (std::size_t j = 0; j < r.index.size(); ++j) s[r.index[j]] += r.value[j];
            ++counts[static_cast<std::size_t>(result.assignments[i])];
        }
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            if (counts[c] == 0) continue;
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (double& v : sums[c]) v *= inv;
            centroids[c] = std::move(sums[c]);
        }
        result.iterations_run = it + 1;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(result.assignments[i]);
            objective += squared_distance(codes.rows[i], centroids[c], squared_norm(centroids[c]));
        }
        result.objective_trace.push_back(objective);
    }
    for (std::size_t c = 0; c < centroids.size(); ++c) norms[c] = squared_norm(centroids[c]);
    result.objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(result.assignments[i]);
        result.objective += squared_distance(codes.rows[i], centroids[c], norms[c]);
    }
    result.centroids = std::move(centroids);
    return result;
}

Clustering kmeans(const CodeMatrix& codes, int k, int restarts, std::uint64_t rng_seed, int max_iters) {
    if (k < 1) throw Error(ErrorCode::KTooLarge, "k must be >= 1");
    if (static_cast<std::size_t>(k) > codes.size())
        throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " exceeds " + std::to_string(codes.size()) + " rows");
    if (restarts < 1 || max_iters < 1) throw Error(ErrorCode::InvalidConfig, "restarts and max_iters must be >= 1");
    Clustering best;
    for (int r = 0; r < restarts; ++r) {
        Rng rng(rng_seed, static_cast<std::uint64_t>(r));
        Clustering run = lloyd(codes, kmeanspp_seed(codes, k, rng), max_iters);
        if (r == 0 || run.objective < best.objective) best = std::move(run);
    }
    return best;
}

KnownClassModel fit_known_classes(const CodeMatrix& codes) {
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < codes.size(); ++i)
        if (codes.tags[i].origin == Origin::Known) members[codes.tags[i].label].push_back(i);
    if (members.empty()) throw Error(ErrorCode::MissingKnownRows, "no known-class rows to fit centroids on");
    KnownClassModel model;
    for (const auto& [label, rows] : members) {
        std::vector<double> c(codes.dim, 0.0);
        for (std::size_t i : rows) {
            const auto& r = codes.rows[i];
            for (std::size_t j = 0; j < r.index.size(); ++j) c[r.index[j]] += r.value[j];
        }
        for (double& v : c) v /= static_cast<double>(rows.size());
        const double cn = squared_norm(c);
        double spread = 0.0;
        for (std::size_t i : rows) spread += std::sqrt(squared_distance(codes.rows[i], c, cn));
        model.labels.push_back(label);
        model.centroids.push_back(std::move(c));
        model.centroid_squared_norms.push_back(cn);
        model.mean_distance.push_back(spread / static_cast<double>(rows.size()));
    }
    return model;
}

double novelty_score(const KnownClassModel& model, const SparseRow& row) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < model.centroids.size(); ++c) {
        const double d = squared_distance(row, model.centroids[c], model.centroid_squared_norms[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    const double dist = std::sqrt(best_d);
    const double spread = model.mean_distance[best];
    if (spread <= 0.0) return dist == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return dist / spread;
}

std::vector<double> novelty_scores(const KnownClassModel& model, const CodeMatrix& codes) {
    std::vector<double> scores(codes.size());
    parallel_for(codes.size(), [&](std::size_t i) { scores[i] = novelty_score(model, codes.rows[i]); });
    return scores;
}

std::vector<double> novelty_scores(const CodeMatrix& codes) {
    const bool any_generated = std::any_of(codes.tags.begin(), codes.tags.end(),
                                           [](const CodeTag& t) { return t.origin == Origin::Generated; });
    if (!any_generated) throw Error(ErrorCode::MissingKnownRows, "no generated rows to score");
    return novelty_scores(fit_known_classes(codes), codes);
}

ClusterReport build_report(const Clustering& clustering, const CodeMatrix& codes, double new_type_threshold) {
    if (clustering.assignments.size() != codes.size())
        throw Error(ErrorCode::ShapeMismatch, "clustering and codes disagree on row count");
    ClusterReport report;
    report.threshold = new_type_threshold;
    report.clusters.resize(static_cast<std::size_t>(clustering.k));
    for (int c = 0; c < clustering.k; ++c) report.clusters[static_cast<std::size_t>(c)].cluster = c;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        auto& s = report.clusters[static_cast<std::size_t>(clustering.assignments[i])];
        s.members.push_back(i);
        ++s.size;
        const CodeTag& tag = codes.tags[i];
        if (tag.origin == Origin::Generated) {
            ++s.generated_count;
        } else if (tag.label >= 0 && tag.label < kKnownClasses) {
            ++s.known_histogram[static_cast<std::size_t>(tag.label)];
        }
    }
    for (auto& s : report.clusters) {
        s.generated_fraction = s.size ? static_cast<double>(s.generated_count) / static_cast<double>(s.size) : 0.0;
        s.new_type = s.size > 0 && s.generated_fraction >= new_type_threshold;
        if (s.new_type) ++report.new_type_count;
        if (s.members.empty()) continue;
        std::vector<double> total(s.members.size(), 0.0);
        parallel_for(s.members.size(), [&](std::size_t a) {
            double sum = 0.0;
            for (std::size_t b = 0; b < s.members.size(); ++b)
                if (a != b) sum += std::sqrt(squared_distance(codes.rows[s.members[a]], codes.rows[s.members[b]]));
            total[a] = sum;
        });
        s.medoid_row = s.members[static_cast<std::size_t>(std::min_element(total.begin(), total.end()) - total.begin())];
    }
    return report;
}

std::vector<double> pairwise_squared_distances(const CodeMatrix& codes) {
    const std::size_t n = codes.size();
    std::vector<double> d(n * n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) d[i * n + j] = squared_distance(codes.rows[i], codes.rows[j]);
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) d[i * n + j] = d[j * n + i];
    return d;
}

std::vector<double> conditional_affinities(std::span<const double> squared_distances, std::size_t n,
                                           double perplexity, std::vector<bool>* missed) {
    std::vector<double> p(n * n, 0.0);
    if (missed) missed->assign(n, false);
    const double target = std::log(perplexity);
    std::vector<char> miss(n, 0);
    parallel_for(n, [&](std::size_t i) {
        // Shift by the nearest-neighbour distance; affinities are invariant
        // to it and the exponentials stay representable.
        std::vector<double> d(squared_distances.begin() + static_cast<std::ptrdiff_t>(i * n),
                              squared_distances.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        double nearest_d = std::numeric_limits<double>::infinity();
        double far_d = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            nearest_d = std::min(nearest_d, d[j]);
            far_d = std::max(far_d, d[j]);
        }
        for (std::size_t j = 0; j < n; ++j) d[j] = j == i ? 0.0 : d[j] - nearest_d;
        const double span_d = far_d - nearest_d;
        std::span<double> row(p.data() + i * n, n);
        double beta = span_d > 0.0 ? 1.0 / span_d : 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        bool hit = false;
        for (int it = 0; it < 200; ++it) {
            const double h = entropy_and_row(d, i, beta, row);
            if (std::abs(std::exp(h) - perplexity) < 1e-4) {
                hit = true;
                break;
            }
            if (h > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        miss[i] = hit ? 0 : 1;
    });
    if (missed)
        for (std::size_t i = 0; i < n; ++i) (*missed)[i] = miss[i] != 0;
    return p;
}

Embedding2D embed_2d(const CodeMatrix& codes, double perplexity, int iterations, std::uint64_t rng_seed) {
    EmbeddingConfig cfg;
    cfg.perplexity = perplexity;
    cfg.iterations = iterations;
    cfg.rng_seed = rng_seed;
    return embed_2d(codes, cfg);
}

double effective_learning_rate(const EmbeddingConfig& cfg, std::size_t rows) {
    if (cfg.learning_rate > 0.0) return cfg.learning_rate;
    return static_cast<double>(rows) / cfg.exaggeration / 4.0;
}

Embedding2D embed_2d(const CodeMatrix& codes, const EmbeddingConfig& cfg) {
    const std::size_t n = codes.size();
    if (!(cfg.perplexity >= 2.0) || static_cast<double>(n) - 1.0 < cfg.perplexity)
        throw Error(ErrorCode::PerplexityInfeasible, "perplexity " + std::to_string(cfg.perplexity) +
                                                         " needs >= 2 and at most rows - 1 (" + std::to_string(n) + " rows)");
    if (cfg.iterations < 1) throw Error(ErrorCode::InvalidConfig, "iterations must be >= 1");
    if (cfg.learning_rate < 0.0 || !(cfg.exaggeration >= 1.0))
        throw Error(ErrorCode::InvalidConfig, "learning rate must be >= 0 and exaggeration >= 1");
    const double learning_rate = effective_learning_rate(cfg, n);

    std::vector<bool> missed;
    const std::vector<double> cond = conditional_affinities(pairwise_squared_distances(codes), n, cfg.perplexity, &missed);
    std::vector<double> p(n * n);
    const double norm = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) * norm, 1e-300);
    for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 0.0;

    Embedding2D out;
    out.config = cfg;
    out.bandwidth_failures = static_cast<std::size_t>(std::count(missed.begin(), missed.end(), true));

    Rng rng(cfg.rng_seed);
    std::vector<double> y(2 * n);
    for (double& v : y) v = 1e-4 * rng.normal();
    std::vector<double> velocity(2 * n, 0.0);
    std::vector<double> gains(2 * n, 1.0);
    std::vector<double> grad(2 * n);
    std::vector<double> num(n * n);

    auto affinities = [&](const std::vector<double>& pts) {
        std::vector<double> partial(n, 0.0);
        parallel_for(n, [&](std::size_t i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) {
                    num[i * n + j] = 0.0;
                    continue;
                }
                const double dx = pts[2 * i] - pts[2 * j];
                const double dy = pts[2 * i + 1] - pts[2 * j + 1];
                num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
                s += num[i * n + j];
            }
            partial[i] = s;
        });
        return std::accumulate(partial.begin(), partial.end(), 0.0);
    };
    auto kl = [&](const std::vector<double>& pts) {
        const double z = affinities(pts);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = std::max(num[i * n + j] / z, 1e-300);
                sum += p[i * n + j] * std::log(p[i * n + j] / q);
            }
        return sum;
    };

    out.kl_trace.emplace_back(0, kl(y));
    const int exaggerate_until = std::min(cfg.exaggeration_iterations, cfg.iterations / 2);
    for (int it = 1; it <= cfg.iterations; ++it) {
        const double exaggeration = it <= exaggerate_until ? cfg.exaggeration : 1.0;
        const double momentum = it <= cfg.momentum_switch ? 0.5 : 0.8;
        const double z = affinities(y);
        parallel_for(n, [&](std::size_t i) {
            double gx = 0.0;
            double gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = num[i * n + j];
                const double mult = (exaggeration * p[i * n + j] - w / z) * w;
                gx += mult * (y[2 * i] - y[2 * j]);
                gy += mult * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
        });
        for (std::size_t d = 0; d < 2 * n; ++d) {
            const bool same_sign = (grad[d] > 0.0) == (velocity[d] > 0.0);
            gains[d] = same_sign ? std::max(gains[d] * 0.8, 0.01) : gains[d] + 0.2;
            velocity[d] = momentum * velocity[d] - learning_rate * gains[d] * grad[d];
            y[d] += velocity[d];
        }
        double mx = 0.0;
        double my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y[2 * i];
            my += y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[2 * i] -= mx;
            y[2 * i + 1] -= my;
        }
        if (it % 50 == 0 || it == cfg.iterations) out.kl_trace.emplace_back(it, kl(y));
    }
    out.kl_divergence = out.kl_trace.back().second;
    out.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.points[i] = {y[2 * i], y[2 * i + 1]};
    return out;
}

double trustworthiness(std::span<const double> input_squared_distances, std::size_t n,
                       std::span<const std::array<double, 2>> embedding, int neighbors) {
    const auto k = static_cast<std::size_t>(neighbors);
    if (embedding.size() != n || n < 2 * k + 2) throw Error(ErrorCode::InvalidConfig, "too few points for trustworthiness");
    std::vector<double> penalty(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        std::vector<std::size_t> order;
        order.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
        const double* di = input_squared_distances.data() + i * n;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return di[a] < di[b]; });
        std::vector<std::size_t> rank(n, 0);
        for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;

        auto ed = [&](std::size_t j) {
            const double dx = embedding[i][0] - embedding[j][0];
            const double dy = embedding[i][1] - embedding[j][1];
            return dx * dx + dy * dy;
        };
        std::vector<std::size_t> emb(order);
        std::stable_sort(emb.begin(), emb.end(), [&](std::size_t a, std::size_t b) { return ed(a) < ed(b); });
        double s = 0.0;
        for (std::size_t r = 0; r < k; ++r)
            if (rank[emb[r]] > k) s += static_cast<double>(rank[emb[r]] - k);
        penalty[i] = s;
    });
    const double total = std::accumulate(penalty.begin(), penalty.end(), 0.0);
    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    return 1.0 - 2.0 / (nd * kd * (2.0 * nd - 3.0 * kd - 1.0)) * total;
}

double trustworthiness(const CodeMatrix& codes, std::span<const std::array<double, 2>> embedding, int neighbors) {
    return trustworthiness(pairwise_squared_distances(codes), codes.size(), embedding, neighbors);
}

std::vector<std::array<double, 2>> random_projection_2d(const CodeMatrix& codes, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    std::vector<double> a(codes.dim);
    std::vector<double> b(codes.dim);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();
    std::vector<std::array<double, 2>> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) out[i] = {dot(codes.rows[i], a), dot(codes.rows[i], b)};
    return out;
}

} // namespace morphogen
