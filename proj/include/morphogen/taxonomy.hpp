#pragma once

#include "morphogen/image.hpp"
#include "morphogen/network.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace morphogen {

enum class Origin { Known, Generated };

struct CodeTag {
    Origin origin = Origin::Generated;
    int label = -1;  // digit class for known rows

    static CodeTag known(int label) { return {Origin::Known, label}; }
    static CodeTag generated() { return {Origin::Generated, -1}; }
    friend bool operator==(const CodeTag&, const CodeTag&) = default;
};

// Codes are mostly zeros (one winner per top-layer map), so rows are kept
// in coordinate form.
struct SparseRow {
    std::vector<std::uint32_t> index;  // strictly increasing
    std::vector<double> value;
    double squared_norm = 0.0;

    std::size_t nnz() const noexcept { return index.size(); }
};

struct CodeMatrix {
    std::size_t dim = 0;
    std::vector<SparseRow> rows;
    std::vector<CodeTag> tags;

    std::size_t size() const noexcept { return rows.size(); }
    void add_row(std::span<const double> dense, CodeTag tag);
    std::vector<double> dense_row(std::size_t i) const;
    void append(const CodeMatrix& other);
};

double squared_distance(const SparseRow& a, const SparseRow& b);
// `dense_squared_norm` must equal the squared norm of `dense`.
double squared_distance(const SparseRow& a, std::span<const double> dense, double dense_squared_norm);

// One row per image: the flattened top-layer code under spatial sparsity.
CodeMatrix extract_features(const ModelParams& params, std::span<const Image> images, std::span<const CodeTag> tags);

struct Clustering {
    int k = 0;
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignments;
    double objective = 0.0;  // sum of squared distances to assigned centroids
    int iterations_run = 0;
    std::vector<double> objective_trace;  // objective after each Lloyd iteration
};

// Lloyd iterations from k-means++ seeding; the best of `restarts` runs by
// objective (first wins ties). Throws KTooLarge.
Clustering kmeans(const CodeMatrix& codes, int k, int restarts, std::uint64_t rng_seed, int max_iters);

// One Lloyd run from explicit initial centroids.
Clustering lloyd(const CodeMatrix& codes, std::vector<std::vector<double>> centroids, int max_iters);

struct KnownClassModel {
    std::vector<int> labels;
    std::vector<std::vector<double>> centroids;
    std::vector<double> centroid_squared_norms;
    std::vector<double> mean_distance;  // mean member-to-centroid distance per class
};

// Per-class centroids of the known rows. Throws MissingKnownRows.
KnownClassModel fit_known_classes(const CodeMatrix& codes);

// Distance to the nearest class centroid over that class's mean
// member-to-centroid distance.
double novelty_score(const KnownClassModel& model, const SparseRow& row);
std::vector<double> novelty_scores(const KnownClassModel& model, const CodeMatrix& codes);

// Classes fitted on the known rows of `codes`; one score per row, but only
// generated rows are meaningful. Throws MissingKnownRows if either kind of
// row is absent.
std::vector<double> novelty_scores(const CodeMatrix& codes);

inline constexpr int kKnownClasses = 10;

struct ClusterSummary {
    int cluster = 0;
    std::size_t size = 0;
    std::size_t generated_count = 0;
    double generated_fraction = 0.0;
    std::array<std::size_t, kKnownClasses> known_histogram{};
    bool new_type = false;
    std::size_t medoid_row = 0;  // row minimizing summed distance within the cluster
    std::vector<std::size_t> members;
};

struct ClusterReport {
    double threshold = 0.9;
    std::vector<ClusterSummary> clusters;
    int new_type_count = 0;
};

ClusterReport build_report(const Clustering& clustering, const CodeMatrix& codes, double new_type_threshold);

struct EmbeddingConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t rng_seed = 1;
    double learning_rate = 0.0;  // 0 selects rows / exaggeration / 4
    double exaggeration = 12.0;
    int exaggeration_iterations = 250;
    int momentum_switch = 250;
};

double effective_learning_rate(const EmbeddingConfig& cfg, std::size_t rows);

struct Embedding2D {
    std::vector<std::array<double, 2>> points;
    double kl_divergence = 0.0;                     // final, unexaggerated
    std::vector<std::pair<int, double>> kl_trace;   // (iteration, KL); iteration 0 is the initialization
    std::size_t bandwidth_failures = 0;             // rows whose perplexity missed the 1e-4 target
    EmbeddingConfig config;
};

// Exact t-SNE. Throws PerplexityInfeasible.
Embedding2D embed_2d(const CodeMatrix& codes, const EmbeddingConfig& cfg);
Embedding2D embed_2d(const CodeMatrix& codes, double perplexity, int iterations, std::uint64_t rng_seed);

// Row-stochastic Gaussian affinities with per-row bandwidth matched to
// `perplexity`; entry [i*n + j]. Returned flags mark rows that missed.
std::vector<double> conditional_affinities(std::span<const double> squared_distances, std::size_t n,
                                           double perplexity, std::vector<bool>* missed = nullptr);

std::vector<double> pairwise_squared_distances(const CodeMatrix& codes);

// Rank-based neighbourhood preservation in [0, 1].
double trustworthiness(std::span<const double> input_squared_distances, std::size_t n,
                       std::span<const std::array<double, 2>> embedding, int neighbors);
double trustworthiness(const CodeMatrix& codes, std::span<const std::array<double, 2>> embedding, int neighbors);

// Gaussian random linear map to two dimensions.
std::vector<std::array<double, 2>> random_projection_2d(const CodeMatrix& codes, std::uint64_t rng_seed);

} // namespace morphogen
