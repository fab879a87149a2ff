#pragma once

#include "morphogen/dataset.hpp"
#include "morphogen/network.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace morphogen {

struct TrainConfig {
    int epochs = 20;
    int minibatch_size = 64;
    double learning_rate = 0.001;
    double lr_decay = 0.95;  // per-epoch multiplier
    std::uint64_t shuffle_seed = 1;
    int checkpoint_every = 5;  // epochs; 0 disables periodic checkpoints
    bool lifetime_sparsity = false;
    // Log train_mse from a full evaluate() pass after each epoch instead of
    // the mean minibatch loss seen during the epoch.
    bool exact_train_metric = false;
};

// Throws InvalidConfig.
void validate(const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;  // mean per-image training distortion, see TrainConfig::exact_train_metric
    double val_mse = 0.0;
    double learning_rate = 0.0;
    double seconds = 0.0;  // wall time; the only non-reproducible field
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;

    // Header: epoch,train_mse,val_mse,lr,seconds
    std::string to_csv() const;
    static TrainingLog from_csv(const std::string& text);

    // Equality on every field except wall time.
    bool same_trajectory(const TrainingLog& other) const;
};

struct TrainHooks {
    // Written atomically every `checkpoint_every` epochs and after the last one.
    std::optional<std::filesystem::path> checkpoint_path;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    ModelParams params;
    TrainingLog log;
};

// Minibatch SGD on the mean per-sample gradient. Throws DivergedLoss when a
// minibatch loss or gradient is non-finite; the checkpoint on disk is then
// the last good one.
TrainResult train(const Dataset& train_set, const Dataset& validation_set, const ArchConfig& arch,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

// Continues training from given parameters (used by train and by tests).
TrainResult train_from(ModelParams params, const Dataset& train_set, const Dataset& validation_set,
                       const TrainConfig& cfg, const TrainHooks& hooks = {});

// Mean distortion(x, reconstruction) with spatial sparsity only. Throws EmptyDataset.
double evaluate(const ModelParams& params, const Dataset& data);

} // namespace morphogen
