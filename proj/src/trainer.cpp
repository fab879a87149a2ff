#include "morphogen/trainer.hpp"

#include "morphogen/error.hpp"
#include "morphogen/parallel.hpp"
#include "morphogen/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace morphogen {

namespace {

// Gradients are accumulated in fixed-size sample chunks and the chunks are
// summed in order, so the result does not depend on the worker count.
constexpr std::size_t kChunk = 8;

bool finite_values(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace

void validate(const TrainConfig& cfg) {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
    if (cfg.epochs < 1) fail("epochs must be >= 1");
    if (cfg.minibatch_size < 1) fail("minibatch size must be >= 1");
    if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) fail("learning rate must be > 0");
    if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)) fail("lr decay must lie in (0, 1]");
    if (cfg.checkpoint_every < 0) fail("checkpoint interval must be >= 0");
}

std::string TrainingLog::to_csv() const {
    std::ostringstream out;
    out << "epoch,train_mse,val_mse,lr,seconds\n";
    char line[256];
    for (const auto& r : epochs) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.3f\n", r.epoch, r.train_mse, r.val_mse,
                      r.learning_rate, r.seconds);
        out << line;
    }
    return out.str();
}

TrainingLog TrainingLog::from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_mse,val_mse,lr,seconds")
        throw Error(ErrorCode::MalformedContainer, "training log header mismatch");
    TrainingLog log;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochRecord r;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &r.epoch, &r.train_mse, &r.val_mse, &r.learning_rate,
                        &r.seconds) != 5)
            throw Error(ErrorCode::MalformedContainer, "bad training log row: " + line);
        log.epochs.push_back(r);
    }
    return log;
}

bool TrainingLog::same_trajectory(const TrainingLog& other) const {
    return std::equal(epochs.begin(), epochs.end(), other.epochs.begin(), other.epochs.end(),
                      [](const EpochRecord& a, const EpochRecord& b) {
                          return a.epoch == b.epoch && a.train_mse == b.train_mse && a.val_mse == b.val_mse &&
                                 a.learning_rate == b.learning_rate;
                      });
}

double evaluate(const ModelParams& params, const Dataset& data) {
    if (data.empty()) throw Error(ErrorCode::EmptyDataset, "cannot evaluate on an empty dataset");
    std::vector<double> losses(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        losses[i] = distortion(data.images[i], forward(params, data.images[i], true).reconstruction);
    });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(data.size());
}

TrainResult train(const Dataset& train_set, const Dataset& validation_set, const ArchConfig& arch,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
    validate(arch);
    return train_from(init_params(arch), train_set, validation_set, cfg, hooks);
}

TrainResult train_from(ModelParams params, const Dataset& train_set, const Dataset& validation_set,
                       const TrainConfig& cfg, const TrainHooks& hooks) {
    validate(cfg);
    if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
    if (validation_set.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");

    auto save = [&](const ModelParams& p) {
        if (hooks.checkpoint_path) write_file_atomic(*hooks.checkpoint_path, serialize(p));
    };

    TrainResult result;
    const std::size_t n = train_set.size();
    const auto batch_size = static_cast<std::size_t>(cfg.minibatch_size);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    double lr = cfg.learning_rate;

    std::vector<Image> batch;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        Rng rng(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch));
        rng.shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        for (std::size_t b0 = 0; b0 < n; b0 += batch_size) {
            const std::size_t b1 = std::min(n, b0 + batch_size);
            batch.clear();
            for (std::size_t i = b0; i < b1; ++i) batch.push_back(train_set.images[order[i]]);
            const std::size_t m = batch.size();
            const auto acts = forward_batch(params, batch, true, cfg.lifetime_sparsity && m > 1);

            const std::size_t chunks = (m + kChunk - 1) / kChunk;
            std::vector<GradientVector> partial(chunks);
            std::vector<double> losses(m);
            parallel_for(chunks, [&](std::size_t c) {
                partial[c] = zero_gradient(params);
                for (std::size_t s = c * kChunk; s < std::min(m, (c + 1) * kChunk); ++s) {
                    try {
                        losses[s] = accumulate_gradient(params, batch[s], acts[s], partial[c]);
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::NonFiniteLoss) throw;
                        losses[s] = std::nan("");
                    }
                }
            });
            if (!finite_values(losses))
                throw Error(ErrorCode::DivergedLoss, "non-finite minibatch loss in epoch " + std::to_string(epoch));
            for (double l : losses) loss_sum += l;
            GradientVector& total = partial.front();
            for (std::size_t c = 1; c < chunks; ++c)
                for (std::size_t i = 0; i < total.values.size(); ++i) total.values[i] += partial[c].values[i];
            const double scale = 1.0 / static_cast<double>(m);
            for (double& v : total.values) v *= scale;
            if (!finite_values(total.values))
                throw Error(ErrorCode::DivergedLoss, "non-finite gradient in epoch " + std::to_string(epoch));
            sgd_step_in_place(params, total, lr);
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_mse = cfg.exact_train_metric ? evaluate(params, train_set) : loss_sum / static_cast<double>(n);
        record.val_mse = evaluate(params, validation_set);
        record.learning_rate = lr;
        if (!std::isfinite(record.train_mse) || !std::isfinite(record.val_mse) || !finite_values(params.values))
            throw Error(ErrorCode::DivergedLoss, "non-finite parameters after epoch " + std::to_string(epoch));
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.epochs.push_back(record);
        if (hooks.on_epoch) hooks.on_epoch(record);
        if ((cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) || epoch == cfg.epochs) save(params);
        lr *= cfg.lr_decay;
    }
    result.params = std::move(params);
    return result;
}

} // namespace morphogen
