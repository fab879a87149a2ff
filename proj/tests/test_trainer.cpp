#include "support.hpp"

#include "morphogen/io.hpp"
#include "morphogen/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>

using namespace morphogen;

namespace {

Dataset sparse_noise_set(std::size_t n, int side, std::uint64_t seed) {
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        Image img = testing::random_image(side, side, seed + i);
        for (double& v : img.pixels) v = v > 0.8 ? v : 0.0;
        d.images.push_back(std::move(img));
    }
    return d;
}

TrainConfig quick(int epochs) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.minibatch_size = 8;
    cfg.learning_rate = 0.002;
    return cfg;
}

} // namespace

TEST_CASE("config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.epochs = 0;
    CHECK_ERROR_CODE(validate(cfg), ErrorCode::InvalidConfig);
    cfg = TrainConfig{};
    cfg.minibatch_size = 0;
    CHECK_ERROR_CODE(validate(cfg), ErrorCode::InvalidConfig);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    CHECK_ERROR_CODE(validate(cfg), ErrorCode::InvalidConfig);
    cfg = TrainConfig{};
    cfg.lr_decay = 0.0;
    CHECK_ERROR_CODE(validate(cfg), ErrorCode::InvalidConfig);
    cfg.lr_decay = 1.01;
    CHECK_ERROR_CODE(validate(cfg), ErrorCode::InvalidConfig);
}

TEST_CASE("evaluate") {
    ModelParams p = init_params(ArchConfig{});
    for (std::size_t l = 0; l < 3; ++l) {
        auto b = p.coder_bias(l);
        std::fill(b.begin(), b.end(), 0.0);
    }
    Dataset one;
    one.images.emplace_back(28, 28);
    CHECK(evaluate(p, one) == 0.0);
    CHECK_ERROR_CODE(evaluate(p, Dataset{}), ErrorCode::EmptyDataset);

    const ModelParams q = init_params(testing::small_arch(12));
    Dataset d = sparse_noise_set(20, 12, 1);
    const double forward_order = evaluate(q, d);
    std::reverse(d.images.begin(), d.images.end());
    CHECK(evaluate(q, d) == doctest::Approx(forward_order).epsilon(1e-12));
    double manual = 0.0;
    for (const auto& x : d.images) manual += distortion(x, forward(q, x, true).reconstruction);
    CHECK(evaluate(q, d) == doctest::Approx(manual / 20).epsilon(1e-12));
}

TEST_CASE("training is deterministic and independent of the worker count") {
    const Dataset train_set = sparse_noise_set(40, 12, 10);
    const Dataset val = sparse_noise_set(10, 12, 100);
    const ArchConfig arch = testing::small_arch(12);
    TrainConfig cfg = quick(3);
    cfg.lifetime_sparsity = true;
    ::setenv("MORPHOGEN_THREADS", "1", 1);
    const TrainResult a = train(train_set, val, arch, cfg);
    ::setenv("MORPHOGEN_THREADS", "3", 1);
    const TrainResult b = train(train_set, val, arch, cfg);
    ::unsetenv("MORPHOGEN_THREADS");
    CHECK(a.params.values == b.params.values);
    CHECK(a.log.same_trajectory(b.log));
    REQUIRE(a.log.epochs.size() == 3);
    for (const auto& r : a.log.epochs) {
        CHECK(r.train_mse >= 0.0);
        CHECK(r.val_mse >= 0.0);
    }
    CHECK(a.log.epochs[1].learning_rate == doctest::Approx(cfg.learning_rate * cfg.lr_decay));

    TrainConfig other = cfg;
    other.shuffle_seed = 2;
    CHECK(train(train_set, val, arch, other).params.values != a.params.values);
}

TEST_CASE("exact train metric equals evaluate on the final parameters") {
    const Dataset train_set = sparse_noise_set(24, 12, 10);
    const Dataset val = sparse_noise_set(6, 12, 100);
    TrainConfig cfg = quick(1);
    cfg.exact_train_metric = true;
    const TrainResult r = train(train_set, val, testing::small_arch(12), cfg);
    CHECK(r.log.epochs[0].train_mse == evaluate(r.params, train_set));
    CHECK(r.log.epochs[0].val_mse == evaluate(r.params, val));
}

TEST_CASE("checkpoints are written and hold the final parameters") {
    const auto dir = testing::scratch_dir("trainer-ckpt");
    const Dataset train_set = sparse_noise_set(16, 12, 3);
    const Dataset val = sparse_noise_set(4, 12, 50);
    TrainHooks hooks;
    hooks.checkpoint_path = dir / "model.ckpt";
    int seen = 0;
    hooks.on_epoch = [&](const EpochRecord& r) { CHECK(r.epoch == ++seen); };
    TrainConfig cfg = quick(2);
    cfg.checkpoint_every = 1;
    const TrainResult r = train(train_set, val, testing::small_arch(12), cfg, hooks);
    CHECK(seen == 2);
    CHECK(deserialize(read_file(dir / "model.ckpt")).values == r.params.values);
    CHECK(!std::filesystem::exists(dir / "model.ckpt.tmp"));
}

TEST_CASE("divergence raises DivergedLoss and keeps the last good checkpoint") {
    const auto dir = testing::scratch_dir("trainer-diverge");
    const Dataset train_set = sparse_noise_set(16, 12, 3);
    const Dataset val = sparse_noise_set(4, 12, 50);
    TrainHooks hooks;
    hooks.checkpoint_path = dir / "model.ckpt";
    TrainConfig cfg = quick(1);
    const TrainResult good = train(train_set, val, testing::small_arch(12), cfg, hooks);
    TrainConfig wild = quick(5);
    wild.learning_rate = 1e6;
    CHECK_ERROR_CODE(train_from(good.params, train_set, val, wild, hooks), ErrorCode::DivergedLoss);
    CHECK(deserialize(read_file(dir / "model.ckpt")).values == good.params.values);
}

TEST_CASE("empty datasets are rejected") {
    CHECK_ERROR_CODE(train(Dataset{}, sparse_noise_set(2, 12, 1), testing::small_arch(12), quick(1)), ErrorCode::EmptyDataset);
    CHECK_ERROR_CODE(train(sparse_noise_set(2, 12, 1), Dataset{}, testing::small_arch(12), quick(1)), ErrorCode::EmptyDataset);
}

TEST_CASE("training log CSV round trip") {
    TrainingLog log;
    log.epochs.push_back({1, 12.5, 13.25, 0.001, 1.5});
    log.epochs.push_back({2, 0.1 + 0.2, 1.0 / 3.0, 0.00095, 2.25});
    const std::string csv = log.to_csv();
    CHECK(csv.rfind("epoch,train_mse,val_mse,lr,seconds\n", 0) == 0);
    const TrainingLog back = TrainingLog::from_csv(csv);
    CHECK(back.same_trajectory(log));
    CHECK_ERROR_CODE(TrainingLog::from_csv("nope\n"), ErrorCode::MalformedContainer);
}

TEST_CASE("training on MNIST digits lowers their distortion") {
    if (!testing::have_mnist()) {
        MESSAGE("MNIST not found, skipping");
        return;
    }
    const Dataset all = take_prefix(load_idx_dataset(testing::mnist_dir() / "train-images-idx3-ubyte", std::nullopt), 600);
    auto [train_set, val] = split(all, 0.1, 1);
    TrainConfig cfg;
    cfg.epochs = 2;
    const ArchConfig arch;
    const ModelParams untrained = init_params(arch);
    const TrainResult r = train(train_set, val, arch, cfg);
    CHECK(r.log.epochs.back().train_mse < r.log.epochs.front().train_mse);
    const double before = evaluate(untrained, train_set);
    CHECK(evaluate(r.params, train_set) < before);
    const Image& digit = train_set.images[0];
    CHECK(distortion(digit, forward(r.params, digit, true).reconstruction) <
          distortion(digit, forward(untrained, digit, true).reconstruction));
}
