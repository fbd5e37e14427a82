#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cdsl/checkpoint.hpp"
#include "cdsl/train.hpp"

using namespace cdsl;
using namespace cdsl::nn;
namespace fs = std::filesystem;

namespace {

template <typename T>
ParameterStore<T> one_tensor_store(std::vector<T> values) {
    ParameterStore<T> s;
    Tensor4<T> t(1, static_cast<int>(values.size()), 1, 1);
    t.data = std::move(values);
    s.add("w", std::move(t), true);
    return s;
}

NetworkConfig tiny_config(int side = 32) {
    NetworkConfig cfg;
    cfg.base_channels = 8;
    cfg.encoder_channels = {8, 16, 24, 32};
    cfg.scale_inputs = {2};
    cfg.input_h = cfg.input_w = side;
    return cfg;
}

std::vector<NetSample> fixture(int n, int side, std::uint32_t seed) {
    return to_net_samples(synth_dataset(n, side, seed));
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("sgd step: mu=0 is plain gradient descent") {
    auto params = one_tensor_store<float>({1.0f, 2.0f});
    auto grads = one_tensor_store<float>({0.5f, -1.0f});
    auto vel = params.zeros_like();
    sgd_momentum_step(params, grads, vel, 0.1f, 0.0f);
    CHECK(params.get("w").data[0] == doctest::Approx(0.95f));
    CHECK(params.get("w").data[1] == doctest::Approx(2.1f));
}

TEST_CASE("sgd step: two steps with unit gradient reach -0.0029") {
    auto params = one_tensor_store<float>({0.0f});
    auto grads = one_tensor_store<float>({1.0f});
    auto vel = params.zeros_like();
    sgd_momentum_step(params, grads, vel, 0.001f, 0.9f);
    sgd_momentum_step(params, grads, vel, 0.001f, 0.9f);
    CHECK(params.get("w").data[0] == doctest::Approx(-0.0029f).epsilon(1e-6));
}

TEST_CASE("sgd step: zero gradients leave parameters untouched") {
    auto params = one_tensor_store<float>({3.0f, -4.0f});
    const auto before = params;
    auto grads = one_tensor_store<float>({0.0f, 0.0f});
    auto vel = params.zeros_like();
    for (int i = 0; i < 10; ++i) sgd_momentum_step(params, grads, vel, 0.01f, 0.9f);
    CHECK(params == before);
}

TEST_CASE("sgd velocity follows the closed form g*(1-mu^n)/(1-mu)") {
    auto params = one_tensor_store<double>({0.0});
    auto grads = one_tensor_store<double>({0.37});
    auto vel = params.zeros_like();
    const double mu = 0.9;
    for (int n = 1; n <= 50; ++n) {
        sgd_momentum_step(params, grads, vel, 0.001, mu);
        const double expect = 0.37 * (1.0 - std::pow(mu, n)) / (1.0 - mu);
        CHECK(std::fabs(vel.get("w").data[0] - expect) <= 1e-10);
    }
}

TEST_CASE("sgd skips non-trainable entries") {
    ParameterStore<float> params;
    params.add("w", TensorF(1, 1, 1, 1), true);
    params.add("bn.running_mean", TensorF(1, 1, 1, 1), false);
    params.get("bn.running_mean").data[0] = 5.0f;
    ParameterStore<float> grads = params.zeros_like();
    grads.get("w").data[0] = 1.0f;
    grads.get("bn.running_mean").data[0] = 1.0f;
    auto vel = params.zeros_like();
    sgd_momentum_step(params, grads, vel, 0.5f, 0.0f);
    CHECK(params.get("w").data[0] == doctest::Approx(-0.5f));
    CHECK(params.get("bn.running_mean").data[0] == 5.0f);
}

TEST_CASE("checkpoint round-trip is bit-identical and eval outputs match") {
    const NetworkGraph net = build_network(tiny_config());
    auto params = init_parameters(net, 21);
    // make running stats non-trivial
    const auto samples = fixture(4, 32, 3);
    std::vector<int> order = {0, 1, 2, 3};
    auto [batch, masks] = collate(samples, order, 0, 4);
    Tape<float> tape;
    forward(net, params, batch, Mode::train, tape);

    const fs::path path = fs::temp_directory_path() / "cdsl_ckpt_test.ckpt";
    save_checkpoint(params, path.string());
    const auto loaded = load_checkpoint(path.string());
    CHECK(loaded == params);
    for (std::size_t i = 0; i < params.entries.size(); ++i)
        CHECK(loaded.entries[i].trainable == params.entries[i].trainable);

    auto p1 = params;
    auto p2 = loaded;
    Tape<float> t1, t2;
    const TensorF o1 = forward(net, p1, batch, Mode::eval, t1);
    const TensorF o2 = forward(net, p2, batch, Mode::eval, t2);
    CHECK(o1.data == o2.data);

    // save -> load -> save reproduces the file bytes
    const fs::path path2 = fs::temp_directory_path() / "cdsl_ckpt_test2.ckpt";
    save_checkpoint(loaded, path2.string());
    CHECK(slurp(path) == slurp(path2));
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("checkpoint file size matches the format arithmetic") {
    ParameterStore<float> store;
    store.add("alpha", TensorF(2, 3, 4, 5), true);    // 120 floats
    store.add("bn.running_var", TensorF(1, 7, 1, 1), false); // 7 floats
    const fs::path path = fs::temp_directory_path() / "cdsl_ckpt_size.ckpt";
    save_checkpoint(store, path.string());
    // 16-byte header + per tensor: 2 + name + 1 + 16 + 4*numel
    const std::size_t expect = 16 + (2 + 5 + 1 + 16 + 4 * 120) + (2 + 14 + 1 + 16 + 4 * 7);
    CHECK(fs::file_size(path) == expect);
    fs::remove(path);
}

TEST_CASE("checkpoint corruption is rejected cleanly") {
    ParameterStore<float> store;
    store.add("w", TensorF(1, 2, 1, 1), true);
    const fs::path path = fs::temp_directory_path() / "cdsl_ckpt_bad.ckpt";
    save_checkpoint(store, path.string());

    SUBCASE("bad magic") {
        auto bytes = slurp(path);
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);
    }
    SUBCASE("bad version") {
        auto bytes = slurp(path);
        bytes[4] = 9;
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);
    }
    SUBCASE("truncated payload") {
        auto bytes = slurp(path);
        bytes.resize(bytes.size() - 3);
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_AS(load_checkpoint(path.string()), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint((path.string() + ".absent")), DataError);
    }
    fs::remove(path);
}

TEST_CASE("train: config validation") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.momentum = 1.0f;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0f;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("train: identical (data, config, seed) gives bit-identical histories") {
    const NetworkGraph net = build_network(tiny_config());
    const auto samples = fixture(6, 32, 13);
    const std::vector<NetSample> val(samples.begin() + 4, samples.end());
    const std::vector<NetSample> tr(samples.begin(), samples.begin() + 4);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.seed = 5;

    auto r1 = train(net, init_parameters(net, 1), tr, val, cfg);
    auto r2 = train(net, init_parameters(net, 1), tr, val, cfg);
    CHECK(r1.history.train_loss == r2.history.train_loss);
    CHECK(r1.history.val_loss == r2.history.val_loss);
    CHECK(r1.history.val_dice == r2.history.val_dice);
    CHECK(r1.params == r2.params);
    CHECK(r1.history.train_loss.size() == 3);
    for (const double v : r1.history.train_loss) CHECK(std::isfinite(v));
}

TEST_CASE("train: a short tail batch below 2 is dropped") {
    const NetworkGraph net = build_network(tiny_config());
    const auto samples = fixture(5, 32, 10);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4; // 5 samples -> one batch of 4, tail of 1 dropped
    auto r = train(net, init_parameters(net, 2), samples, samples, cfg);
    CHECK(r.history.train_loss.size() == 1);
}

TEST_CASE("train: select_best_on returns the best-validation snapshot") {
    const NetworkGraph net = build_network(tiny_config());
    const auto samples = fixture(4, 32, 21);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 2;
    cfg.select_best_on = SelectBest::best_val_dice;
    auto r = train(net, init_parameters(net, 3), samples, samples, cfg);
    REQUIRE(r.history.best_epoch >= 0);
    REQUIRE(r.history.best_epoch < 4);
    const double best = r.history.val_dice[r.history.best_epoch];
    for (const double d : r.history.val_dice) CHECK(best >= d);

    cfg.select_best_on = SelectBest::last_epoch;
    auto r2 = train(net, init_parameters(net, 3), samples, samples, cfg);
    CHECK(r2.history.best_epoch == 3);
}

TEST_CASE("train: loss decreases on a small fixture by epoch 15") {
    const NetworkGraph net = build_network(tiny_config());
    const auto samples = fixture(4, 32, 8);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.01f;
    auto r = train(net, init_parameters(net, 4), samples, samples, cfg);
    CHECK(r.history.train_loss.back() < r.history.train_loss.front());
}

TEST_CASE("train: empty sample lists are rejected") {
    const NetworkGraph net = build_network(tiny_config());
    const auto samples = fixture(4, 32, 1);
    TrainConfig cfg;
    CHECK_THROWS(train(net, init_parameters(net, 1), {}, samples, cfg));
    CHECK_THROWS(train(net, init_parameters(net, 1), samples, {}, cfg));
}

TEST_CASE("train: a numeric failure aborts naming the epoch and batch") {
    const NetworkGraph net = build_network(tiny_config());
    auto params = init_parameters(net, 1);
    params.get("init.conv.w").data[0] = std::numeric_limits<float>::quiet_NaN();
    const auto samples = fixture(4, 32, 6);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    try {
        train(net, std::move(params), samples, samples, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch 0") != std::string::npos);
        CHECK(msg.find("batch 0") != std::string::npos);
    }
}

TEST_CASE("backward without a cached train-mode forward is rejected") {
    const NetworkGraph net = build_network(tiny_config());
    auto params = init_parameters(net, 2);
    Tape<float> tape;
    const TensorF dy(2, 1, 32, 32);
    CHECK_THROWS_AS(backward(net, params, tape, dy), std::logic_error);
    // eval-mode forward does not produce a usable tape either
    TensorF batch(2, 1, 32, 32);
    forward(net, params, batch, Mode::eval, tape);
    CHECK_THROWS_AS(backward(net, params, tape, dy), std::logic_error);
}
