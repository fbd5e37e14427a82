#ifndef CDSL_TRAIN_HPP
#define CDSL_TRAIN_HPP

#include <string>
#include <vector>

#include "cdsl/data.hpp"
#include "cdsl/eval.hpp"
#include "cdsl/losses.hpp"
#include "cdsl/network.hpp"
#include "cdsl/sgd.hpp"

namespace cdsl {

enum class SelectBest { last_epoch, best_val_dice };

struct TrainConfig {
    float learning_rate = 0.001f;
    float momentum = 0.9f;
    int epochs = 300;
    int batch_size = 4;
    std::uint32_t seed = 1;
    bool use_dice_loss = true;
    SelectBest select_best_on = SelectBest::best_val_dice;
    // stop once validation Dice reaches this value; 0 disables
    double early_stop_val_dice = 0.0;

    void validate() const {
        if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
        if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train: momentum must be in [0,1)");
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (batch norm)");
    }
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_dice;
    int best_epoch = -1; // 0-based epoch whose parameters were returned
};

struct TrainResult {
    nn::ParameterStore<float> params;
    TrainHistory history;
};

// Epoch loop: seeded shuffle, fixed-size batches (a trailing batch smaller
// than 2 is dropped), forward(train) -> combined loss -> backward -> SGD step,
// then an eval-mode validation pass. Deterministic for fixed (data, config,
// seed, initial parameters).
inline TrainResult train(const nn::NetworkGraph& net, nn::ParameterStore<float> params,
                         const std::vector<NetSample>& train_samples,
                         const std::vector<NetSample>& val_samples, const TrainConfig& cfg) {
    cfg.validate();
    if (train_samples.empty()) throw std::invalid_argument("train: no training samples");
    if (val_samples.empty()) throw std::invalid_argument("train: no validation samples");

    nn::ParameterStore<float> velocity = params.zeros_like();
    TrainHistory history;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5709));

    nn::ParameterStore<float> best_params = params;
    double best_dice = -1.0;
    int best_epoch = 0;

    std::vector<int> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0;
        int n_batches = 0;
        for (std::size_t first = 0; first < order.size();
             first += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t last =
                std::min(first + static_cast<std::size_t>(cfg.batch_size), order.size());
            if (last - first < 2) break; // short tail violates the BN constraint
            auto [batch, masks] = collate(train_samples, order, first, last);
            try {
                nn::Tape<float> tape;
                const TensorF& probs = nn::forward(net, params, batch, nn::Mode::train, tape);
                const double loss = combined_loss(probs, masks, cfg.use_dice_loss);
                if (!std::isfinite(loss)) throw NumericError("non-finite loss");
                const TensorF d_probs = combined_loss_grad(probs, masks, cfg.use_dice_loss);
                const nn::Gradients<float> grads = nn::backward(net, params, tape, d_probs);
                sgd_momentum_step(params, grads.params, velocity, cfg.learning_rate,
                                  cfg.momentum);
                epoch_loss += loss;
            } catch (const NumericError& e) {
                throw NumericError("train: aborted at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(n_batches) + ": " + e.what());
            }
            ++n_batches;
        }
        if (n_batches == 0)
            throw std::invalid_argument("train: not enough samples for one batch of >= 2");
        history.train_loss.push_back(epoch_loss / n_batches);

        // validation under running statistics
        double val_loss = 0, val_dice_sum = 0;
        std::size_t val_px_batches = 0;
        {
            std::vector<int> vorder(val_samples.size());
            for (std::size_t i = 0; i < vorder.size(); ++i) vorder[i] = static_cast<int>(i);
            for (std::size_t first = 0; first < vorder.size();
                 first += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t last =
                    std::min(first + static_cast<std::size_t>(cfg.batch_size), vorder.size());
                auto [batch, masks] = collate(val_samples, vorder, first, last);
                nn::Tape<float> tape;
                const TensorF& probs = nn::forward(net, params, batch, nn::Mode::eval, tape);
                val_loss += combined_loss(probs, masks, cfg.use_dice_loss);
                ++val_px_batches;
                for (std::size_t i = first; i < last; ++i) {
                    const int b = static_cast<int>(i - first);
                    TensorF p(1, 1, probs.h(), probs.w()), m(1, 1, masks.h(), masks.w());
                    const std::size_t plane = p.numel();
                    std::copy_n(probs.data.begin() + b * plane, plane, p.data.begin());
                    std::copy_n(masks.data.begin() + b * plane, plane, m.data.begin());
                    val_dice_sum += hard_dice(confusion(binarize(p), m));
                }
            }
        }
        const double val_dice = val_dice_sum / static_cast<double>(val_samples.size());
        history.val_loss.push_back(val_loss / static_cast<double>(val_px_batches));
        history.val_dice.push_back(val_dice);

        if (val_dice > best_dice) {
            best_dice = val_dice;
            best_epoch = epoch;
            if (cfg.select_best_on == SelectBest::best_val_dice) best_params = params;
        }
        if (cfg.early_stop_val_dice > 0 && val_dice >= cfg.early_stop_val_dice) break;
    }

    TrainResult result;
    if (cfg.select_best_on == SelectBest::best_val_dice) {
        result.params = std::move(best_params);
        history.best_epoch = best_epoch;
    } else {
        result.params = std::move(params);
        history.best_epoch = static_cast<int>(history.train_loss.size()) - 1;
    }
    result.history = std::move(history);
    return result;
}

} // namespace cdsl

#endif
