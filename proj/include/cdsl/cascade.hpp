#ifndef CDSL_CASCADE_HPP
#define CDSL_CASCADE_HPP

#include <memory>

#include "cdsl/train.hpp"

namespace cdsl {

// Two-stage pipeline. Stage 2 consumes the input image concatenated with the
// stage-1 probability map (continuous, not binarized) as a second channel.
struct CascadeModel {
    nn::NetworkGraph stage1; // in_channels = base config's in_channels
    nn::NetworkGraph stage2; // in_channels = stage1 + 1
    nn::ParameterStore<float> params1;
    nn::ParameterStore<float> params2;
    TrainHistory history1;
    TrainHistory history2;
};

// Per sample: channel 0 = original channels, channel 1 = stage-1 eval-mode
// probability map. Masks pass through unchanged.
inline std::vector<NetSample> make_stage2_inputs(const std::vector<NetSample>& samples,
                                                 const nn::NetworkGraph& stage1,
                                                 const nn::ParameterStore<float>& params1,
                                                 int batch_size = 4) {
    std::vector<NetSample> out;
    out.reserve(samples.size());
    const Predictor predict = make_predictor(stage1, params1);
    std::vector<int> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (std::size_t first = 0; first < samples.size();
         first += static_cast<std::size_t>(batch_size)) {
        const std::size_t last =
            std::min(first + static_cast<std::size_t>(batch_size), samples.size());
        auto [batch, masks] = collate(samples, order, first, last);
        const TensorF probs = predict(batch);
        for (std::size_t i = first; i < last; ++i) {
            const int b = static_cast<int>(i - first);
            const NetSample& s = samples[i];
            NetSample ns;
            ns.id = s.id;
            ns.mask = s.mask;
            ns.input = TensorF(1, s.input.c() + 1, s.input.h(), s.input.w());
            std::copy(s.input.data.begin(), s.input.data.end(), ns.input.data.begin());
            const std::size_t plane = static_cast<std::size_t>(probs.h()) * probs.w();
            std::copy_n(probs.data.begin() + b * plane, plane,
                        ns.input.data.begin() + s.input.numel());
            out.push_back(std::move(ns));
        }
    }
    return out;
}

// Trains stage 1 to completion, freezes it, regenerates the training and
// validation inputs through it, then trains stage 2 with the same recipe.
inline CascadeModel train_cascade(const std::vector<NetSample>& train_samples,
                                  const std::vector<NetSample>& val_samples,
                                  const nn::NetworkConfig& net_config,
                                  const TrainConfig& train_config) {
    CascadeModel model;
    model.stage1 = nn::build_network(net_config);

    nn::NetworkConfig cfg2 = net_config;
    cfg2.in_channels = net_config.in_channels + 1;
    model.stage2 = nn::build_network(cfg2);

    TrainConfig tc1 = train_config;
    TrainConfig tc2 = train_config;
    tc2.seed = derive_seed(train_config.seed, 0xca5c2);

    auto init1 = nn::init_parameters(model.stage1, derive_seed(train_config.seed, 0x111));
    TrainResult r1 = train(model.stage1, std::move(init1), train_samples, val_samples, tc1);
    model.params1 = std::move(r1.params);
    model.history1 = std::move(r1.history);

    const auto train2 = make_stage2_inputs(train_samples, model.stage1, model.params1,
                                           train_config.batch_size);
    const auto val2 = make_stage2_inputs(val_samples, model.stage1, model.params1,
                                         train_config.batch_size);

    auto init2 = nn::init_parameters(model.stage2, derive_seed(train_config.seed, 0x222));
    TrainResult r2 = train(model.stage2, std::move(init2), train2, val2, tc2);
    model.params2 = std::move(r2.params);
    model.history2 = std::move(r2.history);
    return model;
}

inline Predictor make_cascade_predictor(const CascadeModel& model) {
    auto p1 = std::make_shared<nn::ParameterStore<float>>(model.params1);
    auto p2 = std::make_shared<nn::ParameterStore<float>>(model.params2);
    const CascadeModel* m = &model;
    return [m, p1, p2](const TensorF& batch) {
        nn::Tape<float> tape;
        const TensorF probs1 = nn::forward(m->stage1, *p1, batch, nn::Mode::eval, tape);
        const TensorF stacked = nn::concat_forward(batch, probs1);
        return nn::forward(m->stage2, *p2, stacked, nn::Mode::eval, tape);
    };
}

// stage2(concat(image, stage1(image))), eval mode throughout.
inline TensorF predict_cascade(const CascadeModel& model, const TensorF& batch) {
    return make_cascade_predictor(model)(batch);
}

} // namespace cdsl

#endif
