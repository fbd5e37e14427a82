#ifndef CDSL_EVAL_HPP
#define CDSL_EVAL_HPP

#include <functional>
#include <memory>

#include "cdsl/data.hpp"
#include "cdsl/metrics.hpp"
#include "cdsl/network.hpp"

namespace cdsl {

// maps a batch (b,c,h,w) to probability maps (b,1,h,w)
using Predictor = std::function<TensorF(const TensorF&)>;

inline Predictor make_predictor(const nn::NetworkGraph& net,
                                const nn::ParameterStore<float>& params) {
    // eval-mode forward is pure; the copy keeps the caller's store untouched
    auto store = std::make_shared<nn::ParameterStore<float>>(params);
    const nn::NetworkGraph* graph = &net;
    return [store, graph](const TensorF& batch) {
        nn::Tape<float> tape;
        return nn::forward(*graph, *store, batch, nn::Mode::eval, tape);
    };
}

// Binarized per-image metrics plus arithmetic-mean aggregates.
inline MetricsReport evaluate_dataset(const Predictor& predict,
                                      const std::vector<NetSample>& samples,
                                      int batch_size = 4) {
    MetricsReport report;
    if (samples.empty()) return report;
    std::vector<int> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (std::size_t first = 0; first < samples.size(); first += batch_size) {
        const std::size_t last = std::min(first + batch_size, samples.size());
        auto [batch, masks] = collate(samples, order, first, last);
        const TensorF probs = predict(batch);
        if (!(probs.shape == masks.shape))
            throw std::invalid_argument("evaluate: prediction shape " + probs.shape.str() +
                                        " vs mask " + masks.shape.str());
        for (std::size_t i = first; i < last; ++i) {
            const int b = static_cast<int>(i - first);
            TensorF p(1, 1, probs.h(), probs.w());
            TensorF m(1, 1, masks.h(), masks.w());
            const std::size_t plane = p.numel();
            std::copy_n(probs.data.begin() + b * plane, plane, p.data.begin());
            std::copy_n(masks.data.begin() + b * plane, plane, m.data.begin());
            const Confusion c = confusion(binarize(p), m);
            PerImageMetrics pm;
            pm.id = samples[i].id;
            pm.dice = hard_dice(c);
            pm.iou_fg = iou_foreground(c);
            pm.iou_bg = iou_background(c);
            pm.mean_iou = mean_iou(c);
            report.totals += c;
            report.per_image.push_back(std::move(pm));
        }
    }
    for (const auto& m : report.per_image) {
        report.mean_dice += m.dice;
        report.mean_mean_iou += m.mean_iou;
    }
    report.mean_dice /= static_cast<double>(report.per_image.size());
    report.mean_mean_iou /= static_cast<double>(report.per_image.size());
    return report;
}

} // namespace cdsl

#endif
