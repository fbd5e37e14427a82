#ifndef CDSL_METRICS_HPP
#define CDSL_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cdsl/tensor.hpp"

namespace cdsl {

struct Confusion {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::int64_t total() const { return tp + fp + fn + tn; }
    Confusion& operator+=(const Confusion& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

// 1 where p > threshold, strict inequality.
TensorF binarize(const TensorF& p, float threshold = 0.5f);

// exact pixel counts over two binary tensors
Confusion confusion(const TensorF& pred, const TensorF& gt);

// 2TP/(2TP+FN+FP); both masks empty scores 1
double hard_dice(const Confusion& c);

double iou_foreground(const Confusion& c);
double iou_background(const Confusion& c);

// mean of foreground and background IoU; an empty-union class contributes 1
double mean_iou(const Confusion& c);

struct PerImageMetrics {
    std::string id;
    double dice = 0, iou_fg = 0, iou_bg = 0, mean_iou = 0;
};

struct MetricsReport {
    std::vector<PerImageMetrics> per_image;
    double mean_dice = 0;
    double mean_mean_iou = 0;
    Confusion totals;
};

std::string metrics_to_json(const MetricsReport& r);
// per-image rows, columns id,dice,iou_fg,iou_bg,mean_iou
std::string metrics_to_csv(const MetricsReport& r);

} // namespace cdsl

#endif
