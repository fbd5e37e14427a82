#include "cdsl/metrics.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace cdsl {

TensorF binarize(const TensorF& p, float threshold) {
    TensorF m(p.shape);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        m.data[i] = p.data[i] > threshold ? 1.0f : 0.0f;
    return m;
}

Confusion confusion(const TensorF& pred, const TensorF& gt) {
    if (!(pred.shape == gt.shape))
        throw std::invalid_argument("confusion: shape mismatch " + pred.shape.str() + " vs " +
                                    gt.shape.str());
    Confusion c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] > 0.5f;
        const bool g = gt.data[i] > 0.5f;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

double hard_dice(const Confusion& c) {
    const std::int64_t denom = 2 * c.tp + c.fn + c.fp;
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double iou_foreground(const Confusion& c) {
    const std::int64_t u = c.tp + c.fp + c.fn;
    if (u == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(u);
}

double iou_background(const Confusion& c) {
    const std::int64_t u = c.tn + c.fp + c.fn;
    if (u == 0) return 1.0;
    return static_cast<double>(c.tn) / static_cast<double>(u);
}

double mean_iou(const Confusion& c) {
    return 0.5 * (iou_foreground(c) + iou_background(c));
}

std::string metrics_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["per_image"] = nlohmann::json::array();
    for (const auto& m : r.per_image) {
        j["per_image"].push_back({{"id", m.id},
                                  {"dice", m.dice},
                                  {"iou_fg", m.iou_fg},
                                  {"iou_bg", m.iou_bg},
                                  {"mean_iou", m.mean_iou}});
    }
    j["aggregate"] = {{"mean_dice", r.mean_dice},
                      {"mean_mean_iou", r.mean_mean_iou},
                      {"confusion",
                       {{"tp", r.totals.tp},
                        {"fp", r.totals.fp},
                        {"fn", r.totals.fn},
                        {"tn", r.totals.tn}}}};
    return j.dump(2);
}

std::string metrics_to_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "id,dice,iou_fg,iou_bg,mean_iou\n";
    char buf[256];
    for (const auto& m : r.per_image) {
        std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g,%.12g,%.12g\n", m.id.c_str(), m.dice,
                      m.iou_fg, m.iou_bg, m.mean_iou);
        os << buf;
    }
    return os.str();
}

} // namespace cdsl
