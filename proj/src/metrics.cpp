#include "sft/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace sft {

EvalResult evaluate(const std::vector<BBox>& results, const std::vector<BBox>& gts) {
    if (results.size() != gts.size()) {
        throw std::invalid_argument("evaluate: result and ground-truth counts differ");
    }
    if (results.empty()) throw std::invalid_argument("evaluate: empty input");
    const int n = static_cast<int>(results.size());

    std::vector<double> ious(results.size());
    double ao = 0.0, pr = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        ious[i] = iou(results[i], gts[i]);
        ao += ious[i];
        double dx = results[i].cx - gts[i].cx;
        double dy = results[i].cy - gts[i].cy;
        if (std::sqrt(dx * dx + dy * dy) < 20.0) pr += 1.0;
    }
    ao /= n;
    pr /= n;

    auto success_at = [&](double thr) {
        int hits = 0;
        for (double v : ious) {
            if (v >= thr) ++hits;
        }
        return static_cast<double>(hits) / n;
    };

    double auc = 0.0;
    const int steps = 21;  // 0 : 0.05 : 1, k/20 keeps the endpoints exact
    for (int k = 0; k < steps; ++k) auc += success_at(k / 20.0);
    auc /= steps;

    return {auc, success_at(0.5), success_at(0.75), pr, ao};
}

}  // namespace sft
