#include "sft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sft {

double gradient_check(const std::function<double(bool)>& f, const std::vector<Parameter*>& params,
                      double h) {
    if (h <= 0.0) throw std::invalid_argument("gradient_check: step must be positive");
    for (Parameter* p : params) p->zero_grad();
    (void)f(true);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad.values());

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::int64_t i = 0; i < p.value.size(); ++i) {
            double saved = p.value[i];
            p.value[i] = saved + h;
            double up = f(false);
            p.value[i] = saved - h;
            double down = f(false);
            p.value[i] = saved;
            double numeric = (up - down) / (2.0 * h);
            double a = analytic[pi][static_cast<std::size_t>(i)];
            double denom = std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    // Restore the analytic gradients so callers can inspect them afterwards.
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        params[pi]->grad.values() = analytic[pi];
    }
    return worst;
}

}  // namespace sft
