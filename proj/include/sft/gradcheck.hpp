#pragma once

#include <functional>
#include <vector>

#include "sft/tensor.hpp"

namespace sft {

// Compares tape gradients against central finite differences.
//
// `f(with_grad)` must run the full forward pass deterministically and return
// the scalar loss; when with_grad is true it must also run backward so the
// analytic gradients land in the given parameters. Returns the max over all
// coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double gradient_check(const std::function<double(bool)>& f, const std::vector<Parameter*>& params,
                      double h = 1e-5);

}  // namespace sft
