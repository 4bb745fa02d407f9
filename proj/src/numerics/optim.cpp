// SPDX-License-Identifier: Apache-2.0
#include "peta/numerics/optim.hpp"

#include <cmath>

#include "peta/numerics/kernels.hpp"

namespace peta::numerics {

void Optimizer::step(ParamSet& params, const std::vector<std::pair<std::string, Tensor>>& grads) {
    ++step_count_;
    const double c1 = 1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_)));
    const double c2 = 1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_)));
    for (const auto& [name, g] : grads) {
        Tensor& p = params.get(name);
        if (!p.same_shape(g)) {
            throw ShapeError("optimizer: gradient shape " + g.shape_str() + " does not match parameter '" + name +
                             "' " + p.shape_str());
        }
        if (!g.all_finite()) {
            throw TrainingError("non-finite gradient for parameter '" + name + "'; training aborted");
        }
        if (cfg_.kind == OptKind::sgd) {
            kernels::active().sgd_step(p.data(), g.data(), p.size(), cfg_.lr);
        } else {
            auto it = moments_.find(name);
            if (it == moments_.end()) {
                it = moments_.emplace(name, Moments{Tensor::zeros(p.shape()), Tensor::zeros(p.shape())}).first;
            }
            kernels::active().adam_step(p.data(), it->second.m.data(), it->second.v.data(), g.data(), p.size(),
                                        cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, c1, c2);
        }
    }
}

}  // namespace peta::numerics
