// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "peta/numerics/params.hpp"
#include "peta/numerics/tensor.hpp"

namespace peta::numerics {

enum class OptKind { sgd, adam };

struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First-order optimizer with per-parameter Adam moments keyed by name.
// step() applies one update to every (name, grad) pair it is given and
// increments the step count exactly once.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
        if (cfg_.lr <= 0.0) throw ConfigError("optimizer learning rate must be positive");
    }

    void step(ParamSet& params, const std::vector<std::pair<std::string, Tensor>>& grads);

    int64_t step_count() const { return step_count_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    struct Moments {
        Tensor m, v;
    };

    OptimizerConfig cfg_;
    std::unordered_map<std::string, Moments> moments_;
    int64_t step_count_ = 0;
};

}  // namespace peta::numerics
