// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "peta/numerics/params.hpp"
#include "peta/numerics/tape.hpp"

namespace peta::numerics {

// A ParamSet loaded onto a tape as leaves, preserving order and names.
struct TapedParams {
    std::vector<std::pair<std::string, NodeId>> ids;

    NodeId at(const std::string& name) const {
        for (const auto& [n, id] : ids) {
            if (n == name) return id;
        }
        throw ConfigError("taped params: unknown name '" + name + "'");
    }
};

inline TapedParams load_params(Tape& tape, const ParamSet& params, bool trainable) {
    TapedParams out;
    out.ids.reserve(params.count());
    for (const auto& [name, t] : params.items()) {
        out.ids.emplace_back(name, trainable ? tape.input(t) : tape.constant(t));
    }
    return out;
}

inline std::vector<std::pair<std::string, Tensor>> collect_grads(const Tape& tape, const TapedParams& taped) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(taped.ids.size());
    for (const auto& [name, id] : taped.ids) {
        out.emplace_back(name, tape.grad(id));
    }
    return out;
}

}  // namespace peta::numerics
