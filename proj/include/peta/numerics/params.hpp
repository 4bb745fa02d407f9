// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "peta/common.hpp"
#include "peta/numerics/tensor.hpp"

namespace peta::numerics {

// Named parameter tensors with a stable, insertion-defined order. Iteration
// order is part of the determinism contract (checkpoints and optimizer
// traversals follow it).
class ParamSet {
public:
    void add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(t));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const Tensor& get(const std::string& name) const { return items_[find(name)].second; }
    Tensor& get(const std::string& name) { return items_[find(name)].second; }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }

    size_t count() const { return items_.size(); }

    // Total number of scalar parameters.
    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : items_) n += t.size();
        return n;
    }

    // Subset whose names start with `prefix` (names preserved).
    ParamSet subset(const std::string& prefix) const {
        ParamSet out;
        for (const auto& [name, t] : items_) {
            if (name.rfind(prefix, 0) == 0) out.add(name, t);
        }
        return out;
    }

    // Exact bit-level equality of names, shapes and payloads.
    bool bit_equal(const ParamSet& other) const;

    // Content hash over names, shapes and raw float64 bits, in order.
    uint64_t content_hash() const;

private:
    size_t find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter name '" + name + "'");
        return it->second;
    }

    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace peta::numerics
