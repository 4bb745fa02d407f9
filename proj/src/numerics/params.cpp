// SPDX-License-Identifier: Apache-2.0
#include "peta/numerics/params.hpp"

#include <cstring>

namespace peta::numerics {

bool ParamSet::bit_equal(const ParamSet& other) const {
    if (items_.size() != other.items_.size()) return false;
    for (size_t i = 0; i < items_.size(); ++i) {
        const auto& [name_a, ta] = items_[i];
        const auto& [name_b, tb] = other.items_[i];
        if (name_a != name_b || !ta.same_shape(tb)) return false;
        if (std::memcmp(ta.data(), tb.data(), sizeof(double) * static_cast<size_t>(ta.size())) != 0) {
            return false;
        }
    }
    return true;
}

uint64_t ParamSet::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : items_) {
        h = fnv1a64(name.data(), name.size(), h);
        for (auto d : t.shape()) h = fnv1a64(&d, sizeof(d), h);
        h = fnv1a64(t.data(), sizeof(double) * static_cast<size_t>(t.size()), h);
    }
    return h;
}

}  // namespace peta::numerics
