// SPDX-License-Identifier: Apache-2.0
#include "peta/numerics/tensor.hpp"

#include <cmath>
#include <cstdio>

namespace peta {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace peta

namespace peta::numerics {

std::string shape_to_str(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

std::string Tensor::shape_str() const { return shape_to_str(shape_); }

int64_t Tensor::check_shape(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_to_str(shape));
        n *= d;
    }
    return n;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose2d expects rank-2 tensor, got " + a.shape_str());
    const int64_t r = a.dim(0), c = a.dim(1);
    Tensor out({c, r});
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

}  // namespace peta::numerics
