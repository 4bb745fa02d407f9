// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peta/common.hpp"

namespace peta::numerics {

// Dense row-major float64 tensor. No broadcasting; shapes are always explicit.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(check_shape(shape_)), 0.0);
    }

    Tensor(std::vector<int64_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (check_shape(shape_) != static_cast<int64_t>(data_.size())) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str());
        }
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
    const std::vector<int64_t>& shape() const { return shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2-d accessor, row-major.
    double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const;

    bool all_finite() const;

private:
    static int64_t check_shape(const std::vector<int64_t>& shape);

    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

// [rows x cols] -> [cols x rows]; pure data movement, bit-exact.
Tensor transpose2d(const Tensor& a);

std::string shape_to_str(const std::vector<int64_t>& shape);

}  // namespace peta::numerics
