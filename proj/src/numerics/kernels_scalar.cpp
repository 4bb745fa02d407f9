// SPDX-License-Identifier: Apache-2.0
//
// Scalar reference kernels. These define the numerical contract; the SIMD
// backends must match them bit for bit. Keep the loop structure stable: the
// matmul accumulation order (i, p, j) is part of the contract.

#include <cmath>

#include "peta/numerics/kernels.hpp"

namespace peta::numerics::kernels {
namespace {

void matmul_scalar(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

void add_scalar(const double* a, const double* b, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy_scalar(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void sgd_step_scalar(double* p, const double* g, int64_t n, double lr) {
    for (int64_t i = 0; i < n; ++i) p[i] -= lr * g[i];
}

void adam_step_scalar(double* p, double* m, double* v, const double* g, int64_t n,
                      double lr, double b1, double b2, double eps, double c1, double c2) {
    const double one_minus_b1 = 1.0 - b1;
    const double one_minus_b2 = 1.0 - b2;
    for (int64_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + one_minus_b1 * g[i];
        v[i] = b2 * v[i] + one_minus_b2 * (g[i] * g[i]);
        const double mhat = m[i] * c1;
        const double vhat = v[i] * c2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar",   matmul_scalar, add_scalar,      sub_scalar,       mul_scalar,
        scale_scalar, axpy_scalar, sgd_step_scalar, adam_step_scalar,
    };
    return ops;
}

}  // namespace peta::numerics::kernels
