// SPDX-License-Identifier: Apache-2.0
//
// NEON kernels, 2 doubles per lane. Same contract as the AVX2 backend:
// separate mul/add (vmlaq would fuse) so results stay bit-identical to the
// scalar reference.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "peta/numerics/kernels.hpp"

namespace peta::numerics::kernels {
namespace {

void matmul_neon(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    const int64_t n2 = n - (n % 2);
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const float64x2_t avv = vdupq_n_f64(av);
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n2; j += 2) {
                float64x2_t cv = vld1q_f64(crow + j);
                cv = vaddq_f64(cv, vmulq_f64(avv, vld1q_f64(brow + j)));
                vst1q_f64(crow + j, cv);
            }
            for (int64_t j = n2; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void add_neon(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_neon(const double* a, double s, double* out, int64_t n) {
    const float64x2_t sv = vdupq_n_f64(s);
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), sv));
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_neon(double alpha, const double* x, double* y, int64_t n) {
    const float64x2_t av = vdupq_n_f64(alpha);
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t yv = vld1q_f64(y + i);
        yv = vaddq_f64(yv, vmulq_f64(av, vld1q_f64(x + i)));
        vst1q_f64(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void sgd_step_neon(double* p, const double* g, int64_t n, double lr) {
    const float64x2_t lrv = vdupq_n_f64(lr);
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t pv = vld1q_f64(p + i);
        pv = vsubq_f64(pv, vmulq_f64(lrv, vld1q_f64(g + i)));
        vst1q_f64(p + i, pv);
    }
    for (; i < n; ++i) p[i] -= lr * g[i];
}

void adam_step_neon(double* p, double* m, double* v, const double* g, int64_t n,
                    double lr, double b1, double b2, double eps, double c1, double c2) {
    const float64x2_t b1v = vdupq_n_f64(b1);
    const float64x2_t b2v = vdupq_n_f64(b2);
    const float64x2_t omb1 = vdupq_n_f64(1.0 - b1);
    const float64x2_t omb2 = vdupq_n_f64(1.0 - b2);
    const float64x2_t c1v = vdupq_n_f64(c1);
    const float64x2_t c2v = vdupq_n_f64(c2);
    const float64x2_t lrv = vdupq_n_f64(lr);
    const float64x2_t epsv = vdupq_n_f64(eps);
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t gv = vld1q_f64(g + i);
        float64x2_t mv = vld1q_f64(m + i);
        float64x2_t vv = vld1q_f64(v + i);
        mv = vaddq_f64(vmulq_f64(b1v, mv), vmulq_f64(omb1, gv));
        vv = vaddq_f64(vmulq_f64(b2v, vv), vmulq_f64(omb2, vmulq_f64(gv, gv)));
        vst1q_f64(m + i, mv);
        vst1q_f64(v + i, vv);
        const float64x2_t mhat = vmulq_f64(mv, c1v);
        const float64x2_t vhat = vmulq_f64(vv, c2v);
        const float64x2_t denom = vaddq_f64(vsqrtq_f64(vhat), epsv);
        float64x2_t pv = vld1q_f64(p + i);
        pv = vsubq_f64(pv, vmulq_f64(lrv, vdivq_f64(mhat, denom)));
        vst1q_f64(p + i, pv);
    }
    const double one_minus_b1 = 1.0 - b1;
    const double one_minus_b2 = 1.0 - b2;
    for (; i < n; ++i) {
        m[i] = b1 * m[i] + one_minus_b1 * g[i];
        v[i] = b2 * v[i] + one_minus_b2 * (g[i] * g[i]);
        const double mhat = m[i] * c1;
        const double vhat = v[i] * c2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
    }
}

}  // namespace

const Ops& neon_ops() {
    static const Ops ops = {
        "neon",     matmul_neon, add_neon,      sub_neon,       mul_neon,
        scale_neon, axpy_neon,   sgd_step_neon, adam_step_neon,
    };
    return ops;
}

}  // namespace peta::numerics::kernels

#endif  // __aarch64__
