// SPDX-License-Identifier: Apache-2.0
//
// AVX2 kernels, 4 doubles per lane. This translation unit is the only one
// compiled with -mavx2; callers go through the dispatch table after a cpuid
// probe. No FMA: mul followed by add keeps each element's rounding identical
// to the scalar reference, so scalar and AVX2 runs are bit-identical.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "peta/numerics/kernels.hpp"

namespace peta::numerics::kernels {
namespace {

void matmul_avx2(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    const int64_t n4 = n - (n % 4);
    for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (int64_t j = 0; j < n4; j += 4) _mm256_storeu_pd(crow + j, _mm256_setzero_pd());
        for (int64_t j = n4; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const __m256d avv = _mm256_set1_pd(av);
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n4; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_add_pd(cv, _mm256_mul_pd(avv, _mm256_loadu_pd(brow + j)));
                _mm256_storeu_pd(crow + j, cv);
            }
            for (int64_t j = n4; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void add_avx2(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double s, double* out, int64_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
    }
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_avx2(double alpha, const double* x, double* y, int64_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void sgd_step_avx2(double* p, const double* g, int64_t n, double lr) {
    const __m256d lrv = _mm256_set1_pd(lr);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d pv = _mm256_loadu_pd(p + i);
        pv = _mm256_sub_pd(pv, _mm256_mul_pd(lrv, _mm256_loadu_pd(g + i)));
        _mm256_storeu_pd(p + i, pv);
    }
    for (; i < n; ++i) p[i] -= lr * g[i];
}

void adam_step_avx2(double* p, double* m, double* v, const double* g, int64_t n,
                    double lr, double b1, double b2, double eps, double c1, double c2) {
    const __m256d b1v = _mm256_set1_pd(b1);
    const __m256d b2v = _mm256_set1_pd(b2);
    const __m256d omb1 = _mm256_set1_pd(1.0 - b1);
    const __m256d omb2 = _mm256_set1_pd(1.0 - b2);
    const __m256d c1v = _mm256_set1_pd(c1);
    const __m256d c2v = _mm256_set1_pd(c2);
    const __m256d lrv = _mm256_set1_pd(lr);
    const __m256d epsv = _mm256_set1_pd(eps);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_loadu_pd(m + i);
        __m256d vv = _mm256_loadu_pd(v + i);
        mv = _mm256_add_pd(_mm256_mul_pd(b1v, mv), _mm256_mul_pd(omb1, gv));
        vv = _mm256_add_pd(_mm256_mul_pd(b2v, vv), _mm256_mul_pd(omb2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d mhat = _mm256_mul_pd(mv, c1v);
        const __m256d vhat = _mm256_mul_pd(vv, c2v);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
        __m256d pv = _mm256_loadu_pd(p + i);
        pv = _mm256_sub_pd(pv, _mm256_mul_pd(lrv, _mm256_div_pd(mhat, denom)));
        _mm256_storeu_pd(p + i, pv);
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

const Ops& avx2_ops() {
    static const Ops ops = {
        "avx2",     matmul_avx2, add_avx2,      sub_avx2,       mul_avx2,
        scale_avx2, axpy_avx2,   sgd_step_avx2, adam_step_avx2,
    };
    return ops;
}

bool avx2_supported() { return __builtin_cpu_supports("avx2") != 0; }

}  // namespace peta::numerics::kernels

#endif  // x86_64
