// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace peta::numerics::kernels {

// Data-parallel inner loops behind the tensor/tape layer. Every backend must
// produce bit-identical results to the scalar reference: same per-element
// operation order, single-rounded mul/add (no FMA contraction), IEEE
// sqrt/div. The equivalence tests assert exact equality, which is what keeps
// training trajectories byte-stable no matter which backend is selected.
struct Ops {
    const char* name;

    // c[i][j] = sum_p a[i][p] * b[p][j], accumulated in increasing p.
    // c is overwritten. Loop order of the reference is (i, p, j).
    void (*matmul)(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

    void (*add)(const double* a, const double* b, double* out, int64_t n);
    void (*sub)(const double* a, const double* b, double* out, int64_t n);
    void (*mul)(const double* a, const double* b, double* out, int64_t n);
    void (*scale)(const double* a, double s, double* out, int64_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, int64_t n);

    // p -= lr * g
    void (*sgd_step)(double* p, const double* g, int64_t n, double lr);

    // Bias-corrected Adam. c1 = 1/(1-b1^t), c2 = 1/(1-b2^t) are precomputed
    // by the caller so the kernel stays elementwise.
    void (*adam_step)(double* p, double* m, double* v, const double* g, int64_t n,
                      double lr, double b1, double b2, double eps, double c1, double c2);
};

// Active backend (auto-selected at startup, PETA_KERNELS env overrides).
const Ops& active();

// Force a backend by name ("scalar", "avx2", "neon"). Throws ConfigError if
// the backend is not compiled in or not supported by this CPU.
void select(const std::string& name);

std::vector<std::string> available();

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
bool avx2_supported();
#endif
#if defined(__aarch64__)
const Ops& neon_ops();
#endif

}  // namespace peta::numerics::kernels
