// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "peta/numerics/kernels.hpp"
#include "peta/numerics/rng.hpp"
#include "peta/numerics/tensor.hpp"

using namespace peta::numerics;

namespace {

std::vector<double> random_vec(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// The other backends must reproduce the scalar reference exactly, including
// ragged tails, so sizes straddle the vector width on purpose.
const std::vector<int64_t> kSizes = {1, 2, 3, 4, 5, 7, 8, 15, 16, 33, 100};

void check_backend_equivalence(const kernels::Ops& ref, const kernels::Ops& alt) {
    for (int64_t n : kSizes) {
        auto a = random_vec(static_cast<size_t>(n), 11 + static_cast<uint64_t>(n));
        auto b = random_vec(static_cast<size_t>(n), 22 + static_cast<uint64_t>(n));
        std::vector<double> r1(static_cast<size_t>(n)), r2(static_cast<size_t>(n));

        ref.add(a.data(), b.data(), r1.data(), n);
        alt.add(a.data(), b.data(), r2.data(), n);
        CHECK(bits_equal(r1, r2));

        ref.sub(a.data(), b.data(), r1.data(), n);
        alt.sub(a.data(), b.data(), r2.data(), n);
        CHECK(bits_equal(r1, r2));

        ref.mul(a.data(), b.data(), r1.data(), n);
        alt.mul(a.data(), b.data(), r2.data(), n);
        CHECK(bits_equal(r1, r2));

        ref.scale(a.data(), 0.37, r1.data(), n);
        alt.scale(a.data(), 0.37, r2.data(), n);
        CHECK(bits_equal(r1, r2));

        auto y1 = b, y2 = b;
        ref.axpy(-1.75, a.data(), y1.data(), n);
        alt.axpy(-1.75, a.data(), y2.data(), n);
        CHECK(bits_equal(y1, y2));

        auto p1 = a, p2 = a;
        ref.sgd_step(p1.data(), b.data(), n, 0.05);
        alt.sgd_step(p2.data(), b.data(), n, 0.05);
        CHECK(bits_equal(p1, p2));

        auto m1 = random_vec(static_cast<size_t>(n), 33), m2 = m1;
        auto v1 = random_vec(static_cast<size_t>(n), 44), v2 = v1;
        for (auto& x : v1) x = x * x;
        v2 = v1;
        p1 = a;
        p2 = a;
        ref.adam_step(p1.data(), m1.data(), v1.data(), b.data(), n, 1e-3, 0.9, 0.999, 1e-8, 1.0 / 0.1, 1.0 / 0.001);
        alt.adam_step(p2.data(), m2.data(), v2.data(), b.data(), n, 1e-3, 0.9, 0.999, 1e-8, 1.0 / 0.1, 1.0 / 0.001);
        CHECK(bits_equal(p1, p2));
        CHECK(bits_equal(m1, m2));
        CHECK(bits_equal(v1, v2));
    }

    // matmul over shapes with ragged columns
    const std::vector<std::array<int64_t, 3>> shapes = {{1, 1, 1}, {2, 3, 4}, {4, 5, 3}, {7, 7, 7}, {5, 9, 13}, {16, 32, 33}};
    for (auto [m, k, n] : shapes) {
        auto a = random_vec(static_cast<size_t>(m * k), 55);
        auto b = random_vec(static_cast<size_t>(k * n), 66);
        std::vector<double> c1(static_cast<size_t>(m * n)), c2(static_cast<size_t>(m * n));
        ref.matmul(a.data(), b.data(), c1.data(), m, k, n);
        alt.matmul(a.data(), b.data(), c2.data(), m, k, n);
        CHECK(bits_equal(c1, c2));
    }
}

}  // namespace

TEST_CASE("scalar backend is always available") {
    auto names = kernels::available();
    CHECK(std::find(names.begin(), names.end(), "scalar") != names.end());
    kernels::select("scalar");
    CHECK(std::string(kernels::active().name) == "scalar");
}

TEST_CASE("unknown backend is rejected") {
    CHECK_THROWS_AS(kernels::select("sse9"), peta::ConfigError);
}

#if defined(__x86_64__) || defined(_M_X64)
TEST_CASE("avx2 backend matches scalar bit for bit") {
    if (!kernels::avx2_supported()) {
        MESSAGE("avx2 not supported on this CPU; skipping");
        return;
    }
    check_backend_equivalence(kernels::scalar_ops(), kernels::avx2_ops());
}
#endif

#if defined(__aarch64__)
TEST_CASE("neon backend matches scalar bit for bit") {
    check_backend_equivalence(kernels::scalar_ops(), kernels::neon_ops());
}
#endif

TEST_CASE("matmul agrees with the naive triple-loop oracle") {
    // independent (i, j, p) accumulation
    const int64_t m = 4, k = 5, n = 3;
    auto a = random_vec(static_cast<size_t>(m * k), 7);
    auto b = random_vec(static_cast<size_t>(k * n), 8);
    std::vector<double> expect(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[static_cast<size_t>(i * k + p)] * b[static_cast<size_t>(p * n + j)];
            expect[static_cast<size_t>(i * n + j)] = acc;
        }
    }
    for (const auto& name : kernels::available()) {
        kernels::select(name);
        std::vector<double> c(static_cast<size_t>(m * n));
        kernels::active().matmul(a.data(), b.data(), c.data(), m, k, n);
        for (size_t i = 0; i < c.size(); ++i) {
            CHECK(std::abs(c[i] - expect[i]) < 1e-12);
        }
    }
    kernels::select("scalar");
}
