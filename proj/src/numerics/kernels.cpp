// SPDX-License-Identifier: Apache-2.0
#include "peta/numerics/kernels.hpp"

#include <cstdlib>

#include "peta/common.hpp"

namespace peta::numerics::kernels {
namespace {

const Ops* g_active = nullptr;

const Ops* resolve(const std::string& name) {
    if (name == "scalar") return &scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
    if (name == "avx2") {
        if (!avx2_supported()) throw ConfigError("kernel backend 'avx2' not supported by this CPU");
        return &avx2_ops();
    }
#endif
#if defined(__aarch64__)
    if (name == "neon") return &neon_ops();
#endif
    throw ConfigError("unknown kernel backend '" + name + "'");
}

const Ops* auto_select() {
    if (const char* env = std::getenv("PETA_KERNELS")) {
        return resolve(env);
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) return &avx2_ops();
#endif
#if defined(__aarch64__)
    return &neon_ops();
#endif
    return &scalar_ops();
}

}  // namespace

const Ops& active() {
    if (!g_active) g_active = auto_select();
    return *g_active;
}

void select(const std::string& name) { g_active = resolve(name); }

std::vector<std::string> available() {
    std::vector<std::string> out = {"scalar"};
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) out.push_back("avx2");
#endif
#if defined(__aarch64__)
    out.push_back("neon");
#endif
    return out;
}

}  // namespace peta::numerics::kernels
