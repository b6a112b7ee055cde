#include "ppseg/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "ppseg/errors.hpp"

namespace ppseg::simd {
namespace {

bool cpu_has_avx2_fma() {
#if PPSEG_BUILD_AVX2 && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* pick_auto() {
#if PPSEG_BUILD_AVX2
    if (cpu_has_avx2_fma()) return &kAvx2Kernels;
#endif
#if PPSEG_BUILD_NEON
    return &kNeonKernels;
#endif
    return &kScalarKernels;
}

const KernelTable* pick_by_name(std::string_view name) {
    if (name == "auto") return pick_auto();
    if (name == "scalar") return &kScalarKernels;
#if PPSEG_BUILD_AVX2
    if (name == "avx2") {
        if (!cpu_has_avx2_fma())
            throw ConfigError("PPSEG_SIMD=avx2 requested but CPU lacks AVX2/FMA");
        return &kAvx2Kernels;
    }
#endif
#if PPSEG_BUILD_NEON
    if (name == "neon") return &kNeonKernels;
#endif
    throw ConfigError("unknown or unavailable SIMD backend: " + std::string(name));
}

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* resolve() {
    if (const char* env = std::getenv("PPSEG_SIMD")) return pick_by_name(env);
    return pick_auto();
}

} // namespace

std::vector<const KernelTable*> available_kernel_tables() {
    std::vector<const KernelTable*> tables{&kScalarKernels};
#if PPSEG_BUILD_AVX2
    if (cpu_has_avx2_fma()) tables.push_back(&kAvx2Kernels);
#endif
#if PPSEG_BUILD_NEON
    tables.push_back(&kNeonKernels);
#endif
    return tables;
}

const KernelTable& kernels() {
    const KernelTable* t = g_active.load(std::memory_order_acquire);
    if (!t) {
        t = resolve();
        g_active.store(t, std::memory_order_release);
    }
    return *t;
}

void select_kernels(std::string_view name) {
    g_active.store(pick_by_name(name), std::memory_order_release);
}

} // namespace ppseg::simd
