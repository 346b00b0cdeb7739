// SPDX-License-Identifier: Apache-2.0

#include "cnet/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "cnet/common.hpp"

namespace cnet::kernels {

const Ops& scalar_ops();
const Ops& avx2_ops();

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    if (avx2_ops().vecmat_acc == nullptr) return false;  // built without -mavx2
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const Ops& ops(Isa isa) {
    if (isa == Isa::Scalar) return scalar_ops();
    if (!cpu_has_avx2()) throw ConfigError("avx2 kernels requested but CPU lacks AVX2");
    return avx2_ops();
}

namespace {

Isa detect() {
    if (const char* env = std::getenv("CNET_ISA")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!cpu_has_avx2()) throw ConfigError("CNET_ISA=avx2 but CPU lacks AVX2");
            return Isa::Avx2;
        }
        throw ConfigError(std::string("unknown CNET_ISA value: ") + env);
    }
    return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<int> forced{-1};

}  // namespace

Isa active_isa() {
    int f = forced.load(std::memory_order_relaxed);
    if (f >= 0) return Isa(f);
    static const Isa detected = detect();
    return detected;
}

const Ops& active() { return ops(active_isa()); }

void force_isa(Isa isa) {
    if (isa == Isa::Avx2 && !cpu_has_avx2())
        throw ConfigError("cannot force avx2 kernels: CPU lacks AVX2");
    forced.store(int(isa), std::memory_order_relaxed);
}

}  // namespace cnet::kernels
