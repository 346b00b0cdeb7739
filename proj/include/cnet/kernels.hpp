// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace cnet::kernels {

// Arithmetic inner loops of the sparse-conv substrate. Every routine has a
// scalar reference implementation and an AVX2 variant selected at runtime.
// The two paths are required to produce BITWISE identical results: the codec
// derives coding decisions from these values, so a stream written on one
// path must decode on the other. The AVX2 variants therefore use separate
// mul/add (no FMA) and keep the reference accumulation order per element.
//
// Accumulation-order contracts (part of the numeric interface):
//   vecmat_acc    dst[co] += sum_ci x[ci]*w[ci*cout+co], ci ascending
//   matvec_t_acc  dst[ci] += sum_co g[co]*w[ci*cout+co], co ascending
//   outer_acc     wg[ci*cout+co] += x[ci]*g[co]
struct Ops {
    const char* name;
    void (*vecmat_acc)(double* dst, const double* x, const double* w, int cin, int cout);
    void (*matvec_t_acc)(double* dst, const double* g, const double* w, int cin, int cout);
    void (*outer_acc)(double* wg, const double* x, const double* g, int cin, int cout);
    void (*add_inplace)(double* y, const double* x, std::size_t n);
    void (*axpy)(double* y, double a, const double* x, std::size_t n);
    // In-place Adam step with externally supplied bias corrections
    // bc1 = 1-beta1^t, bc2 = 1-beta2^t.
    void (*adam_update)(double* p, const double* g, double* m, double* v, std::size_t n,
                        double lr, double beta1, double beta2, double eps, double bc1,
                        double bc2);
};

enum class Isa { Scalar, Avx2 };

bool cpu_has_avx2();

// Kernel table for a specific ISA. Requesting Avx2 on a CPU without it throws.
const Ops& ops(Isa isa);

// Runtime-selected table: AVX2 when available, scalar otherwise.
// The environment variable CNET_ISA=scalar|avx2 overrides the choice.
const Ops& active();
Isa active_isa();

// Test hook; overrides detection for the rest of the process.
void force_isa(Isa isa);

}  // namespace cnet::kernels
