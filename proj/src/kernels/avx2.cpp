// SPDX-License-Identifier: Apache-2.0

// AVX2 kernel variants. Compiled with -mavx2; only reached after the runtime
// dispatch has confirmed CPU support. Each loop performs, per output element,
// the same IEEE operation sequence as the scalar reference (mul then add,
// never FMA), so results are bitwise identical to scalar.cpp.

#include "cnet/kernels.hpp"

#ifdef __AVX2__

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace cnet::kernels {

namespace {

void vecmat_acc_avx2(double* dst, const double* x, const double* w, int cin, int cout) {
    const int cv = cout & ~3;
    for (int ci = 0; ci < cin; ++ci) {
        const __m256d xv = _mm256_set1_pd(x[ci]);
        const double* wrow = w + std::size_t(ci) * cout;
        int co = 0;
        for (; co < cv; co += 4) {
            __m256d acc = _mm256_loadu_pd(dst + co);
            acc = _mm256_add_pd(acc, _mm256_mul_pd(xv, _mm256_loadu_pd(wrow + co)));
            _mm256_storeu_pd(dst + co, acc);
        }
        for (; co < cout; ++co) dst[co] = dst[co] + x[ci] * wrow[co];
    }
}

void matvec_t_acc_avx2(double* dst, const double* g, const double* w, int cin, int cout) {
    const int civ = cin & ~3;
    for (int co = 0; co < cout; ++co) {
        const __m256d gv = _mm256_set1_pd(g[co]);
        const double* wcol = w + co;
        int ci = 0;
        for (; ci < civ; ci += 4) {
            const std::size_t base = std::size_t(ci) * cout;
            // Column of w is strided by cout; gather the four lanes explicitly.
            const __m256d wv = _mm256_set_pd(wcol[base + 3u * cout], wcol[base + 2u * cout],
                                             wcol[base + 1u * cout], wcol[base]);
            __m256d acc = _mm256_loadu_pd(dst + ci);
            acc = _mm256_add_pd(acc, _mm256_mul_pd(gv, wv));
            _mm256_storeu_pd(dst + ci, acc);
        }
        for (; ci < cin; ++ci) dst[ci] = dst[ci] + g[co] * w[std::size_t(ci) * cout + co];
    }
}

void outer_acc_avx2(double* wg, const double* x, const double* g, int cin, int cout) {
    const int cv = cout & ~3;
    for (int ci = 0; ci < cin; ++ci) {
        const __m256d xv = _mm256_set1_pd(x[ci]);
        double* row = wg + std::size_t(ci) * cout;
        int co = 0;
        for (; co < cv; co += 4) {
            __m256d acc = _mm256_loadu_pd(row + co);
            acc = _mm256_add_pd(acc, _mm256_mul_pd(xv, _mm256_loadu_pd(g + co)));
            _mm256_storeu_pd(row + co, acc);
        }
        for (; co < cout; ++co) row[co] = row[co] + x[ci] * g[co];
    }
}

void add_inplace_avx2(double* y, const double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = y[i] + x[i];
}

void axpy_avx2(double* y, double a, const double* x, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d acc = _mm256_loadu_pd(y + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, acc);
    }
    for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void adam_update_avx2(double* p, const double* g, double* m, double* v, std::size_t n,
                      double lr, double beta1, double beta2, double eps, double bc1,
                      double bc2) {
    const double om1s = 1.0 - beta1;
    const double om2s = 1.0 - beta2;
    const __m256d b1 = _mm256_set1_pd(beta1), om1 = _mm256_set1_pd(om1s);
    const __m256d b2 = _mm256_set1_pd(beta2), om2 = _mm256_set1_pd(om2s);
    const __m256d c1 = _mm256_set1_pd(bc1), c2 = _mm256_set1_pd(bc2);
    const __m256d lrv = _mm256_set1_pd(lr), epsv = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gi = _mm256_loadu_pd(g + i);
        __m256d mi = _mm256_loadu_pd(m + i);
        __m256d vi = _mm256_loadu_pd(v + i);
        mi = _mm256_add_pd(_mm256_mul_pd(b1, mi), _mm256_mul_pd(om1, gi));
        vi = _mm256_add_pd(_mm256_mul_pd(b2, vi), _mm256_mul_pd(om2, _mm256_mul_pd(gi, gi)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mh = _mm256_div_pd(mi, c1);
        const __m256d vh = _mm256_div_pd(vi, c2);
        const __m256d den = _mm256_add_pd(_mm256_sqrt_pd(vh), epsv);
        const __m256d step = _mm256_mul_pd(lrv, _mm256_div_pd(mh, den));
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
    }
    for (; i < n; ++i) {
        const double gi = g[i];
        m[i] = beta1 * m[i] + om1s * gi;
        v[i] = beta2 * v[i] + om2s * (gi * gi);
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        p[i] = p[i] - lr * (mh / (std::sqrt(vh) + eps));
    }
}

}  // namespace

const Ops& avx2_ops() {
    static const Ops table{
        "avx2",        vecmat_acc_avx2, matvec_t_acc_avx2, outer_acc_avx2,
        add_inplace_avx2, axpy_avx2,    adam_update_avx2,
    };
    return table;
}

}  // namespace cnet::kernels

#else

namespace cnet::kernels {
// AVX2 compiled out; dispatch (kernels.cpp) never hands this table out
// because cpu_has_avx2() reports false.
const Ops& avx2_ops() {
    static const Ops table{"avx2-unavailable", nullptr, nullptr, nullptr,
                           nullptr,            nullptr, nullptr};
    return table;
}
}  // namespace cnet::kernels

#endif  // __AVX2__
