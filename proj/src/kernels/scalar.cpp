// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstddef>

#include "cnet/kernels.hpp"

namespace cnet::kernels {

namespace {

void vecmat_acc_scalar(double* dst, const double* x, const double* w, int cin, int cout) {
    for (int ci = 0; ci < cin; ++ci) {
        const double xv = x[ci];
        const double* wrow = w + std::size_t(ci) * cout;
        for (int co = 0; co < cout; ++co) dst[co] = dst[co] + xv * wrow[co];
    }
}

void matvec_t_acc_scalar(double* dst, const double* g, const double* w, int cin, int cout) {
    for (int co = 0; co < cout; ++co) {
        const double gv = g[co];
        for (int ci = 0; ci < cin; ++ci)
            dst[ci] = dst[ci] + gv * w[std::size_t(ci) * cout + co];
    }
}

void outer_acc_scalar(double* wg, const double* x, const double* g, int cin, int cout) {
    for (int ci = 0; ci < cin; ++ci) {
        const double xv = x[ci];
        double* row = wg + std::size_t(ci) * cout;
        for (int co = 0; co < cout; ++co) row[co] = row[co] + xv * g[co];
    }
}

void add_inplace_scalar(double* y, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + x[i];
}

void axpy_scalar(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void adam_update_scalar(double* p, const double* g, double* m, double* v, std::size_t n,
                        double lr, double beta1, double beta2, double eps, double bc1,
                        double bc2) {
    const double om1 = 1.0 - beta1;
    const double om2 = 1.0 - beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        m[i] = beta1 * m[i] + om1 * gi;
        v[i] = beta2 * v[i] + om2 * (gi * gi);
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        p[i] = p[i] - lr * (mh / (std::sqrt(vh) + eps));
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops table{
        "scalar",        vecmat_acc_scalar, matvec_t_acc_scalar, outer_acc_scalar,
        add_inplace_scalar, axpy_scalar,    adam_update_scalar,
    };
    return table;
}

}  // namespace cnet::kernels
