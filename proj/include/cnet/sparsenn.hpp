// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "cnet/pcloud.hpp"

namespace cnet {

// Dense row-major matrix of doubles. Rows correspond to sparse-tensor
// coordinates (or grid voxels), columns to channels.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(size_t(r) * size_t(c), 0.0) {}
    double* row(int i) { return v.data() + size_t(i) * cols; }
    const double* row(int i) const { return v.data() + size_t(i) * cols; }
    double& at(int r, int c) { return v[size_t(r) * cols + c]; }
    double at(int r, int c) const { return v[size_t(r) * cols + c]; }
    size_t count() const { return v.size(); }
};

struct Offset3 {
    int dx = 0, dy = 0, dz = 0;
};

// The k^3 kernel offsets in raster order of (dx,dy,dz) over [-k/2, k/2]^3;
// the center (0,0,0) sits at index (k^3-1)/2.
std::vector<Offset3> kernel_offsets(int k);

enum class MaskType : uint8_t { None = 0, TypeA = 1, TypeB = 2 };

// Offset indices whose weights are forced to zero. With the center at index
// c: TypeA zeroes every index >= c (inputs at or after the output position),
// TypeB zeroes indices > c (keeps the self connection). k must be odd.
std::vector<int> mask_offsets(int k, MaskType mask);

// Complement of mask_offsets, ascending: the offsets a convolution actually
// iterates. Masked offsets are skipped structurally, so masked inputs
// contribute nothing to an output row, not even a signed zero.
std::vector<int> active_offsets(int k, MaskType mask);

// Per-offset (input-row, output-row) index pairs. A pair (i,o) exists at
// offset t iff coords_in[i] == coords_out[o] + kernel_offsets(k)[t]; with the
// type A/B masks above this orients the kernel so that kept offsets reach
// only inputs at earlier (or equal, type B) raster positions.
struct KernelMap {
    int k = 0;
    uint32_t n_in = 0, n_out = 0;
    struct Pairs {
        std::vector<uint32_t> in, out;
    };
    std::vector<Pairs> offsets;  // size k^3; unbuilt offsets stay empty
};

// General builder: hash lookup of coords_in per output and offset. Both coord
// lists must be raster-sorted and duplicate-free; k odd. `only` restricts the
// build to the given offset indices (nullptr = all k^3).
KernelMap build_kernel_map(std::span<const VoxelCoord> coords_in,
                           std::span<const VoxelCoord> coords_out, int k,
                           const std::vector<int>* only = nullptr);

// coords_out is the full d^3 grid in raster order; output rows are computed
// arithmetically from the input coordinates (no hash).
KernelMap build_kernel_map_to_grid(std::span<const VoxelCoord> coords_in, int d, int k,
                                   const std::vector<int>* only = nullptr);

// Both sides are the full d^3 grid.
KernelMap build_kernel_map_grid_grid(int d, int k, const std::vector<int>* only = nullptr);

// Flat parameter/gradient arena shared by a model's layers.
struct ParamStore {
    std::vector<double> w;
    std::vector<double> g;

    size_t alloc(size_t n) {
        size_t off = w.size();
        w.resize(off + n, 0.0);
        return off;
    }
    void enable_grad() { g.assign(w.size(), 0.0); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
    bool has_grad() const { return g.size() == w.size(); }
};

struct Slice {
    size_t off = 0;
    size_t count = 0;
};

// Sparse convolution parameters: weight stack ordered offset-major
// (k^3 x cin x cout) plus bias. Masked offset slices are identically zero
// and stay zero through training.
struct ConvLayer {
    int k = 1, cin = 0, cout = 0;
    MaskType mask = MaskType::None;
    Slice weights, bias;
    std::vector<int> active;  // unmasked offset indices, ascending

    const double* w(const ParamStore& s, int offset) const {
        return s.w.data() + weights.off + size_t(offset) * cin * cout;
    }
    double* wg(ParamStore& s, int offset) const {
        return s.g.data() + weights.off + size_t(offset) * cin * cout;
    }
};

ConvLayer make_conv(ParamStore& store, int k, int cin, int cout, MaskType mask);

// Centered uniform fan-in init over the active offsets; masked slices and
// bias stay zero.
void init_conv_uniform(ConvLayer& layer, ParamStore& store, std::mt19937_64& rng);

// Re-asserts the mask after an optimizer step.
void rezero_masked(const ConvLayer& layer, ParamStore& store);

// Reverse-mode tape over Mat-valued nodes. Construction order is the
// topological order; backward() walks it in reverse. A graph built with
// with_grad=false records no closures and allocates no gradient storage.
class Graph {
public:
    Graph(const ParamStore* store, bool with_grad);

    int input(Mat m);
    int conv(int x, const ConvLayer& layer, const KernelMap& km);
    int elu(int x);
    int add(int a, int b);
    int scale(int x, double c);
    int sparse_to_dense(int x, std::span<const VoxelCoord> coords, int d);
    // Per-row -log2 softmax probability of the target symbol, in bits (Nx1).
    int softmax_ce_rows(int logits, std::span<const uint16_t> targets);
    int mean(int x);  // 1x1

    void backward(int node);

    const Mat& value(int node) const { return nodes_[node].val; }
    Mat& grad(int node) { return nodes_[node].grad; }
    ParamStore* mutable_store() { return const_cast<ParamStore*>(store_); }
    bool with_grad() const { return with_grad_; }

private:
    struct NodeRec {
        Mat val;
        Mat grad;
        std::function<void(Graph&)> back;
    };
    int push(Mat val, std::function<void(Graph&)> back);

    std::vector<NodeRec> nodes_;
    const ParamStore* store_;
    bool with_grad_;
};

// Numerically stable softmax of one logits row; deterministic summation
// order. Shared by training, encoding, and decoding so that all paths derive
// bit-identical probabilities.
void softmax_fill(const double* logits, int k, double* out);

// elu with alpha = 1.
inline double elu_value(double x) { return x > 0 ? x : std::expm1(x); }

struct AdamState {
    std::vector<double> m, v;
    int64_t t = 0;

    void init(size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        t = 0;
    }
};

// Standard Adam update (beta1=0.9, beta2=0.999, eps=1e-8) over the store's
// flat parameters/gradients.
void adam_step(ParamStore& store, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Stepped exponential decay: base * gamma^floor(epoch/step).
double lr_schedule(int epoch, double base = 15e-5, double gamma = 0.95, int step = 2);

// Central finite differences over every store parameter and every entry of
// the registered input matrices, against one reverse-mode pass. `build`
// constructs a scalar loss node and appends the node ids of its inputs (in
// the order of `inputs`). Returns the maximum relative error.
double grad_check(ParamStore& store, std::span<Mat* const> inputs,
                  const std::function<int(Graph&, std::vector<int>&)>& build,
                  double eps = 1e-5);

}  // namespace cnet
