// SPDX-License-Identifier: Apache-2.0

#include "cnet/sparsenn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>

#include "cnet/kernels.hpp"

namespace cnet {

namespace {

constexpr double kLn2 = 0.6931471805599453;

uint64_t pack(const VoxelCoord& c) {
    return (uint64_t(c.x) << 32) | (uint64_t(c.y) << 16) | c.z;
}

}  // namespace

std::vector<Offset3> kernel_offsets(int k) {
    if (k < 1 || k % 2 == 0) throw ConfigError("kernel size must be odd and positive");
    const int r = k / 2;
    std::vector<Offset3> offs;
    offs.reserve(size_t(k) * k * k);
    for (int dx = -r; dx <= r; ++dx)
        for (int dy = -r; dy <= r; ++dy)
            for (int dz = -r; dz <= r; ++dz) offs.push_back({dx, dy, dz});
    return offs;
}

std::vector<int> mask_offsets(int k, MaskType mask) {
    if (k < 1 || k % 2 == 0) throw ConfigError("kernel size must be odd and positive");
    const int n = k * k * k;
    const int center = (n - 1) / 2;
    std::vector<int> zeroed;
    if (mask == MaskType::None) return zeroed;
    for (int i = (mask == MaskType::TypeA) ? center : center + 1; i < n; ++i) zeroed.push_back(i);
    return zeroed;
}

std::vector<int> active_offsets(int k, MaskType mask) {
    const int n = k * k * k;
    const int center = (n - 1) / 2;
    int end = n;
    if (mask == MaskType::TypeA) end = center;
    if (mask == MaskType::TypeB) end = center + 1;
    std::vector<int> act(end);
    for (int i = 0; i < end; ++i) act[i] = i;
    return act;
}

KernelMap build_kernel_map(std::span<const VoxelCoord> coords_in,
                           std::span<const VoxelCoord> coords_out, int k,
                           const std::vector<int>* only) {
    const auto offs = kernel_offsets(k);
    KernelMap km;
    km.k = k;
    km.n_in = uint32_t(coords_in.size());
    km.n_out = uint32_t(coords_out.size());
    km.offsets.resize(offs.size());

    std::unordered_map<uint64_t, uint32_t> lookup;
    lookup.reserve(coords_in.size() * 2);
    for (uint32_t i = 0; i < coords_in.size(); ++i) lookup.emplace(pack(coords_in[i]), i);

    auto build_one = [&](int t) {
        const Offset3& d = offs[t];
        auto& pairs = km.offsets[t];
        for (uint32_t o = 0; o < coords_out.size(); ++o) {
            const VoxelCoord& c = coords_out[o];
            const int64_t ix = int64_t(c.x) + d.dx;
            const int64_t iy = int64_t(c.y) + d.dy;
            const int64_t iz = int64_t(c.z) + d.dz;
            if (ix < 0 || iy < 0 || iz < 0) continue;
            auto it = lookup.find(pack({uint32_t(ix), uint32_t(iy), uint32_t(iz)}));
            if (it == lookup.end()) continue;
            pairs.in.push_back(it->second);
            pairs.out.push_back(o);
        }
    };
    if (only) {
        for (int t : *only) build_one(t);
    } else {
        for (int t = 0; t < int(offs.size()); ++t) build_one(t);
    }
    return km;
}

KernelMap build_kernel_map_to_grid(std::span<const VoxelCoord> coords_in, int d, int k,
                                   const std::vector<int>* only) {
    const auto offs = kernel_offsets(k);
    KernelMap km;
    km.k = k;
    km.n_in = uint32_t(coords_in.size());
    km.n_out = uint32_t(uint64_t(d) * d * d);
    km.offsets.resize(offs.size());

    auto build_one = [&](int t) {
        const Offset3& del = offs[t];
        auto& pairs = km.offsets[t];
        for (uint32_t i = 0; i < coords_in.size(); ++i) {
            // in = out + delta, so this input feeds the output at in - delta.
            const VoxelCoord& c = coords_in[i];
            const int64_t ox = int64_t(c.x) - del.dx;
            const int64_t oy = int64_t(c.y) - del.dy;
            const int64_t oz = int64_t(c.z) - del.dz;
            if (ox < 0 || oy < 0 || oz < 0 || ox >= d || oy >= d || oz >= d) continue;
            pairs.in.push_back(i);
            pairs.out.push_back(uint32_t((ox * d + oy) * d + oz));
        }
    };
    if (only) {
        for (int t : *only) build_one(t);
    } else {
        for (int t = 0; t < int(offs.size()); ++t) build_one(t);
    }
    return km;
}

KernelMap build_kernel_map_grid_grid(int d, int k, const std::vector<int>* only) {
    const auto offs = kernel_offsets(k);
    KernelMap km;
    km.k = k;
    km.n_in = km.n_out = uint32_t(uint64_t(d) * d * d);
    km.offsets.resize(offs.size());

    auto build_one = [&](int t) {
        const Offset3& del = offs[t];
        auto& pairs = km.offsets[t];
        const int x0 = std::max(0, -del.dx), x1 = std::min(d, d - del.dx);
        const int y0 = std::max(0, -del.dy), y1 = std::min(d, d - del.dy);
        const int z0 = std::max(0, -del.dz), z1 = std::min(d, d - del.dz);
        for (int x = x0; x < x1; ++x)
            for (int y = y0; y < y1; ++y)
                for (int z = z0; z < z1; ++z) {
                    pairs.out.push_back(uint32_t((int64_t(x) * d + y) * d + z));
                    pairs.in.push_back(
                        uint32_t((int64_t(x + del.dx) * d + y + del.dy) * d + z + del.dz));
                }
    };
    if (only) {
        for (int t : *only) build_one(t);
    } else {
        for (int t = 0; t < int(offs.size()); ++t) build_one(t);
    }
    return km;
}

ConvLayer make_conv(ParamStore& store, int k, int cin, int cout, MaskType mask) {
    ConvLayer l;
    l.k = k;
    l.cin = cin;
    l.cout = cout;
    l.mask = mask;
    const size_t nw = size_t(k) * k * k * cin * cout;
    l.weights = {store.alloc(nw), nw};
    l.bias = {store.alloc(size_t(cout)), size_t(cout)};
    l.active = active_offsets(k, mask);
    return l;
}

void init_conv_uniform(ConvLayer& layer, ParamStore& store, std::mt19937_64& rng) {
    const double fan_in = double(layer.cin) * double(layer.active.size());
    const double a = std::sqrt(3.0 / std::max(1.0, fan_in));
    for (int t : layer.active) {
        double* w = store.w.data() + layer.weights.off + size_t(t) * layer.cin * layer.cout;
        for (int i = 0; i < layer.cin * layer.cout; ++i) w[i] = uniform_in(rng, -a, a);
    }
}

void rezero_masked(const ConvLayer& layer, ParamStore& store) {
    const auto zeroed = mask_offsets(layer.k, layer.mask);
    for (int t : zeroed) {
        double* w = store.w.data() + layer.weights.off + size_t(t) * layer.cin * layer.cout;
        std::fill(w, w + size_t(layer.cin) * layer.cout, 0.0);
    }
}

Graph::Graph(const ParamStore* store, bool with_grad) : store_(store), with_grad_(with_grad) {
    if (with_grad_ && store_ && !store_->has_grad())
        throw ConfigError("gradient graph requires ParamStore::enable_grad()");
}

int Graph::push(Mat val, std::function<void(Graph&)> back) {
    NodeRec rec;
    if (with_grad_) rec.grad = Mat(val.rows, val.cols);
    rec.val = std::move(val);
    if (with_grad_) rec.back = std::move(back);
    nodes_.push_back(std::move(rec));
    return int(nodes_.size()) - 1;
}

int Graph::input(Mat m) { return push(std::move(m), nullptr); }

int Graph::conv(int x, const ConvLayer& layer, const KernelMap& km) {
    const Mat& xv = nodes_[x].val;
    if (xv.cols != layer.cin) throw ShapeError("conv input channel mismatch");
    if (uint32_t(xv.rows) != km.n_in) throw ShapeError("conv input rows do not match kernel map");

    const auto& K = kernels::active();
    Mat y(int(km.n_out), layer.cout);
    const double* bias = store_->w.data() + layer.bias.off;
    for (int r = 0; r < y.rows; ++r)
        std::memcpy(y.row(r), bias, sizeof(double) * size_t(layer.cout));
    for (int t : layer.active) {
        const auto& p = km.offsets[t];
        const double* w = layer.w(*store_, t);
        for (size_t j = 0; j < p.in.size(); ++j)
            K.vecmat_acc(y.row(int(p.out[j])), xv.row(int(p.in[j])), w, layer.cin, layer.cout);
    }

    const ConvLayer* lp = &layer;
    const KernelMap* kp = &km;
    int yid = push(std::move(y), nullptr);
    if (with_grad_) {
        nodes_[yid].back = [x, yid, lp, kp](Graph& g) {
            const auto& K2 = kernels::active();
            const Mat& gy = g.nodes_[yid].grad;
            const Mat& xv2 = g.nodes_[x].val;
            Mat& gx = g.nodes_[x].grad;
            ParamStore* s = g.mutable_store();
            const bool train = s->has_grad() && !s->g.empty();
            if (train) {
                double* gb = s->g.data() + lp->bias.off;
                for (int r = 0; r < gy.rows; ++r) K2.add_inplace(gb, gy.row(r), size_t(lp->cout));
            }
            for (int t : lp->active) {
                const auto& p = kp->offsets[t];
                const double* w = lp->w(*s, t);
                double* wg = train ? lp->wg(*s, t) : nullptr;
                for (size_t j = 0; j < p.in.size(); ++j) {
                    const int i = int(p.in[j]), o = int(p.out[j]);
                    if (train) K2.outer_acc(wg, xv2.row(i), gy.row(o), lp->cin, lp->cout);
                    K2.matvec_t_acc(gx.row(i), gy.row(o), w, lp->cin, lp->cout);
                }
            }
        };
    }
    return yid;
}

int Graph::elu(int x) {
    const Mat& xv = nodes_[x].val;
    Mat y(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.count(); ++i) y.v[i] = elu_value(xv.v[i]);
    int yid = push(std::move(y), nullptr);
    if (with_grad_) {
        nodes_[yid].back = [x, yid](Graph& g) {
            const Mat& gy = g.nodes_[yid].grad;
            const Mat& yv = g.nodes_[yid].val;
            const Mat& xv2 = g.nodes_[x].val;
            Mat& gx = g.nodes_[x].grad;
            for (size_t i = 0; i < gy.count(); ++i)
                gx.v[i] += gy.v[i] * (xv2.v[i] > 0 ? 1.0 : yv.v[i] + 1.0);
        };
    }
    return yid;
}

int Graph::add(int a, int b) {
    const Mat& av = nodes_[a].val;
    const Mat& bv = nodes_[b].val;
    if (av.rows != bv.rows || av.cols != bv.cols) throw ShapeError("add shape mismatch");
    const auto& K = kernels::active();
    Mat y = av;
    K.add_inplace(y.v.data(), bv.v.data(), y.count());
    int yid = push(std::move(y), nullptr);
    if (with_grad_) {
        nodes_[yid].back = [a, b, yid](Graph& g) {
            const auto& K2 = kernels::active();
            const Mat& gy = g.nodes_[yid].grad;
            K2.add_inplace(g.nodes_[a].grad.v.data(), gy.v.data(), gy.count());
            K2.add_inplace(g.nodes_[b].grad.v.data(), gy.v.data(), gy.count());
        };
    }
    return yid;
}

int Graph::scale(int x, double c) {
    const Mat& xv = nodes_[x].val;
    Mat y(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.count(); ++i) y.v[i] = c * xv.v[i];
    int yid = push(std::move(y), nullptr);
    if (with_grad_) {
        nodes_[yid].back = [x, yid, c](Graph& g) {
            const auto& K2 = kernels::active();
            const Mat& gy = g.nodes_[yid].grad;
            K2.axpy(g.nodes_[x].grad.v.data(), c, gy.v.data(), gy.count());
        };
    }
    return yid;
}

int Graph::sparse_to_dense(int x, std::span<const VoxelCoord> coords, int d) {
    const Mat& xv = nodes_[x].val;
    if (size_t(xv.rows) != coords.size()) throw ShapeError("row count does not match coords");
    Mat y(int(uint64_t(d) * d * d), xv.cols);
    std::vector<uint32_t> rows(coords.size());
    for (size_t i = 0; i < coords.size(); ++i) {
        rows[i] = uint32_t(raster_index(coords[i], uint32_t(d)));
        std::memcpy(y.row(int(rows[i])), xv.row(int(i)), sizeof(double) * size_t(xv.cols));
    }
    int yid = push(std::move(y), nullptr);
    if (with_grad_) {
        nodes_[yid].back = [x, yid, rows = std::move(rows)](Graph& g) {
            const auto& K2 = kernels::active();
            const Mat& gy = g.nodes_[yid].grad;
            Mat& gx = g.nodes_[x].grad;
            for (size_t i = 0; i < rows.size(); ++i)
                K2.add_inplace(gx.row(int(i)), gy.row(int(rows[i])), size_t(gx.cols));
        };
    }
    return yid;
}

int Graph::softmax_ce_rows(int logits, std::span<const uint16_t> targets) {
    const Mat& lv = nodes_[logits].val;
    if (size_t(lv.rows) != targets.size()) throw ShapeError("target count does not match rows");
    const int k = lv.cols;
    Mat y(lv.rows, 1);
    std::vector<double> logsum(lv.rows);
    for (int r = 0; r < lv.rows; ++r) {
        if (int(targets[r]) >= k) throw RangeError("target outside alphabet");
        const double* row = lv.row(r);
        double m = row[0];
        for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
        double s = 0;
        for (int j = 0; j < k; ++j) s += std::exp(row[j] - m);
        logsum[r] = m + std::log(s);
        y.at(r, 0) = (logsum[r] - row[targets[r]]) / kLn2;
    }
    int yid = push(std::move(y), nullptr);
    if (with_grad_) {
        std::vector<uint16_t> tg(targets.begin(), targets.end());
        nodes_[yid].back = [logits, yid, tg = std::move(tg), logsum = std::move(logsum),
                            k](Graph& g) {
            const Mat& gy = g.nodes_[yid].grad;
            const Mat& lv2 = g.nodes_[logits].val;
            Mat& gl = g.nodes_[logits].grad;
            for (int r = 0; r < lv2.rows; ++r) {
                const double up = gy.at(r, 0) / kLn2;
                const double* row = lv2.row(r);
                double* grow = gl.row(r);
                for (int j = 0; j < k; ++j) {
                    const double p = std::exp(row[j] - logsum[r]);
                    grow[j] += up * (p - (j == tg[r] ? 1.0 : 0.0));
                }
            }
        };
    }
    return yid;
}

int Graph::mean(int x) {
    const Mat& xv = nodes_[x].val;
    if (xv.count() == 0) throw ShapeError("mean of empty matrix");
    double s = 0;
    for (double v : xv.v) s += v;
    Mat y(1, 1);
    y.at(0, 0) = s / double(xv.count());
    int yid = push(std::move(y), nullptr);
    if (with_grad_) {
        nodes_[yid].back = [x, yid](Graph& g) {
            const double up = g.nodes_[yid].grad.at(0, 0) / double(g.nodes_[x].val.count());
            Mat& gx = g.nodes_[x].grad;
            for (double& v : gx.v) v += up;
        };
    }
    return yid;
}

void Graph::backward(int node) {
    if (!with_grad_) throw ConfigError("backward() on a forward-only graph");
    const Mat& root = nodes_[node].val;
    if (root.rows != 1 || root.cols != 1) throw ShapeError("backward root must be scalar");
    nodes_[node].grad.at(0, 0) = 1.0;
    for (int i = int(nodes_.size()) - 1; i >= 0; --i)
        if (nodes_[i].back) nodes_[i].back(*this);
}

void softmax_fill(const double* logits, int k, double* out) {
    double m = logits[0];
    for (int j = 1; j < k; ++j) m = std::max(m, logits[j]);
    double s = 0;
    for (int j = 0; j < k; ++j) {
        out[j] = std::exp(logits[j] - m);
        s += out[j];
    }
    for (int j = 0; j < k; ++j) out[j] /= s;
}

void adam_step(ParamStore& store, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
    if (!store.has_grad()) throw ConfigError("adam_step requires gradients");
    if (state.m.size() != store.w.size()) state.init(store.w.size());
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(beta2, double(state.t));
    kernels::active().adam_update(store.w.data(), store.g.data(), state.m.data(),
                                  state.v.data(), store.w.size(), lr, beta1, beta2, eps, bc1,
                                  bc2);
}

double lr_schedule(int epoch, double base, double gamma, int step) {
    return base * std::pow(gamma, double(epoch / step));
}

double grad_check(ParamStore& store, std::span<Mat* const> inputs,
                  const std::function<int(Graph&, std::vector<int>&)>& build, double eps) {
    store.enable_grad();
    store.zero_grad();
    Graph g(&store, true);
    std::vector<int> ids;
    const int loss = build(g, ids);
    if (ids.size() != inputs.size()) throw ConfigError("build registered wrong input count");
    g.backward(loss);

    const std::vector<double> analytic_w = store.g;
    std::vector<std::vector<double>> analytic_in;
    for (int id : ids) analytic_in.push_back(g.grad(id).v);

    auto eval = [&]() {
        Graph gf(&store, false);
        std::vector<int> tmp;
        return gf.value(build(gf, tmp)).at(0, 0);
    };
    auto rel_err = [](double a, double f) {
        return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-4});
    };

    double worst = 0;
    for (size_t i = 0; i < store.w.size(); ++i) {
        const double keep = store.w[i];
        store.w[i] = keep + eps;
        const double fp = eval();
        store.w[i] = keep - eps;
        const double fm = eval();
        store.w[i] = keep;
        worst = std::max(worst, rel_err(analytic_w[i], (fp - fm) / (2 * eps)));
    }
    for (size_t m = 0; m < inputs.size(); ++m) {
        Mat& in = *inputs[m];
        for (size_t i = 0; i < in.count(); ++i) {
            const double keep = in.v[i];
            in.v[i] = keep + eps;
            const double fp = eval();
            in.v[i] = keep - eps;
            const double fm = eval();
            in.v[i] = keep;
            worst = std::max(worst, rel_err(analytic_in[m][i], (fp - fm) / (2 * eps)));
        }
    }
    return worst;
}

}  // namespace cnet
