// SPDX-License-Identifier: Apache-2.0

#include "cnet/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>

#include "cnet/kernels.hpp"

namespace cnet {

int ModelConfig::alphabet(int feature) const {
    if (feature == 0) return 2;
    if (feature < 1 || feature > 3) throw ConfigError("feature index must lie in [0,3]");
    if (colorspace == ColorSpace::YCoCg && feature >= 2) return 512;
    return 256;
}

int ModelConfig::bitdepth(int feature) const { return feature == 0 ? 1 : (alphabet(feature) == 512 ? 9 : 8); }

namespace {

void check_cfg(const ModelConfig& cfg) {
    if (cfg.d < 2 || (cfg.d & (cfg.d - 1)) != 0) throw ConfigError("d must be a power of two");
    if (cfg.channels < 1) throw ConfigError("channels must be positive");
    if (cfg.k_first < 1 || cfg.k_first % 2 == 0) throw ConfigError("k_first must be odd");
    if (cfg.o_res_blocks < 0 || cfg.c_res_blocks < 0) throw ConfigError("negative block count");
}

ResBlock make_res_block(ParamStore& store, int h) {
    ResBlock b;
    b.c1a = make_conv(store, 1, h, h, MaskType::TypeB);
    b.c3 = make_conv(store, 3, h, h, MaskType::TypeB);
    b.c1b = make_conv(store, 1, h, h, MaskType::TypeB);
    return b;
}

void init_res_block(ResBlock& b, ParamStore& store, std::mt19937_64& rng) {
    init_conv_uniform(b.c1a, store, rng);
    init_conv_uniform(b.c3, store, rng);
    init_conv_uniform(b.c1b, store, rng);
}

OccupancyModel make_occupancy(const ModelConfig& cfg, std::mt19937_64& rng) {
    OccupancyModel m;
    m.cfg = cfg;
    const int h = cfg.channels;
    m.first = make_conv(m.store, cfg.k_first, 1, h, MaskType::TypeA);
    for (int i = 0; i < cfg.o_res_blocks; ++i) m.blocks.push_back(make_res_block(m.store, h));
    m.head = make_conv(m.store, 1, h, 2, MaskType::None);
    init_conv_uniform(m.first, m.store, rng);
    for (auto& b : m.blocks) init_res_block(b, m.store, rng);
    // head stays zero: fresh models code uniform distributions
    return m;
}

ColorModel make_color(const ModelConfig& cfg, int feature, std::mt19937_64& rng) {
    ColorModel m;
    m.cfg = cfg;
    m.feature = feature;
    const int h = cfg.channels;
    const int prev_width = feature;  // occupancy plus the feature-1 earlier channels
    m.first = make_conv(m.store, cfg.k_first, 1, h, MaskType::TypeA);
    for (int i = 0; i < cfg.c_res_blocks; ++i) {
        m.blocks.push_back(make_res_block(m.store, h));
        m.alt.push_back(make_conv(m.store, 3, h, h, MaskType::TypeB));
    }
    m.side_a = make_conv(m.store, 3, prev_width, h, MaskType::None);
    m.side_b = make_conv(m.store, 3, h, h, MaskType::None);
    m.post_a = make_conv(m.store, 3, h, h, MaskType::TypeB);
    m.post_b = make_conv(m.store, 3, h, h, MaskType::TypeB);
    m.head = make_conv(m.store, 1, h, cfg.alphabet(feature), MaskType::None);
    init_conv_uniform(m.first, m.store, rng);
    for (int i = 0; i < cfg.c_res_blocks; ++i) {
        init_res_block(m.blocks[i], m.store, rng);
        init_conv_uniform(m.alt[i], m.store, rng);
    }
    init_conv_uniform(m.side_a, m.store, rng);
    init_conv_uniform(m.side_b, m.store, rng);
    init_conv_uniform(m.post_a, m.store, rng);
    init_conv_uniform(m.post_b, m.store, rng);
    return m;
}

}  // namespace

std::vector<const ConvLayer*> OccupancyModel::layers() const {
    std::vector<const ConvLayer*> ls{&first};
    for (const auto& b : blocks) {
        ls.push_back(&b.c1a);
        ls.push_back(&b.c3);
        ls.push_back(&b.c1b);
    }
    ls.push_back(&head);
    return ls;
}

std::vector<const ConvLayer*> ColorModel::layers() const {
    std::vector<const ConvLayer*> ls{&first};
    for (size_t i = 0; i < blocks.size(); ++i) {
        ls.push_back(&blocks[i].c1a);
        ls.push_back(&blocks[i].c3);
        ls.push_back(&blocks[i].c1b);
        ls.push_back(&alt[i]);
    }
    ls.push_back(&side_a);
    ls.push_back(&side_b);
    ls.push_back(&post_a);
    ls.push_back(&post_b);
    ls.push_back(&head);
    return ls;
}

ModelBundle make_models(const ModelConfig& cfg, uint64_t seed) {
    check_cfg(cfg);
    std::mt19937_64 rng(seed);
    ModelBundle b;
    b.cfg = cfg;
    b.occ = make_occupancy(cfg, rng);
    for (int f = 1; f <= 3; ++f) b.color[f - 1] = make_color(cfg, f, rng);
    return b;
}

void rezero_masked_all(OccupancyModel& m) {
    for (const ConvLayer* l : m.layers()) rezero_masked(*l, m.store);
}

void rezero_masked_all(ColorModel& m) {
    for (const ConvLayer* l : m.layers()) rezero_masked(*l, m.store);
}

std::vector<uint8_t> serialize_models(const ModelBundle& b) {
    ByteWriter w;
    w.u8('C');
    w.u8('N');
    w.u8('M');
    w.u8('B');
    w.u8(1);  // version
    w.u8(uint8_t(b.cfg.colorspace));
    w.u16(uint16_t(b.cfg.d));
    w.u16(uint16_t(b.cfg.channels));
    w.u16(uint16_t(b.cfg.o_res_blocks));
    w.u16(uint16_t(b.cfg.c_res_blocks));
    w.u16(uint16_t(b.cfg.k_first));
    auto dump = [&](const ParamStore& s) {
        w.u64(s.w.size());
        for (double v : s.w) w.f64(v);
    };
    dump(b.occ.store);
    for (const auto& c : b.color) dump(c.store);
    return w.take();
}

uint64_t models_checksum(const ModelBundle& b) {
    const auto bytes = serialize_models(b);
    return fnv1a64(bytes);
}

void save_models(const ModelBundle& b, const std::string& path) {
    auto bytes = serialize_models(b);
    const uint64_t sum = fnv1a64(bytes);
    ByteWriter tail;
    tail.u64(sum);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    f.write(reinterpret_cast<const char*>(tail.data().data()), 8);
    if (!f) throw IoError("write failed for " + path);
}

ModelBundle load_models(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 24) throw DecodeError("model file too short");

    const uint64_t stored = ByteReader({bytes.data() + bytes.size() - 8, 8}).u64();
    const std::span<const uint8_t> body{bytes.data(), bytes.size() - 8};
    if (fnv1a64(body) != stored) throw DecodeError("model file checksum mismatch");

    ByteReader r(body);
    char magic[4];
    for (char& c : magic) c = char(r.u8());
    if (std::memcmp(magic, "CNMB", 4) != 0) throw DecodeError("bad model file magic");
    if (r.u8() != 1) throw DecodeError("unsupported model file version");
    ModelConfig cfg;
    cfg.colorspace = ColorSpace(r.u8());
    cfg.d = r.u16();
    cfg.channels = r.u16();
    cfg.o_res_blocks = r.u16();
    cfg.c_res_blocks = r.u16();
    cfg.k_first = r.u16();

    ModelBundle b = make_models(cfg, 0);
    auto fill = [&](ParamStore& s) {
        const uint64_t n = r.u64();
        if (n != s.w.size()) throw DecodeError("model parameter count mismatch");
        for (auto& v : s.w) v = r.f64();
    };
    fill(b.occ.store);
    for (auto& c : b.color) fill(c.store);
    if (r.remaining() != 0) throw DecodeError("model file has trailing bytes");
    return b;
}

const GridMaps& grid_maps(int d) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<GridMaps>> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(d);
    if (it == cache.end()) {
        auto gm = std::make_unique<GridMaps>();
        gm->d = d;
        gm->coords.reserve(size_t(d) * d * d);
        for (int x = 0; x < d; ++x)
            for (int y = 0; y < d; ++y)
                for (int z = 0; z < d; ++z)
                    gm->coords.push_back({uint32_t(x), uint32_t(y), uint32_t(z)});
        gm->k1 = build_kernel_map_grid_grid(d, 1);
        const auto act = active_offsets(3, MaskType::TypeB);
        gm->k3_typeb = build_kernel_map_grid_grid(d, 3, &act);
        it = cache.emplace(d, std::move(gm)).first;
    }
    return *it->second;
}

CoordMaps build_coord_maps(std::span<const VoxelCoord> coords, const ModelConfig& cfg) {
    CoordMaps m;
    const auto act_first = active_offsets(cfg.k_first, MaskType::TypeA);
    m.kfirst = build_kernel_map(coords, coords, cfg.k_first, &act_first);
    m.k3 = build_kernel_map(coords, coords, 3);
    m.k1 = build_kernel_map(coords, coords, 1);
    return m;
}

KernelMap build_occ_first_map(std::span<const VoxelCoord> occupied, const ModelConfig& cfg) {
    const auto act = active_offsets(cfg.k_first, MaskType::TypeA);
    return build_kernel_map_to_grid(occupied, cfg.d, cfg.k_first, &act);
}

namespace {

int res_block_apply(Graph& g, const ResBlock& b, int x, const KernelMap& k1m,
                    const KernelMap& k3m) {
    int t = g.elu(g.conv(x, b.c1a, k1m));
    t = g.elu(g.conv(t, b.c3, k3m));
    t = g.elu(g.conv(t, b.c1b, k1m));
    return g.add(x, t);
}

}  // namespace

int build_occ_trunk(Graph& g, const OccupancyModel& m, std::span<const VoxelCoord> occupied,
                    const KernelMap& first_map, const GridMaps& gm) {
    Mat ones(int(occupied.size()), 1);
    for (auto& v : ones.v) v = 1.0;
    int x = g.input(std::move(ones));
    int h = g.elu(g.conv(x, m.first, first_map));
    for (const auto& b : m.blocks) h = res_block_apply(g, b, h, gm.k1, gm.k3_typeb);
    return g.sparse_to_dense(h, gm.coords, gm.d);
}

int apply_occ_head(Graph& g, const OccupancyModel& m, int trunk, const GridMaps& gm) {
    return g.conv(trunk, m.head, gm.k1);
}

int build_color_main(Graph& g, const ColorModel& m, int hist, const CoordMaps& maps) {
    int h = g.elu(g.conv(hist, m.first, maps.kfirst));
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        h = res_block_apply(g, m.blocks[i], h, maps.k1, maps.k3);
        h = g.elu(g.conv(h, m.alt[i], maps.k3));
    }
    return h;
}

int build_color_side(Graph& g, const ColorModel& m, int prev, const CoordMaps& maps) {
    int s = g.elu(g.conv(prev, m.side_a, maps.k3));
    return g.elu(g.conv(s, m.side_b, maps.k3));
}

int build_color_post(Graph& g, const ColorModel& m, int main_out, int side_out,
                     const CoordMaps& maps) {
    int t = g.add(main_out, side_out);
    t = g.elu(g.conv(t, m.post_a, maps.k3));
    return g.elu(g.conv(t, m.post_b, maps.k3));
}

int apply_color_head(Graph& g, const ColorModel& m, int post, const CoordMaps& maps) {
    return g.conv(post, m.head, maps.k1);
}

namespace {

// Head rows are k=1 convolutions: bias plus one vecmat per row. Evaluating a
// single row this way performs the exact operation sequence of the full head.
void head_row(const ConvLayer& head, const ParamStore& store, const Mat& hidden, int row,
              std::span<double> probs) {
    const int k = head.cout;
    std::vector<double> logits(size_t(k));
    std::memcpy(logits.data(), store.w.data() + head.bias.off, sizeof(double) * size_t(k));
    kernels::active().vecmat_acc(logits.data(), hidden.row(row), head.w(store, head.k * head.k * head.k / 2),
                                 head.cin, head.cout);
    softmax_fill(logits.data(), k, probs.data());
}

}  // namespace

void occ_head_row(const OccupancyModel& m, const Mat& trunk, int row, std::span<double> probs) {
    head_row(m.head, m.store, trunk, row, probs);
}

void color_head_row(const ColorModel& m, const Mat& post, int row, std::span<double> probs) {
    head_row(m.head, m.store, post, row, probs);
}

Mat softmax_rows(const Mat& logits) {
    Mat p(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r) softmax_fill(logits.row(r), logits.cols, p.row(r));
    return p;
}

Mat ocnet_forward(const OccupancyModel& m, std::span<const VoxelCoord> occupied) {
    const GridMaps& gm = grid_maps(m.cfg.d);
    const KernelMap first_map = build_occ_first_map(occupied, m.cfg);
    Graph g(&m.store, false);
    const int trunk = build_occ_trunk(g, m, occupied, first_map, gm);
    const int logits = apply_occ_head(g, m, trunk, gm);
    return softmax_rows(g.value(logits));
}

Mat ccnet_forward(const ColorModel& m, std::span<const VoxelCoord> coords, const Mat& hist,
                  const Mat& prev) {
    const CoordMaps maps = build_coord_maps(coords, m.cfg);
    Graph g(&m.store, false);
    const int main_out = build_color_main(g, m, g.input(hist), maps);
    const int side_out = build_color_side(g, m, g.input(prev), maps);
    const int post = build_color_post(g, m, main_out, side_out, maps);
    const int logits = apply_color_head(g, m, post, maps);
    return softmax_rows(g.value(logits));
}

double ce_bits_mean(const Mat& probs, std::span<const uint16_t> targets) {
    if (size_t(probs.rows) != targets.size()) throw ShapeError("target count mismatch");
    double s = 0;
    for (int r = 0; r < probs.rows; ++r) s += -std::log2(probs.at(r, targets[r]));
    return s / double(probs.rows);
}

double accuracy(const Mat& probs, std::span<const uint16_t> targets) {
    if (size_t(probs.rows) != targets.size()) throw ShapeError("target count mismatch");
    if (probs.rows == 0) return 0.0;
    int hits = 0;
    for (int r = 0; r < probs.rows; ++r) {
        const double* row = probs.row(r);
        int best = 0;
        for (int j = 1; j < probs.cols; ++j)
            if (row[j] > row[best]) best = j;  // ties keep the smaller index
        if (best == targets[r]) ++hits;
    }
    return double(hits) / double(probs.rows);
}

}  // namespace cnet
