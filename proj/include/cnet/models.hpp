// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnet/sparsenn.hpp"

namespace cnet {

enum class ColorSpace : uint8_t { Rgb = 0, YCoCg = 1 };

// Architecture hyperparameters shared by the occupancy model and the three
// per-channel color models.
struct ModelConfig {
    int d = 64;           // block resolution (power of two)
    int channels = 32;    // hidden width
    int o_res_blocks = 2;
    int c_res_blocks = 10;
    int k_first = 5;      // first-layer kernel
    ColorSpace colorspace = ColorSpace::Rgb;

    // Symbol alphabet per feature: occupancy 2; colors 256, except the
    // 9-bit offset-binary chroma channels under YCoCg (512).
    int alphabet(int feature) const;
    int bitdepth(int feature) const;
    bool operator==(const ModelConfig&) const = default;
};

struct ResBlock {
    ConvLayer c1a, c3, c1b;  // k1 / k3 / k1, all type B, equal widths
};

// Occupancy probability model. The first layer is type-A masked and emits
// every voxel of the d^3 grid; two type-B residual blocks follow, then a
// scatter to the dense grid and a k=1 head producing two-way logits per
// voxel. Row i of the output depends only on occupied inputs at raster
// positions < i.
struct OccupancyModel {
    ModelConfig cfg;
    ParamStore store;
    ConvLayer first;
    std::vector<ResBlock> blocks;
    ConvLayer head;

    std::vector<const ConvLayer*> layers() const;
};

// Per-channel color model. The main branch (type-A first layer, then
// residual blocks alternated with type-B convolutions) sees the channel's
// own history; the unmasked side branch sees the previously coded features;
// the two merge by addition, followed by two type-B layers and a K-way head.
// Row i depends on history rows < i and on every previous-feature row.
struct ColorModel {
    ModelConfig cfg;
    int feature = 1;  // 1..3, fixes alphabet and side-branch width
    ParamStore store;
    ConvLayer first;
    std::vector<ResBlock> blocks;
    std::vector<ConvLayer> alt;  // k3 type B after each residual block
    ConvLayer side_a, side_b;    // unmasked k3
    ConvLayer post_a, post_b;    // type B k3 after the merge
    ConvLayer head;

    std::vector<const ConvLayer*> layers() const;
};

struct ModelBundle {
    ModelConfig cfg;
    OccupancyModel occ;
    std::array<ColorModel, 3> color;
};

// Fresh bundle: residual trunks from centered uniform fan-in init, heads
// zeroed so the untrained model codes exactly uniform distributions.
ModelBundle make_models(const ModelConfig& cfg, uint64_t seed);

void rezero_masked_all(OccupancyModel& m);
void rezero_masked_all(ColorModel& m);

// Versioned binary container: header with the architecture config, then the
// flat little-endian float64 parameter block of each network in declaration
// order, then a trailing checksum.
std::vector<uint8_t> serialize_models(const ModelBundle& b);
void save_models(const ModelBundle& b, const std::string& path);
ModelBundle load_models(const std::string& path);
uint64_t models_checksum(const ModelBundle& b);

// Cached structural data for a block resolution: the grid coordinate list
// and the grid<->grid kernel maps used by the occupancy trunk.
struct GridMaps {
    int d = 0;
    std::vector<VoxelCoord> coords;
    KernelMap k1;
    KernelMap k3_typeb;
};
const GridMaps& grid_maps(int d);

// Kernel maps over one block's occupied coordinate set, shared by the color
// models (k3 carries all offsets; type-B layers use their own active subset).
struct CoordMaps {
    KernelMap kfirst;  // type-A active offsets only
    KernelMap k3;
    KernelMap k1;
};
CoordMaps build_coord_maps(std::span<const VoxelCoord> coords, const ModelConfig& cfg);

// First-layer map for the occupancy model: occupied coords into the grid.
KernelMap build_occ_first_map(std::span<const VoxelCoord> occupied, const ModelConfig& cfg);

// Graph builders. Trunks end at the pre-head hidden representation so a
// decoder can evaluate the head one row at a time.
int build_occ_trunk(Graph& g, const OccupancyModel& m, std::span<const VoxelCoord> occupied,
                    const KernelMap& first_map, const GridMaps& gm);
int apply_occ_head(Graph& g, const OccupancyModel& m, int trunk, const GridMaps& gm);

int build_color_main(Graph& g, const ColorModel& m, int hist, const CoordMaps& maps);
int build_color_side(Graph& g, const ColorModel& m, int prev, const CoordMaps& maps);
int build_color_post(Graph& g, const ColorModel& m, int main_out, int side_out,
                     const CoordMaps& maps);
int apply_color_head(Graph& g, const ColorModel& m, int post, const CoordMaps& maps);

// Row-local head evaluation; bitwise identical to the corresponding row of
// the full head + softmax.
void occ_head_row(const OccupancyModel& m, const Mat& trunk, int row, std::span<double> probs);
void color_head_row(const ColorModel& m, const Mat& post, int row, std::span<double> probs);

// Convenience forwards (no gradients). hist is Nx1 normalized channel
// history; prev is NxP normalized previous features.
Mat ocnet_forward(const OccupancyModel& m, std::span<const VoxelCoord> occupied);
Mat ccnet_forward(const ColorModel& m, std::span<const VoxelCoord> coords, const Mat& hist,
                  const Mat& prev);

// Row-wise softmax of a logits matrix.
Mat softmax_rows(const Mat& logits);

// Mean -log2 p[target] over rows, in bits.
double ce_bits_mean(const Mat& probs, std::span<const uint16_t> targets);

// Argmax match rate; ties break toward the smaller symbol index.
double accuracy(const Mat& probs, std::span<const uint16_t> targets);

}  // namespace cnet
