// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "cnet/models.hpp"

namespace cnet {

// Symbol normalization into [-1,1]: x' = (x - s)/s with s = (2^bitdepth-1)/2.
// The bit depth is the highest among the feature set (8 for RGB, 9 for
// YCoCg), so under YCoCg the luma ends up in [-1,0] and is shifted by +0.5
// into a symmetric range.
struct NormParams {
    int bitdepth = 8;
    bool y_shift = false;

    double s() const { return (double(1 << bitdepth) - 1.0) / 2.0; }
};

NormParams norm_params(int feature, ColorSpace cs);
double normalize(int x, const NormParams& np);
int denormalize(double v, const NormParams& np);

// Model input assembly for one block (already in coding colorspace).
// Channel history: the block's own channel values, normalized (Nx1).
Mat make_channel_history(const SparseTensor& local, int feature, ColorSpace cs);
// Previously coded features: the occupancy column (1.0) plus every channel
// before `feature`, normalized (NxP with P == feature).
Mat make_prev_features(const SparseTensor& local, int feature, ColorSpace cs);
// Dense 0/1 occupancy over the d^3 grid in raster order.
std::vector<uint16_t> occupancy_targets(const SparseTensor& local, int d);
// The channel's symbol sequence in raster order.
std::vector<uint16_t> channel_targets(const SparseTensor& local, int feature);

// Synthetic surface blocks (planes, shells, paraboloids) with smooth color
// gradients, stored as RGB. Deterministic in the seed.
SparseTensor synthetic_block(int d, uint64_t seed);
std::vector<SparseTensor> synthetic_dataset(int d, int count, uint64_t seed);
// A cloud at bit depth n spanning several occupied blocks of size 2^log2_block.
SparseTensor synthetic_cloud(int n, int log2_block, int blocks, uint64_t seed);

// Keeps each point independently with probability rho drawn once per block
// from [rho_min, rho_max]; always retains at least the raster-first point.
SparseTensor subsample_augment(const SparseTensor& block, std::mt19937_64& rng,
                               double rho_min = 0.3, double rho_max = 1.0);

struct TrainConfig {
    uint64_t seed = 0;
    int epochs = 2;
    int batch_size = 32;
    double base_lr = 15e-5;
    double lr_gamma = 0.95;
    int lr_step = 2;
    bool augment = true;
    int log_every = 1;
    std::string csv_path;        // step metrics; empty = no file
    std::string checkpoint_dir;  // per-epoch checkpoints; empty = none
};

struct StepMetric {
    int step = 0;
    int feature = 0;
    double loss_bits = 0;
    double accuracy = 0;
    double lr = 0;
};

struct TrainReport {
    std::vector<StepMetric> metrics;
    std::array<double, 4> first_loss{};
    std::array<double, 4> final_loss{};
    // Mean validation loss per feature, one entry per epoch, when a
    // validation set is supplied.
    std::array<std::vector<double>, 4> validation_loss;
};

// Trains the four networks sequentially (occupancy first, then the color
// channels in coding order) on RGB blocks, applying the colorspace transform
// and normalization online. Deterministic in seed + config. A NaN loss
// aborts with ConfigError.
TrainReport train(const std::vector<SparseTensor>& blocks, const TrainConfig& tc,
                  ModelBundle& models, const std::vector<SparseTensor>* validation = nullptr);

// Four cross-entropy terms (bits) plus their sum for one RGB block under the
// bundle's colorspace: occupancy averaged over the d^3 voxels, each color
// channel averaged over the block's points.
struct BlockLoss {
    std::array<double, 4> bits{};
    double total = 0;
};
BlockLoss block_loss(const ModelBundle& models, const SparseTensor& rgb_block);

}  // namespace cnet
