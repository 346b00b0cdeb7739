// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnet/common.hpp"

namespace cnet {

// Non-negative integer voxel position. Components lie in [0, 2^n) for a
// cloud of bit depth n, or in [0, d) inside a block of resolution d.
struct VoxelCoord {
    uint32_t x = 0, y = 0, z = 0;
    friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

// Position of a coordinate in 3D raster-scan order: x slowest, z fastest.
// Bijective from [0,d)^3 onto [0,d^3). This order is the coding order and is
// part of the bitstream contract.
uint64_t raster_index(const VoxelCoord& c, uint32_t d);
VoxelCoord coord_from_raster(uint64_t idx, uint32_t d);

// Block-local <-> global coordinate remapping.
VoxelCoord to_global(const VoxelCoord& origin, const VoxelCoord& local, uint32_t d, uint32_t n);
VoxelCoord to_local(const VoxelCoord& origin, const VoxelCoord& global, uint32_t d);

// Coordinate list sorted strictly ascending by raster index plus per-point
// integer attribute rows. Attribute values fit their declared bit depth
// (8 for RGB and luma, 9 for the offset-binary chroma channels).
struct SparseTensor {
    std::vector<VoxelCoord> coords;
    std::vector<uint16_t> features;  // row-major, size() == coords.size() * cols
    int cols = 0;
    std::vector<int> bitdepths;  // per column

    size_t size() const { return coords.size(); }
    uint16_t at(size_t row, int col) const { return features[row * cols + col]; }
    uint16_t& at(size_t row, int col) { return features[row * cols + col]; }
    bool operator==(const SparseTensor& o) const {
        return coords == o.coords && features == o.features && cols == o.cols;
    }
};

// Throws if coords are not strictly raster-ascending or feature values
// exceed their column bit depth.
void validate(const SparseTensor& t, uint32_t d);

struct RawPoint {
    double x = 0, y = 0, z = 0;
    uint8_t r = 0, g = 0, b = 0;
};

// Parsed vertex list prior to voxelization; duplicates allowed.
struct RawPointCloud {
    std::vector<RawPoint> points;
    int bitdepth = 10;
    bool has_color = true;
};

// PLY reader: ASCII and binary little-endian, x/y/z as float32/float64/int32/
// uint32, optional red/green/blue as uint8. Missing color yields (0,0,0) and
// has_color=false. Malformed input raises ParseError with a byte offset.
RawPointCloud load_ply(const std::string& path);

// Writes x/y/z as float32 (voxel coordinates are exactly representable)
// plus uint8 red/green/blue when with_color is set.
void save_ply(const std::string& path, const SparseTensor& cloud, bool binary = true,
              bool with_color = true);

struct VoxelizeResult {
    SparseTensor tensor;           // three color columns, raster-sorted, duplicate-free
    std::array<float, 3> shift{};  // subtracted min-corner shift, kept as metadata
};

// Quantizes to the n-bit grid (floor after the optional min-corner shift),
// merges duplicate voxels with mean color rounded half-up, sorts by raster
// index. n must lie in [3,16]. Points that do not fit the shifted grid raise
// RangeError.
VoxelizeResult voxelize(const RawPointCloud& pc, int n);

}  // namespace cnet
