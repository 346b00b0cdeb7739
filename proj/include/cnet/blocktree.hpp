// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "cnet/pcloud.hpp"

namespace cnet {

// One coding unit: an occupied d^3 cube at a grid-aligned origin, holding the
// block-local points (coordinates remapped into [0,d)^3, raster-sorted).
struct Block {
    VoxelCoord origin;
    SparseTensor local;
};

// Non-overlapping occupied blocks in raster order of their origins. Every
// input point lands in exactly one block; no block is empty.
struct Partition {
    int n = 0;
    int log2_block = 6;
    std::vector<Block> blocks;
};

// Breadth-first child-occupancy bytes, one per internal octree node. Bit b
// (MSB = child 0) is set iff child b is occupied; children are indexed in
// raster order of the octants.
struct OctreeSignal {
    std::vector<uint8_t> bytes;
};

Partition partition(const SparseTensor& cloud, int n, int log2_block);

OctreeSignal encode_octree(const Partition& p);

// Recovers the occupied block origins, sorted by raster index. A zero byte
// for an internal node or a truncated/oversized stream raises DecodeError.
std::vector<VoxelCoord> decode_octree(const OctreeSignal& s, int n, int log2_block);

}  // namespace cnet
