// SPDX-License-Identifier: Apache-2.0

#include "cnet/blocktree.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace cnet {

namespace {

uint64_t pack(uint32_t x, uint32_t y, uint32_t z) {
    return (uint64_t(x) << 32) | (uint64_t(y) << 16) | z;
}

}  // namespace

Partition partition(const SparseTensor& cloud, int n, int log2_block) {
    if (log2_block < 0 || log2_block > n) throw ConfigError("log2_block must lie in [0,n]");
    Partition p;
    p.n = n;
    p.log2_block = log2_block;
    const uint32_t d = 1u << log2_block;

    std::unordered_map<uint64_t, size_t> index;
    for (size_t i = 0; i < cloud.size(); ++i) {
        const VoxelCoord& c = cloud.coords[i];
        const uint32_t bx = c.x >> log2_block, by = c.y >> log2_block, bz = c.z >> log2_block;
        const uint64_t key = pack(bx, by, bz);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, p.blocks.size()).first;
            Block b;
            b.origin = {bx << log2_block, by << log2_block, bz << log2_block};
            b.local.cols = cloud.cols;
            b.local.bitdepths = cloud.bitdepths;
            p.blocks.push_back(std::move(b));
        }
        Block& b = p.blocks[it->second];
        b.local.coords.push_back(to_local(b.origin, c, d));
        for (int col = 0; col < cloud.cols; ++col) b.local.features.push_back(cloud.at(i, col));
    }
    // Input is raster-sorted globally, so each block's points arrive already
    // in local raster order; only the blocks themselves need sorting.
    std::sort(p.blocks.begin(), p.blocks.end(), [&](const Block& a, const Block& b) {
        return pack(a.origin.x, a.origin.y, a.origin.z) < pack(b.origin.x, b.origin.y, b.origin.z);
    });
    return p;
}

OctreeSignal encode_octree(const Partition& p) {
    const int levels = p.n - p.log2_block;
    OctreeSignal s;
    if (levels == 0 || p.blocks.empty()) return s;

    // Occupied node keys per level; level L holds the block coordinates.
    std::vector<std::unordered_set<uint64_t>> occ(levels + 1);
    for (const Block& b : p.blocks) {
        uint32_t bx = b.origin.x >> p.log2_block;
        uint32_t by = b.origin.y >> p.log2_block;
        uint32_t bz = b.origin.z >> p.log2_block;
        for (int l = levels; l >= 0; --l) {
            occ[l].insert(pack(bx, by, bz));
            bx >>= 1;
            by >>= 1;
            bz >>= 1;
        }
    }

    std::vector<VoxelCoord> frontier{{0, 0, 0}};
    for (int l = 0; l < levels; ++l) {
        std::vector<VoxelCoord> next;
        for (const VoxelCoord& nd : frontier) {
            uint8_t byte = 0;
            for (int child = 0; child < 8; ++child) {
                const VoxelCoord ch{2 * nd.x + ((child >> 2) & 1), 2 * nd.y + ((child >> 1) & 1),
                                    2 * nd.z + (child & 1)};
                if (occ[l + 1].count(pack(ch.x, ch.y, ch.z))) {
                    byte |= uint8_t(1u << (7 - child));
                    next.push_back(ch);
                }
            }
            s.bytes.push_back(byte);
        }
        frontier = std::move(next);
    }
    return s;
}

std::vector<VoxelCoord> decode_octree(const OctreeSignal& s, int n, int log2_block) {
    if (log2_block < 0 || log2_block > n) throw ConfigError("log2_block must lie in [0,n]");
    const int levels = n - log2_block;
    if (levels == 0) {
        if (!s.bytes.empty()) throw DecodeError("octree signal has trailing bytes");
        return {{0, 0, 0}};
    }

    std::vector<VoxelCoord> frontier{{0, 0, 0}};
    size_t pos = 0;
    for (int l = 0; l < levels; ++l) {
        std::vector<VoxelCoord> next;
        for (const VoxelCoord& nd : frontier) {
            if (pos >= s.bytes.size()) throw DecodeError("truncated octree signal");
            const uint8_t byte = s.bytes[pos++];
            if (byte == 0) throw DecodeError("zero occupancy byte for internal octree node");
            for (int child = 0; child < 8; ++child)
                if (byte & (1u << (7 - child)))
                    next.push_back({2 * nd.x + ((child >> 2) & 1), 2 * nd.y + ((child >> 1) & 1),
                                    2 * nd.z + (child & 1)});
        }
        frontier = std::move(next);
    }
    if (pos != s.bytes.size()) throw DecodeError("octree signal has trailing bytes");

    std::vector<VoxelCoord> origins;
    origins.reserve(frontier.size());
    for (const VoxelCoord& b : frontier)
        origins.push_back({b.x << log2_block, b.y << log2_block, b.z << log2_block});
    std::sort(origins.begin(), origins.end(), [](const VoxelCoord& a, const VoxelCoord& b) {
        return pack(a.x, a.y, a.z) < pack(b.x, b.y, b.z);
    });
    return origins;
}

}  // namespace cnet
