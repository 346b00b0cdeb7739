// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

namespace cnet {

// Luma/chroma triple from the reversible (lifting) RGB<->YCoCg transform.
// y is 8-bit; co and cg are 9-bit, stored offset-binary (signed value + 256)
// so every coded symbol is a non-negative alphabet index.
struct YCoCgTriple {
    uint16_t y = 0;
    uint16_t co = 256;
    uint16_t cg = 256;
};

// Lifting steps (arithmetic shifts, exactly invertible):
//   co = r - b;  t = b + (co >> 1);  cg = g - t;  y = t + (cg >> 1)
YCoCgTriple rgb_to_ycocg(uint8_t r, uint8_t g, uint8_t b);

// Exact inverse on the image of the forward map. A triple outside that image
// can produce channel values outside [0,256), which raises RangeError.
std::array<uint8_t, 3> ycocg_to_rgb(const YCoCgTriple& t);

}  // namespace cnet

#include "cnet/pcloud.hpp"

namespace cnet {

// Column-wise transform of a three-channel RGB tensor (bit depths 8,8,8)
// into Y/Co/Cg (8,9,9) and back. Geometry is untouched.
SparseTensor apply_ycocg(const SparseTensor& rgb);
SparseTensor apply_ycocg_inverse(const SparseTensor& ycocg);

}  // namespace cnet
