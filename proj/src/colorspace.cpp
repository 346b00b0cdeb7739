// SPDX-License-Identifier: Apache-2.0

#include "cnet/colorspace.hpp"

#include "cnet/common.hpp"

namespace cnet {

YCoCgTriple rgb_to_ycocg(uint8_t r, uint8_t g, uint8_t b) {
    const int co = int(r) - int(b);
    const int t = int(b) + (co >> 1);
    const int cg = int(g) - t;
    const int y = t + (cg >> 1);
    return {uint16_t(y), uint16_t(co + 256), uint16_t(cg + 256)};
}

std::array<uint8_t, 3> ycocg_to_rgb(const YCoCgTriple& tr) {
    const int co = int(tr.co) - 256;
    const int cg = int(tr.cg) - 256;
    const int t = int(tr.y) - (cg >> 1);
    const int g = cg + t;
    const int b = t - (co >> 1);
    const int r = b + co;
    if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
        throw RangeError("YCoCg triple outside the reversible image");
    return {uint8_t(r), uint8_t(g), uint8_t(b)};
}

SparseTensor apply_ycocg(const SparseTensor& rgb) {
    if (rgb.cols != 3) throw ShapeError("expected three color columns");
    SparseTensor out = rgb;
    out.bitdepths = {8, 9, 9};
    for (size_t i = 0; i < rgb.size(); ++i) {
        const YCoCgTriple t =
            rgb_to_ycocg(uint8_t(rgb.at(i, 0)), uint8_t(rgb.at(i, 1)), uint8_t(rgb.at(i, 2)));
        out.at(i, 0) = t.y;
        out.at(i, 1) = t.co;
        out.at(i, 2) = t.cg;
    }
    return out;
}

SparseTensor apply_ycocg_inverse(const SparseTensor& ycocg) {
    if (ycocg.cols != 3) throw ShapeError("expected three color columns");
    SparseTensor out = ycocg;
    out.bitdepths = {8, 8, 8};
    for (size_t i = 0; i < ycocg.size(); ++i) {
        const auto rgb = ycocg_to_rgb({ycocg.at(i, 0), ycocg.at(i, 1), ycocg.at(i, 2)});
        out.at(i, 0) = rgb[0];
        out.at(i, 1) = rgb[1];
        out.at(i, 2) = rgb[2];
    }
    return out;
}

}  // namespace cnet
