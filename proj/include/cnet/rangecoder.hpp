// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cnet/common.hpp"

namespace cnet {

// Integer cumulative distribution with 16-bit precision: cum[0] = 0,
// cum[K] = 65536, strictly increasing (every symbol carries mass >= 1).
struct QuantizedCdf {
    std::vector<uint32_t> cum;

    int symbols() const { return int(cum.size()) - 1; }
    uint32_t lo(int s) const { return cum[s]; }
    uint32_t hi(int s) const { return cum[s + 1]; }
    uint32_t mass(int s) const { return cum[s + 1] - cum[s]; }
    // Symbol s with cum[s] <= f < cum[s+1].
    int find(uint32_t f) const;
    // Ideal code length of symbol s under this CDF, in bits.
    double cost_bits(int s) const;
    uint64_t hash() const;
};

// Deterministic PMF quantization: floor(p * 2^16) on the normalized input,
// the remaining deficit handed one unit at a time to the symbols with the
// largest remainders (ties to the smaller index), then every zero-mass
// symbol raised to 1 at the expense of the largest-mass symbol. Invariant
// under exact rescaling of the input. K >= 2; an all-zero PMF is an error.
QuantizedCdf quantize_pmf(std::span<const double> probs);

// 64-bit range coder with byte-wise renormalization. The payload format
// (leading zero byte, big-endian state emission, 10-byte flush tail) is
// normative for bitstreams produced by this codec.
class RangeEncoder {
public:
    void encode(const QuantizedCdf& cdf, int symbol);
    std::vector<uint8_t> finish();
    size_t symbol_count() const { return symbols_; }

private:
    void shift_low();

    unsigned __int128 low_ = 0;
    uint64_t range_ = ~0ull;
    uint8_t cache_ = 0;
    uint64_t cache_size_ = 1;
    size_t symbols_ = 0;
    std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const uint8_t> bytes);
    int decode(const QuantizedCdf& cdf);

private:
    uint8_t next_byte();

    std::span<const uint8_t> bytes_;
    size_t pos_ = 0;
    uint64_t code_ = 0;
    uint64_t range_ = ~0ull;
};

}  // namespace cnet
