// SPDX-License-Identifier: Apache-2.0

#include "cnet/rangecoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace cnet {

namespace {

constexpr uint64_t kTop = 1ull << 56;      // renormalization threshold
constexpr uint32_t kTotal = 1u << 16;      // probability precision

}  // namespace

int QuantizedCdf::find(uint32_t f) const {
    auto it = std::upper_bound(cum.begin(), cum.end(), f);
    return int(it - cum.begin()) - 1;
}

double QuantizedCdf::cost_bits(int s) const { return 16.0 - std::log2(double(mass(s))); }

uint64_t QuantizedCdf::hash() const {
    const auto* p = reinterpret_cast<const uint8_t*>(cum.data());
    return fnv1a64({p, cum.size() * sizeof(uint32_t)});
}

QuantizedCdf quantize_pmf(std::span<const double> probs) {
    const int k = int(probs.size());
    if (k < 2) throw ConfigError("PMF needs at least two symbols");
    if (k > 32768) throw ConfigError("alphabet too large for 16-bit quantization");

    long double sum = 0.0L;
    for (double p : probs) {
        if (!(p >= 0.0)) throw ConfigError("PMF entries must be non-negative");
        sum += (long double)p;
    }
    if (!(sum > 0.0L)) throw ConfigError("PMF sums to zero");

    std::vector<uint32_t> mass(k);
    std::vector<long double> rem(k);
    int64_t assigned = 0;
    for (int i = 0; i < k; ++i) {
        const long double exact = (long double)probs[i] / sum * kTotal;
        const long double fl = std::floor(exact);
        mass[i] = uint32_t(fl);
        rem[i] = exact - fl;
        assigned += mass[i];
    }

    int64_t deficit = int64_t(kTotal) - assigned;
    if (deficit > 0) {
        std::vector<int> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (rem[a] != rem[b]) return rem[a] > rem[b];
            return a < b;
        });
        size_t pos = 0;
        while (deficit > 0) {
            ++mass[order[pos]];
            --deficit;
            pos = (pos + 1) % order.size();
        }
    } else {
        // Rounding of the normalized PMF can overshoot by a unit or two;
        // reclaim from the largest masses.
        while (deficit < 0) {
            int j = int(std::max_element(mass.begin(), mass.end()) - mass.begin());
            if (mass[j] < 2) throw ConfigError("degenerate PMF quantization");
            --mass[j];
            ++deficit;
        }
    }

    for (int i = 0; i < k; ++i) {
        if (mass[i] != 0) continue;
        int j = int(std::max_element(mass.begin(), mass.end()) - mass.begin());
        if (mass[j] < 2) throw ConfigError("degenerate PMF quantization");
        --mass[j];
        mass[i] = 1;
    }

    QuantizedCdf cdf;
    cdf.cum.resize(k + 1);
    cdf.cum[0] = 0;
    for (int i = 0; i < k; ++i) cdf.cum[i + 1] = cdf.cum[i] + mass[i];
    return cdf;
}

void RangeEncoder::shift_low() {
    const uint64_t lo64 = uint64_t(low_);
    const uint64_t carry = uint64_t(low_ >> 64);
    if (lo64 < 0xFF00000000000000ull || carry) {
        out_.push_back(uint8_t(cache_ + carry));
        for (; cache_size_ > 1; --cache_size_) out_.push_back(uint8_t(0xFF + carry));
        cache_ = uint8_t(lo64 >> 56);
        cache_size_ = 0;
    }
    ++cache_size_;
    low_ = (unsigned __int128)(lo64 << 8);
}

void RangeEncoder::encode(const QuantizedCdf& cdf, int symbol) {
    if (symbol < 0 || symbol >= cdf.symbols()) throw RangeError("symbol outside alphabet");
    const uint64_t r = range_ >> 16;
    low_ += (unsigned __int128)r * cdf.lo(symbol);
    range_ = r * cdf.mass(symbol);
    while (range_ < kTop) {
        shift_low();
        range_ <<= 8;
    }
    ++symbols_;
}

std::vector<uint8_t> RangeEncoder::finish() {
    for (int i = 0; i < 10; ++i) shift_low();
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
    if (bytes_.size() < 10) throw DecodeError("range coder payload too short");
    if (bytes_[0] != 0) throw DecodeError("corrupt range coder payload header");
    pos_ = 1;
    for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    // A well-formed payload always has bytes left here (the encoder's flush
    // tail covers every renormalization); running out means corruption.
    if (pos_ >= bytes_.size()) throw DecodeError("range coder renormalization past payload end");
    return bytes_[pos_++];
}

int RangeDecoder::decode(const QuantizedCdf& cdf) {
    const uint64_t r = range_ >> 16;
    uint64_t f = code_ / r;
    if (f >= kTotal) f = kTotal - 1;  // top-of-range slack maps to the last symbol
    const int s = cdf.find(uint32_t(f));
    code_ -= r * cdf.lo(s);
    range_ = r * cdf.mass(s);
    while (range_ < kTop) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
    return s;
}

}  // namespace cnet
