#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace edfield {

/// Philox4x32-10 block function (Salmon et al., Random123).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kW0;
        key[1] += kW1;
    }
    return ctr;
}

/**
 * Counter-based normal/uniform source. A (seed, stream) pair selects an
 * independent sequence; `position` is the block counter inside it, so any
 * draw is reproducible from (seed, stream, position) alone.
 */
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t position = 0)
        : seed_(seed), stream_(stream), position_(position) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }
    /// Next unused block; a spare normal from a partially consumed block is discarded on copy-out.
    std::uint64_t position() const noexcept { return position_; }

    double uniform() {
        if (cached_words_ == 0) refill();
        const std::uint64_t word = words_[2 - cached_words_];
        --cached_words_;
        return (static_cast<double>(word >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    void refill() {
        const std::array<std::uint32_t, 4> ctr{
            static_cast<std::uint32_t>(position_), static_cast<std::uint32_t>(position_ >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                               static_cast<std::uint32_t>(seed_ >> 32)};
        const auto out = philox4x32(ctr, key);
        words_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
        words_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
        cached_words_ = 2;
        ++position_;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t position_;
    std::array<std::uint64_t, 2> words_{};
    int cached_words_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace edfield
