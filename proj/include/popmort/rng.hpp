#pragma once

#include <array>
#include <cstdint>

namespace popmort {

/// Counter-based Philox4x32-10 stream. A stream is addressed by
/// (seed, chain, draw, site); draws from distinct addresses never overlap,
/// which makes parallel chains and per-draw path simulation deterministic.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint32_t chain = 0, std::uint32_t draw = 0,
              std::uint32_t site = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          base_{0, chain, draw, site} {}

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    /// Gamma with given shape and scale (mean = shape * scale).
    double gamma(double shape, double scale);

private:
    std::array<std::uint32_t, 4> block(std::uint32_t index) const;

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> base_;
    std::array<std::uint32_t, 4> buf_{};
    std::uint32_t block_index_ = 0;
    int buf_pos_ = 4; // empty
    bool have_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

} // namespace popmort
