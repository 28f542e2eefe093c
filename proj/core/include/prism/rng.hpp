#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace prism {

// Philox4x32-10 counter-based generator. Every stochastic operation in the
// project takes an explicit stream; streams are cheap value types derived
// from (seed, stream id), so parallel work can draw from disjoint streams
// without shared state.
class RngStream {
public:
    explicit RngStream(uint64_t seed, uint64_t stream = 0)
        : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
          counter_{0, 0, static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)} {}

    // Independent child stream; `child` values must be distinct per call site.
    RngStream fork(uint64_t child) const {
        RngStream s = *this;
        s.counter_[0] = 0;
        s.counter_[1] = static_cast<uint32_t>(child);
        s.block_pos_ = 4;
        s.has_cached_normal_ = false;
        // Mix the child id into the high counter words as well so forks of
        // forks stay disjoint for any practical nesting depth.
        s.counter_[2] ^= static_cast<uint32_t>(child * 0x9E3779B9u);
        return s;
    }

    uint32_t next_u32() {
        if (block_pos_ >= 4) {
            block_ = philox(counter_, key_);
            advance_counter();
            block_pos_ = 0;
        }
        return block_[block_pos_++];
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform in (0, 1); never returns 0 so it is safe under log().
    double uniform() {
        return (static_cast<double>(next_u32()) + 0.5) * (1.0 / 4294967296.0);
    }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        return static_cast<int>((static_cast<uint64_t>(next_u32()) * static_cast<uint64_t>(n)) >> 32);
    }

    // Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_normal_ = r * std::sin(theta);
        has_cached_normal_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void fill_normal(std::span<T> out, double mean = 0.0, double stddev = 1.0) {
        for (auto& v : out) {
            v = static_cast<T>(mean + stddev * normal());
        }
    }

    template <typename T>
    void fill_normal(std::vector<T>& out, double mean = 0.0, double stddev = 1.0) {
        fill_normal(std::span<T>(out), mean, stddev);
    }

private:
    static std::array<uint32_t, 4> philox(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
        constexpr uint32_t kM0 = 0xD2511F53u;
        constexpr uint32_t kM1 = 0xCD9E8D57u;
        constexpr uint32_t kW0 = 0x9E3779B9u;
        constexpr uint32_t kW1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            uint64_t p0 = static_cast<uint64_t>(kM0) * ctr[0];
            uint64_t p1 = static_cast<uint64_t>(kM1) * ctr[2];
            std::array<uint32_t, 4> next = {
                static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                static_cast<uint32_t>(p1),
                static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                static_cast<uint32_t>(p0),
            };
            ctr = next;
            key[0] += kW0;
            key[1] += kW1;
        }
        return ctr;
    }

    void advance_counter() {
        if (++counter_[0] == 0) {
            ++counter_[1];
        }
    }

    std::array<uint32_t, 2> key_;
    std::array<uint32_t, 4> counter_;
    std::array<uint32_t, 4> block_{};
    int block_pos_ = 4;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace prism
