/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace icqr {

// Philox4x32-10 (Salmon et al., SC 2011). The key is the user seed and the
// counter carries (stream, position), so any (seed, stream) pair addresses an
// independent sequence regardless of which thread consumes it.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    static Block generate(Block counter, std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            counter = single_round(counter, key);
            key[0] += kW32A;
            key[1] += kW32B;
        }
        return counter;
    }

private:
    static constexpr std::uint32_t kW32A = 0x9E3779B9;
    static constexpr std::uint32_t kW32B = 0xBB67AE85;
    static constexpr std::uint32_t kM4x32A = 0xD2511F53;
    static constexpr std::uint32_t kM4x32B = 0xCD9E8D57;

    static Block single_round(const Block& c, const std::array<std::uint32_t, 2>& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM4x32A) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM4x32B) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Sequential view over one Philox stream.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

    std::uint32_t next_u32() {
        if (lane_ == 4) refill();
        return buffer_[lane_++];
    }

    // Uniform on the open interval (0,1), 53 random bits.
    double uniform() {
        const std::uint64_t hi = next_u32() >> 5;  // 27 bits
        const std::uint64_t lo = next_u32() >> 6;  // 26 bits
        const double u = (static_cast<double>((hi << 26) | lo) + 0.5) * 0x1.0p-53;
        return u;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double exponential() { return -std::log(uniform()); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    void refill() {
        const Philox4x32::Block ctr{static_cast<std::uint32_t>(position_), static_cast<std::uint32_t>(position_ >> 32),
                                    static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        buffer_ = Philox4x32::generate(ctr, key_);
        ++position_;
        lane_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t position_ = 0;
    Philox4x32::Block buffer_{};
    int lane_ = 4;
};

// Stream ids for the different consumers of one seed.
enum class StreamPurpose : std::uint64_t { Data = 1, Bootstrap = 2, Calibration = 3 };

inline std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a, std::uint64_t b = 0) {
    return (static_cast<std::uint64_t>(purpose) << 56) ^ (a << 24) ^ b;
}

}  // namespace icqr
