#ifndef BITSTAIN_CORE_RNG_HPP
#define BITSTAIN_CORE_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace bitstain::core {

// Counter-based Philox4x32-10 generator. Every draw is a pure function of
// (seed, stream, index), so parallel consumers stay deterministic and no
// generator state has to be checkpointed.
class Philox {
public:
    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          ctr2_(static_cast<std::uint32_t>(stream)),
          ctr3_(static_cast<std::uint32_t>(stream >> 32)) {}

    std::array<std::uint32_t, 4> block(std::uint64_t index) const {
        std::uint32_t c0 = static_cast<std::uint32_t>(index);
        std::uint32_t c1 = static_cast<std::uint32_t>(index >> 32);
        std::uint32_t c2 = ctr2_;
        std::uint32_t c3 = ctr3_;
        std::uint32_t k0 = key0_;
        std::uint32_t k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = kMul0 * static_cast<std::uint64_t>(c0);
            const std::uint64_t p1 = kMul1 * static_cast<std::uint64_t>(c2);
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return {c0, c1, c2, c3};
    }

    std::uint64_t bits64(std::uint64_t index) const {
        const auto b = block(index);
        return (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform(std::uint64_t index) const {
        return static_cast<double>(bits64(index) >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; one counter block per draw.
    double normal(std::uint64_t index) const {
        const auto b = block(index);
        const std::uint64_t hi = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
        const std::uint64_t lo = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
        const double u1 = (static_cast<double>(hi >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = static_cast<double>(lo >> 11) * 0x1.0p-53;          // [0, 1)
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    static constexpr std::uint64_t kMul0 = 0xD2511F53;
    static constexpr std::uint64_t kMul1 = 0xCD9E8D57;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

    std::uint32_t key0_, key1_, ctr2_, ctr3_;
};

// Sequential convenience wrapper over Philox for shuffles and ad-hoc draws.
class SeqRng {
public:
    explicit SeqRng(std::uint64_t seed, std::uint64_t stream = 0) : ph_(seed, stream) {}

    double uniform() { return ph_.uniform(next_++); }
    double normal() { return ph_.normal(next_++); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : ph_.bits64(next_++) % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    Philox ph_;
    std::uint64_t next_ = 0;
};

// FNV-1a, used to derive per-parameter init streams from parameter names.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace bitstain::core

#endif
