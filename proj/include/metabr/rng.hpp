#pragma once

#include <cstdint>

namespace metabr {

// splitmix64, used both as a small fast generator and to derive
// per-replicate substream seeds from (master seed, stream id).
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

// xoshiro256** seeded via splitmix64; one instance per replicate gives
// results independent of worker count and scheduling.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& si : s_) si = sm.next();
        have_spare_ = false;
    }

    // substream constructor: mixes the master seed with a stream id
    Rng(std::uint64_t master_seed, std::uint64_t stream_id)
        : Rng(derive(master_seed, stream_id)) {}

    static std::uint64_t derive(std::uint64_t master_seed, std::uint64_t stream_id) {
        SplitMix64 sm(master_seed ^ (0x6a09e667f3bcc909ULL + stream_id * 0x9e3779b97f4a7c15ULL));
        sm.next();
        return sm.next();
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in (0, 1)
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // standard normal by Box-Muller (stateless apart from the spare)
    double normal();

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace metabr
