#pragma once

#include <cstdint>

namespace costly_obs {

// xoshiro256++ seeded via splitmix64. Self-contained so that streams are
// reproducible across compilers and standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : s_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<unsigned __int128>(n)) >> 64);
    }

    static std::uint64_t splitmix64(std::uint64_t& state) {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// Named sub-streams so one run seed drives independent environment, agent and
// weight-init randomness.
enum class RngStream : std::uint64_t { Env = 1, Agent = 2, Init = 3 };

inline std::uint64_t substream_seed(std::uint64_t master, RngStream stream) {
    std::uint64_t x = master ^ (0xd1342543de82ef95ULL * static_cast<std::uint64_t>(stream));
    return Rng::splitmix64(x);
}

}  // namespace costly_obs
