#pragma once

#include <cstdint>
#include <random>

namespace hc {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Per-entity random stream. Seeding a fresh Rng(seed, stream_id) per person or
// per simulated history keeps results independent of iteration order and
// thread count.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : gen_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ed2701)))
    {}

    double uniform() { return unif_(gen_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal(double mean = 0.0, double sd = 1.0) { return mean + sd * norm_(gen_); }
    bool bernoulli(double p) { return uniform() < p; }
    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(uniform() * (hi - lo + 1 - 1e-12));
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace hc
