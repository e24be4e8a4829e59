#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace braingat {

// Splitmix-style mix so distinct (base, stream) pairs land far apart.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Deterministic random source. All sampling (uniform, normal, shuffles)
/// is implemented on top of the raw engine output so replays are
/// bit-identical regardless of the standard library in use.
class Rng {
 public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng stream(std::uint64_t base_seed, std::uint64_t stream_id) {
        return Rng(derive_seed(base_seed, stream_id));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal();

    // Uniform index in [0, n). n must be positive.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

 private:
    std::mt19937_64 engine_;
};

}  // namespace braingat
