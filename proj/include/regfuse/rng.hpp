#pragma once

#include <cstdint>
#include <random>

namespace regfuse {

struct RngSeed {
    std::uint64_t value = 0;
};

// SplitMix64 finalizer; derives independent stream seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Portable random stream. The engine sequence is fixed by the standard and the
// conversions to uniform/normal variates are done here, so draws are identical
// across standard library implementations.
class RandomStream {
public:
    RandomStream(RngSeed seed, std::uint64_t stream) : engine_(mix_seed(seed.value, stream)) {}

    // Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    // Standard normal via Box-Muller.
    double normal() noexcept;

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace regfuse
