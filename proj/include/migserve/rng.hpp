#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace migserve {

// mt19937_64 with explicit inverse-transform sampling. The standard
// distributions are implementation-defined, so rolling the transforms keeps
// traces bit-identical across compilers and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Exponential inter-arrival gap for the given rate (events per unit time).
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    // Index in [0, n).
    size_t index(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)); }

    // Standard normal (Box-Muller, one value per call; spare discarded to
    // keep the draw count predictable).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace migserve
