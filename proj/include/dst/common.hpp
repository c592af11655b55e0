#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace dst {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class EnumerationBoundExceeded : public Error {
public:
    EnumerationBoundExceeded(double terms, double bound)
        : Error("enumeration bound exceeded: " + std::to_string(terms) + " terms > bound " +
                std::to_string(bound)),
          terms_(terms) {}
    double terms() const { return terms_; }

private:
    double terms_;
};

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double last_gap)
        : Error(what + " (last gap " + std::to_string(last_gap) + ")"), last_gap_(last_gap) {}
    double last_gap() const { return last_gap_; }

private:
    double last_gap_;
};

class UnsupportedDiscount : public Error {
public:
    using Error::Error;
};

class Diverged : public Error {
public:
    explicit Diverged(std::size_t step)
        : Error("trajectory diverged at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

class AssumptionViolation : public Error {
public:
    AssumptionViolation(std::string condition, const std::string& detail)
        : Error(condition + ": " + detail), condition_(std::move(condition)) {}
    const std::string& condition() const { return condition_; }

private:
    std::string condition_;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for stream (a, b) under a base seed. Schedule-independent by construction.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return mix_seed(mix_seed(mix_seed(base) ^ a) ^ (b * 0xd1342543de82ef95ULL));
}

inline double uniform01(Rng& rng) {
    // 53 random bits -> [0, 1)
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller without caching, so the stream position is a pure function of the call count.
inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dst
