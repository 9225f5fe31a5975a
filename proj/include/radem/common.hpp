#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace radem {

inline constexpr const char* kVersion = "radem 1.0.0";

// Thrown when an input violates a documented precondition or contract.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an exact-tier operation is asked to run above its configured
// size limit. Callers can fall back to a sampling backend.
class CapacityError : public std::runtime_error {
public:
    explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

inline double binomial(int n, int k) {
    if (k < 0 || k > n || n < 0) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
    return r;
}

// n * (n-1) * ... * (n-r+1)
inline double falling_factorial(double n, int r) {
    double v = 1.0;
    for (int i = 0; i < r; ++i) v *= (n - i);
    return v;
}

inline double factorial(int n) {
    double v = 1.0;
    for (int i = 2; i <= n; ++i) v *= i;
    return v;
}

inline std::uint64_t bit_mask(int k) { return std::uint64_t(1) << k; }

} // namespace radem
