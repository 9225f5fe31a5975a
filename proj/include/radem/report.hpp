#pragma once

#include <cmath>
#include <string>

#include "radem/common.hpp"
#include "radem/matrix.hpp"

namespace radem {

// A scalar expectation with provenance: exact enumerations carry zero
// standard error.
struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t samples = 0;
    bool exact = false;

    static MomentEstimate exactly(double v) { return {v, 0.0, 0, true}; }
};

inline MomentEstimate operator+(const MomentEstimate& a, const MomentEstimate& b) {
    return {a.value + b.value, std::hypot(a.std_error, b.std_error),
            std::max(a.samples, b.samples), a.exact && b.exact};
}

enum class BoundKind { ATerms, BTerms };

// Per-pair terms of a d4 bound plus the assembled total. For the
// Malliavin-Stein route the per-pair matrix holds the A1 integrands
// E|Sigma_ij - <DF_j, -DL^{-1}F_i>| and a2/a3 hold the two global terms.
struct BoundReport {
    BoundKind kind = BoundKind::BTerms;
    int dim = 0;
    int coords = 0;
    std::string model;

    Matrix gap;      // |Sigma_ij - cov(F_i,F_j)|, or A1 integrand per pair
    Matrix b1, b2, b3, b4;
    Matrix b1_err, b2_err, b3_err, b4_err;
    double a2 = 0.0, a3 = 0.0;

    double total = 0.0;
    double total_err = 0.0;
    bool exact = false;
    std::uint64_t samples = 0;
    std::uint64_t seed = 0;
};

// The headline half-sum over pairs (B route) or A1+A2+A3 (A route).
inline double total_bound(const BoundReport& r) {
    double t = 0.0;
    for (int i = 0; i < r.dim; ++i)
        for (int j = 0; j < r.dim; ++j) {
            t += r.gap(i, j);
            if (r.kind == BoundKind::BTerms)
                t += r.b1(i, j) + r.b2(i, j) + r.b3(i, j) + r.b4(i, j);
        }
    t *= 0.5;
    if (r.kind == BoundKind::ATerms) t += r.a2 + r.a3;
    return t;
}

} // namespace radem
