#pragma once

#include <cstdint>
#include <vector>

#include "radem/core.hpp"

namespace radem {

inline constexpr int kExactLimit = 20; // 2^20 configurations

// Dense table of a functional over all 2^n configurations. Index bit k set
// means omega_k = +1. This is the workhorse of the exact tier: once values
// are tabulated, derivatives and moments become O(1) lookups per point.
class ValueTable {
public:
    ValueTable() = default;
    ValueTable(int n, std::vector<double> v) : n_(n), v_(std::move(v)) {}

    static ValueTable tabulate(const Functional& f, const RademacherSpace& space,
                               int exact_limit = kExactLimit) {
        const int n = space.size();
        if (n > exact_limit)
            throw CapacityError("ValueTable: space has " + std::to_string(n) +
                                " coordinates, exact limit is " + std::to_string(exact_limit));
        std::vector<double> v(std::size_t(1) << n);
        for (std::uint64_t mask = 0; mask < v.size(); ++mask)
            v[mask] = f.value(Configuration::from_mask(n, mask));
        return ValueTable(n, std::move(v));
    }

    int coords() const { return n_; }
    std::uint64_t size() const { return v_.size(); }
    double at(std::uint64_t mask) const { return v_[mask]; }
    double& at(std::uint64_t mask) { return v_[mask]; }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

    double gap(std::uint64_t mask, int k) const {
        return v_[mask | bit_mask(k)] - v_[mask & ~bit_mask(k)];
    }

    double first_derivative(const RademacherSpace& space, std::uint64_t mask, int k) const {
        return space.sqrt_pq(k) * gap(mask, k);
    }

    double second_derivative(const RademacherSpace& space, std::uint64_t mask, int k, int l) const {
        if (k == l) return 0.0;
        const double g = gap(mask | bit_mask(l), k) - gap(mask & ~bit_mask(l), k);
        return space.sqrt_pq(k) * space.sqrt_pq(l) * g;
    }

    double mean(const RademacherSpace& space) const {
        double m = 0.0;
        for (std::uint64_t mask = 0; mask < size(); ++mask) m += space.weight_mask(mask) * v_[mask];
        return m;
    }

private:
    int n_ = 0;
    std::vector<double> v_;
};

// Tables of D_k F for all k, from a value table.
class DerivativeTables {
public:
    DerivativeTables(const ValueTable& t, const RademacherSpace& space) : n_(t.coords()) {
        d_.resize(n_);
        for (int k = 0; k < n_; ++k) {
            d_[k].resize(t.size());
            for (std::uint64_t mask = 0; mask < t.size(); ++mask)
                d_[k][mask] = t.first_derivative(space, mask, k);
        }
    }

    int coords() const { return n_; }
    double first(int k, std::uint64_t mask) const { return d_[k][mask]; }

    double second(const RademacherSpace& space, int k, int l, std::uint64_t mask) const {
        if (k == l) return 0.0;
        return space.sqrt_pq(l) * (d_[k][mask | bit_mask(l)] - d_[k][mask & ~bit_mask(l)]);
    }

private:
    int n_;
    std::vector<std::vector<double>> d_;
};

} // namespace radem
