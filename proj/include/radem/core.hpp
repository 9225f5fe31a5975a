#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "radem/common.hpp"
#include "radem/rng.hpp"

namespace radem {

// A point of {-1,+1}^n, bit-packed with bit=1 meaning +1.
class Configuration {
public:
    Configuration() = default;
    explicit Configuration(int n, bool all_plus = false)
        : n_(n), words_((n + 63) / 64, all_plus ? ~std::uint64_t(0) : 0) {
        trim();
    }

    static Configuration from_signs(std::span<const int> signs) {
        Configuration c(int(signs.size()));
        for (int k = 0; k < int(signs.size()); ++k) c.set_sign(k, signs[k]);
        return c;
    }

    // low n bits of mask give the configuration; for exact enumeration loops
    static Configuration from_mask(int n, std::uint64_t mask) {
        Configuration c(n);
        if (!c.words_.empty()) c.words_[0] = mask;
        c.trim();
        return c;
    }

    int size() const { return n_; }
    bool bit(int k) const { return (words_[k >> 6] >> (k & 63)) & 1u; }
    int sign(int k) const { return bit(k) ? +1 : -1; }

    void set_bit(int k, bool v) {
        const std::uint64_t m = std::uint64_t(1) << (k & 63);
        if (v)
            words_[k >> 6] |= m;
        else
            words_[k >> 6] &= ~m;
    }
    void set_sign(int k, int s) { set_bit(k, s > 0); }
    void flip(int k) { words_[k >> 6] ^= std::uint64_t(1) << (k & 63); }

    bool operator==(const Configuration& o) const { return n_ == o.n_ && words_ == o.words_; }

private:
    void trim() {
        if (n_ % 64 && !words_.empty()) words_.back() &= (~std::uint64_t(0)) >> (64 - n_ % 64);
    }
    int n_ = 0;
    std::vector<std::uint64_t> words_;
};

// Finite Rademacher probability space: n independent +/-1 coordinates,
// P(X_k = +1) = p_k with 0 < p_k < 1.
class RademacherSpace {
public:
    RademacherSpace(int n, double p) : RademacherSpace(std::vector<double>(n, p)) {}

    explicit RademacherSpace(std::vector<double> p) : p_(std::move(p)) {
        if (p_.empty()) throw ValidationError("RademacherSpace: need at least one coordinate");
        q_.resize(p_.size());
        sqrt_pq_.resize(p_.size());
        y_plus_.resize(p_.size());
        y_minus_.resize(p_.size());
        for (std::size_t k = 0; k < p_.size(); ++k) {
            if (!(p_[k] > 0.0 && p_[k] < 1.0))
                throw ValidationError("RademacherSpace: success probabilities must lie strictly inside (0,1)");
            q_[k] = 1.0 - p_[k];
            sqrt_pq_[k] = std::sqrt(p_[k] * q_[k]);
            y_plus_[k] = (1.0 - p_[k] + q_[k]) / (2.0 * sqrt_pq_[k]);
            y_minus_[k] = (-1.0 - p_[k] + q_[k]) / (2.0 * sqrt_pq_[k]);
        }
    }

    int size() const { return int(p_.size()); }
    double p(int k) const { return p_.at(k); }
    double q(int k) const { return q_.at(k); }
    double sqrt_pq(int k) const { return sqrt_pq_.at(k); }
    double y_value(int k, bool plus) const { return plus ? y_plus_[k] : y_minus_[k]; }

    double weight(const Configuration& omega) const {
        double w = 1.0;
        for (int k = 0; k < size(); ++k) w *= omega.bit(k) ? p_[k] : q_[k];
        return w;
    }

    double weight_mask(std::uint64_t mask) const {
        double w = 1.0;
        for (int k = 0; k < size(); ++k) w *= (mask >> k) & 1u ? p_[k] : q_[k];
        return w;
    }

    Configuration sample(Rng& rng) const {
        Configuration c(size());
        sample_into(rng, c);
        return c;
    }

    void sample_into(Rng& rng, Configuration& out) const {
        for (int k = 0; k < size(); ++k) out.set_bit(k, rng.bernoulli(p_[k]));
    }

    // Fill only the listed coordinates. For small homogeneous p a geometric
    // skip is used so the cost is O(#successes) instead of O(#coords).
    void sample_coords_into(Rng& rng, std::span<const int> coords, Configuration& out) const {
        if (coords.empty()) return;
        const double p0 = p_[coords[0]];
        bool homogeneous = true;
        for (int k : coords)
            if (p_[k] != p0) {
                homogeneous = false;
                break;
            }
        if (homogeneous && p0 < 0.05) {
            for (int k : coords) out.set_bit(k, false);
            const double log1mp = std::log1p(-p0);
            std::size_t i = 0;
            while (true) {
                const double u = std::max(rng.uniform(), 1e-300);
                i += std::size_t(std::floor(std::log(u) / log1mp)) + 1;
                if (i > coords.size()) break;
                out.set_bit(coords[i - 1], true);
            }
            return;
        }
        for (int k : coords) out.set_bit(k, rng.bernoulli(p_[k]));
    }

private:
    std::vector<double> p_, q_, sqrt_pq_, y_plus_, y_minus_;
};

// Y_k = (X_k - E[X_k]) / sd(X_k), evaluated at a configuration.
inline double standardized_value(const RademacherSpace& space, const Configuration& omega, int k) {
    if (k < 0 || k >= space.size()) throw std::out_of_range("standardized_value: coordinate out of range");
    return space.y_value(k, omega.bit(k));
}

// A real-valued functional of a configuration. Evaluation must be pure.
// Subclasses may override the difference hooks with cheaper local
// computations; those must agree with the definitional two-/four-point
// differences, which the default implementations spell out.
class Functional {
public:
    virtual ~Functional() = default;

    virtual double value(const Configuration& omega) const = 0;

    // F(omega with coordinate k = +1) - F(omega with coordinate k = -1)
    virtual double plus_minus_gap(const Configuration& omega, int k) const {
        Configuration w = omega;
        w.set_bit(k, true);
        const double plus = value(w);
        w.set_bit(k, false);
        return plus - value(w);
    }

    // four-point difference over coordinates k != l:
    // F^{+(k)+(l)} - F^{+(k)-(l)} - F^{-(k)+(l)} + F^{-(k)-(l)}
    virtual double plus_minus_gap2(const Configuration& omega, int k, int l) const {
        Configuration w = omega;
        w.set_bit(l, true);
        const double at_plus = plus_minus_gap(w, k);
        w.set_bit(l, false);
        return at_plus - plus_minus_gap(w, k);
    }

    // Coordinates the value may depend on; nullopt means possibly all.
    virtual std::optional<std::vector<int>> support() const { return std::nullopt; }

    // Sparsity oracle: coordinates l for which D_k D_l F may be nonzero.
    // nullopt means no pruning (all l != k admitted).
    virtual std::optional<std::vector<int>> second_derivative_support(int k) const {
        (void)k;
        return std::nullopt;
    }

    // Coordinates that D_k F reads; nullopt means possibly all. Used by the
    // sampling backend to avoid generating irrelevant coordinates.
    virtual std::optional<std::vector<int>> derivative_dependency(int k) const {
        (void)k;
        return std::nullopt;
    }
};

// Wraps a plain callable as a Functional, optionally with a declared support.
class LambdaFunctional final : public Functional {
public:
    LambdaFunctional(std::function<double(const Configuration&)> f,
                     std::optional<std::vector<int>> support = std::nullopt)
        : f_(std::move(f)), support_(std::move(support)) {}

    double value(const Configuration& omega) const override { return f_(omega); }
    std::optional<std::vector<int>> support() const override { return support_; }

private:
    std::function<double(const Configuration&)> f_;
    std::optional<std::vector<int>> support_;
};

// Multilinear polynomial in the standardized coordinates: a sum of terms
// coef * prod_{k in mask} Y_k. Dense enough for identity sweeps, sparse
// enough to stay readable in tests.
class PolynomialFunctional final : public Functional {
public:
    PolynomialFunctional(const RademacherSpace& sp,
                         std::vector<std::pair<std::uint64_t, double>> terms)
        : sp_(&sp), terms_(std::move(terms)) {}

    static PolynomialFunctional random(const RademacherSpace& sp, Rng& rng, int max_terms = 16) {
        std::vector<std::pair<std::uint64_t, double>> terms;
        const std::uint64_t subsets = std::uint64_t(1) << sp.size();
        const int count = 2 + int(rng() % std::uint64_t(max_terms - 1));
        for (int t = 0; t < count; ++t)
            terms.emplace_back(rng() % subsets, 2.0 * rng.uniform() - 1.0);
        return PolynomialFunctional(sp, std::move(terms));
    }

    double value(const Configuration& cfg) const override {
        double s = 0.0;
        for (const auto& [mask, coef] : terms_) {
            double prod = coef;
            std::uint64_t m = mask;
            while (m) {
                const int k = std::countr_zero(m);
                m &= m - 1;
                prod *= standardized_value(*sp_, cfg, k);
            }
            s += prod;
        }
        return s;
    }

    std::optional<std::vector<int>> support() const override {
        std::uint64_t all = 0;
        for (const auto& [mask, coef] : terms_) all |= mask;
        std::vector<int> out;
        while (all) {
            out.push_back(std::countr_zero(all));
            all &= all - 1;
        }
        return out;
    }

private:
    const RademacherSpace* sp_;
    std::vector<std::pair<std::uint64_t, double>> terms_;
};

// D_k F = sqrt(p_k q_k) (F_k^+ - F_k^-); independent of omega_k.
inline double first_derivative(const Functional& f, const RademacherSpace& space,
                               const Configuration& omega, int k) {
    if (k < 0 || k >= space.size()) throw std::out_of_range("first_derivative: coordinate out of range");
    return space.sqrt_pq(k) * f.plus_minus_gap(omega, k);
}

// D_l D_k F by the iterated definition. Zero for k == l since D_k F does not
// depend on coordinate k; otherwise the four-point expansion of the iteration.
inline double second_derivative(const Functional& f, const RademacherSpace& space,
                                const Configuration& omega, int k, int l) {
    if (k < 0 || k >= space.size() || l < 0 || l >= space.size())
        throw std::out_of_range("second_derivative: coordinate out of range");
    if (k == l) return 0.0;
    return space.sqrt_pq(k) * space.sqrt_pq(l) * f.plus_minus_gap2(omega, k, l);
}

// | D_k(FG) - [(D_kF)G + F(D_kG) - X_k/sqrt(p_k q_k) (D_kF)(D_kG)] | at omega.
inline double verify_product_rule(const Functional& f, const Functional& g,
                                  const RademacherSpace& space, const Configuration& omega, int k) {
    if (k < 0 || k >= space.size()) throw std::out_of_range("verify_product_rule: coordinate out of range");
    LambdaFunctional fg([&](const Configuration& w) { return f.value(w) * g.value(w); });
    const double lhs = first_derivative(fg, space, omega, k);
    const double df = first_derivative(f, space, omega, k);
    const double dg = first_derivative(g, space, omega, k);
    const double xk = omega.sign(k);
    const double rhs = df * g.value(omega) + f.value(omega) * dg - xk / space.sqrt_pq(k) * df * dg;
    return std::abs(lhs - rhs);
}

// Sparse tables of first and second derivatives of F at a configuration,
// restricted to the functional's declared support and sparsity oracle.
struct DerivativeTable {
    std::map<int, double> first;
    std::map<std::pair<int, int>, double> second;
};

inline DerivativeTable derivative_table(const Functional& f, const RademacherSpace& space,
                                        const Configuration& omega) {
    DerivativeTable t;
    std::vector<int> coords;
    if (auto s = f.support()) {
        coords = *s;
    } else {
        coords.resize(space.size());
        for (int k = 0; k < space.size(); ++k) coords[k] = k;
    }
    for (int k : coords) t.first[k] = first_derivative(f, space, omega, k);
    for (int k : coords) {
        std::vector<int> partners;
        if (auto s = f.second_derivative_support(k)) {
            partners = *s;
        } else {
            partners = coords;
        }
        for (int l : partners) {
            if (l == k) continue;
            auto key = std::minmax(k, l);
            if (t.second.count({key.first, key.second})) continue;
            t.second[{key.first, key.second}] = second_derivative(f, space, omega, k, l);
        }
    }
    return t;
}

} // namespace radem
