#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "radem/core.hpp"
#include "radem/report.hpp"
#include "radem/tables.hpp"
#include "radem/testfns.hpp"

namespace radem {

// Walsh chaos decomposition of a functional on a small space: one
// coefficient c_A = E[F prod_{k in A} Y_k] per subset A of coordinates,
// indexed by bitmask. The order-m kernel is f_m(i_1..i_m) = c_A / m! on
// distinct tuples.
class ChaosDecomposition {
public:
    ChaosDecomposition(RademacherSpace space, std::vector<double> coef)
        : space_(std::move(space)), c_(std::move(coef)) {}

    const RademacherSpace& space() const { return space_; }
    int coords() const { return space_.size(); }
    std::uint64_t size() const { return c_.size(); }

    double coefficient(std::uint64_t mask) const { return c_[mask]; }
    double& coefficient(std::uint64_t mask) { return c_[mask]; }
    const std::vector<double>& coefficients() const { return c_; }

    double mean() const { return c_[0]; }

    double kernel(std::span<const int> indices) const {
        std::uint64_t mask = 0;
        for (int i : indices) {
            if (mask & bit_mask(i)) return 0.0; // vanishes on diagonals
            mask |= bit_mask(i);
        }
        return c_[mask] / factorial(int(indices.size()));
    }

    // E[F^2] = sum_A c_A^2 (Parseval)
    double second_moment() const {
        double s = 0.0;
        for (double x : c_) s += x * x;
        return s;
    }

    double variance() const { return second_moment() - c_[0] * c_[0]; }

    double max_coefficient_diff(const ChaosDecomposition& o) const {
        double m = 0.0;
        for (std::uint64_t a = 0; a < size(); ++a) m = std::max(m, std::abs(c_[a] - o.c_[a]));
        return m;
    }

private:
    RademacherSpace space_;
    std::vector<double> c_;
};

namespace detail {

// In-place tensor transform between point values (indexed by configuration
// mask) and Walsh coefficients (indexed by subset mask).
inline void walsh_forward(std::vector<double>& v, const RademacherSpace& sp) {
    const int n = sp.size();
    for (int k = 0; k < n; ++k) {
        const double yp = sp.y_value(k, true), ym = sp.y_value(k, false);
        const double p = sp.p(k), q = sp.q(k);
        const std::uint64_t b = bit_mask(k);
        for (std::uint64_t m = 0; m < v.size(); ++m) {
            if (m & b) continue;
            const double lo = v[m], hi = v[m | b];
            v[m] = p * hi + q * lo;
            v[m | b] = p * hi * yp + q * lo * ym;
        }
    }
}

inline void walsh_inverse(std::vector<double>& v, const RademacherSpace& sp) {
    const int n = sp.size();
    for (int k = n - 1; k >= 0; --k) {
        const double yp = sp.y_value(k, true), ym = sp.y_value(k, false);
        const std::uint64_t b = bit_mask(k);
        for (std::uint64_t m = 0; m < v.size(); ++m) {
            if (m & b) continue;
            const double c0 = v[m], c1 = v[m | b];
            v[m] = c0 + c1 * ym;
            v[m | b] = c0 + c1 * yp;
        }
    }
}

} // namespace detail

inline ChaosDecomposition walsh_expand(const Functional& f, const RademacherSpace& space,
                                       int exact_limit = kExactLimit) {
    ValueTable t = ValueTable::tabulate(f, space, exact_limit);
    std::vector<double> v = std::move(t.values());
    detail::walsh_forward(v, space);
    return ChaosDecomposition(space, std::move(v));
}

inline ChaosDecomposition walsh_expand(const ValueTable& t, const RademacherSpace& space) {
    std::vector<double> v = t.values();
    detail::walsh_forward(v, space);
    return ChaosDecomposition(space, std::move(v));
}

inline ValueTable to_value_table(const ChaosDecomposition& dec) {
    std::vector<double> v = dec.coefficients();
    detail::walsh_inverse(v, dec.space());
    return ValueTable(dec.coords(), std::move(v));
}

inline double reconstruct(const ChaosDecomposition& dec, const Configuration& omega) {
    std::vector<double> work = dec.coefficients();
    std::uint64_t len = work.size();
    for (int k = dec.coords() - 1; k >= 0; --k) {
        const double y = standardized_value(dec.space(), omega, k);
        len >>= 1;
        for (std::uint64_t m = 0; m < len; ++m) work[m] += work[m + len] * y;
    }
    return work[0];
}

inline ChaosDecomposition apply_L(const ChaosDecomposition& dec) {
    std::vector<double> c = dec.coefficients();
    for (std::uint64_t a = 0; a < c.size(); ++a) c[a] *= -double(std::popcount(a));
    return ChaosDecomposition(dec.space(), std::move(c));
}

// Pseudo-inverse: the empty-set coefficient maps to 0. If strict is set, a
// non-centered input is rejected instead.
inline ChaosDecomposition apply_L_inverse(const ChaosDecomposition& dec, bool strict = false) {
    if (strict && std::abs(dec.mean()) >= 1e-12)
        throw ValidationError("apply_L_inverse: input not centered");
    std::vector<double> c = dec.coefficients();
    c[0] = 0.0;
    for (std::uint64_t a = 1; a < c.size(); ++a) c[a] *= -1.0 / double(std::popcount(a));
    return ChaosDecomposition(dec.space(), std::move(c));
}

inline ChaosDecomposition apply_semigroup(const ChaosDecomposition& dec, double t) {
    if (t < 0.0) throw ValidationError("apply_semigroup: time must be nonnegative");
    std::vector<double> c = dec.coefficients();
    for (std::uint64_t a = 1; a < c.size(); ++a) c[a] *= std::exp(-double(std::popcount(a)) * t);
    return ChaosDecomposition(dec.space(), std::move(c));
}

// D_k as a map between decompositions: c'_A = c_{A u {k}} for k not in A.
inline ChaosDecomposition apply_derivative(const ChaosDecomposition& dec, int k) {
    std::vector<double> c(dec.size(), 0.0);
    const std::uint64_t b = bit_mask(k);
    for (std::uint64_t a = 0; a < c.size(); ++a)
        if (!(a & b)) c[a] = dec.coefficient(a | b);
    return ChaosDecomposition(dec.space(), std::move(c));
}

// Divergence of u = (u_k)_k: kernels f_n(.,k) are read off the u_k,
// symmetrized and restricted off-diagonal, then summed as multiple
// integrals. In subset coordinates: coef_B(delta u) = sum_{k in B}
// coef_{B \ {k}}(u_k); coefficients of u_k on sets containing k are
// diagonal kernel entries and are dropped.
inline ChaosDecomposition divergence(const std::vector<ChaosDecomposition>& u) {
    if (u.empty()) throw ValidationError("divergence: empty field");
    const int n = u.front().coords();
    for (const auto& uk : u)
        if (uk.coords() != n) throw ValidationError("divergence: mismatched spaces");
    if (int(u.size()) != n) throw ValidationError("divergence: need one component per coordinate");
    std::vector<double> c(std::uint64_t(1) << n, 0.0);
    for (std::uint64_t b = 1; b < c.size(); ++b)
        for (int k = 0; k < n; ++k)
            if (b & bit_mask(k)) c[b] += u[k].coefficient(b & ~bit_mask(k));
    return ChaosDecomposition(u.front().space(), std::move(c));
}

inline std::vector<ChaosDecomposition> gradient(const ChaosDecomposition& dec) {
    std::vector<ChaosDecomposition> g;
    g.reserve(dec.coords());
    for (int k = 0; k < dec.coords(); ++k) g.push_back(apply_derivative(dec, k));
    return g;
}

// |E[F delta(u)] - E[<DF, u>]|, both sides by exact enumeration.
inline double verify_adjoint(const Functional& f, const std::vector<ChaosDecomposition>& u,
                             const RademacherSpace& space) {
    ValueTable tf = ValueTable::tabulate(f, space);
    ValueTable tdelta = to_value_table(divergence(u));
    std::vector<ValueTable> tu;
    tu.reserve(u.size());
    for (const auto& uk : u) tu.push_back(to_value_table(uk));
    double lhs = 0.0, rhs = 0.0;
    for (std::uint64_t m = 0; m < tf.size(); ++m) {
        const double w = space.weight_mask(m);
        lhs += w * tf.at(m) * tdelta.at(m);
        double inner = 0.0;
        for (int k = 0; k < space.size(); ++k)
            inner += tf.first_derivative(space, m, k) * tu[k].at(m);
        rhs += w * inner;
    }
    return std::abs(lhs - rhs);
}

// |E[(F - E F)G] - E[<-DL^{-1}(F - E F), DG>]|, exact.
inline double verify_ibp(const Functional& f, const Functional& g, const RademacherSpace& space) {
    ValueTable tf = ValueTable::tabulate(f, space);
    ValueTable tg = ValueTable::tabulate(g, space);
    ChaosDecomposition df = walsh_expand(tf, space);
    ValueTable th = to_value_table(apply_L_inverse(df)); // L^{-1}(F - E F), sign handled below
    const double mean_f = df.mean();
    double lhs = 0.0, rhs = 0.0;
    for (std::uint64_t m = 0; m < tf.size(); ++m) {
        const double w = space.weight_mask(m);
        lhs += w * (tf.at(m) - mean_f) * tg.at(m);
        double inner = 0.0;
        for (int k = 0; k < space.size(); ++k)
            inner += -th.first_derivative(space, m, k) * tg.first_derivative(space, m, k);
        rhs += w * inner;
    }
    return std::abs(lhs - rhs);
}

// E[||DF||^2] - Var(F); nonnegative by the discrete Poincare inequality.
inline double verify_poincare(const Functional& f, const RademacherSpace& space) {
    ValueTable tf = ValueTable::tabulate(f, space);
    const double mean = tf.mean(space);
    double var = 0.0, energy = 0.0;
    for (std::uint64_t m = 0; m < tf.size(); ++m) {
        const double w = space.weight_mask(m);
        var += w * (tf.at(m) - mean) * (tf.at(m) - mean);
        for (int k = 0; k < space.size(); ++k) {
            const double d = tf.first_derivative(space, m, k);
            energy += w * d * d;
        }
    }
    return energy - var;
}

// Ornstein-Uhlenbeck resampling of a base configuration: coordinate k is
// replaced by an independent copy when its exponential clock fires by time t.
class OUProcessSampler {
public:
    OUProcessSampler(const RademacherSpace& space, Configuration base, double t,
                     std::uint64_t seed)
        : space_(&space), base_(std::move(base)), t_(t), rng_(seed, 0x0eu) {
        if (t < 0.0) throw ValidationError("OUProcessSampler: time must be nonnegative");
    }

    void sample_into(Configuration& out) {
        for (int k = 0; k < space_->size(); ++k) {
            const double z = -std::log(std::max(rng_.uniform(), 1e-300)); // Exp(1) clock
            if (z <= t_)
                out.set_bit(k, rng_.bernoulli(space_->p(k)));
            else
                out.set_bit(k, base_.bit(k));
        }
    }

    const Configuration& base() const { return base_; }

private:
    const RademacherSpace* space_;
    Configuration base_;
    double t_;
    Rng rng_;
};

struct MehlerCheck {
    double mc_mean = 0.0;
    double exact = 0.0;
    double std_error = 0.0;
    double z = 0.0;
};

// Monte Carlo E[F(X^t) | X = omega] against the exact semigroup action.
inline MehlerCheck verify_mehler(const Functional& f, const RademacherSpace& space,
                                 const Configuration& omega, double t, std::uint64_t samples,
                                 std::uint64_t seed) {
    MehlerCheck r;
    r.exact = reconstruct(apply_semigroup(walsh_expand(f, space), t), omega);
    OUProcessSampler sampler(space, omega, t, seed);
    Configuration x(space.size());
    double sum = 0.0, sumsq = 0.0;
    for (std::uint64_t s = 0; s < samples; ++s) {
        sampler.sample_into(x);
        const double v = f.value(x);
        sum += v;
        sumsq += v * v;
    }
    r.mc_mean = sum / double(samples);
    const double var = std::max(0.0, sumsq / double(samples) - r.mc_mean * r.mc_mean);
    r.std_error = std::sqrt(var / double(samples));
    const double diff = r.mc_mean - r.exact;
    r.z = r.std_error > 0.0 ? diff / r.std_error : (std::abs(diff) < 1e-12 ? 0.0 : 1e18);
    return r;
}

// Coefficient-wise residual of -D^m L^{-1} F = int_0^inf e^{-mt} P_t D^m F dt.
// The right side integrates in closed form: a coefficient of order j in
// D^m F picks up a factor 1/(m+j).
inline double verify_integrated_mehler(const Functional& f, const RademacherSpace& space,
                                       std::span<const int> tuple) {
    const int m = int(tuple.size());
    if (m < 1) throw ValidationError("verify_integrated_mehler: empty derivative tuple");
    ChaosDecomposition dec = walsh_expand(f, space);
    dec.coefficient(0) = 0.0; // E[F] = 0 is assumed by the identity
    ChaosDecomposition lhs = apply_L_inverse(dec);
    ChaosDecomposition rhs = dec;
    for (int k : tuple) {
        lhs = apply_derivative(lhs, k);
        rhs = apply_derivative(rhs, k);
    }
    for (std::uint64_t a = 0; a < lhs.size(); ++a) {
        const double left = -lhs.coefficient(a);
        const double right = rhs.coefficient(a) / double(m + std::popcount(a));
        lhs.coefficient(a) = left - right;
    }
    double res = 0.0;
    for (std::uint64_t a = 0; a < lhs.size(); ++a) res = std::max(res, std::abs(lhs.coefficient(a)));
    return res;
}

// E[|D^m L^{-1} F|^alpha] and E[|D^m F|^alpha] at a fixed derivative tuple;
// the first never exceeds the second (Mehler inequality).
inline std::pair<double, double> mehler_inequality_sides(const Functional& f,
                                                         const RademacherSpace& space,
                                                         std::span<const int> tuple, double alpha) {
    ChaosDecomposition dec = walsh_expand(f, space);
    dec.coefficient(0) = 0.0;
    ChaosDecomposition inv = apply_L_inverse(dec);
    ChaosDecomposition d_inv = inv, d_f = dec;
    for (int k : tuple) {
        d_inv = apply_derivative(d_inv, k);
        d_f = apply_derivative(d_f, k);
    }
    ValueTable tl = to_value_table(d_inv), tr = to_value_table(d_f);
    double lhs = 0.0, rhs = 0.0;
    for (std::uint64_t msk = 0; msk < tl.size(); ++msk) {
        const double w = space.weight_mask(msk);
        lhs += w * std::pow(std::abs(tl.at(msk)), alpha);
        rhs += w * std::pow(std::abs(tr.at(msk)), alpha);
    }
    return {lhs, rhs};
}

struct RemainderCheck {
    double remainder = 0.0; // |R| (chain rule) or |identity residual| (ibp)
    double bound = 0.0;
    bool ok = false;
};

// Defect of the two-term discrete chain rule expansion of D_k f(F) at a
// point, against the stated third-derivative envelope.
inline RemainderCheck verify_chain_rule(const std::vector<const Functional*>& fs,
                                        const SmoothTestFunction& f, const RademacherSpace& space,
                                        const Configuration& omega, int k) {
    const int d = int(fs.size());
    if (f.dim() != d) throw ValidationError("verify_chain_rule: dimension mismatch");
    std::vector<double> at(d), plus(d), minus(d), dk(d);
    Configuration w = omega;
    for (int i = 0; i < d; ++i) at[i] = fs[i]->value(omega);
    w.set_bit(k, true);
    for (int i = 0; i < d; ++i) plus[i] = fs[i]->value(w);
    w.set_bit(k, false);
    for (int i = 0; i < d; ++i) minus[i] = fs[i]->value(w);
    const double spq = space.sqrt_pq(k);
    for (int i = 0; i < d; ++i) dk[i] = spq * (plus[i] - minus[i]);

    const double lhs = spq * (f.value(plus) - f.value(minus));
    double first = 0.0;
    for (int i = 0; i < d; ++i) first += f.partial1(i, at) * dk[i];
    double second = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            second += (f.partial2(i, j, plus) + f.partial2(i, j, minus)) * dk[i] * dk[j];
    const double xk = omega.sign(k);
    const double expansion = first - xk / (4.0 * spq) * second;

    RemainderCheck r;
    r.remainder = std::abs(lhs - expansion);
    double envelope = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int l = 0; l < d; ++l)
                envelope += f.sup_norm3(i, j, l) * std::abs(dk[i] * dk[j] * dk[l]);
    r.bound = 5.0 / (12.0 * space.p(k) * space.q(k)) * envelope;
    r.ok = r.remainder <= r.bound + 1e-12;
    return r;
}

// Residual of the approximate integration by parts identity
// E[F_i f(F)] = sum_j E[d_j f(F) <DF_j, -DL^{-1}F_i>] + remainder,
// with the remainder checked against its stated envelope. The functionals
// are centered internally.
inline RemainderCheck verify_approx_ibp(const std::vector<const Functional*>& fs,
                                        const SmoothTestFunction& f, const RademacherSpace& space,
                                        int i) {
    const int d = int(fs.size());
    if (f.dim() != d) throw ValidationError("verify_approx_ibp: dimension mismatch");
    if (i < 0 || i >= d) throw std::out_of_range("verify_approx_ibp: index out of range");
    const int n = space.size();
    std::vector<ValueTable> t;
    std::vector<double> means(d);
    t.reserve(d);
    for (int a = 0; a < d; ++a) {
        t.push_back(ValueTable::tabulate(*fs[a], space));
        means[a] = t.back().mean(space);
    }
    ChaosDecomposition dec_i = walsh_expand(t[i], space);
    dec_i.coefficient(0) = 0.0;
    ValueTable gi = to_value_table(apply_L_inverse(dec_i)); // L^{-1} of centered F_i

    double lhs = 0.0, rhs = 0.0, env2 = 0.0, env3 = 0.0;
    std::vector<double> x(d);
    for (std::uint64_t msk = 0; msk < t[i].size(); ++msk) {
        const double weight = space.weight_mask(msk);
        for (int a = 0; a < d; ++a) x[a] = t[a].at(msk) - means[a];
        lhs += weight * x[i] * f.value(x);
        double inner = 0.0;
        for (int j = 0; j < d; ++j) {
            double dot = 0.0;
            for (int k = 0; k < n; ++k)
                dot += t[j].first_derivative(space, msk, k) * (-gi.first_derivative(space, msk, k));
            inner += f.partial1(j, x) * dot;
        }
        rhs += weight * inner;
        for (int k = 0; k < n; ++k) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += std::abs(t[j].first_derivative(space, msk, k));
            const double gk = std::abs(gi.first_derivative(space, msk, k));
            const double pq = space.p(k) * space.q(k);
            env2 += weight * std::abs(space.p(k) - space.q(k)) / std::sqrt(pq) * s * s * gk;
            env3 += weight * (1.0 / pq) * s * s * s * gk;
        }
    }
    RemainderCheck r;
    r.remainder = std::abs(lhs - rhs);
    r.bound = 0.5 * f.m2() * env2 + 5.0 / 12.0 * f.m3() * env3;
    r.ok = r.remainder <= r.bound + 1e-12;
    return r;
}

// The Malliavin-Stein terms A1, A2, A3 of the d4 bound, exactly by
// enumeration with -DL^{-1} taken through the chaos decomposition.
inline BoundReport exact_a_terms(const std::vector<const Functional*>& fs, const Matrix& sigma,
                                 const RademacherSpace& space, int exact_limit = kExactLimit) {
    const int d = int(fs.size());
    if (sigma.rows() != d || sigma.cols() != d)
        throw ValidationError("exact_a_terms: covariance dimension mismatch");
    const int n = space.size();
    std::vector<ValueTable> t, g;
    for (int a = 0; a < d; ++a) {
        t.push_back(ValueTable::tabulate(*fs[a], space, exact_limit));
        const double mean = t.back().mean(space);
        if (std::abs(mean) >= 1e-10)
            throw ValidationError("exact_a_terms: functional " + std::to_string(a) +
                                  " is not centered (mean " + std::to_string(mean) + ")");
        ChaosDecomposition dec = walsh_expand(t.back(), space);
        dec.coefficient(0) = 0.0;
        ChaosDecomposition inv = apply_L_inverse(dec);
        for (std::uint64_t a2 = 0; a2 < inv.size(); ++a2) inv.coefficient(a2) = -inv.coefficient(a2);
        g.push_back(to_value_table(inv)); // -L^{-1} F_a
    }

    BoundReport r;
    r.kind = BoundKind::ATerms;
    r.dim = d;
    r.coords = n;
    r.exact = true;
    r.gap = Matrix(d, d);
    r.b1 = r.b2 = r.b3 = r.b4 = Matrix(d, d);
    r.b1_err = r.b2_err = r.b3_err = r.b4_err = Matrix(d, d);

    std::vector<std::vector<double>> df(d, std::vector<double>(n)), dg(d, std::vector<double>(n));
    for (std::uint64_t msk = 0; msk < t[0].size(); ++msk) {
        const double weight = space.weight_mask(msk);
        for (int a = 0; a < d; ++a)
            for (int k = 0; k < n; ++k) {
                df[a][k] = t[a].first_derivative(space, msk, k);
                dg[a][k] = g[a].first_derivative(space, msk, k);
            }
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                double dot = 0.0;
                for (int k = 0; k < n; ++k) dot += df[j][k] * dg[i][k];
                r.gap(i, j) += weight * std::abs(sigma(i, j) - dot);
            }
        for (int k = 0; k < n; ++k) {
            double sum_df = 0.0, sum_dg = 0.0;
            for (int j = 0; j < d; ++j) sum_df += std::abs(df[j][k]);
            for (int i = 0; i < d; ++i) sum_dg += std::abs(dg[i][k]);
            const double pq = space.p(k) * space.q(k);
            r.a2 += weight * 0.25 * std::abs(space.p(k) - space.q(k)) / std::sqrt(pq) * sum_df *
                    sum_df * sum_dg;
            r.a3 += weight * 5.0 / 24.0 * (1.0 / pq) * sum_df * sum_df * sum_df * sum_dg;
        }
    }
    r.total = total_bound(r);
    return r;
}

} // namespace radem
