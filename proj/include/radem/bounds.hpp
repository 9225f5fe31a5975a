#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "radem/matrix.hpp"
#include "radem/moments.hpp"
#include "radem/report.hpp"
#include "radem/rng.hpp"
#include "radem/testfns.hpp"

namespace radem {

// Factor S with S S' = Sigma via symmetric eigendecomposition; eigenvalues
// below the clamp threshold are set to zero, so rank-deficient targets
// (the applications have rank-1 limits) sample cleanly.
inline Matrix psd_factor(const Matrix& sigma) {
    if (sigma.rows() != sigma.cols()) throw ValidationError("psd_factor: matrix not square");
    if (sigma.max_asymmetry() > 1e-12) throw ValidationError("psd_factor: matrix not symmetric");
    EigenDecomposition e = symmetric_eigen(sigma);
    const int d = sigma.rows();
    Matrix s(d, d);
    for (int c = 0; c < d; ++c) {
        double lam = e.values[c];
        if (lam < -1e-10)
            throw ValidationError("psd_factor: matrix is not positive semidefinite (eigenvalue " +
                                  std::to_string(lam) + ")");
        if (lam < 1e-10) lam = 0.0;
        const double r = std::sqrt(lam);
        for (int i = 0; i < d; ++i) s(i, c) = e.vectors(i, c) * r;
    }
    return s;
}

// Centred Gaussian vector with covariance Sigma, sampled through the
// eigenvalue-clamped factor.
class GaussianTarget {
public:
    explicit GaussianTarget(Matrix sigma) : sigma_(std::move(sigma)), factor_(psd_factor(sigma_)) {}

    int dim() const { return sigma_.rows(); }
    const Matrix& sigma() const { return sigma_; }
    const Matrix& factor() const { return factor_; }

    void sample_into(Rng& rng, std::span<double> out) const {
        const int d = dim();
        for (int i = 0; i < d; ++i) out[i] = 0.0;
        for (int c = 0; c < d; ++c) {
            const double z = normal(rng);
            for (int i = 0; i < d; ++i) out[i] += factor_(i, c) * z;
        }
    }

    static double normal(Rng& rng) {
        // Box-Muller, one draw per call (second value discarded for
        // stream-position simplicity)
        const double u1 = std::max(rng.uniform(), 1e-300);
        const double u2 = rng.uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

private:
    Matrix sigma_;
    Matrix factor_;
};

struct BTermsOptions {
    enum class Backend { Auto, Exact, Mc };
    Backend backend = Backend::Auto;
    std::uint64_t samples = 100000;
    std::uint64_t seed = 1;
    int exact_limit = 14;
    double tuple_budget = 5e7;
};

namespace detail {

// first-order error propagation through sums of square roots: collect the
// derivative of the assembled quantity with respect to each cached moment,
// then combine the (independent) moment errors.
class ErrorAccumulator {
public:
    void add(std::uint64_t key, double coeff, double std_error) {
        if (std_error == 0.0) return;
        auto& e = terms_[key];
        e.coeff += coeff;
        e.se = std_error;
    }
    double std_error() const {
        double v = 0.0;
        for (const auto& [k, e] : terms_) v += e.coeff * e.coeff * e.se * e.se;
        return std::sqrt(v);
    }

private:
    struct Entry {
        double coeff = 0.0;
        double se = 0.0;
    };
    std::unordered_map<std::uint64_t, Entry> terms_;
};

inline double sqrt_clamped(double x) { return x > 0.0 ? std::sqrt(x) : 0.0; }

} // namespace detail

// The four second-order Poincare terms for every pair (i,j), plus the
// covariance gaps |Sigma_ij - cov(F_i,F_j)| supplied by the caller. Triple
// sums run only over the tuples admitted by the symmetry classes, weighted
// by class multiplicity.
inline BoundReport b_terms(const std::vector<const Functional*>& fs, const RademacherSpace& sp,
                           const SymmetryClasses& classes, const Matrix& sigma, const Matrix& cov,
                           const BTermsOptions& opt = {}) {
    const int d = int(fs.size());
    if (sigma.rows() != d || cov.rows() != d)
        throw ValidationError("b_terms: covariance dimension mismatch");

    std::unique_ptr<MomentBackend> owned;
    if (opt.backend == BTermsOptions::Backend::Exact ||
        (opt.backend == BTermsOptions::Backend::Auto && sp.size() <= opt.exact_limit)) {
        owned = std::make_unique<ExactMomentBackend>(fs, sp, opt.exact_limit);
    } else {
        owned = std::make_unique<McMomentBackend>(fs, sp, opt.samples, opt.seed);
    }
    MomentBackend& backend = *owned;

    BoundReport r;
    r.kind = BoundKind::BTerms;
    r.dim = d;
    r.coords = sp.size();
    r.exact = backend.exact();
    r.samples = backend.samples();
    r.seed = opt.seed;
    r.gap = Matrix(d, d);
    r.b1 = r.b2 = r.b3 = r.b4 = Matrix(d, d);
    r.b1_err = r.b2_err = r.b3_err = r.b4_err = Matrix(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) r.gap(i, j) = std::abs(sigma(i, j) - cov(i, j));

    const double dim_32 = std::pow(double(d), 1.5);
    const double dim_sq = double(d) * double(d);
    auto mkey = [](int kind, int i, int id) {
        return (std::uint64_t(kind) << 56) | (std::uint64_t(std::uint32_t(i)) << 32) |
               std::uint32_t(id);
    };

    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double s1 = 0.0, s2 = 0.0, b3 = 0.0, b4 = 0.0;
            detail::ErrorAccumulator e1, e2, e3, e4;
            for (const auto& tc : classes.triples) {
                const MomentEstimate pi = backend.pair(i, tc.k, tc.l, tc.pair_id);
                const MomentEstimate tj = backend.triple(j, tc.m, tc.k, tc.l, tc.triple_id);
                const double sp_i = detail::sqrt_clamped(pi.value);
                const double st_j = detail::sqrt_clamped(tj.value);
                s1 += tc.multiplicity * sp_i * st_j;
                if (sp_i > 0.0)
                    e1.add(mkey(2, i, tc.pair_id), tc.multiplicity * st_j / (2.0 * sp_i), pi.std_error);
                if (st_j > 0.0)
                    e1.add(mkey(3, j, tc.triple_id), tc.multiplicity * sp_i / (2.0 * st_j), tj.std_error);

                const double wm = 1.0 / (sp.p(tc.m) * sp.q(tc.m));
                const MomentEstimate ti = i == j ? tj : backend.triple(i, tc.m, tc.k, tc.l, tc.triple_id);
                const double st_i = detail::sqrt_clamped(ti.value);
                s2 += tc.multiplicity * wm * st_i * st_j;
                if (st_i > 0.0)
                    e2.add(mkey(3, i, tc.triple_id), tc.multiplicity * wm * st_j / (2.0 * st_i),
                           ti.std_error);
                if (st_j > 0.0)
                    e2.add(mkey(3, j, tc.triple_id), tc.multiplicity * wm * st_i / (2.0 * st_j),
                           tj.std_error);
            }
            for (const auto& sc : classes.singles) {
                const double pq = sp.p(sc.k) * sp.q(sc.k);
                const double w3 = std::abs(sp.p(sc.k) - sp.q(sc.k)) / std::sqrt(pq);
                const MomentEstimate m2i = backend.single_sq(i, sc.k, sc.moment_id);
                const MomentEstimate m4i = backend.single_4th(i, sc.k, sc.moment_id);
                const MomentEstimate m4j = i == j ? m4i : backend.single_4th(j, sc.k, sc.moment_id);
                if (w3 > 0.0) {
                    const double root_sq = detail::sqrt_clamped(m2i.value);
                    const double root_4 = detail::sqrt_clamped(m4j.value);
                    b3 += sc.multiplicity * w3 * root_sq * root_4;
                    if (root_sq > 0.0)
                        e3.add(mkey(0, i, sc.moment_id), sc.multiplicity * w3 * root_4 / (2.0 * root_sq),
                               m2i.std_error);
                    if (root_4 > 0.0)
                        e3.add(mkey(1, j, sc.moment_id), sc.multiplicity * w3 * root_sq / (2.0 * root_4),
                               m4j.std_error);
                }
                const double qi = m4i.value > 0.0 ? std::pow(m4i.value, 0.25) : 0.0;
                const double qj = m4j.value > 0.0 ? std::pow(m4j.value, 0.75) : 0.0;
                b4 += sc.multiplicity / pq * qi * qj;
                if (qi > 0.0 && m4i.value > 0.0)
                    e4.add(mkey(1, i, sc.moment_id),
                           sc.multiplicity / pq * qj * 0.25 * qi / m4i.value, m4i.std_error);
                if (qj > 0.0 && m4j.value > 0.0)
                    e4.add(mkey(1, j, sc.moment_id),
                           sc.multiplicity / pq * qi * 0.75 * qj / m4j.value, m4j.std_error);
            }
            const double b1 = detail::sqrt_clamped(15.0 / 4.0 * s1);
            const double b2 = detail::sqrt_clamped(3.0 / 4.0 * s2);
            r.b1(i, j) = b1;
            r.b2(i, j) = b2;
            r.b3(i, j) = 0.5 * dim_32 * b3;
            r.b4(i, j) = 5.0 / 12.0 * dim_sq * b4;
            r.b1_err(i, j) = b1 > 0.0 ? 15.0 / 4.0 * e1.std_error() / (2.0 * b1) : 0.0;
            r.b2_err(i, j) = b2 > 0.0 ? 3.0 / 4.0 * e2.std_error() / (2.0 * b2) : 0.0;
            r.b3_err(i, j) = 0.5 * dim_32 * e3.std_error();
            r.b4_err(i, j) = 5.0 / 12.0 * dim_sq * e4.std_error();
        }
    }
    r.total = total_bound(r);
    double terr = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            terr += r.b1_err(i, j) * r.b1_err(i, j) + r.b2_err(i, j) * r.b2_err(i, j) +
                    r.b3_err(i, j) * r.b3_err(i, j) + r.b4_err(i, j) * r.b4_err(i, j);
    r.total_err = 0.5 * std::sqrt(terr);
    return r;
}

// One Monte Carlo vs closed-form comparison per test function.
struct SurrogateRow {
    std::vector<double> a;
    double b = 0.0;
    double mc_mean = 0.0;
    double std_error = 0.0;
    double gaussian_mean = 0.0;
    double discrepancy = 0.0; // |mc - gaussian|
};

struct SurrogateReport {
    std::vector<SurrogateRow> rows;
    double max_discrepancy = 0.0;
    double max_discrepancy_std_error = 0.0;
    std::uint64_t samples = 0;
};

using VectorSampler = std::function<void(Rng&, std::span<double>)>;

// Lower-bound probe of the d4 distance: max over a cosine family of
// |E g(F) - E g(N)|, the F side by Monte Carlo, the N side in closed form.
// All family members share the sample stream.
inline SurrogateReport d4_surrogate(const VectorSampler& sampler, const GaussianTarget& target,
                                    const std::vector<CosineFunction>& family,
                                    std::uint64_t samples, std::uint64_t seed) {
    const int d = target.dim();
    for (const auto& g : family) {
        if (g.dim() != d) throw ValidationError("d4_surrogate: family dimension mismatch");
        for (double ai : g.a())
            if (std::abs(ai) > 1.0 + 1e-12)
                throw ValidationError("d4_surrogate: |a_i| must be <= 1 for the d4 class");
    }
    const std::uint64_t chunks = (samples + kMomentChunk - 1) / kMomentChunk;
    const std::size_t nf = family.size();
    std::vector<std::vector<double>> sums(chunks), sumsqs(chunks);
    detail::parallel_for_jobs(chunks, [&](std::uint64_t c) {
        Rng rng(seed, 0x5u, c);
        std::vector<double> x(d);
        std::vector<double> s(nf, 0.0), s2(nf, 0.0);
        const std::uint64_t lo = c * kMomentChunk;
        const std::uint64_t hi = std::min(samples, lo + kMomentChunk);
        for (std::uint64_t it = lo; it < hi; ++it) {
            sampler(rng, x);
            for (std::size_t g = 0; g < nf; ++g) {
                const double v = family[g].value(x);
                s[g] += v;
                s2[g] += v * v;
            }
        }
        sums[c] = std::move(s);
        sumsqs[c] = std::move(s2);
    });
    SurrogateReport rep;
    rep.samples = samples;
    for (std::size_t g = 0; g < nf; ++g) {
        double sum = 0.0, sumsq = 0.0;
        for (std::uint64_t c = 0; c < chunks; ++c) {
            sum += sums[c][g];
            sumsq += sumsqs[c][g];
        }
        SurrogateRow row;
        row.a = family[g].a();
        row.b = family[g].b();
        row.mc_mean = sum / double(samples);
        const double var = std::max(0.0, sumsq / double(samples) - row.mc_mean * row.mc_mean);
        row.std_error = std::sqrt(var / double(samples));
        row.gaussian_mean = family[g].gaussian_mean(target.sigma());
        row.discrepancy = std::abs(row.mc_mean - row.gaussian_mean);
        if (row.discrepancy > rep.max_discrepancy) {
            rep.max_discrepancy = row.discrepancy;
            rep.max_discrepancy_std_error = row.std_error;
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

// Validates the Gaussian sampler against the multivariate integration by
// parts identity: E[N_i g(N)] has a closed form for every cosine g. Returns
// the largest |z| over family members and coordinates.
inline double gaussian_ibp_check(const GaussianTarget& target,
                                 const std::vector<CosineFunction>& family,
                                 std::uint64_t samples, std::uint64_t seed) {
    const int d = target.dim();
    double worst = 0.0;
    Rng rng(seed, 0x61u);
    std::vector<double> x(d);
    const std::size_t nf = family.size();
    std::vector<double> sum(nf * d, 0.0), sumsq(nf * d, 0.0);
    for (std::uint64_t it = 0; it < samples; ++it) {
        target.sample_into(rng, x);
        for (std::size_t g = 0; g < nf; ++g) {
            const double v = family[g].value(x);
            for (int i = 0; i < d; ++i) {
                const double prod = x[i] * v;
                sum[g * d + i] += prod;
                sumsq[g * d + i] += prod * prod;
            }
        }
    }
    for (std::size_t g = 0; g < nf; ++g)
        for (int i = 0; i < d; ++i) {
            const double mean = sum[g * d + i] / double(samples);
            const double var =
                std::max(0.0, sumsq[g * d + i] / double(samples) - mean * mean);
            const double se = std::sqrt(var / double(samples));
            const double closed = family[g].gaussian_coordinate_mean(target.sigma(), i);
            const double diff = mean - closed;
            const double z = se > 0.0 ? diff / se : (std::abs(diff) < 1e-12 ? 0.0 : 1e18);
            worst = std::max(worst, std::abs(z));
        }
    return worst;
}

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

// Least-squares fit of log(bound) against log(n).
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& series) {
    if (series.size() < 3) throw ValidationError("fit_rate: need at least 3 points");
    std::vector<double> x, y;
    for (const auto& [n, v] : series) {
        if (!(n > 0.0) || !(v > 0.0)) throw ValidationError("fit_rate: points must be positive");
        x.push_back(std::log(n));
        y.push_back(std::log(v));
    }
    LineFit f = fit_line(x, y);
    return {f.slope, f.intercept, f.r_squared};
}

} // namespace radem
