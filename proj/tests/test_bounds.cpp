#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "radem/bounds.hpp"
#include "radem/chaos.hpp"
#include "radem/graphs.hpp"

using namespace radem;

namespace {

RademacherSpace skew_space(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> p(n);
    for (auto& x : p) x = 0.15 + 0.7 * rng.uniform();
    return RademacherSpace(p);
}

} // namespace

TEST_CASE("moment estimation, exact and sampled") {
    RademacherSpace half(2, 0.5);
    PolynomialFunctional y1(half, {{0b01, 1.0}});
    PolynomialFunctional y1y2(half, {{0b11, 1.0}});

    // E[(D_1 Y_1)^2] = 1: constant integrand
    MomentEstimate c = estimate_moment_mc(half, {{&y1, 0, -1, 2}}, 5000, 7);
    REQUIRE(c.value == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(c.std_error == Catch::Approx(0.0).margin(1e-12));

    // |D_1 (Y1 Y2)| = |Y_2| = 1 pointwise at p = 1/2
    MomentEstimate m = estimate_moment_mc(half, {{&y1y2, 0, -1, 2}}, 5000, 8);
    REQUIRE(m.value == Catch::Approx(1.0).margin(1e-12));

    MomentEstimate e = estimate_moment_exact(half, {{&y1y2, 0, -1, 2}});
    REQUIRE(e.exact);
    REQUIRE(e.value == Catch::Approx(1.0).margin(1e-13));

    REQUIRE_THROWS_AS(estimate_moment_mc(half, {{&y1, 0, -1, 2}}, 1, 1), ValidationError);
    RademacherSpace big(20, 0.5);
    PolynomialFunctional f(big, {{1, 1.0}});
    REQUIRE_THROWS_AS(estimate_moment_exact(big, {{&f, 0, -1, 2}}), CapacityError);
}

TEST_CASE("monte carlo tracks exact moments within four standard errors") {
    RademacherSpace sp = skew_space(8, 3);
    Rng rng(5);
    int failures = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
        PolynomialFunctional f = PolynomialFunctional::random(sp, rng, 10);
        const int k = int(rng() % 8);
        const int l = int((k + 1 + rng() % 7) % 8);
        DerivativeProduct prod{{&f, k, -1, 2}, {&f, l, -1, 2}};
        MomentEstimate exact = estimate_moment_exact(sp, prod);
        MomentEstimate mc = estimate_moment_mc(sp, prod, 10000, 1000 + t);
        const double tol = 4.0 * mc.std_error + 1e-12;
        if (std::abs(mc.value - exact.value) > tol) ++failures;
    }
    REQUIRE(failures <= 1); // ~99.99% per trial, allow one fluke
}

TEST_CASE("sampling is deterministic and thread-count independent") {
    RademacherSpace sp = skew_space(6, 9);
    Rng rng(1);
    PolynomialFunctional f = PolynomialFunctional::random(sp, rng);
    DerivativeProduct prod{{&f, 1, -1, 2}, {&f, 3, 1, 2}};
    setenv("RADEM_THREADS", "1", 1);
    MomentEstimate a = estimate_moment_mc(sp, prod, 30000, 42);
    setenv("RADEM_THREADS", "4", 1);
    MomentEstimate b = estimate_moment_mc(sp, prod, 30000, 42);
    unsetenv("RADEM_THREADS");
    REQUIRE(a.value == b.value);
    REQUIRE(a.std_error == b.std_error);
}

TEST_CASE("b terms closed forms for a single coordinate") {
    RademacherSpace half(1, 0.5);
    PolynomialFunctional y1(half, {{1, 1.0}});
    Matrix sigma = Matrix::identity(1);
    Matrix cov = Matrix::identity(1); // Var(Y_1) = 1
    SymmetryClasses cls = SymmetryClasses::full_enumeration(half, {&y1});
    BoundReport rep = b_terms({&y1}, half, cls, sigma, cov);
    REQUIRE(rep.exact);
    REQUIRE(rep.b1(0, 0) == 0.0);
    REQUIRE(rep.b2(0, 0) == 0.0);
    REQUIRE(rep.b3(0, 0) == 0.0);
    REQUIRE(rep.b4(0, 0) == Catch::Approx(5.0 / 3.0).margin(1e-12));
    REQUIRE(rep.total == Catch::Approx(5.0 / 6.0).margin(1e-12));
    REQUIRE(total_bound(rep) == Catch::Approx(rep.total));

    RademacherSpace quarter(1, 0.25);
    PolynomialFunctional z(quarter, {{1, 1.0}});
    SymmetryClasses cls2 = SymmetryClasses::full_enumeration(quarter, {&z});
    BoundReport rep2 = b_terms({&z}, quarter, cls2, sigma, cov);
    REQUIRE(rep2.b3(0, 0) == Catch::Approx(1.0 / std::sqrt(3.0)).margin(1e-12));
    REQUIRE(rep2.b4(0, 0) == Catch::Approx(20.0 / 9.0).margin(1e-12));
}

TEST_CASE("b3 vanishes in the symmetric case") {
    RademacherSpace half(5, 0.5);
    Rng rng(11);
    PolynomialFunctional f = PolynomialFunctional::random(half, rng);
    PolynomialFunctional g = PolynomialFunctional::random(half, rng);
    std::vector<const Functional*> fs{&f, &g};
    SymmetryClasses cls = SymmetryClasses::full_enumeration(half, fs);
    Matrix sigma(2, 2), cov(2, 2);
    BoundReport rep = b_terms(fs, half, cls, sigma, cov);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) REQUIRE(rep.b3(i, j) == 0.0);
}

TEST_CASE("total bound structure") {
    // d = 2 vector with the same component twice: every (i,j) bracket is
    // equal, so the total is four times the (0,0) bracket over two
    RademacherSpace half(2, 0.5);
    PolynomialFunctional ya(half, {{0b01, 1.0}});
    std::vector<const Functional*> fs{&ya, &ya};
    Matrix sigma = Matrix::identity(2);
    sigma(0, 1) = sigma(1, 0) = 1.0;
    SymmetryClasses cls = SymmetryClasses::full_enumeration(half, fs);
    BoundReport rep = b_terms(fs, half, cls, sigma, sigma);
    const double bracket00 =
        rep.gap(0, 0) + rep.b1(0, 0) + rep.b2(0, 0) + rep.b3(0, 0) + rep.b4(0, 0);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            REQUIRE(rep.gap(i, j) + rep.b1(i, j) + rep.b2(i, j) + rep.b3(i, j) + rep.b4(i, j) ==
                    Catch::Approx(bracket00).margin(1e-12));
    REQUIRE(rep.total == Catch::Approx(4.0 * bracket00 / 2.0).margin(1e-12));
}

TEST_CASE("scaling: Hoelder exponents in B4 sum to one") {
    RademacherSpace sp = skew_space(5, 21);
    Rng rng(13);
    PolynomialFunctional f = PolynomialFunctional::random(sp, rng);
    LambdaFunctional f2([&](const Configuration& w) { return 2.0 * f.value(w); });
    SymmetryClasses cls = SymmetryClasses::full_enumeration(sp, {&f});
    Matrix z(1, 1);
    BoundReport r1 = b_terms({&f}, sp, cls, z, z);
    BoundReport r2 = b_terms({&f2}, sp, cls, z, z);
    // B4 is 1-homogeneous in the fourth-moment table (exponents 1/4 + 3/4),
    // so F -> cF scales it by c^4; B3 scales by c^3 and B1 by c^2, matching
    // the quartic/cubic/quadratic A-terms they dominate
    REQUIRE(r2.b4(0, 0) == Catch::Approx(16.0 * r1.b4(0, 0)).epsilon(1e-10));
    REQUIRE(r2.b3(0, 0) == Catch::Approx(8.0 * r1.b3(0, 0)).epsilon(1e-10));
    REQUIRE(r2.b1(0, 0) == Catch::Approx(4.0 * r1.b1(0, 0)).epsilon(1e-10));
}

TEST_CASE("exact and sampled b terms agree within four standard errors") {
    const int n = 5;
    EdgeIndexer idx(n);
    const double p = 0.35;
    RademacherSpace sp(idx.edges(), p);
    NormalizedSubgraphFunctional tri(builtin_pattern("triangle"), n, p);
    NormalizedSubgraphFunctional path(builtin_pattern("path2"), n, p);
    std::vector<const Functional*> fs{&tri, &path};
    SymmetryClasses cls = er_symmetry_classes(idx, fs);
    Matrix z(2, 2);
    BTermsOptions exact_opt;
    exact_opt.backend = BTermsOptions::Backend::Exact;
    exact_opt.exact_limit = idx.edges();
    BoundReport exact = b_terms(fs, sp, cls, z, z, exact_opt);
    BTermsOptions mc_opt;
    mc_opt.backend = BTermsOptions::Backend::Mc;
    mc_opt.samples = 30000;
    mc_opt.seed = 5;
    BoundReport mc = b_terms(fs, sp, cls, z, z, mc_opt);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            REQUIRE(std::abs(mc.b1(i, j) - exact.b1(i, j)) <= 4.0 * mc.b1_err(i, j) + 1e-6);
            REQUIRE(std::abs(mc.b2(i, j) - exact.b2(i, j)) <= 4.0 * mc.b2_err(i, j) + 1e-6);
            REQUIRE(std::abs(mc.b3(i, j) - exact.b3(i, j)) <= 4.0 * mc.b3_err(i, j) + 1e-6);
            REQUIRE(std::abs(mc.b4(i, j) - exact.b4(i, j)) <= 4.0 * mc.b4_err(i, j) + 1e-6);
        }
    REQUIRE(std::abs(mc.total - exact.total) <= 4.0 * mc.total_err + 1e-5);
}

TEST_CASE("exact A total never exceeds exact B total") {
    Rng rng(17);
    int strict = 0;
    for (int t = 0; t < 12; ++t) {
        const int n = 4 + int(rng() % 5);
        const int d = 1 + int(rng() % 3);
        RademacherSpace sp = skew_space(n, rng());
        std::vector<PolynomialFunctional> raw;
        std::vector<double> means;
        for (int i = 0; i < d; ++i) {
            raw.push_back(PolynomialFunctional::random(sp, rng, 10));
            means.push_back(walsh_expand(raw.back(), sp).mean());
        }
        std::vector<std::unique_ptr<Functional>> centered;
        std::vector<const Functional*> fs;
        for (int i = 0; i < d; ++i) {
            const PolynomialFunctional* base = &raw[i];
            const double mean = means[i];
            centered.push_back(std::make_unique<LambdaFunctional>(
                [base, mean](const Configuration& w) { return base->value(w) - mean; }));
            fs.push_back(centered.back().get());
        }
        // Sigma = exact covariance, computed by enumeration
        Matrix cov(d, d);
        for (std::uint64_t m = 0; m < (std::uint64_t(1) << n); ++m) {
            const double w = sp.weight_mask(m);
            Configuration cfg = Configuration::from_mask(n, m);
            std::vector<double> x(d);
            for (int i = 0; i < d; ++i) x[i] = fs[i]->value(cfg);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) cov(i, j) += w * x[i] * x[j];
        }
        BoundReport a = exact_a_terms(fs, cov, sp);
        SymmetryClasses cls = SymmetryClasses::full_enumeration(sp, fs);
        BoundReport b = b_terms(fs, sp, cls, cov, cov);
        REQUIRE(a.total <= b.total + 1e-10);
        if (a.total < b.total - 1e-10) ++strict;
    }
    REQUIRE(strict >= 1);
}

TEST_CASE("psd factor") {
    Matrix id = Matrix::identity(3);
    Matrix s = psd_factor(id);
    REQUIRE((s * s.transposed()).max_abs_diff(id) < 1e-12);

    Matrix rank1(2, 2);
    rank1(0, 0) = 1.0;
    rank1(0, 1) = rank1(1, 0) = 2.0;
    rank1(1, 1) = 4.0;
    Matrix f = psd_factor(rank1);
    REQUIRE((f * f.transposed()).max_abs_diff(rank1) < 1e-8);
    // one column must vanish (rank one), the other is proportional to (1,2)
    const double c0 = std::abs(f(0, 0)) + std::abs(f(1, 0));
    const double c1 = std::abs(f(0, 1)) + std::abs(f(1, 1));
    const double zero_col = std::min(c0, c1);
    REQUIRE(zero_col < 1e-10);
    const int live = c0 > c1 ? 0 : 1;
    REQUIRE(f(1, live) == Catch::Approx(2.0 * f(0, live)).margin(1e-10));

    Matrix zero(2, 2);
    REQUIRE((psd_factor(zero) * psd_factor(zero).transposed()).max_abs_diff(zero) < 1e-14);

    Matrix neg(1, 1);
    neg(0, 0) = -1.0;
    REQUIRE_THROWS_AS(psd_factor(neg), ValidationError);
    Matrix asym(2, 2);
    asym(0, 1) = 1.0;
    REQUIRE_THROWS_AS(psd_factor(asym), ValidationError);
}

TEST_CASE("d4 surrogate closed forms and self-consistency") {
    Matrix one = Matrix::identity(1);
    GaussianTarget target(one);
    CosineFunction flat({0.0}, 0.0);
    CosineFunction unit({1.0}, 0.0);
    REQUIRE(flat.gaussian_mean(one) == Catch::Approx(1.0));
    REQUIRE(unit.gaussian_mean(one) == Catch::Approx(0.6065306597126334).margin(1e-12));

    // F sampled from the target itself: discrepancies are pure noise
    VectorSampler self = [&](Rng& rng, std::span<double> out) { target.sample_into(rng, out); };
    SurrogateReport rep = d4_surrogate(self, target, {flat, unit}, 40000, 99);
    REQUIRE(rep.rows[0].discrepancy == Catch::Approx(0.0).margin(1e-12)); // constant integrand
    REQUIRE(rep.rows[1].discrepancy <= 5.0 * rep.rows[1].std_error + 1e-12);

    CosineFunction bad({1.5}, 0.0);
    REQUIRE_THROWS_AS(d4_surrogate(self, target, {bad}, 1000, 1), ValidationError);
}

TEST_CASE("gaussian integration by parts closed form") {
    Matrix one = Matrix::identity(1);
    GaussianTarget t1(one);
    // a = 1, b = pi/2: E[N cos(N + pi/2)] = -e^{-1/2}
    CosineFunction g({1.0}, std::numbers::pi / 2.0);
    REQUIRE(g.gaussian_coordinate_mean(one, 0) == Catch::Approx(-std::exp(-0.5)).margin(1e-12));
    CosineFunction flat({0.0}, 0.3);
    REQUIRE(flat.gaussian_coordinate_mean(one, 0) == 0.0);

    REQUIRE(gaussian_ibp_check(t1, default_cosine_family(1, 8), 40000, 7) <= 4.0);

    Matrix rank1(2, 2);
    rank1(0, 0) = 1.0;
    rank1(0, 1) = rank1(1, 0) = 2.0;
    rank1(1, 1) = 4.0;
    GaussianTarget t2(rank1);
    REQUIRE(gaussian_ibp_check(t2, default_cosine_family(2, 16), 40000, 8) <= 4.0);
}

TEST_CASE("rate fitting") {
    std::vector<std::pair<double, double>> inv, half, flat;
    for (double n : {8.0, 16.0, 32.0, 64.0}) {
        inv.emplace_back(n, 3.0 / n);
        half.emplace_back(n, 2.0 / std::sqrt(n));
        flat.emplace_back(n, 0.7);
    }
    REQUIRE(fit_rate(inv).slope == Catch::Approx(-1.0).margin(1e-12));
    REQUIRE(fit_rate(half).slope == Catch::Approx(-0.5).margin(1e-12));
    REQUIRE(fit_rate(flat).slope == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(fit_rate(inv).r_squared == Catch::Approx(1.0).margin(1e-10));
    REQUIRE_THROWS_AS(fit_rate({{2.0, 1.0}, {4.0, 0.5}}), ValidationError);
    REQUIRE_THROWS_AS(fit_rate({{2.0, 1.0}, {4.0, 0.5}, {8.0, -1.0}}), ValidationError);
}
