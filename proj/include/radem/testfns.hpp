#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "radem/common.hpp"
#include "radem/matrix.hpp"

namespace radem {

// Smooth test function R^d -> R with explicit partial derivatives and
// per-partial supremum-norm bounds.
class SmoothTestFunction {
public:
    virtual ~SmoothTestFunction() = default;
    virtual int dim() const = 0;
    virtual double value(std::span<const double> x) const = 0;
    virtual double partial1(int i, std::span<const double> x) const = 0;
    virtual double partial2(int i, int j, std::span<const double> x) const = 0;
    virtual double partial3(int i, int j, int l, std::span<const double> x) const = 0;
    // sup norm of the specific third partial d^3/dx_i dx_j dx_l
    virtual double sup_norm3(int i, int j, int l) const = 0;
    virtual double m2() const = 0; // max over (i,j) of sup|partial2|
    virtual double m3() const = 0; // max over (i,j,l) of sup|partial3|
};

// g(x) = cos(<a,x> + b). All derivative sup norms are products of |a_i|, so
// requiring |a_i| <= 1 yields M_1,...,M_4 <= 1.
class CosineFunction final : public SmoothTestFunction {
public:
    CosineFunction(std::vector<double> a, double b) : a_(std::move(a)), b_(b) {}

    int dim() const override { return int(a_.size()); }

    double phase(std::span<const double> x) const {
        double s = b_;
        for (int i = 0; i < dim(); ++i) s += a_[i] * x[i];
        return s;
    }

    double value(std::span<const double> x) const override { return std::cos(phase(x)); }
    double partial1(int i, std::span<const double> x) const override {
        return -a_[i] * std::sin(phase(x));
    }
    double partial2(int i, int j, std::span<const double> x) const override {
        return -a_[i] * a_[j] * std::cos(phase(x));
    }
    double partial3(int i, int j, int l, std::span<const double> x) const override {
        return a_[i] * a_[j] * a_[l] * std::sin(phase(x));
    }
    double sup_norm3(int i, int j, int l) const override {
        return std::abs(a_[i] * a_[j] * a_[l]);
    }
    double m2() const override {
        double m = 0.0;
        for (double ai : a_)
            for (double aj : a_) m = std::max(m, std::abs(ai * aj));
        return m;
    }
    double m3() const override {
        double m = 0.0;
        for (double ai : a_)
            for (double aj : a_)
                for (double al : a_) m = std::max(m, std::abs(ai * aj * al));
        return m;
    }

    const std::vector<double>& a() const { return a_; }
    double b() const { return b_; }

    // E[cos(<a,N> + b)] for N ~ N(0, Sigma)
    double gaussian_mean(const Matrix& sigma) const {
        return std::cos(b_) * std::exp(-0.5 * quad_form(sigma));
    }

    // E[N_i cos(<a,N> + b)] = -sin(b) exp(-a'Sigma a/2) (Sigma a)_i
    double gaussian_coordinate_mean(const Matrix& sigma, int i) const {
        double sa = 0.0;
        for (int j = 0; j < dim(); ++j) sa += sigma(i, j) * a_[j];
        return -std::sin(b_) * std::exp(-0.5 * quad_form(sigma)) * sa;
    }

private:
    double quad_form(const Matrix& sigma) const {
        double q = 0.0;
        for (int i = 0; i < dim(); ++i)
            for (int j = 0; j < dim(); ++j) q += a_[i] * sigma(i, j) * a_[j];
        return q;
    }
    std::vector<double> a_;
    double b_;
};

// f(x) = c0 + <c,x> + x'Qx with symmetric Q. Third derivatives vanish.
class QuadraticFunction final : public SmoothTestFunction {
public:
    QuadraticFunction(double c0, std::vector<double> c, Matrix q)
        : c0_(c0), c_(std::move(c)), q_(std::move(q)) {}

    static QuadraticFunction linear(std::vector<double> c) {
        const int d = int(c.size());
        return QuadraticFunction(0.0, std::move(c), Matrix(d, d));
    }

    int dim() const override { return int(c_.size()); }
    double value(std::span<const double> x) const override {
        double s = c0_;
        for (int i = 0; i < dim(); ++i) {
            s += c_[i] * x[i];
            for (int j = 0; j < dim(); ++j) s += x[i] * q_(i, j) * x[j];
        }
        return s;
    }
    double partial1(int i, std::span<const double> x) const override {
        double s = c_[i];
        for (int j = 0; j < dim(); ++j) s += 2.0 * q_(i, j) * x[j];
        return s;
    }
    double partial2(int i, int j, std::span<const double>) const override { return 2.0 * q_(i, j); }
    double partial3(int, int, int, std::span<const double>) const override { return 0.0; }
    double sup_norm3(int, int, int) const override { return 0.0; }
    double m2() const override {
        double m = 0.0;
        for (int i = 0; i < dim(); ++i)
            for (int j = 0; j < dim(); ++j) m = std::max(m, std::abs(2.0 * q_(i, j)));
        return m;
    }
    double m3() const override { return 0.0; }

private:
    double c0_;
    std::vector<double> c_;
    Matrix q_;
};

// Deterministic cosine family: every sign pattern of a over magnitudes
// {1, 1/2}, phases b in {0, pi/4}; capped to the requested size.
inline std::vector<CosineFunction> default_cosine_family(int dim, int max_members = 0) {
    std::vector<CosineFunction> fam;
    const double mags[2] = {1.0, 0.5};
    const double phases[2] = {0.0, std::numbers::pi / 4.0};
    for (int signs = 0; signs < (1 << dim); ++signs)
        for (double mag : mags)
            for (double b : phases) {
                std::vector<double> a(dim);
                for (int i = 0; i < dim; ++i) a[i] = ((signs >> i) & 1 ? -mag : mag);
                fam.emplace_back(std::move(a), b);
            }
    if (max_members > 0 && int(fam.size()) > max_members)
        fam.erase(fam.begin() + max_members, fam.end());
    return fam;
}

} // namespace radem
