#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "radem/common.hpp"

namespace radem {

// Small dense row-major matrix. Everything in this library is d x d with
// d at most a few dozen, so no attempt at being clever.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(std::size_t(rows) * cols, fill) {}

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& operator()(int i, int j) { return v_[std::size_t(i) * cols_ + j]; }
    double operator()(int i, int j) const { return v_[std::size_t(i) * cols_ + j]; }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix operator*(const Matrix& o) const {
        Matrix r(rows_, o.cols_);
        for (int i = 0; i < rows_; ++i)
            for (int k = 0; k < cols_; ++k) {
                const double a = (*this)(i, k);
                if (a == 0.0) continue;
                for (int j = 0; j < o.cols_; ++j) r(i, j) += a * o(k, j);
            }
        return r;
    }

    double max_abs_diff(const Matrix& o) const {
        double m = 0.0;
        for (std::size_t i = 0; i < v_.size(); ++i) m = std::max(m, std::abs(v_[i] - o.v_[i]));
        return m;
    }

    double max_asymmetry() const {
        double m = 0.0;
        for (int i = 0; i < rows_; ++i)
            for (int j = i + 1; j < cols_; ++j) m = std::max(m, std::abs((*this)(i, j) - (*this)(j, i)));
        return m;
    }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

struct EigenDecomposition {
    std::vector<double> values; // ascending
    Matrix vectors;             // columns are eigenvectors
};

// Cyclic Jacobi iteration for symmetric matrices. Deterministic and accurate
// to near machine precision for the small matrices used here.
inline EigenDecomposition symmetric_eigen(const Matrix& a_in) {
    if (a_in.rows() != a_in.cols()) throw ValidationError("symmetric_eigen: matrix not square");
    const int n = a_in.rows();
    Matrix a = a_in;
    Matrix v = Matrix::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    EigenDecomposition e;
    e.values.resize(n);
    for (int i = 0; i < n; ++i) e.values[i] = a(i, i);
    // sort ascending, permuting columns to match
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (e.values[order[j]] < e.values[order[i]]) std::swap(order[i], order[j]);
    EigenDecomposition out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (int c = 0; c < n; ++c) {
        out.values[c] = e.values[order[c]];
        for (int r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
    }
    return out;
}

// Ordinary least squares y = slope*x + intercept, plus r^2.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 1.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit_line: need >= 2 points");
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    const double cxy = sxy - sx * sy / n;
    if (vx <= 0.0) throw ValidationError("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = cxy / vx;
    f.intercept = (sy - f.slope * sx) / n;
    f.r_squared = vy > 0.0 ? (cxy * cxy) / (vx * vy) : 1.0;
    return f;
}

} // namespace radem
