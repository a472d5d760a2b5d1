#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace rwb {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline void axpy(Vec& y, double alpha, const Vec& x) {
    if (y.size() != x.size()) throw std::invalid_argument("axpy: size mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

/// Dense row-major square matrix; just enough for the per-arm design
/// matrices and Gaussian posteriors (dimension is 17 or 18 here).
class Mat {
  public:
    Mat() = default;
    explicit Mat(std::size_t n, double diag = 0.0) : n_(n), data_(n * n, 0.0) {
        for (std::size_t i = 0; i < n; ++i) (*this)(i, i) = diag;
    }

    static Mat identity(std::size_t n, double scale = 1.0) { return Mat(n, scale); }

    std::size_t size() const { return n_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * n_ + c]; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    /// A += w * x xᵀ
    void add_outer(const Vec& x, double w = 1.0) {
        if (x.size() != n_) throw std::invalid_argument("add_outer: size mismatch");
        for (std::size_t i = 0; i < n_; ++i) {
            const double wxi = w * x[i];
            for (std::size_t j = 0; j < n_; ++j) data_[i * n_ + j] += wxi * x[j];
        }
    }

    Vec mul(const Vec& x) const {
        if (x.size() != n_) throw std::invalid_argument("mul: size mismatch");
        Vec y(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n_; ++j) s += data_[i * n_ + j] * x[j];
            y[i] = s;
        }
        return y;
    }

  private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

/// Cholesky factorization A = L Lᵀ of a symmetric positive definite matrix.
/// ok() is false when A is not (numerically) SPD, which doubles as the
/// positive-definiteness check in the policy stress tests.
class Cholesky {
  public:
    explicit Cholesky(const Mat& a) : n_(a.size()), l_(a.size()) {
        ok_ = true;
        for (std::size_t i = 0; i < n_ && ok_; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double s = a(i, j);
                for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
                if (i == j) {
                    if (s <= 0.0 || !std::isfinite(s)) {
                        ok_ = false;
                        break;
                    }
                    l_(i, i) = std::sqrt(s);
                } else {
                    l_(i, j) = s / l_(j, j);
                }
            }
        }
    }

    bool ok() const { return ok_; }

    /// Solves A y = b.
    Vec solve(const Vec& b) const {
        Vec y = solve_lower(b);
        // back substitution with Lᵀ
        for (std::size_t ii = n_; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < n_; ++k) s -= l_(k, ii) * y[k];
            y[ii] = s / l_(ii, ii);
        }
        return y;
    }

    /// Solves L w = b (forward substitution).
    Vec solve_lower(const Vec& b) const {
        require_ok();
        if (b.size() != n_) throw std::invalid_argument("solve: size mismatch");
        Vec w(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = b[i];
            for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * w[k];
            w[i] = s / l_(i, i);
        }
        return w;
    }

    /// Solves Lᵀ y = b (back substitution). With A the precision matrix and
    /// z ~ N(0, I), solve_upper(z) is a draw from N(0, A⁻¹).
    Vec solve_upper(const Vec& b) const {
        require_ok();
        if (b.size() != n_) throw std::invalid_argument("solve: size mismatch");
        Vec y(n_, 0.0);
        for (std::size_t ii = n_; ii-- > 0;) {
            double s = b[ii];
            for (std::size_t k = ii + 1; k < n_; ++k) s -= l_(k, ii) * y[k];
            y[ii] = s / l_(ii, ii);
        }
        return y;
    }

    /// xᵀ A⁻¹ x = |L⁻¹x|².
    double quad_inverse(const Vec& x) const {
        const Vec w = solve_lower(x);
        double s = 0.0;
        for (double v : w) s += v * v;
        return s;
    }

    /// A⁻¹ reconstructed column by column; used only for reporting.
    Mat inverse() const {
        require_ok();
        Mat inv(n_);
        Vec e(n_, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            e[j] = 1.0;
            const Vec col = solve(e);
            for (std::size_t i = 0; i < n_; ++i) inv(i, j) = col[i];
            e[j] = 0.0;
        }
        return inv;
    }

  private:
    void require_ok() const {
        if (!ok_) throw std::runtime_error("cholesky: matrix not positive definite");
    }

    std::size_t n_;
    Mat l_;
    bool ok_ = false;
};

inline int argmax_lowest(const Vec& scores) {
    if (scores.empty()) throw std::invalid_argument("argmax of empty vector");
    int best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = static_cast<int>(i);
    return best;
}

}  // namespace rwb
