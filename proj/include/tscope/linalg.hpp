#pragma once

// Small dense linear algebra for state dimensions up to 4.  Everything is
// value-semantic and allocation-free; sizes are runtime but bounded.

#include <array>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <stdexcept>

namespace tscope {

inline constexpr int kMaxDim = 4;

class Vec {
public:
    Vec() = default;
    explicit Vec(int n, double fill = 0.0) : n_(check(n)) { data_.fill(0.0); for (int i = 0; i < n_; ++i) data_[i] = fill; }
    Vec(std::initializer_list<double> xs) : n_(check(static_cast<int>(xs.size()))) {
        data_.fill(0.0);
        int i = 0;
        for (double x : xs) data_[i++] = x;
    }

    int size() const { return n_; }
    double& operator[](int i) { return data_[i]; }
    double operator[](int i) const { return data_[i]; }

    Vec& operator+=(const Vec& o) { for (int i = 0; i < n_; ++i) data_[i] += o[i]; return *this; }
    Vec& operator-=(const Vec& o) { for (int i = 0; i < n_; ++i) data_[i] -= o[i]; return *this; }
    Vec& operator*=(double s) { for (int i = 0; i < n_; ++i) data_[i] *= s; return *this; }

    friend Vec operator+(Vec a, const Vec& b) { return a += b; }
    friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
    friend Vec operator*(double s, Vec a) { return a *= s; }
    friend Vec operator*(Vec a, double s) { return a *= s; }
    friend Vec operator-(Vec a) { return a *= -1.0; }

    double norm() const {
        double s = 0.0;
        for (int i = 0; i < n_; ++i) s += data_[i] * data_[i];
        return std::sqrt(s);
    }
    double norm_inf() const {
        double m = 0.0;
        for (int i = 0; i < n_; ++i) m = std::max(m, std::abs(data_[i]));
        return m;
    }

private:
    static int check(int n) {
        if (n < 0 || n > kMaxDim) throw std::length_error("Vec: dimension out of range");
        return n;
    }
    int n_ = 0;
    std::array<double, kMaxDim> data_{};
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols) : r_(rows), c_(cols) {
        if (rows < 0 || rows > kMaxDim || cols < 0 || cols > kMaxDim)
            throw std::length_error("Mat: dimension out of range");
        data_.fill(0.0);
    }
    Mat(int rows, int cols, std::initializer_list<double> xs) : Mat(rows, cols) {
        if (static_cast<int>(xs.size()) != rows * cols)
            throw std::length_error("Mat: initializer size mismatch");
        int i = 0;
        for (double x : xs) {
            (*this)(i / cols, i % cols) = x;
            ++i;
        }
    }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return r_; }
    int cols() const { return c_; }
    double& operator()(int i, int j) { return data_[i * kMaxDim + j]; }
    double operator()(int i, int j) const { return data_[i * kMaxDim + j]; }

    Mat& operator+=(const Mat& o) {
        for (int i = 0; i < r_; ++i)
            for (int j = 0; j < c_; ++j) (*this)(i, j) += o(i, j);
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        for (int i = 0; i < r_; ++i)
            for (int j = 0; j < c_; ++j) (*this)(i, j) -= o(i, j);
        return *this;
    }
    Mat& operator*=(double s) {
        for (int i = 0; i < r_; ++i)
            for (int j = 0; j < c_; ++j) (*this)(i, j) *= s;
        return *this;
    }
    friend Mat operator+(Mat a, const Mat& b) { return a += b; }
    friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
    friend Mat operator*(double s, Mat a) { return a *= s; }

    friend Vec operator*(const Mat& m, const Vec& v) {
        Vec out(m.r_);
        for (int i = 0; i < m.r_; ++i) {
            double s = 0.0;
            for (int j = 0; j < m.c_; ++j) s += m(i, j) * v[j];
            out[i] = s;
        }
        return out;
    }
    friend Mat operator*(const Mat& a, const Mat& b) {
        Mat out(a.r_, b.c_);
        for (int i = 0; i < a.r_; ++i)
            for (int j = 0; j < b.c_; ++j) {
                double s = 0.0;
                for (int k = 0; k < a.c_; ++k) s += a(i, k) * b(k, j);
                out(i, j) = s;
            }
        return out;
    }

    Vec col(int j) const {
        Vec v(r_);
        for (int i = 0; i < r_; ++i) v[i] = (*this)(i, j);
        return v;
    }

    double norm_inf() const {
        double m = 0.0;
        for (int i = 0; i < r_; ++i)
            for (int j = 0; j < c_; ++j) m = std::max(m, std::abs((*this)(i, j)));
        return m;
    }

private:
    int r_ = 0, c_ = 0;
    std::array<double, kMaxDim * kMaxDim> data_{};
};

// Gaussian elimination with partial pivoting; throws on (near-)singular input.
inline Vec solve(Mat a, Vec b) {
    const int n = a.rows();
    std::array<int, kMaxDim> perm{};
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(b[k], b[piv]);
        }
        if (a(k, k) == 0.0) throw std::domain_error("solve: singular matrix");
        for (int i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            for (int j = k; j < n; ++j) a(i, j) -= f * a(k, j);
            b[i] -= f * b[k];
        }
    }
    Vec x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
        x[i] = s / a(i, i);
    }
    return x;
}

inline Mat inverse(const Mat& a) {
    const int n = a.rows();
    Mat inv(n, n);
    for (int j = 0; j < n; ++j) {
        Vec e(n);
        e[j] = 1.0;
        Vec x = solve(a, e);
        for (int i = 0; i < n; ++i) inv(i, j) = x[i];
    }
    return inv;
}

// Eigen-structure of a real 2x2 matrix with a complex-conjugate pair.
struct EigenPair2 {
    bool complex_pair = false;           // discriminant < 0
    std::complex<double> lambda;         // eigenvalue with Im > 0 when complex
    std::complex<double> v1, v2;         // eigenvector components (row convention below)
};

// Eigenvector taken from the matrix row with the larger residual entry, in the
// textbook form v = (lambda - a22, a21) or (a12, lambda - a11).  The row choice
// and scale are part of the frame convention used downstream.
inline EigenPair2 eigen2(const Mat& m) {
    EigenPair2 out;
    const double tr = m(0, 0) + m(1, 1);
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = tr * tr / 4.0 - det;
    if (disc >= 0.0) {
        out.complex_pair = false;
        out.lambda = {tr / 2.0 + std::sqrt(disc), 0.0};
        return out;
    }
    out.complex_pair = true;
    const double re = tr / 2.0, im = std::sqrt(-disc);
    out.lambda = {re, im};
    if (std::abs(m(1, 0)) >= std::abs(m(0, 1))) {
        out.v1 = out.lambda - std::complex<double>(m(1, 1), 0.0);
        out.v2 = {m(1, 0), 0.0};
    } else {
        out.v1 = {m(0, 1), 0.0};
        out.v2 = out.lambda - std::complex<double>(m(0, 0), 0.0);
    }
    return out;
}

}  // namespace tscope
