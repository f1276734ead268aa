#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace cfx {

// Dense row-major matrix. Just enough for the small models in this project.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    double* row(std::size_t r) { return a.data() + r * cols; }
    const double* row(std::size_t r) const { return a.data() + r * cols; }

    void fill(double v) { a.assign(a.size(), v); }

    bool operator==(const Matrix&) const = default;
};

// y = M x
inline void matvec(const Matrix& m, const double* x, double* y) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

// y += M^T x   (x has m.rows entries, y has m.cols)
inline void matvec_transpose_add(const Matrix& m, const double* x, double* y) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        const double xr = x[r];
        for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
    }
}

// M += u v^T
inline void outer_add(Matrix& m, const double* u, const double* v) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        const double ur = u[r];
        for (std::size_t c = 0; c < m.cols; ++c) row[c] += ur * v[c];
    }
}

inline double dot(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

inline double norm2(const double* x, std::size_t n) {
    return std::sqrt(dot(x, x, n));
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Binary cross-entropy evaluated from the logit; never overflows.
inline double bce_from_logit(double logit, double label) {
    return std::fmax(logit, 0.0) - logit * label + std::log1p(std::exp(-std::fabs(logit)));
}

}  // namespace cfx
