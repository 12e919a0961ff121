// Dense square matrix, row-major. Gram matrices at the few-thousand-instance
// scale this library targets fit in memory, so nothing sparse or lazy lives here.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pmi {

class Matrix {
public:
    Matrix() = default;
    explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {}

    std::size_t size() const { return n_; }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    const std::vector<double>& data() const { return a_; }

    double trace() const {
        double t = 0.0;
        for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
        return t;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : a_) m = std::max(m, std::abs(v));
        return m;
    }

    bool is_symmetric(double tol) const {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j)
                if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
        return true;
    }

    // y = M x
    std::vector<double> multiply(const std::vector<double>& x) const {
        if (x.size() != n_) throw std::invalid_argument("matrix/vector size mismatch");
        std::vector<double> y(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            const double* row = a_.data() + i * n_;
            double acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) acc += row[j] * x[j];
            y[i] = acc;
        }
        return y;
    }

    // xᵀ M y
    double quad(const std::vector<double>& x, const std::vector<double>& y) const {
        if (x.size() != n_ || y.size() != n_)
            throw std::invalid_argument("matrix/vector size mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double* row = a_.data() + i * n_;
            double ri = 0.0;
            for (std::size_t j = 0; j < n_; ++j) ri += row[j] * y[j];
            acc += x[i] * ri;
        }
        return acc;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> a_;
};

}  // namespace pmi
