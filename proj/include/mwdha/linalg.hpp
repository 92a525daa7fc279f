#pragma once

#include <initializer_list>
#include <vector>

#include "mwdha/errors.hpp"

namespace mwdha {

using Vec = std::vector<double>;

// Dense square matrix, row-major. Sizes here are tiny (n <= 16).
class Mat {
public:
    Mat() = default;
    explicit Mat(int n, double fill = 0.0) : n_(n), a_(static_cast<size_t>(n) * n, fill) {}
    Mat(std::initializer_list<std::initializer_list<double>> rows);

    static Mat identity(int n);
    static Mat diag(const Vec& d);
    static Mat from_rows(const std::vector<Vec>& rows);
    static Mat from_flat(int n, const double* p);

    int n() const { return n_; }
    double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * n_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * n_ + j]; }
    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }

    Mat transpose() const;
    Mat operator*(const Mat& o) const;
    Mat operator+(const Mat& o) const;
    Mat operator-(const Mat& o) const;
    Mat operator*(double s) const;
    Vec operator*(const Vec& v) const;

    double max_abs() const;
    double frobenius() const;
    std::vector<Vec> rows() const;

private:
    int n_ = 0;
    std::vector<double> a_;
};

struct Eigen {
    Vec values;   // descending
    Mat vectors;  // columns
};

// Cyclic Jacobi. Throws ValidationError on non-symmetric input.
Eigen sym_eig(const Mat& m);

// Q diag(lambda^t) Q^T. Throws SingularityError when the smallest eigenvalue
// is at or below 1e-12 * largest.
Mat spd_power(const Mat& m, double t);

double op_norm(const Mat& m);
double vec_norm(const Vec& v);

// Spectral norm of a flat 2x2 row-major block, closed form.
double op_norm2(const double* m);

struct EllipsoidFit {
    Mat shape;  // E with {x : |E x| <= 1} enclosing the points
    int iterations = 0;
    double gap = 0.0;  // kappa / n - 1 at exit
    double kappa = 0.0;
};

// Minimum-volume ellipsoid centred at the origin (Khachiyan iteration with
// Todd-Yildirim away steps). Intended for point sets symmetric under negation.
EllipsoidFit mvee(const std::vector<Vec>& points, double tol = 1e-6, int max_iter = 100000);

constexpr double kEigFloor = 1e-12;

}  // namespace mwdha
