#include "mwdha/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mwdha {

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
    n_ = static_cast<int>(rows.size());
    a_.reserve(static_cast<size_t>(n_) * n_);
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != n_) throw ValidationError("matrix rows must be square");
        a_.insert(a_.end(), r.begin(), r.end());
    }
}

Mat Mat::identity(int n) {
    Mat m(n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat Mat::diag(const Vec& d) {
    Mat m(static_cast<int>(d.size()));
    for (size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Mat Mat::from_rows(const std::vector<Vec>& rows) {
    Mat m(static_cast<int>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw ValidationError("matrix rows must be square");
        for (size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

Mat Mat::from_flat(int n, const double* p) {
    Mat m(n);
    std::copy(p, p + static_cast<size_t>(n) * n, m.a_.begin());
    return m;
}

Mat Mat::transpose() const {
    Mat t(n_);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Mat Mat::operator*(const Mat& o) const {
    if (o.n_ != n_) throw ValidationError("dimension mismatch in product");
    Mat r(n_);
    for (int i = 0; i < n_; ++i)
        for (int k = 0; k < n_; ++k) {
            double a = (*this)(i, k);
            if (a == 0.0) continue;
            for (int j = 0; j < n_; ++j) r(i, j) += a * o(k, j);
        }
    return r;
}

Mat Mat::operator+(const Mat& o) const {
    if (o.n_ != n_) throw ValidationError("dimension mismatch in sum");
    Mat r(*this);
    for (size_t i = 0; i < a_.size(); ++i) r.a_[i] += o.a_[i];
    return r;
}

Mat Mat::operator-(const Mat& o) const {
    if (o.n_ != n_) throw ValidationError("dimension mismatch in difference");
    Mat r(*this);
    for (size_t i = 0; i < a_.size(); ++i) r.a_[i] -= o.a_[i];
    return r;
}

Mat Mat::operator*(double s) const {
    Mat r(*this);
    for (auto& x : r.a_) x *= s;
    return r;
}

Vec Mat::operator*(const Vec& v) const {
    if (static_cast<int>(v.size()) != n_) throw ValidationError("dimension mismatch in matvec");
    Vec r(n_, 0.0);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) r[i] += (*this)(i, j) * v[j];
    return r;
}

double Mat::max_abs() const {
    double m = 0.0;
    for (double x : a_) m = std::max(m, std::fabs(x));
    return m;
}

double Mat::frobenius() const {
    double s = 0.0;
    for (double x : a_) s += x * x;
    return std::sqrt(s);
}

std::vector<Vec> Mat::rows() const {
    std::vector<Vec> r(n_, Vec(n_));
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) r[i][j] = (*this)(i, j);
    return r;
}

Eigen sym_eig(const Mat& m) {
    const int n = m.n();
    const double scale = m.max_abs();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::fabs(m(i, j) - m(j, i)) > 1e-12 * scale) {
                std::ostringstream os;
                os << "sym_eig: matrix not symmetric at (" << i << "," << j << ")";
                throw ValidationError(os.str());
            }

    Mat a(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
    Mat v = Mat::identity(n);
    const double total = a.frobenius();

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) off += a(i, j) * a(i, j);
        if (std::sqrt(off) < 1e-13 * total || total == 0.0) break;

        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = a(p, q);
                if (apq == 0.0) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) > a(y, y); });
    Eigen e;
    e.values.resize(n);
    e.vectors = Mat(n);
    for (int k = 0; k < n; ++k) {
        e.values[k] = a(order[k], order[k]);
        for (int i = 0; i < n; ++i) e.vectors(i, k) = v(i, order[k]);
    }
    return e;
}

Mat spd_power(const Mat& m, double t) {
    Eigen e = sym_eig(m);
    const int n = m.n();
    const double top = e.values.empty() ? 0.0 : e.values[0];
    const double floor = kEigFloor * top;
    for (int k = 0; k < n; ++k) {
        if (!(e.values[k] > floor) || top <= 0.0) {
            std::ostringstream os;
            os << "spd_power: eigenvalue " << e.values[k] << " at or below floor " << floor;
            throw SingularityError(os.str());
        }
    }
    Mat r(n);
    for (int k = 0; k < n; ++k) {
        double lt = std::pow(e.values[k], t);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) r(i, j) += e.vectors(i, k) * lt * e.vectors(j, k);
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) r(i, j) = r(j, i) = 0.5 * (r(i, j) + r(j, i));
    return r;
}

double op_norm2(const double* m) {
    const double a = m[0], b = m[1], c = m[2], d = m[3];
    const double s = a * a + b * b + c * c + d * d;
    const double det = a * d - b * c;
    const double disc = std::max(0.0, s * s - 4.0 * det * det);
    return std::sqrt(0.5 * (s + std::sqrt(disc)));
}

double op_norm(const Mat& m) {
    const int n = m.n();
    if (n == 0) return 0.0;
    if (n == 1) return std::fabs(m(0, 0));
    if (n == 2) return op_norm2(m.data());
    Mat g = m.transpose() * m;
    Eigen e = sym_eig(g);
    return std::sqrt(std::max(0.0, e.values[0]));
}

double vec_norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

namespace {

// Gauss-Jordan with partial pivoting; fine for n <= 16.
Mat small_inverse(const Mat& m) {
    const int n = m.n();
    Mat a(m), inv = Mat::identity(n);
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a(r, col)) > std::fabs(a(piv, col))) piv = r;
        if (a(piv, col) == 0.0) throw SingularityError("singular matrix in inverse");
        if (piv != col)
            for (int j = 0; j < n; ++j) {
                std::swap(a(col, j), a(piv, j));
                std::swap(inv(col, j), inv(piv, j));
            }
        double d = a(col, col);
        for (int j = 0; j < n; ++j) {
            a(col, j) /= d;
            inv(col, j) /= d;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = a(r, col);
            if (f == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                a(r, j) -= f * a(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    return inv;
}

double quad_form(const Mat& p, const Vec& x) {
    const int n = p.n();
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        double r = 0.0;
        for (int j = 0; j < n; ++j) r += p(i, j) * x[j];
        s += x[i] * r;
    }
    return s;
}

}  // namespace

static EllipsoidFit khachiyan(const std::vector<Vec>& points, double tol, int max_iter, Vec u = {}) {
    if (points.empty()) throw ValidationError("mvee: empty point set");
    const int n = static_cast<int>(points[0].size());
    const int m = static_cast<int>(points.size());
    for (const auto& p : points)
        if (static_cast<int>(p.size()) != n) throw ValidationError("mvee: inconsistent point dimensions");

    if (static_cast<int>(u.size()) != m) u.assign(m, 1.0 / m);
    Mat x(n);
    for (int i = 0; i < m; ++i)
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) x(a, b) += u[i] * points[i][a] * points[i][b];
    {
        Eigen e = sym_eig(x);
        if (!(e.values[0] > 0.0) || e.values[n - 1] <= 1e-12 * e.values[0])
            throw ValidationError("mvee: point set does not span the space");
    }

    Vec g(m);
    EllipsoidFit fit;
    Mat xinv;
    double kappa = 0.0;
    int it = 0;
    for (;; ++it) {
        xinv = small_inverse(x);
        int jmax = 0, kmin = -1;
        for (int i = 0; i < m; ++i) {
            g[i] = quad_form(xinv, points[i]);
            if (g[i] > g[jmax]) jmax = i;
            if (u[i] > 0.0 && (kmin < 0 || g[i] < g[kmin])) kmin = i;
        }
        kappa = g[jmax];
        if (kappa <= n * (1.0 + tol) || it >= max_iter) break;

        int idx;
        double beta;
        if (kappa - n >= n - g[kmin]) {
            idx = jmax;
            beta = (kappa - n) / (n * (kappa - 1.0));
        } else {
            idx = kmin;
            double lb = u[kmin] < 1.0 ? -u[kmin] / (1.0 - u[kmin]) : 0.0;
            double gk = g[kmin];
            beta = gk > 1.0 ? std::max(lb, (gk - n) / (n * (gk - 1.0))) : lb;
        }
        for (int i = 0; i < m; ++i) u[i] *= (1.0 - beta);
        u[idx] += beta;
        if (u[idx] < 1e-300) u[idx] = 0.0;
        const Vec& p = points[idx];
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) x(a, b) = (1.0 - beta) * x(a, b) + beta * p[a] * p[b];
    }

    fit.iterations = it;
    fit.kappa = kappa;
    fit.gap = kappa / n - 1.0;
    Mat p = (xinv + xinv.transpose()) * (0.5 / kappa);
    fit.shape = spd_power(p, 0.5);
    return fit;
}

namespace {

bool solve_spd(std::vector<double> a, std::vector<double>& b, int k) {
    // Cholesky in place, a is k x k
    for (int j = 0; j < k; ++j) {
        double d = a[j * k + j];
        for (int t = 0; t < j; ++t) d -= a[j * k + t] * a[j * k + t];
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        a[j * k + j] = d;
        for (int i = j + 1; i < k; ++i) {
            double s = a[i * k + j];
            for (int t = 0; t < j; ++t) s -= a[i * k + t] * a[j * k + t];
            a[i * k + j] = s / d;
        }
    }
    for (int i = 0; i < k; ++i) {
        double s = b[i];
        for (int t = 0; t < i; ++t) s -= a[i * k + t] * b[t];
        b[i] = s / a[i * k + i];
    }
    for (int i = k - 1; i >= 0; --i) {
        double s = b[i];
        for (int t = i + 1; t < k; ++t) s -= a[t * k + i] * b[t];
        b[i] = s / a[i * k + i];
    }
    return true;
}

// Log-barrier Newton on min -log det P s.t. p^T P p <= 1. With multipliers
// l_i = mu / (1 - s_i), the design u = l / sum(l) has kappa <= n + m mu.
bool barrier_mvee(const std::vector<Vec>& pts, double tol, EllipsoidFit& fit, Vec& design) {
    const int n = static_cast<int>(pts[0].size());
    const int m = static_cast<int>(pts.size());
    const int k = n * (n + 1) / 2;
    std::vector<std::pair<int, int>> idx;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) idx.push_back({i, j});
    std::vector<double> feat(static_cast<size_t>(m) * k);
    double rmax = 0;
    for (int i = 0; i < m; ++i) {
        for (int q = 0; q < k; ++q) {
            auto [a, b] = idx[q];
            feat[i * k + q] = (a == b ? 1.0 : 2.0) * pts[i][a] * pts[i][b];
        }
        rmax = std::max(rmax, vec_norm(pts[i]));
    }
    std::vector<double> x(k, 0.0);
    for (int q = 0; q < k; ++q)
        if (idx[q].first == idx[q].second) x[q] = 0.5 / (rmax * rmax);
    auto to_mat = [&](const std::vector<double>& v) {
        Mat P(n);
        for (int q = 0; q < k; ++q) P(idx[q].first, idx[q].second) = P(idx[q].second, idx[q].first) = v[q];
        return P;
    };
    auto slack = [&](const std::vector<double>& v, std::vector<double>& s) {
        double mx = 0;
        for (int i = 0; i < m; ++i) {
            double t = 0;
            for (int q = 0; q < k; ++q) t += feat[i * k + q] * v[q];
            s[i] = t;
            mx = std::max(mx, t);
        }
        return mx;
    };
    auto objective = [&](const std::vector<double>& v, double mu, double& out) {
        std::vector<double> s(m);
        if (slack(v, s) >= 1.0) return false;
        Eigen e = sym_eig(to_mat(v));
        if (!(e.values[n - 1] > 0.0)) return false;
        double f = 0;
        for (double l : e.values) f -= std::log(l);
        for (double si : s) f -= mu * std::log(1.0 - si);
        out = f;
        return true;
    };

    std::vector<double> s(m), g(k), H(k * k), dx;
    double mu = 1.0;
    int steps = 0;
    const double mu_final = 0.25 * tol * n / m;
    for (int stage = 0; stage < 60; ++stage) {
        for (int it = 0; it < 100; ++it, ++steps) {
            slack(x, s);
            Mat P = to_mat(x);
            Mat Pi = small_inverse(P);
            std::fill(g.begin(), g.end(), 0.0);
            std::fill(H.begin(), H.end(), 0.0);
            for (int q = 0; q < k; ++q) {
                auto [a, b] = idx[q];
                g[q] = -(a == b ? Pi(a, a) : 2.0 * Pi(a, b));
                for (int r = 0; r < k; ++r) {
                    auto [c, d] = idx[r];
                    // tr(Pi E_q Pi E_r) with symmetric basis matrices
                    double v = Pi(b, c) * Pi(d, a);
                    if (a != b) v += Pi(a, c) * Pi(d, b);
                    if (c != d) v += Pi(b, d) * Pi(c, a);
                    if (a != b && c != d) v += Pi(a, d) * Pi(c, b);
                    H[q * k + r] = v;
                }
            }
            for (int i = 0; i < m; ++i) {
                const double w = 1.0 / (1.0 - s[i]);
                const double* f = &feat[i * k];
                for (int q = 0; q < k; ++q) {
                    g[q] += mu * w * f[q];
                    for (int r = 0; r < k; ++r) H[q * k + r] += mu * w * w * f[q] * f[r];
                }
            }
            dx = g;
            if (!solve_spd(H, dx, k)) return false;
            double dec = 0;
            for (int q = 0; q < k; ++q) dec += g[q] * dx[q];
            if (dec < 1e-12) break;
            double f0;
            if (!objective(x, mu, f0)) return false;
            double t = 1.0;
            std::vector<double> xn(k);
            for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
                for (int q = 0; q < k; ++q) xn[q] = x[q] - t * dx[q];
                double f1;
                if (objective(xn, mu, f1) && f1 <= f0 - 0.25 * t * dec) break;
            }
            x = xn;
        }
        if (mu <= mu_final) break;
        mu = std::max(mu * 0.1, mu_final);
    }

    slack(x, s);
    Mat X(n);
    double lsum = 0;
    std::vector<double> lam(m);
    for (int i = 0; i < m; ++i) {
        lam[i] = mu / (1.0 - s[i]);
        lsum += lam[i];
    }
    design.resize(m);
    for (int i = 0; i < m; ++i) design[i] = lam[i] / lsum;
    for (int i = 0; i < m; ++i)
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) X(a, b) += lam[i] / lsum * pts[i][a] * pts[i][b];
    Mat xinv = small_inverse(X);
    double kappa = 0;
    for (int i = 0; i < m; ++i) kappa = std::max(kappa, quad_form(xinv, pts[i]));
    if (!std::isfinite(kappa) || kappa > n * (1.0 + tol)) return false;
    fit.iterations = steps;
    fit.kappa = kappa;
    fit.gap = kappa / n - 1.0;
    Mat p = (xinv + xinv.transpose()) * (0.5 / kappa);
    fit.shape = spd_power(p, 0.5);
    return true;
}

}  // namespace

EllipsoidFit mvee(const std::vector<Vec>& points, double tol, int max_iter) {
    if (points.empty()) throw ValidationError("mvee: empty point set");
    const int n = static_cast<int>(points[0].size());
    for (const auto& p : points)
        if (static_cast<int>(p.size()) != n) throw ValidationError("mvee: inconsistent point dimensions");
    Mat x(n);
    for (const auto& p : points)
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) x(a, b) += p[a] * p[b];
    Eigen e = sym_eig(x);
    if (!(e.values[0] > 0.0) || e.values[n - 1] <= 1e-12 * e.values[0])
        throw ValidationError("mvee: point set does not span the space");
    // barrier solve, then away-step polishing from its design when the
    // centering was not tight enough
    EllipsoidFit fit;
    Vec design;
    try {
        if (barrier_mvee(points, tol, fit, design)) return fit;
    } catch (const std::exception&) {
        design.clear();
    }
    for (double& u : design)
        if (!std::isfinite(u)) {
            design.clear();
            break;
        }
    return khachiyan(points, tol, max_iter, design);
}

}  // namespace mwdha
