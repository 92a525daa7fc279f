#include "mwdha/operators.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>

#include "mwdha/analysis.hpp"
#include "mwdha/parallel.hpp"

namespace mwdha {

namespace {

constexpr double kPi = 3.14159265358979323846;

double phi(double t) { return t == 0.0 ? 0.0 : t * std::log(std::fabs(t)) - t; }

// int_0^1 int_0^1 ds dt / (k + s - t), principal value at k = 0
double hilbert_cell(long long k) {
    if (k == 0) return 0.0;
    const double x = static_cast<double>(k);
    if (std::llabs(k) < 8) return phi(x + 1) - 2 * phi(x) + phi(x - 1);
    // E[1/(k + U)], U triangular on [-1, 1]; the closed form cancels badly here
    double s = 0.0, xp = x, x2 = x * x;
    for (int m = 0; m <= 8; ++m) {
        s += 2.0 / ((2 * m + 1) * (2 * m + 2)) / xp;
        xp *= x2;
    }
    return s;
}

// mean of ln|u| over [u0, u1]
double avg_log(double u0, double u1) {
    const double mid = 0.5 * (u0 + u1), del = 0.5 * (u1 - u0);
    if (std::fabs(mid) > 4.0 * del) {
        double r2 = (del / mid) * (del / mid), t = r2, s = 0.0;
        for (int j = 1; j <= 12; ++j) {
            s += t / (2.0 * j * (2.0 * j + 1.0));
            t *= r2;
        }
        return std::log(std::fabs(mid)) - s;
    }
    return (phi(u1) - phi(u0)) / (u1 - u0);
}

// int over [a, b] minus (-1, 1) of dy / y
double outer_log_integral(double a, double b) {
    double s = 0.0;
    double lo = std::max(a, 1.0);
    if (b > lo) s += std::log(b / lo);
    double hi = std::min(b, -1.0);
    if (hi > a) s += std::log(std::fabs(hi) / std::fabs(a));
    return s;
}

// cell-pair table of the scalar part, offsets in cells, divided by |c|
struct CellTable {
    int d = 1, P = 1, W = 1;
    std::vector<double> g;
    CellTable(const KernelDescriptor& k, const Mesh& m) : d(m.d), P(m.per_axis()), W(2 * m.per_axis() - 1) {
        if (k.scalar != ScalarKernel::riesz && d != 1) throw UnsupportedError("hilbert kernels need d = 1");
        long long sz = 1;
        for (int a = 0; a < d; ++a) sz *= W;
        g.assign(sz, 0.0);
        const double scale = k.scalar == ScalarKernel::riesz ? k.riesz_c : 1.0;
        for (long long i = 0; i < sz; ++i) {
            long long off[3] = {0, 0, 0}, r = i;
            for (int a = d - 1; a >= 0; --a) {
                off[a] = r % W - (P - 1);
                r /= W;
            }
            if (d == 1) {
                g[i] = scale * hilbert_cell(off[0]);
                continue;
            }
            double n2 = 0.0;
            for (int a = 0; a < d; ++a) n2 += static_cast<double>(off[a] * off[a]);
            if (n2 == 0.0) continue;
            g[i] = scale * off[k.riesz_axis] / std::pow(n2, 0.5 * (d + 1));
        }
    }
    double at(const Index3& t, const Index3& s) const {
        long long i = 0;
        for (int a = 0; a < d; ++a) i = i * W + (t[a] - s[a] + P - 1);
        return g[i];
    }
};

// (S u) on all cells from a sparse source list; adjoint uses s(y, x)
std::vector<double> scalar_apply_sparse(const KernelDescriptor& k, const Mesh& m, const CellTable& tab,
                                        const std::vector<std::pair<long long, double>>& src, bool adjoint) {
    const long long N = m.cells();
    std::vector<double> out(N, 0.0);
    std::vector<Index3> sc(src.size());
    for (size_t i = 0; i < src.size(); ++i) sc[i] = m.cell_coords(src[i].first);
    const double sign = adjoint ? -1.0 : 1.0;
    parallel_for(N, [&](long long c) {
        Index3 tc = m.cell_coords(c);
        double s = 0.0;
        for (size_t i = 0; i < src.size(); ++i) s += tab.at(tc, sc[i]) * src[i].second;
        out[c] = sign * s;
    });
    if (k.scalar == ScalarKernel::modified_hilbert) {
        const double h = m.h();
        if (!adjoint) {
            double s = 0.0;
            for (auto& [c, v] : src) {
                double x0 = m.origin[0] + m.cell_coords(c)[0] * h;
                s += v * outer_log_integral(x0, x0 + h);
            }
            for (auto& o : out) o += s;
        } else {
            double tot = 0.0;
            for (auto& [c, v] : src) tot += v * h;
            for (long long c = 0; c < N; ++c) {
                double x0 = m.origin[0] + m.cell_coords(c)[0] * h;
                out[c] += tot * outer_log_integral(x0, x0 + h) / h;
            }
        }
    }
    return out;
}

std::vector<std::pair<long long, double>> sparse_of(const std::vector<double>& u) {
    std::vector<std::pair<long long, double>> s;
    for (long long c = 0; c < static_cast<long long>(u.size()); ++c)
        if (u[c] != 0.0) s.emplace_back(c, u[c]);
    return s;
}

std::vector<std::pair<long long, double>> haar_cells(const Lattice& lat, const Cube& q, int eps) {
    std::vector<std::pair<long long, double>> s;
    const double norm = 1.0 / std::sqrt(volume(lat.mesh, q.level));
    for (int b = 0; b < (1 << lat.mesh.d); ++b) {
        double v = haar_sign(eps, b, lat.mesh.d) * norm;
        for_each_cell(lat, child(lat, q, b), [&](long long c) { s.emplace_back(c, v); });
    }
    return s;
}

void check_kernel(const KernelDescriptor& k, int n) {
    if (k.A.n() != n) throw ValidationError("kernel matrix size does not match the function");
}

// descendants of q down to level `to` (inclusive), q first
void descendants(const Lattice& lat, const Cube& q, int to, std::vector<Cube>& out) {
    out.push_back(q);
    if (q.level >= to) return;
    for (int b = 0; b < (1 << lat.mesh.d); ++b) descendants(lat, child(lat, q, b), to, out);
}

}  // namespace

double riesz_constant(int d) { return std::tgamma(0.5 * (d + 1)) / std::pow(kPi, 0.5 * (d + 1)); }

KernelDescriptor hilbert_kernel(const Mat& a) {
    KernelDescriptor k;
    k.scalar = ScalarKernel::hilbert;
    k.A = a;
    k.text = "hilbert";
    return k;
}

KernelDescriptor modified_hilbert_kernel(const Mat& a) {
    KernelDescriptor k = hilbert_kernel(a);
    k.scalar = ScalarKernel::modified_hilbert;
    k.text = "modified_hilbert";
    return k;
}

KernelDescriptor riesz_kernel(int d, int axis, const Mat& a) {
    if (d < 1 || d > 3) throw ValidationError("riesz: d must be 1, 2 or 3");
    if (axis < 0 || axis >= d) throw ValidationError("riesz: axis out of range");
    KernelDescriptor k;
    k.scalar = ScalarKernel::riesz;
    k.riesz_axis = axis;
    k.riesz_c = riesz_constant(d);
    k.A = a;
    k.text = "riesz:" + std::to_string(axis + 1);
    return k;
}

Mat parse_matrix(const std::string& s) {
    auto nums = [](const std::string& t) {
        std::vector<double> v;
        std::stringstream ss(t);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                size_t pos = 0;
                v.push_back(std::stod(tok, &pos));
                if (pos != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ValidationError("bad number '" + tok + "' in matrix '" + t + "'");
            }
        }
        return v;
    };
    auto colon = s.find(':');
    std::string kind = colon == std::string::npos ? "" : s.substr(0, colon);
    std::string rest = colon == std::string::npos ? s : s.substr(colon + 1);
    auto size_of = [&](const std::string& t) {
        auto v = nums(t);
        if (v.size() != 1 || v[0] < 1 || v[0] > 16 || v[0] != std::floor(v[0]))
            throw ValidationError("matrix size must be an integer in [1, 16]: '" + s + "'");
        return static_cast<int>(v[0]);
    };
    if (kind == "id") return Mat::identity(size_of(rest));
    if (kind == "zero") return Mat(size_of(rest));
    if (kind == "diag") return Mat::diag(nums(rest));
    if (kind == "antidiag") {
        int n = size_of(rest);
        Mat a(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = i == j ? 0.0 : 1.0;
        return a;
    }
    if (!kind.empty()) throw ValidationError("unknown matrix kind '" + kind + "'");
    std::vector<Vec> rows;
    std::stringstream ss(rest);
    std::string row;
    while (std::getline(ss, row, ';')) rows.push_back(nums(row));
    for (auto& r : rows)
        if (r.size() != rows.size()) throw ValidationError("matrix rows must form a square: '" + s + "'");
    if (rows.empty()) throw ValidationError("empty matrix");
    return Mat::from_rows(rows);
}

KernelDescriptor parse_kernel(const std::string& scalar, const std::string& matrix, int d) {
    Mat a = parse_matrix(matrix);
    if (scalar == "hilbert" || scalar == "modified_hilbert") {
        if (d != 1) throw ValidationError(scalar + " needs d = 1");
        return scalar == "hilbert" ? hilbert_kernel(a) : modified_hilbert_kernel(a);
    }
    if (scalar.rfind("riesz:", 0) == 0) {
        int j = 0;
        try {
            j = std::stoi(scalar.substr(6));
        } catch (const std::exception&) {
            throw ValidationError("bad riesz index in '" + scalar + "'");
        }
        return riesz_kernel(d, j - 1, a);
    }
    throw ValidationError("unknown kernel '" + scalar + "'");
}

double scalar_kernel_eval(const KernelDescriptor& k, int d, const double* x, const double* y) {
    double n2 = 0.0;
    for (int a = 0; a < d; ++a) n2 += (x[a] - y[a]) * (x[a] - y[a]);
    if (n2 == 0.0) throw SingularityError("kernel evaluated on the diagonal x = y");
    switch (k.scalar) {
        case ScalarKernel::hilbert:
            return 1.0 / (x[0] - y[0]);
        case ScalarKernel::modified_hilbert:
            return 1.0 / (x[0] - y[0]) + (std::fabs(y[0]) > 1.0 ? 1.0 / y[0] : 0.0);
        case ScalarKernel::riesz:
            return k.riesz_c * (x[k.riesz_axis] - y[k.riesz_axis]) / std::pow(n2, 0.5 * (d + 1));
    }
    return 0.0;
}

Mat kernel_eval(const KernelDescriptor& k, int d, const double* x, const double* y) {
    return k.A * scalar_kernel_eval(k, d, x, y);
}

KernelDescriptor adjoint_kernel(const KernelDescriptor& k) {
    if (k.scalar == ScalarKernel::modified_hilbert)
        throw UnsupportedError("the adjoint of the modified Hilbert kernel is not a built-in kernel");
    KernelDescriptor a = k;
    a.A = k.A.transpose() * -1.0;
    a.text = k.text + "*";
    return a;
}

Field apply_scalar(const KernelDescriptor& k, const Field& u, bool adjoint) {
    if (u.m != 1) throw ValidationError("apply_scalar: scalar field expected");
    CellTable tab(k, u.mesh);
    Field out = Field::zeros(u.mesh, 1);
    out.v = scalar_apply_sparse(k, u.mesh, tab, sparse_of(u.v), adjoint);
    return out;
}

namespace {

Field apply_matrix_kernel(const KernelDescriptor& k, const Field& f, const Lattice& lat, bool adjoint) {
    if (f.mesh != lat.mesh) throw ValidationError("apply_czo: function and lattice meshes differ");
    check_kernel(k, f.m);
    const int n = f.m;
    const long long N = f.mesh.cells();
    CellTable tab(k, f.mesh);
    Mat A = adjoint ? k.A.transpose() : k.A;
    Field out = Field::zeros(f.mesh, n);
    if (A.max_abs() == 0.0) return out;
    for (int j = 0; j < n; ++j) {
        std::vector<double> comp(N);
        for (long long c = 0; c < N; ++c) comp[c] = f.at(c)[j];
        auto src = sparse_of(comp);
        if (src.empty()) continue;
        auto u = scalar_apply_sparse(k, f.mesh, tab, src, adjoint);
        for (long long c = 0; c < N; ++c)
            for (int i = 0; i < n; ++i) out.at(c)[i] += A(i, j) * u[c];
    }
    return out;
}

}  // namespace

Field apply_czo(const KernelDescriptor& k, const Field& f, const Lattice& lat) {
    return apply_matrix_kernel(k, f, lat, false);
}

Field apply_czo_adjoint(const KernelDescriptor& k, const Field& f, const Lattice& lat) {
    return apply_matrix_kernel(k, f, lat, true);
}

double haar_scalar_coefficient(const KernelDescriptor& k, const Lattice& lat, const Cube& I, int eps, const Cube& J,
                               int eps2) {
    const Mesh& m = lat.mesh;
    CellTable tab(k, m);
    auto src = haar_cells(lat, I, eps);
    auto dst = haar_cells(lat, J, eps2);
    std::vector<Index3> sc(src.size());
    for (size_t i = 0; i < src.size(); ++i) sc[i] = m.cell_coords(src[i].first);
    double s = 0.0;
    for (auto& [c, hv] : dst) {
        Index3 tc = m.cell_coords(c);
        double t = 0.0;
        for (size_t i = 0; i < src.size(); ++i) t += tab.at(tc, sc[i]) * src[i].second;
        s += hv * t;
    }
    // the modified Hilbert correction is constant in x, so h_J kills it
    return s * m.cell_volume();
}

Mat haar_matrix_coefficient(const KernelDescriptor& k, const Lattice& lat, const Cube& I, int eps, const Cube& J,
                            int eps2) {
    if (k.A.max_abs() == 0.0) return Mat(k.A.n());
    return k.A * haar_scalar_coefficient(k, lat, I, eps, J, eps2);
}

double default_qstar(int d) { return 2.0 * std::sqrt(static_cast<double>(d)); }

namespace {

// cell averages of int_{near box} s and int_{far shell} s, for every cell
void t1_fields(const KernelDescriptor& k, const Mesh& m, double qstar, double R, bool adjoint, std::vector<double>& near,
               std::vector<double>& far, double& qstar_eff) {
    const long long N = m.cells();
    const int d = m.d;
    const double h = m.h();
    near.assign(N, 0.0);
    far.assign(N, 0.0);
    if (d == 1) {
        const double cb = m.origin[0] + 0.5 * m.side;
        const double a = cb - 0.5 * qstar * m.side, b = cb + 0.5 * qstar * m.side;
        const double lo = cb - R, hi = cb + R;
        const double scale = k.scalar == ScalarKernel::riesz ? k.riesz_c : 1.0;
        qstar_eff = qstar;
        for (long long c = 0; c < N; ++c) {
            const double x0 = m.origin[0] + c * h, x1 = x0 + h;
            auto L = [&](double y) { return avg_log(x0 - y, x1 - y); };
            // int_a^b dy / (x - y) = ln|x - a| - ln|x - b|
            double nr = L(a) - L(b);
            double fr = L(lo) - L(a) + L(b) - L(hi);
            nr *= scale;
            fr *= scale;
            if (adjoint) nr = -nr, fr = -fr;
            if (k.scalar == ScalarKernel::modified_hilbert) {
                if (!adjoint) {
                    nr += outer_log_integral(a, b);
                    fr += outer_log_integral(lo, a) + outer_log_integral(b, hi);
                } else {
                    double cx = outer_log_integral(x0, x1) / h;
                    nr += (b - a) * cx;
                    fr += (a - lo + hi - b) * cx;
                }
            }
            near[c] = nr;
            far[c] = fr;
        }
        return;
    }
    // d >= 2: cell-aligned Q*, center rule; far field in dyadic shells
    const int P = m.per_axis();
    const int H = std::max(P / 2 + 1, static_cast<int>(std::lround(0.5 * qstar * P)));
    qstar_eff = 2.0 * H / P;
    const double sign = adjoint ? -1.0 : 1.0;
    const int ax = k.riesz_axis;
    const double cd = k.riesz_c;
    const double wscale = H * h;
    auto kern = [&](const double* x, const double* y) {
        double n2 = 0.0;
        for (int a = 0; a < d; ++a) n2 += (x[a] - y[a]) * (x[a] - y[a]);
        return cd * (x[ax] - y[ax]) / std::pow(n2, 0.5 * (d + 1));
    };
    double cb[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) cb[a] = m.origin[a] + 0.5 * m.side;
    const int M = d == 2 ? 16 : 8;
    parallel_for(N, [&](long long c) {
        Index3 cc = m.cell_coords(c);
        double x[3] = {0, 0, 0};
        for (int a = 0; a < d; ++a) x[a] = m.cell_center(c, a);
        const long long span = 2LL * H;
        long long tot = 1;
        for (int a = 0; a < d; ++a) tot *= span;
        double s = 0.0;
        for (long long i = 0; i < tot; ++i) {
            long long r = i;
            double y[3] = {0, 0, 0};
            bool self = true;
            for (int a = 0; a < d; ++a) {
                long long ia = r % span - H + P / 2;
                r /= span;
                y[a] = m.origin[a] + (ia + 0.5) * h;
                if (ia != cc[a]) self = false;
            }
            if (!self) s += kern(x, y) * std::pow(h, d);
        }
        double f = 0.0;
        for (double wi = wscale; wi < R; wi *= 2.0) {
            const double wo = std::min(2.0 * wi, R), cs = 2.0 * wo / M;
            long long cnt = 1;
            for (int a = 0; a < d; ++a) cnt *= M;
            for (long long i = 0; i < cnt; ++i) {
                long long r = i;
                double y[3] = {0, 0, 0};
                bool inside = true;
                for (int a = 0; a < d; ++a) {
                    double off = -wo + (r % M + 0.5) * cs;
                    r /= M;
                    y[a] = cb[a] + off;
                    if (std::fabs(off) > wi) inside = false;
                }
                if (!inside) f += kern(x, y) * std::pow(cs, d);
            }
        }
        near[c] = sign * s;
        far[c] = sign * f;
    });
}

}  // namespace

T1Result compute_T1(const KernelDescriptor& k, const Lattice& lat, int r_levels, bool adjoint, double qstar) {
    const Mesh& m = lat.mesh;
    if (r_levels < 1 || r_levels > 40) throw ValidationError("compute_T1: r_levels must lie in [1, 40]");
    if (m.L < 1) throw ValidationError("compute_T1: need L >= 1");
    if (qstar == 0.0) qstar = default_qstar(m.d);
    if (!(qstar >= 1.0)) throw ValidationError("compute_T1: Q* factor must be >= 1");
    const int n = k.A.n();
    T1Result r;
    r.r_levels = r_levels;
    r.radius = std::ldexp(m.side, r_levels);
    if (r.radius <= 0.5 * qstar * m.side) throw ValidationError("compute_T1: truncation radius inside Q*");

    std::vector<double> nv, fv;
    t1_fields(k, m, qstar, r.radius, adjoint, nv, fv, r.qstar);
    Field nf = Field::zeros(m, 1), ff = Field::zeros(m, 1);
    nf.v = nv;
    ff.v = fv;
    // the K(c_I, y) term of the far integral pairs with a mean-zero h_I and drops out
    HaarCoefficients hn = haar_transform(nf, lat), hf = haar_transform(ff, lat);

    Mat A = adjoint ? k.A.transpose() : k.A;
    const double anorm = op_norm(A);
    r.coeffs.lattice = lat;
    r.coeffs.m = n * n;
    r.coeffs.mean.assign(n * n, 0.0);
    r.coeffs.detail.resize(m.L);
    const int ns = num_signatures(m.d);
    for (int lv = 0; lv < m.L; ++lv) {
        r.coeffs.detail[lv].assign(static_cast<size_t>(cubes_at(m, lv)) * ns * n * n, 0.0);
        for (long long i = 0; i < cubes_at(m, lv); ++i)
            for (int e = 0; e < ns; ++e) {
                double a = hn.at(lv, i, e)[0], b = hf.at(lv, i, e)[0];
                r.max_near = std::max(r.max_near, std::fabs(a) * anorm);
                r.max_far = std::max(r.max_far, std::fabs(b) * anorm);
                double* dst = r.coeffs.at(lv, i, e);
                for (int q = 0; q < n * n; ++q) dst[q] = A.data()[q] * (a + b);
            }
    }
    // Hoelder tail: |I|^{1/2} C_K (sqrt(d) l / 2)^alpha sigma_{d-1} / (alpha R'^alpha)
    const double sigma = m.d == 1 ? 2.0 : (m.d == 2 ? 2.0 * kPi : 4.0 * kPi);
    const double ck = k.scalar == ScalarKernel::riesz && m.d > 1 ? std::ldexp(k.riesz_c, m.d + 2) : 2.0;
    const double rp = r.radius - std::sqrt(static_cast<double>(m.d)) * m.side;
    r.tail_bound.resize(m.L);
    for (int lv = 0; lv < m.L; ++lv) {
        double l = side_length(m, lv);
        r.tail_bound[lv] = anorm * std::sqrt(volume(m, lv)) * ck *
                           std::pow(0.5 * std::sqrt(static_cast<double>(m.d)) * l, k.alpha) * sigma /
                           (k.alpha * std::pow(rp, k.alpha));
    }
    return r;
}

double max_coefficient_norm(const HaarCoefficients& c) {
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(c.m))));
    if (n * n != c.m) throw ValidationError("max_coefficient_norm: matrix coefficients expected");
    double best = 0.0;
    for (const auto& lv : c.detail)
        for (size_t o = 0; o + c.m <= lv.size(); o += c.m) best = std::max(best, op_norm(Mat::from_flat(n, lv.data() + o)));
    return best;
}

CubeSup t1_bmo_norm(const HaarCoefficients& c, WeightOnLattice& wl, double p) {
    const Lattice& lat = wl.lattice();
    if (c.lattice != lat) throw ValidationError("t1_bmo_norm: coefficients live on a different lattice");
    const int n = wl.weight().n();
    if (c.m != n * n) throw ValidationError("t1_bmo_norm: coefficient size does not match the weight");
    const Mesh& m = lat.mesh;
    const int ns = num_signatures(m.d);

    // e(Q) with V_{I0}^{-1} still to be applied: keep V_Q C_Q per signature
    std::vector<std::vector<Mat>> vc(m.L);
    for (int lv = 0; lv < m.L; ++lv) {
        vc[lv].resize(static_cast<size_t>(cubes_at(m, lv)) * ns, Mat());
        for (long long i = 0; i < cubes_at(m, lv); ++i) {
            Cube q = cube_at(m, lv, i);
            bool any = false;
            for (int e = 0; e < ns && !any; ++e) any = Mat::from_flat(n, c.at(lv, i, e)).max_abs() != 0.0;
            if (!any) continue;
            const Mat& V = wl.reducing(q, p).V;
            for (int e = 0; e < ns; ++e) vc[lv][i * ns + e] = V * Mat::from_flat(n, c.at(lv, i, e));
        }
    }
    CubeSup best;
    std::vector<double> acc(m.cells(), 0.0);
    std::vector<Cube> sub;
    for (int k0 = 0; k0 < m.L; ++k0)
        for (long long i0 = 0; i0 < cubes_at(m, k0); ++i0) {
            Cube I0 = cube_at(m, k0, i0);
            if (is_exterior(lat, I0)) continue;
            Mat vinv = spd_power(wl.reducing(I0, p).V, -1.0);
            sub.clear();
            descendants(lat, I0, m.L - 1, sub);
            std::vector<long long> cells;
            for_each_cell(lat, I0, [&](long long cc) { cells.push_back(cc); acc[cc] = 0.0; });
            bool any = false;
            for (const Cube& q : sub) {
                long long qi = cube_index(m, q);
                double e = 0.0;
                for (int s = 0; s < ns; ++s) {
                    const Mat& x = vc[q.level][qi * ns + s];
                    if (x.n() == 0) continue;
                    double v = op_norm(x * vinv);
                    e += v * v;
                }
                if (e == 0.0) continue;
                any = true;
                e /= volume(m, q.level);
                for_each_cell(lat, q, [&](long long cc) { acc[cc] += e; });
            }
            if (!any) continue;
            double s = 0.0;
            for (long long cc : cells) s += std::pow(acc[cc], 0.5 * p);
            s /= static_cast<double>(cells.size());
            if (s > best.value) {
                best.value = s;
                best.cube = I0;
            }
        }
    best.value = std::pow(best.value, 1.0 / p);
    return best;
}

Field paraproduct_apply(const MatrixField& b, const Field& f, const Lattice& lat) {
    if (b.mesh != lat.mesh || f.mesh != lat.mesh) throw ValidationError("paraproduct: mesh mismatch");
    if (b.n != f.m) throw ValidationError("paraproduct: symbol and function sizes differ");
    const Mesh& m = lat.mesh;
    const int n = b.n, ns = num_signatures(m.d);
    HaarCoefficients hb = haar_transform(b.as_field(), lat);
    auto sums = tree_sums(lat, f);
    HaarCoefficients out;
    out.lattice = lat;
    out.m = n;
    out.mean.assign(n, 0.0);
    out.detail.resize(m.L);
    for (int k = 0; k < m.L; ++k) {
        out.detail[k].assign(static_cast<size_t>(cubes_at(m, k)) * ns * n, 0.0);
        const double cnt = static_cast<double>(cells_per_cube(m, k));
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Vec mf(sums[k].data() + i * n, sums[k].data() + (i + 1) * n);
            for (auto& x : mf) x /= cnt;
            for (int e = 0; e < ns; ++e) {
                Vec v = Mat::from_flat(n, hb.at(k, i, e)) * mf;
                std::copy(v.begin(), v.end(), out.at(k, i, e));
            }
        }
    }
    return haar_inverse(out);
}

Field paraproduct_adjoint_apply(const MatrixField& b, const Field& g, const Lattice& lat) {
    if (b.mesh != lat.mesh || g.mesh != lat.mesh) throw ValidationError("paraproduct: mesh mismatch");
    if (b.n != g.m) throw ValidationError("paraproduct: symbol and function sizes differ");
    const Mesh& m = lat.mesh;
    const int n = b.n, ns = num_signatures(m.d);
    HaarCoefficients hb = haar_transform(b.as_field(), lat);
    HaarCoefficients hg = haar_transform(g, lat);
    Field out = Field::zeros(m, n);
    // sum_I (B_I)^T g_I 1_I / |I|
    for (int k = 0; k < m.L; ++k) {
        const double vol = volume(m, k);
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Vec u(n, 0.0);
            for (int e = 0; e < ns; ++e) {
                const double* gi = hg.at(k, i, e);
                Vec t = Mat::from_flat(n, hb.at(k, i, e)).transpose() * Vec(gi, gi + n);
                for (int c = 0; c < n; ++c) u[c] += t[c] / vol;
            }
            for_each_cell(lat, cube_at(m, k, i), [&](long long c) {
                for (int j = 0; j < n; ++j) out.at(c)[j] += u[j];
            });
        }
    }
    return out;
}

KernelCheckReport kernel_condition_check(const KernelDescriptor& k, WeightOnLattice& wl, double p, int sample_count,
                                         std::uint64_t seed) {
    if (sample_count < 100) throw ValidationError("kernel_condition_check: sample_count must be >= 100");
    const Lattice& lat = wl.lattice();
    const Mesh& m = lat.mesh;
    const int d = m.d;
    check_kernel(k, wl.weight().n());
    std::mt19937_64 rng(mix_seed(seed, 0x6b));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    KernelCheckReport rep;
    std::vector<double> sizes;
    auto dist = [&](const double* a, const double* b) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };
    auto ks = [&](const double* x, const double* y) { return scalar_kernel_eval(k, d, x, y); };
    for (int s = 0; s < sample_count; ++s) {
        Cube q;
        do {
            q.level = static_cast<int>(U(rng) * (m.L + 1)) % (m.L + 1);
            q = cube_at(m, q.level, static_cast<long long>(U(rng) * cubes_at(m, q.level)) % cubes_at(m, q.level));
        } while (is_exterior(lat, q));
        double x[3] = {0, 0, 0}, y[3] = {0, 0, 0}, x2[3] = {0, 0, 0}, y2[3] = {0, 0, 0};
        for (int a = 0; a < d; ++a) x[a] = m.origin[a] + m.side * U(rng), y[a] = m.origin[a] + m.side * U(rng);
        const double r = dist(x, y);
        if (r == 0.0) {
            --s;
            continue;
        }
        // |x - x'| < |x - y| / 2 along a random direction; same for y'
        auto perturb = [&](const double* base, double* out) {
            double dir[3] = {0, 0, 0}, nn = 0.0;
            for (int a = 0; a < d; ++a) dir[a] = U(rng) - 0.5, nn += dir[a] * dir[a];
            nn = std::sqrt(nn) + 1e-300;
            const double t = (0.05 + 0.44 * U(rng)) * r;
            for (int a = 0; a < d; ++a) out[a] = base[a] + t * dir[a] / nn;
        };
        perturb(x, x2);
        perturb(y, y2);
        const auto& rp = wl.reducing(q, p);
        Mat vinv = spd_power(rp.V, -1.0), vdinv = spd_power(rp.V_dual, -1.0);
        Mat vav = rp.V * k.A * vinv;
        Mat vdav = rp.V_dual * k.A.transpose() * vdinv;
        const double na = op_norm(vav), nd = op_norm(vdav);
        rep.compat_sup = std::max(rep.compat_sup, na);
        const double size = std::fabs(ks(x, y)) * na * std::pow(r, d);
        sizes.push_back(size);
        rep.size_max = std::max(rep.size_max, size);
        auto& lvmax = rep.size_max_by_level[q.level];
        lvmax = std::max(lvmax, size);
        const double dx = dist(x, x2), dy = dist(y, y2);
        const double scale_x = std::pow(r, d + k.alpha) / std::pow(dx, k.alpha);
        const double scale_y = std::pow(r, d + k.alpha) / std::pow(dy, k.alpha);
        // K^*(x, y) = K(y, x)^T: its scalar part is s(y, x)
        double hx = std::fabs(ks(x, y) - ks(x2, y)) * scale_x, hy = std::fabs(ks(x, y) - ks(x, y2)) * scale_y;
        double hxs = std::fabs(ks(y, x) - ks(y, x2)) * scale_x, hys = std::fabs(ks(y, x) - ks(y2, x)) * scale_y;
        rep.holder_max = std::max(rep.holder_max, std::max(hx, hy) * na);
        rep.holder_dual_max = std::max(rep.holder_dual_max, std::max(hxs, hys) * nd);
        rep.cubes.push_back(q);
    }
    std::sort(sizes.begin(), sizes.end());
    auto quant = [&](double t) { return sizes[static_cast<size_t>(t * (sizes.size() - 1))]; };
    rep.size_q50 = quant(0.5);
    rep.size_q90 = quant(0.9);
    rep.size_q99 = quant(0.99);
    rep.samples = sample_count;
    return rep;
}

CompatReport compat_check(const Mat& a, WeightOnLattice& wl, double p, const std::vector<Cube>& cubes) {
    if (a.n() != wl.weight().n()) throw ValidationError("compat_check: matrix size does not match the weight");
    CompatReport r;
    Mat at = a.transpose();
    for (const Cube& q : cubes) {
        const auto& rp = wl.reducing(q, p);
        double x = op_norm(rp.V * a * spd_power(rp.V, -1.0));
        double y = op_norm(rp.V_dual * at * spd_power(rp.V_dual, -1.0));
        if (x > r.primal) r.primal = x, r.primal_cube = q;
        if (y > r.dual) r.dual = y, r.dual_cube = q;
        auto& lv = r.by_level[q.level];
        lv = std::max(lv, x + y);
    }
    return r;
}

CompatReport compat_check(const Mat& a, WeightOnLattice& wl, double p) {
    const Lattice& lat = wl.lattice();
    std::vector<Cube> cubes;
    for (int k = 0; k <= lat.mesh.L; ++k)
        for (long long i = 0; i < cubes_at(lat.mesh, k); ++i) {
            Cube q = cube_at(lat.mesh, k, i);
            if (!is_exterior(lat, q)) cubes.push_back(q);
        }
    return compat_check(a, wl, p, cubes);
}

WbpReport weak_boundedness_check(const KernelDescriptor& k, WeightOnLattice& wl, double p) {
    const Lattice& lat = wl.lattice();
    const Mesh& m = lat.mesh;
    check_kernel(k, wl.weight().n());
    CellTable tab(k, m);
    std::vector<Cube> js;
    for (int lv = 0; lv <= m.L; ++lv)
        for (long long i = 0; i < cubes_at(m, lv); ++i) {
            Cube q = cube_at(m, lv, i);
            if (!is_exterior(lat, q)) js.push_back(q);
        }
    // tau(J) = <S 1_J, 1_J>; (T_J) = A tau(J) and (T^*)_J = A^T tau(J)
    std::vector<double> tau(js.size(), 0.0);
    const double cv = m.cell_volume(), h = m.h();
    parallel_for(static_cast<long long>(js.size()), [&](long long t) {
        std::vector<long long> cells;
        for_each_cell(lat, js[t], [&](long long c) { cells.push_back(c); });
        std::vector<Index3> cc(cells.size());
        for (size_t i = 0; i < cells.size(); ++i) cc[i] = m.cell_coords(cells[i]);
        double s = 0.0;
        for (size_t i = 0; i < cells.size(); ++i)
            for (size_t j = 0; j < cells.size(); ++j) s += tab.at(cc[i], cc[j]);
        s *= cv;
        if (k.scalar == ScalarKernel::modified_hilbert) {
            double c = 0.0;
            for (long long cell : cells) {
                double x0 = m.origin[0] + m.cell_coords(cell)[0] * h;
                c += outer_log_integral(x0, x0 + h);
            }
            s += c * cells.size() * cv;
        }
        tau[t] = s;
    });
    WbpReport r;
    Mat at = k.A.transpose();
    for (size_t t = 0; t < js.size(); ++t) {
        const Cube& J = js[t];
        const double vol = volume(m, J.level);
        r.max_abs_testing = std::max(r.max_abs_testing, std::fabs(tau[t]) / vol);
        if (tau[t] == 0.0) continue;
        Cube I = J;
        while (true) {
            const auto& rp = wl.reducing(I, p);
            double v = (op_norm(rp.V * k.A * spd_power(rp.V, -1.0)) +
                        op_norm(rp.V_dual * at * spd_power(rp.V_dual, -1.0))) *
                       std::fabs(tau[t]) / vol;
            if (v > r.value) r.value = v, r.I = I, r.J = J;
            auto& lv = r.by_level[J.level];
            lv = std::max(lv, v);
            if (I.level == 0) break;
            I = parent(lat, I);
            if (is_exterior(lat, I)) break;
        }
    }
    return r;
}

DecayReport haar_decay_check(const KernelDescriptor& k, WeightOnLattice& wl, double p, const Cube& I0, int r,
                             int max_gap, int r_levels) {
    const Lattice& lat = wl.lattice();
    const Mesh& m = lat.mesh;
    const int n = wl.weight().n(), d = m.d, ns = num_signatures(d);
    check_kernel(k, n);
    if (max_gap < 0) throw ValidationError("haar_decay_check: max_gap must be >= 0");
    if (I0.level >= m.L) throw ValidationError("haar_decay_check: I0 must be coarser than the finest cells");
    DecayReport rep;
    rep.I0 = I0;
    rep.r = r;

    T1Result t1 = compute_T1(k, lat, r_levels, false);
    T1Result t1s = compute_T1(k, lat, r_levels, true);
    rep.t1_max = max_coefficient_norm(t1.coeffs);
    rep.t1_adjoint_max = max_coefficient_norm(t1s.coeffs);

    const auto& rp0 = wl.reducing(I0, p);
    const Mat V = rp0.V, Vinv = spd_power(rp0.V, -1.0);
    const Mat vav = V * k.A * Vinv;

    std::vector<Cube> cubes;
    descendants(lat, I0, m.L - 1, cubes);
    std::map<Cube, bool> good;
    for (const Cube& q : cubes) good[q] = !is_bad(lat, q, r, k.alpha);
    std::vector<std::vector<Cube>> by_level(m.L);
    for (const Cube& q : cubes) by_level[q.level].push_back(q);

    CellTable tab(k, m);
    std::map<std::pair<int, int>, DecayBucket> buckets;
    const double ex = d + k.alpha;
    std::mutex mu;
    std::vector<std::pair<Cube, int>> sources;
    for (const Cube& I : cubes)
        if (good[I])
            for (int e = 0; e < ns; ++e) sources.emplace_back(I, e);
        else
            ++rep.skipped_bad;

    // per source (I, eps): S h_I on all cells, then Haar coefficients give every J
    parallel_for(static_cast<long long>(sources.size()), [&](long long t) {
        const Cube I = sources[t].first;
        const int e = sources[t].second;
        auto src = haar_cells(lat, I, e);
        std::vector<Index3> sc(src.size());
        for (size_t i = 0; i < src.size(); ++i) sc[i] = m.cell_coords(src[i].first);
        Field u = Field::zeros(m, 1);
        for (long long c = 0; c < m.cells(); ++c) {
            Index3 tc = m.cell_coords(c);
            double s = 0.0;
            for (size_t i = 0; i < src.size(); ++i) s += tab.at(tc, sc[i]) * src[i].second;
            u.v[c] = s;
        }
        HaarCoefficients hu = haar_transform(u, lat);
        const double lI = side_length(m, I.level);
        std::map<std::pair<int, int>, DecayBucket> local;
        long long pairs = 0;
        for (int g = 0; g <= max_gap && I.level - g >= I0.level; ++g) {
            const int lj = I.level - g;
            const double lJ = side_length(m, lj);
            // ancestor of I at level lj + 1, for m_I(h_J) when I is inside J
            Cube anc = I;
            while (anc.level > lj + 1) anc = parent(lat, anc);
            for (const Cube& J : by_level[lj]) {
                if (!good[J]) continue;
                const long long ji = cube_index(m, J);
                const bool inside = g > 0 && parent(lat, anc) == J;
                const double D = lI + lJ + cube_distance(lat, I, J);
                for (int e2 = 0; e2 < ns; ++e2) {
                    const double s = hu.at(lj, ji, e2)[0];
                    double nrm;
                    if (inside) {
                        // (pi_{T^*1})^* part: ((T^*1)_I)^T m_I(h_J)
                        int b = 0;
                        while (!(child(lat, J, b) == anc)) ++b;
                        const double mih = haar_sign(e2, b, d) / std::sqrt(volume(m, lj));
                        Mat c = Mat::from_flat(n, t1s.coeffs.at(I.level, cube_index(m, I), e)).transpose() * mih;
                        nrm = op_norm(V * (k.A * s - c) * Vinv);
                    } else {
                        nrm = op_norm(vav) * std::fabs(s);
                    }
                    const double ratio = nrm * std::pow(D, ex) / std::pow(lI * lJ, 0.5 * ex);
                    const int db = std::max(0, static_cast<int>(std::floor(std::log2(D / lJ) + 1e-12)));
                    auto& bk = local[{g, db}];
                    bk.gap = g;
                    bk.dist = db;
                    ++bk.pairs;
                    ++pairs;
                    if (bk.pairs == 1 || ratio > bk.max_ratio) bk.max_ratio = ratio, bk.I = I, bk.J = J;
                }
            }
        }
        std::lock_guard<std::mutex> lk(mu);
        rep.pairs += pairs;
        for (auto& [key, bk] : local) {
            auto it = buckets.find(key);
            if (it == buckets.end()) {
                buckets[key] = bk;
                continue;
            }
            it->second.pairs += bk.pairs;
            if (bk.max_ratio > it->second.max_ratio ||
                (bk.max_ratio == it->second.max_ratio && (bk.I < it->second.I || (bk.I == it->second.I && bk.J < it->second.J)))) {
                it->second.max_ratio = bk.max_ratio;
                it->second.I = bk.I;
                it->second.J = bk.J;
            }
        }
    });
    for (auto& [key, bk] : buckets) {
        rep.buckets.push_back(bk);
        rep.max_ratio = std::max(rep.max_ratio, bk.max_ratio);
    }
    return rep;
}

Field commutator_apply(const KernelDescriptor& k, const MatrixField& b, const Field& f, const Lattice& lat,
                       bool symbol_adjoint) {
    if (b.mesh != f.mesh || f.mesh != lat.mesh) throw ValidationError("commutator: mesh mismatch");
    if (b.n != f.m) throw ValidationError("commutator: symbol and function sizes differ");
    const MatrixField bb = symbol_adjoint ? b.transpose() : b;
    const int n = f.m;
    auto mul = [&](const Field& g) {
        Field out = Field::zeros(g.mesh, n);
        for (long long c = 0; c < g.mesh.cells(); ++c) {
            const double* m = bb.at(c);
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += m[i * n + j] * g.at(c)[j];
                out.at(c)[i] = s;
            }
        }
        return out;
    };
    Field a = apply_czo(k, mul(f), lat);
    Field t = mul(apply_czo(k, f, lat));
    for (size_t i = 0; i < a.v.size(); ++i) a.v[i] -= t.v[i];
    return a;
}

NormProbe empirical_operator_norm(const LinearOp& op, const MatrixWeight& w, double p, const Lattice& lat,
                                  int ensemble_size, std::uint64_t seed, int depth, const MatrixWeight* target) {
    if (ensemble_size < 16) throw ValidationError("empirical_operator_norm: ensemble_size must be >= 16");
    const Mesh& m = lat.mesh;
    if (w.mesh() != m) throw ValidationError("empirical_operator_norm: weight and lattice meshes differ");
    const int n = w.n(), d = m.d;
    std::vector<Field> members;
    NormProbe pr;
    for (int i = 0; i < ensemble_size; ++i) {
        members.push_back(haar_random_vector(lat, n, mix_seed(seed, i), std::min(depth, m.L)));
        pr.labels.push_back("haar:" + std::to_string(i));
    }
    // adversarial members: cubes containing each singular point, all levels
    const auto& sp = w.singular_points();
    std::vector<std::array<double, 3>> pts;
    if (!sp.empty() && sp.size() % d == 0) {
        for (size_t i = 0; i < sp.size(); i += d) {
            std::array<double, 3> x{0, 0, 0};
            for (int a = 0; a < d; ++a) x[a] = sp[i + a];
            pts.push_back(x);
        }
    } else {
        std::array<double, 3> x{0, 0, 0};
        for (int a = 0; a < d; ++a) x[a] = m.origin[a] + 0.5 * m.side;
        if (!sp.empty()) x[0] = sp[0];
        pts.push_back(x);
    }
    const MatrixField& wneg = w.power(-1.0 / p);
    for (size_t pi = 0; pi < pts.size(); ++pi) {
        double x[3];
        for (int a = 0; a < d; ++a)
            x[a] = std::clamp(pts[pi][a], m.origin[a], m.origin[a] + m.side * (1.0 - 0.5 / m.per_axis()));
        long long cell = m.locate(x);
        if (cell < 0) continue;
        for (int lv = 0; lv <= m.L; ++lv) {
            Cube q = containing(lat, lv, cell);
            for (int j = 0; j < n; ++j) {
                Field a = Field::zeros(m, n), b = Field::zeros(m, n);
                for_each_cell(lat, q, [&](long long c) {
                    a.at(c)[j] = 1.0;
                    for (int i = 0; i < n; ++i) b.at(c)[i] = wneg.at(c)[i * n + j];
                });
                std::string tag = std::to_string(pi) + ":" + std::to_string(lv) + ":e" + std::to_string(j);
                members.push_back(std::move(a));
                pr.labels.push_back("ind:" + tag);
                members.push_back(std::move(b));
                pr.labels.push_back("dual-ind:" + tag);
            }
        }
    }
    pr.ratios.assign(members.size(), 0.0);
    for (size_t i = 0; i < members.size(); ++i) {
        const double den = lp_norm(members[i], w, p);
        if (den == 0.0) continue;
        pr.ratios[i] = lp_norm(op(members[i]), target ? *target : w, p) / den;
    }
    for (size_t i = 0; i < pr.ratios.size(); ++i)
        if (pr.witness < 0 || pr.ratios[i] > pr.ratios[pr.witness]) pr.witness = static_cast<int>(i);
    pr.lower_bound = pr.witness >= 0 ? pr.ratios[pr.witness] : 0.0;
    return pr;
}

int probe_member(const NormProbe& probe, const std::string& label) {
    for (size_t i = 0; i < probe.labels.size(); ++i)
        if (probe.labels[i] == label) return static_cast<int>(i);
    return -1;
}

}  // namespace mwdha
