#include "mwdha/analysis.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>

namespace mwdha {

namespace {

// m_I of a matrix field for every cube, via tree sums.
struct MatrixAverages {
    const Lattice& lat;
    int n;
    std::vector<std::vector<double>> s;
    MatrixAverages(const Lattice& l, const MatrixField& b) : lat(l), n(b.n), s(tree_sums(l, b.as_field())) {}
    Mat at(const Cube& q) const {
        Mat m = Mat::from_flat(n, s[q.level].data() + cube_index(lat.mesh, q) * n * n);
        return m * (1.0 / static_cast<double>(cells_per_cube(lat.mesh, q.level)));
    }
};

void check_field(const MatrixField& b, WeightOnLattice& wl) {
    if (b.mesh != wl.lattice().mesh) throw ValidationError("symbol and weight meshes differ");
    if (b.n != wl.weight().n()) throw ValidationError("symbol and weight sizes differ");
}

// sup over non-exterior cubes of levels < L (finest cells have no oscillation)
template <class F>
CubeSup sup_cubes(const Lattice& lat, F&& f) {
    CubeSup out;
    const Mesh& m = lat.mesh;
    for (int k = 0; k < m.L; ++k)
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            if (is_exterior(lat, q)) continue;
            double v = f(q);
            if (v > out.value) {
                out.value = v;
                out.cube = q;
            }
        }
    return out;
}

// Bottom-up subtree sums of a per-cube energy e[k][i]; returns sup S(J)/|J|.
CubeSup subtree_sup(const Lattice& lat, const std::vector<std::vector<double>>& e, bool skip_exterior) {
    const Mesh& m = lat.mesh;
    std::vector<std::vector<double>> S(m.L + 1);
    S[m.L].assign(cubes_at(m, m.L), 0.0);
    CubeSup out;
    for (int k = m.L - 1; k >= 0; --k) {
        S[k].assign(cubes_at(m, k), 0.0);
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            double s = e[k][i];
            for (int b = 0; b < (1 << m.d); ++b) s += S[k + 1][cube_index(m, child(lat, q, b))];
            S[k][i] = s;
            if (skip_exterior && is_exterior(lat, q)) continue;
            double v = s / volume(m, k);
            if (v > out.value) {
                out.value = v;
                out.cube = q;
            }
        }
    }
    return out;
}

}  // namespace

CubeSup bmo_primal(const MatrixField& b, WeightOnLattice& wl, double p) {
    check_field(b, wl);
    const Lattice& lat = wl.lattice();
    const int n = b.n;
    const MatrixField& A = wl.weight().power(1.0 / p);
    MatrixAverages avg(lat, b);
    return sup_cubes(lat, [&](const Cube& q) {
        Mat mb = avg.at(q);
        Mat vinv = spd_power(wl.reducing(q, p).V, -1.0);
        double s = 0;
        long long cnt = 0;
        for_each_cell(lat, q, [&](long long c) {
            Mat d = Mat::from_flat(n, b.at(c)) - mb;
            s += std::pow(op_norm(Mat::from_flat(n, A.at(c)) * d * vinv), p);
            ++cnt;
        });
        return s / cnt;
    });
}

CubeSup bmo_dual(const MatrixField& b, WeightOnLattice& wl, double p) {
    check_field(b, wl);
    const Lattice& lat = wl.lattice();
    const int n = b.n;
    const double pd = dual_exponent(p);
    const MatrixField& A = wl.weight().power(-1.0 / p);
    MatrixField bt = b.transpose();
    MatrixAverages avg(lat, bt);
    return sup_cubes(lat, [&](const Cube& q) {
        Mat mb = avg.at(q);
        Mat vinv = spd_power(wl.reducing(q, p).V_dual, -1.0);
        double s = 0;
        long long cnt = 0;
        for_each_cell(lat, q, [&](long long c) {
            Mat d = Mat::from_flat(n, bt.at(c)) - mb;
            s += std::pow(op_norm(Mat::from_flat(n, A.at(c)) * d * vinv), pd);
            ++cnt;
        });
        return s / cnt;
    });
}

BmoW bmo_w_norm(const MatrixField& b, WeightOnLattice& wl, double p) {
    BmoW r;
    if (p >= 2.0) {
        CubeSup a = bmo_primal(b, wl, p);
        r.primal = a.value;
        r.primal_cube = a.cube;
    }
    if (p <= 2.0) {
        CubeSup a = bmo_dual(b, wl, p);
        r.dual = a.value;
        r.dual_cube = a.cube;
    }
    if (p > 2.0) {
        r.value = r.primal;
        r.form = "primal";
    } else if (p < 2.0) {
        r.value = r.dual;
        r.form = "dual";
    } else {
        r.value = r.primal;
        r.form = "primal (p = 2, both computed)";
    }
    return r;
}

double ratio_sym(double x, double y) {
    if (x == 0.0 && y == 0.0) return 1.0;
    if (x == 0.0 || y == 0.0) return std::numeric_limits<double>::infinity();
    return std::max(x / y, y / x);
}

PrimeFormsReport bmo_prime_forms(const MatrixField& b, WeightOnLattice& wl, double p, double c_equiv) {
    PrimeFormsReport r;
    BmoW a = bmo_w_norm(b, wl, p);
    r.a = a.value;
    r.b = p >= 2.0 ? a.primal : bmo_primal(b, wl, p).value;
    r.c = p <= 2.0 ? a.dual : bmo_dual(b, wl, p).value;
    r.ratio_ab = ratio_sym(r.a, r.b);
    r.ratio_ac = ratio_sym(r.a, r.c);
    r.ratio_bc = ratio_sym(r.b, r.c);
    r.max_ratio = std::max({r.ratio_ab, r.ratio_ac, r.ratio_bc});
    r.comparable = r.max_ratio <= c_equiv;
    return r;
}

CubeSup bmo_wpq_norm(const MatrixField& b, WeightOnLattice& wl, double p, double q) {
    check_field(b, wl);
    if (!(q > 1.0)) throw ValidationError("bmo_wpq_norm: q must exceed 1");
    const Lattice& lat = wl.lattice();
    const int n = b.n;
    MatrixAverages avg(lat, b);
    return sup_cubes(lat, [&](const Cube& cq) {
        Mat mb = avg.at(cq);
        const Mat& V = wl.reducing(cq, p).V;
        Mat vinv = spd_power(V, -1.0);
        double s = 0;
        long long cnt = 0;
        for_each_cell(lat, cq, [&](long long c) {
            Mat d = Mat::from_flat(n, b.at(c)) - mb;
            s += std::pow(op_norm(V * d * vinv), q);
            ++cnt;
        });
        return s / cnt;
    });
}

CubeSup vector_bmo(const Field& f, WeightOnLattice& wl, double p, double q, VectorForm form) {
    const Lattice& lat = wl.lattice();
    if (f.mesh != lat.mesh) throw ValidationError("vector_bmo: mesh mismatch");
    const int n = wl.weight().n();
    if (f.m != n) throw ValidationError("vector_bmo: component count mismatch");
    if (form == VectorForm::reducing && !(q > 1.0)) throw ValidationError("vector_bmo: q must exceed 1");
    const double pd = dual_exponent(p);
    const MatrixField& A = wl.weight().power(-1.0 / p);
    auto sums = tree_sums(lat, f);
    return sup_cubes(lat, [&](const Cube& cq) {
        const double* sp = sums[cq.level].data() + cube_index(lat.mesh, cq) * n;
        const double cnt0 = static_cast<double>(cells_per_cube(lat.mesh, cq.level));
        Vec mf(sp, sp + n);
        for (auto& x : mf) x /= cnt0;
        Mat M = form == VectorForm::reducing ? spd_power(wl.reducing(cq, p).V, -1.0) : Mat();
        const double ex = form == VectorForm::reducing ? q : pd;
        double s = 0;
        long long cnt = 0;
        for_each_cell(lat, cq, [&](long long c) {
            Vec d(n);
            for (int i = 0; i < n; ++i) d[i] = f.at(c)[i] - mf[i];
            Vec v = form == VectorForm::reducing ? M * d : Mat::from_flat(n, A.at(c)) * d;
            s += std::pow(vec_norm(v), ex);
            ++cnt;
        });
        return s / cnt;
    });
}

namespace {

std::vector<std::vector<double>> coefficient_energy(const MatrixField& b, const Lattice& lat,
                                                    const std::function<double(const Cube&, const Mat&)>& g) {
    const Mesh& m = lat.mesh;
    const int n = b.n, ns = num_signatures(m.d);
    auto hc = haar_transform(b.as_field(), lat);
    std::vector<std::vector<double>> e(m.L + 1);
    for (int k = 0; k < m.L; ++k) {
        e[k].assign(cubes_at(m, k), 0.0);
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            double s = 0;
            for (int eps = 0; eps < ns; ++eps) {
                Mat bi = Mat::from_flat(n, hc.at(k, i, eps));
                if (bi.max_abs() == 0.0) continue;
                double v = g(q, bi);
                s += v * v;
            }
            e[k][i] = s;
        }
    }
    return e;
}

}  // namespace

CubeSup square_form(const MatrixField& b, WeightOnLattice& wl, double p) {
    check_field(b, wl);
    auto e = coefficient_energy(b, wl.lattice(), [&](const Cube& q, const Mat& bi) {
        const Mat& V = wl.reducing(q, p).V;
        return op_norm(V * bi * spd_power(V, -1.0));
    });
    CubeSup r = subtree_sup(wl.lattice(), e, true);
    r.value = std::sqrt(r.value);
    return r;
}

CubeSup classical_bmo(const MatrixField& b, const Lattice& lat) {
    if (b.mesh != lat.mesh) throw ValidationError("classical_bmo: mesh mismatch");
    auto e = coefficient_energy(b, lat, [](const Cube&, const Mat& bi) { return op_norm(bi); });
    CubeSup r = subtree_sup(lat, e, true);
    r.value = std::sqrt(r.value);
    return r;
}

TraceCheck bmo_trace_check(const MatrixField& b, WeightOnLattice& wl, double p) {
    TraceCheck t;
    t.bmo_w = square_form(b, wl, p).value;
    t.bmo_w_adjoint = square_form(b.transpose(), wl, p).value;
    t.classical = classical_bmo(b, wl.lattice()).value;
    const double den = t.bmo_w * t.bmo_w_adjoint;
    t.ratio = den > 0.0 ? t.classical * t.classical / den : 0.0;
    return t;
}

CarlesonNorm carleson_norm(const HaarCoefficients& lam) {
    const Lattice& lat = lam.lattice;
    const Mesh& m = lat.mesh;
    const int ns = num_signatures(m.d);
    std::vector<std::vector<double>> e(m.L + 1);
    for (int k = 0; k < m.L; ++k) {
        e[k].assign(cubes_at(m, k), 0.0);
        for (long long i = 0; i < cubes_at(m, k); ++i)
            for (int eps = 0; eps < ns; ++eps) {
                const double* v = lam.at(k, i, eps);
                for (int c = 0; c < lam.m; ++c) e[k][i] += v[c] * v[c];
            }
    }
    CubeSup s = subtree_sup(lat, e, false);
    return {std::sqrt(s.value), s.cube};
}

EmbeddingReport carleson_embedding_check(const HaarCoefficients& lam, const MatrixField& b, WeightOnLattice& wl,
                                         double p) {
    check_field(b, wl);
    const Lattice& lat = wl.lattice();
    if (lam.lattice != lat) throw ValidationError("Carleson sequence lives on a different lattice");
    const Mesh& m = lat.mesh;
    const int n = b.n, ns = num_signatures(m.d);
    if (lam.m != n) throw ValidationError("Carleson sequence has wrong vector size");

    const MatrixField& A = wl.weight().power(-1.0 / p);
    MatrixField bw = MatrixField::zeros(m, n);
    for (long long c = 0; c < m.cells(); ++c) bw.set(c, b.mat(c) * Mat::from_flat(n, A.at(c)));
    MatrixAverages avg(lat, bw);

    std::vector<double> s2(m.cells(), 0.0);
    for (int k = 0; k < m.L; ++k)
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            bool any = false;
            for (int eps = 0; eps < ns && !any; ++eps)
                for (int c = 0; c < n; ++c) any = any || lam.at(k, i, eps)[c] != 0.0;
            if (!any) continue;
            Mat M = avg.at(q) * wl.reducing(q, p).V;
            double e = 0;
            for (int eps = 0; eps < ns; ++eps) {
                const double* l = lam.at(k, i, eps);
                double v = vec_norm(M * Vec(l, l + n));
                e += v * v;
            }
            e /= volume(m, k);
            for_each_cell(lat, q, [&](long long c) { s2[c] += e; });
        }
    EmbeddingReport r;
    for (double v : s2) r.lhs += std::pow(v, 0.5 * p);
    r.lhs *= m.cell_volume();
    r.carleson = carleson_norm(lam).norm;
    r.b_lp = matrix_lp_norm(b, p);
    const double den = std::pow(r.carleson, p) * std::pow(r.b_lp, p);
    r.ratio = den > 0.0 ? r.lhs / den : 0.0;
    return r;
}

StoppingTree stopping_time(WeightOnLattice& wl, const Cube& root, double p, double lambda1, double lambda2,
                           int max_generations) {
    if (!(lambda1 > 1.0) || !(lambda2 > 1.0)) throw ValidationError("stopping_time: lambda1, lambda2 must exceed 1");
    const Lattice& lat = wl.lattice();
    const int L = lat.mesh.L, nb = 1 << lat.mesh.d;
    const double pd = dual_exponent(p);
    StoppingTree t;
    t.root = root;
    t.d = lat.mesh.d;
    t.lambda1 = lambda1;
    t.lambda2 = lambda2;
    t.p = p;
    t.generations.push_back({StopCube{root, "root", -1}});
    for (int g = 0; g < max_generations; ++g) {
        std::vector<StopCube> next;
        const auto& cur = t.generations.back();
        for (int pi = 0; pi < static_cast<int>(cur.size()); ++pi) {
            const Cube& top = cur[pi].cube;
            const Mat& Vi = wl.reducing(top, p).V;
            Mat vi_inv = spd_power(Vi, -1.0);
            std::function<void(const Cube&)> descend = [&](const Cube& q) {
                if (q.level >= L) return;
                for (int b = 0; b < nb; ++b) {
                    Cube J = child(lat, q, b);
                    const Mat& Vj = wl.reducing(J, p).V;
                    if (std::pow(op_norm(Vj * vi_inv), p) > lambda1)
                        next.push_back({J, "v_ratio", pi});
                    else if (std::pow(op_norm(spd_power(Vj, -1.0) * Vi), pd) > lambda2)
                        next.push_back({J, "v_inverse_ratio", pi});
                    else
                        descend(J);
                }
            };
            descend(top);
        }
        if (next.empty()) break;
        t.generations.push_back(std::move(next));
    }
    return t;
}

double packing_measure(const StoppingTree& t, int j) {
    if (j < 0) throw ValidationError("packing_measure: j must be >= 0");
    if (j >= static_cast<int>(t.generations.size())) return 0.0;
    double s = 0;
    for (const auto& c : t.generations[j]) s += std::ldexp(1.0, -t.d * (c.cube.level - t.root.level));
    return s;
}

MatrixField haar_random_matrix(const Lattice& lat, int n, std::uint64_t seed, int depth) {
    HaarCoefficients hc = haar_random_sequence(lat, n * n, seed, depth);
    Field f = haar_inverse(hc);
    MatrixField b;
    b.mesh = lat.mesh;
    b.n = n;
    b.v = std::move(f.v);
    return b;
}

Field haar_random_vector(const Lattice& lat, int n, std::uint64_t seed, int depth) {
    return haar_inverse(haar_random_sequence(lat, n, seed, depth));
}

HaarCoefficients haar_random_sequence(const Lattice& lat, int m, std::uint64_t seed, int depth) {
    const Mesh& mesh = lat.mesh;
    std::mt19937_64 rng(mix_seed(seed, 0xb));
    std::normal_distribution<double> g;
    HaarCoefficients hc;
    hc.lattice = lat;
    hc.m = m;
    hc.mean.resize(m);
    for (auto& x : hc.mean) x = g(rng);
    hc.detail.resize(mesh.L);
    const int ns = num_signatures(mesh.d);
    for (int k = 0; k < mesh.L; ++k) {
        hc.detail[k].assign(static_cast<size_t>(cubes_at(mesh, k)) * ns * m, 0.0);
        if (k >= depth) continue;
        const double s = std::sqrt(volume(mesh, k));
        for (auto& x : hc.detail[k]) x = s * g(rng);
    }
    return hc;
}

std::vector<Lattice> lattice_family(const Mesh& m, int shifts, std::uint64_t seed) {
    std::vector<Lattice> out{build_lattice(m.d, m.L, {}, m.origin, m.side)};
    for (int s = 0; s < shifts; ++s)
        out.push_back(build_lattice_random(m.d, m.L, mix_seed(seed, 1000 + s), m.origin, m.side));
    return out;
}

}  // namespace mwdha
