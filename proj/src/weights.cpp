#include "mwdha/weights.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "mwdha/parallel.hpp"

namespace mwdha {

MatrixField MatrixField::zeros(const Mesh& mesh, int n) {
    MatrixField f;
    f.mesh = mesh;
    f.n = n;
    f.v.assign(static_cast<size_t>(mesh.cells()) * n * n, 0.0);
    return f;
}

void MatrixField::set(long long cell, const Mat& m) { std::copy(m.data(), m.data() + n * n, at(cell)); }

Field MatrixField::as_field() const {
    Field f;
    f.mesh = mesh;
    f.m = n * n;
    f.v = v;
    return f;
}

MatrixField MatrixField::transpose() const {
    MatrixField t = *this;
    for (long long c = 0; c < mesh.cells(); ++c) {
        const double* a = at(c);
        double* b = t.at(c);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) b[j * n + i] = a[i * n + j];
    }
    return t;
}

MatrixWeight::MatrixWeight(MatrixField cells, WeightDescriptor desc, std::vector<double> singular_points)
    : cells_(std::move(cells)), desc_(std::move(desc)), singular_(std::move(singular_points)),
      cache_(std::make_shared<Cache>()) {
    const int n = cells_.n;
    const long long N = cells_.mesh.cells();
    cache_->eig.resize(N);
    diagonal_ = true;
    for (long long c = 0; c < N; ++c) {
        Mat m = cells_.mat(c);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j && m(i, j) != 0.0) diagonal_ = false;
        Eigen e;
        try {
            e = sym_eig(m);
        } catch (const ValidationError& ex) {
            std::ostringstream os;
            os << "weight cell " << c << ": " << ex.what();
            throw ValidationError(os.str());
        }
        if (!(e.values[n - 1] > kEigFloor * e.values[0]) || !(e.values[0] > 0.0)) {
            std::ostringstream os;
            os << "weight cell " << c << " is not positive definite (eigenvalue " << e.values[n - 1] << ")";
            throw SingularityError(os.str());
        }
        cache_->eig[c] = std::move(e);
    }
}

const MatrixField& MatrixWeight::power(double t) const {
    std::lock_guard<std::mutex> lk(cache_->mu);
    auto it = cache_->powers.find(t);
    if (it != cache_->powers.end()) return *it->second;
    auto f = std::make_shared<MatrixField>(MatrixField::zeros(cells_.mesh, cells_.n));
    const int n = cells_.n;
    for (long long c = 0; c < cells_.mesh.cells(); ++c) {
        const Eigen& e = cache_->eig[c];
        double* out = f->at(c);
        for (int k = 0; k < n; ++k) {
            double lt = std::pow(e.values[k], t);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) out[i * n + j] += e.vectors(i, k) * lt * e.vectors(j, k);
        }
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) out[i * n + j] = out[j * n + i] = 0.5 * (out[i * n + j] + out[j * n + i]);
    }
    cache_->powers[t] = f;
    return *f;
}

namespace {

std::string join(const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(17);
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

// mean of |t|^beta over [a, b]
double power_average(double a, double b, double beta) {
    if (beta <= -1.0) throw ValidationError("power exponent must exceed -1");
    auto F = [beta](double t) { return (t < 0 ? -1.0 : 1.0) * std::pow(std::fabs(t), beta + 1.0) / (beta + 1.0); };
    return (F(b) - F(a)) / (b - a);
}

const double kGauss3x[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
const double kGauss3w[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};

}  // namespace

MatrixWeight constant_weight(const Mesh& m, const Mat& a) {
    MatrixField f = MatrixField::zeros(m, a.n());
    for (long long c = 0; c < m.cells(); ++c) f.set(c, a);
    WeightDescriptor d;
    d.kind = "constant";
    for (int i = 0; i < a.n(); ++i)
        for (int j = 0; j < a.n(); ++j) d.params.push_back(a(i, j));
    d.text = "const-matrix:" + join(d.params);
    return MatrixWeight(std::move(f), d);
}

MatrixWeight power1d_weight(const Mesh& m, const std::vector<double>& betas) {
    if (m.d != 1) throw UnsupportedError("power1d weights need d = 1");
    if (betas.empty()) throw ValidationError("power1d: no exponents");
    const int n = static_cast<int>(betas.size());
    MatrixField f = MatrixField::zeros(m, n);
    for (long long c = 0; c < m.cells(); ++c) {
        double a = m.origin[0] + c * m.h(), b = a + m.h();
        for (int i = 0; i < n; ++i) f.at(c)[i * n + i] = power_average(a, b, betas[i]);
    }
    WeightDescriptor d;
    d.kind = "power1d";
    d.params = betas;
    d.text = "power1d:" + join(betas);
    return MatrixWeight(std::move(f), d, {0.0});
}

MatrixWeight powermix_weight(const Mesh& m, int n, std::uint64_t seed, double beta_max) {
    if (n < 1) throw ValidationError("powermix: n must be >= 1");
    std::mt19937_64 rng(mix_seed(seed, 0x5eed));
    std::uniform_real_distribution<double> ub(-beta_max, beta_max), u01(0.0, 1.0);
    std::normal_distribution<double> g;
    const int terms = n + 1;
    std::vector<std::array<double, 3>> pts(terms);
    std::vector<double> beta(terms);
    std::vector<Vec> vs(terms, Vec(n));
    for (int k = 0; k < terms; ++k) {
        for (int a = 0; a < m.d; ++a) pts[k][a] = m.origin[a] + m.side * u01(rng);
        beta[k] = ub(rng);
        for (auto& x : vs[k]) x = g(rng);
    }
    // a spanning term set: the first n vectors get a unit basis nudge
    for (int k = 0; k < n; ++k) vs[k][k] += (vs[k][k] >= 0 ? 1.0 : -1.0);

    MatrixField f = MatrixField::zeros(m, n);
    const double h = m.h();
    for (long long c = 0; c < m.cells(); ++c) {
        Index3 cc = m.cell_coords(c);
        double* out = f.at(c);
        for (int k = 0; k < terms; ++k) {
            double avg;
            if (m.d == 1) {
                double a = m.origin[0] + cc[0] * h - pts[k][0];
                avg = power_average(a, a + h, beta[k]);
            } else {
                avg = 0.0;
                int np = 1;
                for (int a = 0; a < m.d; ++a) np *= 3;
                for (int idx = 0; idx < np; ++idx) {
                    double r2 = 0, w = 1;
                    int t = idx;
                    for (int a = 0; a < m.d; ++a) {
                        int j = t % 3;
                        t /= 3;
                        double x = m.origin[a] + (cc[a] + 0.5 + 0.5 * kGauss3x[j]) * h;
                        r2 += (x - pts[k][a]) * (x - pts[k][a]);
                        w *= 0.5 * kGauss3w[j];
                    }
                    avg += w * std::pow(r2, 0.5 * beta[k]);
                }
            }
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) out[i * n + j] += avg * vs[k][i] * vs[k][j];
        }
    }
    WeightDescriptor d;
    d.kind = "powermix";
    d.params = {double(n), double(seed), beta_max};
    d.text = "powermix:" + std::to_string(n) + "," + std::to_string(seed);
    std::vector<double> sing;
    for (int k = 0; k < terms; ++k)
        for (int a = 0; a < m.d; ++a) sing.push_back(pts[k][a]);
    return MatrixWeight(std::move(f), d, sing);
}

MatrixWeight step_weight(const Mesh& m, double a, double b) {
    MatrixField f = MatrixField::zeros(m, 1);
    for (long long c = 0; c < m.cells(); ++c) f.v[c] = m.cell_coords(c)[0] < m.per_axis() / 2 ? a : b;
    WeightDescriptor d;
    d.kind = "step";
    d.params = {a, b};
    d.text = "step:" + join(d.params);
    return MatrixWeight(std::move(f), d, {m.origin[0] + 0.5 * m.side});
}

MatrixWeight parse_weight(const std::string& desc, const Mesh& m) {
    auto colon = desc.find(':');
    std::string kind = desc.substr(0, colon);
    std::vector<double> args;
    if (colon != std::string::npos) {
        std::stringstream ss(desc.substr(colon + 1));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                args.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ValidationError("weight descriptor '" + desc + "': bad number '" + tok + "'");
            }
        }
    }
    if (kind == "identity") {
        int n = args.empty() ? 1 : static_cast<int>(args[0]);
        MatrixWeight w = constant_weight(m, Mat::identity(n));
        return w;
    }
    if (kind == "const") {
        if (args.empty()) throw ValidationError("const weight needs diagonal entries");
        return constant_weight(m, Mat::diag(args));
    }
    if (kind == "power1d") return power1d_weight(m, args);
    if (kind == "powermix") {
        if (args.size() < 2) throw ValidationError("powermix needs n,seed");
        return powermix_weight(m, static_cast<int>(args[0]), static_cast<std::uint64_t>(args[1]),
                               args.size() > 2 ? args[2] : 0.7);
    }
    if (kind == "step") {
        if (args.size() != 2) throw ValidationError("step needs a,b");
        return step_weight(m, args[0], args[1]);
    }
    throw ValidationError("unknown weight descriptor '" + desc + "'");
}

const char* method_name(ReducingMethod m) {
    switch (m) {
        case ReducingMethod::exact_p2: return "exact_p2";
        case ReducingMethod::mvee: return "mvee";
        default: return "scalar";
    }
}

ReducingMethod parse_method(const std::string& s) {
    if (s == "exact_p2") return ReducingMethod::exact_p2;
    if (s == "mvee") return ReducingMethod::mvee;
    if (s == "scalar") return ReducingMethod::scalar;
    throw ValidationError("unknown reducing method '" + s + "'");
}

ReducingMethod default_method(int n, double p) {
    if (n == 1) return ReducingMethod::scalar;
    if (p == 2.0) return ReducingMethod::exact_p2;
    return ReducingMethod::mvee;
}

double dual_exponent(double p) {
    if (!(p > 1.0) || !std::isfinite(p)) throw ValidationError("p must lie in (1, inf)");
    return p / (p - 1.0);
}

std::vector<Vec> fit_directions(int n) {
    std::vector<Vec> dirs;
    if (n == 1) return {{1.0}};
    if (n == 2) {
        for (int k = 0; k < 64; ++k) {
            double t = M_PI * k / 64;
            dirs.push_back({std::cos(t), std::sin(t)});
        }
        return dirs;
    }
    if (n == 3) {
        const int m = 512;
        const double ga = M_PI * (3.0 - std::sqrt(5.0));
        for (int k = 0; k < m; ++k) {
            double z = 1.0 - (k + 0.5) / m;
            double r = std::sqrt(1.0 - z * z);
            dirs.push_back({r * std::cos(ga * k), r * std::sin(ga * k), z});
        }
        return dirs;
    }
    const long long m = std::min<long long>(1LL << (5 * n - 4), 4096);
    std::mt19937_64 rng(mix_seed(n, 0xd1));
    std::normal_distribution<double> g;
    for (int i = 0; i < n; ++i) {
        Vec e(n, 0.0);
        e[i] = 1.0;
        dirs.push_back(e);
    }
    while (static_cast<long long>(dirs.size()) < m) {
        Vec e(n);
        for (auto& x : e) x = g(rng);
        double s = vec_norm(e);
        for (auto& x : e) x /= s;
        dirs.push_back(e);
    }
    return dirs;
}

WeightOnLattice::WeightOnLattice(const MatrixWeight& w, const Lattice& lat, double mvee_tol)
    : w_(w), lat_(lat), tol_(mvee_tol) {
    if (w.mesh() != lat.mesh) throw ValidationError("weight and lattice meshes differ");
}

const std::vector<std::vector<double>>& WeightOnLattice::sums(double t) {
    {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = sums_.find(t);
        if (it != sums_.end()) return *it->second;
    }
    auto s = std::make_shared<std::vector<std::vector<double>>>(tree_sums(lat_, w_.power(t).as_field()));
    std::lock_guard<std::mutex> lk(mu_);
    auto [it, fresh] = sums_.emplace(t, s);
    return *it->second;
}

Mat WeightOnLattice::average(const Cube& q, double t) {
    const auto& s = sums(t);
    const int n = w_.n();
    const long long idx = cube_index(lat_.mesh, q);
    Mat m = Mat::from_flat(n, s[q.level].data() + idx * n * n);
    return m * (1.0 / static_cast<double>(cells_per_cube(lat_.mesh, q.level)));
}

double WeightOnLattice::rho(const Cube& q, double s, double r, const Vec& e) const {
    const MatrixField& ws = w_.power(s);
    const int n = w_.n();
    double acc = 0.0;
    long long cnt = 0;
    for_each_cell(lat_, q, [&](long long c) {
        const double* a = ws.at(c);
        double nn = 0;
        for (int i = 0; i < n; ++i) {
            double t = 0;
            for (int j = 0; j < n; ++j) t += a[i * n + j] * e[j];
            nn += t * t;
        }
        acc += std::pow(nn, 0.5 * r);
        ++cnt;
    });
    return std::pow(acc / cnt, 1.0 / r);
}

namespace {

struct FitResult {
    Mat V;
    double kappa;
    std::vector<Vec> dirs;
};

// V with {|V e| <= 1} inside the unit ball of rho and |V e| <= sqrt(kappa) rho(e)
// on the sampled directions.
FitResult fit_reducing(WeightOnLattice& wl, const Cube& q, double s, double r, double tol) {
    const int n = wl.weight().n();
    Mat whiten = spd_power(wl.average(q, 2.0 * s), -0.5);
    std::vector<Vec> pts;
    FitResult out;
    for (const Vec& u : fit_directions(n)) {
        Vec e = whiten * u;
        double en = vec_norm(e);
        for (auto& x : e) x /= en;
        double rh = wl.rho(q, s, r, e);
        if (!(rh > 0.0) || !std::isfinite(rh)) throw SingularityError("reducing operator: degenerate norm on cube");
        Vec pnt(n);
        for (int i = 0; i < n; ++i) pnt[i] = e[i] / rh;
        pts.push_back(pnt);
        for (auto& x : pnt) x = -x;
        pts.push_back(pnt);
        out.dirs.push_back(e);
    }
    EllipsoidFit fit = mvee(pts, tol);
    out.V = fit.shape * std::sqrt(fit.kappa);
    out.kappa = fit.kappa;
    return out;
}

}  // namespace

const ReducingPair& WeightOnLattice::reducing(const Cube& q, double p, ReducingMethod m) {
    const auto key = std::make_tuple(q.level, cube_index(lat_.mesh, q), p, static_cast<int>(m));
    {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = pairs_.find(key);
        if (it != pairs_.end()) return *it->second;
    }
    const double pd = dual_exponent(p);
    const int n = w_.n();
    auto rp = std::make_shared<ReducingPair>();
    rp->cube = q;
    rp->method = m;
    switch (m) {
        case ReducingMethod::exact_p2:
            if (p != 2.0) throw ValidationError("exact_p2 reducing operators need p = 2");
            rp->V = spd_power(average(q, 1.0), 0.5);
            rp->V_dual = spd_power(average(q, -1.0), 0.5);
            break;
        case ReducingMethod::scalar: {
            if (n != 1) throw ValidationError("scalar reducing operators need n = 1");
            double a = average(q, 1.0)(0, 0);
            double b = average(q, -pd / p)(0, 0);
            rp->V = Mat{{std::pow(a, 1.0 / p)}};
            rp->V_dual = Mat{{std::pow(b, 1.0 / pd)}};
            break;
        }
        case ReducingMethod::mvee: {
            FitResult a = fit_reducing(*this, q, 1.0 / p, p, tol_);
            FitResult b = fit_reducing(*this, q, -1.0 / p, pd, tol_);
            rp->V = a.V;
            rp->kappa = a.kappa;
            rp->directions = std::move(a.dirs);
            rp->V_dual = b.V;
            rp->kappa_dual = b.kappa;
            break;
        }
    }
    double nv = op_norm(rp->V * rp->V_dual);
    if (nv < 1.0) rp->V_dual = rp->V_dual * (1.0 / nv);
    std::lock_guard<std::mutex> lk(mu_);
    auto [it, fresh] = pairs_.emplace(key, rp);
    return *it->second;
}

Mat cell_average(const MatrixWeight& w, const Lattice& lat, const Cube& q) {
    if (w.mesh() != lat.mesh) throw ValidationError("weight and lattice meshes differ");
    const int n = w.n();
    Mat s(n);
    long long cnt = 0;
    for_each_cell(lat, q, [&](long long c) {
        const double* a = w.cells().at(c);
        for (int i = 0; i < n * n; ++i) s.data()[i] += a[i];
        ++cnt;
    });
    return s * (1.0 / cnt);
}

ReducingPair reducing_operator(const MatrixWeight& w, const Lattice& lat, const Cube& q, double p, ReducingMethod m,
                               double mvee_tol) {
    WeightOnLattice wl(w, lat, mvee_tol);
    return wl.reducing(q, p, m);
}

namespace {

inline double prod_norm(int n, const double* a, const double* b) {
    if (n == 1) return std::fabs(a[0] * b[0]);
    if (n == 2) {
        double m[4] = {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
                       a[2] * b[1] + a[3] * b[3]};
        return op_norm2(m);
    }
    return op_norm(Mat::from_flat(n, a) * Mat::from_flat(n, b));
}

}  // namespace

CharacteristicReport ap_characteristic(const MatrixWeight& w, double p, const Lattice& lat, long long pair_cap,
                                       std::uint64_t seed) {
    if (w.mesh() != lat.mesh) throw ValidationError("weight and lattice meshes differ");
    const double pd = dual_exponent(p);
    const int n = w.n();
    const Mesh& m = lat.mesh;
    const MatrixField& A = w.power(1.0 / p);
    const MatrixField& B = w.power(-1.0 / p);

    CharacteristicReport rep;
    rep.method = "exact";
    rep.value = 0.0;
    bool sampled = false;

    std::vector<Cube> cubes;
    for (int k = 0; k <= m.L; ++k)
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            if (!is_exterior(lat, q)) cubes.push_back(q);
        }
    std::vector<double> val(cubes.size(), 0.0), serr(cubes.size(), 0.0);

    parallel_for(static_cast<long long>(cubes.size()), [&](long long ci) {
        const Cube& q = cubes[ci];
        std::vector<long long> cells;
        for_each_cell(lat, q, [&](long long c) { cells.push_back(c); });
        const long long N = static_cast<long long>(cells.size());
        if (n == 1) {
            double sa = 0, sb = 0;
            for (long long c : cells) {
                sa += w.cells().at(c)[0];
                sb += std::pow(w.cells().at(c)[0], -pd / p);
            }
            val[ci] = (sa / N) * std::pow(sb / N, p - 1.0);
            return;
        }
        if (N * N <= pair_cap) {
            double outer = 0;
            for (long long x : cells) {
                double inner = 0;
                for (long long t : cells) inner += std::pow(prod_norm(n, A.at(x), B.at(t)), pd);
                outer += std::pow(inner / N, p / pd);
            }
            val[ci] = outer / N;
            return;
        }
        const long long S = static_cast<long long>(std::sqrt(static_cast<double>(pair_cap)));
        const long long per = N / S;
        double rep_val[2];
        for (int r = 0; r < 2; ++r) {
            std::mt19937_64 rng(mix_seed(seed, (static_cast<std::uint64_t>(ci) << 1) | r));
            std::uniform_int_distribution<long long> pick(0, per - 1);
            double outer = 0;
            for (long long sx = 0; sx < S; ++sx) {
                long long x = cells[sx * per + pick(rng)];
                double inner = 0;
                for (long long st = 0; st < S; ++st) {
                    long long t = cells[st * per + pick(rng)];
                    inner += std::pow(prod_norm(n, A.at(x), B.at(t)), pd);
                }
                outer += std::pow(inner / S, p / pd);
            }
            rep_val[r] = outer / S;
        }
        val[ci] = 0.5 * (rep_val[0] + rep_val[1]);
        serr[ci] = 0.5 * std::fabs(rep_val[0] - rep_val[1]);
    });

    for (size_t ci = 0; ci < cubes.size(); ++ci) {
        if (serr[ci] > 0) sampled = true;
        rep.sampling_error = std::max(rep.sampling_error, serr[ci]);
        if (val[ci] > rep.value) {
            rep.value = val[ci];
            rep.attaining = cubes[ci];
        }
    }
    if (sampled) rep.method = "exact+stratified";
    return rep;
}

CharacteristicReport ap_characteristic_reducing(WeightOnLattice& wl, double p, ReducingMethod method) {
    const Lattice& lat = wl.lattice();
    const Mesh& m = lat.mesh;
    CharacteristicReport rep;
    rep.method = method_name(method);
    for (int k = 0; k <= m.L; ++k)
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            if (is_exterior(lat, q)) continue;
            const ReducingPair& rp = wl.reducing(q, p, method);
            double v = std::pow(op_norm(rp.V * rp.V_dual), p);
            if (v > rep.value) {
                rep.value = v;
                rep.attaining = q;
            }
            rep.distortion_bound = std::max(rep.distortion_bound, std::sqrt(rp.kappa * rp.kappa_dual));
        }
    return rep;
}

CharacteristicReport b2p_characteristic(WeightOnLattice& wl, double p) {
    const Lattice& lat = wl.lattice();
    const Mesh& m = lat.mesh;
    if (m.d != 1) throw UnsupportedError("B_{2,p} characteristic is implemented for d = 1 only");
    const int n = wl.weight().n();
    const MatrixField& A = wl.weight().power(1.0 / p);
    const double h = m.h(), a0 = m.origin[0], a1 = m.origin[0] + m.side;
    CharacteristicReport rep;
    const ReducingMethod method = default_method(n, p);
    rep.method = method_name(method);
    std::vector<double> g(m.cells());
    for (int k = 0; k <= m.L; ++k)
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            if (is_exterior(lat, q)) continue;
            const ReducingPair& rp = wl.reducing(q, p, method);
            Mat vinv = spd_power(rp.V, -1.0);
            const long long lo = cube_lo_cells(lat, q, 0), hi = lo + cells_per_cube(m, k);
            const double c = cube_center(lat, q, 0), len = side_length(m, k);
            double s = 0;
            for (long long t = 0; t < m.cells(); ++t) {
                g[t] = prod_norm(n, vinv.data(), A.at(t));
                if (t >= lo && t < hi) continue;
                double a = a0 + t * h, b = a + h;
                s += g[t] * (1.0 / (a - c) - 1.0 / (b - c));
            }
            double v = len * s;
            if (v > rep.value) {
                rep.value = v;
                rep.attaining = q;
                rep.distortion_bound = std::sqrt(rp.kappa);
                rep.truncation_deficit = len * (g[0] / (c - a0) + g[m.cells() - 1] / (a1 - c));
            }
        }
    return rep;
}

double lp_norm(const Field& f, const MatrixWeight& w, double p) {
    if (f.mesh != w.mesh()) throw ValidationError("lp_norm: function and weight meshes differ");
    if (f.m != w.n()) throw ValidationError("lp_norm: function has wrong number of components");
    const int n = w.n();
    const MatrixField& A = w.power(1.0 / p);
    double s = 0;
    for (long long c = 0; c < f.mesh.cells(); ++c) {
        const double* a = A.at(c);
        const double* x = f.at(c);
        double nn = 0;
        for (int i = 0; i < n; ++i) {
            double t = 0;
            for (int j = 0; j < n; ++j) t += a[i * n + j] * x[j];
            nn += t * t;
        }
        s += std::pow(nn, 0.5 * p);
    }
    return std::pow(s * f.mesh.cell_volume(), 1.0 / p);
}

double square_function_norm(const Field& f, WeightOnLattice& wl, double p) {
    const Lattice& lat = wl.lattice();
    const Mesh& m = lat.mesh;
    if (f.mesh != m) throw ValidationError("square_function_norm: mesh mismatch");
    const int n = wl.weight().n();
    if (f.m != n) throw ValidationError("square_function_norm: wrong component count");
    auto hc = haar_transform(f, lat);
    std::vector<double> s2(m.cells(), 0.0);
    const int ns = num_signatures(m.d);
    for (int k = 0; k < m.L; ++k)
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            double e2 = 0;
            bool any = false;
            for (int e = 0; e < ns; ++e)
                for (int c = 0; c < n; ++c) any = any || hc.at(k, i, e)[c] != 0.0;
            if (!any) continue;
            const Mat& V = wl.reducing(q, p).V;
            for (int e = 0; e < ns; ++e) {
                const double* co = hc.at(k, i, e);
                Vec x(co, co + n);
                double v = vec_norm(V * x);
                e2 += v * v;
            }
            e2 /= volume(m, k);
            for_each_cell(lat, q, [&](long long c) { s2[c] += e2; });
        }
    double acc = 0;
    for (double v : s2) acc += std::pow(v, 0.5 * p);
    return std::pow(acc * m.cell_volume(), 1.0 / p);
}

Field weighted_maximal(WeightOnLattice& wl, const MatrixField& b, double p) {
    const Lattice& lat = wl.lattice();
    const Mesh& m = lat.mesh;
    if (b.mesh != m) throw ValidationError("weighted_maximal: mesh mismatch");
    const int n = wl.weight().n();
    if (b.n != n) throw ValidationError("weighted_maximal: matrix size mismatch");
    const MatrixField& Wm = wl.weight().power(-1.0 / p);
    const MatrixField bt = b.transpose();
    Field out = Field::zeros(m, 1);
    for (int k = 0; k <= m.L; ++k)
        for (long long i = 0; i < cubes_at(m, k); ++i) {
            Cube q = cube_at(m, k, i);
            const Mat& V = wl.reducing(q, p).V;
            double s = 0;
            long long cnt = 0;
            for_each_cell(lat, q, [&](long long c) {
                Mat prod = V * Mat::from_flat(n, Wm.at(c)) * Mat::from_flat(n, bt.at(c));
                s += op_norm(prod);
                ++cnt;
            });
            s /= cnt;
            for_each_cell(lat, q, [&](long long c) { out.v[c] = std::max(out.v[c], s); });
        }
    return out;
}

double matrix_lp_norm(const MatrixField& b, double p) {
    double s = 0;
    for (long long c = 0; c < b.mesh.cells(); ++c) s += std::pow(op_norm(b.mat(c)), p);
    return std::pow(s * b.mesh.cell_volume(), 1.0 / p);
}

}  // namespace mwdha
