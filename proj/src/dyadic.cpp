#include "mwdha/dyadic.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace mwdha {

namespace {

long long floor_div(long long a, long long b) {
    long long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

long long pos_mod(long long a, long long b) {
    long long r = a % b;
    return r < 0 ? r + b : r;
}

}  // namespace

double Mesh::cell_volume() const { return std::pow(h(), d); }

Index3 Mesh::cell_coords(long long idx) const {
    Index3 c{0, 0, 0};
    const long long P = per_axis();
    for (int a = d - 1; a >= 0; --a) {
        c[a] = static_cast<int>(idx % P);
        idx /= P;
    }
    return c;
}

long long Mesh::cell_index(const Index3& c) const {
    long long idx = 0;
    for (int a = 0; a < d; ++a) idx = idx * per_axis() + c[a];
    return idx;
}

double Mesh::cell_center(long long idx, int axis) const {
    return origin[axis] + (cell_coords(idx)[axis] + 0.5) * h();
}

long long Mesh::locate(const double* x) const {
    Index3 c{0, 0, 0};
    for (int a = 0; a < d; ++a) {
        double t = (x[a] - origin[a]) / h();
        if (t < 0.0 || t >= per_axis()) return -1;
        c[a] = static_cast<int>(std::floor(t));
    }
    return cell_index(c);
}

bool Mesh::operator==(const Mesh& o) const {
    if (d != o.d || L != o.L || side != o.side) return false;
    for (int a = 0; a < d; ++a)
        if (origin[a] != o.origin[a]) return false;
    return true;
}

long long Lattice::shift(int level, int axis) const {
    long long s = 0;
    for (int j = level; j < static_cast<int>(omega.size()); ++j)
        if (omega[j][axis]) s += 1LL << (mesh.L - j - 1);
    return s;
}

bool Lattice::shifted() const {
    for (const auto& w : omega)
        for (int a = 0; a < mesh.d; ++a)
            if (w[a]) return true;
    return false;
}

Lattice build_lattice(int d, int L, std::vector<Index3> omega, std::array<double, 3> origin, double side,
                      long long cell_cap) {
    if (d < 1 || d > 3) throw ValidationError("build_lattice: d must be in 1..3");
    if (L < 1 || L > 24 / d) {
        std::ostringstream os;
        os << "build_lattice: L must be in 1.." << 24 / d << " for d=" << d;
        throw ValidationError(os.str());
    }
    if (!(side > 0.0)) throw ValidationError("build_lattice: side must be positive");
    const long long cells = 1LL << (d * L);
    if (cells > cell_cap) {
        std::ostringstream os;
        os << "build_lattice: " << cells << " cells exceeds cap " << cell_cap;
        throw ResourceError(os.str());
    }
    Lattice lat;
    lat.mesh.d = d;
    lat.mesh.L = L;
    lat.mesh.origin = origin;
    lat.mesh.side = side;
    if (omega.empty()) omega.assign(L, Index3{0, 0, 0});
    if (static_cast<int>(omega.size()) != L) throw ValidationError("build_lattice: omega needs one entry per level");
    for (auto& w : omega)
        for (int a = 0; a < 3; ++a) {
            if (a >= d) w[a] = 0;
            if (w[a] != 0 && w[a] != 1) throw ValidationError("build_lattice: omega entries must be 0 or 1");
        }
    lat.omega = std::move(omega);
    return lat;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Lattice build_lattice_random(int d, int L, std::uint64_t seed, std::array<double, 3> origin, double side,
                             long long cell_cap) {
    std::vector<Index3> omega(L, Index3{0, 0, 0});
    for (int k = 0; k < L; ++k) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
        for (int a = 0; a < d; ++a) omega[k][a] = static_cast<int>(rng() & 1ULL);
    }
    return build_lattice(d, L, std::move(omega), origin, side, cell_cap);
}

long long cubes_at(const Mesh& m, int level) { return 1LL << (m.d * level); }

long long cube_index(const Mesh& m, const Cube& q) {
    long long idx = 0;
    for (int a = 0; a < m.d; ++a) idx = (idx << q.level) + q.c[a];
    return idx;
}

Cube cube_at(const Mesh& m, int level, long long idx) {
    Cube q;
    q.level = level;
    const long long P = 1LL << level;
    for (int a = m.d - 1; a >= 0; --a) {
        q.c[a] = static_cast<int>(idx % P);
        idx /= P;
    }
    return q;
}

long long cells_per_cube(const Mesh& m, int level) { return 1LL << (m.d * (m.L - level)); }

double side_length(const Mesh& m, int level) { return m.side / static_cast<double>(1LL << level); }

double volume(const Mesh& m, int level) { return std::pow(side_length(m, level), m.d); }

long long cube_lo_cells(const Lattice& lat, const Cube& q, int axis) {
    return static_cast<long long>(q.c[axis]) * (1LL << (lat.mesh.L - q.level)) + lat.shift(q.level, axis);
}

double cube_lo(const Lattice& lat, const Cube& q, int axis) {
    return lat.mesh.origin[axis] + cube_lo_cells(lat, q, axis) * lat.mesh.h();
}

double cube_center(const Lattice& lat, const Cube& q, int axis) {
    return cube_lo(lat, q, axis) + 0.5 * side_length(lat.mesh, q.level);
}

bool is_exterior(const Lattice& lat, const Cube& q) {
    const long long span = 1LL << (lat.mesh.L - q.level);
    for (int a = 0; a < lat.mesh.d; ++a)
        if (cube_lo_cells(lat, q, a) + span > lat.mesh.per_axis()) return true;
    return false;
}

Cube child(const Lattice& lat, const Cube& q, int bits) {
    Cube r;
    r.level = q.level + 1;
    const long long P = 1LL << r.level;
    for (int a = 0; a < lat.mesh.d; ++a) {
        long long w = q.level < static_cast<int>(lat.omega.size()) ? lat.omega[q.level][a] : 0;
        r.c[a] = static_cast<int>(pos_mod(2LL * q.c[a] + w + ((bits >> a) & 1), P));
    }
    return r;
}

Cube parent(const Lattice& lat, const Cube& q) {
    Cube r;
    r.level = q.level - 1;
    const long long P = 1LL << r.level;
    for (int a = 0; a < lat.mesh.d; ++a) {
        long long w = lat.omega[r.level][a];
        r.c[a] = static_cast<int>(pos_mod(floor_div(q.c[a] - w, 2), P));
    }
    return r;
}

Cube containing(const Lattice& lat, int level, long long cell) {
    Cube r;
    r.level = level;
    const Index3 cc = lat.mesh.cell_coords(cell);
    const long long span = 1LL << (lat.mesh.L - level);
    for (int a = 0; a < lat.mesh.d; ++a)
        r.c[a] = static_cast<int>(pos_mod(floor_div(cc[a] - lat.shift(level, a), span), 1LL << level));
    return r;
}

bool contains(const Lattice& lat, const Cube& outer, const Cube& inner) {
    if (inner.level < outer.level) return false;
    Index3 first{0, 0, 0};
    for (int a = 0; a < lat.mesh.d; ++a)
        first[a] = static_cast<int>(pos_mod(cube_lo_cells(lat, inner, a), lat.mesh.per_axis()));
    return containing(lat, outer.level, lat.mesh.cell_index(first)) == outer;
}

double cube_distance(const Lattice& lat, const Cube& a, const Cube& b) {
    double s = 0.0;
    for (int ax = 0; ax < lat.mesh.d; ++ax) {
        double alo = cube_lo(lat, a, ax), ahi = alo + side_length(lat.mesh, a.level);
        double blo = cube_lo(lat, b, ax), bhi = blo + side_length(lat.mesh, b.level);
        double gap = std::max(0.0, std::max(blo - ahi, alo - bhi));
        s += gap * gap;
    }
    return std::sqrt(s);
}

int num_signatures(int d) { return (1 << d) - 1; }

int signature_mask(const std::vector<int>& eps) {
    int mask = 0;
    for (size_t i = 0; i < eps.size(); ++i) {
        if (eps[i] != 0 && eps[i] != 1) throw ValidationError("signature entries must be 0 or 1");
        mask |= eps[i] << i;
    }
    if (eps.empty() || mask == (1 << eps.size()) - 1)
        throw ValidationError("signature (1,...,1) is not cancellative and is excluded");
    return mask;
}

std::vector<int> signature_bits(int mask, int d) {
    std::vector<int> e(d);
    for (int i = 0; i < d; ++i) e[i] = (mask >> i) & 1;
    return e;
}

double haar_sign(int mask, int child_bits, int d) {
    double s = 1.0;
    for (int i = 0; i < d; ++i)
        if (!((mask >> i) & 1) && ((child_bits >> i) & 1)) s = -s;
    return s;
}

double haar_eval(const Lattice& lat, const Cube& q, const std::vector<int>& eps, const double* x) {
    const Mesh& m = lat.mesh;
    if (static_cast<int>(eps.size()) != m.d) throw ValidationError("haar_eval: signature length must equal d");
    const int mask = signature_mask(eps);
    const double ell = side_length(m, q.level);
    int bits = 0;
    for (int a = 0; a < m.d; ++a) {
        double t = x[a] - cube_lo(lat, q, a);
        t = std::fmod(t, m.side);
        if (t < 0) t += m.side;
        if (t >= ell) return 0.0;
        if (t >= 0.5 * ell) bits |= 1 << a;
    }
    return haar_sign(mask, bits, m.d) / std::sqrt(std::pow(ell, m.d));
}

Field Field::zeros(const Mesh& mesh, int m) {
    Field f;
    f.mesh = mesh;
    f.m = m;
    f.v.assign(static_cast<size_t>(mesh.cells()) * m, 0.0);
    return f;
}

std::vector<std::vector<double>> tree_sums(const Lattice& lat, const Field& f) {
    if (f.mesh != lat.mesh) throw ValidationError("tree_sums: field and lattice meshes differ");
    const Mesh& m = lat.mesh;
    const int nb = 1 << m.d;
    std::vector<std::vector<double>> s(m.L + 1);
    s[m.L] = f.v;
    for (int k = m.L - 1; k >= 0; --k) {
        const long long nc = cubes_at(m, k);
        s[k].assign(static_cast<size_t>(nc) * f.m, 0.0);
        for (long long i = 0; i < nc; ++i) {
            Cube q = cube_at(m, k, i);
            double* dst = s[k].data() + i * f.m;
            for (int b = 0; b < nb; ++b) {
                const double* src = s[k + 1].data() + cube_index(m, child(lat, q, b)) * f.m;
                for (int c = 0; c < f.m; ++c) dst[c] += src[c];
            }
        }
    }
    return s;
}

HaarCoefficients haar_transform(const Field& f, const Lattice& lat) {
    if (f.mesh != lat.mesh) throw ValidationError("haar_transform: field and lattice meshes differ");
    const Mesh& m = lat.mesh;
    const int nb = 1 << m.d, ns = num_signatures(m.d);
    HaarCoefficients out;
    out.lattice = lat;
    out.m = f.m;
    out.detail.resize(m.L);

    auto sums = tree_sums(lat, f);
    const double cv = m.cell_volume();
    for (int k = 0; k < m.L; ++k) {
        const long long nc = cubes_at(m, k);
        out.detail[k].assign(static_cast<size_t>(nc) * ns * f.m, 0.0);
        const double norm = cv / std::sqrt(volume(m, k));
        for (long long i = 0; i < nc; ++i) {
            Cube q = cube_at(m, k, i);
            for (int b = 0; b < nb; ++b) {
                const double* src = sums[k + 1].data() + cube_index(m, child(lat, q, b)) * f.m;
                for (int e = 0; e < ns; ++e) {
                    double s = haar_sign(e, b, m.d) * norm;
                    double* dst = out.at(k, i, e);
                    for (int c = 0; c < f.m; ++c) dst[c] += s * src[c];
                }
            }
        }
    }
    out.mean.assign(f.m, 0.0);
    const double n = static_cast<double>(m.cells());
    for (int c = 0; c < f.m; ++c) out.mean[c] = sums[0][c] / n;
    return out;
}

Field haar_inverse(const HaarCoefficients& hc) {
    const Lattice& lat = hc.lattice;
    const Mesh& m = lat.mesh;
    const int nb = 1 << m.d, ns = num_signatures(m.d);
    std::vector<double> cur(hc.mean);
    for (int k = 0; k < m.L; ++k) {
        const long long nc = cubes_at(m, k);
        std::vector<double> next(static_cast<size_t>(cubes_at(m, k + 1)) * hc.m, 0.0);
        const double norm = 1.0 / std::sqrt(volume(m, k));
        for (long long i = 0; i < nc; ++i) {
            Cube q = cube_at(m, k, i);
            const double* base = cur.data() + i * hc.m;
            for (int b = 0; b < nb; ++b) {
                double* dst = next.data() + cube_index(m, child(lat, q, b)) * hc.m;
                for (int c = 0; c < hc.m; ++c) dst[c] = base[c];
                for (int e = 0; e < ns; ++e) {
                    double s = haar_sign(e, b, m.d) * norm;
                    const double* co = hc.at(k, i, e);
                    for (int c = 0; c < hc.m; ++c) dst[c] += s * co[c];
                }
            }
        }
        cur.swap(next);
    }
    Field f;
    f.mesh = m;
    f.m = hc.m;
    f.v = std::move(cur);
    return f;
}

bool is_bad(const Lattice& lat, const Cube& q, int r, double alpha) {
    if (r < 1) throw ValidationError("is_bad: r must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("is_bad: alpha must lie in (0,1]");
    const Mesh& m = lat.mesh;
    const double gamma = alpha / (2.0 * alpha + 2.0 * m.d);
    const double li = side_length(m, q.level);
    long long lo[3];
    for (int a = 0; a < m.d; ++a) lo[a] = cube_lo_cells(lat, q, a);
    const long long ispan = 1LL << (m.L - q.level);
    for (int k = q.level - r; k >= 0; --k) {
        const long long span = 1LL << (m.L - k);
        const double lj = side_length(m, k);
        double dist = INFINITY;
        for (int a = 0; a < m.d; ++a) {
            long long s = lat.shift(k, a);
            long long jlo = floor_div(lo[a] - s, span) * span + s;
            long long left = lo[a] - jlo;
            long long right = jlo + span - (lo[a] + ispan);
            dist = std::min(dist, static_cast<double>(std::min(left, right)) * m.h());
        }
        if (dist <= std::pow(li, gamma) * std::pow(lj, 1.0 - gamma)) return true;
    }
    return false;
}

PiBadEstimate estimate_pi_bad(int d, int r, double alpha, long long trials, std::uint64_t seed, int depth) {
    if (trials < 100) throw ValidationError("estimate_pi_bad: trials must be >= 100");
    if (depth < 1 || depth > 24 / d) throw ValidationError("estimate_pi_bad: depth out of range");
    Lattice lat = build_lattice(d, depth);
    Cube q;
    q.level = depth;
    long long bad = 0;
    for (long long t = 0; t < trials; ++t) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
        for (int k = 0; k < depth; ++k)
            for (int a = 0; a < d; ++a) lat.omega[k][a] = static_cast<int>(rng() & 1ULL);
        if (is_bad(lat, q, r, alpha)) ++bad;
    }
    PiBadEstimate e;
    e.trials = trials;
    e.depth = depth;
    e.estimate = static_cast<double>(bad) / static_cast<double>(trials);
    e.stderr_ = std::sqrt(e.estimate * (1.0 - e.estimate) / static_cast<double>(trials));
    return e;
}

}  // namespace mwdha
