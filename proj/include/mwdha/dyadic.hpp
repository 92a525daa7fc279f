#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mwdha/errors.hpp"

namespace mwdha {

using Index3 = std::array<int, 3>;

// Uniform mesh of 2^{dL} cells on the base cube [origin, origin + side)^d.
struct Mesh {
    int d = 1;
    int L = 0;
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    double side = 1.0;

    int per_axis() const { return 1 << L; }
    long long cells() const { return 1LL << (d * L); }
    double h() const { return side / per_axis(); }
    double cell_volume() const;
    Index3 cell_coords(long long idx) const;
    long long cell_index(const Index3& c) const;
    double cell_center(long long idx, int axis) const;
    long long locate(const double* x) const;  // -1 when outside the base cube

    bool operator==(const Mesh& o) const;
    bool operator!=(const Mesh& o) const { return !(*this == o); }
};

// Dyadic lattice on a mesh. omega[k] in {0,1}^d shifts every cube of level
// <= k by omega[k] * 2^{-(k+1)} * side, so level-k cubes sit at offset
// sum_{j >= k} omega[j] 2^{-(j+1)}; finest cells never move. Cubes that
// cross the base boundary are handled on the torus and flagged exterior.
struct Lattice {
    Mesh mesh;
    std::vector<Index3> omega;

    long long shift(int level, int axis) const;  // in cells
    bool shifted() const;
    bool operator==(const Lattice& o) const { return mesh == o.mesh && omega == o.omega; }
    bool operator!=(const Lattice& o) const { return !(*this == o); }
};

constexpr long long kDefaultCellCap = 1LL << 24;

Lattice build_lattice(int d, int L, std::vector<Index3> omega = {}, std::array<double, 3> origin = {0, 0, 0},
                      double side = 1.0, long long cell_cap = kDefaultCellCap);
// omega[k] drawn from a generator seeded by (seed, k), so two depths share
// their coarse shifts.
Lattice build_lattice_random(int d, int L, std::uint64_t seed, std::array<double, 3> origin = {0, 0, 0},
                             double side = 1.0, long long cell_cap = kDefaultCellCap);

struct Cube {
    int level = 0;
    Index3 c{0, 0, 0};
    bool operator==(const Cube& o) const { return level == o.level && c == o.c; }
    bool operator<(const Cube& o) const { return level != o.level ? level < o.level : c < o.c; }
};

long long cubes_at(const Mesh& m, int level);
long long cube_index(const Mesh& m, const Cube& q);
Cube cube_at(const Mesh& m, int level, long long idx);
long long cells_per_cube(const Mesh& m, int level);

double side_length(const Mesh& m, int level);
double volume(const Mesh& m, int level);
// Unwrapped lower corner along one axis.
double cube_lo(const Lattice& lat, const Cube& q, int axis);
long long cube_lo_cells(const Lattice& lat, const Cube& q, int axis);
double cube_center(const Lattice& lat, const Cube& q, int axis);
bool is_exterior(const Lattice& lat, const Cube& q);

Cube child(const Lattice& lat, const Cube& q, int bits);
Cube parent(const Lattice& lat, const Cube& q);
Cube containing(const Lattice& lat, int level, long long cell);
bool contains(const Lattice& lat, const Cube& outer, const Cube& inner);
// Euclidean distance between the closed unwrapped cubes.
double cube_distance(const Lattice& lat, const Cube& a, const Cube& b);

// Calls f(cell_index) for every finest cell of q (torus wrap).
template <class F>
void for_each_cell(const Lattice& lat, const Cube& q, F&& f) {
    const Mesh& m = lat.mesh;
    const int P = m.per_axis();
    const int span = 1 << (m.L - q.level);
    long long lo[3] = {0, 0, 0};
    for (int a = 0; a < m.d; ++a) lo[a] = cube_lo_cells(lat, q, a);
    if (m.d == 1) {
        for (int i = 0; i < span; ++i) f(static_cast<long long>((lo[0] + i) % P));
    } else if (m.d == 2) {
        for (int i = 0; i < span; ++i) {
            long long r = ((lo[0] + i) % P) * P;
            for (int j = 0; j < span; ++j) f(r + (lo[1] + j) % P);
        }
    } else {
        for (int i = 0; i < span; ++i)
            for (int j = 0; j < span; ++j) {
                long long r = (((lo[0] + i) % P) * P + (lo[1] + j) % P) * P;
                for (int k = 0; k < span; ++k) f(r + (lo[2] + k) % P);
            }
    }
}

// Haar signatures are bitmasks: bit i set means eps_i = 1. The all-ones mask
// is excluded, so valid masks are 0 .. 2^d - 2.
int num_signatures(int d);
int signature_mask(const std::vector<int>& eps);
std::vector<int> signature_bits(int mask, int d);
// Value of h^eps on the child with the given bits, times |I|^{1/2}.
double haar_sign(int mask, int child_bits, int d);
double haar_eval(const Lattice& lat, const Cube& q, const std::vector<int>& eps, const double* x);

// Piecewise-constant function with m components per finest cell.
struct Field {
    Mesh mesh;
    int m = 1;
    std::vector<double> v;

    static Field zeros(const Mesh& mesh, int m);
    double* at(long long cell) { return v.data() + cell * m; }
    const double* at(long long cell) const { return v.data() + cell * m; }
};

struct HaarCoefficients {
    Lattice lattice;
    int m = 1;
    std::vector<double> mean;
    std::vector<std::vector<double>> detail;  // detail[k]: cubes_at(k) x signatures x m

    double* at(int level, long long cube, int eps) {
        return detail[level].data() + (cube * num_signatures(lattice.mesh.d) + eps) * m;
    }
    const double* at(int level, long long cube, int eps) const {
        return detail[level].data() + (cube * num_signatures(lattice.mesh.d) + eps) * m;
    }
};

HaarCoefficients haar_transform(const Field& f, const Lattice& lat);
Field haar_inverse(const HaarCoefficients& c);

// Per-level sums of cell values over each lattice cube (index: cube * m + comp).
std::vector<std::vector<double>> tree_sums(const Lattice& lat, const Field& f);

bool is_bad(const Lattice& lat, const Cube& q, int r, double alpha);

struct PiBadEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
    long long trials = 0;
    int depth = 0;
};

// Fixed cube of D_0 at level `depth`, shifted by random omega.
PiBadEstimate estimate_pi_bad(int d, int r, double alpha, long long trials, std::uint64_t seed, int depth = 10);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mwdha
