#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "mwdha/dyadic.hpp"

using namespace mwdha;

namespace {

Field random_field(const Mesh& m, int comps, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Field f = Field::zeros(m, comps);
    for (auto& x : f.v) x = g(rng);
    return f;
}

// h_I^eps sampled at every cell center, by point evaluation.
std::vector<double> sample_haar(const Lattice& lat, const Cube& q, const std::vector<int>& eps) {
    const Mesh& m = lat.mesh;
    std::vector<double> v(m.cells());
    for (long long c = 0; c < m.cells(); ++c) {
        double x[3];
        for (int a = 0; a < m.d; ++a) x[a] = m.cell_center(c, a);
        v[c] = haar_eval(lat, q, eps, x);
    }
    return v;
}

}  // namespace

TEST_CASE("standard lattice geometry") {
    Lattice lat = build_lattice(1, 3);
    CHECK(lat.mesh.cells() == 8);
    for (int k = 0; k < 8; ++k) {
        Cube q = cube_at(lat.mesh, 3, k);
        CHECK(cube_lo(lat, q, 0) == doctest::Approx(k / 8.0));
        CHECK(side_length(lat.mesh, 3) == doctest::Approx(1 / 8.0));
    }
    CHECK(build_lattice(2, 1).mesh.cells() == 4);
    CHECK_THROWS_AS(build_lattice(4, 1), ValidationError);
    CHECK_THROWS_AS(build_lattice(2, 13), ValidationError);
    CHECK_THROWS_AS(build_lattice(3, 8, {}, {0, 0, 0}, 1.0, 1 << 20), ResourceError);
}

TEST_CASE("shifted lattice moves level-1 intervals by a finest cell") {
    // L = 2: finest cells have side 1/4; omega at level 1 moves level-1
    // intervals by 2^{-2}, i.e. half of their own length.
    Lattice lat = build_lattice(1, 2, {{0, 0, 0}, {1, 0, 0}});
    Cube a{1, {0, 0, 0}}, b{1, {1, 0, 0}};
    CHECK(cube_lo(lat, a, 0) == doctest::Approx(0.25));
    CHECK(cube_lo(lat, b, 0) == doctest::Approx(0.75));
    CHECK_FALSE(is_exterior(lat, a));
    CHECK(is_exterior(lat, b));
    // finest cells never move
    CHECK(lat.shift(2, 0) == 0);
    // children of the root are these two intervals
    Cube root{0, {0, 0, 0}};
    CHECK(child(lat, root, 0) == a);
    CHECK(child(lat, root, 1) == b);
    CHECK(cube_lo(lat, root, 0) == doctest::Approx(0.25));
}

TEST_CASE("children partition parents") {
    std::mt19937_64 rng(1);
    for (int d = 1; d <= 3; ++d) {
        int L = 6 / d + 1;
        Lattice lat = build_lattice_random(d, L, rng());
        const Mesh& m = lat.mesh;
        for (int k = 0; k < L; ++k)
            for (long long i = 0; i < cubes_at(m, k); ++i) {
                Cube q = cube_at(m, k, i);
                std::vector<long long> cells, kids;
                for_each_cell(lat, q, [&](long long c) { cells.push_back(c); });
                double vol = 0;
                for (int b = 0; b < (1 << d); ++b) {
                    Cube ch = child(lat, q, b);
                    CHECK(parent(lat, ch) == q);
                    CHECK(contains(lat, q, ch));
                    vol += volume(m, k + 1);
                    for_each_cell(lat, ch, [&](long long c) { kids.push_back(c); });
                }
                CHECK(vol == volume(m, k));
                std::sort(cells.begin(), cells.end());
                std::sort(kids.begin(), kids.end());
                CHECK(cells == kids);
                for (long long c : cells) CHECK(containing(lat, k, c) == q);
            }
    }
}

TEST_CASE("haar_eval examples") {
    Lattice lat = build_lattice(1, 4);
    Cube root{0, {0, 0, 0}};
    double x = 0.25, y = 0.75;
    CHECK(haar_eval(lat, root, {0}, &x) == doctest::Approx(1.0));
    CHECK(haar_eval(lat, root, {0}, &y) == doctest::Approx(-1.0));

    Lattice lat2 = build_lattice(2, 3);
    double p[2] = {0.25, 0.6};
    CHECK(haar_eval(lat2, root, {0, 1}, p) == doctest::Approx(1.0));
    CHECK_THROWS_AS(haar_eval(lat2, root, {1, 1}, p), ValidationError);
    CHECK_THROWS_AS(signature_mask({1, 1}), ValidationError);
    CHECK(num_signatures(2) == 3);
}

TEST_CASE("haar transform of simple functions") {
    Lattice lat = build_lattice(1, 4);
    Field f = Field::zeros(lat.mesh, 1);
    for (auto& v : f.v) v = 3.5;
    auto hc = haar_transform(f, lat);
    CHECK(hc.mean[0] == doctest::Approx(3.5));
    for (const auto& lv : hc.detail)
        for (double v : lv) CHECK(std::fabs(v) < 1e-14);

    auto h = sample_haar(lat, Cube{0, {0, 0, 0}}, {0});
    f.v = h;
    hc = haar_transform(f, lat);
    CHECK(hc.at(0, 0, 0)[0] == doctest::Approx(1.0));
    double rest = 0;
    for (int k = 1; k < 4; ++k)
        for (double v : hc.detail[k]) rest += std::fabs(v);
    CHECK(rest < 1e-14);

    Lattice other = build_lattice(1, 5);
    CHECK_THROWS_AS(haar_transform(f, other), ValidationError);
}

TEST_CASE("haar transform matches direct inner products") {
    std::mt19937_64 rng(2);
    for (int d = 1; d <= 2; ++d)
        for (int shifted = 0; shifted < 2; ++shifted) {
            int L = d == 1 ? 6 : 3;
            Lattice lat = shifted ? build_lattice_random(d, L, 99) : build_lattice(d, L);
            const Mesh& m = lat.mesh;
            Field f = random_field(m, 2, rng);
            auto hc = haar_transform(f, lat);
            for (int k = 0; k < L; ++k)
                for (long long i = 0; i < cubes_at(m, k); ++i)
                    for (int e = 0; e < num_signatures(d); ++e) {
                        auto h = sample_haar(lat, cube_at(m, k, i), signature_bits(e, d));
                        for (int c = 0; c < 2; ++c) {
                            double s = 0;
                            for (long long j = 0; j < m.cells(); ++j) s += h[j] * f.v[j * 2 + c] * m.cell_volume();
                            CHECK(hc.at(k, i, e)[c] == doctest::Approx(s).epsilon(1e-12));
                        }
                    }
        }
}

TEST_CASE("roundtrip and Parseval") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        int d = 1 + t % 2;
        int L = 1 + static_cast<int>(rng() % (d == 1 ? 8 : 4));
        Lattice lat = build_lattice_random(d, L, rng());
        Field f = random_field(lat.mesh, 1 + t % 3, rng);
        auto hc = haar_transform(f, lat);
        Field g = haar_inverse(hc);
        double err = 0, e2 = 0, c2 = 0;
        for (size_t i = 0; i < f.v.size(); ++i) {
            err = std::max(err, std::fabs(f.v[i] - g.v[i]));
            e2 += f.v[i] * f.v[i] * lat.mesh.cell_volume();
        }
        CHECK(err < 1e-12);
        for (const auto& lv : hc.detail)
            for (double v : lv) c2 += v * v;
        for (double mu : hc.mean) c2 += mu * mu;
        CHECK(std::fabs(c2 - e2) <= 1e-9 * e2);
    }
}

TEST_CASE("orthonormality by brute force at L=4") {
    for (int d = 1; d <= 2; ++d) {
        int L = d == 1 ? 4 : 3;
        Lattice lat = build_lattice_random(d, L, 5);
        const Mesh& m = lat.mesh;
        std::vector<std::vector<double>> hs;
        for (int k = 0; k < L; ++k)
            for (long long i = 0; i < cubes_at(m, k); ++i)
                for (int e = 0; e < num_signatures(d); ++e)
                    hs.push_back(sample_haar(lat, cube_at(m, k, i), signature_bits(e, d)));
        double worst = 0;
        for (size_t a = 0; a < hs.size(); ++a)
            for (size_t b = a; b < hs.size(); ++b) {
                double s = 0;
                for (long long j = 0; j < m.cells(); ++j) s += hs[a][j] * hs[b][j] * m.cell_volume();
                worst = std::max(worst, std::fabs(s - (a == b ? 1.0 : 0.0)));
            }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("badness") {
    Lattice lat = build_lattice(1, 10);
    CHECK_FALSE(is_bad(lat, Cube{0, {0, 0, 0}}, 2, 1.0));
    CHECK(is_bad(lat, Cube{10, {0, 0, 0}}, 2, 1.0));

    // The level-12 interval containing 1/3 sits at relative position 1/3
    // inside every ancestor. With gamma = 1/4 the test
    // d(I, dJ) <= l(I)^g l(J)^(1-g) fails at gap 5 and holds beyond gap 7.
    Lattice big = build_lattice(1, 12);
    Cube third{12, {4096 / 3, 0, 0}};
    auto hand = [&](int r) {
        double li = 1.0 / 4096, lo = cube_lo(big, third, 0);
        for (int k = 12 - r; k >= 0; --k) {
            double lj = std::ldexp(1.0, -k);
            double jlo = std::floor(lo / lj) * lj;
            double dist = std::min(lo - jlo, jlo + lj - lo - li);
            if (dist <= std::pow(li, 0.25) * std::pow(lj, 0.75)) return true;
        }
        return false;
    };
    CHECK(hand(5));
    CHECK_FALSE(hand(7));
    for (int r = 1; r <= 12; ++r) CHECK(is_bad(big, third, r, 1.0) == hand(r));

    // smaller alpha shrinks gamma and enlarges the threshold: bad stays bad
    std::mt19937_64 rng(8);
    for (int t = 0; t < 200; ++t) {
        Lattice l = build_lattice_random(1, 10, rng());
        Cube q{7, {static_cast<int>(rng() % 128), 0, 0}};
        int r = 1 + static_cast<int>(rng() % 6);
        if (is_bad(l, q, r, 1.0)) CHECK(is_bad(l, q, r, 0.3));
        if (is_bad(l, q, r + 1, 1.0)) CHECK(is_bad(l, q, r, 1.0));
    }
}

TEST_CASE("pi_bad estimates") {
    CHECK(estimate_pi_bad(1, 20, 1.0, 1000, 1).estimate == 0.0);
    CHECK_THROWS_AS(estimate_pi_bad(1, 2, 1.0, 50, 1), ValidationError);

    // exhaustive oracle over all shift patterns at depth 10
    const int depth = 10;
    for (int r : {2, 5, 6, 8}) {
        long long bad = 0;
        double li = std::ldexp(1.0, -depth);
        const double gamma = 1.0 / 4;
        for (int pat = 0; pat < (1 << depth); ++pat) {
            // position of the fixed finest cell [0, li) inside the shifted
            // level-k interval: shift s_k = sum_{j>=k} w_j 2^{-(j+1)}
            bool isbad = false;
            for (int k = depth - r; k >= 0 && !isbad; --k) {
                double s = 0;
                for (int j = k; j < depth; ++j)
                    if ((pat >> j) & 1) s += std::ldexp(1.0, -(j + 1));
                double lj = std::ldexp(1.0, -k);
                double jlo = std::floor((0 - s) / lj) * lj + s;
                double dist = std::min(0 - jlo, jlo + lj - li);
                if (dist <= std::pow(li, gamma) * std::pow(lj, 1 - gamma) + 1e-15) isbad = true;
            }
            bad += isbad;
        }
        double exact = double(bad) / (1 << depth);
        auto est = estimate_pi_bad(1, r, 1.0, 10000, 17);
        CHECK(std::fabs(est.estimate - exact) <= 4 * std::max(est.stderr_, 1e-3));
        auto est2 = estimate_pi_bad(1, r, 1.0, 10000, 18);
        double comb = std::sqrt(est.stderr_ * est.stderr_ + est2.stderr_ * est2.stderr_);
        CHECK(std::fabs(est.estimate - est2.estimate) <= 3 * comb + 1e-12);
        if (r == 2) CHECK(exact == 1.0);
        if (r >= 6) CHECK(exact < 1.0);
    }
}
