#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mwdha/analysis.hpp"

using namespace mwdha;

namespace {

const Cube kRoot{0, {0, 0, 0}};

MatrixField constant_field(const Mesh& m, const Mat& a) {
    MatrixField f = MatrixField::zeros(m, a.n());
    for (long long c = 0; c < m.cells(); ++c) f.set(c, a);
    return f;
}

MatrixField scaled(const MatrixField& b, double t, const Mat& add) {
    MatrixField r = b;
    for (long long c = 0; c < b.mesh.cells(); ++c) r.set(c, b.mat(c) * t + add);
    return r;
}

}  // namespace

TEST_CASE("constant symbols have zero oscillation") {
    Lattice lat = build_lattice_random(1, 6, 3);
    MatrixWeight w = powermix_weight(lat.mesh, 2, 5);
    WeightOnLattice wl(w, lat);
    MatrixField b = constant_field(lat.mesh, Mat::from_rows({{1, 2}, {-3, 0.5}}));
    for (double p : {1.5, 2.0, 3.0}) {
        CHECK(bmo_primal(b, wl, p).value < 1e-20);
        CHECK(bmo_dual(b, wl, p).value < 1e-20);
        CHECK(bmo_wpq_norm(b, wl, p, 2.0).value < 1e-20);
        auto r = bmo_prime_forms(b, wl, p);
        CHECK(r.max_ratio == 1.0);
        CHECK(r.comparable);
    }
    CHECK(square_form(b, wl, 2.0).value < 1e-10);
    CHECK(classical_bmo(b, lat).value < 1e-10);
    Field f = Field::zeros(lat.mesh, 2);
    for (long long c = 0; c < lat.mesh.cells(); ++c) f.at(c)[0] = 4.0, f.at(c)[1] = -1.0;
    CHECK(vector_bmo(f, wl, 3.0, 2.0, VectorForm::reducing).value < 1e-20);
    CHECK(vector_bmo(f, wl, 3.0, 2.0, VectorForm::dual_weight).value < 1e-20);
}

TEST_CASE("scalar collapse at p = 2") {
    // n = 1, p = 2: sup_I |I|^{-1} int_I w |b - m_I b|^2 / m_I w
    Lattice lat = build_lattice(1, 7);
    MatrixWeight w = power1d_weight(lat.mesh, {0.6});
    WeightOnLattice wl(w, lat);
    const int P = lat.mesh.per_axis();
    MatrixField b = MatrixField::zeros(lat.mesh, 1);
    for (long long c = 0; c < P; ++c) b.v[c] = std::sin(0.37 * c * c) + (c > P / 3 ? 1.0 : 0.0);
    double brute = 0;
    for (int k = 0; k < lat.mesh.L; ++k) {
        int span = P >> k;
        for (int j = 0; j < (1 << k); ++j) {
            double mb = 0, mw = 0;
            for (int c = j * span; c < (j + 1) * span; ++c) mb += b.v[c], mw += w.cells().at(c)[0];
            mb /= span;
            mw /= span;
            double s = 0;
            for (int c = j * span; c < (j + 1) * span; ++c) s += w.cells().at(c)[0] * std::pow(b.v[c] - mb, 2);
            brute = std::max(brute, s / span / mw);
        }
    }
    CHECK(bmo_primal(b, wl, 2.0).value == doctest::Approx(brute).epsilon(1e-10));
    // p = 2, n = 1 the dual form is the same quantity with w^{-1}
    auto r = bmo_w_norm(b, wl, 2.0);
    CHECK(r.form.find("primal") == 0);
    CHECK(r.value == doctest::Approx(brute).epsilon(1e-10));
}

TEST_CASE("invariance and homogeneity") {
    Lattice lat = build_lattice_random(1, 6, 11);
    MatrixWeight w = powermix_weight(lat.mesh, 2, 9);
    WeightOnLattice wl(w, lat);
    MatrixField b = haar_random_matrix(lat, 2, 4, 6);
    Mat add = Mat::from_rows({{5, -1}, {2, 7}});
    for (double p : {1.5, 3.0}) {
        double a0 = bmo_primal(b, wl, p).value, d0 = bmo_dual(b, wl, p).value;
        CHECK(bmo_primal(scaled(b, 1.0, add), wl, p).value == doctest::Approx(a0).epsilon(1e-9));
        CHECK(bmo_dual(scaled(b, 1.0, add), wl, p).value == doctest::Approx(d0).epsilon(1e-9));
        CHECK(bmo_primal(scaled(b, -2.0, add), wl, p).value == doctest::Approx(std::pow(2.0, p) * a0).epsilon(1e-9));
        CHECK(bmo_dual(scaled(b, -2.0, add), wl, p).value ==
              doctest::Approx(std::pow(2.0, dual_exponent(p)) * d0).epsilon(1e-9));
    }
    double s0 = square_form(b, wl, 2.0).value;
    CHECK(square_form(scaled(b, 3.0, add), wl, 2.0).value == doctest::Approx(3.0 * s0).epsilon(1e-9));
    double c0 = classical_bmo(b, lat).value;
    CHECK(classical_bmo(scaled(b, -0.5, add), lat).value == doctest::Approx(0.5 * c0).epsilon(1e-9));
}

TEST_CASE("identity weight reduces to the classical forms") {
    Lattice lat = build_lattice(1, 6);
    MatrixWeight id = constant_weight(lat.mesh, Mat::identity(2));
    WeightOnLattice wl(id, lat);
    MatrixField b = haar_random_matrix(lat, 2, 8, 6);
    CHECK(square_form(b, wl, 2.0).value == doctest::Approx(classical_bmo(b, lat).value).epsilon(1e-12));
}

TEST_CASE("Carleson norm: single cube, deep tree, empty") {
    Lattice lat = build_lattice(1, 8);
    HaarCoefficients lam = haar_random_sequence(lat, 1, 1, 0);
    CHECK(carleson_norm(lam).norm == 0.0);

    lam.at(3, 5, 0)[0] = 0.75;
    auto c = carleson_norm(lam);
    CHECK(c.norm == doctest::Approx(0.75 / std::sqrt(volume(lat.mesh, 3))));
    CHECK(c.cube == Cube{3, {5, 0, 0}});

    for (int m : {0, 3, 6}) {
        HaarCoefficients t = haar_random_sequence(lat, 1, 1, 0);
        for (int k = 0; k <= m; ++k)
            for (long long i = 0; i < cubes_at(lat.mesh, k); ++i) t.at(k, i, 0)[0] = std::sqrt(volume(lat.mesh, k));
        CHECK(carleson_norm(t).norm == doctest::Approx(std::sqrt(m + 1.0)));
    }
}

TEST_CASE("Carleson tree pass against brute force") {
    for (int d : {1, 2}) {
        Lattice lat = build_lattice_random(d, d == 1 ? 6 : 4, 21 + d);
        HaarCoefficients lam = haar_random_sequence(lat, 2, 3 + d, lat.mesh.L);
        const Mesh& m = lat.mesh;
        const int ns = num_signatures(d);
        double brute = 0;
        for (int kj = 0; kj < m.L; ++kj)
            for (long long j = 0; j < cubes_at(m, kj); ++j) {
                Cube J = cube_at(m, kj, j);
                double s = 0;
                for (int k = kj; k < m.L; ++k)
                    for (long long i = 0; i < cubes_at(m, k); ++i) {
                        if (!contains(lat, J, cube_at(m, k, i))) continue;
                        for (int e = 0; e < ns; ++e)
                            for (int c = 0; c < 2; ++c) s += std::pow(lam.at(k, i, e)[c], 2);
                    }
                brute = std::max(brute, s / volume(m, kj));
            }
        CHECK(carleson_norm(lam).norm == doctest::Approx(std::sqrt(brute)).epsilon(1e-12));
    }
}

TEST_CASE("stopping time") {
    Lattice lat = build_lattice(1, 6);
    MatrixWeight id = constant_weight(lat.mesh, Mat::identity(2));
    WeightOnLattice wl(id, lat);
    auto t = stopping_time(wl, kRoot, 2.0, 16.0, 4.0);
    CHECK(t.generations.size() == 1);
    CHECK(packing_measure(t, 0) == 1.0);
    CHECK(packing_measure(t, 1) == 0.0);

    // step 1 | 4: root average 2.5, children 1 and 4
    MatrixWeight st = step_weight(lat.mesh, 1.0, 4.0);
    WeightOnLattice ws(st, lat);
    auto s = stopping_time(ws, kRoot, 2.0, 1.5, 2.0);
    REQUIRE(s.generations.size() == 2);
    REQUIRE(s.generations[1].size() == 2);
    CHECK(s.generations[1][0].cube == Cube{1, {0, 0, 0}});
    CHECK(s.generations[1][0].trigger == "v_inverse_ratio");
    CHECK(s.generations[1][1].trigger == "v_ratio");
    CHECK(packing_measure(s, 1) == 1.0);
    CHECK_THROWS_AS(stopping_time(ws, kRoot, 2.0, 1.0, 2.0), ValidationError);
}

TEST_CASE("stopping generations are disjoint and nested") {
    for (int d : {1, 2}) {
        Lattice lat = build_lattice_random(d, d == 1 ? 8 : 4, 5);
        MatrixWeight w = powermix_weight(lat.mesh, 2, 13, 0.9);
        WeightOnLattice wl(w, lat);
        auto t = stopping_time(wl, kRoot, 2.0, 1.3, 1.3);
        CHECK(t.generations.size() > 2);
        for (size_t g = 1; g < t.generations.size(); ++g) {
            const auto& gen = t.generations[g];
            for (size_t a = 0; a < gen.size(); ++a) {
                const auto& par = t.generations[g - 1][gen[a].parent].cube;
                CHECK(contains(lat, par, gen[a].cube));
                CHECK(gen[a].cube.level > par.level);
                for (size_t b = a + 1; b < gen.size(); ++b) {
                    CHECK_FALSE(contains(lat, gen[a].cube, gen[b].cube));
                    CHECK_FALSE(contains(lat, gen[b].cube, gen[a].cube));
                }
            }
            CHECK(packing_measure(t, g) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("trace ratio is at most n") {
    for (int n : {2, 3}) {
        Lattice lat = build_lattice_random(1, 6, 40 + n);
        MatrixWeight w = powermix_weight(lat.mesh, n, 17);
        WeightOnLattice wl(w, lat);
        for (std::uint64_t s = 0; s < 4; ++s) {
            MatrixField b = haar_random_matrix(lat, n, s, 6);
            auto t = bmo_trace_check(b, wl, 2.0);
            CHECK(t.ratio > 0.0);
            CHECK(t.ratio <= n + 1e-9);
        }
    }
}

TEST_CASE("embedding ratio is finite and uses the right scale") {
    Lattice lat = build_lattice(1, 6);
    MatrixWeight id = constant_weight(lat.mesh, Mat::identity(2));
    WeightOnLattice wl(id, lat);
    // identity weight, B = Id, lambda on the root only: lhs = |lambda|^2 (p = 2)
    HaarCoefficients lam = haar_random_sequence(lat, 2, 1, 0);
    lam.at(0, 0, 0)[0] = 0.6;
    lam.at(0, 0, 0)[1] = 0.8;
    MatrixField b = constant_field(lat.mesh, Mat::identity(2));
    auto r = carleson_embedding_check(lam, b, wl, 2.0);
    CHECK(r.lhs == doctest::Approx(1.0));
    CHECK(r.carleson == doctest::Approx(1.0));
    CHECK(r.b_lp == doctest::Approx(1.0));
}

TEST_CASE("random Haar polynomials respect depth") {
    Lattice lat = build_lattice(2, 4);
    HaarCoefficients h = haar_random_sequence(lat, 3, 9, 2);
    for (int k = 2; k < 4; ++k)
        for (double x : h.detail[k]) CHECK(x == 0.0);
    CHECK(lattice_family(lat.mesh, 3, 1).size() == 4);
    Field f = haar_random_vector(lat, 3, 9, 2);
    auto back = haar_transform(f, lat);
    CHECK(std::abs(back.detail[1][0] - h.detail[1][0]) < 1e-12);
}
