#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "mwdha/linalg.hpp"

using namespace mwdha;

namespace {

Mat random_spd(std::mt19937_64& rng, int n, double lo, double hi) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    // random orthogonal via Gram-Schmidt
    std::vector<Vec> q;
    while (static_cast<int>(q.size()) < n) {
        Vec v(n);
        for (auto& x : v) x = g(rng);
        for (const auto& w : q) {
            double d = 0;
            for (int i = 0; i < n; ++i) d += v[i] * w[i];
            for (int i = 0; i < n; ++i) v[i] -= d * w[i];
        }
        double nv = vec_norm(v);
        if (nv < 1e-6) continue;
        for (auto& x : v) x /= nv;
        q.push_back(v);
    }
    Mat m(n);
    for (int k = 0; k < n; ++k) {
        double lam = std::exp(u(rng));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) m(i, j) += lam * q[k][i] * q[k][j];
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m(i, j) = m(j, i);
    return m;
}

double rel_diff(const Mat& a, const Mat& b) { return (a - b).max_abs() / std::max(1.0, b.max_abs()); }

}  // namespace

TEST_CASE("sym_eig small cases") {
    auto e = sym_eig(Mat::identity(2));
    CHECK(e.values[0] == doctest::Approx(1.0));
    CHECK(e.values[1] == doctest::Approx(1.0));

    e = sym_eig(Mat::diag({1, 4}));
    CHECK(e.values[0] == doctest::Approx(4.0));
    CHECK(e.values[1] == doctest::Approx(1.0));
    CHECK(std::fabs(e.vectors(1, 0)) == doctest::Approx(1.0));
    CHECK(std::fabs(e.vectors(0, 1)) == doctest::Approx(1.0));

    // characteristic polynomial (2-l)^2 - 1
    e = sym_eig(Mat{{2, 1}, {1, 2}});
    CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-14));

    CHECK_THROWS_AS(sym_eig(Mat{{1, 2}, {0, 1}}), ValidationError);
}

TEST_CASE("sym_eig reconstructs random symmetric matrices") {
    std::mt19937_64 rng(7);
    for (int n = 1; n <= 6; ++n)
        for (int t = 0; t < 10; ++t) {
            Mat m = random_spd(rng, n, 1e-3, 1e3);
            auto e = sym_eig(m);
            Mat lam = Mat::diag(e.values);
            Mat r = e.vectors * lam * e.vectors.transpose();
            CHECK((r - m).max_abs() <= 1e-10 * m.frobenius());
            Mat qq = e.vectors.transpose() * e.vectors;
            CHECK((qq - Mat::identity(n)).max_abs() <= 1e-10);
            for (int k = 1; k < n; ++k) CHECK(e.values[k - 1] >= e.values[k]);
        }
}

TEST_CASE("spd_power examples") {
    CHECK(rel_diff(spd_power(Mat::identity(3), 0.5), Mat::identity(3)) < 1e-14);
    CHECK(rel_diff(spd_power(Mat::diag({4, 9}), 0.5), Mat::diag({2, 3})) < 1e-14);
    Mat inv{{2.0 / 3, -1.0 / 3}, {-1.0 / 3, 2.0 / 3}};
    CHECK(rel_diff(spd_power(Mat{{2, 1}, {1, 2}}, -1.0), inv) < 1e-13);
    CHECK_THROWS_AS(spd_power(Mat::diag({1, 0}), 0.5), SingularityError);
    CHECK_THROWS_AS(spd_power(Mat::diag({1, -1}), 0.5), SingularityError);
    CHECK_THROWS_WITH_AS(spd_power(Mat::diag({1, 1e-14}), 0.5), doctest::Contains("eigenvalue"), SingularityError);
}

TEST_CASE("spd_power semigroup and inverse powers") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ua(-1.5, 1.5);
    for (int n = 1; n <= 4; ++n)
        for (int t = 0; t < 20; ++t) {
            Mat m = random_spd(rng, n, 1e-3, 1e3);
            double a = ua(rng), b = ua(rng);
            Mat lhs = spd_power(m, a) * spd_power(m, b);
            Mat rhs = spd_power(m, a + b);
            CHECK(rel_diff(lhs, rhs) <= 1e-7 * std::max(1.0, rhs.max_abs()));
            CHECK(rel_diff(spd_power(m, 1.0), m) < 1e-10);
            double s = 0.5 + std::fabs(a);
            CHECK(rel_diff(spd_power(spd_power(m, s), 1.0 / s), m) < 1e-8);
        }
}

TEST_CASE("op_norm") {
    CHECK(op_norm(Mat::identity(3)) == doctest::Approx(1.0));
    CHECK(op_norm(Mat::diag({2, -5})) == doctest::Approx(5.0));
    CHECK(op_norm(Mat{{0, 1}, {0, 0}}) == doctest::Approx(1.0));
    CHECK(op_norm(Mat::diag({2, -5, 3})) == doctest::Approx(5.0));

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int n = 1; n <= 4; ++n)
        for (int t = 0; t < 50; ++t) {
            Mat a(n), b(n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    a(i, j) = g(rng);
                    b(i, j) = g(rng);
                }
            CHECK(op_norm(a * b) <= op_norm(a) * op_norm(b) * (1 + 1e-12));
            // spectral norm dominates every |a x| / |x|
            Vec x(n);
            for (auto& v : x) v = g(rng);
            CHECK(vec_norm(a * x) <= op_norm(a) * vec_norm(x) * (1 + 1e-12));
        }
}

TEST_CASE("mvee on the circle and an ellipse") {
    std::vector<Vec> pts;
    for (int k = 0; k < 256; ++k) {
        double t = 2 * M_PI * k / 256;
        pts.push_back({std::cos(t), std::sin(t)});
    }
    auto fit = mvee(pts);
    CHECK(rel_diff(fit.shape, Mat::identity(2)) < 1e-3);

    pts.clear();
    for (int k = 0; k < 256; ++k) {
        double t = 2 * M_PI * k / 256;
        pts.push_back({2 * std::cos(t), std::sin(t)});
    }
    pts.push_back({2, 0});
    pts.push_back({-2, 0});
    pts.push_back({0, 1});
    pts.push_back({0, -1});
    fit = mvee(pts);
    CHECK(rel_diff(fit.shape, Mat::diag({0.5, 1.0})) < 1e-3);

    std::vector<Vec> flat{{1, 1}, {-1, -1}, {1, 1}, {-1, -1}};
    CHECK_THROWS_AS(mvee(flat), ValidationError);
}

TEST_CASE("mvee encloses and satisfies John containment") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int n = 2; n <= 3; ++n)
        for (int t = 0; t < 10; ++t) {
            // boundary of a symmetric polytope conv(+-v_k)
            std::vector<Vec> pts;
            for (int k = 0; k < 12; ++k) {
                Vec v(n);
                for (auto& x : v) x = g(rng);
                pts.push_back(v);
                for (auto& x : v) x = -x;
                pts.push_back(v);
            }
            const double tol = 1e-6;
            auto fit = mvee(pts, tol);
            double mx = 0;
            for (const auto& p : pts) {
                double r = vec_norm(fit.shape * p);
                CHECK(r <= 1 + tol);
                mx = std::max(mx, r);
            }
            CHECK(mx >= 1 / std::sqrt(double(n)));
            CHECK(fit.gap <= tol * 1.0001);
        }
}
