#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "mwdha/dyadic.hpp"
#include "mwdha/linalg.hpp"

namespace mwdha {

// Matrix-valued piecewise-constant function: cells x n x n, row-major blocks.
struct MatrixField {
    Mesh mesh;
    int n = 1;
    std::vector<double> v;

    static MatrixField zeros(const Mesh& mesh, int n);
    double* at(long long cell) { return v.data() + cell * n * n; }
    const double* at(long long cell) const { return v.data() + cell * n * n; }
    Mat mat(long long cell) const { return Mat::from_flat(n, at(cell)); }
    void set(long long cell, const Mat& m);
    Field as_field() const;
    MatrixField transpose() const;
};

struct WeightDescriptor {
    std::string kind = "none";  // none, constant, power1d, powermix, step, custom
    std::vector<double> params;
    std::string text;  // canonical descriptor string, echoed in reports
};

// Per-cell eigendecompositions are computed once; powers are cached by
// exponent. Copies share the cache.
class MatrixWeight {
public:
    MatrixWeight() = default;
    MatrixWeight(MatrixField cells, WeightDescriptor desc, std::vector<double> singular_points = {});

    const Mesh& mesh() const { return cells_.mesh; }
    int n() const { return cells_.n; }
    const MatrixField& cells() const { return cells_; }
    const WeightDescriptor& descriptor() const { return desc_; }
    const std::vector<double>& singular_points() const { return singular_; }
    bool diagonal() const { return diagonal_; }

    // W^t on every cell.
    const MatrixField& power(double t) const;

private:
    struct Cache {
        std::mutex mu;
        std::vector<Eigen> eig;
        std::map<double, std::shared_ptr<MatrixField>> powers;
    };
    MatrixField cells_;
    WeightDescriptor desc_;
    std::vector<double> singular_;
    bool diagonal_ = false;
    std::shared_ptr<Cache> cache_;
};

MatrixWeight constant_weight(const Mesh& m, const Mat& a);
// diag(|x_1|^beta_i); d = 1 with exact cell averages.
MatrixWeight power1d_weight(const Mesh& m, const std::vector<double>& betas);
// sum_k |x - x_k|^beta_k v_k v_k^T with n+1 random terms.
MatrixWeight powermix_weight(const Mesh& m, int n, std::uint64_t seed, double beta_max = 0.7);
// n = 1: value a on x_1 < mid, b on x_1 >= mid
MatrixWeight step_weight(const Mesh& m, double a, double b);
// "identity:n", "const:a,b,..", "power1d:b1,b2,..", "powermix:n,seed", "step:a,b"
MatrixWeight parse_weight(const std::string& desc, const Mesh& m);

enum class ReducingMethod { exact_p2, mvee, scalar };
const char* method_name(ReducingMethod m);
ReducingMethod parse_method(const std::string& s);
ReducingMethod default_method(int n, double p);

struct ReducingPair {
    Cube cube;
    Mat V, V_dual;
    ReducingMethod method = ReducingMethod::exact_p2;
    double kappa = 1.0, kappa_dual = 1.0;  // mvee fit constants, sqrt gives the distortion
    std::vector<Vec> directions;            // directions used for the primal fit
};

double dual_exponent(double p);

// Averages over lattice cubes of W^t, and memoized reducing operators.
class WeightOnLattice {
public:
    WeightOnLattice(const MatrixWeight& w, const Lattice& lat, double mvee_tol = 1e-6);

    const MatrixWeight& weight() const { return w_; }
    const Lattice& lattice() const { return lat_; }
    Mat average(const Cube& q, double t);
    const ReducingPair& reducing(const Cube& q, double p, ReducingMethod m);
    const ReducingPair& reducing(const Cube& q, double p) { return reducing(q, p, default_method(w_.n(), p)); }

    // (avg_I |W^{s}(x) e|^r)^{1/r}
    double rho(const Cube& q, double s, double r, const Vec& e) const;

private:
    const std::vector<std::vector<double>>& sums(double t);

    MatrixWeight w_;
    Lattice lat_;
    double tol_;
    std::mutex mu_;
    std::map<double, std::shared_ptr<std::vector<std::vector<double>>>> sums_;
    std::map<std::tuple<int, long long, double, int>, std::shared_ptr<ReducingPair>> pairs_;
};

Mat cell_average(const MatrixWeight& w, const Lattice& lat, const Cube& q);
ReducingPair reducing_operator(const MatrixWeight& w, const Lattice& lat, const Cube& q, double p,
                               ReducingMethod m, double mvee_tol = 1e-6);
// Directions used for mvee fits in dimension n (unit vectors, one per +- pair).
std::vector<Vec> fit_directions(int n);

struct CharacteristicReport {
    double value = 0.0;
    Cube attaining;
    std::string method;
    double distortion_bound = 1.0;
    double truncation_deficit = 0.0;
    double sampling_error = 0.0;
};

constexpr long long kPairCap = 1LL << 20;

CharacteristicReport ap_characteristic(const MatrixWeight& w, double p, const Lattice& lat,
                                       long long pair_cap = kPairCap, std::uint64_t seed = 0);
CharacteristicReport ap_characteristic_reducing(WeightOnLattice& wl, double p, ReducingMethod m);
CharacteristicReport b2p_characteristic(WeightOnLattice& wl, double p);

double lp_norm(const Field& f, const MatrixWeight& w, double p);
double square_function_norm(const Field& f, WeightOnLattice& wl, double p);
// At each cell: max over lattice cubes I containing it of m_I ||V_I W^{-1/p} B^*||.
Field weighted_maximal(WeightOnLattice& wl, const MatrixField& b, double p);
// ||F||_{L^p} of a matrix function with the operator norm pointwise.
double matrix_lp_norm(const MatrixField& b, double p);

}  // namespace mwdha
