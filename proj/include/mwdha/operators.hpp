#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mwdha/analysis.hpp"

namespace mwdha {

enum class ScalarKernel { hilbert, riesz, modified_hilbert };

// Scalar kernel times a constant matrix A. Hilbert uses the raw 1/(x - y)
// (no 1/pi); riesz(j) is c_d (x_j - y_j) / |x - y|^{d+1} with c_d stored.
struct KernelDescriptor {
    ScalarKernel scalar = ScalarKernel::hilbert;
    int riesz_axis = 0;  // 0-based
    Mat A;
    double alpha = 1.0;
    double riesz_c = 0.0;
    std::string text;
};

double riesz_constant(int d);
KernelDescriptor hilbert_kernel(const Mat& a);
KernelDescriptor modified_hilbert_kernel(const Mat& a);
KernelDescriptor riesz_kernel(int d, int axis, const Mat& a);
// "hilbert", "modified_hilbert", "riesz:j" (1-based j); matrices "id:n",
// "diag:a,b", "antidiag:n", "zero:n", or rows "a,b;c,d"
KernelDescriptor parse_kernel(const std::string& scalar, const std::string& matrix, int d);
Mat parse_matrix(const std::string& s);

double scalar_kernel_eval(const KernelDescriptor& k, int d, const double* x, const double* y);
Mat kernel_eval(const KernelDescriptor& k, int d, const double* x, const double* y);
// Kernel of the adjoint, K^*(x, y) = K(y, x)^T.
KernelDescriptor adjoint_kernel(const KernelDescriptor& k);

// Cell-averaged output of the scalar operator: (S u)_c = sum_{c'} G(c, c') u_{c'}
// with G the cell-pair integral divided by |c|. Hilbert cells are integrated
// exactly; riesz uses cell centers and drops the singular cell.
Field apply_scalar(const KernelDescriptor& k, const Field& u, bool adjoint = false);
Field apply_czo(const KernelDescriptor& k, const Field& f, const Lattice& lat);
Field apply_czo_adjoint(const KernelDescriptor& k, const Field& f, const Lattice& lat);

// <S h_I^eps, h_J^eps'> for the scalar part.
double haar_scalar_coefficient(const KernelDescriptor& k, const Lattice& lat, const Cube& I, int eps, const Cube& J,
                               int eps2);
// (T_{I,J})_{ij} = <T(h_I^eps e_j), h_J^eps' e_i>
Mat haar_matrix_coefficient(const KernelDescriptor& k, const Lattice& lat, const Cube& I, int eps, const Cube& J,
                            int eps2);

struct T1Result {
    HaarCoefficients coeffs;         // m = n^2, row-major blocks
    std::vector<double> tail_bound;  // per level, scalar part times ||A||
    double qstar = 2.0;
    int r_levels = 8;
    double radius = 0.0;
    double max_near = 0.0, max_far = 0.0;
};
// Default Q* factor 2 sqrt(d).
double default_qstar(int d);
// adjoint = true gives T^*1.
T1Result compute_T1(const KernelDescriptor& k, const Lattice& lat, int r_levels, bool adjoint = false,
                    double qstar = 0.0);
double max_coefficient_norm(const HaarCoefficients& c);

// sup_{I0} (|I0|^{-1} int_{I0} (sum_{eps, Q in D(I0)} ||V_Q C_Q V_{I0}^{-1}||^2 / |Q| 1_Q)^{p/2})^{1/p}
CubeSup t1_bmo_norm(const HaarCoefficients& c, WeightOnLattice& wl, double p);

Field paraproduct_apply(const MatrixField& b, const Field& f, const Lattice& lat);
Field paraproduct_adjoint_apply(const MatrixField& b, const Field& g, const Lattice& lat);

struct KernelCheckReport {
    double size_max = 0.0, holder_max = 0.0, holder_dual_max = 0.0;
    double size_q50 = 0.0, size_q90 = 0.0, size_q99 = 0.0;
    double compat_sup = 0.0;                  // sup ||V_I A V_I^{-1}|| over the sampled cubes
    std::map<int, double> size_max_by_level;  // level of the sampled I
    std::vector<Cube> cubes;
    int samples = 0;
};
KernelCheckReport kernel_condition_check(const KernelDescriptor& k, WeightOnLattice& wl, double p, int sample_count,
                                         std::uint64_t seed);

struct CompatReport {
    double primal = 0.0, dual = 0.0;  // sup ||V_I A V_I^{-1}||, sup ||V_I' A^T V_I'^{-1}||
    Cube primal_cube, dual_cube;
    std::map<int, double> by_level;   // primal + dual per level
};
CompatReport compat_check(const Mat& a, WeightOnLattice& wl, double p);
CompatReport compat_check(const Mat& a, WeightOnLattice& wl, double p, const std::vector<Cube>& cubes);

struct WbpReport {
    double value = 0.0;
    Cube I, J;
    std::map<int, double> by_level;  // by level of J
    double max_abs_testing = 0.0;    // max |tau(J)| / |J| of the scalar testing form
};
WbpReport weak_boundedness_check(const KernelDescriptor& k, WeightOnLattice& wl, double p);

struct DecayBucket {
    int gap = 0, dist = 0;
    double max_ratio = 0.0;
    long long pairs = 0;
    Cube I, J;
};
struct DecayReport {
    Cube I0;
    int r = 5;
    double max_ratio = 0.0;
    long long pairs = 0, skipped_bad = 0;
    std::vector<DecayBucket> buckets;  // sorted by (gap, dist)
    double t1_max = 0.0, t1_adjoint_max = 0.0;
};
// Good pairs (I, J) inside I0 with l(I) <= l(J) and level gap <= max_gap;
// dist bucket floor(log2(D / l(J))), D = l(I) + l(J) + dist(I, J).
DecayReport haar_decay_check(const KernelDescriptor& k, WeightOnLattice& wl, double p, const Cube& I0, int r = 5,
                             int max_gap = 4, int r_levels = 20);

// T(B f) - B(T f); with symbol_adjoint, B^T in place of B.
Field commutator_apply(const KernelDescriptor& k, const MatrixField& b, const Field& f, const Lattice& lat,
                       bool symbol_adjoint = false);

using LinearOp = std::function<Field(const Field&)>;
struct NormProbe {
    double lower_bound = 0.0;  // max ratio over the ensemble, a LOWER bound
    std::string bound_kind = "lower";
    std::vector<double> ratios;
    std::vector<std::string> labels;
    int witness = -1;
};
// Random Haar polynomials (fixed coarse depth, so members agree across L)
// plus indicators near the weight's singular points, raw and W^{-1/p}-twisted.
// The output is measured in L^p(target) when a target weight is given.
NormProbe empirical_operator_norm(const LinearOp& op, const MatrixWeight& w, double p, const Lattice& lat,
                                  int ensemble_size, std::uint64_t seed, int depth = 6,
                                  const MatrixWeight* target = nullptr);
// Index of a labelled member, -1 when absent.
int probe_member(const NormProbe& probe, const std::string& label);

}  // namespace mwdha
