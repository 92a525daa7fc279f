#pragma once

#include <string>
#include <vector>

#include "mwdha/weights.hpp"

namespace mwdha {

// Supremum over the non-exterior cubes of one lattice, in raw power form
// (no p-th root), with the cube that attains it.
struct CubeSup {
    double value = 0.0;
    Cube cube;
};

// sup |I|^{-1} int_I ||W^{1/p}(x) (B(x) - m_I B) V_I^{-1}||^p
CubeSup bmo_primal(const MatrixField& b, WeightOnLattice& wl, double p);
// sup |I|^{-1} int_I ||W^{-1/p}(x) (B^*(x) - m_I B^*) (V_I')^{-1}||^{p'}
CubeSup bmo_dual(const MatrixField& b, WeightOnLattice& wl, double p);

struct BmoW {
    double value = 0.0;  // primal for p >= 2, dual for p < 2
    double primal = 0.0, dual = 0.0;
    Cube primal_cube, dual_cube;
    std::string form;  // "primal", "dual" or "primal (p = 2, both computed)"
};
BmoW bmo_w_norm(const MatrixField& b, WeightOnLattice& wl, double p);

struct PrimeFormsReport {
    double a = 0.0, b = 0.0, c = 0.0;
    double ratio_ab = 1.0, ratio_ac = 1.0, ratio_bc = 1.0;
    double max_ratio = 1.0;
    bool comparable = true;  // max_ratio <= C_equiv, advisory only
};
// symmetric ratio max(x/y, y/x); 1 when both vanish
double ratio_sym(double x, double y);
PrimeFormsReport bmo_prime_forms(const MatrixField& b, WeightOnLattice& wl, double p, double c_equiv = 32.0);

// sup |I|^{-1} int_I ||V_I (B - m_I B) V_I^{-1}||^q
CubeSup bmo_wpq_norm(const MatrixField& b, WeightOnLattice& wl, double p, double q);

enum class VectorForm { reducing, dual_weight };
// reducing:    sup |J|^{-1} int_J |V_J^{-1} (f - m_J f)|^q
// dual_weight: sup |J|^{-1} int_J |W^{-1/p} (f - m_J f)|^{p'}   (q unused)
CubeSup vector_bmo(const Field& f, WeightOnLattice& wl, double p, double q, VectorForm form);

// (sup_J |J|^{-1} sum_{I in D(J), eps} ||V_I B_I^eps V_I^{-1}||^2)^{1/2}
CubeSup square_form(const MatrixField& b, WeightOnLattice& wl, double p);
// (sup_J |J|^{-1} sum_{I in D(J), eps} ||B_I^eps||^2)^{1/2}
CubeSup classical_bmo(const MatrixField& b, const Lattice& lat);

struct TraceCheck {
    double bmo_w = 0.0, bmo_w_adjoint = 0.0;  // square forms of B and B^*
    double classical = 0.0;
    double ratio = 0.0;                       // classical^2 / (bmo_w * bmo_w_adjoint), at most n
};
TraceCheck bmo_trace_check(const MatrixField& b, WeightOnLattice& wl, double p);

// Carleson sequences reuse the Haar coefficient layout with m = n.
struct CarlesonNorm {
    double norm = 0.0;  // ||lambda||_*, not squared
    Cube cube;
};
CarlesonNorm carleson_norm(const HaarCoefficients& lambda);

struct EmbeddingReport {
    double lhs = 0.0;
    double carleson = 0.0;
    double b_lp = 0.0;  // ||B||_{L^p}, pointwise operator norm
    double ratio = 0.0; // lhs / (carleson^p ||B||_p^p)
};
EmbeddingReport carleson_embedding_check(const HaarCoefficients& lambda, const MatrixField& b, WeightOnLattice& wl,
                                         double p);

struct StopCube {
    Cube cube;
    std::string trigger;  // v_ratio or v_inverse_ratio
    int parent = -1;      // index into the previous generation
};
struct StoppingTree {
    Cube root;
    double lambda1 = 0.0, lambda2 = 0.0, p = 2.0;
    int d = 1;
    std::vector<std::vector<StopCube>> generations;  // generations[0] = {root}
};
StoppingTree stopping_time(WeightOnLattice& wl, const Cube& root, double p, double lambda1, double lambda2,
                           int max_generations = 64);
// sum over generation j of |J| / |root|
double packing_measure(const StoppingTree& tree, int j);

// Random Haar polynomials with coefficients g |I|^{1/2}, g standard normal,
// on levels < depth, plus a random mean.
MatrixField haar_random_matrix(const Lattice& lat, int n, std::uint64_t seed, int depth);
Field haar_random_vector(const Lattice& lat, int n, std::uint64_t seed, int depth);
HaarCoefficients haar_random_sequence(const Lattice& lat, int n, std::uint64_t seed, int depth);

// The standard lattice on the mesh plus `shifts` random shifts.
std::vector<Lattice> lattice_family(const Mesh& m, int shifts, std::uint64_t seed);

}  // namespace mwdha
