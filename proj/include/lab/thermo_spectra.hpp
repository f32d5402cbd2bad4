#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lab/models.hpp"
#include "lab/orbit_search.hpp"

namespace lab {

// Suspension-flow pressure of a locally constant potential with per-symbol
// integrals w_s: the unique P with spectral-radius(A diag(exp(w_s - P r_s)))
// equal to 1, found by bisection to 1e-12. Exact for this potential class.
double suspension_pressure_oracle(const MarkovModel& model, const std::vector<double>& weights);

// Per-symbol proxy integrals of the geometric potential: -rate_s * roof_s
// (the deep-cylinder value of -k^u on each symbol).
std::vector<double> proxy_weights(const MarkovModel& model);

struct OrbitSumResult {
    double value = 0.0;
    int orbit_count = 0;  // prime-cycle/repetition pairs in the window
};

struct OrbitSumConfig {
    double T = 12.0;
    double delta_T = 1.0;
    // When set, the orbit integral of the potential is the sum of these
    // per-symbol values over the cycle; otherwise -log rho(monodromy).
    std::optional<std::vector<double>> weights;
};

// (1/T) log of the sum over prime cycles p and repetitions k with
// k*period(p) in (T - delta_T, T] of |p| * exp(t * k * Phi(p)).
OrbitSumResult pressure_orbit_sum(const MarkovModel& model, double t,
                                  const OrbitSumConfig& config = {});

struct PressureCurve {
    std::vector<double> t_grid;
    std::vector<double> P;
    std::vector<double> D_minus, D_plus;  // one-sided three-point differences
    bool has_plateau = false;
    double t_c = 0.0;  // plateau onset, valid when has_plateau
    std::string method;  // "oracle" or "orbit-sum"
    double estimator_tol = 0.0;
};

struct PressureConfig {
    std::string method = "oracle";
    OrbitSumConfig orbit_sum;  // used in orbit-sum mode
    double plateau_tol = 0.02;
};

std::vector<double> default_t_grid();  // 81 points on [-6, 4]

// Samples P(t * phi) on the grid and gates the structural invariants
// (nonincreasing, midpoint convex, within 2 * estimator_tol).
PressureCurve pressure_curve(const MarkovModel& model, const std::vector<double>& t_grid,
                             const PressureConfig& config = {});

struct SpectrumRow {
    double alpha = 0.0;
    double E = 0.0;         // inf_t (P(t) - t alpha)
    double argmin_t = 0.0;  // ties broken toward smallest t
    double dim_lower = 0.0; // 1 + 2 E / (-alpha), only on alpha in (alpha_1, 0)
    bool attained = true;   // alpha inside the realized slope range
    bool has_dim = false;
};

struct SpectrumTable {
    std::vector<SpectrumRow> rows;
    double alpha_1 = 0.0;  // D+ at the left grid edge (t -> -inf proxy)
    double alpha_2 = 0.0;  // D- at the plateau onset (right edge otherwise)
};

// Legendre transform over a derived alpha grid (observed slope range shrunk
// 2% at each end). Nonconvex curves are rejected.
SpectrumTable legendre(const PressureCurve& curve, int alpha_points = 41);

// Double transform: sup_alpha (E(alpha) + t alpha), for the involution check.
double legendre_inverse(const SpectrumTable& table, double t);

struct PhaseTransitionReport {
    bool kink = false;
    double t_c = 0.0;
    double D_minus_tc = 0.0;  // alpha_2
    double D_plus_tc = 0.0;
    double kink_magnitude = 0.0;
    std::string note;
};

PhaseTransitionReport phase_transition_report(const PressureCurve& curve);

struct NestedReport {
    std::vector<int> caps;
    std::vector<std::vector<double>> values;  // values[i][j] = P_i(t_j)
    std::vector<double> full;                 // full-model oracle on the grid
    bool monotone = false;      // nondecreasing in the cap at every t
    bool reaches_full = false;  // final cap matches the full model
};

// Subgraphs spanned by cycles of length <= cap are the nested basic-set
// stand-ins; oracle pressure is evaluated per stage (max over strongly
// connected components when a stage is disconnected).
NestedReport nested_pressure_convergence(const MarkovModel& model,
                                         const std::vector<int>& caps,
                                         const std::vector<double>& t_grid);

}  // namespace lab
