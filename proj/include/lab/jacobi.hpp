#pragma once

#include "lab/models.hpp"

namespace lab {

// The (J, J') state of J'' + K J = 0 along an orbit. `logscale` accumulates
// rescaling exponents so that max(|j|, |jp|) stays in [1/2, 2]; the true
// field is e^{logscale} * (j, jp).
struct JacobiPair {
    double j = 1.0;
    double jp = 0.0;
    double logscale = 0.0;
};

// e^{ls1+ls2} * (j1*jp2 - jp1*j2), conserved under joint propagation.
double wronskian(const JacobiPair& a, const JacobiPair& b);

// |det(propagator over [0, t]) - 1| from the per-segment closed-form blocks.
// This is the numerically meaningful Wronskian-conservation measure at long
// horizons, where two separately propagated pairs align exponentially and
// their cross product cancels below double precision.
double wronskian_drift(const Model& model, const Point& p, double t);

// Propagate through time t (either sign). Closed-form cosh/sinh blocks per
// constant-curvature segment on Markov models and on the linear toy flow;
// adaptive integration on surfaces.
JacobiPair propagate_jacobi(const Model& model, const Point& p, JacobiPair pair, double t);

struct RiccatiResult {
    double u = 0.0;              // J'/J at time t
    bool conjugate_point = false;  // J crossed zero before t
    double crossing_time = 0.0;    // first crossing, when flagged
};

// u = J'/J of the pair with J(0) = 1, J'(0) = u0. Pole crossings (J = 0) are
// reported, not integrated through; `u` is then the value just before the
// crossing is irrelevant and left at the last finite sample.
RiccatiResult riccati_solve(const Model& model, const Point& p, double u0, double t);

struct CurvatureEstimate {
    double value = 0.0;
    double residual = 0.0;  // last successive-horizon difference
    double horizon = 0.0;   // T actually used
    bool converged = false;
};

inline constexpr double kCurvatureTol = 1e-9;
inline constexpr double kCurvatureTmax = 16384.0;  // 2^14

// k^u: J'(0)/J(0) of the pair pushed as (0,1) from time -T, with T-doubling
// until successive values differ by less than tol. Orbits whose reachable
// past is entirely flat return 0 exactly. Non-convergence within the stored
// window (or T_max) returns the last value with converged = false.
CurvatureEstimate unstable_curvature(const Model& model, const Point& p,
                                     double tol = kCurvatureTol,
                                     double t_max = kCurvatureTmax);

// k^s(p) = k^u(reverse(p)); one code path.
CurvatureEstimate stable_curvature(const Model& model, const Point& p,
                                   double tol = kCurvatureTol,
                                   double t_max = kCurvatureTmax);

struct HorocycleCurvatures {
    CurvatureEstimate k_u;
    CurvatureEstimate k_s;
    double lambda = 0.0;  // min(k_s, k_u)
};

HorocycleCurvatures horocycle_curvatures(const Model& model, const Point& p,
                                         double tol = kCurvatureTol);

double lambda_at(const Model& model, const Point& p, double tol = kCurvatureTol);

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;  // Richardson estimate from step halving
};

// lambda_T = integral of lambda(g_t p) over [-T, T], composite midpoint.
// Step defaults to min(roof)/8 on Markov models (1/8 elsewhere).
QuadratureResult lambda_T(const Model& model, const Point& p, double T, double step = 0.0);

// phi_geo = -k^u.
double geometric_potential(const Model& model, const Point& p, double tol = kCurvatureTol);

// (1/T) * log of the unstable Jacobi growth over [0, T], logscale-aware.
double lyapunov_forward(const Model& model, const Point& p, double T);
double lyapunov_backward(const Model& model, const Point& p, double T);

struct RegularityCertificate {
    double T = 0.0;
    double eta = 0.0;
    double lambda_T_value = 0.0;
    bool member = false;  // lambda_T_value >= eta
};

RegularityCertificate reg_membership(const Model& model, const Point& p, double T, double eta);

struct ContractionReport {
    double C = 0.0;             // exp(2 T k_max)
    double rate = 0.0;          // eta / (2T)
    double measured_slope = 0.0;  // least-squares slope of log |J^s|
    double margin = 0.0;        // min over samples of log-bound minus log |J^s|
    int violations = 0;
};

// Checks |J^s(t)| <= C |J^s(0)| exp(-eta t / 2T) along [0, duration], after
// verifying the orbit stays in Reg_T(eta). Orbits that exit raise a
// precondition failure naming the exit time.
ContractionReport contraction_check(const Model& model, const Point& p, double T,
                                    double eta, double duration);

}  // namespace lab
