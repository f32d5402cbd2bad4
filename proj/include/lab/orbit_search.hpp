#pragma once

#include <array>
#include <string>
#include <vector>

#include "lab/jacobi.hpp"
#include "lab/models.hpp"

namespace lab {

using Mat2 = std::array<std::array<double, 2>, 2>;

double det2(const Mat2& m);
double trace2(const Mat2& m);
// Spectral radius of a det-1 matrix: (|tr| + sqrt(tr^2 - 4))/2 when
// |tr| > 2, else 1 (elliptic/parabolic).
double spectral_radius_det1(const Mat2& m);

struct PeriodicOrbit {
    std::vector<int> cycle;  // canonical (minimal) rotation
    std::string word;
    double period = 0.0;
    Mat2 monodromy{};
    double chi = 0.0;             // log rho(monodromy) / period
    double mean_curvature = 0.0;  // (1/period) * integral of K
    bool parabolic = false;       // |trace| <= 2 within tolerance: chi = 0
};

// Jacobi block of one symbol dwell (cosh/sinh for K = -a^2, shear for K = 0).
Mat2 symbol_block(const MarkovModel& model, int symbol);

PeriodicOrbit make_orbit(const MarkovModel& model, const std::vector<int>& cycle);

// All primitive cycles up to length max_len, deduplicated under rotation
// (reversal kept distinct: it is a different flow orbit), ordered
// lexicographically by cycle word.
std::vector<PeriodicOrbit> enumerate_cycles(const MarkovModel& model, int max_len,
                                            std::size_t cap = 1u << 20);

struct ChiBoundReport {
    double chi = 0.0;
    double bound = 0.0;  // sqrt(-mean_curvature)
    double slack = 0.0;  // bound - chi
    bool ok = false;     // chi <= bound + 1e-9
};

ChiBoundReport chi_bound_check(const PeriodicOrbit& orbit);

struct ChainLink {
    Point point;
    double duration = 0.0;  // >= tau (the section return scale)
};

struct ShadowResult {
    Point start;                // initial point of the shadowing orbit
    std::vector<double> times;  // T_i with T_0 = 0
    double sup_error = 0.0;     // max sampled distance to the chain blocks
};

// Shadowing: symbolic concatenation on Markov models (error 0); linear
// geometric-series solve on the toy flow. Gaps above delta = eps/(4 kappa^2)
// raise an error naming the junction.
ShadowResult shadow_chain(const Model& model, const std::vector<ChainLink>& chain,
                          double epsilon, bool periodic = false);

// Cycles flat^n hyp for n = 1..n_max on models with a flat loop adjacent to a
// hyperbolic symbol; chi decreases toward 0 like log(n)/n.
std::vector<PeriodicOrbit> small_exponent_orbits(const MarkovModel& model, int n_max = 64);

struct ExponentEndpoints {
    double chi_min = 0.0;  // smallest positive chi over enumerated cycles
    double chi_max = 0.0;
    std::string word_min;
    std::string word_max;
};

ExponentEndpoints exponent_endpoint_orbits(const MarkovModel& model, int max_len);

}  // namespace lab
