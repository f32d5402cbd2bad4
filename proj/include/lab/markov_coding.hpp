#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lab/models.hpp"

namespace lab {

// Constants of the coding construction. The three inequality invariants are
// checked by `valid()`; violating sets are rejected by the stages that
// consume them.
struct CodingConstants {
    double beta = 1.05;   // > 1, close to 1
    double kappa = 1.0;   // bracket Lipschitz constant
    double gamma = 0.0;   // return-map contraction rate
    double C = 1.0;       // return-map contraction prefactor
    double Delta = 0.0;   // margin between the seed set and rectangle boundaries
    double epsilon = 0.0;
    int N0 = 0;  // coding window stride bound, > max(N1, N2)
    int N1 = 0;  // C exp(-gamma N1) < 1/2
    int N2 = 0;  // refinement depth with cell diameter < epsilon

    bool contraction_ok() const;   // C exp(-gamma N1) < 1/2
    bool epsilon_ok() const;       // epsilon < Delta / (2 (1 + beta^2 kappa^2))
    bool containment_ok() const;   // epsilon (1 + 2 beta^2 kappa^2) < Delta
    bool valid() const { return contraction_ok() && epsilon_ok() && containment_ok(); }
};

// Axis-aligned box in the (unstable, stable) eigenframe around a center
// section point; closed under the bracket by construction.
struct SuRectangle {
    int id = 0;
    CatPoint center;
    double ru = 0.0;  // half-width along the unstable eigendirection
    double rs = 0.0;  // half-width along the stable eigendirection
};

struct CrossSection {
    std::vector<SuRectangle> rectangles;
    std::vector<CatPoint> witnesses;   // the finitary seed set Lambda
    std::vector<int> witness_rect;     // containing rectangle per witness
    std::vector<int> witness_orbit;    // seed orbit index, -1 for connectors
    double alpha_rect = 0.0;           // diameter cap that was enforced
    double margin = 0.0;               // measured Delta
};

// Finitary seed: the given periodic orbits of the section map plus
// connecting segments F^j([p, q]) for |j| <= connector_span between every
// ordered pair of orbits (heteroclinic-closure approximation).
std::vector<CatPoint> seed_witnesses(const CatFlow& cat,
                                     const std::vector<std::vector<CatPoint>>& orbits,
                                     int connector_span,
                                     std::vector<int>* orbit_of = nullptr);

// Disjoint su-rectangles of diameter <= alpha_rect covering the witnesses,
// each with a positive boundary margin.
CrossSection build_cross_section(const CatFlow& cat,
                                 const std::vector<std::vector<CatPoint>>& orbits,
                                 int connector_span, double alpha_rect);

struct FirstReturnResult {
    CatPoint image;
    double return_time = 0.0;
    int rectangle = -1;  // -1 when the image escapes every rectangle
    bool exited = false;
};

FirstReturnResult first_return(const CatFlow& cat, const CrossSection& section,
                               const CatPoint& p);

// Rectangle index containing p, or -1.
int locate(const CatFlow& cat, const CrossSection& section, const CatPoint& p);

CodingConstants choose_constants(const CatFlow& cat, const CrossSection& section,
                                 double beta = 1.05);

struct RefinedCell {
    std::vector<int> itinerary;      // rectangle ids over [-N, N]
    std::vector<int> witnesses;      // witness indices realizing it
    double diameter_bound = 0.0;     // exact for the linear model
};

struct Refinement {
    int N = 0;
    std::vector<RefinedCell> cells;
    std::vector<std::vector<int>> transitions;  // cell graph under one F-step
    double max_diameter = 0.0;
};

Refinement refine(const CatFlow& cat, const CrossSection& section, int N);

struct ShadowCertificate {
    bool halving_ok = false;    // eps/2^j per-step bound at every iteration
    double worst_step = 0.0;    // max over steps/j of d * 2^j / eps
    double sup_error = 0.0;     // max distance to witnesses at stride indices
    bool within_bound = false;  // sup_error <= eps (1 + 2 beta^2 kappa^2)
};

struct ShadowedPoint {
    CatPoint point;  // psi(code)
    ShadowCertificate certificate;
};

// The shadowing map psi: runs the forward w-recursion and the backward
// v-recursion over G = F^{N1} strides of the code and brackets the limits.
// `code` lists F-adjacent cell indices; its middle entry is index 0.
ShadowedPoint shadow_sequence(const CatFlow& cat, const CrossSection& section,
                              const Refinement& refinement, const std::vector<int>& code,
                              const CodingConstants& constants);

struct EnvelopeReport {
    CrossSection section;
    Refinement refinement;
    CodingConstants constants;
    std::vector<int> scc_cells;  // cells of the selected transitive component
    int samples = 0;
    int shadow_failures = 0;     // certificate failures over the samples
    int recode_failures = 0;     // psi(code) itineraries not matching the code
    int bracket_failures = 0;    // product-structure splice mismatches
    bool seed_contained = false; // seed codes map back to their orbits
    bool inside_U = false;       // all psi samples within U of the seed
    double max_seed_error = 0.0;
    double max_U_distance = 0.0;
    bool ok = false;
    std::string failure;         // first failed property, empty when ok
};

// Full pipeline: section, constants, refinement at N0, sampled verification
// (sample count driven, reproducible from rng_seed), SCC restriction.
EnvelopeReport build_envelope(const CatFlow& cat,
                              const std::vector<std::vector<CatPoint>>& orbits,
                              double U_radius, double alpha_rect, int samples,
                              std::uint64_t rng_seed);

// Symbolic bracket on Markov points: past (symbols at i < 0) from p, present
// and future (i >= 0, and the phase) from q. The center symbols must agree.
MarkovPoint markov_bracket(const MarkovModel& model, const MarkovPoint& p,
                           const MarkovPoint& q);

}  // namespace lab
