#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lab/error.hpp"

namespace lab {

// ---------------------------------------------------------------------------
// Markov curvature flow: a suspension over a subshift of finite type where
// each symbol carries a dwell time (roof) and a constant curvature K <= 0.
// Along-orbit curvature is piecewise constant, so Jacobi propagation through
// a symbol is closed-form.
// ---------------------------------------------------------------------------

struct MarkovSpec {
    std::vector<std::string> alphabet;
    std::vector<std::vector<int>> adjacency;  // 0/1, row -> column
    std::vector<double> roof;                 // per symbol, > 0
    std::vector<double> curvature;            // per symbol, <= 0
};

// A phase point holds a finite symbol window (default 256 symbols each side
// of the current symbol) and a phase into the current symbol's dwell
// interval. Flowing past the stored window raises WindowExhausted rather
// than extending lazily.
struct MarkovPoint {
    std::vector<int> window;  // symbol indices
    int center = 0;           // index into window of the current symbol
    double phase = 0.0;       // in [0, roof(window[center]))
};

class MarkovModel {
public:
    explicit MarkovModel(MarkovSpec spec, std::string name = "markov");

    const std::string& name() const { return name_; }
    int symbol_count() const { return static_cast<int>(spec_.alphabet.size()); }
    const std::string& symbol_name(int s) const { return spec_.alphabet[s]; }
    int symbol_index(const std::string& name) const;
    double roof(int s) const { return spec_.roof[s]; }
    double curvature(int s) const { return spec_.curvature[s]; }
    // sqrt(-K), the per-symbol hyperbolicity rate (0 on flat symbols).
    double rate(int s) const { return rate_[s]; }
    bool edge(int from, int to) const { return spec_.adjacency[from][to] != 0; }
    double min_roof() const { return min_roof_; }
    double max_rate() const { return max_rate_; }

    // True when some self-loop (or cycle) of flat symbols exists: the model
    // then contains an orbit with K identically zero, the stand-in for a
    // non-empty singular set.
    bool has_flat_loop() const { return has_flat_loop_; }
    const std::vector<int>& flat_loop() const { return flat_loop_; }

    // Point on the bi-infinite periodic extension of `cycle`, with `phase`
    // into cycle[offset]. The window stores `half_window` symbols each side.
    MarkovPoint periodic_point(const std::vector<int>& cycle, int offset = 0,
                               double phase = 0.0, int half_window = 256) const;
    MarkovPoint periodic_point(const std::string& word, double phase = 0.0,
                               int half_window = 256) const;

    MarkovPoint flow(const MarkovPoint& p, double t) const;
    MarkovPoint reverse(const MarkovPoint& p) const;
    double curvature_at(const MarkovPoint& p) const { return curvature(p.window[p.center]); }

    // Flow time available before the stored window runs out.
    double forward_capacity(const MarkovPoint& p) const;
    double backward_capacity(const MarkovPoint& p) const;

    // Orbit-sup metric at unit window: max over t in [0,1] of the pointwise
    // distance, where points on the same symbol contribute the phase gap and
    // symbol disagreement contributes the roof-weighted discrete value
    // max(roof_p, roof_q). This formula is fixed for all tests.
    double distance(const MarkovPoint& p, const MarkovPoint& q) const;

    // Visit the piecewise-constant curvature segments covered by flowing
    // `p` for time t (t may be negative; segments are then emitted in the
    // order traversed, with positive durations).
    template <typename Fn>  // Fn(double curvature, double dt)
    void for_each_segment(const MarkovPoint& p, double t, Fn&& fn) const;

    std::string word_of(const MarkovPoint& p, int lo, int hi) const;

private:
    void validate() const;

    MarkovSpec spec_;
    std::string name_;
    std::vector<double> rate_;
    double min_roof_ = 0.0;
    double max_rate_ = 0.0;
    bool has_flat_loop_ = false;
    std::vector<int> flat_loop_;
};

// ---------------------------------------------------------------------------
// Surface of revolution with profile f(r) = a*cosh(r/b) + c  (a, b > 0,
// c >= 0), so K(r) = -f''(r)/f(r) <= 0 everywhere. Geodesics are integrated
// with an adaptive embedded Runge-Kutta scheme at per-step tolerance 1e-10;
// the Clairaut constant f(r)^2 * theta' is conserved, not renormalized, so
// drift is measurable.
// ---------------------------------------------------------------------------

struct SurfacePoint {
    double r = 0.0;
    double theta = 0.0;
    double dr = 0.0;      // r-velocity
    double dtheta = 0.0;  // theta-velocity
};

class SurfaceOfRevolution {
public:
    SurfaceOfRevolution(double a, double b, double c, std::string name = "surface");

    const std::string& name() const { return name_; }
    double profile(double r) const { return a_ * std::cosh(r / b_) + c_; }
    double profile_d(double r) const { return (a_ / b_) * std::sinh(r / b_); }
    double profile_dd(double r) const { return (a_ / (b_ * b_)) * std::cosh(r / b_); }
    double curvature(double r) const { return -profile_dd(r) / profile(r); }

    // Unit-speed geodesic initial condition at (r, theta) with direction
    // angle psi measured from the r-axis.
    SurfacePoint unit_point(double r, double theta, double psi) const;

    double clairaut(const SurfacePoint& p) const {
        double f = profile(p.r);
        return f * f * p.dtheta;
    }
    double speed(const SurfacePoint& p) const {
        double f = profile(p.r);
        return std::sqrt(p.dr * p.dr + f * f * p.dtheta * p.dtheta);
    }

    SurfacePoint flow(const SurfacePoint& p, double t) const;
    SurfacePoint reverse(const SurfacePoint& p) const { return {p.r, p.theta, -p.dr, -p.dtheta}; }
    double curvature_at(const SurfacePoint& p) const { return curvature(p.r); }
    double distance(const SurfacePoint& p, const SurfacePoint& q) const;

    // Flow while propagating a scalar Jacobi pair J'' = -K(r(t)) J.
    void flow_with_jacobi(SurfacePoint& p, double& j, double& jp, double t) const;

private:
    double a_, b_, c_;
    std::string name_;
};

// ---------------------------------------------------------------------------
// Linear toy flow: suspension of the torus automorphism [[2,1],[1,1]] with
// roof 1. Stable/unstable eigendirections are explicit and the local product
// bracket is a 2x2 linear solve, so the coding construction runs on it with
// zero integrator noise.
// ---------------------------------------------------------------------------

struct CatPoint {
    std::array<double, 2> x{0.0, 0.0};  // torus coordinates in [0,1)
    double tau = 0.0;                   // phase in [0,1)
    int dir = +1;                       // +1 forward model, -1 reversed
};

class CatFlow {
public:
    CatFlow();

    static constexpr std::array<std::array<double, 2>, 2> kMap = {{{2.0, 1.0}, {1.0, 1.0}}};

    double expansion() const { return lambda_; }        // (3+sqrt(5))/2
    std::array<double, 2> unstable_dir() const { return eu_; }  // unit vector
    std::array<double, 2> stable_dir() const { return es_; }    // unit vector

    std::array<double, 2> apply_map(const std::array<double, 2>& x) const;
    std::array<double, 2> apply_map_inverse(const std::array<double, 2>& x) const;

    CatPoint flow(const CatPoint& p, double t) const;
    CatPoint reverse(const CatPoint& p) const;
    // Constant-curvature analog with the same per-unit-time expansion: a
    // K = -a^2 orbit expands like e^{at}, so a = log(lambda).
    double curvature_at(const CatPoint&) const {
        return -std::log(lambda_) * std::log(lambda_);
    }
    double distance(const CatPoint& p, const CatPoint& q) const;

    // Decompose a displacement into (unstable, stable) eigen-coordinates and
    // back. Displacements are lifted to the nearest representative.
    std::array<double, 2> to_eigen(const std::array<double, 2>& d) const;
    std::array<double, 2> from_eigen(double cu, double cs) const;

    // Local product bracket: the unique point of W^u(w1) /\ W^cs(w2) near
    // both arguments. kappa() is the Lipschitz constant realized by the
    // eigenbasis change of coordinates.
    CatPoint bracket(const CatPoint& w1, const CatPoint& w2) const;
    double kappa() const { return kappa_; }

    static double torus_distance(const std::array<double, 2>& x,
                                 const std::array<double, 2>& y);
    // Displacement y - x lifted to the nearest representative.
    static std::array<double, 2> torus_delta(const std::array<double, 2>& x,
                                             const std::array<double, 2>& y);

private:
    double lambda_;
    std::array<double, 2> eu_, es_;
    double kappa_;
};

// ---------------------------------------------------------------------------
// Uniform model handle used by the CLI and batch layers.
//
// Nonpositive curvature is the desk-scale stand-in for "no focal points":
// every algorithm here consumes only along-orbit curvature, so nothing is
// lost for the implemented operations.
// ---------------------------------------------------------------------------

using Point = std::variant<MarkovPoint, SurfacePoint, CatPoint>;

class Model {
public:
    explicit Model(MarkovModel m) : impl_(std::move(m)) {}
    explicit Model(SurfaceOfRevolution m) : impl_(std::move(m)) {}
    explicit Model(CatFlow m) : impl_(std::move(m)) {}

    const std::string& name() const;
    bool is_markov() const { return std::holds_alternative<MarkovModel>(impl_); }
    bool is_surface() const { return std::holds_alternative<SurfaceOfRevolution>(impl_); }
    bool is_cat() const { return std::holds_alternative<CatFlow>(impl_); }

    const MarkovModel& markov() const;
    const SurfaceOfRevolution& surface() const;
    const CatFlow& cat() const;

    Point flow(const Point& p, double t) const;
    Point reverse(const Point& p) const;
    double curvature_at(const Point& p) const;
    double distance(const Point& p, const Point& q) const;

private:
    std::variant<MarkovModel, SurfaceOfRevolution, CatFlow> impl_;
};

// Validated construction; reports reducible adjacency, nonpositive roofs and
// positive curvatures as construction errors.
MarkovModel make_markov_model(const MarkovSpec& spec, const std::string& name = "markov");

// Standard catalog: M0 (one symbol, K=-1), MFLAT (one symbol, K=0),
// M2 (full 2-shift, K in {-1,-4}), MRANK1 (full 2-shift, K in {0,-1}),
// CAT (linear toy flow). Throws UsageError for unknown names.
Model catalog_model(const std::string& name);
std::vector<std::string> catalog_names();

// Structured-text model files (JSON; see README for the grammar).
Model load_model_file(const std::string& path);

// --- template implementation -----------------------------------------------

template <typename Fn>
void MarkovModel::for_each_segment(const MarkovPoint& p, double t, Fn&& fn) const {
    if (t == 0.0) return;
    if (t > 0.0) {
        int c = p.center;
        double phase = p.phase;
        double remaining = t;
        while (remaining > 0.0) {
            if (c >= static_cast<int>(p.window.size()))
                throw WindowExhausted("symbol window exhausted during forward segment walk",
                                      t);
            int s = p.window[c];
            double left = roof(s) - phase;
            double dt = std::min(left, remaining);
            fn(curvature(s), dt);
            remaining -= dt;
            if (dt == left) {
                ++c;
                phase = 0.0;
            } else {
                phase += dt;
            }
            if (remaining <= 0.0) break;
        }
    } else {
        int c = p.center;
        double phase = p.phase;
        double remaining = -t;
        while (remaining > 0.0) {
            double avail = phase;
            if (avail == 0.0) {
                --c;
                if (c < 0)
                    throw WindowExhausted("symbol window exhausted during backward segment walk",
                                          -t);
                avail = roof(p.window[c]);
            }
            int s = p.window[c];
            double dt = std::min(avail, remaining);
            fn(curvature(s), dt);
            phase = avail - dt;
            remaining -= dt;
        }
    }
}

}  // namespace lab
