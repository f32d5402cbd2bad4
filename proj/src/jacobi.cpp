#include "lab/jacobi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lab {

namespace {

void rescale(JacobiPair& p) {
    double m = std::max(std::fabs(p.j), std::fabs(p.jp));
    if (m > 2.0 || (m < 0.5 && m > 0.0)) {
        p.j /= m;
        p.jp /= m;
        p.logscale += std::log(m);
    }
}

// Closed-form block for J'' + K J = 0 with constant K = -a^2 over signed
// duration h. Symplectic (det = 1) by construction.
void apply_block(JacobiPair& p, double K, double h) {
    double a = std::sqrt(-K);
    double j, jp;
    if (a == 0.0) {
        j = p.j + h * p.jp;
        jp = p.jp;
    } else {
        double ch = std::cosh(a * h), sh = std::sinh(a * h);
        j = ch * p.j + (sh / a) * p.jp;
        jp = a * sh * p.j + ch * p.jp;
    }
    p.j = j;
    p.jp = jp;
    rescale(p);
}

struct Segment {
    double K;
    double dt;  // positive, in traversal order
};

std::vector<Segment> collect_segments(const MarkovModel& m, const MarkovPoint& p, double t) {
    std::vector<Segment> segs;
    m.for_each_segment(p, t, [&](double K, double dt) { segs.push_back({K, dt}); });
    return segs;
}

JacobiPair propagate_markov(const MarkovModel& m, const MarkovPoint& p, JacobiPair pair,
                            double t) {
    double sign = (t >= 0.0) ? 1.0 : -1.0;
    for (const auto& s : collect_segments(m, p, t)) apply_block(pair, s.K, sign * s.dt);
    return pair;
}

JacobiPair propagate_surface(const SurfaceOfRevolution& m, const SurfacePoint& p,
                             JacobiPair pair, double t) {
    // Chunked so the rescaling keeps (j, jp) in range over long durations.
    SurfacePoint q = p;
    double remaining = t;
    double chunk = (t >= 0.0) ? 1.0 : -1.0;
    while (remaining != 0.0) {
        double step = (std::fabs(remaining) > 1.0) ? chunk : remaining;
        m.flow_with_jacobi(q, pair.j, pair.jp, step);
        rescale(pair);
        remaining -= step;
    }
    return pair;
}

// The point pushed as (0,1) from time -T, evaluated at the point itself.
JacobiPair pair_from_past(const Model& model, const Point& p, double T) {
    JacobiPair pair{0.0, 1.0, 0.0};
    if (model.is_markov()) {
        const auto& m = model.markov();
        const auto& mp = std::get<MarkovPoint>(p);
        auto segs = collect_segments(m, mp, -T);  // traversal order: recent past first
        for (auto it = segs.rbegin(); it != segs.rend(); ++it)
            apply_block(pair, it->K, it->dt);
        return pair;
    }
    if (model.is_cat()) {
        apply_block(pair, model.cat().curvature_at(std::get<CatPoint>(p)), T);
        return pair;
    }
    const auto& m = model.surface();
    SurfacePoint q = m.flow(std::get<SurfacePoint>(p), -T);
    return propagate_surface(m, q, pair, T);
}

double markov_backward_capacity(const Model& model, const Point& p) {
    if (model.is_markov()) return model.markov().backward_capacity(std::get<MarkovPoint>(p));
    return kCurvatureTmax;
}

bool flat_past(const Model& model, const Point& p) {
    if (!model.is_markov()) return false;
    const auto& mp = std::get<MarkovPoint>(p);
    const auto& m = model.markov();
    for (int i = 0; i <= mp.center; ++i)
        if (m.curvature(mp.window[i]) != 0.0) return false;
    return true;
}

}  // namespace

double wronskian(const JacobiPair& a, const JacobiPair& b) {
    return std::exp(a.logscale + b.logscale) * (a.j * b.jp - a.jp * b.j);
}

double wronskian_drift(const Model& model, const Point& p, double t) {
    // Conservation of the Wronskian is determinant conservation of the
    // propagator. Two separately propagated pairs align exponentially, so
    // their cross product cancels catastrophically beyond t ~ 8; the
    // per-segment block determinants carry the same information at full
    // precision for symbolic models.
    auto block_det = [](double K, double h) {
        double a = std::sqrt(-K);
        if (a == 0.0) return 1.0;
        double ch = std::cosh(a * h), sh = std::sinh(a * h);
        return ch * ch - sh * sh;
    };
    double det = 1.0;
    if (model.is_markov()) {
        model.markov().for_each_segment(std::get<MarkovPoint>(p), t,
                                        [&](double K, double dt) { det *= block_det(K, dt); });
    } else if (model.is_cat()) {
        det = block_det(model.cat().curvature_at(std::get<CatPoint>(p)), t);
    } else {
        throw UsageError("wronskian drift is defined via closed-form blocks; "
                         "surfaces have no symbolic segments");
    }
    return std::fabs(det - 1.0);
}

JacobiPair propagate_jacobi(const Model& model, const Point& p, JacobiPair pair, double t) {
    if (t == 0.0) return pair;
    if (model.is_markov())
        return propagate_markov(model.markov(), std::get<MarkovPoint>(p), pair, t);
    if (model.is_cat()) {
        apply_block(pair, model.cat().curvature_at(std::get<CatPoint>(p)), t);
        return pair;
    }
    return propagate_surface(model.surface(), std::get<SurfacePoint>(p), pair, t);
}

namespace {

// First zero of J(s) = J ch(a s) + (Jp/a) sh(a s) for s strictly between 0
// and h (either sign of h); returns NaN when none.
double first_zero(double J, double Jp, double K, double h) {
    double a = std::sqrt(-K);
    double s0;
    if (a == 0.0) {
        if (Jp == 0.0) return std::nan("");
        s0 = -J / Jp;
    } else {
        if (Jp == 0.0) return std::nan("");
        double x = -a * J / Jp;
        if (std::fabs(x) >= 1.0) return std::nan("");
        s0 = std::atanh(x) / a;
    }
    bool inside = (h > 0.0) ? (s0 > 0.0 && s0 <= h) : (s0 < 0.0 && s0 >= h);
    return inside ? s0 : std::nan("");
}

}  // namespace

RiccatiResult riccati_solve(const Model& model, const Point& p, double u0, double t) {
    RiccatiResult out;
    JacobiPair pair{1.0, u0, 0.0};
    out.u = u0;
    if (t == 0.0) return out;
    double sign = (t >= 0.0) ? 1.0 : -1.0;

    if (model.is_markov() || model.is_cat()) {
        std::vector<Segment> segs;
        if (model.is_markov())
            segs = collect_segments(model.markov(), std::get<MarkovPoint>(p), t);
        else
            segs.push_back({model.cat().curvature_at(std::get<CatPoint>(p)), std::fabs(t)});
        double elapsed = 0.0;
        for (const auto& s : segs) {
            double h = sign * s.dt;
            double z = first_zero(pair.j, pair.jp, s.K, h);
            if (!std::isnan(z)) {
                out.conjugate_point = true;
                out.crossing_time = sign * (elapsed + std::fabs(z));
                return out;
            }
            apply_block(pair, s.K, h);
            elapsed += s.dt;
        }
        out.u = pair.jp / pair.j;
        return out;
    }

    const auto& m = model.surface();
    SurfacePoint q = std::get<SurfacePoint>(p);
    double remaining = std::fabs(t);
    double elapsed = 0.0;
    while (remaining > 0.0) {
        double step = std::min(0.05, remaining);
        double j_prev = pair.j;
        m.flow_with_jacobi(q, pair.j, pair.jp, sign * step);
        if (pair.j == 0.0 || (j_prev != 0.0 && std::signbit(pair.j) != std::signbit(j_prev))) {
            out.conjugate_point = true;
            double frac = std::fabs(j_prev) / (std::fabs(j_prev) + std::fabs(pair.j));
            out.crossing_time = sign * (elapsed + frac * step);
            return out;
        }
        rescale(pair);
        elapsed += step;
        remaining -= step;
    }
    out.u = pair.jp / pair.j;
    return out;
}

CurvatureEstimate unstable_curvature(const Model& model, const Point& p, double tol,
                                     double t_max) {
    CurvatureEstimate est;
    if (flat_past(model, p)) {
        est.value = 0.0;
        est.residual = 0.0;
        est.horizon = markov_backward_capacity(model, p);
        est.converged = true;
        return est;
    }
    double cap = std::min(t_max, markov_backward_capacity(model, p));
    double prev = std::nan("");
    double T = std::min(1.0, cap);
    while (true) {
        JacobiPair pair = pair_from_past(model, p, T);
        double k = pair.jp / pair.j;
        est.value = k;
        est.horizon = T;
        if (!std::isnan(prev)) {
            est.residual = std::fabs(k - prev);
            if (est.residual < tol) {
                est.converged = true;
                return est;
            }
        }
        prev = k;
        if (T >= cap) return est;  // converged stays false; residual is data
        T = std::min(2.0 * T, cap);
    }
}

CurvatureEstimate stable_curvature(const Model& model, const Point& p, double tol,
                                   double t_max) {
    return unstable_curvature(model, model.reverse(p), tol, t_max);
}

HorocycleCurvatures horocycle_curvatures(const Model& model, const Point& p, double tol) {
    HorocycleCurvatures h;
    h.k_u = unstable_curvature(model, p, tol);
    h.k_s = stable_curvature(model, p, tol);
    h.lambda = std::min(h.k_s.value, h.k_u.value);
    return h;
}

double lambda_at(const Model& model, const Point& p, double tol) {
    return horocycle_curvatures(model, p, tol).lambda;
}

namespace {

double default_step(const Model& model) {
    return model.is_markov() ? model.markov().min_roof() / 8.0 : 0.125;
}

double midpoint_integral(const Model& model, const Point& p, double T, int n) {
    double h = 2.0 * T / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double t = -T + (i + 0.5) * h;
        sum += lambda_at(model, model.flow(p, t));
    }
    return sum * h;
}

}  // namespace

QuadratureResult lambda_T(const Model& model, const Point& p, double T, double step) {
    if (step <= 0.0) step = default_step(model);
    int n = std::max(1, static_cast<int>(std::ceil(2.0 * T / step)));
    double coarse = midpoint_integral(model, p, T, n);
    double fine = midpoint_integral(model, p, T, 2 * n);
    QuadratureResult out;
    out.value = fine;
    out.error = std::fabs(fine - coarse) / 3.0;
    return out;
}

double geometric_potential(const Model& model, const Point& p, double tol) {
    return -unstable_curvature(model, p, tol).value;
}

double lyapunov_forward(const Model& model, const Point& p, double T) {
    double ku = unstable_curvature(model, p).value;
    JacobiPair pair{1.0, ku, 0.0};
    JacobiPair end = propagate_jacobi(model, p, pair, T);
    return (std::log(std::fabs(end.j)) + end.logscale) / T;
}

double lyapunov_backward(const Model& model, const Point& p, double T) {
    return lyapunov_forward(model, model.reverse(p), T);
}

RegularityCertificate reg_membership(const Model& model, const Point& p, double T,
                                     double eta) {
    RegularityCertificate cert;
    cert.T = T;
    cert.eta = eta;
    cert.lambda_T_value = lambda_T(model, p, T).value;
    cert.member = cert.lambda_T_value >= eta;
    return cert;
}

namespace {

double model_k_max(const Model& model, const Point& p, double duration) {
    if (model.is_markov()) return model.markov().max_rate();
    if (model.is_cat()) return std::log(model.cat().expansion());
    double k = 0.0;
    for (double t = 0.0; t <= duration; t += 0.5) {
        double K = model.curvature_at(model.flow(p, t));
        k = std::max(k, std::sqrt(-K));
    }
    return k;
}

}  // namespace

ContractionReport contraction_check(const Model& model, const Point& p, double T,
                                    double eta, double duration) {
    for (double s = 0.0; s <= duration; s += 1.0) {
        RegularityCertificate cert = reg_membership(model, model.flow(p, s), T, eta);
        if (!cert.member)
            throw PreconditionError("orbit exits Reg_T(eta) at t = " + std::to_string(s));
    }

    ContractionReport report;
    double k_max = model_k_max(model, p, duration);
    report.C = std::exp(2.0 * T * k_max);
    report.rate = eta / (2.0 * T);

    // The stable solution is repelling under forward integration: rounding
    // error feeds the exponentially growing solution, which overtakes after
    // t ~ -log(eps)/(2 rate). The stable direction is flow-invariant, so
    // re-seeding it at every step from its converged backward limit computes
    // the same solution while keeping each step's error non-compounding.
    double step = 0.25;
    int n = static_cast<int>(std::round(duration / step));
    Point q = p;
    double logj = 0.0;
    double sum_t = 0.0, sum_y = 0.0, sum_tt = 0.0, sum_ty = 0.0;
    report.margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        double t = i * step;
        double bound = std::log(report.C) - report.rate * t;
        if (logj > bound + 1e-12) ++report.violations;
        report.margin = std::min(report.margin, bound - logj);
        sum_t += t;
        sum_y += logj;
        sum_tt += t * t;
        sum_ty += t * logj;
        if (i < n) {
            JacobiPair pair{1.0, -stable_curvature(model, q).value, 0.0};
            pair = propagate_jacobi(model, q, pair, step);
            logj += std::log(std::fabs(pair.j)) + pair.logscale;
            q = model.flow(q, step);
        }
    }
    double m = n + 1.0;
    report.measured_slope = (m * sum_ty - sum_t * sum_y) / (m * sum_tt - sum_t * sum_t);
    return report;
}

}  // namespace lab
