#include "lab/thermo_spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lab {

namespace {

// Spectral radius of a nonnegative matrix by power iteration.
double spectral_radius(const std::vector<std::vector<double>>& m) {
    size_t n = m.size();
    std::vector<double> v(n, 1.0), w(n);
    double rho = 0.0;
    for (int it = 0; it < 20000; ++it) {
        double norm = 0.0;
        for (size_t i = 0; i < n; ++i) {
            w[i] = 0.0;
            for (size_t j = 0; j < n; ++j) w[i] += m[i][j] * v[j];
            norm = std::max(norm, w[i]);
        }
        if (norm == 0.0) return 0.0;
        for (size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
        if (it > 10 && std::fabs(norm - rho) < 1e-14 * std::max(1.0, norm)) return norm;
        rho = norm;
    }
    return rho;
}

double pressure_from_matrix(const std::vector<std::vector<int>>& adjacency,
                            const std::vector<double>& weights,
                            const std::vector<double>& roofs) {
    size_t n = adjacency.size();
    auto log_rho = [&](double P) {
        std::vector<std::vector<double>> b(n, std::vector<double>(n, 0.0));
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j)
                if (adjacency[i][j]) b[i][j] = std::exp(weights[j] - P * roofs[j]);
        return std::log(spectral_radius(b));
    };
    double lo = -1.0, hi = 1.0;
    int guard = 0;
    while (log_rho(lo) < 0.0 && ++guard < 80) lo *= 2.0;
    guard = 0;
    while (log_rho(hi) > 0.0 && ++guard < 80) hi *= 2.0;
    if (log_rho(lo) < 0.0 || log_rho(hi) > 0.0)
        throw Error("bisection", "pressure bracket failure on [" + std::to_string(lo) + ", " +
                                     std::to_string(hi) + "]");
    while (hi - lo > 1e-12) {
        double mid = 0.5 * (lo + hi);
        (log_rho(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double suspension_pressure_oracle(const MarkovModel& model,
                                  const std::vector<double>& weights) {
    if (static_cast<int>(weights.size()) != model.symbol_count())
        throw UsageError("one weight per symbol required");
    std::vector<std::vector<int>> adj(model.symbol_count(),
                                      std::vector<int>(model.symbol_count()));
    std::vector<double> roofs(model.symbol_count());
    for (int i = 0; i < model.symbol_count(); ++i) {
        roofs[i] = model.roof(i);
        for (int j = 0; j < model.symbol_count(); ++j) adj[i][j] = model.edge(i, j);
    }
    return pressure_from_matrix(adj, weights, roofs);
}

std::vector<double> proxy_weights(const MarkovModel& model) {
    std::vector<double> w(model.symbol_count());
    for (int s = 0; s < model.symbol_count(); ++s) w[s] = -model.rate(s) * model.roof(s);
    return w;
}

OrbitSumResult pressure_orbit_sum(const MarkovModel& model, double t,
                                  const OrbitSumConfig& config) {
    int max_len = static_cast<int>(std::floor(config.T / model.min_roof()));
    auto cycles = enumerate_cycles(model, max_len);
    double sum = 0.0;
    int count = 0;
    for (const auto& o : cycles) {
        double phi;
        if (config.weights) {
            phi = 0.0;
            for (int s : o.cycle) phi += (*config.weights)[s];
        } else {
            phi = -std::log(spectral_radius_det1(o.monodromy));
        }
        for (int k = 1; k * o.period <= config.T + 1e-12; ++k) {
            double p = k * o.period;
            if (p > config.T - config.delta_T + 1e-12 && p <= config.T + 1e-12) {
                sum += o.cycle.size() * std::exp(t * k * phi);
                ++count;
            }
        }
    }
    if (count == 0)
        throw Error("orbit-sum",
                    "no orbits with period in the window; increase delta_T");
    return {std::log(sum) / config.T, count};
}

std::vector<double> default_t_grid() {
    std::vector<double> g(81);
    for (int i = 0; i < 81; ++i) g[i] = -6.0 + 0.125 * i;
    return g;
}

namespace {

void one_sided_derivatives(PressureCurve& c) {
    size_t n = c.t_grid.size();
    c.D_plus.assign(n, std::numeric_limits<double>::quiet_NaN());
    c.D_minus.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (size_t i = 0; i < n; ++i) {
        if (i + 2 < n) {
            double h = c.t_grid[i + 1] - c.t_grid[i];
            c.D_plus[i] = (-3.0 * c.P[i] + 4.0 * c.P[i + 1] - c.P[i + 2]) / (2.0 * h);
        } else if (i + 1 < n) {
            c.D_plus[i] = (c.P[i + 1] - c.P[i]) / (c.t_grid[i + 1] - c.t_grid[i]);
        }
        if (i >= 2) {
            double h = c.t_grid[i] - c.t_grid[i - 1];
            c.D_minus[i] = (3.0 * c.P[i] - 4.0 * c.P[i - 1] + c.P[i - 2]) / (2.0 * h);
        } else if (i >= 1) {
            c.D_minus[i] = (c.P[i] - c.P[i - 1]) / (c.t_grid[i] - c.t_grid[i - 1]);
        }
    }
    // Grid edges carry the opposite-side value so every entry is finite.
    if (n >= 2) {
        c.D_minus[0] = c.D_plus[0];
        c.D_plus[n - 1] = c.D_minus[n - 1];
    }
}

void gate_invariants(const PressureCurve& c) {
    double tol = 2.0 * c.estimator_tol + 1e-12;
    for (size_t i = 0; i + 1 < c.P.size(); ++i)
        if (c.P[i + 1] > c.P[i] + tol)
            throw Error("invariant", "pressure curve increases at t = " +
                                         std::to_string(c.t_grid[i + 1]));
    for (size_t i = 0; i + 2 < c.P.size(); ++i)
        if (c.P[i + 1] > 0.5 * (c.P[i] + c.P[i + 2]) + tol)
            throw Error("invariant", "pressure curve is nonconvex at t = " +
                                         std::to_string(c.t_grid[i + 1]));
}

}  // namespace

PressureCurve pressure_curve(const MarkovModel& model, const std::vector<double>& t_grid,
                             const PressureConfig& config) {
    if (t_grid.empty()) throw UsageError("empty t grid");
    for (size_t i = 0; i + 1 < t_grid.size(); ++i)
        if (t_grid[i + 1] <= t_grid[i]) throw UsageError("t grid must be increasing");

    PressureCurve c;
    c.t_grid = t_grid;
    c.method = config.method;
    if (config.method == "oracle") {
        c.estimator_tol = 1e-10;
        auto w = config.orbit_sum.weights ? *config.orbit_sum.weights : proxy_weights(model);
        for (double t : t_grid) {
            std::vector<double> tw(w.size());
            for (size_t s = 0; s < w.size(); ++s) tw[s] = t * w[s];
            c.P.push_back(suspension_pressure_oracle(model, tw));
        }
    } else if (config.method == "orbit-sum") {
        c.estimator_tol = 0.05;
        for (double t : t_grid)
            c.P.push_back(pressure_orbit_sum(model, t, config.orbit_sum).value);
    } else {
        throw UsageError("unknown pressure method '" + config.method + "'");
    }
    one_sided_derivatives(c);
    gate_invariants(c);

    // Plateau onset: first grid point from which |P| stays below tolerance.
    size_t n = c.P.size();
    size_t onset = n;
    for (size_t i = n; i-- > 0;) {
        if (std::fabs(c.P[i]) < config.plateau_tol)
            onset = i;
        else
            break;
    }
    if (onset < n) {
        c.has_plateau = true;
        c.t_c = c.t_grid[onset];
    }
    return c;
}

SpectrumTable legendre(const PressureCurve& curve, int alpha_points) {
    size_t n = curve.P.size();
    if (n < 2) throw PreconditionError("pressure curve too short for a transform");
    double tol = 2.0 * curve.estimator_tol + 1e-12;
    for (size_t i = 0; i + 2 < n; ++i)
        if (curve.P[i + 1] > 0.5 * (curve.P[i] + curve.P[i + 2]) + tol)
            throw PreconditionError("nonconvex pressure curve rejected");

    SpectrumTable table;
    table.alpha_1 = curve.D_plus.front();
    table.alpha_2 = curve.has_plateau
                        ? curve.D_minus[std::lower_bound(curve.t_grid.begin(),
                                                         curve.t_grid.end(), curve.t_c) -
                                        curve.t_grid.begin()]
                        : curve.D_minus.back();

    // Realized chord slopes bracket the attainable range.
    double s_lo = (curve.P[1] - curve.P[0]) / (curve.t_grid[1] - curve.t_grid[0]);
    double s_hi = (curve.P[n - 1] - curve.P[n - 2]) /
                  (curve.t_grid[n - 1] - curve.t_grid[n - 2]);
    if (s_lo > s_hi) std::swap(s_lo, s_hi);
    double width = s_hi - s_lo;
    double a_lo = s_lo + 0.02 * width;
    double a_hi = s_hi - 0.02 * width;
    if (width < 1e-8) {  // flat slope range: single degenerate row
        alpha_points = 1;
        a_lo = a_hi = 0.5 * (s_lo + s_hi);
    }
    for (int i = 0; i < alpha_points; ++i) {
        SpectrumRow row;
        row.alpha = (alpha_points == 1)
                        ? a_lo
                        : a_lo + (a_hi - a_lo) * i / (alpha_points - 1);
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < n; ++j) {
            double v = curve.P[j] - curve.t_grid[j] * row.alpha;
            if (v < best - 1e-15) {
                best = v;
                row.argmin_t = curve.t_grid[j];
            }
        }
        row.E = best;
        row.attained = row.alpha >= s_lo - 1e-12 && row.alpha <= s_hi + 1e-12;
        row.has_dim = row.alpha > table.alpha_1 && row.alpha < 0.0;
        if (row.has_dim) row.dim_lower = 1.0 + 2.0 * row.E / (-row.alpha);
        table.rows.push_back(row);
    }
    return table;
}

double legendre_inverse(const SpectrumTable& table, double t) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& row : table.rows) best = std::max(best, row.E + t * row.alpha);
    return best;
}

PhaseTransitionReport phase_transition_report(const PressureCurve& curve) {
    PhaseTransitionReport r;
    if (!curve.has_plateau) {
        r.note = "no phase transition";
        return r;
    }
    size_t i = std::lower_bound(curve.t_grid.begin(), curve.t_grid.end(), curve.t_c) -
               curve.t_grid.begin();
    r.t_c = curve.t_c;
    r.D_minus_tc = curve.D_minus[i];
    r.D_plus_tc = curve.D_plus[i];
    r.kink_magnitude = std::fabs(r.D_minus_tc);

    // Noise floor: typical one-sided derivative disagreement away from t_c.
    std::vector<double> gaps;
    for (size_t j = 2; j + 2 < curve.t_grid.size(); ++j) {
        if (j == i) continue;
        if (!std::isnan(curve.D_plus[j]) && !std::isnan(curve.D_minus[j]))
            gaps.push_back(std::fabs(curve.D_plus[j] - curve.D_minus[j]));
    }
    std::sort(gaps.begin(), gaps.end());
    double noise = gaps.empty() ? 1e-12 : gaps[gaps.size() / 2];
    r.kink = (r.D_plus_tc - r.D_minus_tc) > 5.0 * std::max(noise, 1e-12);
    if (!r.kink) r.note = "plateau without a resolvable kink";
    return r;
}

NestedReport nested_pressure_convergence(const MarkovModel& model,
                                         const std::vector<int>& caps,
                                         const std::vector<double>& t_grid) {
    if (caps.empty()) throw UsageError("no caps given");
    for (size_t i = 0; i + 1 < caps.size(); ++i)
        if (caps[i + 1] <= caps[i]) throw UsageError("caps must be increasing");

    int ns = model.symbol_count();
    std::vector<double> roofs(ns);
    std::vector<double> weights = proxy_weights(model);
    std::vector<std::vector<int>> full(ns, std::vector<int>(ns));
    for (int i = 0; i < ns; ++i) {
        roofs[i] = model.roof(i);
        for (int j = 0; j < ns; ++j) full[i][j] = model.edge(i, j);
    }

    NestedReport report;
    report.caps = caps;
    for (int cap : caps) {
        std::vector<std::vector<int>> adj(ns, std::vector<int>(ns, 0));
        for (const auto& o : enumerate_cycles(model, cap))
            for (size_t k = 0; k < o.cycle.size(); ++k)
                adj[o.cycle[k]][o.cycle[(k + 1) % o.cycle.size()]] = 1;
        bool empty = true;
        for (const auto& row : adj)
            for (int e : row) empty = empty && e == 0;
        if (empty)
            throw Error("nested", "no cycles at cap " + std::to_string(cap));
        std::vector<double> row;
        for (double t : t_grid) {
            std::vector<double> tw(ns);
            for (int s = 0; s < ns; ++s) tw[s] = t * weights[s];
            row.push_back(pressure_from_matrix(adj, tw, roofs));
        }
        report.values.push_back(std::move(row));
    }
    for (double t : t_grid) {
        std::vector<double> tw(ns);
        for (int s = 0; s < ns; ++s) tw[s] = t * weights[s];
        report.full.push_back(pressure_from_matrix(full, tw, roofs));
    }
    report.monotone = true;
    for (size_t i = 0; i + 1 < report.values.size(); ++i)
        for (size_t j = 0; j < t_grid.size(); ++j)
            if (report.values[i + 1][j] < report.values[i][j] - 1e-9)
                report.monotone = false;
    report.reaches_full = true;
    for (size_t j = 0; j < t_grid.size(); ++j)
        if (std::fabs(report.values.back()[j] - report.full[j]) > 1e-9)
            report.reaches_full = false;
    return report;
}

}  // namespace lab
