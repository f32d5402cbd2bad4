#include "lab/orbit_search.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace lab {

double det2(const Mat2& m) { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
double trace2(const Mat2& m) { return m[0][0] + m[1][1]; }

double spectral_radius_det1(const Mat2& m) {
    double tr = std::fabs(trace2(m));
    if (tr <= 2.0) return 1.0;
    return (tr + std::sqrt(tr * tr - 4.0)) / 2.0;
}

Mat2 symbol_block(const MarkovModel& model, int symbol) {
    double a = model.rate(symbol);
    double h = model.roof(symbol);
    if (a == 0.0) return {{{1.0, h}, {0.0, 1.0}}};
    double ch = std::cosh(a * h), sh = std::sinh(a * h);
    return {{{ch, sh / a}, {a * sh, ch}}};
}

namespace {

Mat2 mul(const Mat2& a, const Mat2& b) {
    Mat2 c{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
    return c;
}

constexpr double kParabolicTol = 1e-9;

// Lexicographically minimal rotation index.
int minimal_rotation(const std::vector<int>& w) {
    int n = static_cast<int>(w.size());
    int best = 0;
    for (int i = 1; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            int a = w[(i + k) % n], b = w[(best + k) % n];
            if (a != b) {
                if (a < b) best = i;
                break;
            }
        }
    }
    return best;
}

bool is_primitive(const std::vector<int>& w) {
    int n = static_cast<int>(w.size());
    for (int d = 1; d < n; ++d) {
        if (n % d != 0) continue;
        bool power = true;
        for (int i = 0; i < n && power; ++i)
            if (w[i] != w[i % d]) power = false;
        if (power) return false;
    }
    return true;
}

}  // namespace

PeriodicOrbit make_orbit(const MarkovModel& model, const std::vector<int>& cycle) {
    PeriodicOrbit o;
    int r = minimal_rotation(cycle);
    o.cycle.resize(cycle.size());
    for (size_t i = 0; i < cycle.size(); ++i)
        o.cycle[i] = cycle[(r + i) % cycle.size()];
    for (int s : o.cycle) o.word += model.symbol_name(s);
    Mat2 m{{{1.0, 0.0}, {0.0, 1.0}}};
    double period = 0.0, kint = 0.0;
    for (int s : o.cycle) {
        m = mul(symbol_block(model, s), m);
        period += model.roof(s);
        kint += model.curvature(s) * model.roof(s);
    }
    o.monodromy = m;
    o.period = period;
    o.mean_curvature = kint / period;
    o.parabolic = std::fabs(trace2(m)) <= 2.0 + kParabolicTol;
    o.chi = o.parabolic ? 0.0 : std::log(spectral_radius_det1(m)) / period;
    return o;
}

std::vector<PeriodicOrbit> enumerate_cycles(const MarkovModel& model, int max_len,
                                            std::size_t cap) {
    if (max_len < 1) throw UsageError("max_len must be at least 1");
    std::vector<PeriodicOrbit> out;
    std::vector<int> word;
    // DFS over admissible words of each length; keep primitive words in
    // canonical (minimal) rotation so every orbit appears once.
    std::function<void(int)> extend = [&](int len) {
        if (static_cast<int>(word.size()) == len) {
            if (!model.edge(word.back(), word.front())) return;
            if (minimal_rotation(word) != 0) return;
            if (!is_primitive(word)) return;
            if (out.size() >= cap)
                throw UsageError("cycle cap " + std::to_string(cap) +
                                 " exceeded; raise the cap to enumerate further");
            out.push_back(make_orbit(model, word));
            return;
        }
        for (int s = 0; s < model.symbol_count(); ++s) {
            if (!word.empty() && !model.edge(word.back(), s)) continue;
            word.push_back(s);
            extend(len);
            word.pop_back();
        }
    };
    for (int len = 1; len <= max_len; ++len) extend(len);
    std::sort(out.begin(), out.end(),
              [](const PeriodicOrbit& a, const PeriodicOrbit& b) { return a.word < b.word; });
    return out;
}

ChiBoundReport chi_bound_check(const PeriodicOrbit& orbit) {
    ChiBoundReport r;
    r.chi = orbit.chi;
    r.bound = std::sqrt(-orbit.mean_curvature);
    r.slack = r.bound - r.chi;
    r.ok = orbit.chi <= r.bound + 1e-9;
    return r;
}

namespace {

ShadowResult shadow_chain_markov(const Model& model, const std::vector<ChainLink>& chain,
                                 bool periodic) {
    const MarkovModel& m = model.markov();
    std::vector<std::vector<int>> words;
    for (size_t i = 0; i < chain.size(); ++i) {
        const auto& p = std::get<MarkovPoint>(chain[i].point);
        if (p.phase != 0.0)
            throw UsageError("chain link " + std::to_string(i) +
                             " must start at a symbol boundary");
        std::vector<int> w;
        double used = 0.0;
        int idx = p.center;
        while (used < chain[i].duration - 1e-12) {
            if (idx >= static_cast<int>(p.window.size()))
                throw WindowExhausted("chain link window too short", chain[i].duration);
            w.push_back(p.window[idx]);
            used += m.roof(p.window[idx]);
            ++idx;
        }
        if (std::fabs(used - chain[i].duration) > 1e-9)
            throw UsageError("chain link " + std::to_string(i) +
                             " duration is not a whole number of symbols");
        words.push_back(std::move(w));
    }
    std::vector<int> concat;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i > 0 && !m.edge(words[i - 1].back(), words[i].front()))
            throw UsageError("gap too large at junction " + std::to_string(i - 1) +
                             ": symbols are not adjacent");
        concat.insert(concat.end(), words[i].begin(), words[i].end());
    }

    ShadowResult out;
    if (periodic) {
        if (!m.edge(concat.back(), concat.front()))
            throw UsageError("gap too large at the closing junction");
        out.start = m.periodic_point(concat);
    } else {
        // Pad with the first link's past and the last link's future.
        const auto& first = std::get<MarkovPoint>(chain.front().point);
        const auto& last = std::get<MarkovPoint>(chain.back().point);
        MarkovPoint p;
        for (int i = 0; i < first.center; ++i) p.window.push_back(first.window[i]);
        p.center = static_cast<int>(p.window.size());
        p.window.insert(p.window.end(), concat.begin(), concat.end());
        int consumed = static_cast<int>(words.back().size());
        for (int i = last.center + consumed; i < static_cast<int>(last.window.size()); ++i)
            p.window.push_back(last.window[i]);
        p.phase = 0.0;
        out.start = p;
    }
    double t = 0.0;
    for (const auto& link : chain) {
        out.times.push_back(t);
        t += link.duration;
    }
    out.sup_error = 0.0;  // symbolic concatenation is exact
    return out;
}

ShadowResult shadow_chain_cat(const Model& model, const std::vector<ChainLink>& chain,
                              double epsilon, bool periodic) {
    const CatFlow& cat = model.cat();
    double kappa = cat.kappa();
    double delta = epsilon / (4.0 * kappa * kappa);
    double lam = cat.expansion();
    size_t n = chain.size();

    std::vector<std::array<double, 2>> x(n);
    std::vector<long> steps(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& p = std::get<CatPoint>(chain[i].point);
        if (p.tau != 0.0 || p.dir != +1)
            throw UsageError("chain link " + std::to_string(i) +
                             " must be a forward section point (tau = 0)");
        double d = chain[i].duration;
        if (std::fabs(d - std::round(d)) > 1e-9 || d < 1.0)
            throw UsageError("chain link durations must be whole roof multiples >= 1");
        x[i] = p.x;
        steps[i] = static_cast<long>(std::round(d));
    }

    // Junction errors in eigen-coordinates: A^{n_i} x_i vs x_{i+1}.
    size_t junctions = periodic ? n : n - 1;
    std::vector<std::array<double, 2>> err(n, {0.0, 0.0});
    for (size_t i = 0; i < junctions; ++i) {
        auto y = x[i];
        for (long k = 0; k < steps[i]; ++k) y = cat.apply_map(y);
        auto d = CatFlow::torus_delta(y, x[(i + 1) % n]);
        double gap = std::hypot(d[0], d[1]);
        if (gap > delta)
            throw UsageError("gap too large at junction " + std::to_string(i) + ": " +
                             std::to_string(gap) + " > delta " + std::to_string(delta));
        err[i] = cat.to_eigen(d);
        // delta(y, x_{i+1}): corrections satisfy xi_{i+1} = A^{n_i} xi_i - e_i.
    }

    // Bounded solution of xi_{i+1} = A^{n_i} xi_i - e_i: unstable component
    // summed backward, stable component forward. Periodic chains converge to
    // the cyclic fixed point by contraction.
    std::vector<double> xu(n, 0.0), xs(n, 0.0);
    int passes = periodic ? 4 : 1;
    for (int pass = 0; pass < passes; ++pass) {
        for (size_t ii = n; ii-- > 0;) {
            size_t next = (ii + 1) % n;
            if (!periodic && ii + 1 >= n) continue;
            double pw = std::pow(lam, -static_cast<double>(steps[ii]));
            xu[ii] = pw * (xu[next] + err[ii][0]);
        }
        for (size_t ii = 0; ii < n; ++ii) {
            size_t next = (ii + 1) % n;
            if (!periodic && ii + 1 >= n) continue;
            double pw = std::pow(lam, -static_cast<double>(steps[ii]));
            xs[next] = pw * xs[ii] - err[ii][1];
        }
    }

    ShadowResult out;
    std::vector<CatPoint> corrected(n);
    for (size_t i = 0; i < n; ++i) {
        auto d = cat.from_eigen(xu[i], xs[i]);
        CatPoint z = std::get<CatPoint>(chain[i].point);
        z.x[0] += d[0];
        z.x[1] += d[1];
        z.x[0] -= std::floor(z.x[0]);
        z.x[1] -= std::floor(z.x[1]);
        corrected[i] = z;
    }
    out.start = corrected[0];
    double t = 0.0;
    out.sup_error = 0.0;
    for (size_t i = 0; i < n; ++i) {
        out.times.push_back(t);
        t += chain[i].duration;
        out.sup_error =
            std::max(out.sup_error, cat.distance(corrected[i], std::get<CatPoint>(chain[i].point)));
    }
    if (out.sup_error > epsilon)
        throw Error("shadowing", "shadow exceeded epsilon: " + std::to_string(out.sup_error));
    return out;
}

}  // namespace

ShadowResult shadow_chain(const Model& model, const std::vector<ChainLink>& chain,
                          double epsilon, bool periodic) {
    if (chain.empty()) throw UsageError("empty chain");
    if (model.is_markov()) return shadow_chain_markov(model, chain, periodic);
    if (model.is_cat()) return shadow_chain_cat(model, chain, epsilon, periodic);
    throw UsageError("shadowing requires a Markov model or the linear toy flow");
}

std::vector<PeriodicOrbit> small_exponent_orbits(const MarkovModel& model, int n_max) {
    if (!model.has_flat_loop())
        throw PreconditionError("model " + model.name() + " has no flat loop");
    int flat = -1, hyp = -1;
    for (int f = 0; f < model.symbol_count() && flat < 0; ++f) {
        if (model.rate(f) != 0.0 || !model.edge(f, f)) continue;
        for (int h = 0; h < model.symbol_count(); ++h) {
            if (model.rate(h) == 0.0) continue;
            if (model.edge(f, h) && model.edge(h, f)) {
                flat = f;
                hyp = h;
                break;
            }
        }
    }
    if (flat < 0)
        throw PreconditionError(
            "model has no flat self-loop adjacent to a hyperbolic symbol");
    std::vector<PeriodicOrbit> out;
    for (int n = 1; n <= n_max; ++n) {
        std::vector<int> cycle(n, flat);
        cycle.push_back(hyp);
        out.push_back(make_orbit(model, cycle));
    }
    return out;
}

ExponentEndpoints exponent_endpoint_orbits(const MarkovModel& model, int max_len) {
    if (max_len < 2) throw UsageError("max_len must be at least 2");
    auto cycles = enumerate_cycles(model, max_len);
    ExponentEndpoints e;
    bool have_min = false;
    for (const auto& o : cycles) {
        if (o.chi > 0.0 && (!have_min || o.chi < e.chi_min)) {
            e.chi_min = o.chi;
            e.word_min = o.word;
            have_min = true;
        }
        if (o.chi > e.chi_max) {
            e.chi_max = o.chi;
            e.word_max = o.word;
        }
    }
    if (!have_min) throw PreconditionError("no hyperbolic cycle found");
    return e;
}

}  // namespace lab
