#include "lab/markov_coding.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace lab {

bool CodingConstants::contraction_ok() const { return C * std::exp(-gamma * N1) < 0.5; }

bool CodingConstants::epsilon_ok() const {
    return epsilon > 0.0 && epsilon < Delta / (2.0 * (1.0 + beta * beta * kappa * kappa));
}

bool CodingConstants::containment_ok() const {
    return epsilon * (1.0 + 2.0 * beta * beta * kappa * kappa) < Delta;
}

std::vector<CatPoint> seed_witnesses(const CatFlow& cat,
                                     const std::vector<std::vector<CatPoint>>& orbits,
                                     int connector_span, std::vector<int>* orbit_of) {
    if (orbits.empty()) throw UsageError("empty seed");
    std::vector<CatPoint> out;
    std::vector<int> owner;
    for (size_t i = 0; i < orbits.size(); ++i) {
        if (orbits[i].empty()) throw UsageError("empty seed orbit");
        for (const auto& p : orbits[i]) {
            if (p.tau != 0.0) throw UsageError("seed points must lie on the tau = 0 section");
            out.push_back(p);
            owner.push_back(static_cast<int>(i));
        }
    }
    for (size_t a = 0; a < orbits.size(); ++a) {
        for (size_t b = 0; b < orbits.size(); ++b) {
            if (a == b) continue;
            CatPoint h = cat.bracket(orbits[a][0], orbits[b][0]);
            CatPoint q = h;
            for (int j = 0; j < connector_span; ++j) q.x = cat.apply_map_inverse(q.x);
            for (int j = -connector_span; j <= connector_span; ++j) {
                out.push_back(q);
                owner.push_back(-1);
                q.x = cat.apply_map(q.x);
            }
        }
    }
    if (orbit_of) *orbit_of = owner;
    return out;
}

namespace {

struct EigenDelta {
    double cu, cs;
};

EigenDelta eigen_delta(const CatFlow& cat, const CatPoint& from, const CatPoint& to) {
    auto c = cat.to_eigen(CatFlow::torus_delta(from.x, to.x));
    return {c[0], c[1]};
}

CatPoint offset_point(const CatFlow& cat, const CatPoint& base, double cu, double cs) {
    auto d = cat.from_eigen(cu, cs);
    CatPoint p = base;
    p.x[0] += d[0];
    p.x[1] += d[1];
    p.x[0] -= std::floor(p.x[0]);
    p.x[1] -= std::floor(p.x[1]);
    return p;
}

}  // namespace

CrossSection build_cross_section(const CatFlow& cat,
                                 const std::vector<std::vector<CatPoint>>& orbits,
                                 int connector_span, double alpha_rect) {
    if (alpha_rect <= 0.0) throw UsageError("alpha_rect must be positive");
    std::vector<int> owner;
    std::vector<CatPoint> witnesses = seed_witnesses(cat, orbits, connector_span, &owner);
    double lam = cat.expansion();

    size_t n = witnesses.size();
    CrossSection section;
    section.alpha_rect = alpha_rect;
    section.witnesses = witnesses;
    section.witness_orbit = owner;

    // Base half-widths start at alpha/6 and shrink until the merged clusters
    // meet the diameter cap and stay pairwise disjoint. Witnesses that are
    // genuinely close (connector tails converging to orbit points) always
    // merge; a sparse seed set therefore stabilizes after a few rounds.
    std::string last_failure = "empty seed set";
    for (double factor = 1.0; factor >= 1.0 / 64.0; factor *= 0.5) {
        double ru0 = factor * alpha_rect / (6.0 * lam);
        double rs0 = factor * alpha_rect / 6.0;

        std::vector<int> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int i) {
            return parent[i] == i ? i : parent[i] = find(parent[i]);
        };
        bool merged = true;
        while (merged) {
            merged = false;
            for (size_t i = 0; i < n; ++i) {
                for (size_t j = i + 1; j < n; ++j) {
                    if (find(i) == find(j)) continue;
                    auto d = eigen_delta(cat, witnesses[i], witnesses[j]);
                    if (std::fabs(d.cu) <= 3.0 * ru0 && std::fabs(d.cs) <= 3.0 * rs0) {
                        parent[find(j)] = find(i);
                        merged = true;
                    }
                }
            }
        }

        std::map<int, std::vector<int>> clusters;
        for (size_t i = 0; i < n; ++i) clusters[find(static_cast<int>(i))].push_back(i);

        section.rectangles.clear();
        section.witness_rect.assign(n, -1);
        bool ok = true;
        for (const auto& [root, members] : clusters) {
            // Extents measured relative to the first member (clusters are small).
            const CatPoint& base = witnesses[members[0]];
            double lo_u = 0.0, hi_u = 0.0, lo_s = 0.0, hi_s = 0.0;
            for (int m : members) {
                auto d = eigen_delta(cat, base, witnesses[m]);
                lo_u = std::min(lo_u, d.cu);
                hi_u = std::max(hi_u, d.cu);
                lo_s = std::min(lo_s, d.cs);
                hi_s = std::max(hi_s, d.cs);
            }
            SuRectangle r;
            r.id = static_cast<int>(section.rectangles.size());
            r.center = offset_point(cat, base, 0.5 * (lo_u + hi_u), 0.5 * (lo_s + hi_s));
            r.ru = 0.5 * (hi_u - lo_u) + ru0;
            r.rs = 0.5 * (hi_s - lo_s) + rs0;
            double diam = 2.0 * lam * r.ru + 2.0 * r.rs;
            if (diam > alpha_rect) {
                last_failure = "rectangle diameter " + std::to_string(diam) +
                               " exceeds alpha_rect";
                ok = false;
                break;
            }
            for (int m : members) section.witness_rect[m] = r.id;
            section.rectangles.push_back(r);
        }

        for (size_t i = 0; ok && i < section.rectangles.size(); ++i) {
            for (size_t j = i + 1; ok && j < section.rectangles.size(); ++j) {
                const auto& a = section.rectangles[i];
                const auto& b = section.rectangles[j];
                auto d = eigen_delta(cat, a.center, b.center);
                if (std::fabs(d.cu) < a.ru + b.ru && std::fabs(d.cs) < a.rs + b.rs) {
                    last_failure = "rectangles " + std::to_string(a.id) + " and " +
                                   std::to_string(b.id) + " overlap";
                    ok = false;
                }
            }
        }
        if (ok) {
            last_failure.clear();
            break;
        }
    }
    if (!last_failure.empty())
        throw ConstructionError(last_failure +
                                "; lower connector_span or raise alpha_rect");

    section.margin = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
        const auto& r = section.rectangles[section.witness_rect[i]];
        auto d = eigen_delta(cat, r.center, witnesses[i]);
        double mu = lam * (r.ru - std::fabs(d.cu));
        double ms = r.rs - std::fabs(d.cs);
        section.margin = std::min({section.margin, mu, ms});
    }
    if (!(section.margin > 0.0))
        throw ConstructionError("seed touches a rectangle boundary (Delta = 0)");
    return section;
}

int locate(const CatFlow& cat, const CrossSection& section, const CatPoint& p) {
    for (const auto& r : section.rectangles) {
        auto d = eigen_delta(cat, r.center, p);
        if (std::fabs(d.cu) <= r.ru + 1e-12 && std::fabs(d.cs) <= r.rs + 1e-12) return r.id;
    }
    return -1;
}

FirstReturnResult first_return(const CatFlow& cat, const CrossSection& section,
                               const CatPoint& p) {
    FirstReturnResult out;
    out.image = p;
    out.image.x = cat.apply_map(p.x);
    out.return_time = 1.0;  // constant roof
    out.rectangle = locate(cat, section, out.image);
    out.exited = out.rectangle < 0;
    return out;
}

CodingConstants choose_constants(const CatFlow& cat, const CrossSection& section,
                                 double beta) {
    CodingConstants k;
    k.beta = beta;
    k.kappa = cat.kappa();
    k.Delta = section.margin;

    // Return-map contraction measured on a stable-related pair.
    CatPoint v = section.witnesses.front();
    CatPoint w = offset_point(cat, v, 0.0, 1e-3);
    double d0 = cat.distance(v, w);
    k.gamma = std::log(cat.expansion());
    k.C = 1.0;
    CatPoint a = v, b = w;
    for (int n = 1; n <= 8; ++n) {
        a.x = cat.apply_map(a.x);
        b.x = cat.apply_map(b.x);
        double dn = cat.distance(a, b);
        k.C = std::max(k.C, dn * std::exp(k.gamma * n) / d0);
    }

    k.epsilon = k.Delta / (4.0 * (1.0 + beta * beta * k.kappa * k.kappa));
    k.N1 = 1;
    while (!(k.C * std::exp(-k.gamma * k.N1) < 0.5)) ++k.N1;
    double lam = cat.expansion();
    double diam0 = 0.0;
    for (const auto& r : section.rectangles)
        diam0 = std::max(diam0, 2.0 * lam * r.ru + 2.0 * r.rs);
    k.N2 = 1;
    while (diam0 * std::pow(lam, -k.N2) >= k.epsilon) ++k.N2;
    k.N0 = std::max(k.N1, k.N2) + 1;
    return k;
}

namespace {

std::array<double, 2> iterate_map(const CatFlow& cat, std::array<double, 2> x, int n) {
    for (int i = 0; i < n; ++i) x = cat.apply_map(x);
    for (int i = 0; i > n; --i) x = cat.apply_map_inverse(x);
    return x;
}

}  // namespace

Refinement refine(const CatFlow& cat, const CrossSection& section, int N) {
    if (N < 0) throw UsageError("refinement depth must be nonnegative");
    Refinement out;
    out.N = N;
    double lam = cat.expansion();

    // Witness itineraries over [-N-1, N+1]; the extra column supplies the
    // one-step transition graph.
    int span = N + 1;
    std::map<std::vector<int>, int> cell_of;
    std::vector<std::vector<int>> extended;
    for (size_t wi = 0; wi < section.witnesses.size(); ++wi) {
        std::vector<int> itin;
        bool complete = true;
        for (int j = -span; j <= span; ++j) {
            CatPoint q = section.witnesses[wi];
            q.x = iterate_map(cat, q.x, j);
            int r = locate(cat, section, q);
            if (r < 0) complete = false;
            itin.push_back(r);
        }
        if (!complete) continue;
        std::vector<int> window(itin.begin() + 1, itin.end() - 1);  // [-N, N]
        auto [it, inserted] = cell_of.try_emplace(window, static_cast<int>(out.cells.size()));
        if (inserted) {
            RefinedCell cell;
            cell.itinerary = window;
            out.cells.push_back(cell);
            extended.push_back({});
        }
        out.cells[it->second].witnesses.push_back(static_cast<int>(wi));
        extended[it->second] = itin;
    }
    for (auto& cell : out.cells) {
        const auto& past = section.rectangles[cell.itinerary.front()];
        const auto& future = section.rectangles[cell.itinerary.back()];
        cell.diameter_bound =
            std::pow(lam, -N) * (2.0 * lam * past.ru + 2.0 * future.rs);
        out.max_diameter = std::max(out.max_diameter, cell.diameter_bound);
    }
    out.transitions.assign(out.cells.size(), {});
    for (size_t c = 0; c < out.cells.size(); ++c) {
        std::vector<int> shifted(extended[c].begin() + 2, extended[c].end());  // [-N+1, N+1]
        auto it = cell_of.find(shifted);
        if (it != cell_of.end()) out.transitions[c].push_back(it->second);
    }
    // Transitions contributed by every witness, not just cell representatives.
    for (size_t c = 0; c < out.cells.size(); ++c) {
        for (int wi : out.cells[c].witnesses) {
            std::vector<int> itin;
            bool complete = true;
            for (int j = -N + 1; j <= N + 1 && complete; ++j) {
                CatPoint q = section.witnesses[wi];
                q.x = iterate_map(cat, q.x, j);
                int r = locate(cat, section, q);
                if (r < 0) complete = false;
                itin.push_back(r);
            }
            if (!complete) continue;
            auto it = cell_of.find(itin);
            if (it != cell_of.end() &&
                std::find(out.transitions[c].begin(), out.transitions[c].end(), it->second) ==
                    out.transitions[c].end())
                out.transitions[c].push_back(it->second);
        }
        std::sort(out.transitions[c].begin(), out.transitions[c].end());
    }
    return out;
}

ShadowedPoint shadow_sequence(const CatFlow& cat, const CrossSection& section,
                              const Refinement& refinement, const std::vector<int>& code,
                              const CodingConstants& constants) {
    if (!constants.valid())
        throw PreconditionError("coding constants violate their invariants");
    if (code.empty() || code.size() % 2 == 0)
        throw UsageError("code must have odd length (a centered window)");
    for (int c : code)
        if (c < 0 || c >= static_cast<int>(refinement.cells.size()))
            throw UsageError("code refers to a cell outside the refinement");
    for (size_t i = 0; i + 1 < code.size(); ++i) {
        const auto& next = refinement.transitions[code[i]];
        if (std::find(next.begin(), next.end(), code[i + 1]) == next.end())
            throw UsageError("code is not admissible at position " + std::to_string(i));
    }

    int m = static_cast<int>(code.size()) / 2;
    int stride = constants.N1;
    double lam = cat.expansion();
    auto rep = [&](int i) {
        const RefinedCell& cell = refinement.cells[code[m + i]];
        return section.witnesses[cell.witnesses.front()];
    };

    ShadowedPoint out;
    out.certificate.halving_ok = true;

    // Forward w-recursion: graft each stride witness's unstable coordinate
    // onto the accumulated past; pullbacks of the grafts form the Cauchy sum.
    double zu = 0.0;
    {
        CatPoint w = rep(0);
        for (int n = 1; n * stride <= m; ++n) {
            w.x = iterate_map(cat, w.x, stride);
            CatPoint target = rep(n * stride);
            double cu = eigen_delta(cat, w, target).cu;
            for (int j = 1; j <= n; ++j) {
                double dj = lam * std::fabs(cu) * std::pow(lam, -double(j) * stride);
                double ratio = dj * std::pow(2.0, j) / constants.epsilon;
                out.certificate.worst_step = std::max(out.certificate.worst_step, ratio);
                if (ratio >= 1.0) out.certificate.halving_ok = false;
            }
            w = offset_point(cat, w, cu, 0.0);  // bracket(G(w_{n-1}), u_n)
            zu += cu * std::pow(lam, -double(n) * stride);
        }
    }
    // Backward v-recursion, mirrored along the stable direction.
    double zs = 0.0;
    {
        CatPoint v = rep(0);
        for (int n = 1; n * stride <= m; ++n) {
            v.x = iterate_map(cat, v.x, -stride);
            CatPoint target = rep(-n * stride);
            double cs = eigen_delta(cat, v, target).cs;
            for (int j = 1; j <= n; ++j) {
                double dj = std::fabs(cs) * std::pow(lam, -double(j) * stride);
                double ratio = dj * std::pow(2.0, j) / constants.epsilon;
                out.certificate.worst_step = std::max(out.certificate.worst_step, ratio);
                if (ratio >= 1.0) out.certificate.halving_ok = false;
            }
            v = offset_point(cat, v, 0.0, cs);  // bracket(u_{-n}, G^{-1}(v_{n-1}))
            zs += cs * std::pow(lam, -double(n) * stride);
        }
    }

    // psi = [v_inf, w_inf]: unstable coordinate from the forward limit,
    // stable from the backward one, both relative to the center witness.
    out.point = offset_point(cat, rep(0), zu, zs);

    for (int n = -m / stride; n * stride <= m; ++n) {
        if (n * stride < -m) continue;
        CatPoint q = out.point;
        q.x = iterate_map(cat, q.x, n * stride);
        out.certificate.sup_error =
            std::max(out.certificate.sup_error, cat.distance(q, rep(n * stride)));
    }
    double bound = constants.epsilon *
                   (1.0 + 2.0 * constants.beta * constants.beta * constants.kappa *
                              constants.kappa);
    out.certificate.within_bound = out.certificate.sup_error <= bound;
    return out;
}

namespace {

// Strongly connected components (iterative Tarjan).
std::vector<int> scc_ids(const std::vector<std::vector<int>>& adj) {
    int n = static_cast<int>(adj.size());
    std::vector<int> comp(n, -1), low(n), num(n, -1), stack;
    std::vector<char> on(n, 0);
    int counter = 0, comps = 0;
    std::function<void(int)> dfs = [&](int v) {
        num[v] = low[v] = counter++;
        stack.push_back(v);
        on[v] = 1;
        for (int w : adj[v]) {
            if (num[w] < 0) {
                dfs(w);
                low[v] = std::min(low[v], low[w]);
            } else if (on[w]) {
                low[v] = std::min(low[v], num[w]);
            }
        }
        if (low[v] == num[v]) {
            while (true) {
                int w = stack.back();
                stack.pop_back();
                on[w] = 0;
                comp[w] = comps;
                if (w == v) break;
            }
            ++comps;
        }
    };
    for (int v = 0; v < n; ++v)
        if (num[v] < 0) dfs(v);
    return comp;
}

}  // namespace

EnvelopeReport build_envelope(const CatFlow& cat,
                              const std::vector<std::vector<CatPoint>>& orbits,
                              double U_radius, double alpha_rect, int samples,
                              std::uint64_t rng_seed) {
    EnvelopeReport rep;
    rep.section = build_cross_section(cat, orbits, 14, alpha_rect);
    rep.constants = choose_constants(cat, rep.section);
    if (!rep.constants.valid()) {
        rep.failure = "constants violate their inequalities";
        return rep;
    }
    rep.refinement = refine(cat, rep.section, rep.constants.N0);

    // Transitive component containing the seed (spectral-decomposition
    // stand-in).
    auto comp = scc_ids(rep.refinement.transitions);
    int seed_comp = -1;
    for (size_t c = 0; c < rep.refinement.cells.size() && seed_comp < 0; ++c)
        for (int wi : rep.refinement.cells[c].witnesses)
            if (rep.section.witness_orbit[wi] >= 0) {
                seed_comp = comp[c];
                break;
            }
    std::vector<char> in_scc(rep.refinement.cells.size(), 0);
    for (size_t c = 0; c < rep.refinement.cells.size(); ++c)
        if (comp[c] == seed_comp) {
            in_scc[c] = 1;
            rep.scc_cells.push_back(static_cast<int>(c));
        }
    if (rep.scc_cells.empty()) {
        rep.failure = "seed component empty";
        return rep;
    }
    for (size_t c = 0; c < rep.refinement.cells.size(); ++c) {
        for (int wi : rep.refinement.cells[c].witnesses)
            if (rep.section.witness_orbit[wi] >= 0 && !in_scc[c]) {
                rep.failure = "a seed cell fell outside the transitive component";
                return rep;
            }
    }

    int m = rep.constants.N0 + 2;
    auto walk_code = [&](std::mt19937_64& rng) {
        std::vector<int> code;
        std::uniform_int_distribution<size_t> pick(0, rep.scc_cells.size() - 1);
        int cur = rep.scc_cells[pick(rng)];
        code.push_back(cur);
        while (static_cast<int>(code.size()) < 2 * m + 1) {
            std::vector<int> next;
            for (int t : rep.refinement.transitions[cur])
                if (in_scc[t]) next.push_back(t);
            if (next.empty()) return std::vector<int>{};
            std::uniform_int_distribution<size_t> step(0, next.size() - 1);
            cur = next[step(rng)];
            code.push_back(cur);
        }
        return code;
    };

    std::mt19937_64 rng(rng_seed);
    rep.samples = samples;
    std::vector<std::vector<int>> sampled_codes;
    std::vector<CatPoint> sampled_points;
    for (int s = 0; s < samples; ++s) {
        auto code = walk_code(rng);
        if (code.empty()) {
            ++rep.shadow_failures;
            continue;
        }
        ShadowedPoint sp = shadow_sequence(cat, rep.section, rep.refinement, code,
                                           rep.constants);
        if (!sp.certificate.halving_ok || !sp.certificate.within_bound)
            ++rep.shadow_failures;
        bool recode_ok = true;
        for (int i = -m; i <= m; ++i) {
            CatPoint q = sp.point;
            q.x = iterate_map(cat, q.x, i);
            int r = locate(cat, rep.section, q);
            int expected = rep.refinement.cells[code[m + i]].itinerary[rep.refinement.N];
            if (r != expected) recode_ok = false;
        }
        if (!recode_ok) ++rep.recode_failures;
        double du = std::numeric_limits<double>::infinity();
        for (const auto& orbit : orbits)
            for (const auto& p : orbit) du = std::min(du, cat.distance(sp.point, p));
        rep.max_U_distance = std::max(rep.max_U_distance, du);
        sampled_codes.push_back(code);
        sampled_points.push_back(sp.point);
    }
    rep.inside_U = rep.max_U_distance <= U_radius;

    // Product structure: splicing the rectangle itineraries of two samples
    // sharing a center rectangle must re-code the bracket of their images.
    int checked = 0;
    for (size_t a = 0; a < sampled_codes.size() && checked < 40; ++a) {
        for (size_t b = a + 1; b < sampled_codes.size() && checked < 40; ++b) {
            int ra = rep.refinement.cells[sampled_codes[a][m]].itinerary[rep.refinement.N];
            int rb = rep.refinement.cells[sampled_codes[b][m]].itinerary[rep.refinement.N];
            if (ra != rb) continue;
            ++checked;
            CatPoint z = cat.bracket(sampled_points[a], sampled_points[b]);
            bool ok = true;
            for (int i = -m; i <= m; ++i) {
                CatPoint q = z;
                q.x = iterate_map(cat, q.x, i);
                const auto& codes = (i < 0) ? sampled_codes[a] : sampled_codes[b];
                int expected = rep.refinement.cells[codes[m + i]].itinerary[rep.refinement.N];
                if (locate(cat, rep.section, q) != expected) ok = false;
            }
            if (!ok) ++rep.bracket_failures;
        }
    }

    // Seed containment: each orbit's own code must shadow back onto it.
    rep.seed_contained = true;
    for (const auto& orbit : orbits) {
        const CatPoint& p = orbit[0];
        std::vector<int> code;
        bool found_all = true;
        for (int i = -m; i <= m && found_all; ++i) {
            std::vector<int> window;
            for (int j = -rep.refinement.N; j <= rep.refinement.N; ++j) {
                CatPoint q = p;
                q.x = iterate_map(cat, q.x, i + j);
                window.push_back(locate(cat, rep.section, q));
            }
            int cell = -1;
            for (size_t c = 0; c < rep.refinement.cells.size(); ++c)
                if (rep.refinement.cells[c].itinerary == window) cell = static_cast<int>(c);
            if (cell < 0)
                found_all = false;
            else
                code.push_back(cell);
        }
        if (!found_all) {
            rep.seed_contained = false;
            continue;
        }
        ShadowedPoint sp = shadow_sequence(cat, rep.section, rep.refinement, code,
                                           rep.constants);
        double err = cat.distance(sp.point, p);
        rep.max_seed_error = std::max(rep.max_seed_error, err);
        if (err > 1e-9) rep.seed_contained = false;
    }

    rep.ok = rep.shadow_failures == 0 && rep.recode_failures == 0 &&
             rep.bracket_failures == 0 && rep.seed_contained && rep.inside_U;
    if (!rep.ok && rep.failure.empty()) {
        if (rep.shadow_failures) rep.failure = "shadowing certificate failures";
        else if (rep.recode_failures) rep.failure = "re-coding mismatches";
        else if (rep.bracket_failures) rep.failure = "bracket closure mismatches";
        else if (!rep.seed_contained) rep.failure = "seed not contained in the envelope";
        else rep.failure = "envelope escapes U";
    }
    return rep;
}

MarkovPoint markov_bracket(const MarkovModel& model, const MarkovPoint& p,
                           const MarkovPoint& q) {
    if (p.window[p.center] != q.window[q.center])
        throw UsageError("bracket requires matching center symbols");
    MarkovPoint out;
    for (int i = 0; i < p.center; ++i) out.window.push_back(p.window[i]);
    out.center = static_cast<int>(out.window.size());
    for (int i = q.center; i < static_cast<int>(q.window.size()); ++i)
        out.window.push_back(q.window[i]);
    out.phase = q.phase;
    (void)model;
    return out;
}

}  // namespace lab
