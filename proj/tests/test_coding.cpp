#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lab/markov_coding.hpp"

using namespace lab;

namespace {

std::vector<std::vector<CatPoint>> seed_orbits() {
    return {
        {CatPoint{{0.0, 0.0}, 0.0, +1}},
        {CatPoint{{0.2, 0.4}, 0.0, +1}, CatPoint{{0.8, 0.6}, 0.0, +1}},
    };
}

constexpr double kAlpha = 0.08;
constexpr int kSpan = 14;

}  // namespace

TEST_CASE("seed witnesses combine orbits and connecting segments") {
    CatFlow cat;
    std::vector<int> owner;
    auto w = seed_witnesses(cat, seed_orbits(), kSpan, &owner);
    REQUIRE(w.size() == owner.size());
    CHECK(w.size() == 3 + 2 * (2 * kSpan + 1));
    int orbit_points = 0, connectors = 0;
    for (int o : owner) (o >= 0 ? orbit_points : connectors)++;
    CHECK(orbit_points == 3);
    CHECK(connectors == static_cast<int>(w.size()) - 3);
    for (const auto& p : w) CHECK(p.tau == 0.0);
}

TEST_CASE("cross-section rectangles are disjoint with positive margin") {
    CatFlow cat;
    CrossSection sec = build_cross_section(cat, seed_orbits(), kSpan, kAlpha);
    CHECK(sec.margin > 0.0);
    CHECK(sec.alpha_rect == kAlpha);
    REQUIRE(!sec.rectangles.empty());
    for (const auto& r : sec.rectangles) {
        CHECK(r.ru > 0.0);
        CHECK(r.rs > 0.0);
    }
    // Every witness is located in its assigned rectangle and in no other.
    for (std::size_t i = 0; i < sec.witnesses.size(); ++i)
        CHECK(locate(cat, sec, sec.witnesses[i]) == sec.witness_rect[i]);
}

TEST_CASE("cross-section rejects invalid inputs") {
    CatFlow cat;
    CHECK_THROWS_AS(build_cross_section(cat, seed_orbits(), kSpan, 0.0), UsageError);
    CHECK_THROWS_AS(build_cross_section(cat, {}, kSpan, kAlpha), UsageError);
    std::vector<std::vector<CatPoint>> off_section{{CatPoint{{0.1, 0.1}, 0.3, +1}}};
    CHECK_THROWS_AS(build_cross_section(cat, off_section, kSpan, kAlpha), UsageError);
}

TEST_CASE("first return of the section map") {
    CatFlow cat;
    CrossSection sec = build_cross_section(cat, seed_orbits(), kSpan, kAlpha);
    // Witness orbit points return to rectangles; a generic far point exits.
    for (std::size_t i = 0; i < sec.witnesses.size(); ++i) {
        if (sec.witness_orbit[i] < 0) continue;
        FirstReturnResult r = first_return(cat, sec, sec.witnesses[i]);
        CHECK(r.return_time == 1.0);
        CHECK_FALSE(r.exited);
        CHECK(r.rectangle >= 0);
    }
    FirstReturnResult out = first_return(cat, sec, CatPoint{{0.52, 0.11}, 0.0, +1});
    CHECK(out.return_time == 1.0);
}

TEST_CASE("bracket commutes with the section map") {
    CatFlow cat;
    CatPoint base{{0.37, 0.58}, 0.0, +1};
    for (int i = 0; i < 100; ++i) {
        double du = 0.01 * std::sin(3.7 * i + 0.4);
        double ds = 0.01 * std::cos(2.3 * i + 1.1);
        auto off = cat.from_eigen(du, ds);
        CatPoint q{{base.x[0] + off[0], base.x[1] + off[1]}, 0.0, +1};
        q.x[0] -= std::floor(q.x[0]);
        q.x[1] -= std::floor(q.x[1]);
        CatPoint lhs = cat.flow(cat.bracket(base, q), 1.0);
        CatPoint rhs = cat.bracket(cat.flow(base, 1.0), cat.flow(q, 1.0));
        CHECK(CatFlow::torus_distance(lhs.x, rhs.x) < 1e-10);
    }
}

TEST_CASE("coding constants satisfy the three inequalities strictly") {
    CatFlow cat;
    CrossSection sec = build_cross_section(cat, seed_orbits(), kSpan, kAlpha);
    CodingConstants c = choose_constants(cat, sec);
    CHECK(c.valid());
    CHECK(c.beta > 1.0);
    CHECK(c.gamma == doctest::Approx(std::log(cat.expansion())));
    CHECK(c.C * std::exp(-c.gamma * c.N1) < 0.5);
    CHECK(c.epsilon < c.Delta / (2.0 * (1.0 + c.beta * c.beta * c.kappa * c.kappa)));
    CHECK(c.epsilon * (1.0 + 2.0 * c.beta * c.beta * c.kappa * c.kappa) < c.Delta);
    CHECK(c.N0 > std::max(c.N1, c.N2) - 1);
}

TEST_CASE("refinement cells shrink geometrically") {
    CatFlow cat;
    CrossSection sec = build_cross_section(cat, seed_orbits(), kSpan, kAlpha);
    CodingConstants c = choose_constants(cat, sec);
    Refinement r0 = refine(cat, sec, 0);
    double prev = r0.max_diameter;
    for (int n : {1, 2, c.N2}) {
        Refinement rn = refine(cat, sec, n);
        CHECK(rn.max_diameter <= prev + 1e-15);
        CHECK(rn.cells.size() >= r0.cells.size());
        prev = rn.max_diameter;
    }
    CHECK(refine(cat, sec, c.N2).max_diameter < c.epsilon);
    // Transition graph stays consistent: every cell has <= |cells| successors.
    Refinement rn = refine(cat, sec, c.N2);
    REQUIRE(rn.transitions.size() == rn.cells.size());
}

TEST_CASE("shadowing a constant code returns the fixed point") {
    CatFlow cat;
    CrossSection sec = build_cross_section(cat, seed_orbits(), kSpan, kAlpha);
    CodingConstants c = choose_constants(cat, sec);
    Refinement ref = refine(cat, sec, c.N0);
    int fixed_witness = -1;
    for (std::size_t i = 0; i < sec.witnesses.size(); ++i)
        if (sec.witness_orbit[i] == 0) fixed_witness = static_cast<int>(i);
    REQUIRE(fixed_witness >= 0);
    int cell = -1;
    for (std::size_t ci = 0; ci < ref.cells.size(); ++ci)
        for (int w : ref.cells[ci].witnesses)
            if (w == fixed_witness) cell = static_cast<int>(ci);
    REQUIRE(cell >= 0);
    std::vector<int> code(2 * (c.N0 + 2) + 1, cell);
    ShadowedPoint sp = shadow_sequence(cat, sec, ref, code, c);
    CHECK(sp.certificate.halving_ok);
    CHECK(sp.certificate.within_bound);
    CHECK(CatFlow::torus_distance(sp.point.x, {0.0, 0.0}) < 1e-9);
}

TEST_CASE("shadowing the period-two code returns the periodic orbit") {
    CatFlow cat;
    CrossSection sec = build_cross_section(cat, seed_orbits(), kSpan, kAlpha);
    CodingConstants c = choose_constants(cat, sec);
    Refinement ref = refine(cat, sec, c.N0);
    // Cells of the two periodic witnesses, alternating.
    int w0 = -1, w1 = -1;
    for (std::size_t i = 0; i < sec.witnesses.size(); ++i) {
        if (sec.witness_orbit[i] != 1) continue;
        if (CatFlow::torus_distance(sec.witnesses[i].x, {0.2, 0.4}) < 1e-12) w0 = (int)i;
        if (CatFlow::torus_distance(sec.witnesses[i].x, {0.8, 0.6}) < 1e-12) w1 = (int)i;
    }
    REQUIRE(w0 >= 0);
    REQUIRE(w1 >= 0);
    auto cell_of = [&](int w) {
        for (std::size_t ci = 0; ci < ref.cells.size(); ++ci)
            for (int ww : ref.cells[ci].witnesses)
                if (ww == w) return static_cast<int>(ci);
        return -1;
    };
    int c0 = cell_of(w0), c1 = cell_of(w1);
    REQUIRE(c0 >= 0);
    REQUIRE(c1 >= 0);
    int m = c.N0 + 2;
    std::vector<int> code;
    for (int i = -m; i <= m; ++i) code.push_back(((i % 2) + 2) % 2 == 0 ? c0 : c1);
    ShadowedPoint sp = shadow_sequence(cat, sec, ref, code, c);
    CHECK(sp.certificate.halving_ok);
    CHECK(CatFlow::torus_distance(sp.point.x, {0.2, 0.4}) < 1e-9);
}

TEST_CASE("shadowing rejects non-admissible codes") {
    CatFlow cat;
    CrossSection sec = build_cross_section(cat, seed_orbits(), kSpan, kAlpha);
    CodingConstants c = choose_constants(cat, sec);
    Refinement ref = refine(cat, sec, c.N0);
    // A code that ignores the transition graph must be refused.
    bool found = false;
    for (std::size_t a = 0; a < ref.cells.size() && !found; ++a)
        for (std::size_t b = 0; b < ref.cells.size() && !found; ++b) {
            bool adj = false;
            for (int t : ref.transitions[a]) adj |= (t == static_cast<int>(b));
            if (adj) continue;
            std::vector<int> code(2 * (c.N0 + 2) + 1, static_cast<int>(a));
            code[c.N0 + 3] = static_cast<int>(b);
            CHECK_THROWS_AS(shadow_sequence(cat, sec, ref, code, c), Error);
            found = true;
        }
    CHECK(found);
}

TEST_CASE("envelope build verifies the coding on sampled codes") {
    CatFlow cat;
    EnvelopeReport rep = build_envelope(cat, seed_orbits(), 1.2, kAlpha, 60, 12345);
    CHECK(rep.ok);
    CHECK(rep.failure.empty());
    CHECK(rep.samples == 60);
    CHECK(rep.shadow_failures == 0);
    CHECK(rep.recode_failures == 0);
    CHECK(rep.bracket_failures == 0);
    CHECK(rep.seed_contained);
    CHECK(rep.inside_U);
    CHECK(rep.max_seed_error < 1e-9);
    CHECK(!rep.scc_cells.empty());

    // Determinism: identical seeds give identical reports.
    EnvelopeReport rep2 = build_envelope(cat, seed_orbits(), 1.2, kAlpha, 60, 12345);
    CHECK(rep.max_U_distance == rep2.max_U_distance);
    CHECK(rep.refinement.cells.size() == rep2.refinement.cells.size());
    CHECK(rep.scc_cells == rep2.scc_cells);
}

TEST_CASE("envelope reports failure when U is too small") {
    CatFlow cat;
    EnvelopeReport rep = build_envelope(cat, seed_orbits(), 1e-4, kAlpha, 20, 7);
    CHECK_FALSE(rep.ok);
    CHECK_FALSE(rep.inside_U);
    CHECK(!rep.failure.empty());
}

TEST_CASE("symbolic bracket splices past and future") {
    Model m2 = catalog_model("M2");
    const MarkovModel& m = m2.markov();
    MarkovPoint p = m.periodic_point("AB", 0.25);   // center A
    MarkovPoint q = m.periodic_point("AA", 0.75);   // center A
    MarkovPoint z = markov_bracket(m, p, q);
    CHECK(z.phase == doctest::Approx(0.75));
    CHECK(z.window[z.center] == 0);
    // Past from p, future from q.
    CHECK(z.window[z.center - 1] == p.window[p.center - 1]);
    CHECK(z.window[z.center - 2] == p.window[p.center - 2]);
    CHECK(z.window[z.center + 1] == q.window[q.center + 1]);
    // Idempotence: bracketing a point with itself is the identity.
    MarkovPoint same = markov_bracket(m, p, p);
    CHECK(same.window == p.window);
    CHECK(same.phase == doctest::Approx(p.phase));

    MarkovPoint r = m.periodic_point("BA", 0.1);    // center B
    CHECK_THROWS_AS(markov_bracket(m, p, r), UsageError);
}
