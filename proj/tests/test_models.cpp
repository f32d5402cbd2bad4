#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "lab/models.hpp"

using namespace lab;

TEST_CASE("catalog models construct") {
    for (const auto& name : catalog_names()) CHECK_NOTHROW(catalog_model(name));
    CHECK_THROWS_AS(catalog_model("NOPE"), UsageError);
}

TEST_CASE("markov validation rejects bad specs") {
    CHECK_THROWS_AS(make_markov_model({{"A", "B"}, {{1, 0}, {0, 1}}, {1, 1}, {-1, -1}}),
                    ConstructionError);
    CHECK_THROWS_AS(make_markov_model({{"A"}, {{1}}, {0.0}, {-1}}), ConstructionError);
    CHECK_THROWS_AS(make_markov_model({{"A"}, {{1}}, {1.0}, {0.5}}), ConstructionError);
}

TEST_CASE("flat loop detection") {
    CHECK_FALSE(catalog_model("M0").markov().has_flat_loop());
    CHECK_FALSE(catalog_model("M2").markov().has_flat_loop());
    CHECK(catalog_model("MFLAT").markov().has_flat_loop());
    CHECK(catalog_model("MRANK1").markov().has_flat_loop());
}

TEST_CASE("markov flow advances phase and shifts symbols") {
    Model m0 = catalog_model("M0");
    MarkovPoint p = m0.markov().periodic_point("H");
    MarkovPoint q = m0.markov().flow(p, 5.25);
    CHECK(q.phase == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(q.window[q.center] == 0);
    MarkovPoint z = m0.markov().flow(p, 0.0);
    CHECK(z.center == p.center);
    CHECK(z.phase == p.phase);
}

TEST_CASE("flow property on samples") {
    Model m2 = catalog_model("M2");
    MarkovPoint p = m2.markov().periodic_point("AAB", 0.5);
    for (double s : {0.3, 1.7}) {
        for (double t : {0.4, 2.1}) {
            Point a = m2.flow(m2.flow(p, s), t);
            Point b = m2.flow(p, s + t);
            CHECK(m2.distance(a, b) < 1e-9);
        }
    }
}

TEST_CASE("window exhaustion names required width") {
    Model m0 = catalog_model("M0");
    MarkovPoint p = m0.markov().periodic_point("H", 0.0, 4);
    CHECK_THROWS_AS(m0.markov().flow(p, 100.0), WindowExhausted);
    try {
        m0.markov().flow(p, 100.0);
    } catch (const WindowExhausted& e) {
        CHECK(e.required_window() == doctest::Approx(100.0));
        CHECK(e.code() == "window-exhausted");
    }
}

TEST_CASE("reverse is an involution and preserves curvature") {
    Model m2 = catalog_model("M2");
    MarkovPoint p = m2.markov().periodic_point("AB", 0.25);
    MarkovPoint r = m2.markov().reverse(p);
    MarkovPoint rr = m2.markov().reverse(r);
    CHECK(rr.center == p.center);
    CHECK(rr.phase == doctest::Approx(p.phase));
    CHECK(rr.window == p.window);
    CHECK(m2.markov().curvature_at(r) == m2.markov().curvature_at(p));

    MarkovPoint p0 = m2.markov().periodic_point("AB");  // phase 0 boundary case
    CHECK(m2.markov().reverse(m2.markov().reverse(p0)).phase == 0.0);
}

TEST_CASE("flow reversal identity") {
    Model m2 = catalog_model("M2");
    MarkovPoint p = m2.markov().periodic_point("AAB", 0.5);
    for (double t : {0.3, 1.25, 4.0}) {
        Point a = m2.flow(m2.reverse(p), t);
        Point b = m2.reverse(m2.flow(p, -t));
        CHECK(m2.distance(a, b) < 1e-9);
    }
}

TEST_CASE("flat orbit stays flat") {
    Model mr = catalog_model("MRANK1");
    MarkovPoint p = mr.markov().periodic_point("F");
    for (double t : {0.0, 1.5, 17.25}) CHECK(mr.curvature_at(mr.markov().flow(p, t)) == 0.0);
}

TEST_CASE("markov distance axioms") {
    Model m2 = catalog_model("M2");
    MarkovPoint p = m2.markov().periodic_point("AB", 0.25);
    MarkovPoint q = m2.markov().periodic_point("BA", 0.75);
    CHECK(m2.distance(p, p) == 0.0);
    CHECK(m2.distance(p, q) == doctest::Approx(m2.distance(q, p)));
    CHECK(m2.distance(p, q) > 0.0);
}

TEST_CASE("surface geodesics conserve speed and Clairaut") {
    // Slowly flaring profile keeps the Clairaut constant well conditioned
    // (its condition number is f(r)^2) over the whole integration.
    SurfaceOfRevolution surf(1.0, 4.0, 0.5);
    SurfacePoint p = surf.unit_point(0.3, 0.1, 0.8);
    double c0 = surf.clairaut(p);
    SurfacePoint q = p;
    for (int i = 0; i < 12; ++i) {
        q = surf.flow(q, 2.0);
        double f2 = surf.profile(q.r) * surf.profile(q.r);
        CHECK(std::fabs(surf.speed(q) - 1.0) < 1e-8);
        CHECK(std::fabs(surf.clairaut(q) - c0) < 1e-8 * std::max(1.0, f2));
    }
}

TEST_CASE("surface flow round trip") {
    // Forward-then-backward error grows with the hyperbolicity exponent of
    // the stretch covered; the bound reflects e^{2 rate t} amplification.
    SurfaceOfRevolution surf(1.0, 4.0, 0.5);
    SurfacePoint p = surf.unit_point(-0.2, 0.4, 1.1);
    SurfacePoint q = surf.flow(surf.flow(p, 7.0), -7.0);
    CHECK(std::fabs(q.r - p.r) < 1e-6);
    CHECK(std::fabs(q.theta - p.theta) < 1e-6);
    CHECK(std::fabs(q.dr - p.dr) < 1e-6);
}

TEST_CASE("surface curvature is nonpositive") {
    SurfaceOfRevolution surf(1.0, 2.0, 1.0);
    for (double r : {-3.0, -0.5, 0.0, 0.5, 3.0}) CHECK(surf.curvature(r) <= 0.0);
}

TEST_CASE("cat flow expansion along the unstable direction") {
    CatFlow cat;
    double lam = cat.expansion();
    CHECK(lam == doctest::Approx((3.0 + std::sqrt(5.0)) / 2.0));
    auto eu = cat.unstable_dir();
    CatPoint p{{0.3, 0.7}, 0.0, +1};
    double eps = 1e-6;
    CatPoint q{{0.3 + eps * eu[0], 0.7 + eps * eu[1]}, 0.0, +1};
    double d0 = CatFlow::torus_distance(p.x, q.x);
    CatPoint p1 = cat.flow(p, 1.0);
    CatPoint q1 = cat.flow(q, 1.0);
    double d1 = CatFlow::torus_distance(p1.x, q1.x);
    CHECK(d1 / d0 == doctest::Approx(lam).epsilon(1e-6));
}

TEST_CASE("cat map inverse and flow reversal") {
    CatFlow cat;
    std::array<double, 2> x{0.31, 0.62};
    auto y = cat.apply_map_inverse(cat.apply_map(x));
    CHECK(y[0] == doctest::Approx(x[0]));
    CHECK(y[1] == doctest::Approx(x[1]));

    CatPoint p{{0.2, 0.9}, 0.4, +1};
    CatPoint a = cat.flow(cat.reverse(p), 1.3);
    CatPoint b = cat.reverse(cat.flow(p, -1.3));
    CHECK(cat.distance(a, b) < 1e-12);
    CatPoint rr = cat.reverse(cat.reverse(p));
    CHECK(rr.dir == p.dir);
    CHECK(rr.tau == p.tau);
}

TEST_CASE("cat bracket lands on both leaves") {
    CatFlow cat;
    CatPoint w1{{0.30, 0.40}, 0.0, +1};
    CatPoint w2{{0.31, 0.39}, 0.0, +1};
    CatPoint z = cat.bracket(w1, w2);
    auto d1 = cat.to_eigen(CatFlow::torus_delta(w1.x, z.x));
    auto d2 = cat.to_eigen(CatFlow::torus_delta(w2.x, z.x));
    CHECK(std::fabs(d1[1]) < 1e-14);  // unstable leaf of w1
    CHECK(std::fabs(d2[0]) < 1e-14);  // stable leaf of w2
    CHECK(cat.kappa() >= 1.0);
    // Lipschitz bounds of the local product structure.
    double d = cat.distance(w1, w2);
    double du = cat.expansion() * std::fabs(d1[0] - 0.0);
    CHECK(du <= cat.kappa() * d + 1e-12);
}

TEST_CASE("model kind mismatch is rejected") {
    Model m0 = catalog_model("M0");
    Model cat = catalog_model("CAT");
    MarkovPoint p = m0.markov().periodic_point("H");
    CatPoint c{{0.1, 0.2}, 0.0, +1};
    CHECK_THROWS_AS(m0.distance(Point(p), Point(c)), UsageError);
    CHECK_THROWS_AS(cat.markov(), UsageError);
}

TEST_CASE("model files load") {
    const char* path = "test_model_tmp.json";
    {
        std::ofstream out(path);
        out << R"({"kind":"markov-curvature","name":"demo",
                   "alphabet":["X","Y"],
                   "adjacency":[[1,1],[1,1]],
                   "roofs":{"X":1.0,"Y":2.0},
                   "curvatures":{"X":-1.0,"Y":0.0}})";
    }
    Model m = load_model_file(path);
    CHECK(m.is_markov());
    CHECK(m.markov().roof(1) == 2.0);
    CHECK(m.markov().has_flat_loop());
    std::remove(path);
    CHECK_THROWS_AS(load_model_file("missing_file.json"), UsageError);
}
