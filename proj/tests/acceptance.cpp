// Acceptance gate: one PASS/FAIL line per criterion, exit code = number of
// failed criteria. Tolerances are pinned here on purpose.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lab/jacobi.hpp"
#include "lab/markov_coding.hpp"
#include "lab/models.hpp"
#include "lab/orbit_search.hpp"
#include "lab/thermo_spectra.hpp"

using namespace lab;

namespace {

int g_failures = 0;

void report(int id, bool ok, const std::string& what) {
    std::printf("%s criterion %2d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    if (!ok) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void criterion_1() {
    Model m0 = catalog_model("M0");
    MarkovPoint p = m0.markov().periodic_point("H");
    bool ok = true;
    double worst = 0.0;
    for (double t : {1.0, 5.0, 20.0}) {
        JacobiPair out = propagate_jacobi(m0, p, {0.0, 1.0, 0.0}, t);
        double rel = std::fabs(out.j - std::sinh(t) * std::exp(-out.logscale)) /
                     (std::sinh(t) * std::exp(-out.logscale));
        worst = std::max(worst, rel);
        ok = ok && rel < 1e-10;
    }
    Model m2 = catalog_model("M2");
    MarkovPoint q = m2.markov().periodic_point("ABB", 0.25);
    double drift = wronskian_drift(m2, q, 100.0);
    ok = ok && drift < 1e-10;
    report(1, ok, "Jacobi closed forms: max sinh rel err " + fmt(worst) +
                      ", Wronskian drift " + fmt(drift) + " over t=100");
}

void criterion_2() {
    Model m0 = catalog_model("M0");
    CurvatureEstimate k0 = unstable_curvature(m0, m0.markov().periodic_point("H"));
    bool ok = std::fabs(k0.value - 1.0) < 1e-8;

    Model mf = catalog_model("MFLAT");
    CurvatureEstimate kf = unstable_curvature(mf, mf.markov().periodic_point("F"));
    ok = ok && kf.value == 0.0;

    Model mr = catalog_model("MRANK1");
    CurvatureEstimate km = unstable_curvature(mr, mr.markov().periodic_point("HF"));
    Mat2 bh = symbol_block(mr.markov(), mr.markov().symbol_index("H"));
    Mat2 bf = symbol_block(mr.markov(), mr.markov().symbol_index("F"));
    Mat2 m{};
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            for (int i = 0; i < 2; ++i) m[r][c] += bf[r][i] * bh[i][c];
    double rho = spectral_radius_det1(m);
    double slope = (rho - m[0][0]) / m[0][1];
    double gap = std::fabs(km.value - slope);
    ok = ok && gap < 1e-8;
    report(2, ok, "unstable curvature: M0 err " + fmt(std::fabs(k0.value - 1.0)) +
                      ", MFLAT exact " + fmt(kf.value) + ", MRANK1 eigen-slope gap " + fmt(gap));
}

void criterion_3() {
    bool ok = true;
    double worst_slack = 0.0, worst_eq = 0.0;
    int count = 0;
    for (const char* name : {"M2", "MRANK1"}) {
        Model m = catalog_model(name);
        for (const auto& o : enumerate_cycles(m.markov(), 12)) {
            ChiBoundReport rep = chi_bound_check(o);
            ok = ok && rep.ok;
            worst_slack = std::min(worst_slack, rep.slack);
            bool constant = true;
            for (int s : o.cycle) constant = constant && s == o.cycle[0];
            if (constant && !o.parabolic) worst_eq = std::max(worst_eq, std::fabs(rep.slack));
            ++count;
        }
    }
    ok = ok && worst_eq < 1e-9;
    report(3, ok, "chi <= sqrt(-mean K) on " + std::to_string(count) +
                      " cycles; min slack " + fmt(worst_slack) +
                      ", constant-curvature equality gap " + fmt(worst_eq));
}

void criterion_4() {
    Model mr = catalog_model("MRANK1");
    auto family = small_exponent_orbits(mr.markov(), 64);
    bool decreasing = true;
    for (std::size_t i = 1; i < family.size(); ++i)
        decreasing = decreasing && family[i].chi < family[i - 1].chi;
    double chi63 = family[62].chi;  // chi(F^63 H)
    // Least-squares slope of log chi_n vs log n over n in [8, 64].
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int i = 8; i <= 64; ++i) {
        double x = std::log(static_cast<double>(i));
        double y = std::log(family[i - 1].chi);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++n;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    bool slope_ok = std::fabs(slope + 0.5) <= 0.1;
    bool ok = decreasing && chi63 < 0.2 && slope_ok;
    report(4, ok, std::string("small-exponent family: strictly decreasing=") +
                      (decreasing ? "yes" : "no") + ", chi(F^63 H)=" + fmt(chi63) +
                      ", log-log slope " + fmt(slope) + " (required -0.5 +/- 0.1)");
}

void criterion_5() {
    Model m2 = catalog_model("M2");
    OrbitSumConfig cfg;
    cfg.T = 12.0;
    cfg.delta_T = 1.0;
    cfg.weights = proxy_weights(m2.markov());
    double worst = 0.0;
    for (double t = -4.0; t <= 4.0 + 1e-12; t += 0.5) {
        double est = pressure_orbit_sum(m2.markov(), t, cfg).value;
        double oracle = suspension_pressure_oracle(
            m2.markov(), {t * (*cfg.weights)[0], t * (*cfg.weights)[1]});
        worst = std::max(worst, std::fabs(est - oracle));
    }
    report(5, worst < 0.05, "orbit-sum vs oracle on M2, t in [-4,4]: max gap " + fmt(worst));
}

void criterion_6() {
    Model mr = catalog_model("MRANK1");
    PressureCurve curve = pressure_curve(mr.markov(), default_t_grid());
    bool plateau_ok = curve.has_plateau;
    double plateau_max = 0.0;
    for (std::size_t i = 0; i < curve.t_grid.size(); ++i)
        if (curve.has_plateau && curve.t_grid[i] >= curve.t_c)
            plateau_max = std::max(plateau_max, std::fabs(curve.P[i]));
    plateau_ok = plateau_ok && plateau_max < 0.02;

    PhaseTransitionReport pt = phase_transition_report(curve);
    bool kink_ok = curve.has_plateau && pt.D_minus_tc <= -0.1 && pt.D_plus_tc >= -0.02 && pt.kink;

    Model m2 = catalog_model("M2");
    bool no_plateau = !pressure_curve(m2.markov(), default_t_grid()).has_plateau;

    bool ok = plateau_ok && kink_ok && no_plateau;
    report(6, ok, std::string("pressure structure: plateau max |P| ") + fmt(plateau_max) +
                      ", D-(t_c)=" + fmt(pt.D_minus_tc) + " (required <= -0.1), kink=" +
                      (pt.kink ? "yes" : "no") + ", M2 plateau-free=" + (no_plateau ? "yes" : "no"));
}

void criterion_7() {
    Model m2 = catalog_model("M2");
    PressureCurve curve = pressure_curve(m2.markov(), default_t_grid());
    double E = 1e30;
    for (std::size_t i = 0; i < curve.t_grid.size(); ++i)
        E = std::min(E, curve.P[i] + 1.5 * curve.t_grid[i]);
    double e_gap = std::fabs(E - std::log(2.0));
    double dim = 1.0 + 2.0 * E / 1.5;
    double dim_gap = std::fabs(dim - (1.0 + 2.0 * std::log(2.0) / 1.5));

    SpectrumTable table = legendre(curve, 201);
    double inv_gap = 0.0;
    for (double t : {-2.0, -1.0, 0.0, 1.0}) {
        std::size_t i = 0;
        while (curve.t_grid[i] < t - 1e-9) ++i;
        inv_gap = std::max(inv_gap, std::fabs(legendre_inverse(table, t) - curve.P[i]));
    }
    bool ok = e_gap < 1e-3 && dim_gap < 2e-3 && inv_gap < 1e-3;
    report(7, ok, "spectrum closed form: |E(-1.5)-log2| " + fmt(e_gap) + ", dim gap " +
                      fmt(dim_gap) + ", double-transform gap " + fmt(inv_gap));
}

void criterion_8() {
    bool ok = true;
    std::string detail;
    Model m2 = catalog_model("M2");
    NestedReport r2 = nested_pressure_convergence(m2.markov(), {1, 2, 3, 4}, default_t_grid());
    ok = ok && r2.monotone && r2.reaches_full;
    Model mr = catalog_model("MRANK1");
    NestedReport rr = nested_pressure_convergence(mr.markov(), {1, 2, 4}, default_t_grid());
    ok = ok && rr.monotone && rr.reaches_full;
    report(8, ok, std::string("nested pressure: M2 monotone=") + (r2.monotone ? "yes" : "no") +
                      " reaches-full=" + (r2.reaches_full ? "yes" : "no") +
                      ", MRANK1 monotone=" + (rr.monotone ? "yes" : "no") +
                      " reaches-full=" + (rr.reaches_full ? "yes" : "no"));
}

void criterion_9() {
    CatFlow cat;
    std::vector<std::vector<CatPoint>> orbits{
        {CatPoint{{0.0, 0.0}, 0.0, +1}},
        {CatPoint{{0.2, 0.4}, 0.0, +1}, CatPoint{{0.8, 0.6}, 0.0, +1}},
    };
    EnvelopeReport rep = build_envelope(cat, orbits, 1.2, 0.08, 200, 20260825);
    bool ok = rep.ok && rep.constants.valid() && rep.shadow_failures == 0 &&
              rep.recode_failures == 0 && rep.seed_contained && rep.inside_U;
    report(9, ok, "coding construction: constants valid=" +
                      std::string(rep.constants.valid() ? "yes" : "no") + ", shadow failures " +
                      std::to_string(rep.shadow_failures) + "/200, recode failures " +
                      std::to_string(rep.recode_failures) + ", seed contained=" +
                      (rep.seed_contained ? "yes" : "no") + ", inside U=" +
                      (rep.inside_U ? "yes" : "no") +
                      (rep.failure.empty() ? "" : ", first failure: " + rep.failure));
}

void criterion_10() {
    Model m2 = catalog_model("M2");
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<int> len_dist(1, 6);
    std::uniform_int_distribution<int> sym(0, 1);
    std::uniform_real_distribution<double> phase(0.0, 1.0);
    int violations = 0;
    int orbits = 0;
    double min_margin = 1e30;
    while (orbits < 100) {
        int len = len_dist(rng);
        std::vector<int> cycle(len);
        for (int& s : cycle) s = sym(rng);
        MarkovPoint p = m2.markov().periodic_point(cycle, 0, phase(rng), 512);
        ContractionReport rep = contraction_check(m2, p, 1.0, 1.0, 50.0);
        violations += rep.violations;
        min_margin = std::min(min_margin, rep.margin);
        ++orbits;
    }
    report(10, violations == 0,
           "stable contraction on 100 M2 orbits, duration 50: violations " +
               std::to_string(violations) + ", min margin " + fmt(min_margin));
}

void criterion_11() {
#ifndef LAB_CLI_PATH
    report(11, false, "determinism: CLI path not wired");
#else
    namespace fs = std::filesystem;
    fs::path base = fs::temp_directory_path() / "lab_acceptance";
    std::error_code ec;
    fs::remove_all(base, ec);
    fs::create_directories(base / "run1");
    fs::create_directories(base / "run2");
    bool ok = true;
    for (int run = 1; run <= 2 && ok; ++run) {
        std::string cmd = std::string("\"") + LAB_CLI_PATH + "\" --out " +
                          (base / ("run" + std::to_string(run))).string() +
                          " suite all > /dev/null 2>&1";
        ok = std::system(cmd.c_str()) == 0;
    }
    std::size_t files = 0;
    if (ok) {
        for (const auto& entry : fs::recursive_directory_iterator(base / "run1")) {
            if (!entry.is_regular_file()) continue;
            ++files;
            fs::path other = base / "run2" / fs::relative(entry.path(), base / "run1");
            std::ifstream a(entry.path(), std::ios::binary), b(other, std::ios::binary);
            std::stringstream sa, sb;
            sa << a.rdbuf();
            sb << b.rdbuf();
            if (!a || !b || sa.str() != sb.str()) {
                ok = false;
                break;
            }
        }
        ok = ok && files > 0;
    }
    report(11, ok, "determinism: suite `all` twice, " + std::to_string(files) +
                       " files byte-compared");
#endif
}

}  // namespace

int main() {
    try {
        criterion_1();
        criterion_2();
        criterion_3();
        criterion_4();
        criterion_5();
        criterion_6();
        criterion_7();
        criterion_8();
        criterion_9();
        criterion_10();
        criterion_11();
    } catch (const Error& e) {
        std::printf("FAIL unexpected error [%s]: %s\n", e.code().c_str(), e.what());
        return 99;
    }
    std::printf("%d of 11 criteria passed\n", 11 - g_failures);
    return g_failures;
}
