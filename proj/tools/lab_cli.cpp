#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lab/jacobi.hpp"
#include "lab/markov_coding.hpp"
#include "lab/models.hpp"
#include "lab/orbit_search.hpp"
#include "lab/thermo_spectra.hpp"

namespace {

using nlohmann::json;

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void write_file(const std::string& dir, const std::string& name, const std::string& body) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/" + name, std::ios::binary);
    if (!out) throw lab::UsageError("cannot write " + dir + "/" + name);
    out << body;
}

lab::Model resolve_model(const std::string& name) {
    if (std::filesystem::exists(name)) return lab::load_model_file(name);
    return lab::catalog_model(name);
}

// Strict config: unknown keys are rejected by name.
json load_config(const std::string& path, const std::vector<std::string>& allowed) {
    std::ifstream in(path);
    if (!in) throw lab::UsageError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw lab::UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw lab::UsageError("unknown config key '" + key + "'");
    }
    return j;
}

std::vector<double> grid_from(double lo, double hi, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
    return g;
}

std::string orbits_csv(const std::vector<lab::PeriodicOrbit>& orbits) {
    std::string out = "cycle_word,period,chi,mean_curvature,bound_slack\n";
    for (const auto& o : orbits) {
        auto r = lab::chi_bound_check(o);
        out += o.word + "," + fmt(o.period) + "," + fmt(o.chi) + "," +
               fmt(o.mean_curvature) + "," + fmt(r.slack) + "\n";
    }
    return out;
}

std::string pressure_csv(const lab::PressureCurve& c) {
    std::string out = "t,P,D_minus,D_plus\n";
    for (size_t i = 0; i < c.t_grid.size(); ++i)
        out += fmt(c.t_grid[i]) + "," + fmt(c.P[i]) + "," + fmt(c.D_minus[i]) + "," +
               fmt(c.D_plus[i]) + "\n";
    return out;
}

std::string spectrum_csv(const lab::SpectrumTable& t) {
    std::string out = "alpha,E,argmin_t,dim_lower\n";
    for (const auto& r : t.rows)
        out += fmt(r.alpha) + "," + fmt(r.E) + "," + fmt(r.argmin_t) + "," +
               (r.has_dim ? fmt(r.dim_lower) : std::string("nan")) + "\n";
    return out;
}

json pressure_report(const lab::PressureCurve& curve, const lab::SpectrumTable& table) {
    auto pt = lab::phase_transition_report(curve);
    json rep;
    rep["method"] = curve.method;
    rep["has_plateau"] = curve.has_plateau;
    rep["t_c"] = curve.has_plateau ? json(curve.t_c) : json();
    rep["alpha_1"] = table.alpha_1;
    rep["alpha_2"] = table.alpha_2;
    rep["kink"] = pt.kink;
    rep["kink_magnitude"] = pt.kink_magnitude;
    if (!pt.note.empty()) rep["note"] = pt.note;
    return rep;
}

std::vector<std::vector<lab::CatPoint>> default_cat_seed() {
    // A fixed point and a period-2 orbit of the torus map.
    std::vector<std::vector<lab::CatPoint>> orbits;
    orbits.push_back({lab::CatPoint{{0.0, 0.0}, 0.0, +1}});
    orbits.push_back({lab::CatPoint{{0.2, 0.4}, 0.0, +1}, lab::CatPoint{{0.8, 0.6}, 0.0, +1}});
    return orbits;
}

json run_coding(double u_radius, double alpha_rect, int samples, std::uint64_t seed,
                const std::string& out_dir) {
    lab::CatFlow cat;
    auto rep = lab::build_envelope(cat, default_cat_seed(), u_radius, alpha_rect, samples,
                                   seed);
    json j;
    j["ok"] = rep.ok;
    j["alphabet_size"] = rep.refinement.cells.size();
    j["scc_size"] = rep.scc_cells.size();
    j["rectangles"] = rep.section.rectangles.size();
    j["constants"] = {{"beta", rep.constants.beta},   {"kappa", rep.constants.kappa},
                      {"gamma", rep.constants.gamma}, {"C", rep.constants.C},
                      {"Delta", rep.constants.Delta}, {"epsilon", rep.constants.epsilon},
                      {"N0", rep.constants.N0},       {"N1", rep.constants.N1},
                      {"N2", rep.constants.N2}};
    j["samples"] = rep.samples;
    j["shadow_failures"] = rep.shadow_failures;
    j["recode_failures"] = rep.recode_failures;
    j["bracket_failures"] = rep.bracket_failures;
    j["seed_contained"] = rep.seed_contained;
    j["max_seed_error"] = rep.max_seed_error;
    j["inside_U"] = rep.inside_U;
    j["max_U_distance"] = rep.max_U_distance;
    if (!rep.failure.empty()) j["failure"] = rep.failure;
    write_file(out_dir, "envelope.json", j.dump(2) + "\n");

    std::string csv = "cell,rect,diameter_bound\n";
    for (size_t c = 0; c < rep.refinement.cells.size(); ++c)
        csv += std::to_string(c) + "," +
               std::to_string(rep.refinement.cells[c].itinerary[rep.refinement.N]) + "," +
               fmt(rep.refinement.cells[c].diameter_bound) + "\n";
    write_file(out_dir, "shadow_samples.csv", csv);
    return j;
}

struct Check {
    std::string name;
    bool pass;
};

json run_suite(const std::string& name, const std::string& out_dir, std::uint64_t seed);

json suite_validate_models(const std::string& out_dir) {
    std::vector<Check> checks;
    for (const auto& n : lab::catalog_names()) {
        bool ok = true;
        try {
            lab::Model m = lab::catalog_model(n);
            (void)m;
        } catch (...) {
            ok = false;
        }
        checks.push_back({"construct " + n, ok});
    }
    bool reject = false;
    try {
        lab::make_markov_model({{"A", "B"}, {{1, 0}, {0, 1}}, {1, 1}, {-1, -1}});
    } catch (const lab::ConstructionError&) {
        reject = true;
    }
    checks.push_back({"reject reducible adjacency", reject});
    checks.push_back(
        {"MRANK1 flat loop", lab::catalog_model("MRANK1").markov().has_flat_loop()});

    json j;
    j["suite"] = "validate-models";
    bool all = true;
    for (const auto& c : checks) {
        j["checks"].push_back({{"name", c.name}, {"pass", c.pass}});
        all = all && c.pass;
    }
    j["pass"] = all;
    (void)out_dir;
    return j;
}

json suite_riccati(const std::string& out_dir) {
    std::vector<Check> checks;
    lab::Model m0 = lab::catalog_model("M0");
    lab::Point p0 = m0.markov().periodic_point("H");

    lab::JacobiPair pair{0.0, 1.0, 0.0};
    auto end = lab::propagate_jacobi(m0, p0, pair, 5.0);
    double j = end.j * std::exp(end.logscale);
    checks.push_back({"M0 (0,1) -> sinh", std::fabs(j - std::sinh(5.0)) < 1e-8 * j});

    auto r = lab::riccati_solve(m0, p0, 1.0, 10.0);
    checks.push_back({"M0 riccati fixed point", std::fabs(r.u - 1.0) < 1e-12});

    auto ku = lab::unstable_curvature(m0, p0);
    checks.push_back({"M0 k_u = 1", std::fabs(ku.value - 1.0) < 1e-8});

    lab::Model mf = lab::catalog_model("MFLAT");
    lab::Point pf = mf.markov().periodic_point("F");
    checks.push_back({"MFLAT k_u = 0", lab::unstable_curvature(mf, pf).value == 0.0});

    std::string csv = "point_id,k_u,k_s,lambda,lambda_T,chi_forward,residuals\n";
    for (const auto& name : {"M0", "M2", "MRANK1"}) {
        lab::Model model = lab::catalog_model(name);
        auto cycles = lab::enumerate_cycles(model.markov(), 2);
        for (const auto& o : cycles) {
            lab::Point p = model.markov().periodic_point(o.cycle);
            auto h = lab::horocycle_curvatures(model, p);
            auto lt = lab::lambda_T(model, p, 2.0);
            double chi = lab::lyapunov_forward(model, p, o.period);
            csv += std::string(name) + ":" + o.word + "," + fmt(h.k_u.value) + "," +
                   fmt(h.k_s.value) + "," + fmt(h.lambda) + "," + fmt(lt.value) + "," +
                   fmt(chi) + "," + fmt(std::max(h.k_u.residual, h.k_s.residual)) + "\n";
        }
    }
    write_file(out_dir, "batch.csv", csv);

    json out;
    out["suite"] = "riccati";
    bool all = true;
    for (const auto& c : checks) {
        out["checks"].push_back({{"name", c.name}, {"pass", c.pass}});
        all = all && c.pass;
    }
    out["pass"] = all;
    return out;
}

json suite_orbits(const std::string& out_dir) {
    std::vector<Check> checks;
    for (const auto& name : {"M2", "MRANK1"}) {
        lab::Model model = lab::catalog_model(name);
        auto cycles = lab::enumerate_cycles(model.markov(), 8);
        bool dets = true, bounds = true;
        for (const auto& o : cycles) {
            // det = ad - bc cancels against entries of size e^{2L}, so the
            // achievable absolute accuracy scales with the squared norm.
            double nrm = 0.0;
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c)
                    nrm = std::max(nrm, std::fabs(o.monodromy[r][c]));
            if (std::fabs(lab::det2(o.monodromy) - 1.0) > 1e-12 * nrm * nrm) dets = false;
            if (!lab::chi_bound_check(o).ok) bounds = false;
        }
        checks.push_back({std::string(name) + " det(monodromy) = 1", dets});
        checks.push_back({std::string(name) + " chi bound", bounds});
        write_file(out_dir, std::string("orbits_") + name + ".csv", orbits_csv(cycles));
    }
    auto small = lab::small_exponent_orbits(lab::catalog_model("MRANK1").markov(), 64);
    bool decreasing = true;
    for (size_t i = 1; i < small.size(); ++i)
        if (small[i].chi >= small[i - 1].chi) decreasing = false;
    checks.push_back({"MRANK1 small exponents decreasing", decreasing});

    json out;
    out["suite"] = "orbits";
    bool all = true;
    for (const auto& c : checks) {
        out["checks"].push_back({{"name", c.name}, {"pass", c.pass}});
        all = all && c.pass;
    }
    out["pass"] = all;
    return out;
}

json suite_pressure(const std::string& out_dir) {
    std::vector<Check> checks;
    lab::Model m2 = lab::catalog_model("M2");
    auto curve = lab::pressure_curve(m2.markov(), lab::default_t_grid());
    write_file(out_dir, "pressure_M2.csv", pressure_csv(curve));
    checks.push_back({"M2 no plateau", !curve.has_plateau});

    lab::OrbitSumConfig cfg;
    cfg.weights = lab::proxy_weights(m2.markov());
    bool agree = true;
    for (double t : {-4.0, -1.0, 0.0, 2.0, 4.0}) {
        std::vector<double> tw = *cfg.weights;
        for (auto& w : tw) w *= t;
        double oracle = lab::suspension_pressure_oracle(m2.markov(), tw);
        double est = lab::pressure_orbit_sum(m2.markov(), t, cfg).value;
        if (std::fabs(est - oracle) >= 0.05) agree = false;
    }
    checks.push_back({"M2 orbit-sum vs oracle", agree});

    lab::Model mr = lab::catalog_model("MRANK1");
    auto curve_r = lab::pressure_curve(mr.markov(), lab::default_t_grid());
    write_file(out_dir, "pressure_MRANK1.csv", pressure_csv(curve_r));
    checks.push_back({"MRANK1 plateau", curve_r.has_plateau});

    auto nested = lab::nested_pressure_convergence(m2.markov(), {1, 2, 4},
                                                  grid_from(-2.0, 2.0, 9));
    checks.push_back({"M2 nested monotone", nested.monotone && nested.reaches_full});

    json out;
    out["suite"] = "pressure";
    bool all = true;
    for (const auto& c : checks) {
        out["checks"].push_back({{"name", c.name}, {"pass", c.pass}});
        all = all && c.pass;
    }
    out["pass"] = all;
    return out;
}

json suite_spectrum(const std::string& out_dir) {
    std::vector<Check> checks;
    lab::Model m2 = lab::catalog_model("M2");
    auto curve = lab::pressure_curve(m2.markov(), lab::default_t_grid());
    auto table = lab::legendre(curve);
    write_file(out_dir, "spectrum_M2.csv", spectrum_csv(table));
    write_file(out_dir, "report_M2.json", pressure_report(curve, table).dump(2) + "\n");

    double e_target = std::log(2.0);
    double best = 1e9;
    for (const auto& row : table.rows)
        if (std::fabs(row.alpha + 1.5) < 0.05) best = std::min(best, std::fabs(row.E - e_target));
    double e15 = 1e9;
    for (size_t i = 0; i < curve.t_grid.size(); ++i)
        e15 = std::min(e15, curve.P[i] + 1.5 * curve.t_grid[i]);
    checks.push_back({"M2 E(-1.5) = log 2", std::fabs(e15 - e_target) < 1e-3});
    bool involution = true;
    for (double t : {-2.0, -1.0, 0.0, 0.5}) {
        size_t i = 0;
        while (curve.t_grid[i] < t - 1e-9) ++i;
        if (std::fabs(lab::legendre_inverse(table, t) - curve.P[i]) > 1e-3) involution = false;
    }
    checks.push_back({"M2 double transform", involution});

    json out;
    out["suite"] = "spectrum";
    bool all = true;
    for (const auto& c : checks) {
        out["checks"].push_back({{"name", c.name}, {"pass", c.pass}});
        all = all && c.pass;
    }
    out["pass"] = all;
    return out;
}

json suite_coding(const std::string& out_dir, std::uint64_t seed) {
    json rep = run_coding(1.5, 0.08, 50, seed, out_dir);
    json out;
    out["suite"] = "coding";
    out["checks"].push_back({{"name", "envelope ok"}, {"pass", rep["ok"].get<bool>()}});
    out["pass"] = rep["ok"].get<bool>();
    return out;
}

json run_suite(const std::string& name, const std::string& out_dir, std::uint64_t seed) {
    if (name == "validate-models") return suite_validate_models(out_dir);
    if (name == "riccati") return suite_riccati(out_dir);
    if (name == "orbits") return suite_orbits(out_dir);
    if (name == "pressure") return suite_pressure(out_dir);
    if (name == "spectrum") return suite_spectrum(out_dir);
    if (name == "coding") return suite_coding(out_dir, seed);
    if (name == "all") {
        json all;
        all["suite"] = "all";
        bool pass = true;
        for (const auto& sub :
             {"validate-models", "riccati", "orbits", "pressure", "spectrum", "coding"}) {
            json r = run_suite(sub, out_dir, seed);
            pass = pass && r["pass"].get<bool>();
            all["suites"].push_back(r);
        }
        all["pass"] = pass;
        write_file(out_dir, "suite_summary.json", all.dump(2) + "\n");
        return all;
    }
    throw lab::UsageError("unknown suite '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multifractal flow laboratory"};
    app.require_subcommand(1);

    std::string model_name = "M0", out_dir = ".", config_path, emit = "csv";
    std::uint64_t seed = 1;
    app.add_option("--model", model_name, "catalog name or model file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "RNG seed for sampling");
    app.add_option("--emit", emit, "csv|json")->check(CLI::IsMember({"csv", "json"}));

    auto* cmd_model = app.add_subcommand("model", "model operations");
    auto* cmd_validate = cmd_model->add_subcommand("validate", "construct and validate");
    auto* cmd_riccati = app.add_subcommand("riccati", "Riccati/horocycle quantities");
    double opt_t = 10.0, opt_u0 = 1.0;
    std::string opt_word;
    cmd_riccati->add_option("--t", opt_t, "propagation time");
    cmd_riccati->add_option("--u0", opt_u0, "initial Riccati slope");
    cmd_riccati->add_option("--word", opt_word, "cycle word for the base point");
    auto* cmd_lyapunov = app.add_subcommand("lyapunov", "batch exponent table");
    auto* cmd_orbits = app.add_subcommand("orbits", "periodic orbit enumeration");
    int opt_max_len = 8;
    cmd_orbits->add_option("--max-len", opt_max_len, "maximum cycle length");
    auto* cmd_pressure = app.add_subcommand("pressure", "pressure curve");
    std::string opt_method = "oracle";
    cmd_pressure->add_option("--method", opt_method, "oracle|orbit-sum");
    auto* cmd_spectrum = app.add_subcommand("spectrum", "Legendre spectrum");
    auto* cmd_coding = app.add_subcommand("coding", "coding construction");
    auto* cmd_coding_build = cmd_coding->add_subcommand("build", "build the envelope");
    double opt_u_radius = 1.5, opt_alpha = 0.08;
    int opt_samples = 200;
    cmd_coding_build->add_option("--u-radius", opt_u_radius, "U neighborhood radius");
    cmd_coding_build->add_option("--alpha-rect", opt_alpha, "rectangle diameter cap");
    cmd_coding_build->add_option("--samples", opt_samples, "verification samples");
    auto* cmd_suite = app.add_subcommand("suite", "acceptance batteries");
    std::string suite_name = "all";
    cmd_suite->add_option("name", suite_name, "battery name");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) {
            json cfg = load_config(config_path,
                                   {"model", "out", "seed", "emit", "t", "u0", "word",
                                    "max_len", "method", "u_radius", "alpha_rect",
                                    "samples", "suite"});
            if (cfg.contains("model")) model_name = cfg["model"].get<std::string>();
            if (cfg.contains("out")) out_dir = cfg["out"].get<std::string>();
            if (cfg.contains("seed")) seed = cfg["seed"].get<std::uint64_t>();
            if (cfg.contains("emit")) emit = cfg["emit"].get<std::string>();
            if (cfg.contains("t")) opt_t = cfg["t"].get<double>();
            if (cfg.contains("u0")) opt_u0 = cfg["u0"].get<double>();
            if (cfg.contains("word")) opt_word = cfg["word"].get<std::string>();
            if (cfg.contains("max_len")) opt_max_len = cfg["max_len"].get<int>();
            if (cfg.contains("method")) opt_method = cfg["method"].get<std::string>();
            if (cfg.contains("u_radius")) opt_u_radius = cfg["u_radius"].get<double>();
            if (cfg.contains("alpha_rect")) opt_alpha = cfg["alpha_rect"].get<double>();
            if (cfg.contains("samples")) opt_samples = cfg["samples"].get<int>();
            if (cfg.contains("suite")) suite_name = cfg["suite"].get<std::string>();
        }

        if (cmd_validate->parsed()) {
            lab::Model m = resolve_model(model_name);
            json j;
            j["name"] = m.name();
            j["kind"] = m.is_markov() ? "markov-curvature"
                        : m.is_surface() ? "surface-of-revolution"
                                         : "linear-toy";
            if (m.is_markov()) {
                const auto& mm = m.markov();
                for (int s = 0; s < mm.symbol_count(); ++s)
                    j["symbols"].push_back({{"name", mm.symbol_name(s)},
                                            {"roof", mm.roof(s)},
                                            {"curvature", mm.curvature(s)}});
                j["flat_loop"] = mm.has_flat_loop();
            }
            j["valid"] = true;
            std::cout << j.dump(2) << "\n";
        } else if (cmd_riccati->parsed()) {
            lab::Model m = resolve_model(model_name);
            if (!m.is_markov())
                throw lab::UsageError("riccati subcommand expects a Markov model");
            lab::Point p = opt_word.empty()
                               ? lab::Point(m.markov().periodic_point(
                                     lab::enumerate_cycles(m.markov(), 1).front().cycle))
                               : lab::Point(m.markov().periodic_point(opt_word));
            auto r = lab::riccati_solve(m, p, opt_u0, opt_t);
            auto h = lab::horocycle_curvatures(m, p);
            json j;
            j["u"] = r.u;
            j["conjugate_point"] = r.conjugate_point;
            j["k_u"] = h.k_u.value;
            j["k_s"] = h.k_s.value;
            j["lambda"] = h.lambda;
            std::cout << j.dump(2) << "\n";
        } else if (cmd_lyapunov->parsed()) {
            lab::Model m = resolve_model(model_name);
            if (!m.is_markov())
                throw lab::UsageError("lyapunov subcommand expects a Markov model");
            std::string csv = "point_id,k_u,k_s,lambda,lambda_T,chi_forward,residuals\n";
            for (const auto& o : lab::enumerate_cycles(m.markov(), 3)) {
                lab::Point p = m.markov().periodic_point(o.cycle);
                auto h = lab::horocycle_curvatures(m, p);
                auto lt = lab::lambda_T(m, p, 2.0);
                csv += o.word + "," + fmt(h.k_u.value) + "," + fmt(h.k_s.value) + "," +
                       fmt(h.lambda) + "," + fmt(lt.value) + "," +
                       fmt(lab::lyapunov_forward(m, p, o.period)) + "," +
                       fmt(std::max(h.k_u.residual, h.k_s.residual)) + "\n";
            }
            write_file(out_dir, "batch.csv", csv);
            std::cout << "wrote " << out_dir << "/batch.csv\n";
        } else if (cmd_orbits->parsed()) {
            lab::Model m = resolve_model(model_name);
            auto orbits = lab::enumerate_cycles(m.markov(), opt_max_len);
            if (emit == "json") {
                json j = json::array();
                for (const auto& o : orbits)
                    j.push_back({{"word", o.word},
                                 {"period", o.period},
                                 {"chi", o.chi},
                                 {"mean_curvature", o.mean_curvature},
                                 {"parabolic", o.parabolic}});
                std::cout << j.dump(2) << "\n";
            } else {
                write_file(out_dir, "orbits.csv", orbits_csv(orbits));
                std::cout << "wrote " << out_dir << "/orbits.csv\n";
            }
        } else if (cmd_pressure->parsed()) {
            lab::Model m = resolve_model(model_name);
            lab::PressureConfig cfg;
            cfg.method = opt_method;
            if (opt_method == "orbit-sum")
                cfg.orbit_sum.weights = lab::proxy_weights(m.markov());
            auto curve = lab::pressure_curve(m.markov(), lab::default_t_grid(), cfg);
            write_file(out_dir, "pressure.csv", pressure_csv(curve));
            auto table = lab::legendre(curve);
            write_file(out_dir, "report.json",
                       pressure_report(curve, table).dump(2) + "\n");
            std::cout << "wrote " << out_dir << "/pressure.csv\n";
        } else if (cmd_spectrum->parsed()) {
            lab::Model m = resolve_model(model_name);
            auto curve = lab::pressure_curve(m.markov(), lab::default_t_grid());
            auto table = lab::legendre(curve);
            write_file(out_dir, "spectrum.csv", spectrum_csv(table));
            write_file(out_dir, "report.json",
                       pressure_report(curve, table).dump(2) + "\n");
            std::cout << "wrote " << out_dir << "/spectrum.csv\n";
        } else if (cmd_coding_build->parsed()) {
            json j = run_coding(opt_u_radius, opt_alpha, opt_samples, seed, out_dir);
            std::cout << j.dump(2) << "\n";
            if (!j["ok"].get<bool>()) return 1;
        } else if (cmd_suite->parsed()) {
            json j = run_suite(suite_name, out_dir, seed);
            std::cout << j.dump(2) << "\n";
            if (!j["pass"].get<bool>()) return 1;
        } else {
            throw lab::UsageError("no subcommand given");
        }
    } catch (const lab::Error& e) {
        std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
