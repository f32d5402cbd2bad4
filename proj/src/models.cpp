#include "lab/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace lab {

namespace {

// Strong connectivity of a 0/1 adjacency matrix.
bool strongly_connected(const std::vector<std::vector<int>>& adj) {
    int n = static_cast<int>(adj.size());
    auto reach = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w = 0; w < n; ++w) {
                int e = transpose ? adj[w][v] : adj[v][w];
                if (e && !seen[w]) {
                    seen[w] = 1;
                    stack.push_back(w);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    };
    return reach(false) && reach(true);
}

// A cycle through flat symbols only, if one exists (DFS with colors).
std::vector<int> find_flat_cycle(const MarkovSpec& spec) {
    int n = static_cast<int>(spec.alphabet.size());
    std::vector<int> color(n, 0);  // 0 unseen, 1 on stack, 2 done
    std::vector<int> path;
    std::vector<int> cycle;
    std::function<bool(int)> dfs = [&](int v) {
        color[v] = 1;
        path.push_back(v);
        for (int w = 0; w < n; ++w) {
            if (!spec.adjacency[v][w] || spec.curvature[w] != 0.0) continue;
            if (color[w] == 1) {
                auto it = std::find(path.begin(), path.end(), w);
                cycle.assign(it, path.end());
                return true;
            }
            if (color[w] == 0 && dfs(w)) return true;
        }
        color[v] = 2;
        path.pop_back();
        return false;
    };
    for (int v = 0; v < n; ++v)
        if (spec.curvature[v] == 0.0 && color[v] == 0 && dfs(v)) return cycle;
    return {};
}

}  // namespace

MarkovModel::MarkovModel(MarkovSpec spec, std::string name)
    : spec_(std::move(spec)), name_(std::move(name)) {
    validate();
    rate_.resize(spec_.curvature.size());
    for (size_t i = 0; i < rate_.size(); ++i) rate_[i] = std::sqrt(-spec_.curvature[i]);
    min_roof_ = *std::min_element(spec_.roof.begin(), spec_.roof.end());
    max_rate_ = *std::max_element(rate_.begin(), rate_.end());
    flat_loop_ = find_flat_cycle(spec_);
    has_flat_loop_ = !flat_loop_.empty();
}

void MarkovModel::validate() const {
    size_t n = spec_.alphabet.size();
    if (n == 0) throw ConstructionError("alphabet must be non-empty");
    if (spec_.adjacency.size() != n || spec_.roof.size() != n || spec_.curvature.size() != n)
        throw ConstructionError("alphabet, adjacency, roofs and curvatures must agree in size");
    for (const auto& row : spec_.adjacency)
        if (row.size() != n) throw ConstructionError("adjacency must be square");
    for (size_t i = 0; i < n; ++i) {
        if (!(spec_.roof[i] > 0.0))
            throw ConstructionError("roof of symbol '" + spec_.alphabet[i] + "' must be positive");
        if (spec_.curvature[i] > 0.0)
            throw ConstructionError("curvature of symbol '" + spec_.alphabet[i] +
                                    "' must be nonpositive");
    }
    if (!strongly_connected(spec_.adjacency))
        throw ConstructionError("adjacency matrix is reducible");
}

int MarkovModel::symbol_index(const std::string& name) const {
    for (int i = 0; i < symbol_count(); ++i)
        if (spec_.alphabet[i] == name) return i;
    throw UsageError("unknown symbol '" + name + "' in model " + name_);
}

MarkovPoint MarkovModel::periodic_point(const std::vector<int>& cycle, int offset,
                                        double phase, int half_window) const {
    if (cycle.empty()) throw UsageError("empty cycle word");
    int L = static_cast<int>(cycle.size());
    for (int i = 0; i < L; ++i) {
        int s = cycle[i];
        if (s < 0 || s >= symbol_count()) throw UsageError("cycle symbol out of range");
        if (!edge(s, cycle[(i + 1) % L]))
            throw UsageError("cycle word is not admissible: " + spec_.alphabet[s] + " -> " +
                             spec_.alphabet[cycle[(i + 1) % L]]);
    }
    MarkovPoint p;
    p.window.resize(2 * half_window + 1);
    p.center = half_window;
    for (int i = 0; i < static_cast<int>(p.window.size()); ++i) {
        int k = (offset + i - half_window) % L;
        if (k < 0) k += L;
        p.window[i] = cycle[k];
    }
    if (phase < 0.0 || phase >= roof(p.window[p.center]))
        throw UsageError("phase outside the current symbol's dwell interval");
    p.phase = phase;
    return p;
}

MarkovPoint MarkovModel::periodic_point(const std::string& word, double phase,
                                        int half_window) const {
    std::vector<int> cycle;
    for (char ch : word) cycle.push_back(symbol_index(std::string(1, ch)));
    return periodic_point(cycle, 0, phase, half_window);
}

MarkovPoint MarkovModel::flow(const MarkovPoint& p, double t) const {
    if (t == 0.0) return p;
    MarkovPoint q = p;
    if (t > 0.0) {
        double remaining = t;
        while (remaining > 0.0) {
            double left = roof(q.window[q.center]) - q.phase;
            if (remaining < left) {
                q.phase += remaining;
                return q;
            }
            remaining -= left;
            q.phase = 0.0;
            ++q.center;
            if (q.center >= static_cast<int>(q.window.size()))
                throw WindowExhausted(
                    "forward flow needs a wider symbol window on model " + name_, t);
        }
        return q;
    }
    double remaining = -t;
    while (remaining > 0.0) {
        if (q.phase >= remaining) {
            q.phase -= remaining;
            return q;
        }
        remaining -= q.phase;
        --q.center;
        if (q.center < 0)
            throw WindowExhausted("backward flow needs a wider symbol window on model " + name_,
                                  -t);
        q.phase = roof(q.window[q.center]);
    }
    return q;
}

MarkovPoint MarkovModel::reverse(const MarkovPoint& p) const {
    int n = static_cast<int>(p.window.size());
    MarkovPoint q;
    q.window.resize(n);
    for (int i = 0; i < n; ++i) q.window[i] = p.window[n - 1 - i];
    if (p.phase > 0.0) {
        q.center = n - 1 - p.center;
        q.phase = roof(p.window[p.center]) - p.phase;
    } else {
        // Boundary representative: the reversed point sits at the start of
        // the previously traversed symbol.
        q.center = n - p.center;
        q.phase = 0.0;
        if (q.center >= n)
            throw WindowExhausted("reverse at window edge on model " + name_, 1.0);
    }
    return q;
}

double MarkovModel::forward_capacity(const MarkovPoint& p) const {
    double cap = roof(p.window[p.center]) - p.phase;
    for (int i = p.center + 1; i < static_cast<int>(p.window.size()); ++i)
        cap += roof(p.window[i]);
    return cap;
}

double MarkovModel::backward_capacity(const MarkovPoint& p) const {
    double cap = p.phase;
    for (int i = 0; i < p.center; ++i) cap += roof(p.window[i]);
    return cap;
}

double MarkovModel::distance(const MarkovPoint& p, const MarkovPoint& q) const {
    double h = min_roof_ / 8.0;
    int steps = static_cast<int>(std::ceil(1.0 / h));
    double best = 0.0;
    for (int k = 0; k <= steps; ++k) {
        double t = std::min(1.0, k * h);
        MarkovPoint a = flow(p, t);
        MarkovPoint b = flow(q, t);
        int sa = a.window[a.center];
        int sb = b.window[b.center];
        double d = (sa == sb) ? std::fabs(a.phase - b.phase)
                              : std::max(roof(sa), roof(sb));
        best = std::max(best, d);
    }
    return best;
}

std::string MarkovModel::word_of(const MarkovPoint& p, int lo, int hi) const {
    std::string out;
    for (int i = lo; i <= hi; ++i) {
        int idx = p.center + i;
        if (idx < 0 || idx >= static_cast<int>(p.window.size()))
            throw WindowExhausted("word_of outside stored window", std::fabs(double(i)));
        out += spec_.alphabet[p.window[idx]];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Surface of revolution
// ---------------------------------------------------------------------------

namespace {

constexpr double kSurfaceTol = 1e-10;

// State layout: r, theta, dr, dtheta [, J, Jp]
template <size_t N>
using Vec = std::array<double, N>;

template <size_t N>
Vec<N> axpy(const Vec<N>& y, double a, const Vec<N>& x) {
    Vec<N> out;
    for (size_t i = 0; i < N; ++i) out[i] = y[i] + a * x[i];
    return out;
}

// Adaptive RK45 (Cash-Karp coefficients) for the geodesic + Jacobi system.
template <size_t N, typename Deriv>
void integrate(Vec<N>& y, double t, Deriv deriv) {
    double dir = (t >= 0.0) ? 1.0 : -1.0;
    double remaining = std::fabs(t);
    double h = std::min(0.1, remaining);
    constexpr double a2 = 1.0 / 5, a3 = 3.0 / 10, a4 = 3.0 / 5, a5 = 1.0, a6 = 7.0 / 8;
    (void)a2; (void)a3; (void)a4; (void)a5; (void)a6;
    int guard = 0;
    while (remaining > 0.0 && ++guard < 2000000) {
        h = std::min(h, remaining);
        double hs = dir * h;
        Vec<N> k1 = deriv(y);
        Vec<N> k2 = deriv(axpy(y, hs / 5.0, k1));
        Vec<N> y3 = y;
        for (size_t i = 0; i < N; ++i) y3[i] += hs * (3.0 / 40 * k1[i] + 9.0 / 40 * k2[i]);
        Vec<N> k3 = deriv(y3);
        Vec<N> y4 = y;
        for (size_t i = 0; i < N; ++i)
            y4[i] += hs * (3.0 / 10 * k1[i] - 9.0 / 10 * k2[i] + 6.0 / 5 * k3[i]);
        Vec<N> k4 = deriv(y4);
        Vec<N> y5 = y;
        for (size_t i = 0; i < N; ++i)
            y5[i] += hs * (-11.0 / 54 * k1[i] + 5.0 / 2 * k2[i] - 70.0 / 27 * k3[i] +
                           35.0 / 27 * k4[i]);
        Vec<N> k5 = deriv(y5);
        Vec<N> y6 = y;
        for (size_t i = 0; i < N; ++i)
            y6[i] += hs * (1631.0 / 55296 * k1[i] + 175.0 / 512 * k2[i] + 575.0 / 13824 * k3[i] +
                           44275.0 / 110592 * k4[i] + 253.0 / 4096 * k5[i]);
        Vec<N> k6 = deriv(y6);

        Vec<N> y_next = y;
        double err = 0.0;
        for (size_t i = 0; i < N; ++i) {
            double d5 = 37.0 / 378 * k1[i] + 250.0 / 621 * k3[i] + 125.0 / 594 * k4[i] +
                        512.0 / 1771 * k6[i];
            double d4 = 2825.0 / 27648 * k1[i] + 18575.0 / 48384 * k3[i] +
                        13525.0 / 55296 * k4[i] + 277.0 / 14336 * k5[i] + 1.0 / 4 * k6[i];
            y_next[i] += hs * d5;
            double scale = 1.0 + std::fabs(y[i]);
            err = std::max(err, std::fabs(hs * (d5 - d4)) / scale);
        }
        if (err <= kSurfaceTol || h < 1e-12) {
            y = y_next;
            remaining -= h;
        }
        double grow = (err > 0.0) ? 0.9 * std::pow(kSurfaceTol / err, 0.2) : 5.0;
        h *= std::clamp(grow, 0.2, 5.0);
    }
    if (remaining > 0.0)
        throw Error("integrator", "adaptive integrator failed to reach the requested time");
}

}  // namespace

SurfaceOfRevolution::SurfaceOfRevolution(double a, double b, double c, std::string name)
    : a_(a), b_(b), c_(c), name_(std::move(name)) {
    if (!(a > 0.0) || !(b > 0.0) || c < 0.0)
        throw ConstructionError("profile requires a > 0, b > 0, c >= 0");
    // K <= 0 holds for the whole family; validate on a sample grid anyway so
    // a future profile family change cannot silently admit K > 0.
    for (int i = -32; i <= 32; ++i) {
        double r = 0.25 * i;
        if (curvature(r) > 0.0)
            throw ConstructionError("profile has positive curvature at r = " +
                                    std::to_string(r));
    }
}

SurfacePoint SurfaceOfRevolution::unit_point(double r, double theta, double psi) const {
    SurfacePoint p;
    p.r = r;
    p.theta = theta;
    p.dr = std::cos(psi);
    p.dtheta = std::sin(psi) / profile(r);
    return p;
}

SurfacePoint SurfaceOfRevolution::flow(const SurfacePoint& p, double t) const {
    Vec<4> y{p.r, p.theta, p.dr, p.dtheta};
    integrate<4>(y, t, [this](const Vec<4>& s) {
        double f = profile(s[0]);
        double fp = profile_d(s[0]);
        return Vec<4>{s[2], s[3], f * fp * s[3] * s[3], -2.0 * (fp / f) * s[2] * s[3]};
    });
    return {y[0], y[1], y[2], y[3]};
}

void SurfaceOfRevolution::flow_with_jacobi(SurfacePoint& p, double& j, double& jp,
                                           double t) const {
    Vec<6> y{p.r, p.theta, p.dr, p.dtheta, j, jp};
    integrate<6>(y, t, [this](const Vec<6>& s) {
        double f = profile(s[0]);
        double fp = profile_d(s[0]);
        double K = curvature(s[0]);
        return Vec<6>{s[2], s[3], f * fp * s[3] * s[3], -2.0 * (fp / f) * s[2] * s[3],
                      s[5], -K * s[4]};
    });
    p = {y[0], y[1], y[2], y[3]};
    j = y[4];
    jp = y[5];
}

double SurfaceOfRevolution::distance(const SurfacePoint& p, const SurfacePoint& q) const {
    double best = 0.0;
    for (int k = 0; k <= 8; ++k) {
        double t = k / 8.0;
        SurfacePoint A = flow(p, t);
        SurfacePoint B = flow(q, t);
        double dth = std::remainder(A.theta - B.theta, 2.0 * M_PI);
        double fm = profile(0.5 * (A.r + B.r));
        best = std::max(best, std::hypot(A.r - B.r, fm * dth));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Linear toy flow
// ---------------------------------------------------------------------------

CatFlow::CatFlow() {
    lambda_ = (3.0 + std::sqrt(5.0)) / 2.0;
    double gu = (std::sqrt(5.0) - 1.0) / 2.0;   // slope of unstable eigenvector
    double gs = -(std::sqrt(5.0) + 1.0) / 2.0;  // slope of stable eigenvector
    double nu = std::hypot(1.0, gu), ns = std::hypot(1.0, gs);
    eu_ = {1.0 / nu, gu / nu};
    es_ = {1.0 / ns, gs / ns};
    // LPS constant: measured over a fixed fan of probe displacements using
    // the same orbit-sup metric the model exposes.
    kappa_ = 1.0;
    for (int k = 0; k < 64; ++k) {
        double ang = 2.0 * M_PI * k / 64.0;
        std::array<double, 2> d{1e-4 * std::cos(ang), 1e-4 * std::sin(ang)};
        auto c = to_eigen(d);
        CatPoint w1{{0.3, 0.4}, 0.0, +1};
        CatPoint w2{{std::fmod(0.3 + d[0] + 1.0, 1.0), std::fmod(0.4 + d[1] + 1.0, 1.0)}, 0.0, +1};
        double dist = distance(w1, w2);
        if (dist <= 0.0) continue;
        double du = std::fabs(c[0]) * lambda_;  // leaf distance at sup window
        double ds = std::fabs(c[1]);
        kappa_ = std::max({kappa_, du / dist, ds / dist});
    }
}

std::array<double, 2> CatFlow::apply_map(const std::array<double, 2>& x) const {
    double u = 2.0 * x[0] + x[1];
    double v = x[0] + x[1];
    u -= std::floor(u);
    v -= std::floor(v);
    return {u, v};
}

std::array<double, 2> CatFlow::apply_map_inverse(const std::array<double, 2>& x) const {
    double u = x[0] - x[1];
    double v = -x[0] + 2.0 * x[1];
    u -= std::floor(u);
    v -= std::floor(v);
    return {u, v};
}

CatPoint CatFlow::flow(const CatPoint& p, double t) const {
    double teff = (p.dir > 0) ? t : -t;
    double total = p.tau + teff;
    double k = std::floor(total);
    CatPoint q = p;
    q.tau = total - k;
    long n = static_cast<long>(k);
    for (long i = 0; i < n; ++i) q.x = apply_map(q.x);
    for (long i = 0; i > n; --i) q.x = apply_map_inverse(q.x);
    return q;
}

CatPoint CatFlow::reverse(const CatPoint& p) const {
    CatPoint q = p;
    q.dir = -p.dir;
    return q;
}

double CatFlow::torus_distance(const std::array<double, 2>& x, const std::array<double, 2>& y) {
    auto d = torus_delta(x, y);
    return std::hypot(d[0], d[1]);
}

std::array<double, 2> CatFlow::torus_delta(const std::array<double, 2>& x,
                                           const std::array<double, 2>& y) {
    std::array<double, 2> d;
    for (int i = 0; i < 2; ++i) {
        double v = y[i] - x[i];
        v -= std::round(v);
        d[i] = v;
    }
    return d;
}

double CatFlow::distance(const CatPoint& p, const CatPoint& q) const {
    double best = 0.0;
    for (int k = 0; k <= 8; ++k) {
        double t = k / 8.0;
        CatPoint A = flow(p, t);
        CatPoint B = flow(q, t);
        best = std::max(best, torus_distance(A.x, B.x) + std::fabs(A.tau - B.tau));
    }
    return best;
}

std::array<double, 2> CatFlow::to_eigen(const std::array<double, 2>& d) const {
    // Solve d = cu*eu + cs*es; the eigenbasis is orthonormal (the map matrix
    // is symmetric), so this is a pair of dot products.
    return {d[0] * eu_[0] + d[1] * eu_[1], d[0] * es_[0] + d[1] * es_[1]};
}

std::array<double, 2> CatFlow::from_eigen(double cu, double cs) const {
    return {cu * eu_[0] + cs * es_[0], cu * eu_[1] + cs * es_[1]};
}

CatPoint CatFlow::bracket(const CatPoint& w1, const CatPoint& w2) const {
    if (w1.dir != w2.dir) throw UsageError("bracket of points with opposite orientation");
    auto d = torus_delta(w1.x, w2.x);
    auto c = to_eigen(d);
    CatPoint out = w1;
    out.x[0] = w1.x[0] + c[0] * eu_[0];
    out.x[1] = w1.x[1] + c[0] * eu_[1];
    out.x[0] -= std::floor(out.x[0]);
    out.x[1] -= std::floor(out.x[1]);
    out.tau = w2.tau;  // the center direction absorbs the phase gap
    return out;
}

// ---------------------------------------------------------------------------
// Uniform handle, catalog, file loading
// ---------------------------------------------------------------------------

const std::string& Model::name() const {
    if (is_markov()) return markov().name();
    if (is_surface()) return surface().name();
    static const std::string cat = "CAT";
    return cat;
}

const MarkovModel& Model::markov() const {
    if (!is_markov()) throw UsageError("operation requires a Markov curvature model");
    return std::get<MarkovModel>(impl_);
}

const SurfaceOfRevolution& Model::surface() const {
    if (!is_surface()) throw UsageError("operation requires a surface-of-revolution model");
    return std::get<SurfaceOfRevolution>(impl_);
}

const CatFlow& Model::cat() const {
    if (!is_cat()) throw UsageError("operation requires the linear toy model");
    return std::get<CatFlow>(impl_);
}

Point Model::flow(const Point& p, double t) const {
    if (is_markov()) return markov().flow(std::get<MarkovPoint>(p), t);
    if (is_surface()) return surface().flow(std::get<SurfacePoint>(p), t);
    return cat().flow(std::get<CatPoint>(p), t);
}

Point Model::reverse(const Point& p) const {
    if (is_markov()) return markov().reverse(std::get<MarkovPoint>(p));
    if (is_surface()) return surface().reverse(std::get<SurfacePoint>(p));
    return cat().reverse(std::get<CatPoint>(p));
}

double Model::curvature_at(const Point& p) const {
    if (is_markov()) return markov().curvature_at(std::get<MarkovPoint>(p));
    if (is_surface()) return surface().curvature_at(std::get<SurfacePoint>(p));
    return cat().curvature_at(std::get<CatPoint>(p));
}

double Model::distance(const Point& p, const Point& q) const {
    if (p.index() != q.index())
        throw UsageError("distance between points of different model kinds");
    if (is_markov()) return markov().distance(std::get<MarkovPoint>(p), std::get<MarkovPoint>(q));
    if (is_surface())
        return surface().distance(std::get<SurfacePoint>(p), std::get<SurfacePoint>(q));
    return cat().distance(std::get<CatPoint>(p), std::get<CatPoint>(q));
}

MarkovModel make_markov_model(const MarkovSpec& spec, const std::string& name) {
    return MarkovModel(spec, name);
}

Model catalog_model(const std::string& name) {
    if (name == "M0")
        return Model(MarkovModel({{"H"}, {{1}}, {1.0}, {-1.0}}, "M0"));
    if (name == "MFLAT")
        return Model(MarkovModel({{"F"}, {{1}}, {1.0}, {0.0}}, "MFLAT"));
    if (name == "M2")
        return Model(MarkovModel(
            {{"A", "B"}, {{1, 1}, {1, 1}}, {1.0, 1.0}, {-1.0, -4.0}}, "M2"));
    if (name == "MRANK1")
        return Model(MarkovModel(
            {{"F", "H"}, {{1, 1}, {1, 1}}, {1.0, 1.0}, {0.0, -1.0}}, "MRANK1"));
    if (name == "CAT") return Model(CatFlow());
    throw UsageError("unknown catalog model '" + name + "'");
}

std::vector<std::string> catalog_names() { return {"M0", "MFLAT", "M2", "MRANK1", "CAT"}; }

Model load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw UsageError("model file '" + path + "' is not valid JSON: " + e.what());
    }
    std::string kind = j.value("kind", "");
    std::string name = j.value("name", path);
    if (kind == "markov-curvature") {
        MarkovSpec spec;
        spec.alphabet = j.at("alphabet").get<std::vector<std::string>>();
        spec.adjacency = j.at("adjacency").get<std::vector<std::vector<int>>>();
        spec.roof.resize(spec.alphabet.size());
        spec.curvature.resize(spec.alphabet.size());
        for (size_t i = 0; i < spec.alphabet.size(); ++i) {
            spec.roof[i] = j.at("roofs").at(spec.alphabet[i]).get<double>();
            spec.curvature[i] = j.at("curvatures").at(spec.alphabet[i]).get<double>();
        }
        return Model(MarkovModel(spec, name));
    }
    if (kind == "surface-of-revolution") {
        const auto& prof = j.at("profile");
        return Model(SurfaceOfRevolution(prof.at("a").get<double>(), prof.at("b").get<double>(),
                                         prof.value("c", 0.0), name));
    }
    if (kind == "linear-toy") return Model(CatFlow());
    throw UsageError("model file '" + path + "' has unknown kind '" + kind + "'");
}

}  // namespace lab
