#pragma once

// Experiment configs, dispatch and report files for the command-line tool.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "rexp/entropy.hpp"
#include "rexp/rsets.hpp"

namespace rexp {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& command_names()
{
    static const std::vector<std::string> names{"holonomy", "rset", "expansivity", "entropy", "uef", "demo"};
    return names;
}

using Json = nlohmann::ordered_json;

/// One experiment. Unset optionals take per-command defaults.
struct ExperimentConfig {
    std::string command;
    std::string flow;
    std::string output_dir = "out";
    unsigned threads = 1;
    std::uint64_t seed = 1;
    double tol = 1e-9;
    double T_max = 200.0;

    std::optional<Vec3> point;
    std::optional<std::vector<Vec3>> points;
    std::optional<SampleSpec> sample;

    double beta = 0.1;
    double t = 1.0;
    std::size_t n_max = 12;
    std::size_t resolution = 101;
    std::string direction = "stable"; // stable | unstable | both
    std::optional<double> tolerance_factor;
    std::size_t probe_horizon = 12;
    std::optional<double> gamma;

    // holonomy
    std::optional<Vec2> y;
    long steps = 1;
    bool check_tube = true;

    // rset variants
    std::string kind = "rset"; // rset | dynamical_ball | rstable
    std::size_t n = 0;
    double epsilon = 0.05;
    std::vector<double> eps_list;
    std::vector<double> eta_grid;

    // entropy
    std::vector<double> t_list;
    std::optional<double> orbit_step;

    // uef
    double eta = 0.01;
    std::size_t horizon_budget = 20;
    std::size_t angles = 64;
    std::size_t radii = 4;

    Json source; // effective config as parsed
};

namespace cli_detail {

[[noreturn]] inline void invalid(const std::string& msg) { throw Error(ErrorCode::Validation, msg); }

inline double number(const Json& j, const std::string& key)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "infinity")
            return std::numeric_limits<double>::infinity();
    }
    if (!j.is_number())
        invalid("'" + key + "' must be a number");
    return j.get<double>();
}

inline std::size_t count(const Json& j, const std::string& key)
{
    if (!j.is_number_integer() || j.get<long long>() < 0)
        invalid("'" + key + "' must be a non-negative integer");
    return j.get<std::size_t>();
}

template <std::size_t N>
std::array<double, N> vec(const Json& j, const std::string& key)
{
    if (!j.is_array() || j.size() != N)
        invalid("'" + key + "' must be an array of " + std::to_string(N) + " numbers");
    std::array<double, N> v{};
    for (std::size_t i = 0; i < N; ++i)
        v[i] = number(j[i], key);
    return v;
}

inline std::vector<double> list(const Json& j, const std::string& key)
{
    if (!j.is_array())
        invalid("'" + key + "' must be an array of numbers");
    std::vector<double> v;
    for (const auto& e : j)
        v.push_back(number(e, key));
    return v;
}

inline SampleSpec parse_sample(const Json& j, const FlowSpec& f, std::uint64_t seed)
{
    static const std::set<std::string> keys{"count", "seed", "grid", "lo", "hi", "segment", "exclude_band"};
    if (!j.is_object())
        invalid("'sample' must be an object");
    for (const auto& [k, v] : j.items())
        if (!keys.count(k))
            invalid("unknown key 'sample." + k + "'");
    SampleSpec s = default_sample_spec(f);
    s.seed = seed;
    if (j.contains("count"))
        s.count = count(j["count"], "sample.count");
    if (j.contains("seed"))
        s.seed = count(j["seed"], "sample.seed");
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        if (g.is_boolean()) {
            s.grid = g.get<bool>();
        } else {
            if (!g.is_array() || g.size() != 3)
                invalid("'sample.grid' must be a boolean or three cell counts");
            s.grid = true;
            for (std::size_t i = 0; i < 3; ++i)
                s.grid_shape[i] = count(g[i], "sample.grid");
        }
    }
    if (j.contains("lo"))
        s.lo = vec<3>(j["lo"], "sample.lo");
    if (j.contains("hi"))
        s.hi = vec<3>(j["hi"], "sample.hi");
    if (j.contains("segment")) {
        const auto& g = j["segment"];
        if (!g.is_object() || !g.contains("from"))
            invalid("'sample.segment' needs 'from' and either 'to' or 'direction' + 'length'");
        const Vec3 from = vec<3>(g["from"], "sample.segment.from");
        Vec3 to{};
        if (g.contains("to")) {
            to = vec<3>(g["to"], "sample.segment.to");
        } else {
            if (!g.contains("direction") || !g.contains("length"))
                invalid("'sample.segment' needs 'to' or 'direction' + 'length'");
            const double len = number(g["length"], "sample.segment.length");
            Vec3 dir{};
            if (g["direction"].is_string()) {
                const auto name = g["direction"].get<std::string>();
                if (!f.manifold.gluing || (name != "unstable" && name != "stable"))
                    invalid("segment direction names need a suspension flow ('unstable' or 'stable')");
                const Vec2 e = name == "unstable" ? f.manifold.gluing->unstable : f.manifold.gluing->stable;
                dir = {e[0], e[1], 0.0};
            } else {
                dir = vec<3>(g["direction"], "sample.segment.direction");
            }
            if (!(norm(dir) > 0.0))
                invalid("segment direction must be non-zero");
            to = from + (len / norm(dir)) * dir;
        }
        s.segment = std::make_pair(from, to);
    }
    if (j.contains("exclude_band")) {
        const auto& b = j["exclude_band"];
        if (b.is_null()) {
            s.exclude_band.reset();
        } else {
            if (!b.is_object() || !b.contains("axis") || !b.contains("halfwidth"))
                invalid("'sample.exclude_band' needs 'axis' and 'halfwidth'");
            const auto axis = count(b["axis"], "sample.exclude_band.axis");
            if (axis > 2)
                invalid("'sample.exclude_band.axis' must be 0, 1 or 2");
            s.exclude_band = std::make_pair(axis, number(b["halfwidth"], "sample.exclude_band.halfwidth"));
        }
    }
    return s;
}

} // namespace cli_detail

/// Base point used when a config names none: a regular point of each flow.
inline Vec3 default_point(const FlowSpec& f)
{
    if (f.manifold.gluing)
        return {0.5, 0.5, 0.5};
    if (f.name.rfind("solid_torus", 0) == 0)
        return {-0.5, 0.2, 0.0};
    return {0.0, 0.0, 0.0};
}

/// Parses and validates a config against the named flow. Throws Validation.
inline ExperimentConfig parse_config(const Json& j)
{
    using namespace cli_detail;
    static const std::set<std::string> keys{
        "command", "flow", "output_dir", "threads", "seed", "tol", "T_max", "point", "points", "sample",
        "beta", "t", "n_max", "resolution", "direction", "tolerance_factor", "probe_horizon", "gamma",
        "y", "steps", "check_tube", "kind", "n", "epsilon", "eps_list", "eta_grid", "t_list", "orbit_step",
        "eta", "horizon_budget", "angles", "radii", "description", "gamma_fraction"};
    if (!j.is_object())
        invalid("config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!keys.count(k))
            invalid("unknown config key '" + k + "'");
    ExperimentConfig c;
    c.source = j;
    if (!j.contains("command") || !j["command"].is_string())
        invalid("'command' is required");
    c.command = j["command"].get<std::string>();
    if (std::find(command_names().begin(), command_names().end(), c.command) == command_names().end())
        invalid("unknown command '" + c.command + "'");
    if (c.command == "demo")
        c.flow = j.value("flow", std::string{});
    else if (!j.contains("flow") || !j["flow"].is_string())
        invalid("'flow' is required");
    else
        c.flow = j["flow"].get<std::string>();
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string())
            invalid("'output_dir' must be a string");
        c.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("threads"))
        c.threads = static_cast<unsigned>(count(j["threads"], "threads"));
    if (c.threads == 0)
        invalid("'threads' must be at least 1");
    if (j.contains("seed"))
        c.seed = count(j["seed"], "seed");
    if (j.contains("tol"))
        c.tol = number(j["tol"], "tol");
    if (j.contains("T_max"))
        c.T_max = number(j["T_max"], "T_max");
    if (!(c.tol > 0.0 && c.tol < 1e-2))
        invalid("'tol' must lie in (0, 1e-2)");
    if (!(c.T_max > 0.0) || !std::isfinite(c.T_max))
        invalid("'T_max' must be positive and finite");

    if (c.command == "demo")
        return c;
    const FlowSpec f = flows::by_name(c.flow);

    if (j.contains("point"))
        c.point = vec<3>(j["point"], "point");
    if (j.contains("points")) {
        if (!j["points"].is_array() || j["points"].empty())
            invalid("'points' must be a non-empty array of points");
        c.points.emplace();
        for (const auto& p : j["points"])
            c.points->push_back(vec<3>(p, "points"));
    }
    if (j.contains("sample"))
        c.sample = parse_sample(j["sample"], f, c.seed);
    if (j.contains("beta"))
        c.beta = number(j["beta"], "beta");
    if (j.contains("t"))
        c.t = number(j["t"], "t");
    if (j.contains("n_max"))
        c.n_max = count(j["n_max"], "n_max");
    if (j.contains("resolution"))
        c.resolution = count(j["resolution"], "resolution");
    if (j.contains("direction")) {
        if (!j["direction"].is_string())
            invalid("'direction' must be a string");
        c.direction = j["direction"].get<std::string>();
    }
    if (j.contains("tolerance_factor"))
        c.tolerance_factor = number(j["tolerance_factor"], "tolerance_factor");
    if (j.contains("probe_horizon"))
        c.probe_horizon = count(j["probe_horizon"], "probe_horizon");
    if (j.contains("gamma"))
        c.gamma = number(j["gamma"], "gamma");
    if (j.contains("gamma_fraction")) {
        if (j.contains("gamma"))
            invalid("give either 'gamma' or 'gamma_fraction'");
        c.gamma = number(j["gamma_fraction"], "gamma_fraction") * c.beta / std::pow(f.constants.L, c.t);
    }
    if (j.contains("y"))
        c.y = vec<2>(j["y"], "y");
    if (j.contains("steps")) {
        if (!j["steps"].is_number_integer())
            invalid("'steps' must be an integer");
        c.steps = j["steps"].get<long>();
    }
    if (j.contains("check_tube")) {
        if (!j["check_tube"].is_boolean())
            invalid("'check_tube' must be a boolean");
        c.check_tube = j["check_tube"].get<bool>();
    }
    if (j.contains("kind")) {
        if (!j["kind"].is_string())
            invalid("'kind' must be a string");
        c.kind = j["kind"].get<std::string>();
    }
    if (j.contains("n"))
        c.n = count(j["n"], "n");
    if (j.contains("epsilon"))
        c.epsilon = number(j["epsilon"], "epsilon");
    if (j.contains("eps_list"))
        c.eps_list = list(j["eps_list"], "eps_list");
    if (j.contains("eta_grid"))
        c.eta_grid = list(j["eta_grid"], "eta_grid");
    if (j.contains("t_list"))
        c.t_list = list(j["t_list"], "t_list");
    if (j.contains("orbit_step"))
        c.orbit_step = number(j["orbit_step"], "orbit_step");
    if (j.contains("eta"))
        c.eta = number(j["eta"], "eta");
    if (j.contains("horizon_budget"))
        c.horizon_budget = count(j["horizon_budget"], "horizon_budget");
    if (j.contains("angles"))
        c.angles = count(j["angles"], "angles");
    if (j.contains("radii"))
        c.radii = count(j["radii"], "radii");

    // module preconditions, checked before any computation
    const double Lt = std::pow(f.constants.L, c.t);
    auto need_point = [&] {
        if (!c.point)
            c.point = default_point(f);
    };
    auto need_points = [&] {
        if (!c.points && !c.sample) {
            c.sample = default_sample_spec(f);
            c.sample->segment.reset();
            c.sample->count = 20;
            c.sample->seed = c.seed;
        }
    };
    auto check_beta = [&](double b, const std::string& name) {
        if (!(b > 0.0) || b > f.constants.beta0 * (1.0 + 1e-12))
            invalid("'" + name + "' must lie in (0, beta0 = " + std::to_string(f.constants.beta0) + "]");
    };
    auto check_t = [&] {
        if (!(c.t > 0.0) || c.t > c.T_max)
            invalid("'t' must lie in (0, T_max]");
    };
    auto check_grid = [&] {
        if (c.resolution == 0 || c.resolution % 2 == 0 || c.resolution > 2001)
            invalid("'resolution' must be odd and at most 2001");
    };
    if (c.command == "holonomy") {
        need_point();
        check_beta(c.beta, "beta");
        check_t();
        if (std::abs(static_cast<double>(c.steps)) * c.t > c.T_max)
            invalid("|steps| * t exceeds T_max");
    } else if (c.command == "rset") {
        need_point();
        check_t();
        check_grid();
        if (c.kind == "rset") {
            check_beta(c.beta, "beta");
            if (c.n_max < 1)
                invalid("'n_max' must be at least 1");
            if (c.direction != "stable" && c.direction != "unstable" && c.direction != "both")
                invalid("'direction' must be stable, unstable or both");
            if (c.tolerance_factor && !(*c.tolerance_factor >= 0.0))
                invalid("'tolerance_factor' must be non-negative");
            if (c.gamma && (!(*c.gamma >= 0.0) || *c.gamma > c.beta / Lt * (1.0 + 1e-12)))
                invalid("'gamma' must lie in [0, beta / L^t]");
        } else if (c.kind == "dynamical_ball") {
            check_beta(c.epsilon, "epsilon");
        } else if (c.kind == "rstable") {
            if (!j.contains("resolution"))
                c.resolution = 21;
            if (!j.contains("n_max"))
                c.n_max = 30;
            if (c.eps_list.empty())
                c.eps_list = {0.05, 0.02, 0.01};
            if (c.eta_grid.empty())
                c.eta_grid = default_eta_grid();
            for (double e : c.eps_list)
                check_beta(e, "eps_list");
            for (double e : c.eta_grid)
                if (!(e > 0.0))
                    invalid("'eta_grid' entries must be positive");
        } else {
            invalid("'kind' must be rset, dynamical_ball or rstable");
        }
    } else if (c.command == "expansivity") {
        need_points();
        check_beta(c.beta, "beta");
        check_t();
        check_grid();
        if (c.n_max < 1)
            invalid("'n_max' must be at least 1");
    } else if (c.command == "entropy") {
        if (!c.sample) {
            c.sample = default_sample_spec(f);
            c.sample->seed = c.seed;
        }
        if (c.eps_list.empty())
            c.eps_list = {0.2, 0.1};
        if (c.t_list.empty())
            c.t_list = {0, 1, 2, 3, 4, 5, 6, 7, 8};
        for (std::size_t i = 0; i < c.eps_list.size(); ++i)
            if (!(c.eps_list[i] > 0.0) || (i > 0 && !(c.eps_list[i] < c.eps_list[i - 1])))
                invalid("'eps_list' must be positive and strictly decreasing");
        for (std::size_t i = 0; i < c.t_list.size(); ++i)
            if (!(c.t_list[i] >= 0.0) || (i > 0 && !(c.t_list[i] > c.t_list[i - 1])))
                invalid("'t_list' must be non-negative and strictly increasing");
        if (c.t_list.back() > c.T_max)
            invalid("'t_list' exceeds T_max");
        if (c.sample->count == 0 || c.sample->count > 200000)
            invalid("'sample.count' must lie in [1, 200000]");
        if (c.orbit_step && !(*c.orbit_step > 0.0))
            invalid("'orbit_step' must be positive");
    } else if (c.command == "uef") {
        need_points();
        check_beta(c.beta, "beta");
        check_t();
        if (!(c.eta > 0.0))
            invalid("'eta' must be positive");
        if (c.horizon_budget < 1 || c.angles < 1 || c.radii < 1)
            invalid("'horizon_budget', 'angles' and 'radii' must be at least 1");
    }
    return c;
}

namespace cli_detail {

inline Json to_json(const Point& p) { return Json::array({p[0], p[1], p[2]}); }
inline Json to_json(const Vec2& v) { return Json::array({v[0], v[1]}); }

inline std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class Outputs {
public:
    explicit Outputs(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    std::ofstream open(const std::string& name)
    {
        files_.push_back(name);
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os)
            throw Error(ErrorCode::Validation, "cannot write " + (dir_ / name).string());
        return os;
    }
    void json(const std::string& name, const Json& j) { open(name) << j.dump(2) << "\n"; }
    const std::vector<std::string>& files() const { return files_; }
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

inline std::vector<Point> resolve_points(const ExperimentConfig& c, const FlowSpec& f)
{
    if (c.points) {
        std::vector<Point> out;
        for (const Vec3& p : *c.points)
            out.push_back(wrap(f.manifold, p));
        return out;
    }
    return sample_points(f, *c.sample);
}

inline IntegratorOptions integ(const ExperimentConfig& c)
{
    IntegratorOptions o;
    o.tol = c.tol;
    o.t_max = c.T_max;
    return o;
}

inline Json grid_summary(const RSetGrid& g)
{
    Json j;
    j["direction"] = to_string(g.direction);
    j["beta"] = g.beta;
    j["t"] = g.t;
    j["n_max"] = g.n_max;
    j["tolerance_factor"] = std::isfinite(g.tolerance_factor) ? Json(g.tolerance_factor) : Json("inf");
    j["resolution"] = g.resolution;
    j["domain_radius"] = g.domain_radius;
    j["cell_width"] = g.cell_width;
    j["certified_horizon"] = g.certified_horizon;
    j["horizon_stop"] = to_string(g.horizon_stop);
    j["members"] = g.member_count();
    j["cw_cells"] = g.cw_count();
    j["center_only"] = g.member_count() == 1 && g.member[g.center_index()];
    Json tally;
    for (CellState s : {CellState::Violated, CellState::LeftTube, CellState::Timeout, CellState::NoCrossing,
                        CellState::OutsideDomain, CellState::OutOfManifold}) {
        const char* name = s == CellState::Violated ? "tolerance_violated" : error_state(s);
        tally[name] = g.tally(s);
    }
    j["non_members"] = tally;
    return j;
}

inline Json run_holonomy(const ExperimentConfig& c, const FlowSpec& f, Outputs& out)
{
    const auto opt = integ(c);
    const Point x = wrap(f.manifold, *c.point);
    const CrossSection s0 = make_section(f, x, c.beta);
    const Vec2 yc = c.y.value_or(Vec2{0.0, 0.0});
    const Point y = exp_map(f.manifold, s0.frame, yc);
    Json j;
    j["base"] = to_json(x);
    j["section_radius"] = s0.radius;
    j["domain_radius"] = holonomy_domain_radius(f, s0, c.t);
    j["y"] = to_json(y);
    j["t"] = c.t;
    j["steps"] = c.steps;
    const HolonomyOrbit o = holonomy_orbit(f, x, c.beta, c.t, c.steps, y, opt, c.check_tube);
    auto csv = out.open("holonomy.csv");
    csv << "step,hit_time,x,y,z,u,v,tube_ok,analytic_error\n";
    double worst = 0.0;
    bool have_analytic = false;
    for (std::size_t k = 0; k < o.images.size(); ++k) {
        const auto& r = o.images[k];
        const double sgn = c.steps < 0 ? -1.0 : 1.0;
        std::string err = "";
        if (f.analytic_holonomy) {
            if (const auto a = f.analytic_holonomy(y, sgn * c.t * static_cast<double>(k + 1))) {
                const double e = distance(f.manifold, *a, r.image);
                worst = std::max(worst, e);
                have_analytic = true;
                err = fmt(e);
            }
        }
        csv << (k + 1) << ',' << fmt(r.hit_time) << ',' << fmt(r.image[0]) << ',' << fmt(r.image[1]) << ','
            << fmt(r.image[2]) << ',' << fmt(r.coords[0]) << ',' << fmt(r.coords[1]) << ',' << (r.tube_ok ? 1 : 0)
            << ',' << err << "\n";
    }
    j["completed_steps"] = o.images.size();
    j["failure"] = o.failed_step ? Json(to_string(o.failure)) : Json(nullptr);
    j["failed_step"] = o.failed_step ? Json(*o.failed_step) : Json(nullptr);
    j["tube_ok_all"] = std::all_of(o.images.begin(), o.images.end(), [](const auto& r) { return r.tube_ok; });
    j["analytic_max_error"] = have_analytic ? Json(worst) : Json(nullptr);
    if (!o.images.empty())
        j["final_coords"] = to_json(o.images.back().coords);
    out.json("holonomy.json", j);
    return j;
}

inline Json run_rset(const ExperimentConfig& c, const FlowSpec& f, Outputs& out)
{
    const auto opt = integ(c);
    const Point x = wrap(f.manifold, *c.point);
    Json j;
    j["base"] = to_json(x);
    j["kind"] = c.kind;
    if (c.kind == "dynamical_ball") {
        const DynamicalBall b = dynamical_ball(f, x, c.n, c.epsilon, c.t, c.resolution, c.threads, opt);
        auto csv = out.open("ball.csv");
        write_csv(csv, b.grid);
        j["n"] = b.n;
        j["epsilon"] = b.epsilon;
        j["grid"] = grid_summary(b.grid);
        out.json("ball.json", j);
        return j;
    }
    if (c.kind == "rstable") {
        const auto cert = detect_rstable_point(f, x, c.t, c.eps_list, c.eta_grid, c.n_max, c.resolution,
                                               c.threads, opt);
        j["rstable"] = cert.rstable;
        j["n_max"] = cert.n_max;
        Json pairs = Json::array();
        for (const auto& [e, eta] : cert.pairs)
            pairs.push_back({{"epsilon", e}, {"eta", eta ? Json(*eta) : Json(nullptr)}});
        j["pairs"] = pairs;
        j["failing_epsilon"] = cert.failing_epsilon ? Json(*cert.failing_epsilon) : Json(nullptr);
        out.json("rstable.json", j);
        return j;
    }
    RSetParams p;
    p.beta = c.beta;
    p.t = c.t;
    p.n_max = c.n_max;
    p.resolution = c.resolution;
    p.tolerance_factor = c.tolerance_factor;
    p.probe_horizon = c.probe_horizon;
    p.threads = c.threads;
    p.integ = opt;
    Json grids = Json::array();
    for (SetDirection d : {SetDirection::Stable, SetDirection::Unstable}) {
        if (c.direction != "both" && c.direction != to_string(d))
            continue;
        p.direction = d;
        const RSetGrid g = compute_rset(f, x, p);
        auto csv = out.open(std::string("rset_") + to_string(d) + ".csv");
        write_csv(csv, g);
        Json s = grid_summary(g);
        if (c.gamma)
            s["sphere_reach"] = sphere_reach(g, *c.gamma);
        grids.push_back(s);
    }
    if (c.gamma)
        j["gamma"] = *c.gamma;
    j["grids"] = grids;
    out.json("rset.json", j);
    return j;
}

inline Json run_expansivity(const ExperimentConfig& c, const FlowSpec& f, Outputs& out)
{
    const auto pts = resolve_points(c, f);
    const auto v = check_expansivity(f, pts, c.beta, c.t, c.n_max, c.resolution, c.threads, integ(c));
    auto csv = out.open("expansivity.csv");
    csv << "index,x,y,z,stable_members,unstable_members,shared_cells,timeouts,result\n";
    Json points = Json::array();
    for (std::size_t i = 0; i < v.points.size(); ++i) {
        const auto& p = v.points[i];
        csv << i << ',' << fmt(p.x[0]) << ',' << fmt(p.x[1]) << ',' << fmt(p.x[2]) << ',' << p.stable_members << ','
            << p.unstable_members << ',' << p.shared_cells << ',' << p.timeouts << ','
            << (p.trivial() ? "trivial_intersection" : "witness") << "\n";
        if (p.witness) {
            Json w;
            w["index"] = i;
            w["x"] = to_json(p.x);
            w["cell"] = {p.witness->i, p.witness->j};
            w["coords"] = to_json(p.witness->coords);
            Json fw = Json::array(), bw = Json::array();
            for (const auto& q : p.witness->forward)
                fw.push_back(to_json(q));
            for (const auto& q : p.witness->backward)
                bw.push_back(to_json(q));
            w["forward_images"] = fw;
            w["backward_images"] = bw;
            points.push_back(w);
        }
    }
    Json j;
    j["flow"] = v.flow;
    j["samples"] = v.points.size();
    j["beta"] = v.beta;
    j["t"] = v.t;
    j["n_max"] = v.n_max;
    j["resolution"] = v.resolution;
    j["overall"] = v.overall();
    j["trivial_points"] = std::count_if(v.points.begin(), v.points.end(), [](const auto& p) { return p.trivial(); });
    j["witnesses"] = points;
    out.json("expansivity.json", j);
    return j;
}

inline Json run_entropy(const ExperimentConfig& c, const FlowSpec& f, Outputs& out)
{
    const auto r = entropy_estimate(f, *c.sample, c.eps_list, c.t_list, c.orbit_step, c.threads, integ(c));
    {
        auto csv = out.open("entropy.csv");
        write_csv(csv, r);
    }
    for (std::size_t e = 0; e < r.eps_list.size(); ++e) {
        auto dat = out.open("entropy_eps" + std::to_string(e) + ".dat");
        write_dat(dat, r, e);
    }
    Json j;
    j["flow"] = r.flow;
    j["samples"] = r.sample_count;
    j["orbit_step"] = r.orbit_step;
    j["eps_list"] = r.eps_list;
    j["t_list"] = r.t_list;
    Json slopes = Json::array();
    for (std::size_t e = 0; e < r.eps_list.size(); ++e) {
        Json s;
        s["eps"] = r.eps_list[e];
        s["slope"] = std::isfinite(r.slopes[e]) ? Json(r.slopes[e]) : Json(nullptr);
        if (r.windows[e].first < r.t_list.size())
            s["t_window"] = {r.t_list[r.windows[e].first], r.t_list[r.windows[e].second]};
        else
            s["t_window"] = nullptr;
        slopes.push_back(s);
    }
    j["slopes"] = slopes;
    j["verdict"] = r.verdict;
    j["uncertainty"] = r.uncertainty;
    j["known_entropy"] = f.known_entropy ? Json(*f.known_entropy) : Json(nullptr);
    out.json("entropy.json", j);
    return j;
}

inline Json run_uef(const ExperimentConfig& c, const FlowSpec& f, Outputs& out)
{
    const auto pts = resolve_points(c, f);
    const auto r = uniform_expansiveness_scan(f, pts, c.eta, c.beta, c.t, c.horizon_budget, c.angles, c.radii,
                                              c.threads, integ(c));
    auto csv = out.open("uef.csv");
    csv << "index,x,y,z,speed,separation_index\n";
    for (std::size_t i = 0; i < r.per_sample.size(); ++i)
        csv << i << ',' << fmt(pts[i][0]) << ',' << fmt(pts[i][1]) << ',' << fmt(pts[i][2]) << ','
            << fmt(field_norm(f, pts[i])) << ',' << r.per_sample[i] << "\n";
    Json j;
    j["flow"] = r.flow;
    j["K"] = std::to_string(r.samples) + " sampled points of " + r.flow;
    j["A"] = r.A;
    j["max_speed"] = r.max_speed;
    j["eta"] = r.eta;
    j["beta"] = r.beta;
    j["t"] = r.t;
    j["budget"] = r.budget;
    j["status"] = to_string(r.status);
    j["N_eta"] = r.status == UefStatus::Found ? Json(r.N_eta) : Json(nullptr);
    j["pairs_tested"] = r.pairs_tested;
    if (r.witness)
        j["witness"] = {{"x", to_json(r.witness->first)}, {"y", to_json(r.witness->second)}};
    out.json("uef.json", j);
    return j;
}

/// The small module-level checks: one entry per example with value and expectation.
inline Json run_demo(const ExperimentConfig& c, Outputs& out)
{
    const auto opt = integ(c);
    Json items = Json::array();
    auto add = [&](const std::string& name, Json value, Json expected, bool pass) {
        items.push_back({{"name", name}, {"value", value}, {"expected", expected}, {"pass", pass}});
    };
    auto near = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };
    const FlowSpec torus = flows::solid_torus();
    const FlowSpec cat = flows::cat_suspension();
    const FlowSpec rigid = flows::rigid_rotation();
    const auto& tm = torus.manifold;
    const auto& cm = cat.manifold;

    {
        const Point p = wrap(tm, {2.5, 0.0, 0.0});
        add("wrap torus x=2.5", p[0], -1.5, near(p[0], -1.5, 1e-12));
        const Point q = wrap(cm, {0.2, 0.3, 1.0});
        add("wrap cat s=1", to_json(q), Json::array({0.7, 0.5, 0.0}),
            near(q[0], 0.7, 1e-12) && near(q[1], 0.5, 1e-12) && q[2] == 0.0);
        const Point r = wrap(tm, {0.3, 0.2, 0.1});
        add("wrap torus interior", to_json(r), Json::array({0.3, 0.2, 0.1}), r == Point{{0.3, 0.2, 0.1}});
    }
    {
        const double d1 = distance(tm, wrap(tm, {-1.9, 0, 0}), wrap(tm, {1.9, 0, 0}));
        add("distance torus wrap-around", d1, 0.2, near(d1, 0.2, 1e-12));
        const double d2 = distance(cm, wrap(cm, {0.1, 0.1, 0.0}), wrap(cm, {0.9, 0.9, 0.0}));
        add("distance cat deck translate", d2, std::sqrt(0.08), near(d2, std::sqrt(0.08), 1e-12));
    }
    {
        const NormalFrame a = normal_frame(tm, wrap(tm, {0.5, 0, 0}), {1, 0, 0});
        add("frame torus", Json::array({Json::array({a.axes[0][0], a.axes[0][1], a.axes[0][2]}),
                                        Json::array({a.axes[1][0], a.axes[1][1], a.axes[1][2]})}),
            "{(0,1,0),(0,0,1)}", a.axes[0] == Vec3{0, 1, 0} && a.axes[1] == Vec3{0, 0, 1});
        const NormalFrame b = normal_frame(cm, wrap(cm, {0.5, 0.5, 0}), {0, 0, 1});
        add("frame cat", Json::array({Json::array({b.axes[0][0], b.axes[0][1], b.axes[0][2]}),
                                      Json::array({b.axes[1][0], b.axes[1][1], b.axes[1][2]})}),
            "{(1,0,0),(0,1,0)}", b.axes[0] == Vec3{1, 0, 0} && b.axes[1] == Vec3{0, 1, 0});
        const Point e = exp_map(tm, a, {0.3, 0.0});
        add("exp_map torus", to_json(e), Json::array({0.5, 0.3, 0.0}), e == Point{{0.5, 0.3, 0.0}});
    }
    {
        add("field torus x=0", field_norm(torus, wrap(tm, {0, 0, 0})), 0.0, field_norm(torus, wrap(tm, {0, 0, 0})) == 0.0);
        add("field torus x=-0.5", field_norm(torus, wrap(tm, {-0.5, 0, 0})), 0.5,
            near(field_norm(torus, wrap(tm, {-0.5, 0, 0})), 0.5, 1e-15));
        add("field torus x=1.5", field_norm(torus, wrap(tm, {1.5, 0, 0})), 1.0,
            near(field_norm(torus, wrap(tm, {1.5, 0, 0})), 1.0, 1e-15));
        add("field cat", field_norm(cat, wrap(cm, {0.3, 0.6, 0.7})), 1.0,
            near(field_norm(cat, wrap(cm, {0.3, 0.6, 0.7})), 1.0, 1e-12));
        add("L rigid", rigid.constants.L, 1.0, near(rigid.constants.L, 1.0, 1e-6));
        add("L torus", torus.constants.L, std::exp(1.0), near(torus.constants.L, std::exp(1.0), 1e-4));
        add("L cat (adapted metric)", cat.constants.L, cm.gluing->lambda, near(cat.constants.L, cm.gluing->lambda, 1e-4));
    }
    {
        const Point r = flow_map(rigid, wrap(tm, {0, 0.5, 0}), 4.0, opt);
        add("flow rigid period 4", to_json(r), Json::array({0.0, 0.5, 0.0}), distance(tm, r, wrap(tm, {0, 0.5, 0})) < 1e-9);
        const Point s = flow_map(torus, wrap(tm, {0.5, 0, 0}), std::log(2.0), opt);
        add("flow torus ln2", to_json(s), Json::array({1.0, 0.0, 0.0}), near(s[0], 1.0, 1e-7));
    }
    {
        const CrossSection s0 = make_section(cat, wrap(cm, {0.65, 0.5, 0.0}), 0.1);
        const CrossingEvent e =
            first_crossing(cat, wrap(cm, {0.2, 0.3, 0.5}), s0, 0.0, 1.0, Direction::Forward, opt);
        add("first crossing cat", Json::array({e.hit_time, e.hit_point[0], e.hit_point[1], e.hit_point[2]}),
            Json::array({0.5, 0.7, 0.5, 0.0}), near(e.hit_time, 0.5, 1e-9) && distance(cm, e.hit_point, wrap(cm, {0.7, 0.5, 0.0})) < 1e-9);
        const CrossSection r0 = make_section(rigid, wrap(tm, {0, 0, 0}), 0.1);
        std::string what = "none";
        try {
            first_crossing(rigid, wrap(tm, {2, 0.5, 0}), r0, 0.0, 3.0, Direction::Forward, opt);
        } catch (const Error& err) {
            what = to_string(err.code());
        }
        add("first crossing rigid antipodal", what, "LeftTube", what == "LeftTube");
    }
    {
        const Point x = wrap(tm, {0.5, 0, 0});
        const CrossSection s0 = make_section(torus, x, 0.1);
        const HolonomyResult h = holonomy(torus, s0, 1.0, wrap(tm, {0.5, 0.01, 0}), opt);
        const double x1 = flow_map(torus, x, 1.0, opt)[0];
        add("holonomy torus isometric on disks", to_json(h.image), Json::array({x1, 0.01, 0.0}),
            near(h.image[0], x1, 1e-8) && near(h.image[1], 0.01, 1e-12) && near(h.image[2], 0.0, 1e-12));
        const Point c = wrap(cm, {0.5, 0.5, 0.0});
        const CrossSection c0 = make_section(cat, c, 0.1);
        const Point y = exp_map(cm, c0.frame, {0.01, -0.02});
        const HolonomyOrbit o = holonomy_orbit(cat, c, 0.1, 1.0, 3, y, opt);
        double err = 0.0;
        for (std::size_t k = 0; k < o.images.size(); ++k)
            err = std::max(err, distance(cm, o.images[k].image, *cat.analytic_holonomy(y, static_cast<double>(k + 1))));
        add("holonomy cat three steps vs A^k v", err, 0.0, o.images.size() == 3 && err < 1e-6);
    }
    {
        const CrossSection s = make_section(torus, wrap(tm, {-0.5, 0, 0}), 0.1);
        add("section torus radius", s.radius, 0.05, near(s.radius, 0.05, 1e-15));
        std::string what = "none";
        try {
            make_section(torus, wrap(tm, {0, 0.2, 0}), 0.1);
        } catch (const Error& err) {
            what = to_string(err.code());
        }
        add("section torus singular", what, "SingularBase", what == "SingularBase");
    }
    const bool all = std::all_of(items.begin(), items.end(), [](const Json& i) { return i["pass"].get<bool>(); });
    Json j;
    j["checks"] = items;
    j["all_pass"] = all;
    out.json("demo.json", j);
    return j;
}

} // namespace cli_detail

struct RunResult {
    int exit_code = 0;
    std::string message;
    Json summary;
};

/// Runs one experiment, writing reports and manifest.json into output_dir.
/// Exit codes: 0 success, 2 validation error, 3 computation error.
inline RunResult run(const Json& config_json, std::ostream& log = std::cerr)
{
    const auto start = std::chrono::steady_clock::now();
    RunResult res;
    std::optional<ExperimentConfig> cfg;
    std::optional<cli_detail::Outputs> out;
    try {
        cfg = parse_config(config_json);
        out.emplace(cfg->output_dir);
        if (cfg->command == "demo") {
            res.summary = cli_detail::run_demo(*cfg, *out);
        } else {
            const FlowSpec f = flows::by_name(cfg->flow);
            if (cfg->command == "holonomy")
                res.summary = cli_detail::run_holonomy(*cfg, f, *out);
            else if (cfg->command == "rset")
                res.summary = cli_detail::run_rset(*cfg, f, *out);
            else if (cfg->command == "expansivity")
                res.summary = cli_detail::run_expansivity(*cfg, f, *out);
            else if (cfg->command == "entropy")
                res.summary = cli_detail::run_entropy(*cfg, f, *out);
            else
                res.summary = cli_detail::run_uef(*cfg, f, *out);
        }
    } catch (const Error& e) {
        res.exit_code = e.code() == ErrorCode::Validation ? 2 : 3;
        res.message = e.what();
    } catch (const nlohmann::json::exception& e) {
        res.exit_code = 2;
        res.message = std::string("config: ") + e.what();
    } catch (const std::exception& e) {
        res.exit_code = 3;
        res.message = e.what();
    }
    if (res.exit_code != 0)
        log << "rexp: " << res.message << "\n";
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out) {
        std::string dir = cfg ? cfg->output_dir : "out";
        if (!cfg && config_json.is_object() && config_json.contains("output_dir") &&
            config_json["output_dir"].is_string())
            dir = config_json["output_dir"].get<std::string>();
        try {
            out.emplace(dir);
        } catch (...) {
        }
    }
    if (out) {
        Json m;
        m["command"] = cfg ? Json(cfg->command) : Json(nullptr);
        m["flow"] = cfg ? Json(cfg->flow) : Json(nullptr);
        m["config"] = config_json;
        m["seed"] = cfg ? Json(cfg->seed) : Json(nullptr);
        m["threads"] = cfg ? Json(cfg->threads) : Json(nullptr);
        m["versions"] = {{"rexp", kVersion},
                         {"compiler", __VERSION__},
                         {"cplusplus", static_cast<long>(__cplusplus)},
                         {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                               std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                               std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
        m["wall_seconds"] = wall;
        m["exit_code"] = res.exit_code;
        m["status"] = res.exit_code == 0 ? "ok" : res.exit_code == 2 ? "validation_error" : "computation_error";
        m["error"] = res.message.empty() ? Json(nullptr) : Json(res.message);
        m["outputs"] = out->files();
        m["summary"] = res.summary;
        try {
            std::ofstream(out->dir() / "manifest.json", std::ios::binary) << m.dump(2) << "\n";
        } catch (...) {
        }
    }
    return res;
}

/// Reads a JSON config file. Throws Validation on I/O or syntax errors.
inline Json load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Validation, "cannot read config " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Validation, "config " + path.string() + ": " + e.what());
    }
}

} // namespace rexp
