// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rexp/cli.hpp"

using namespace rexp;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& measured)
{
    std::printf("%s [%2d] %s | %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), measured.c_str());
    std::fflush(stdout);
    failures += !pass;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path config_path(const std::string& name) { return fs::path(REXP_SOURCE_DIR) / "configs" / (name + ".json"); }

fs::path work_dir()
{
    static const fs::path p = [] {
        fs::path d = fs::temp_directory_path() / "rexp_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

RunResult run_config(const std::string& name, const fs::path& out, unsigned threads = 1)
{
    Json j = load_config(config_path(name));
    j["output_dir"] = out.string();
    j["threads"] = threads;
    std::ostringstream log;
    return run(j, log);
}

Point random_regular(const FlowSpec& f, std::mt19937_64& rng, double min_speed, double max_disk_radius)
{
    for (;;) {
        const Point x = sample_uniform(f.manifold, rng);
        if (field_norm(f, x) < min_speed)
            continue;
        if (f.manifold.disk_axes) {
            const auto [i, j] = *f.manifold.disk_axes;
            if (std::hypot(x[i], x[j]) > max_disk_radius)
                continue;
        }
        return x;
    }
}

std::vector<Point> torus_points(std::size_t n, std::uint64_t seed)
{
    const FlowSpec f = flows::solid_torus();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.1, 1.0), ud(-1.0, 1.0);
    std::vector<Point> pts;
    while (pts.size() < n) {
        const double y = ud(rng), z = ud(rng);
        if (std::hypot(y, z) > 0.9)
            continue;
        const double x = (rng() & 1 ? 1.0 : -1.0) * ux(rng);
        pts.push_back(wrap(f.manifold, {x, y, z}));
    }
    return pts;
}

std::vector<Point> cat_points(std::size_t n, std::uint64_t seed)
{
    const FlowSpec f = flows::cat_suspension();
    std::mt19937_64 rng(seed);
    std::vector<Point> pts;
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back(sample_uniform(f.manifold, rng));
    return pts;
}

void criterion_1()
{
    const auto t0 = std::chrono::steady_clock::now();
    const FlowSpec f = flows::cat_suspension();
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Point x = sample_uniform(f.manifold, rng);
        const CrossSection s = make_section(f, x, 0.1);
        const double r = holonomy_domain_radius(f, s, 1.0) * std::sqrt(u(rng));
        const double a = 2.0 * std::numbers::pi * u(rng);
        const Point y = exp_map(f.manifold, s.frame, {r * std::cos(a), r * std::sin(a)});
        const HolonomyResult h = holonomy(f, s, 1.0, y);
        worst = std::max(worst, distance(f.manifold, h.image, *f.analytic_holonomy(y, 1.0)));
    }
    const double wall = seconds_since(t0);
    report(1, worst <= 1e-6 && wall < 30.0, "cat holonomy vs v -> A v mod 1, 1000 points, sup <= 1e-6, < 30 s",
           fmt("sup error %.3g, %.2f s", worst, wall));
}

void criterion_2()
{
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::string measured;
    bool pass = true;
    for (const auto& name : flows::catalog_names()) {
        const FlowSpec f = flows::by_name(name);
        std::size_t bad = 0, done = 0;
        while (done < 1000) {
            const Point x = random_regular(f, rng, 1e-3, 0.95);
            const double t = 3.0 * u(rng);
            const CrossSection s = make_section(f, x, 0.1);
            const double r = holonomy_domain_radius(f, s, t) * std::sqrt(u(rng));
            const double a = 2.0 * std::numbers::pi * u(rng);
            Point y;
            try {
                y = exp_map(f.manifold, s.frame, {r * std::cos(a), r * std::sin(a)});
            } catch (const Error&) {
                continue;
            }
            bad += !tube_ok(f, x, y, 0.1, t);
            ++done;
        }
        pass = pass && bad == 0;
        measured += fmt("%s %zu/1000 violations; ", name.c_str(), bad);
    }
    report(2, pass, "rescaled tube property, t in [0,3], 1000 pairs per flow, zero violations", measured);
}

void criterion_3()
{
    const auto t0 = std::chrono::steady_clock::now();
    const FlowSpec f = flows::solid_torus();
    const auto pts = torus_points(20, 303);
    RSetParams p;
    p.beta = 0.1;
    p.t = 1.0;
    p.n_max = 40;
    p.resolution = 101;
    std::size_t centre_only = 0, timeouts = 0, cut = 0;
    std::size_t min_horizon = 40;
    for (const Point& x : pts) {
        bool ok = true;
        for (SetDirection d : {SetDirection::Stable, SetDirection::Unstable}) {
            p.direction = d;
            const RSetGrid g = compute_rset(f, x, p);
            ok = ok && g.member_count() == 1 && g.member[g.center_index()] && g.cw_count() == 1;
            timeouts += g.tally(CellState::Timeout);
            cut += g.certified_horizon < 40;
            min_horizon = std::min(min_horizon, g.certified_horizon);
        }
        centre_only += ok;
    }
    const double wall = seconds_since(t0);
    report(3, centre_only == 20 && wall < 300.0,
           "solid torus W^s and W^u grids are the centre cell at 20 points (n_max 40, res 101), < 5 min",
           fmt("%zu/20 centre-only, timeout cells %zu, grids with horizon < 40: %zu (min %zu), %.1f s", centre_only,
               timeouts, cut, min_horizon, wall));
}

void criterion_4()
{
    const auto cat = check_expansivity(flows::cat_suspension(), cat_points(20, 404), 0.1, 1.0, 12, 101);
    const auto torus = check_expansivity(flows::solid_torus(), torus_points(20, 405), 0.1, 1.0, 40, 101);
    const FlowSpec rigid = flows::rigid_rotation();
    std::mt19937_64 rng(406);
    std::vector<Point> rpts;
    for (int i = 0; i < 20; ++i)
        rpts.push_back(random_regular(rigid, rng, 0.0, 0.85));
    const auto rot = check_expansivity(rigid, rpts, 0.1, 1.0, 12, 51);
    auto trivial = [](const ExpansivityVerdict& v) {
        return std::count_if(v.points.begin(), v.points.end(), [](const auto& p) { return p.trivial(); });
    };
    const auto a = trivial(cat), b = trivial(torus), c = trivial(rot);
    report(4, a == 20 && b == 20 && c == 0,
           "W^s cap W^u = centre at 20 cat and 20 torus points; rigid rotation counterexample at every point",
           fmt("cat %ld/20, torus %ld/20 trivial; rigid %ld/20 counterexamples", a, b, 20 - c));
}

void criterion_5()
{
    const FlowSpec f = flows::cat_suspension();
    const auto& gl = *f.manifold.gluing;
    const double lam_minus = 1.0 / gl.lambda;
    double worst = 0.0;
    for (const Point& x : cat_points(5, 505)) {
        RSetParams p;
        p.n_max = 12;
        p.resolution = 101;
        const RSetGrid g = compute_rset(f, x, p);
        std::vector<std::vector<Point>> images(7);
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (!g.in_cw(k))
                continue;
            const Point y = exp_map(f.manifold, g.section.frame, g.witness[k]);
            images[0].push_back(y);
            const HolonomyOrbit o = holonomy_orbit(f, x, 0.1, 1.0, 6, y);
            for (std::size_t n = 1; n <= 6; ++n)
                images[n].push_back(o.images.at(n - 1).image);
        }
        auto diameter = [&](const std::vector<Point>& s) {
            double d = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i)
                for (std::size_t j = 0; j < i; ++j)
                    d = std::max(d, distance(f.manifold, s[i], s[j]));
            return d;
        };
        double prev = diameter(images[0]);
        for (std::size_t n = 1; n <= 6; ++n) {
            const double d = diameter(images[n]);
            const double rel = std::abs(d / prev / lam_minus - 1.0);
            worst = std::max(worst, rel);
            prev = d;
        }
    }
    report(5, worst <= 0.10, "cat stable-set image diameters shrink by (3-sqrt5)/2 per step, n <= 6, within 10%",
           fmt("lambda_- = %.5f, worst relative error %.2e over 5 points", lam_minus, worst));
}

void criterion_6()
{
    const FlowSpec f = flows::cat_suspension();
    const double gamma = 0.5 * 0.1 / f.constants.L;
    std::size_t ok = 0;
    const auto pts = cat_points(20, 606);
    for (const Point& x : pts) {
        bool both = true;
        for (SetDirection d : {SetDirection::Stable, SetDirection::Unstable}) {
            RSetParams p;
            p.direction = d;
            both = both && sphere_reach(compute_rset(f, x, p), gamma);
        }
        ok += both;
    }
    report(6, ok == pts.size(), "cat sphere_reach in both directions at gamma = 0.5 beta / L^t",
           fmt("%zu/%zu points", ok, pts.size()));
}

void criterion_7()
{
    const FlowSpec f = flows::cat_suspension();
    const auto r = uniform_expansiveness_scan(f, cat_points(20, 707), 0.01, 0.1, 1.0, 20);
    const double expected = std::ceil(std::log(0.1 / 0.01) / std::log(f.manifold.gluing->lambda));
    const bool pass = r.status == UefStatus::Found && std::abs(double(r.N_eta) - expected) <= 1.0;
    report(7, pass, "cat uniform expansiveness, eta 0.01, beta 0.1: N_eta within 1 of 3",
           fmt("status %s, N_eta %zu, expected %.0f", to_string(r.status), r.N_eta, expected));
}

void criterion_8()
{
    const auto t0 = std::chrono::steady_clock::now();
    const RunResult r = run_config("entropy_cat", work_dir() / "c8");
    const double wall = seconds_since(t0);
    if (r.exit_code != 0) {
        report(8, false, "cat entropy estimate in [0.77, 1.15]", "run failed: " + r.message);
        return;
    }
    const double h = r.summary["verdict"].get<double>();
    const auto n = r.summary["samples"].get<std::size_t>();
    const double tmax = r.summary["t_list"].back().get<double>();
    const bool pass = h >= 0.77 && h <= 1.15 && n <= 20000 && tmax <= 8.0 && wall < 300.0;
    report(8, pass, "cat entropy estimate in [0.77, 1.15], eps {0.2, 0.1}, t <= 8, <= 2e4 samples, < 5 min",
           fmt("estimate %.4f +- %.4f (oracle %.4f), %zu samples, %.1f s", h, r.summary["uncertainty"].get<double>(),
               std::log(flows::cat_suspension().manifold.gluing->lambda), n, wall));
}

void criterion_9()
{
    const RunResult a = run_config("entropy_rigid", work_dir() / "c9a");
    const RunResult b = run_config("entropy_torus", work_dir() / "c9b");
    if (a.exit_code != 0 || b.exit_code != 0) {
        report(9, false, "entropy zero controls", "run failed: " + a.message + b.message);
        return;
    }
    const double hr = a.summary["verdict"].get<double>(), ht = b.summary["verdict"].get<double>();
    report(9, std::abs(hr) <= 0.02 && ht <= 0.05, "rigid rotation |h| <= 0.02; solid torus (|x| >= 0.05) h <= 0.05",
           fmt("rigid %.4f, torus %.4f", hr, ht));
}

std::string csv_bytes(const fs::path& out)
{
    std::string all;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(out))
        if (e.path().extension() == ".csv")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        all += p.filename().string() + "\n" + os.str();
    }
    return all;
}

void criterion_10()
{
    std::size_t configs = 0, mismatched = 0;
    std::string bad;
    for (const auto& e : fs::directory_iterator(fs::path(REXP_SOURCE_DIR) / "configs")) {
        const std::string name = e.path().stem().string();
        ++configs;
        std::vector<std::string> blobs;
        std::vector<int> codes;
        for (unsigned threads : {1u, 2u, 8u, 1u}) {
            const fs::path out = work_dir() / "c10" / (name + "_" + std::to_string(threads) + "_" +
                                                       std::to_string(blobs.size()));
            codes.push_back(run_config(name, out, threads).exit_code);
            blobs.push_back(csv_bytes(out));
        }
        const bool same = std::all_of(blobs.begin(), blobs.end(), [&](const auto& b) { return b == blobs[0]; }) &&
                          std::all_of(codes.begin(), codes.end(), [&](int c) { return c == codes[0]; });
        if (!same) {
            ++mismatched;
            bad += " " + name;
        }
    }
    report(10, mismatched == 0 && configs > 0, "shipped configs give byte-identical CSVs at 1, 2, 8 threads and on rerun",
           fmt("%zu configs, %zu mismatched%s", configs, mismatched, bad.c_str()));
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::function<void()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                      criterion_5, criterion_6, criterion_7, criterion_8,
                                                      criterion_9, criterion_10};
    std::vector<int> only;
    for (int i = 1; i < argc; ++i)
        only.push_back(std::atoi(argv[i]));
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && std::find(only.begin(), only.end(), int(i + 1)) == only.end())
            continue;
        try {
            criteria[i]();
        } catch (const std::exception& e) {
            report(int(i + 1), false, "criterion raised", e.what());
        }
    }
    std::printf("%d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}
