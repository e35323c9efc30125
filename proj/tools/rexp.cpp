// Command-line front end: each subcommand loads an optional JSON config,
// applies flag overrides and runs one experiment.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rexp/cli.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> flow, output_dir, direction, kind;
    std::optional<double> beta, t, gamma, tol, T_max, eta, epsilon, orbit_step;
    std::optional<long> n_max, resolution, threads, seed, steps, n, horizon_budget;
    std::optional<std::vector<double>> point, y, eps_list, t_list;
    std::optional<std::string> tolerance_factor;
    std::vector<std::string> sets;
};

void add_options(CLI::App& app, Overrides& o, const std::string& command)
{
    app.add_option("-c,--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--output-dir", o.output_dir, "directory for reports");
    app.add_option("--threads", o.threads, "worker threads");
    app.add_option("--seed", o.seed, "random seed");
    app.add_option("--tol", o.tol, "integrator tolerance");
    app.add_option("--T-max", o.T_max, "largest integration time");
    app.add_option("--set", o.sets, "raw override key=<json value>, repeatable");
    if (command == "demo")
        return;
    app.add_option("--flow", o.flow, "solid_torus | cat_suspension | rigid_rotation");
    app.add_option("--beta", o.beta);
    app.add_option("--t", o.t, "holonomy time step");
    if (command == "holonomy" || command == "rset") {
        app.add_option("--point", o.point, "base point x y z")->expected(3);
    }
    if (command == "holonomy") {
        app.add_option("--y", o.y, "section coordinates of the moved point")->expected(2);
        app.add_option("--steps", o.steps, "number of holonomy steps (negative: backward)");
    }
    if (command == "rset" || command == "expansivity") {
        app.add_option("--n-max", o.n_max);
        app.add_option("--resolution", o.resolution);
    }
    if (command == "rset") {
        app.add_option("--direction", o.direction, "stable | unstable | both");
        app.add_option("--kind", o.kind, "rset | dynamical_ball | rstable");
        app.add_option("--gamma", o.gamma);
        app.add_option("--tolerance-factor", o.tolerance_factor, "number or inf");
        app.add_option("--n", o.n, "dynamical ball steps");
        app.add_option("--epsilon", o.epsilon, "dynamical ball radius factor");
        app.add_option("--eps-list", o.eps_list, "rstable epsilons");
    }
    if (command == "entropy") {
        app.add_option("--eps-list", o.eps_list);
        app.add_option("--t-list", o.t_list);
        app.add_option("--orbit-step", o.orbit_step);
    }
    if (command == "uef") {
        app.add_option("--eta", o.eta);
        app.add_option("--horizon-budget", o.horizon_budget);
    }
}

rexp::Json build_config(const std::string& command, const Overrides& o)
{
    rexp::Json j = o.config.empty() ? rexp::Json::object() : rexp::load_config(o.config);
    if (!j.is_object())
        throw rexp::Error(rexp::ErrorCode::Validation, "config must be a JSON object");
    if (!command.empty())
        j["command"] = command;
    auto put = [&](const char* key, const auto& v) {
        if (v)
            j[key] = *v;
    };
    put("flow", o.flow);
    put("output_dir", o.output_dir);
    put("direction", o.direction);
    put("kind", o.kind);
    put("beta", o.beta);
    put("t", o.t);
    put("gamma", o.gamma);
    put("tol", o.tol);
    put("T_max", o.T_max);
    put("eta", o.eta);
    put("epsilon", o.epsilon);
    put("orbit_step", o.orbit_step);
    put("n_max", o.n_max);
    put("resolution", o.resolution);
    put("threads", o.threads);
    put("seed", o.seed);
    put("steps", o.steps);
    put("n", o.n);
    put("horizon_budget", o.horizon_budget);
    put("point", o.point);
    put("y", o.y);
    put("eps_list", o.eps_list);
    put("t_list", o.t_list);
    if (o.tolerance_factor) {
        if (*o.tolerance_factor == "inf")
            j["tolerance_factor"] = "inf";
        else
            j["tolerance_factor"] = std::stod(*o.tolerance_factor);
    }
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw rexp::Error(rexp::ErrorCode::Validation, "--set expects key=value, got '" + s + "'");
        const std::string key = s.substr(0, eq), value = s.substr(eq + 1);
        try {
            j[key] = rexp::Json::parse(value);
        } catch (const nlohmann::json::exception&) {
            j[key] = value;
        }
    }
    return j;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Rescaled expansiveness experiments for flows with singularities"};
    app.require_subcommand(0, 1);
    Overrides top;
    app.add_option("-c,--config", top.config, "run the command named in this config")->check(CLI::ExistingFile);
    app.add_flag_callback("--version", [] {
        std::cout << "rexp " << rexp::kVersion << "\n";
        throw CLI::Success();
    });

    std::map<std::string, Overrides> overrides;
    std::map<std::string, CLI::App*> subs;
    const std::map<std::string, std::string> help{
        {"holonomy", "holonomy maps between rescaled cross sections"},
        {"rset", "rescaled stable/unstable set grids, dynamical balls, rstable points"},
        {"expansivity", "stable/unstable intersection test at sampled points"},
        {"entropy", "separated-set entropy estimate"},
        {"uef", "uniform expansiveness horizon scan"},
        {"demo", "module-level checks"}};
    for (const auto& name : rexp::command_names()) {
        subs[name] = app.add_subcommand(name, help.at(name));
        add_options(*subs[name], overrides[name], name);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    std::string command;
    Overrides* o = &top;
    for (const auto& [name, sub] : subs)
        if (sub->parsed()) {
            command = name;
            o = &overrides[name];
        }
    if (command.empty() && top.config.empty()) {
        std::cerr << app.help();
        return 2;
    }

    rexp::Json cfg;
    try {
        cfg = build_config(command, *o);
    } catch (const std::exception& e) {
        std::cerr << "rexp: " << e.what() << "\n";
        return 2;
    }
    const rexp::RunResult r = rexp::run(cfg);
    if (r.exit_code == 0)
        std::cout << r.summary.dump(2) << "\n";
    return r.exit_code;
}
