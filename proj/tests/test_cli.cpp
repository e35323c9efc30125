#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rexp/cli.hpp"

using namespace rexp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("rexp_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

Json shipped(const std::string& name, const fs::path& out)
{
    Json j = load_config(fs::path(REXP_SOURCE_DIR) / "configs" / (name + ".json"));
    j["output_dir"] = out.string();
    return j;
}

Json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return Json::parse(in);
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run_quiet(const Json& j)
{
    std::ostringstream log;
    return run(j, log).exit_code;
}

} // namespace

TEST_CASE("validation errors exit with 2 before computing", "[cli]")
{
    const fs::path out = scratch("validation");
    const Json base = {{"command", "rset"}, {"flow", "cat_suspension"}, {"output_dir", out.string()}};
    auto with = [&](const std::string& k, const Json& v) {
        Json j = base;
        j[k] = v;
        return j;
    };
    CHECK(run_quiet(with("beta", 0.5)) == 2);
    CHECK(run_quiet(with("resolution", 100)) == 2);
    CHECK(run_quiet(with("direction", "sideways")) == 2);
    CHECK(run_quiet(with("typo_key", 1)) == 2);
    CHECK(run_quiet(with("gamma", 1.0)) == 2);
    CHECK(run_quiet(with("t", -1.0)) == 2);
    CHECK(run_quiet(with("flow", "lorenz")) == 2);
    CHECK(run_quiet(with("command", "fly")) == 2);
    CHECK(run_quiet({{"command", "entropy"}, {"flow", "rigid_rotation"}, {"eps_list", {0.1, 0.2}},
                     {"output_dir", out.string()}}) == 2);
    CHECK(run_quiet({{"command", "uef"}, {"flow", "cat_suspension"}, {"eta", -1.0}, {"output_dir", out.string()}}) == 2);

    const Json m = read_json(out / "manifest.json");
    CHECK(m["status"] == "validation_error");
    CHECK(m["exit_code"] == 2);
    CHECK(m["outputs"].empty());
}

TEST_CASE("computation errors exit with 3 and keep the manifest", "[cli]")
{
    const fs::path out = scratch("singular");
    CHECK(run_quiet(shipped("holonomy_torus_singular_base", out)) == 3);
    const Json m = read_json(out / "manifest.json");
    CHECK(m["status"] == "computation_error");
    CHECK(m["error"].get<std::string>().find("SingularBase") != std::string::npos);
    CHECK(m["config"]["flow"] == "solid_torus");
}

TEST_CASE("demo reproduces the module examples", "[cli]")
{
    const fs::path out = scratch("demo");
    const RunResult r = run(shipped("demo", out));
    REQUIRE(r.exit_code == 0);
    for (const auto& c : r.summary["checks"]) {
        INFO(c["name"].get<std::string>());
        CHECK(c["pass"].get<bool>());
    }
    CHECK(fs::exists(out / "demo.json"));
}

TEST_CASE("torus rset with defaults is the centre cell", "[cli]")
{
    const fs::path out = scratch("rset_default");
    const Json j = {{"command", "rset"}, {"flow", "solid_torus"}, {"output_dir", out.string()}};
    const RunResult r = run(j);
    REQUIRE(r.exit_code == 0);
    CHECK(r.summary["grids"][0]["members"] == 1);
    CHECK(r.summary["grids"][0]["center_only"] == true);
    const std::string csv = slurp(out / "rset_stable.csv");
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line == "i,j,u,v,member,component,error_state");
    std::size_t members = 0, rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        std::istringstream fields(line);
        std::string cell;
        for (int c = 0; c < 5; ++c)
            std::getline(fields, cell, ',');
        members += cell == "1";
    }
    CHECK(rows == 101 * 101);
    CHECK(members == 1);
}

TEST_CASE("shipped configs give the expected verdicts", "[cli]")
{
    {
        const RunResult r = run(shipped("entropy_rigid", scratch("entropy_rigid")));
        REQUIRE(r.exit_code == 0);
        CHECK(std::abs(r.summary["verdict"].get<double>()) <= 0.02);
    }
    {
        const RunResult r = run(shipped("expansivity_cat", scratch("expansivity_cat")));
        REQUIRE(r.exit_code == 0);
        CHECK(r.summary["overall"] == "consistent-with-R-expansive");
    }
    {
        const RunResult r = run(shipped("uef_cat", scratch("uef_cat")));
        REQUIRE(r.exit_code == 0);
        CHECK(r.summary["status"] == "found");
    }
    {
        const fs::path out = scratch("holonomy_cat");
        const RunResult r = run(shipped("holonomy_cat", out));
        REQUIRE(r.exit_code == 0);
        CHECK(r.summary["analytic_max_error"].get<double>() < 1e-6);
        const Json m = read_json(out / "manifest.json");
        CHECK(m["status"] == "ok");
        CHECK(m["wall_seconds"].get<double>() >= 0.0);
        CHECK(m["versions"]["rexp"] == kVersion);
        CHECK(m["outputs"] == Json::array({"holonomy.csv", "holonomy.json"}));
    }
}

TEST_CASE("every shipped config parses", "[cli]")
{
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(fs::path(REXP_SOURCE_DIR) / "configs")) {
        const Json j = load_config(e.path());
        CHECK_NOTHROW(parse_config(j));
        ++n;
    }
    CHECK(n >= 20);
}

TEST_CASE("CSV bytes do not depend on threads", "[cli]")
{
    for (const std::string name : {"rset_cat_both", "ball_cat", "expansivity_rigid"}) {
        std::vector<std::string> blobs;
        for (int threads : {1, 3}) {
            const fs::path out = scratch(name + std::to_string(threads));
            Json j = shipped(name, out);
            j["threads"] = threads;
            REQUIRE(run_quiet(j) == 0);
            std::string all;
            const Json m = read_json(out / "manifest.json");
            for (const auto& f : m["outputs"])
                if (f.get<std::string>().ends_with(".csv"))
                    all += slurp(out / f.get<std::string>());
            blobs.push_back(all);
        }
        CHECK(!blobs[0].empty());
        CHECK(blobs[0] == blobs[1]);
    }
}
