#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "rexp/flows.hpp"

using namespace rexp;
using Catch::Approx;

TEST_CASE("solid torus field follows rho", "[flows]")
{
    const FlowSpec f = flows::solid_torus();
    const auto& m = f.manifold;
    CHECK(eval_field(f, wrap(m, {0, 0, 0})) == Vec3{0, 0, 0});
    CHECK(eval_field(f, wrap(m, {-0.5, 0, 0}))[0] == Approx(0.5));
    CHECK(eval_field(f, wrap(m, {1.5, 0, 0}))[0] == Approx(1.0));
    CHECK(field_norm(f, wrap(m, {-0.5, 0.3, 0.1})) == Approx(0.5));
    CHECK(field_norm(f, wrap(m, {0, 0.2, 0})) == 0.0);
    CHECK(f.is_singular(wrap(m, {0, 0.4, 0.1})));
    CHECK_FALSE(f.is_singular(wrap(m, {0.01, 0, 0})));
}

TEST_CASE("cat suspension field has unit length everywhere", "[flows]")
{
    const FlowSpec f = flows::cat_suspension();
    for (double s : {0.0, 0.3, 0.77})
        CHECK(field_norm(f, wrap(f.manifold, {0.2, 0.9, s})) == Approx(1.0));
    CHECK(*f.known_entropy == Approx(std::log(oracle::cat_eigenvalues().second)));
}

TEST_CASE("rescale constants", "[flows]")
{
    CHECK(flows::rigid_rotation().constants.L == Approx(1.0).margin(1e-6));
    CHECK(flows::solid_torus().constants.L == Approx(std::exp(1.0)).epsilon(1e-4));
    // on the adapted metric the transverse stretching is the leading eigenvalue
    const FlowSpec cat = flows::cat_suspension();
    CHECK(cat.constants.L == Approx(oracle::cat_eigenvalues().second).epsilon(1e-4));
    CHECK(cat.constants.beta0 == Approx(0.3 / cat.constants.L));
    CHECK_THROWS_AS(estimate_lipschitz(cat, 50), Error);
}

TEST_CASE("cat gluing eigen-data", "[flows]")
{
    const auto& g = *flows::cat_suspension().manifold.gluing;
    const auto [lo, hi] = oracle::cat_eigenvalues();
    CHECK(g.lambda == Approx(hi));
    const Vec2 au = g.apply(g.matrix, g.unstable);
    const Vec2 as = g.apply(g.matrix, g.stable);
    CHECK(au[0] == Approx(hi * g.unstable[0]));
    CHECK(au[1] == Approx(hi * g.unstable[1]));
    CHECK(as[0] == Approx(lo * g.stable[0]));
    CHECK(as[1] == Approx(lo * g.stable[1]));
    CHECK(dot(g.unstable_dual, g.unstable) == Approx(1.0));
    CHECK(dot(g.unstable_dual, g.stable) == Approx(0.0).margin(1e-14));
}

TEST_CASE("catalog and reversal", "[flows]")
{
    for (const auto& name : flows::catalog_names())
        CHECK(flows::by_name(name).name == name);
    CHECK_THROWS_AS(flows::by_name("lorenz"), Error);

    const FlowSpec f = flows::solid_torus();
    const FlowSpec r = flows::reversed(f);
    const Point p = wrap(f.manifold, {0.4, 0.1, 0.0});
    CHECK(eval_field(r, p)[0] == Approx(-eval_field(f, p)[0]));
    CHECK(r.constants.L == f.constants.L);

    const FlowSpec rr = flows::reversed(flows::rigid_rotation());
    CHECK(rr.analytic_holonomy(p, 1.0)->coords[0] == Approx(-0.6));
}
