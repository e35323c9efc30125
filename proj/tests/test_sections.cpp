#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "rexp/sections.hpp"

using namespace rexp;
using Catch::Approx;

namespace {

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::Validation;
}

} // namespace

TEST_CASE("make_section radii and preconditions", "[sections]")
{
    const FlowSpec torus = flows::solid_torus();
    const FlowSpec cat = flows::cat_suspension();
    const CrossSection s = make_section(torus, wrap(torus.manifold, {-0.5, 0, 0}), 0.1);
    CHECK(s.radius == Approx(0.05));
    CHECK(s.base()[0] == Approx(-0.5));
    CHECK(make_section(cat, wrap(cat.manifold, {0.3, 0.3, 0.3}), 0.1).radius == Approx(0.1));

    CHECK(code_of([&] { make_section(torus, wrap(torus.manifold, {0, 0.2, 0}), 0.1); }) == ErrorCode::SingularBase);
    CHECK(code_of([&] { make_section(cat, wrap(cat.manifold, {0, 0, 0}), 0.2); }) == ErrorCode::BetaTooLarge);
    CHECK(code_of([&] { make_section(cat, wrap(cat.manifold, {0, 0, 0}), -0.1); }) == ErrorCode::Validation);
}

TEST_CASE("holonomy of the base is the flow", "[sections]")
{
    const FlowSpec torus = flows::solid_torus();
    const Point x = wrap(torus.manifold, {0.5, 0, 0});
    const CrossSection s = make_section(torus, x, 0.1);
    const HolonomyResult r = holonomy(torus, s, 1.0, x);
    CHECK(r.hit_time == Approx(1.0).epsilon(1e-9));
    CHECK(distance(torus.manifold, r.image, flow_map(torus, x, 1.0)) < 1e-9);
    CHECK(norm(r.coords) < 1e-9);
}

TEST_CASE("torus holonomy moves disks isometrically", "[sections]")
{
    const FlowSpec torus = flows::solid_torus();
    const Point x = wrap(torus.manifold, {0.5, 0, 0});
    const CrossSection s = make_section(torus, x, 0.1);
    const HolonomyResult r = holonomy(torus, s, 1.0, wrap(torus.manifold, {0.5, 0.01, 0}));
    CHECK(r.image[0] == Approx(flow_map(torus, x, 1.0)[0]).epsilon(1e-8));
    CHECK(r.image[1] == Approx(0.01).epsilon(1e-12));
    CHECK(r.image[2] == Approx(0.0).margin(1e-12));
    CHECK(r.tube_ok);
}

TEST_CASE("cat holonomy matches the linear return map", "[sections]")
{
    const FlowSpec cat = flows::cat_suspension();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0), c(-0.03, 0.03);
    for (int i = 0; i < 50; ++i) {
        const Point x = wrap(cat.manifold, {u(rng), u(rng), 0.0});
        const CrossSection s = make_section(cat, x, 0.1);
        const Point y = exp_map(cat.manifold, s.frame, {c(rng), c(rng)});
        const HolonomyResult r = holonomy(cat, s, 1.0, y);
        CHECK(distance(cat.manifold, r.image, *cat.analytic_holonomy(y, 1.0)) < 1e-6);
        CHECK(r.hit_time == Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("holonomy domain checks", "[sections]")
{
    const FlowSpec cat = flows::cat_suspension();
    const Point x = wrap(cat.manifold, {0.5, 0.5, 0.0});
    const CrossSection s = make_section(cat, x, 0.1);
    const double rd = holonomy_domain_radius(cat, s, 1.0);
    CHECK(rd == Approx(0.1 / cat.constants.L));
    CHECK(code_of([&] { holonomy(cat, s, 1.0, exp_map(cat.manifold, s.frame, {1.5 * rd, 0.0})); }) ==
          ErrorCode::OutsideDomain);
    CHECK(code_of([&] { holonomy(cat, s, 1.0, wrap(cat.manifold, {0.5, 0.5, 0.2})); }) == ErrorCode::Validation);
}

TEST_CASE("holonomy_orbit over several steps", "[sections]")
{
    const FlowSpec cat = flows::cat_suspension();
    const Point x = wrap(cat.manifold, {0.5, 0.5, 0.0});
    const CrossSection s = make_section(cat, x, 0.1);
    CHECK(holonomy_orbit(cat, x, 0.1, 1.0, 0, x).images.empty());

    const Vec2 v{0.004, 0.0};
    const Point y = exp_map(cat.manifold, s.frame, v);
    const HolonomyOrbit o = holonomy_orbit(cat, x, 0.1, 1.0, 3, y);
    REQUIRE(o.images.size() == 3);
    CHECK_FALSE(o.failed_step);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(distance(cat.manifold, o.images[k].image, *cat.analytic_holonomy(y, double(k + 1))) < 1e-6);
        CHECK(o.images[k].hit_time == Approx(double(k + 1)).epsilon(1e-9));
    }
    // the offset grows along the unstable direction, by lambda per step asymptotically
    const double d1 = distance(cat.manifold, o.images[1].image, flow_map(cat, x, 2.0));
    const double d2 = distance(cat.manifold, o.images[2].image, flow_map(cat, x, 3.0));
    CHECK(d2 / d1 == Approx(cat.manifold.gluing->lambda).epsilon(0.05));

    const HolonomyOrbit back = holonomy_orbit(cat, x, 0.1, 1.0, -2, y);
    REQUIRE(back.images.size() == 2);
    CHECK(distance(cat.manifold, back.images[1].image, *cat.analytic_holonomy(y, -2.0)) < 1e-6);
    CHECK(back.images[1].hit_time == Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("torus orbit toward the singular disk stops", "[sections]")
{
    const FlowSpec torus = flows::solid_torus();
    const Point x = wrap(torus.manifold, {-0.5, 0, 0});
    const HolonomyOrbit o = holonomy_orbit(torus, x, 0.1, 1.0, 60, x);
    REQUIRE(o.failed_step);
    CHECK(o.failure != Status::Ok);
    CHECK(o.images.size() < 60);
    for (std::size_t k = 1; k < o.images.size(); ++k) {
        CHECK(o.images[k].hit_time > o.images[k - 1].hit_time);
        CHECK(std::abs(o.images[k].image[0]) < std::abs(o.images[k - 1].image[0]));
    }
}

TEST_CASE("tube property on sampled admissible pairs", "[sections]")
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& name : flows::catalog_names()) {
        const FlowSpec f = flows::by_name(name);
        std::size_t bad = 0;
        for (int i = 0; i < 40; ++i) {
            Point x;
            do
                x = sample_uniform(f.manifold, rng);
            while (field_norm(f, x) < 0.05 || (f.manifold.disk_axes && std::hypot(x[1], x[2]) > 0.8));
            const double t = 3.0 * u(rng);
            const CrossSection s = make_section(f, x, 0.1);
            const double r = holonomy_domain_radius(f, s, t) * u(rng);
            const double a = 2.0 * std::numbers::pi * u(rng);
            const Point y = exp_map(f.manifold, s.frame, {r * std::cos(a), r * std::sin(a)});
            bad += !tube_ok(f, x, y, 0.1, t);
        }
        CHECK(bad == 0);
    }
}
