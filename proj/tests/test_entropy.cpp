#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rexp/entropy.hpp"

using namespace rexp;
using Catch::Approx;

namespace {

std::vector<std::vector<double>> bowen_matrix(const FlowSpec& f, const std::vector<Point>& pts, std::size_t kt,
                                              double h)
{
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            d[i][j] = d[j][i] = oracle::bowen_distance(f, pts[i], pts[j], kt, h);
    return d;
}

} // namespace

TEST_CASE("sampling specs", "[entropy]")
{
    const FlowSpec torus = flows::solid_torus();
    SampleSpec s = default_sample_spec(torus);
    s.count = 500;
    const auto pts = sample_points(torus, s);
    REQUIRE(pts.size() == 500);
    for (const Point& p : pts) {
        CHECK(std::abs(p[0]) >= 0.05);
        CHECK(std::hypot(p[1], p[2]) <= 1.0);
    }
    CHECK(sample_points(torus, s) == pts);
    s.seed = 2;
    CHECK(sample_points(torus, s) != pts);

    const FlowSpec cat = flows::cat_suspension();
    SampleSpec seg;
    seg.count = 11;
    seg.grid = true;
    seg.segment = std::make_pair(Vec3{0.1, 0.1, 0.5}, Vec3{0.3, 0.1, 0.5});
    const auto line = sample_points(cat, seg);
    REQUIRE(line.size() == 11);
    CHECK(line[0][0] == Approx(0.1 + 0.2 * 0.5 / 11));
    CHECK(line[5][1] == Approx(0.1));
}

TEST_CASE("count is one when all samples are close", "[entropy]")
{
    const FlowSpec cat = flows::cat_suspension();
    std::vector<Point> pts;
    for (int i = 0; i < 10; ++i)
        pts.push_back(wrap(cat.manifold, {0.5 + 0.001 * i, 0.5, 0.5}));
    CHECK(separated_count(cat, pts, 0.0, 0.1, 0.05) == 1);
}

TEST_CASE("orbit step must resolve eps", "[entropy]")
{
    const FlowSpec cat = flows::cat_suspension();
    const std::vector<Point> pts{wrap(cat.manifold, {0.5, 0.5, 0.5})};
    try {
        separated_count(cat, pts, 1.0, 0.1, 0.2);
        FAIL("expected StepTooCoarse");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::StepTooCoarse);
    }
}

TEST_CASE("greedy count matches brute force Bowen distances", "[entropy]")
{
    for (const auto& name : {"rigid_rotation", "cat_suspension"}) {
        const FlowSpec f = flows::by_name(name);
        SampleSpec s;
        s.count = 40;
        s.seed = 4;
        s.lo = std::array<double, 3>{0.1, 0.1, 0.1};
        s.hi = std::array<double, 3>{0.5, 0.5, 0.5};
        const auto pts = sample_points(f, s);
        const double h = 0.05, eps = 0.1;
        for (std::size_t kt : {0, 20, 40}) {
            const auto d = bowen_matrix(f, pts, kt, h);
            const std::size_t got = separated_count(f, pts, double(kt) * h, eps, h);
            CHECK(got == oracle::greedy_separated(d, eps));
            CHECK(got <= oracle::max_separated(d, eps));
        }
    }
}

TEST_CASE("rigid rotation counts do not grow", "[entropy]")
{
    const FlowSpec f = flows::rigid_rotation();
    SampleSpec s;
    s.count = 300;
    s.lo = std::array<double, 3>{-0.3, -0.3, -0.3};
    s.hi = std::array<double, 3>{0.3, 0.3, 0.3};
    const auto pts = sample_points(f, s);
    const std::size_t c0 = separated_count(f, pts, 0.0, 0.1, 0.05);
    CHECK(separated_count(f, pts, 4.0, 0.1, 0.05) == c0);
}

TEST_CASE("entropy estimates on the catalog", "[entropy]")
{
    const FlowSpec rigid = flows::rigid_rotation();
    SampleSpec s;
    s.count = 600;
    s.lo = std::array<double, 3>{-0.3, -0.3, -0.3};
    s.hi = std::array<double, 3>{0.3, 0.3, 0.3};
    const auto r = entropy_estimate(rigid, s, {0.2, 0.1}, {0, 2, 4, 6});
    CHECK(std::abs(r.verdict) <= 0.02);

    const FlowSpec cat = flows::cat_suspension();
    SampleSpec c = default_sample_spec(cat);
    c.count = 1500;
    const auto q = entropy_estimate(cat, c, {0.2}, {0, 1, 2, 3, 4, 5}, 0.05);
    CHECK(q.verdict > 0.7);
    CHECK(q.verdict < 1.2);
    for (std::size_t k = 1; k < q.t_list.size(); ++k)
        CHECK(q.counts[0][k] >= q.counts[0][k - 1]);
}

TEST_CASE("entropy input validation", "[entropy]")
{
    const FlowSpec f = flows::rigid_rotation();
    SampleSpec s;
    s.count = 50;
    CHECK_THROWS_AS(entropy_estimate(f, s, {0.1, 0.2}, {0, 1}), Error);
    CHECK_THROWS_AS(entropy_estimate(f, s, {0.2}, {1, 0}), Error);
}

TEST_CASE("slope fit", "[entropy]")
{
    CHECK(detail::ls_slope({0, 1, 2, 3}, {1, 3, 5, 7}) == Approx(2.0));
    CHECK(detail::horizon_index(0.3, 0.1) == 3);
}

TEST_CASE("counts do not depend on the thread count", "[entropy]")
{
    const FlowSpec f = flows::cat_suspension();
    SampleSpec s = default_sample_spec(f);
    s.count = 800;
    const auto a = entropy_estimate(f, s, {0.2, 0.1}, {0, 1, 2, 3}, 0.05, 1);
    const auto b = entropy_estimate(f, s, {0.2, 0.1}, {0, 1, 2, 3}, 0.05, 3);
    CHECK(a.counts == b.counts);
    CHECK(a.raw_counts == b.raw_counts);
    std::ostringstream x, y;
    write_csv(x, a);
    write_csv(y, b);
    CHECK(x.str() == y.str());
}
