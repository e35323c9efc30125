#pragma once

// Built-in vector fields with their analytic metadata.

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rexp/geometry.hpp"

namespace rexp {

/// Expansion bound per unit time and the largest admissible rescale factor.
struct RescaleConstants {
    double L = 1.0;
    double beta0 = 0.3;
};

/// Points with ||X|| at or below this are treated as singular.
inline constexpr double kSingularThreshold = 1e-12;

struct FlowSpec {
    std::string name;
    ModelManifold manifold;
    /// Field in chart coordinates. Accepts unwrapped coordinates and must be
    /// equivariant under the manifold's deck maps.
    std::function<Vec3(const Vec3&)> field;
    std::string singular_set_description;
    std::function<bool(const Point&)> is_singular;
    /// Closed-form holonomy y -> phi_t(y) for section-to-section transport,
    /// when known; returns nullopt for times it does not cover.
    std::function<std::optional<Point>(const Point&, double)> analytic_holonomy;
    std::optional<double> known_entropy;
    /// Upper bound on ||X|| over the manifold.
    double speed_bound = 1.0;
    /// (axis, value) planes where the field is only continuous.
    std::vector<std::pair<std::size_t, double>> kinks;
    RescaleConstants constants;
};

inline Vec3 eval_field(const FlowSpec& f, const Point& x) { return f.field(x.coords); }

inline double field_norm(const FlowSpec& f, const Point& x)
{
    return tangent_norm(f.manifold, x, eval_field(f, x));
}

/// Estimates the exponential growth rate of tangent vectors,
///   sup | eig_G( 1/2 L_X G + sym(G DX) ) |,
/// by central differences at random regular points away from kinks, and
/// returns L = exp(rate), beta0 = 0.3 / L. On flat charts the rate is the
/// symmetric part of DX; on the adapted suspension metric it picks up the
/// metric's own stretching along the flow.
inline RescaleConstants estimate_lipschitz(const FlowSpec& f, std::size_t samples = 400,
                                           double step = 1e-6, std::uint64_t seed = 7)
{
    if (samples < 100)
        throw Error(ErrorCode::Validation, "estimate_lipschitz needs at least 100 samples");
    const auto& m = f.manifold;
    std::mt19937_64 rng(seed);
    auto to_eigen = [](const Mat3& a) {
        Eigen::Matrix3d r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r(i, j) = a[i][j];
        return r;
    };

    double rate = 0.0;
    std::size_t used = 0;
    for (std::size_t attempt = 0; used < samples && attempt < 100 * samples; ++attempt) {
        const Point p = sample_uniform(m, rng);
        const Vec3 x = p.coords;
        bool near_kink = false;
        for (const auto& [axis, value] : f.kinks) {
            double d = x[axis] - value;
            if (m.periodic[axis])
                d = detail::wrap_difference(d, m.periodic[axis]->period);
            near_kink = near_kink || std::abs(d) < 8.0 * step;
        }
        if (near_kink)
            continue;
        const Vec3 X = f.field(x);
        if (norm(X) < 1e-9)
            continue;
        // keep the difference stencil inside the disk
        if (m.disk_axes) {
            const auto [i, j] = *m.disk_axes;
            if (std::hypot(x[i], x[j]) > 1.0 - 4.0 * step)
                continue;
        }
        ++used;

        Eigen::Matrix3d J;
        for (std::size_t j = 0; j < kDim; ++j) {
            Vec3 e{};
            e[j] = step;
            const Vec3 d = (1.0 / (2.0 * step)) * (f.field(x + e) - f.field(x - e));
            for (std::size_t i = 0; i < kDim; ++i)
                J(static_cast<int>(i), static_cast<int>(j)) = d[i];
        }
        const Eigen::Matrix3d G = to_eigen(metric_tensor(m, x));
        const Eigen::Matrix3d dG =
            (to_eigen(metric_tensor(m, x + step * X)) - to_eigen(metric_tensor(m, x - step * X))) / (2.0 * step);
        const Eigen::Matrix3d S = 0.5 * dG + 0.5 * (J.transpose() * G + G * J);
        const Eigen::LLT<Eigen::Matrix3d> llt(G);
        const Eigen::Matrix3d Linv = llt.matrixL().solve(Eigen::Matrix3d::Identity());
        const Eigen::Matrix3d M = Linv * S * Linv.transpose();
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
        rate = std::max(rate, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    RescaleConstants c;
    c.L = std::exp(rate);
    c.beta0 = 0.3 / c.L;
    return c;
}

namespace flows {

/// rho from the solid torus example: 1 on |x| >= 1, |x| on [-1, 1].
inline double solid_torus_speed(double x)
{
    const double w = detail::wrap_periodic(x, -2.0, 4.0);
    const double a = std::abs(w);
    return a >= 1.0 ? 1.0 : a;
}

inline FlowSpec solid_torus()
{
    FlowSpec f;
    f.name = "solid_torus";
    f.manifold = solid_torus_chart();
    f.field = [](const Vec3& p) { return Vec3{solid_torus_speed(p[0]), 0.0, 0.0}; };
    f.singular_set_description = "{0} x D: the disk where rho vanishes";
    f.is_singular = [](const Point& p) {
        return std::abs(detail::wrap_periodic(p[0], -2.0, 4.0)) < kSingularThreshold;
    };
    f.known_entropy = 0.0;
    f.speed_bound = 1.0;
    f.kinks = {{0, -1.0}, {0, 0.0}, {0, 1.0}};
    f.constants = estimate_lipschitz(f);
    return f;
}

/// Unit-speed suspension of the cat map.
inline FlowSpec cat_suspension()
{
    FlowSpec f;
    f.name = "cat_suspension";
    f.manifold = cat_suspension_chart();
    f.field = [](const Vec3&) { return Vec3{0.0, 0.0, 1.0}; };
    f.singular_set_description = "empty";
    f.is_singular = [](const Point&) { return false; };
    const SuspensionGluing g = *f.manifold.gluing;
    const ModelManifold m = f.manifold;
    // integer-time returns to a horizontal section are v -> A^n v (mod 1)
    f.analytic_holonomy = [g, m](const Point& y, double t) -> std::optional<Point> {
        const double n = std::round(t);
        if (std::abs(t - n) > 1e-12)
            return std::nullopt;
        Vec2 v{y[0], y[1]};
        for (double k = 0; k < std::abs(n); k += 1.0) {
            v = g.apply(n > 0 ? g.matrix : g.inverse, v);
            v = {detail::wrap_periodic(v[0], 0.0, 1.0), detail::wrap_periodic(v[1], 0.0, 1.0)};
        }
        return wrap(m, Vec3{v[0], v[1], y[2]});
    };
    f.known_entropy = std::log(g.lambda);
    f.speed_bound = 1.0;
    f.constants = estimate_lipschitz(f);
    return f;
}

/// Constant unit field along the circle factor of the solid torus chart.
inline FlowSpec rigid_rotation()
{
    FlowSpec f;
    f.name = "rigid_rotation";
    f.manifold = solid_torus_chart();
    f.field = [](const Vec3&) { return Vec3{1.0, 0.0, 0.0}; };
    f.singular_set_description = "empty";
    f.is_singular = [](const Point&) { return false; };
    const ModelManifold m = f.manifold;
    f.analytic_holonomy = [m](const Point& y, double t) -> std::optional<Point> {
        return wrap(m, Vec3{y[0] + t, y[1], y[2]});
    };
    f.known_entropy = 0.0;
    f.speed_bound = 1.0;
    f.constants = estimate_lipschitz(f);
    return f;
}

inline const std::vector<std::string>& catalog_names()
{
    static const std::vector<std::string> names{"solid_torus", "cat_suspension", "rigid_rotation"};
    return names;
}

inline FlowSpec by_name(const std::string& name)
{
    if (name == "solid_torus")
        return solid_torus();
    if (name == "cat_suspension")
        return cat_suspension();
    if (name == "rigid_rotation")
        return rigid_rotation();
    throw Error(ErrorCode::Validation, "unknown flow '" + name + "'");
}

/// The flow of -X. Rescale constants are shared with the original.
inline FlowSpec reversed(const FlowSpec& f)
{
    FlowSpec r = f;
    r.name = f.name + "_reversed";
    auto field = f.field;
    r.field = [field](const Vec3& p) { return -field(p); };
    if (f.analytic_holonomy) {
        auto h = f.analytic_holonomy;
        r.analytic_holonomy = [h](const Point& y, double t) { return h(y, -t); };
    }
    return r;
}

} // namespace flows
} // namespace rexp
