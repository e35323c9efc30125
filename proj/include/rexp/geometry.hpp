#pragma once

// Model manifolds: quotients of R^3 by periodic translations, optionally a
// mapping-torus gluing (v, 1) ~ (A v, 0), optionally with two axes confined to
// the closed unit disk. Cross-sections on these models are chart planes, so
// the exponential map is chart translation followed by wrap().

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "rexp/error.hpp"
#include "rexp/linalg.hpp"

namespace rexp {

struct Point {
    Vec3 coords{};

    double operator[](std::size_t i) const { return coords[i]; }
    friend bool operator==(const Point&, const Point&) = default;
};

struct PeriodicAxis {
    double lo = 0.0;
    double period = 1.0;
};

using IntMat2 = std::array<std::array<long long, 2>, 2>;

/// Mapping-torus identification for a hyperbolic toral automorphism A acting
/// on chart axes 0 and 1, with the suspension axis 2 of unit period:
/// (v, s + 1) ~ (A v, s). The adapted metric
///     g_s = lambda^{2s} du^2 + lambda^{-2s} dw^2 + ds^2,
/// with (u, w) the coordinates of v along the unstable/stable eigenvectors of
/// A, is invariant under the identification, so distances and the suspension
/// flow stay continuous across the seam.
struct SuspensionGluing {
    IntMat2 matrix{};
    IntMat2 inverse{};
    double lambda = 1.0;  // leading eigenvalue of A (> 1)
    double log_lambda = 0.0;
    Vec2 unstable{};      // unit right eigenvector for lambda
    Vec2 stable{};        // unit right eigenvector for 1/lambda
    Vec2 unstable_dual{}; // u = <unstable_dual, v>
    Vec2 stable_dual{};   // w = <stable_dual, v>
    bool adapted_metric = true;

    static SuspensionGluing hyperbolic(const IntMat2& a)
    {
        const long long det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if (det != 1 && det != -1)
            throw Error(ErrorCode::Validation, "gluing matrix must be unimodular");
        const double tr = static_cast<double>(a[0][0] + a[1][1]);
        const double disc = tr * tr - 4.0 * static_cast<double>(det);
        if (disc <= 0.0)
            throw Error(ErrorCode::Validation, "gluing matrix must be hyperbolic");
        SuspensionGluing g;
        g.matrix = a;
        g.inverse = {{{a[1][1] * det, -a[0][1] * det}, {-a[1][0] * det, a[0][0] * det}}};
        const double l1 = 0.5 * (tr + std::copysign(std::sqrt(disc), tr));
        const double l2 = static_cast<double>(det) / l1;
        g.lambda = std::abs(l1);
        g.log_lambda = std::log(g.lambda);
        auto eigvec = [&](double l) {
            // (A - l I) e = 0, picking the better-conditioned row
            const double a00 = static_cast<double>(a[0][0]) - l, a01 = static_cast<double>(a[0][1]);
            const double a10 = static_cast<double>(a[1][0]), a11 = static_cast<double>(a[1][1]) - l;
            Vec2 e = (std::hypot(a00, a01) >= std::hypot(a10, a11)) ? Vec2{-a01, a00} : Vec2{-a11, a10};
            const double n = norm(e);
            e = (1.0 / n) * e;
            if (e[0] < 0.0 || (e[0] == 0.0 && e[1] < 0.0))
                e = -1.0 * e;
            return e;
        };
        g.unstable = eigvec(l1);
        g.stable = eigvec(l2);
        // rows of P^{-1}, P = [unstable stable]
        const double d = g.unstable[0] * g.stable[1] - g.stable[0] * g.unstable[1];
        g.unstable_dual = {g.stable[1] / d, -g.stable[0] / d};
        g.stable_dual = {-g.unstable[1] / d, g.unstable[0] / d};
        return g;
    }

    Vec2 apply(const IntMat2& m, const Vec2& v) const
    {
        return {static_cast<double>(m[0][0]) * v[0] + static_cast<double>(m[0][1]) * v[1],
                static_cast<double>(m[1][0]) * v[0] + static_cast<double>(m[1][1]) * v[1]};
    }

    /// Metric block on the torus axes at (unwrapped) height s.
    Mat2 torus_metric(double s) const
    {
        if (!adapted_metric)
            return identity2();
        const double gu = std::pow(lambda, 2.0 * s);
        const double gw = std::pow(lambda, -2.0 * s);
        const Vec2& a = unstable_dual;
        const Vec2& b = stable_dual;
        return {Vec2{gu * a[0] * a[0] + gw * b[0] * b[0], gu * a[0] * a[1] + gw * b[0] * b[1]},
                Vec2{gu * a[1] * a[0] + gw * b[1] * b[0], gu * a[1] * a[1] + gw * b[1] * b[1]}};
    }
};

class ModelManifold {
public:
    std::string name;
    std::array<std::optional<PeriodicAxis>, kDim> periodic{};
    /// When present, axes 0 and 1 are the unit torus and axis 2 the suspension axis.
    std::optional<SuspensionGluing> gluing;
    std::optional<std::array<std::size_t, 2>> disk_axes;

    /// Smallest period among periodic directions; distances are exact below a quarter of it.
    double smallest_period() const
    {
        double p = std::numeric_limits<double>::infinity();
        for (const auto& ax : periodic)
            if (ax)
                p = std::min(p, ax->period);
        if (gluing)
            p = std::min(p, 1.0);
        return p;
    }
};

/// [-2, 2] x D with the end disks identified.
inline ModelManifold solid_torus_chart()
{
    ModelManifold m;
    m.name = "solid_torus";
    m.periodic[0] = PeriodicAxis{-2.0, 4.0};
    m.disk_axes = std::array<std::size_t, 2>{1, 2};
    return m;
}

/// Mapping torus of the cat map [[2,1],[1,1]] on T^2 x [0, 1].
inline ModelManifold cat_suspension_chart()
{
    ModelManifold m;
    m.name = "cat_suspension";
    m.periodic[0] = PeriodicAxis{0.0, 1.0};
    m.periodic[1] = PeriodicAxis{0.0, 1.0};
    m.gluing = SuspensionGluing::hyperbolic(IntMat2{{{2, 1}, {1, 1}}});
    return m;
}

namespace detail {

inline double wrap_periodic(double x, double lo, double period)
{
    double r = x - period * std::floor((x - lo) / period);
    if (r >= lo + period)
        r -= period;
    if (r < lo)
        r = lo;
    return r;
}

/// Representative of d modulo period in [-period/2, period/2).
inline double wrap_difference(double d, double period)
{
    return d - period * std::floor(d / period + 0.5);
}

} // namespace detail

inline Mat3 metric_tensor(const ModelManifold& m, const Vec3& raw)
{
    Mat3 g = identity3();
    if (m.gluing && m.gluing->adapted_metric) {
        const Mat2 t = m.gluing->torus_metric(raw[2]);
        g[0][0] = t[0][0];
        g[0][1] = t[0][1];
        g[1][0] = t[1][0];
        g[1][1] = t[1][1];
    }
    return g;
}

inline double inner(const ModelManifold& m, const Point& at, const Vec3& a, const Vec3& b)
{
    return quad(metric_tensor(m, at.coords), a, b);
}

inline double tangent_norm(const ModelManifold& m, const Point& at, const Vec3& v)
{
    return std::sqrt(std::max(0.0, inner(m, at, v, v)));
}

inline Point wrap(const ModelManifold& m, const Vec3& raw)
{
    Vec3 c = raw;
    for (double x : c)
        if (!std::isfinite(x))
            throw Error(ErrorCode::OutOfManifold, "non-finite coordinate");
    if (m.gluing) {
        const auto& g = *m.gluing;
        double n = std::floor(c[2]);
        c[2] -= n;
        if (c[2] >= 1.0) {
            c[2] -= 1.0;
            n += 1.0;
        }
        if (c[2] < 0.0)
            c[2] = 0.0;
        Vec2 v{c[0], c[1]};
        // crossing the seam upward applies A, downward applies A^{-1}
        for (; n > 0.0; n -= 1.0) {
            v = g.apply(g.matrix, v);
            v = {detail::wrap_periodic(v[0], 0.0, 1.0), detail::wrap_periodic(v[1], 0.0, 1.0)};
        }
        for (; n < 0.0; n += 1.0) {
            v = g.apply(g.inverse, v);
            v = {detail::wrap_periodic(v[0], 0.0, 1.0), detail::wrap_periodic(v[1], 0.0, 1.0)};
        }
        c[0] = v[0];
        c[1] = v[1];
    }
    for (std::size_t i = 0; i < kDim; ++i)
        if (m.periodic[i])
            c[i] = detail::wrap_periodic(c[i], m.periodic[i]->lo, m.periodic[i]->period);
    if (m.disk_axes) {
        const auto [i, j] = *m.disk_axes;
        const double r = std::hypot(c[i], c[j]);
        if (r > 1.0 + 1e-9)
            throw Error(ErrorCode::OutOfManifold, "disk coordinates outside the closed unit disk");
    }
    return Point{c};
}

namespace detail {

struct Lift {
    Vec3 delta{};
    double sq = std::numeric_limits<double>::infinity();
};

/// Chart displacement from p to the nearest lift of q, with its squared length.
inline Lift nearest_lift(const ModelManifold& m, const Vec3& p, const Vec3& q)
{
    Lift best;
    if (!m.gluing) {
        Vec3 d = q - p;
        for (std::size_t i = 0; i < kDim; ++i)
            if (m.periodic[i])
                d[i] = wrap_difference(d[i], m.periodic[i]->period);
        const Vec3 mid = p + 0.5 * d;
        best.delta = d;
        best.sq = quad(metric_tensor(m, mid), d, d);
        return best;
    }
    const auto& g = *m.gluing;
    // k = 0: same sheet; k = +1: q lifted above the seam; k = -1: below
    for (int k : {0, 1, -1}) {
        Vec2 v{q[0], q[1]};
        if (k == 1)
            v = g.apply(g.inverse, v);
        else if (k == -1)
            v = g.apply(g.matrix, v);
        const double ds = q[2] + static_cast<double>(k) - p[2];
        const double smid = p[2] + 0.5 * ds;
        const Mat2 gv = g.torus_metric(smid);
        const Vec2 d0{wrap_difference(v[0] - p[0], 1.0), wrap_difference(v[1] - p[1], 1.0)};
        for (int a = -1; a <= 1; ++a) {
            for (int b = -1; b <= 1; ++b) {
                const Vec2 d{d0[0] + a, d0[1] + b};
                const double sq = ds * ds + d[0] * (gv[0][0] * d[0] + gv[0][1] * d[1]) +
                                  d[1] * (gv[1][0] * d[0] + gv[1][1] * d[1]);
                if (sq < best.sq) {
                    best.sq = sq;
                    best.delta = {d[0], d[1], ds};
                }
            }
        }
    }
    return best;
}

/// Length metric on the cover of the suspension for the step cost
/// |ds| + ||dv||_s. For a monotone climb from lo to hi the cheapest horizontal
/// norm has unit ball conv(E_lo, E_hi), E_s the unit ellipse of g_s; its value
/// comes from the dual problem with both ellipse constraints. Detours outside
/// [lo, hi] only pay off once that norm exceeds 2 / log(lambda), which the
/// nearest lift never reaches.
/// a = lambda^lo, b = lambda^hi.
inline double suspension_length(const SuspensionGluing& g, double a, double b, double ds, const Vec2& dv)
{
    const double du = dot(g.unstable_dual, dv);
    const double dw = dot(g.stable_dual, dv);
    auto single = [&](double c, double other) -> std::optional<double> {
        const double val = std::sqrt(c * c * du * du + dw * dw / (c * c));
        if (val == 0.0)
            return 0.0;
        const double al = c * c * du / val, be = dw / (c * c * val);
        if (al * al / (other * other) + other * other * be * be <= 1.0 + 1e-14)
            return val;
        return std::nullopt;
    };
    double horizontal;
    if (auto v = single(a, b))
        horizontal = *v;
    else if (auto w = single(b, a))
        horizontal = *w;
    else
        horizontal = (a * b * std::abs(du) + std::abs(dw)) / std::sqrt(a * a + b * b);
    return std::abs(ds) + horizontal;
}

/// Minimum of suspension_length over the seam cases and nearby translates,
/// skipping candidates whose cheap lower bound |ds| + (a b |du| + |dw|) /
/// sqrt(a^2 + b^2) (a feasible dual point) already exceeds `cutoff` or the
/// best value so far. Returns +inf when nothing is within the cutoff.
inline double suspension_distance(const SuspensionGluing& g, const Vec3& p, const Vec3& q,
                                  double cutoff = std::numeric_limits<double>::infinity())
{
    double best = cutoff;
    bool found = false;
    for (int k : {0, 1, -1}) {
        const double ds = q[2] + static_cast<double>(k) - p[2];
        if (std::abs(ds) > best)
            continue;
        Vec2 v{q[0], q[1]};
        if (k == 1)
            v = g.apply(g.inverse, v);
        else if (k == -1)
            v = g.apply(g.matrix, v);
        const double a = std::exp(g.log_lambda * std::min(p[2], p[2] + ds));
        const double b = std::exp(g.log_lambda * std::max(p[2], p[2] + ds));
        const double r = 1.0 / std::sqrt(a * a + b * b);
        const double cu = a * b * r, cw = r;
        const Vec2 d0{wrap_difference(v[0] - p[0], 1.0), wrap_difference(v[1] - p[1], 1.0)};
        const double u0 = dot(g.unstable_dual, d0), w0 = dot(g.stable_dual, d0);
        // the metric is anisotropic, so look two translates out
        for (int i = -2; i <= 2; ++i)
            for (int j = -2; j <= 2; ++j) {
                const double du = u0 + i * g.unstable_dual[0] + j * g.unstable_dual[1];
                const double dw = w0 + i * g.stable_dual[0] + j * g.stable_dual[1];
                if (std::abs(ds) + cu * std::abs(du) + cw * std::abs(dw) > best)
                    continue;
                const double d = suspension_length(g, a, b, ds, Vec2{d0[0] + i, d0[1] + j});
                if (d <= best) {
                    best = d;
                    found = true;
                }
            }
    }
    return found ? best : std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Chart vector from `from` to the nearest copy of `to`.
inline Vec3 displacement(const ModelManifold& m, const Point& from, const Point& to)
{
    return detail::nearest_lift(m, from.coords, to.coords).delta;
}

/// Minimum over deck translates (and the three seam-crossing cases on a
/// suspension). On the adapted suspension this is the quotient of the length
/// metric above, so it is a true metric and equals the g-norm within a section.
inline double distance(const ModelManifold& m, const Point& p, const Point& q)
{
    // evaluate in a canonical order so that d(p,q) == d(q,p) bit for bit
    const bool swap = q.coords < p.coords;
    const Vec3& a = swap ? q.coords : p.coords;
    const Vec3& b = swap ? p.coords : q.coords;
    if (m.gluing && m.gluing->adapted_metric)
        return detail::suspension_distance(*m.gluing, a, b);
    return std::sqrt(detail::nearest_lift(m, a, b).sq);
}

/// distance(p, q) > eps, with early exits.
inline bool separated(const ModelManifold& m, const Point& p, const Point& q, double eps)
{
    if (m.gluing && m.gluing->adapted_metric) {
        const bool swap = q.coords < p.coords;
        const Vec3& a = swap ? q.coords : p.coords;
        const Vec3& b = swap ? p.coords : q.coords;
        return detail::suspension_distance(*m.gluing, a, b, eps) > eps;
    }
    return distance(m, p, q) > eps;
}

struct NormalFrame {
    Point base;
    Vec3 normal{};              // unit field direction (in the metric at base)
    std::array<Vec3, kDim - 1> axes{};
};

/// Orthonormal completion of field_dir in the metric at x. Seeds (for example
/// the previous frame along an orbit) are tried first, then the coordinate
/// vectors ordered by increasing alignment with field_dir.
inline NormalFrame normal_frame(const ModelManifold& m, const Point& x, const Vec3& field_dir,
                                std::span<const Vec3> seeds = {})
{
    if (norm(field_dir) < 1e-12)
        throw Error(ErrorCode::DegenerateField, "field direction vanishes");
    const Mat3 g = metric_tensor(m, x.coords);
    auto ip = [&](const Vec3& a, const Vec3& b) { return quad(g, a, b); };

    NormalFrame f;
    f.base = x;
    f.normal = (1.0 / std::sqrt(ip(field_dir, field_dir))) * field_dir;

    std::array<Vec3, kDim> basis{};
    std::array<std::size_t, kDim> order{0, 1, 2};
    for (std::size_t i = 0; i < kDim; ++i)
        basis[i][i] = 1.0;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::abs(ip(basis[i], f.normal)) / std::sqrt(ip(basis[i], basis[i])) <
               std::abs(ip(basis[j], f.normal)) / std::sqrt(ip(basis[j], basis[j]));
    });

    std::size_t found = 0;
    auto try_add = [&](const Vec3& c) {
        if (found == kDim - 1)
            return;
        Vec3 u = c;
        for (int pass = 0; pass < 2; ++pass) {
            u = u - ip(u, f.normal) * f.normal;
            for (std::size_t j = 0; j < found; ++j)
                u = u - ip(u, f.axes[j]) * f.axes[j];
        }
        const double n = std::sqrt(ip(u, u));
        if (n > 1e-6 * std::sqrt(ip(c, c)))
            f.axes[found++] = (1.0 / n) * u;
    };
    for (const Vec3& s : seeds)
        try_add(s);
    for (std::size_t i : order)
        try_add(basis[i]);
    return f;
}

inline Point exp_map(const ModelManifold& m, const NormalFrame& frame, const Vec2& v)
{
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]))
        throw Error(ErrorCode::Validation, "non-finite section coordinates");
    return wrap(m, frame.base.coords + v[0] * frame.axes[0] + v[1] * frame.axes[1]);
}

/// Coefficients of p - base along the frame axes.
inline Vec2 section_coords(const ModelManifold& m, const NormalFrame& frame, const Point& p)
{
    const Vec3 d = displacement(m, frame.base, p);
    const Mat3 g = metric_tensor(m, frame.base.coords);
    return {quad(g, d, frame.axes[0]), quad(g, d, frame.axes[1])};
}

/// Signed offset of p from the section plane, along the field direction.
inline double plane_offset(const ModelManifold& m, const NormalFrame& frame, const Point& p)
{
    const Vec3 d = displacement(m, frame.base, p);
    return quad(metric_tensor(m, frame.base.coords), d, frame.normal);
}

/// Uniform sample in the chart's fundamental domain.
template <class Rng>
Point sample_uniform(const ModelManifold& m, Rng& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec3 c{};
    for (std::size_t i = 0; i < kDim; ++i)
        if (m.periodic[i])
            c[i] = m.periodic[i]->lo + m.periodic[i]->period * unit(rng);
    if (m.gluing)
        c[2] = unit(rng);
    if (m.disk_axes) {
        const double r = std::sqrt(unit(rng));
        const double th = 2.0 * std::numbers::pi * unit(rng);
        c[(*m.disk_axes)[0]] = r * std::cos(th);
        c[(*m.disk_axes)[1]] = r * std::sin(th);
    }
    return wrap(m, c);
}

} // namespace rexp
