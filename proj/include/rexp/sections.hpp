#pragma once

// Rescaled cross-sections and the holonomy maps between them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "rexp/cross_section.hpp"
#include "rexp/flows.hpp"
#include "rexp/integrate.hpp"

namespace rexp {

inline CrossSection make_section(const FlowSpec& f, const Point& x, double beta,
                                 std::span<const Vec3> seeds = {})
{
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw Error(ErrorCode::Validation, "beta must be positive and finite");
    const Vec3 X = eval_field(f, x);
    const double speed = tangent_norm(f.manifold, x, X);
    if (!(speed > kSingularThreshold))
        throw Error(ErrorCode::SingularBase, "section base is singular");
    if (beta > f.constants.beta0 * (1.0 + 1e-12))
        throw Error(ErrorCode::BetaTooLarge, "beta exceeds beta0");
    CrossSection s;
    s.frame = normal_frame(f.manifold, x, X, seeds);
    s.beta = beta;
    s.base_speed = speed;
    s.radius = beta * speed;
    return s;
}

/// Radius of the shrunken holonomy domain, (beta / L^|t|) ||X(base)||.
inline double holonomy_domain_radius(const FlowSpec& f, const CrossSection& source, double t)
{
    return source.beta / std::pow(f.constants.L, std::abs(t)) * source.base_speed;
}

/// Crossing of `target` near signed time t. The window starts at
/// t +- target.radius (the flow-box time) and doubles up to four times.
/// check_radius = false accepts hits anywhere on the target plane.
inline CrossingOutcome transport(const FlowSpec& f, const Point& y, const CrossSection& target, double t,
                                 const IntegratorOptions& opt = {}, bool check_radius = true)
{
    const int sign = t < 0.0 ? -1 : 1;
    const double T = std::abs(t);
    double w = std::max(target.radius, 1e-9 * (1.0 + T));
    const double radius = check_radius ? target.radius : std::numeric_limits<double>::infinity();
    CrossingOutcome o;
    for (int attempt = 0; attempt < 5; ++attempt, w *= 2.0) {
        o = locate_crossing(f, y, target.frame, radius, std::max(0.0, T - w), T + w, sign, opt);
        if (o.status != Status::NoCrossing)
            return o;
    }
    return o;
}

/// Points of the orbit of x at the given elapsed times (ascending, >= 0).
inline std::vector<Point> orbit_at(const FlowSpec& f, const Point& x, int sign, std::span<const double> taus,
                                   const IntegratorOptions& opt = {})
{
    std::vector<Point> out;
    out.reserve(taus.size());
    Stepper s(f, x, sign, opt);
    for (double tau : taus) {
        while (s.tau() < tau)
            s.step(tau);
        out.push_back(s.point());
    }
    return out;
}

/// d(phi_s x, phi_s y) <= beta ||X(phi_s x)|| at max(32, ceil(|t| / 0.05)) + 1
/// evenly spaced s between 0 and t.
inline bool tube_ok(const FlowSpec& f, const Point& x, const Point& y, double beta, double t,
                    const IntegratorOptions& opt = {})
{
    const double T = std::abs(t);
    const auto n = std::max<std::size_t>(32, static_cast<std::size_t>(std::ceil(T / 0.05)));
    std::vector<double> taus(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        taus[i] = T * static_cast<double>(i) / static_cast<double>(n);
    const int sign = t < 0.0 ? -1 : 1;
    const auto xs = orbit_at(f, x, sign, taus, opt);
    const auto ys = orbit_at(f, y, sign, taus, opt);
    for (std::size_t i = 0; i <= n; ++i) {
        const double tol = beta * field_norm(f, xs[i]) * (1.0 + 1e-9);
        if (distance(f.manifold, xs[i], ys[i]) > tol)
            return false;
    }
    return true;
}

struct HolonomyResult {
    Point image;
    Vec2 coords{};         // image in the target frame
    double hit_time = 0.0; // signed
    bool tube_ok = true;
};

inline void require_on_section(const FlowSpec& f, const CrossSection& s, const Point& y, double radius)
{
    if (std::abs(plane_offset(f.manifold, s.frame, y)) > 1e-9 * std::max(1.0, s.radius))
        throw Error(ErrorCode::Validation, "point does not lie on the source section plane");
    if (norm(section_coords(f.manifold, s.frame, y)) > radius * (1.0 + 1e-9))
        throw Error(ErrorCode::OutsideDomain, "point outside the holonomy domain");
}

inline void throw_status(Status s)
{
    switch (s) {
    case Status::Ok: return;
    case Status::LeftTube: throw Error(ErrorCode::LeftTube, "crossing outside the target section");
    case Status::Timeout: throw Error(ErrorCode::Timeout, "integration budget exhausted");
    case Status::OutOfManifold: throw Error(ErrorCode::OutOfManifold, "orbit left the chart");
    case Status::SingularBase: throw Error(ErrorCode::SingularBase, "orbit base reached the singular set");
    case Status::NoCrossing: break;
    }
    throw Error(ErrorCode::NoCrossing, "no crossing of the target section");
}

/// P_{x,t}(y) for y in the shrunken domain of `source`.
inline HolonomyResult holonomy(const FlowSpec& f, const CrossSection& source, double t, const Point& y,
                               const IntegratorOptions& opt = {})
{
    require_on_section(f, source, y, holonomy_domain_radius(f, source, t));
    const Point target_base = flow_map(f, source.base(), t, opt);
    const CrossSection target = make_section(f, target_base, source.beta, source.frame.axes);
    const CrossingOutcome o = transport(f, y, target, t, opt);
    throw_status(o.status);
    HolonomyResult r;
    r.image = o.event.hit_point;
    r.coords = section_coords(f.manifold, target.frame, r.image);
    r.hit_time = o.event.hit_time;
    r.tube_ok = tube_ok(f, source.base(), y, source.beta, t, opt);
    return r;
}

/// Sections at x, phi_t x, ..., phi_{nt} x with continuously seeded frames.
/// Construction stops early when a base becomes singular or the base orbit
/// times out; `stop` says why.
struct BaseChain {
    std::vector<CrossSection> sections;
    double step_time = 0.0; // signed
    Status stop = Status::Ok;

    std::size_t steps() const { return sections.empty() ? 0 : sections.size() - 1; }
};

inline BaseChain build_chain(const FlowSpec& f, const Point& x, double beta, double t, std::size_t n,
                             const IntegratorOptions& opt = {})
{
    BaseChain c;
    c.step_time = t;
    c.sections.reserve(n + 1);
    c.sections.push_back(make_section(f, x, beta));
    for (std::size_t k = 1; k <= n; ++k) {
        try {
            const Point b = flow_map(f, c.sections.back().base(), t, opt);
            const auto seeds = c.sections.back().frame.axes;
            c.sections.push_back(make_section(f, b, beta, seeds));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::SingularBase || e.code() == ErrorCode::DegenerateField)
                c.stop = Status::SingularBase;
            else if (e.code() == ErrorCode::Timeout)
                c.stop = Status::Timeout;
            else if (e.code() == ErrorCode::OutOfManifold)
                c.stop = Status::OutOfManifold;
            else
                throw;
            break;
        }
    }
    return c;
}

struct HolonomyOrbit {
    std::vector<HolonomyResult> images; // images[k-1] = P_{x,kt}(y)
    std::optional<std::size_t> failed_step;
    Status failure = Status::Ok;
};

/// Iterated holonomy of y over |n| steps of size t (backwards when n < 0).
/// y must lie in the shrunken domain of the first step.
inline HolonomyOrbit holonomy_orbit(const FlowSpec& f, const Point& x, double beta, double t, long n,
                                    const Point& y, const IntegratorOptions& opt = {}, bool check_tube = true)
{
    HolonomyOrbit out;
    if (n == 0)
        return out;
    const double step = n < 0 ? -t : t;
    const auto count = static_cast<std::size_t>(n < 0 ? -n : n);
    const BaseChain chain = build_chain(f, x, beta, step, count, opt);
    require_on_section(f, chain.sections[0], y, holonomy_domain_radius(f, chain.sections[0], t));
    Point cur = y;
    double elapsed = 0.0;
    for (std::size_t k = 1; k <= count; ++k) {
        if (k > chain.steps()) {
            out.failed_step = k;
            out.failure = chain.stop;
            return out;
        }
        const CrossSection& target = chain.sections[k];
        const CrossingOutcome o = transport(f, cur, target, step, opt);
        if (o.status != Status::Ok) {
            out.failed_step = k;
            out.failure = o.status;
            return out;
        }
        HolonomyResult r;
        r.image = o.event.hit_point;
        r.coords = section_coords(f.manifold, target.frame, r.image);
        elapsed += o.event.hit_time;
        r.hit_time = elapsed;
        r.tube_ok = !check_tube || tube_ok(f, chain.sections[k - 1].base(), cur, beta, step, opt);
        out.images.push_back(r);
        cur = r.image;
    }
    return out;
}

} // namespace rexp
