#pragma once

// Flow map by adaptive Dormand-Prince 5(4) with its 4th-order dense output,
// and event location of section crossings.
//
// Steps are taken in unwrapped chart coordinates starting from the canonical
// representative; each accepted end point is wrapped, so dense output is valid
// in the chart of the step it belongs to.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rexp/cross_section.hpp"
#include "rexp/flows.hpp"

namespace rexp {

struct IntegratorOptions {
    double tol = 1e-9;       // absolute and relative local error target
    double t_max = 200.0;    // largest |t| accepted by flow_map
    std::size_t max_steps = 2'000'000;
    double h_max = 0.1;
    double h_init = 1e-2;
};

/// Plane residual accepted as "on the section".
inline constexpr double kEventTolerance = 1e-10;

/// One accepted step with its continuous extension. Times are elapsed times
/// (tau >= 0) along the integration direction.
struct DenseStep {
    double tau0 = 0.0;
    double h = 0.0;
    std::array<Vec3, 5> rc{};

    Vec3 raw_at(double tau) const
    {
        if (h == 0.0)
            return rc[0];
        const double th = (tau - tau0) / h;
        const double th1 = 1.0 - th;
        Vec3 r{};
        for (std::size_t i = 0; i < kDim; ++i)
            r[i] = rc[0][i] + th * (rc[1][i] + th1 * (rc[2][i] + th * (rc[3][i] + th1 * rc[4][i])));
        return r;
    }
};

class Stepper {
public:
    Stepper(const FlowSpec& f, const Point& start, int sign, const IntegratorOptions& opt)
        : f_(&f), opt_(opt), sign_(sign < 0 ? -1.0 : 1.0), y_(start), h_(opt.h_init) {}

    double tau() const { return tau_; }
    const Point& point() const { return y_; }
    std::size_t steps() const { return steps_; }
    double sign() const { return sign_; }

    /// Takes one accepted step that does not pass tau_end.
    const DenseStep& step(double tau_end)
    {
        // Dormand-Prince tableau
        constexpr double a21 = 1.0 / 5.0;
        constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
        constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
        constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                         a54 = -212.0 / 729.0;
        constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                         a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
        constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                         a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
        constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                         e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
        constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                         d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                         d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

        const Vec3 y = y_.coords;
        if (tau_end - tau_ <= 1e-14 * std::max(1.0, tau_end)) {
            // rounding gap: snap without integrating
            dense_ = DenseStep{};
            dense_.tau0 = tau_;
            dense_.rc[0] = y;
            tau_ = std::max(tau_, tau_end);
            return dense_;
        }
        auto F = [&](const Vec3& p) { return sign_ * f_->field(p); };
        const Vec3 k1 = F(y);
        for (;;) {
            if (++steps_ > opt_.max_steps)
                throw Error(ErrorCode::Timeout, "step budget exhausted");
            const double remaining = tau_end - tau_;
            double h = std::min({h_, opt_.h_max, remaining});
            if (h <= 1e-14 * std::max(1.0, tau_))
                throw Error(ErrorCode::Timeout, "step size underflow");

            const Vec3 k2 = F(y + (h * a21) * k1);
            const Vec3 k3 = F(y + h * (a31 * k1 + a32 * k2));
            const Vec3 k4 = F(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
            const Vec3 k5 = F(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
            const Vec3 k6 = F(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
            const Vec3 ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
            const Vec3 k7 = F(ynew);
            const Vec3 err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

            double acc = 0.0;
            for (std::size_t i = 0; i < kDim; ++i) {
                const double sc = opt_.tol + opt_.tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
                acc += (err[i] / sc) * (err[i] / sc);
            }
            const double errn = std::sqrt(acc / static_cast<double>(kDim));
            const double fac = errn == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(errn, -0.2), 0.2, 5.0);
            if (errn > 1.0) {
                h_ = h * std::min(fac, 0.9);
                continue;
            }
            // land just past the first kink plane crossed inside the step
            if (const double theta = kink_fraction(y, ynew); theta < 1.0 - 1e-6) {
                h_ = theta * h * (1.0 + 1e-7);
                continue;
            }
            dense_.tau0 = tau_;
            dense_.h = h;
            const Vec3 ydiff = ynew - y;
            const Vec3 bspl = h * k1 - ydiff;
            dense_.rc[0] = y;
            dense_.rc[1] = ydiff;
            dense_.rc[2] = bspl;
            dense_.rc[3] = ydiff - h * k7 - bspl;
            dense_.rc[4] = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
            // a step clipped to tau_end should not shrink the next proposal
            if (h == remaining && h < h_)
                h_ = std::max(h_, h * fac);
            else
                h_ = h * fac;
            tau_ = (h == remaining) ? tau_end : tau_ + h;
            y_ = wrap(f_->manifold, ynew);
            return dense_;
        }
    }

    Point at(double tau) const { return wrap(f_->manifold, dense_.raw_at(tau)); }

private:
    double kink_fraction(const Vec3& a, const Vec3& b) const
    {
        double theta = 1.0;
        for (const auto& [axis, value] : f_->kinks) {
            const auto& per = f_->manifold.periodic[axis];
            const double period = per ? per->period : 0.0;
            const double base = per ? value + period * std::round((a[axis] - value) / period) : value;
            for (int c = per ? -1 : 0; c <= (per ? 1 : 0); ++c) {
                const double v = base + c * period;
                if ((a[axis] - v) * (b[axis] - v) < 0.0 && std::abs(a[axis] - v) > 1e-12 * std::max(1.0, std::abs(v)))
                    theta = std::min(theta, (v - a[axis]) / (b[axis] - a[axis]));
            }
        }
        return theta;
    }

    const FlowSpec* f_;
    IntegratorOptions opt_;
    double sign_;
    Point y_;
    double h_;
    double tau_ = 0.0;
    std::size_t steps_ = 0;
    DenseStep dense_{};
};

/// phi_t(x). phi_0 is the identity exactly.
inline Point flow_map(const FlowSpec& f, const Point& x, double t, const IntegratorOptions& opt = {})
{
    if (!(std::abs(t) <= opt.t_max))
        throw Error(ErrorCode::Validation, "|t| exceeds T_max");
    if (t == 0.0)
        return x;
    Stepper s(f, x, t < 0.0 ? -1 : 1, opt);
    const double end = std::abs(t);
    while (s.tau() < end)
        s.step(end);
    return s.point();
}

struct OrbitSegment {
    std::vector<double> times;
    std::vector<Point> points;
    double step_tolerance = 0.0;
};

/// Samples phi_s(x) at s = k * dt (sign of t_end gives the direction) for
/// k = 0 .. floor(|t_end| / dt).
inline OrbitSegment sample_orbit(const FlowSpec& f, const Point& x, double t_end, double dt,
                                 const IntegratorOptions& opt = {})
{
    if (!(dt > 0.0))
        throw Error(ErrorCode::Validation, "sample spacing must be positive");
    if (!(std::abs(t_end) <= opt.t_max))
        throw Error(ErrorCode::Validation, "|t| exceeds T_max");
    const double sign = t_end < 0.0 ? -1.0 : 1.0;
    const double end = std::abs(t_end);
    const auto count = static_cast<std::size_t>(std::floor(end / dt * (1.0 + 1e-12))) + 1;
    OrbitSegment seg;
    seg.step_tolerance = opt.tol;
    seg.times.reserve(count);
    seg.points.reserve(count);
    seg.times.push_back(0.0);
    seg.points.push_back(x);
    Stepper s(f, x, static_cast<int>(sign), opt);
    std::size_t k = 1;
    while (k < count) {
        const double target = std::min(end, static_cast<double>(k) * dt);
        while (s.tau() < target)
            s.step(target);
        seg.times.push_back(sign * static_cast<double>(k) * dt);
        seg.points.push_back(s.point());
        ++k;
    }
    return seg;
}

struct CrossingEvent {
    Point hit_point;
    double hit_time = 0.0;
    double residual = 0.0;
};

enum class Status { Ok, NoCrossing, LeftTube, Timeout, OutOfManifold, SingularBase };

inline const char* to_string(Status s)
{
    switch (s) {
    case Status::Ok: return "none";
    case Status::NoCrossing: return "no_crossing";
    case Status::LeftTube: return "left_tube";
    case Status::Timeout: return "timeout";
    case Status::OutOfManifold: return "out_of_manifold";
    case Status::SingularBase: return "singular_base";
    }
    return "unknown";
}

struct CrossingOutcome {
    Status status = Status::NoCrossing;
    CrossingEvent event;
};

/// First zero of the plane offset g(tau) = <phi(tau) - base, n> for elapsed
/// times in [lo, hi] along direction `sign`. Sign changes produced by the
/// wrap-around jump of g (far side of a periodic chart) are rejected. When
/// `radius` is finite the hit must also lie within it (else LeftTube).
inline CrossingOutcome locate_crossing(const FlowSpec& f, const Point& y, const NormalFrame& target,
                                       double radius, double lo, double hi, int sign,
                                       const IntegratorOptions& opt = {})
{
    const auto& m = f.manifold;
    CrossingOutcome out;
    auto g = [&](const Point& p) { return plane_offset(m, target, p); };
    auto finish = [&](const Point& hit, double tau, double residual) {
        out.event = CrossingEvent{hit, (sign < 0 ? -1.0 : 1.0) * tau, residual};
        out.status = Status::Ok;
        if (std::isfinite(radius)) {
            const double r = norm(section_coords(m, target, hit));
            if (r > radius * (1.0 + 1e-9))
                out.status = Status::LeftTube;
        }
        return out;
    };
    try {
        Stepper s(f, y, sign, opt);
        while (s.tau() < lo)
            s.step(lo);
        double prev_tau = s.tau();
        double prev_g = g(s.point());
        if (std::abs(prev_g) <= kEventTolerance)
            return finish(s.point(), prev_tau, prev_g);
        while (s.tau() < hi) {
            const DenseStep& st = s.step(hi);
            const double end_tau = s.tau();
            const double end_g = g(s.point());
            if (end_g == 0.0 || (prev_g < 0.0) != (end_g < 0.0)) {
                double a = prev_tau, b = end_tau, ga = prev_g;
                Point pb = s.point();
                double gb = end_g;
                for (int it = 0; it < 200 && gb != 0.0; ++it) {
                    if (b - a <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, b))
                        break;
                    const double mid = 0.5 * (a + b);
                    const Point pm = wrap(m, st.raw_at(mid));
                    const double gm = g(pm);
                    if ((ga < 0.0) != (gm < 0.0) || gm == 0.0) {
                        b = mid;
                        gb = gm;
                        pb = pm;
                    } else {
                        a = mid;
                        ga = gm;
                    }
                }
                Point hit = pb;
                double tau_hit = b, g_hit = gb;
                if (std::abs(ga) < std::abs(gb) && a > prev_tau) {
                    hit = wrap(m, st.raw_at(a));
                    tau_hit = a;
                    g_hit = ga;
                }
                if (std::abs(g_hit) <= 1e-6)
                    return finish(hit, tau_hit, g_hit);
                // jump of the wrapped offset, not a crossing
            }
            prev_tau = end_tau;
            prev_g = end_g;
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Timeout) {
            out.status = Status::Timeout;
            return out;
        }
        if (e.code() == ErrorCode::OutOfManifold) {
            out.status = Status::OutOfManifold;
            return out;
        }
        throw;
    }
    out.status = Status::NoCrossing;
    return out;
}

enum class Direction { Forward, Backward };

/// First crossing of `target` by the orbit of y inside the time window
/// [window_lo, window_hi] (actual times; the part on the requested side of 0
/// is scanned). Throws NoCrossing, LeftTube or Timeout.
inline CrossingEvent first_crossing(const FlowSpec& f, const Point& y, const CrossSection& target,
                                    double window_lo, double window_hi, Direction direction,
                                    const IntegratorOptions& opt = {})
{
    if (window_hi < window_lo)
        throw Error(ErrorCode::Validation, "empty crossing window");
    if (window_hi - window_lo > opt.t_max)
        throw Error(ErrorCode::Validation, "crossing window longer than T_max");
    const int sign = direction == Direction::Forward ? 1 : -1;
    const double lo = sign > 0 ? std::max(window_lo, 0.0) : std::max(-window_hi, 0.0);
    const double hi = sign > 0 ? window_hi : -window_lo;
    if (hi < lo)
        throw Error(ErrorCode::NoCrossing, "window lies on the other side of t = 0");
    const CrossingOutcome o = locate_crossing(f, y, target.frame, target.radius, lo, hi, sign, opt);
    switch (o.status) {
    case Status::Ok: return o.event;
    case Status::LeftTube: throw Error(ErrorCode::LeftTube, "crossing outside the section radius");
    case Status::Timeout: throw Error(ErrorCode::Timeout, "integration budget exhausted");
    case Status::OutOfManifold: throw Error(ErrorCode::OutOfManifold, "orbit left the chart");
    default: throw Error(ErrorCode::NoCrossing, "no sign change of the section offset in the window");
    }
}

} // namespace rexp
