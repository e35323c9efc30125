#pragma once

// Local rescaled stable/unstable sets on cell grids, and the tests built on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rexp/parallel.hpp"
#include "rexp/sections.hpp"

namespace rexp {

enum class SetDirection { Stable, Unstable };

inline const char* to_string(SetDirection d) { return d == SetDirection::Stable ? "stable" : "unstable"; }

/// Outcome of testing one point. Violated means a holonomy image existed but
/// broke the tolerance; the other non-member states are integration outcomes.
enum class CellState : std::uint8_t { Member, Violated, LeftTube, Timeout, NoCrossing, OutsideDomain, OutOfManifold };

inline const char* error_state(CellState s)
{
    switch (s) {
    case CellState::Member:
    case CellState::Violated: return "none";
    case CellState::LeftTube: return "left_tube";
    case CellState::Timeout: return "timeout";
    case CellState::NoCrossing: return "no_crossing";
    case CellState::OutsideDomain: return "outside_domain";
    case CellState::OutOfManifold: return "out_of_manifold";
    }
    return "unknown";
}

inline CellState cell_state(Status s)
{
    switch (s) {
    case Status::Ok: return CellState::Member;
    case Status::LeftTube: return CellState::LeftTube;
    case Status::Timeout:
    case Status::SingularBase: return CellState::Timeout;
    case Status::OutOfManifold: return CellState::OutOfManifold;
    case Status::NoCrossing: break;
    }
    return CellState::NoCrossing;
}

/// Base-orbit data for iterating holonomies of many points near x: the
/// section chain plus one-step derivatives. Immutable after construction and
/// shared by all cell tests.
class TransverseProbe {
public:
    struct Trial {
        CellState state = CellState::Member;
        std::size_t steps = 0; // holonomy steps that met the tolerance
    };

    TransverseProbe(const FlowSpec& f, const Point& x, double beta, double t, std::size_t horizon,
                    const IntegratorOptions& opt = {})
        : f_(&f), opt_(opt), chain_(build_chain(f, x, beta, t, horizon, opt))
    {
    }

    const FlowSpec& flow() const { return *f_; }
    const BaseChain& chain() const { return chain_; }
    const CrossSection& section(std::size_t k) const { return chain_.sections[k]; }
    std::size_t steps() const { return chain_.steps(); }
    double step_time() const { return chain_.step_time; }

    /// Iterates the point with section coordinates c for up to `horizon`
    /// steps, requiring d(b_k, y_k) <= factor * ||X(b_k)|| at every step.
    /// The horizon is truncated to the chain length (the certified horizon).
    Trial run(const Vec2& c, double factor, std::size_t horizon, std::vector<Point>* images = nullptr) const
    {
        Trial tr;
        Point y;
        try {
            y = exp_map(f_->manifold, chain_.sections[0].frame, c);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::OutOfManifold)
                throw;
            tr.state = CellState::OutOfManifold;
            return tr;
        }
        for (std::size_t k = 1; k <= std::min(horizon, chain_.steps()); ++k) {
            const CrossSection& target = chain_.sections[k];
            const CrossingOutcome o = transport(*f_, y, target, chain_.step_time, opt_);
            if (o.status != Status::Ok) {
                tr.state = cell_state(o.status);
                return tr;
            }
            y = o.event.hit_point;
            if (images)
                images->push_back(y);
            if (std::isfinite(factor) &&
                distance(f_->manifold, target.base(), y) > factor * target.base_speed * (1.0 + 1e-12)) {
                tr.state = CellState::Violated;
                return tr;
            }
            tr.steps = k;
        }
        return tr;
    }

    /// Derivative of the step k-1 -> k holonomy in frame coordinates, by
    /// central differences with a step proportional to ||X(b_{k-1})||.
    std::optional<Mat2> step_jacobian(std::size_t k) const
    {
        if (k == 0 || k > chain_.steps())
            return std::nullopt;
        const CrossSection& from = chain_.sections[k - 1];
        const CrossSection& to = chain_.sections[k];
        const double h = std::max(1e-5 * from.base_speed, 1e-10);
        Mat2 J{};
        for (int i = 0; i < 2; ++i) {
            Vec2 c[2];
            for (int s = 0; s < 2; ++s) {
                Vec2 e{};
                e[i] = s == 0 ? h : -h;
                CrossingOutcome o;
                try {
                    const Point y = exp_map(f_->manifold, from.frame, e);
                    o = transport(*f_, y, to, chain_.step_time, opt_, false);
                } catch (const Error&) {
                    return std::nullopt;
                }
                if (o.status != Status::Ok)
                    return std::nullopt;
                c[s] = section_coords(f_->manifold, to.frame, o.event.hit_point);
            }
            J[0][i] = (c[0][0] - c[1][0]) / (2.0 * h);
            J[1][i] = (c[0][1] - c[1][1]) / (2.0 * h);
        }
        return J;
    }

private:
    const FlowSpec* f_;
    IntegratorOptions opt_;
    BaseChain chain_;
};

struct RSetParams {
    double beta = 0.1;
    double t = 1.0;
    std::size_t n_max = 12;
    std::size_t resolution = 101;
    SetDirection direction = SetDirection::Stable;
    /// Tolerance is tolerance_factor / L^t * ||X||; defaults to beta. Infinity disables it.
    std::optional<double> tolerance_factor;
    /// Steps used to build the per-grid quadratic that picks cell candidates.
    std::size_t probe_horizon = 12;
    unsigned threads = 1;
    IntegratorOptions integ;
};

/// Cell grid over a transverse disk. Cell (i, j) is centred at
/// ((i - c) w, (j - c) w) in section coordinates, c = (resolution - 1) / 2.
struct RSetGrid {
    CrossSection section; // N^r_beta(x) at the base point
    double domain_radius = 0.0;
    std::size_t resolution = 0;
    double cell_width = 0.0;
    SetDirection direction = SetDirection::Stable;
    double beta = 0.0;
    double t = 0.0;
    std::size_t n_max = 0;
    double tolerance_factor = 0.0;
    std::size_t certified_horizon = 0;
    Status horizon_stop = Status::Ok;

    std::vector<CellState> state;
    std::vector<std::uint8_t> member;
    std::vector<int> component; // -1 for non-members
    std::vector<Vec2> witness;  // coordinates of the point that certified membership

    std::size_t size() const { return resolution * resolution; }
    std::size_t index(std::size_t i, std::size_t j) const { return j * resolution + i; }
    std::size_t center_index() const { return index(resolution / 2, resolution / 2); }
    Vec2 cell_center(std::size_t k) const
    {
        const double c = static_cast<double>(resolution / 2);
        return {(static_cast<double>(k % resolution) - c) * cell_width,
                (static_cast<double>(k / resolution) - c) * cell_width};
    }
    int center_label() const { return component.empty() ? -1 : component[center_index()]; }
    bool in_cw(std::size_t k) const { return member[k] && component[k] == center_label(); }
    std::size_t member_count() const { return static_cast<std::size_t>(std::count(member.begin(), member.end(), 1)); }
    std::size_t cw_count() const
    {
        std::size_t n = 0;
        for (std::size_t k = 0; k < size(); ++k)
            n += in_cw(k);
        return n;
    }
    std::size_t tally(CellState s) const { return static_cast<std::size_t>(std::count(state.begin(), state.end(), s)); }
};

namespace detail {

inline RSetGrid empty_grid(const CrossSection& section, double radius, std::size_t resolution)
{
    if (resolution == 0 || resolution % 2 == 0)
        throw Error(ErrorCode::Validation, "grid resolution must be odd");
    RSetGrid g;
    g.section = section;
    g.domain_radius = radius;
    g.resolution = resolution;
    g.cell_width = 2.0 * radius / static_cast<double>(resolution);
    g.state.assign(g.size(), CellState::OutsideDomain);
    g.member.assign(g.size(), 0);
    g.component.assign(g.size(), -1);
    g.witness.assign(g.size(), Vec2{});
    return g;
}

/// argmin of y^T H y over the box [lo, hi] (H symmetric positive definite).
inline Vec2 box_minimizer(const Mat2& H, const Vec2& lo, const Vec2& hi)
{
    if (lo[0] <= 0.0 && 0.0 <= hi[0] && lo[1] <= 0.0 && 0.0 <= hi[1])
        return {0.0, 0.0};
    auto q = [&](const Vec2& y) { return dot(y, mul(H, y)); };
    Vec2 best{};
    double best_q = std::numeric_limits<double>::infinity();
    for (int axis = 0; axis < 2; ++axis) {
        const int other = 1 - axis;
        for (double fixed : {lo[axis], hi[axis]}) {
            Vec2 y{};
            y[axis] = fixed;
            y[other] = std::clamp(-H[other][axis] * fixed / H[other][other], lo[other], hi[other]);
            const double v = q(y);
            if (v < best_q) {
                best_q = v;
                best = y;
            }
        }
    }
    return best;
}

/// Normalised sum of J_k^T J_k / ||X(b_k)||^2 over the probe steps: the
/// quadratic whose small values mark the directions that stay close.
inline Mat2 closeness_form(const TransverseProbe& p, std::size_t horizon)
{
    Mat2 J = identity2();
    Mat2 H{};
    for (std::size_t k = 1; k <= std::min(horizon, p.steps()); ++k) {
        const auto D = p.step_jacobian(k);
        if (!D)
            break;
        J = mul(*D, J);
        const double c = p.section(k).base_speed;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                H[a][b] += (J[0][a] * J[0][b] + J[1][a] * J[1][b]) / (c * c);
    }
    const double tr = H[0][0] + H[1][1];
    if (!(tr > 0.0) || !std::isfinite(tr))
        return identity2();
    for (auto& row : H)
        for (double& v : row)
            v /= tr;
    H[0][0] += 1e-12;
    H[1][1] += 1e-12;
    return H;
}

inline int rank_failure(CellState s)
{
    switch (s) {
    case CellState::Timeout: return 6;
    case CellState::NoCrossing: return 5;
    case CellState::OutOfManifold: return 4;
    case CellState::LeftTube: return 3;
    case CellState::Violated: return 2;
    case CellState::OutsideDomain: return 1;
    case CellState::Member: return 0;
    }
    return 0;
}

struct RSetRun {
    TransverseProbe probe;
    RSetGrid grid;
    double tolerance = 0.0; // factor applied to ||X(b_k)||
};

inline RSetRun run_rset(const FlowSpec& f, const Point& x, const RSetParams& p)
{
    if (p.n_max < 1)
        throw Error(ErrorCode::Validation, "n_max must be at least 1");
    if (!(p.t > 0.0))
        throw Error(ErrorCode::Validation, "t must be positive");
    const double sign = p.direction == SetDirection::Stable ? 1.0 : -1.0;
    const double Lt = std::pow(f.constants.L, p.t);
    const double tau = p.tolerance_factor.value_or(p.beta);
    if (!(tau >= 0.0))
        throw Error(ErrorCode::Validation, "tolerance factor must be non-negative");

    RSetRun run{TransverseProbe(f, x, p.beta, sign * p.t, std::max(p.n_max, p.probe_horizon), p.integ), {}, tau / Lt};
    const CrossSection& s0 = run.probe.section(0);
    run.grid = empty_grid(s0, p.beta / Lt * s0.base_speed, p.resolution);
    RSetGrid& g = run.grid;
    g.direction = p.direction;
    g.beta = p.beta;
    g.t = p.t;
    g.n_max = p.n_max;
    g.tolerance_factor = tau;
    g.certified_horizon = std::min(p.n_max, run.probe.steps());
    g.horizon_stop = run.probe.steps() < p.n_max ? run.probe.chain().stop : Status::Ok;

    const Mat2 H = closeness_form(run.probe, p.probe_horizon);
    const double R = g.domain_radius * (1.0 + 1e-12);
    const double half = 0.5 * g.cell_width;
    parallel_for(g.size(), p.threads, [&](std::size_t k) {
        const Vec2 c = g.cell_center(k);
        const Vec2 cand = box_minimizer(H, {c[0] - half, c[1] - half}, {c[0] + half, c[1] + half});
        CellState worst = CellState::OutsideDomain;
        for (const Vec2& y : {cand, c}) {
            if (norm(y) > R)
                continue;
            const auto tr = run.probe.run(y, run.tolerance, p.n_max);
            if (tr.state == CellState::Member) {
                g.state[k] = CellState::Member;
                g.member[k] = 1;
                g.witness[k] = y;
                return;
            }
            if (rank_failure(tr.state) > rank_failure(worst))
                worst = tr.state;
            if (y == c)
                break;
        }
        g.state[k] = worst;
    });
    return run;
}

} // namespace detail

/// Face-adjacency components of the member cells. Labels are numbered in
/// order of each component's first cell.
inline RSetGrid connected_component(RSetGrid g)
{
    const std::size_t n = g.size(), res = g.resolution;
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t a) {
        while (parent[a] != a)
            a = parent[a] = parent[parent[a]];
        return a;
    };
    auto unite = [&](std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b)
            parent[std::max(a, b)] = std::min(a, b);
    };
    for (std::size_t k = 0; k < n; ++k) {
        if (!g.member[k])
            continue;
        if (k % res + 1 < res && g.member[k + 1])
            unite(k, k + 1);
        if (k + res < n && g.member[k + res])
            unite(k, k + res);
    }
    std::vector<int> label(n, -1);
    int next = 0;
    g.component.assign(n, -1);
    for (std::size_t k = 0; k < n; ++k) {
        if (!g.member[k])
            continue;
        const std::size_t r = find(k);
        if (label[r] < 0)
            label[r] = next++;
        g.component[k] = label[r];
    }
    return g;
}

/// Membership grid for W^{r,s} (or W^{r,u}) over the disk of radius
/// beta / L^t * ||X(x)||. A cell is a member when its candidate point (the
/// minimiser of the closeness form over the cell) or its centre survives all
/// n_max holonomy steps within tolerance.
inline RSetGrid compute_rset(const FlowSpec& f, const Point& x, const RSetParams& p)
{
    return connected_component(detail::run_rset(f, x, p).grid);
}

/// Whether CW reaches the sphere of radius gamma * ||X(x)||, to within a cell.
inline bool sphere_reach(const RSetGrid& g, double gamma)
{
    if (!(gamma >= 0.0))
        throw Error(ErrorCode::Validation, "gamma must be non-negative");
    const double target = gamma * g.section.base_speed;
    if (target > g.domain_radius * (1.0 + 1e-12))
        throw Error(ErrorCode::GammaTooLarge, "gamma * ||X|| exceeds the grid radius");
    for (std::size_t k = 0; k < g.size(); ++k)
        if (g.in_cw(k) && std::abs(norm(g.cell_center(k)) - target) <= g.cell_width)
            return true;
    return false;
}

struct DynamicalBall {
    RSetGrid grid;
    std::size_t n = 0;
    double epsilon = 0.0;
};

/// N^r_t(x, n, eps) tested at cell centres over the disk of radius eps ||X(x)||.
inline DynamicalBall dynamical_ball(const FlowSpec& f, const Point& x, std::size_t n, double eps, double t,
                                    std::size_t resolution, unsigned threads = 1,
                                    const IntegratorOptions& opt = {})
{
    if (!(t > 0.0))
        throw Error(ErrorCode::Validation, "t must be positive");
    const TransverseProbe probe(f, x, eps, t, n, opt);
    DynamicalBall b;
    b.n = n;
    b.epsilon = eps;
    const CrossSection& s0 = probe.section(0);
    b.grid = detail::empty_grid(s0, eps * s0.base_speed, resolution);
    RSetGrid& g = b.grid;
    g.beta = eps;
    g.t = t;
    g.n_max = n;
    g.tolerance_factor = eps;
    g.certified_horizon = std::min(n, probe.steps());
    g.horizon_stop = probe.steps() < n ? probe.chain().stop : Status::Ok;
    const double R = g.domain_radius * (1.0 + 1e-12);
    parallel_for(g.size(), threads, [&](std::size_t k) {
        const Vec2 c = g.cell_center(k);
        if (norm(c) > R)
            return;
        const auto tr = probe.run(c, eps, n);
        g.state[k] = tr.state;
        if (tr.state == CellState::Member) {
            g.member[k] = 1;
            g.witness[k] = c;
        }
    });
    g = connected_component(std::move(g));
    return b;
}

struct RStableCertificate {
    bool rstable = false;
    std::size_t n_max = 0;
    /// (epsilon, eta that worked) for each epsilon tested, in order.
    std::vector<std::pair<double, std::optional<double>>> pairs;
    std::optional<double> failing_epsilon;
};

inline std::vector<double> default_eta_grid()
{
    std::vector<double> g;
    for (int j = 0; j <= 12; ++j)
        g.push_back(0.1 * std::ldexp(1.0, -j));
    return g;
}

/// For each eps, looks for an eta whose whole disk of radius eta / L^t ||X(x)||
/// (boundary ring plus a resolution^2 grid) stays within eps ||X(P^k x)|| for
/// 0 <= k <= n_max. A negative answer is a certificate; a positive one holds
/// at the tested scales only.
inline RStableCertificate detect_rstable_point(const FlowSpec& f, const Point& x, double t,
                                               const std::vector<double>& eps_list,
                                               std::vector<double> eta_grid, std::size_t n_max = 30,
                                               std::size_t resolution = 21, unsigned threads = 1,
                                               const IntegratorOptions& opt = {})
{
    if (eps_list.empty() || eta_grid.empty())
        throw Error(ErrorCode::Validation, "eps_list and eta_grid must be non-empty");
    std::sort(eta_grid.begin(), eta_grid.end(), std::greater<>());
    RStableCertificate cert;
    cert.n_max = n_max;
    const double Lt = std::pow(f.constants.L, t);
    for (double eps : eps_list) {
        const TransverseProbe probe(f, x, eps, t, n_max, opt);
        const double speed = probe.section(0).base_speed;
        std::optional<double> found;
        for (double eta : eta_grid) {
            const double r = eta / Lt * speed;
            if (r > eps * speed * (1.0 + 1e-12))
                continue;
            std::vector<Vec2> pts;
            constexpr int ring = 32;
            for (int a = 0; a < ring; ++a) {
                const double th = 2.0 * std::numbers::pi * a / ring;
                pts.push_back({r * std::cos(th), r * std::sin(th)});
            }
            const double c = static_cast<double>(resolution / 2);
            for (std::size_t j = 0; j < resolution; ++j)
                for (std::size_t i = 0; i < resolution; ++i) {
                    const Vec2 y{(static_cast<double>(i) - c) * r / std::max(c, 1.0),
                                 (static_cast<double>(j) - c) * r / std::max(c, 1.0)};
                    if (norm(y) <= r)
                        pts.push_back(y);
                }
            std::vector<std::uint8_t> ok(pts.size(), 0);
            parallel_for(pts.size(), threads, [&](std::size_t k) {
                ok[k] = probe.run(pts[k], eps, n_max).state == CellState::Member;
            });
            // a truncated chain cannot certify the full horizon
            if (probe.steps() >= n_max && std::all_of(ok.begin(), ok.end(), [](std::uint8_t v) { return v != 0; })) {
                found = eta;
                break;
            }
        }
        cert.pairs.emplace_back(eps, found);
        if (!found) {
            cert.failing_epsilon = eps;
            cert.rstable = false;
            return cert;
        }
    }
    cert.rstable = true;
    return cert;
}

struct ExpansivityWitness {
    std::size_t cell = 0;
    std::size_t i = 0, j = 0;
    Vec2 coords{};
    std::vector<Point> forward;  // P_{x,kt}(y), k = 1..n_max
    std::vector<Point> backward; // P_{x,-kt}(y)
};

struct ExpansivityPoint {
    Point x;
    std::size_t stable_members = 0;
    std::size_t unstable_members = 0;
    std::size_t shared_cells = 0; // non-centre cells in both grids
    std::size_t timeouts = 0;
    std::optional<ExpansivityWitness> witness;
    bool trivial() const { return !witness; }
};

struct ExpansivityVerdict {
    std::string flow;
    double beta = 0.0, t = 0.0;
    std::size_t n_max = 0, resolution = 0;
    std::vector<ExpansivityPoint> points;
    bool counterexample_found() const
    {
        return std::any_of(points.begin(), points.end(), [](const auto& p) { return !p.trivial(); });
    }
    const char* overall() const
    {
        return counterexample_found() ? "counterexample-found" : "consistent-with-R-expansive";
    }
};

inline ExpansivityVerdict check_expansivity(const FlowSpec& f, const std::vector<Point>& samples, double beta,
                                            double t, std::size_t n_max, std::size_t resolution,
                                            unsigned threads = 1, const IntegratorOptions& opt = {})
{
    ExpansivityVerdict v;
    v.flow = f.name;
    v.beta = beta;
    v.t = t;
    v.n_max = n_max;
    v.resolution = resolution;
    RSetParams p;
    p.beta = beta;
    p.t = t;
    p.n_max = n_max;
    p.resolution = resolution;
    p.threads = threads;
    p.integ = opt;
    for (const Point& x : samples) {
        p.direction = SetDirection::Stable;
        const auto s = detail::run_rset(f, x, p);
        p.direction = SetDirection::Unstable;
        const auto u = detail::run_rset(f, x, p);
        ExpansivityPoint r;
        r.x = x;
        r.stable_members = s.grid.member_count();
        r.unstable_members = u.grid.member_count();
        r.timeouts = s.grid.tally(CellState::Timeout) + u.grid.tally(CellState::Timeout);
        const std::size_t centre = s.grid.center_index();
        for (std::size_t k = 0; k < s.grid.size() && !r.witness; ++k) {
            if (k == centre || !s.grid.member[k] || !u.grid.member[k])
                continue;
            ++r.shared_cells;
            for (const Vec2& y : {s.grid.witness[k], u.grid.witness[k], s.grid.cell_center(k)}) {
                ExpansivityWitness w;
                if (s.probe.run(y, s.tolerance, n_max, &w.forward).state != CellState::Member)
                    continue;
                if (u.probe.run(y, u.tolerance, n_max, &w.backward).state != CellState::Member)
                    continue;
                w.cell = k;
                w.i = k % resolution;
                w.j = k / resolution;
                w.coords = y;
                r.witness = std::move(w);
                break;
            }
        }
        v.points.push_back(std::move(r));
    }
    return v;
}

enum class UefStatus { Found, BudgetExhausted, Vacuous };

inline const char* to_string(UefStatus s)
{
    switch (s) {
    case UefStatus::Found: return "found";
    case UefStatus::BudgetExhausted: return "budget_exhausted";
    case UefStatus::Vacuous: return "vacuous";
    }
    return "unknown";
}

struct UniformExpansivenessReport {
    std::string flow;
    std::size_t samples = 0;
    double A = 0.0;         // min ||X|| over the samples
    double max_speed = 0.0; // max ||X|| over the samples
    double eta = 0.0, beta = 0.0, t = 0.0;
    std::size_t budget = 0;
    UefStatus status = UefStatus::Vacuous;
    std::size_t N_eta = 0;
    std::size_t pairs_tested = 0;
    std::vector<std::size_t> per_sample; // max separation index per sample
    std::optional<std::pair<Point, Point>> witness;
};

/// For each sample x and probe points y on N^r_beta(x) with d(x, y) > eta,
/// finds the first |i| <= budget at which P_{x,it} separates them by
/// beta ||X(P_{x,it} x)|| (leaving the section counts as separated).
inline UniformExpansivenessReport uniform_expansiveness_scan(const FlowSpec& f, const std::vector<Point>& samples,
                                                              double eta, double beta, double t,
                                                              std::size_t budget, std::size_t angles = 64,
                                                              std::size_t radii = 4, unsigned threads = 1,
                                                              const IntegratorOptions& opt = {})
{
    if (samples.empty())
        throw Error(ErrorCode::Validation, "uef scan needs at least one sample point");
    if (!(eta > 0.0) || !(t > 0.0) || budget == 0 || angles == 0 || radii == 0)
        throw Error(ErrorCode::Validation, "uef scan needs eta > 0, t > 0 and positive budget/angles/radii");
    UniformExpansivenessReport rep;
    rep.flow = f.name;
    rep.samples = samples.size();
    rep.eta = eta;
    rep.beta = beta;
    rep.t = t;
    rep.budget = budget;
    rep.A = std::numeric_limits<double>::infinity();
    for (const Point& x : samples) {
        if (f.is_singular(x) || field_norm(f, x) <= kSingularThreshold)
            throw Error(ErrorCode::SingularBase, "sampled set meets the singular set");
        rep.A = std::min(rep.A, field_norm(f, x));
        rep.max_speed = std::max(rep.max_speed, field_norm(f, x));
    }
    if (eta >= beta * rep.max_speed) {
        rep.status = UefStatus::Vacuous;
        return rep;
    }
    if (eta > beta * rep.A * (1.0 + 1e-12))
        throw Error(ErrorCode::Validation, "eta must not exceed beta * A");

    rep.status = UefStatus::Found;
    for (const Point& x : samples) {
        const TransverseProbe fwd(f, x, beta, t, budget, opt);
        const TransverseProbe bwd(f, x, beta, -t, budget, opt);
        const double R = beta * fwd.section(0).base_speed;
        std::vector<Vec2> probes;
        for (std::size_t m = 0; m < radii; ++m) {
            const double frac = radii == 1 ? 0.0 : static_cast<double>(m) / static_cast<double>(radii - 1);
            const double r = eta * (1.0 + 1e-6) + frac * (R * (1.0 - 1e-6) - eta * (1.0 + 1e-6));
            for (std::size_t a = 0; a < angles; ++a) {
                const double th = 2.0 * std::numbers::pi * static_cast<double>(a) / static_cast<double>(angles);
                probes.push_back({r * std::cos(th), r * std::sin(th)});
            }
        }
        // separation index per probe; budget + 1 = never separated, 0 = probe off the manifold
        std::vector<std::size_t> sep(probes.size(), budget + 1);
        parallel_for(probes.size(), threads, [&](std::size_t q) {
            const Vec2 y = probes[q];
            Point yf;
            try {
                yf = exp_map(f.manifold, fwd.section(0).frame, y);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::OutOfManifold)
                    throw;
                sep[q] = 0;
                return;
            }
            Point yb = yf;
            bool f_alive = true, b_alive = true;
            for (std::size_t i = 1; i <= budget; ++i) {
                for (int dir = 0; dir < 2; ++dir) {
                    const TransverseProbe& pr = dir == 0 ? fwd : bwd;
                    bool& alive = dir == 0 ? f_alive : b_alive;
                    Point& cur = dir == 0 ? yf : yb;
                    if (!alive || i > pr.steps()) {
                        alive = false;
                        continue;
                    }
                    const CrossSection& s = pr.section(i);
                    const CrossingOutcome o = transport(f, cur, s, pr.step_time(), opt);
                    if (o.status == Status::LeftTube) {
                        sep[q] = i;
                        return;
                    }
                    if (o.status != Status::Ok) {
                        alive = false;
                        continue;
                    }
                    cur = o.event.hit_point;
                    if (distance(f.manifold, s.base(), cur) >= beta * s.base_speed) {
                        sep[q] = i;
                        return;
                    }
                }
            }
        });
        std::size_t worst = 0;
        for (std::size_t q = 0; q < probes.size(); ++q) {
            if (sep[q] == 0)
                continue;
            ++rep.pairs_tested;
            if (sep[q] > budget) {
                rep.status = UefStatus::BudgetExhausted;
                rep.witness = std::make_pair(x, exp_map(f.manifold, fwd.section(0).frame, probes[q]));
                rep.per_sample.push_back(budget + 1);
                rep.N_eta = 0;
                return rep;
            }
            worst = std::max(worst, sep[q]);
        }
        rep.per_sample.push_back(worst);
        rep.N_eta = std::max(rep.N_eta, worst);
    }
    return rep;
}

/// One row per cell: i,j,u,v,member,component,error_state.
inline void write_csv(std::ostream& os, const RSetGrid& g)
{
    os << "i,j,u,v,member,component,error_state\n";
    char buf[160];
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Vec2 c = g.cell_center(k);
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.12g,%.12g,%d,%d,%s\n", k % g.resolution, k / g.resolution, c[0],
                      c[1], g.member[k] ? 1 : 0, g.component[k], error_state(g.state[k]));
        os << buf;
    }
}

} // namespace rexp
