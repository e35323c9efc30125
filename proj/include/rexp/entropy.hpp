#pragma once

// Topological entropy from greedy (t, eps)-separated subsets of sampled points.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rexp/parallel.hpp"
#include "rexp/sections.hpp"

namespace rexp {

/// Points to seed orbits from: a random or regular grid sample of a chart box
/// (or of a chart segment when `segment` is set), minus an optional band
/// |coord[axis]| < halfwidth.
struct SampleSpec {
    std::size_t count = 4000;
    std::uint64_t seed = 1;
    bool grid = false;
    std::array<std::size_t, 3> grid_shape{20, 20, 10};
    std::optional<std::array<double, 3>> lo, hi;
    std::optional<std::pair<Vec3, Vec3>> segment;
    std::optional<std::pair<std::size_t, double>> exclude_band;
};

inline SampleSpec default_sample_spec(const FlowSpec& f)
{
    SampleSpec s;
    if (f.name.rfind("solid_torus", 0) == 0)
        s.exclude_band = std::make_pair(std::size_t{0}, 0.05);
    // on a suspension, a short unstable segment resolves the growth with few samples
    if (f.manifold.gluing) {
        const Vec2 e = f.manifold.gluing->unstable;
        const Vec3 a{0.3, 0.3, 0.5};
        s.segment = std::make_pair(a, a + 0.3 * Vec3{e[0], e[1], 0.0});
    }
    return s;
}

inline std::vector<Point> sample_points(const FlowSpec& f, const SampleSpec& spec)
{
    const auto& m = f.manifold;
    std::array<double, 3> lo{}, hi{};
    for (std::size_t i = 0; i < kDim; ++i) {
        if (m.periodic[i]) {
            lo[i] = m.periodic[i]->lo;
            hi[i] = lo[i] + m.periodic[i]->period;
        } else {
            lo[i] = -1.0;
            hi[i] = 1.0;
        }
    }
    if (m.gluing) {
        lo = {0.0, 0.0, 0.0};
        hi = {1.0, 1.0, 1.0};
    }
    if (spec.lo)
        lo = *spec.lo;
    if (spec.hi)
        hi = *spec.hi;
    for (std::size_t i = 0; i < kDim; ++i)
        if (!(hi[i] >= lo[i]))
            throw Error(ErrorCode::Validation, "sample region has hi < lo");

    auto admissible = [&](const Vec3& c) {
        if (m.disk_axes && std::hypot(c[(*m.disk_axes)[0]], c[(*m.disk_axes)[1]]) > 1.0)
            return false;
        if (spec.exclude_band && std::abs(c[spec.exclude_band->first]) < spec.exclude_band->second)
            return false;
        return field_norm(f, Point{c}) > kSingularThreshold;
    };
    std::vector<Point> out;
    if (spec.segment) {
        const auto& [a, b] = *spec.segment;
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < spec.count; ++i) {
            const double s = spec.grid ? (static_cast<double>(i) + 0.5) / static_cast<double>(spec.count) : u(rng);
            const Vec3 p = a + s * (b - a);
            if (admissible(p))
                out.push_back(wrap(m, p));
        }
        return out;
    }
    if (spec.grid) {
        const auto& n = spec.grid_shape;
        for (std::size_t a = 0; a < n[0]; ++a)
            for (std::size_t b = 0; b < n[1]; ++b)
                for (std::size_t c = 0; c < n[2]; ++c) {
                    const std::array<std::size_t, 3> idx{a, b, c};
                    Vec3 p{};
                    for (std::size_t i = 0; i < kDim; ++i)
                        p[i] = lo[i] + (hi[i] - lo[i]) * (static_cast<double>(idx[i]) + 0.5) /
                                           static_cast<double>(n[i]);
                    if (admissible(p))
                        out.push_back(wrap(m, p));
                }
        return out;
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t tries = 0; out.size() < spec.count && tries < 1000 * spec.count + 1000; ++tries) {
        Vec3 p{};
        for (std::size_t i = 0; i < kDim; ++i)
            p[i] = lo[i] + (hi[i] - lo[i]) * u(rng);
        if (admissible(p))
            out.push_back(wrap(m, p));
    }
    if (out.size() < spec.count)
        throw Error(ErrorCode::Validation, "sample region has too little admissible volume");
    return out;
}

/// Orbits of every sample at times k h, k = 0..steps.
struct OrbitCache {
    double h = 0.0;
    std::size_t steps = 0;
    std::vector<std::vector<Point>> orbits;

    const Point& at(std::size_t i, std::size_t k) const { return orbits[i][k]; }
};

inline OrbitCache cache_orbits(const FlowSpec& f, const std::vector<Point>& samples, double t_max, double h,
                               unsigned threads = 1, const IntegratorOptions& opt = {})
{
    if (!(h > 0.0))
        throw Error(ErrorCode::Validation, "orbit step must be positive");
    OrbitCache c;
    c.h = h;
    c.steps = static_cast<std::size_t>(std::floor(t_max / h * (1.0 + 1e-12)));
    c.orbits.resize(samples.size());
    std::vector<double> taus(c.steps + 1);
    for (std::size_t k = 0; k <= c.steps; ++k)
        taus[k] = static_cast<double>(k) * h;
    parallel_for(samples.size(), threads, [&](std::size_t i) { c.orbits[i] = orbit_at(f, samples[i], 1, taus, opt); });
    return c;
}

inline void check_orbit_step(const FlowSpec& f, double eps, double h)
{
    if (!(eps > 0.0))
        throw Error(ErrorCode::Validation, "eps must be positive");
    if (h > eps / (2.0 * f.speed_bound) * (1.0 + 1e-12))
        throw Error(ErrorCode::StepTooCoarse, "orbit step exceeds eps / (2 max||X||)");
}

namespace detail {

/// Vantage-point tree over sample indices for radius queries in a metric.
class VpTree {
public:
    using Dist = std::function<double(std::size_t, std::size_t)>;

    VpTree(std::size_t n, Dist d) : dist_(std::move(d)), items_(n)
    {
        std::iota(items_.begin(), items_.end(), std::size_t{0});
        nodes_.reserve(n);
        root_ = build(0, n);
    }

    /// Indices j with d(i, j) <= r, unordered.
    void query(std::size_t i, double r, std::vector<std::size_t>& out) const
    {
        std::vector<int> stack;
        if (root_ >= 0)
            stack.push_back(root_);
        while (!stack.empty()) {
            const Node& nd = nodes_[static_cast<std::size_t>(stack.back())];
            stack.pop_back();
            const double d = dist_(i, nd.item);
            if (d <= r)
                out.push_back(nd.item);
            if (nd.inside >= 0 && d - r <= nd.mu)
                stack.push_back(nd.inside);
            if (nd.outside >= 0 && d + r >= nd.mu)
                stack.push_back(nd.outside);
        }
    }

private:
    struct Node {
        std::size_t item;
        double mu = 0.0;
        int inside = -1, outside = -1;
    };

    int build(std::size_t lo, std::size_t hi)
    {
        if (lo >= hi)
            return -1;
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{items_[lo]});
        if (hi - lo > 1) {
            const std::size_t vp = items_[lo];
            std::vector<std::pair<double, std::size_t>> ds;
            ds.reserve(hi - lo - 1);
            for (std::size_t k = lo + 1; k < hi; ++k)
                ds.emplace_back(dist_(vp, items_[k]), items_[k]);
            const std::size_t mid = ds.size() / 2;
            std::nth_element(ds.begin(), ds.begin() + static_cast<std::ptrdiff_t>(mid), ds.end());
            for (std::size_t k = 0; k < ds.size(); ++k)
                items_[lo + 1 + k] = ds[k].second;
            const double mu = ds[mid].first;
            const int in = build(lo + 1, lo + 1 + mid);
            const int out = build(lo + 1 + mid, hi);
            nodes_[static_cast<std::size_t>(id)].mu = mu;
            nodes_[static_cast<std::size_t>(id)].inside = in;
            nodes_[static_cast<std::size_t>(id)].outside = out;
        }
        return id;
    }

    Dist dist_;
    std::vector<std::size_t> items_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

/// For every sample i, the earlier samples j < i within eps at time 0, with
/// how far their separation has been scanned. Scanning is lazy: a pair is
/// advanced only when the greedy pass needs it.
struct ClosePair {
    std::uint32_t j = 0;
    std::uint32_t k = 0; // first separating index if sep, else last index scanned
    bool sep = false;
};

class SeparationTable {
public:
    SeparationTable(const FlowSpec& f, const OrbitCache& c, double eps, unsigned threads)
        : f_(&f), c_(&c), eps_(eps), lists_(c.orbits.size())
    {
        const auto& m = f.manifold;
        const std::size_t n = c.orbits.size();
        const VpTree tree(n, [&](std::size_t a, std::size_t b) { return distance(m, c.at(a, 0), c.at(b, 0)); });
        parallel_for(n, threads, [&](std::size_t i) {
            std::vector<std::size_t> near;
            tree.query(i, eps, near);
            std::sort(near.begin(), near.end());
            for (std::size_t j : near) {
                if (j >= i)
                    break;
                lists_[i].push_back(ClosePair{static_cast<std::uint32_t>(j), 0, false});
            }
        });
    }

    /// Greedy pass in index order at horizon index kt. Calls must use
    /// non-decreasing kt only for efficiency; results do not depend on order.
    std::size_t greedy_count(std::size_t kt)
    {
        kt = std::min(kt, c_->steps);
        std::vector<std::uint8_t> accepted(lists_.size(), 0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < lists_.size(); ++i) {
            bool ok = true;
            for (ClosePair& p : lists_[i]) {
                if (!accepted[p.j])
                    continue;
                if (!separated_by(i, p, kt)) {
                    ok = false;
                    break;
                }
            }
            accepted[i] = ok;
            count += ok;
        }
        return count;
    }

private:
    bool separated_by(std::size_t i, ClosePair& p, std::size_t kt)
    {
        if (p.sep)
            return p.k <= kt;
        while (p.k < kt) {
            ++p.k;
            if (separated(f_->manifold, c_->at(i, p.k), c_->at(p.j, p.k), eps_)) {
                p.sep = true;
                return true;
            }
        }
        return false;
    }

    const FlowSpec* f_;
    const OrbitCache* c_;
    double eps_;
    std::vector<std::vector<ClosePair>> lists_;
};

inline std::size_t horizon_index(double t, double h)
{
    return static_cast<std::size_t>(std::floor(t / h * (1.0 + 1e-12)));
}

} // namespace detail

/// Greedy maximal (t, eps)-separated subset of the samples in index order;
/// pairs are compared at times 0, h, 2h, ... <= t with strict "> eps".
inline std::size_t separated_count(const FlowSpec& f, const std::vector<Point>& samples, double t, double eps,
                                   double orbit_step, unsigned threads = 1, const IntegratorOptions& opt = {})
{
    check_orbit_step(f, eps, orbit_step);
    if (!(t >= 0.0))
        throw Error(ErrorCode::Validation, "t must be non-negative");
    if (samples.empty())
        return 0;
    const OrbitCache c = cache_orbits(f, samples, t, orbit_step, threads, opt);
    return detail::SeparationTable(f, c, eps, threads).greedy_count(c.steps);
}

struct EntropyReport {
    std::string flow;
    SampleSpec sample_spec;
    std::size_t sample_count = 0;
    std::vector<double> eps_list;
    std::vector<double> t_list;
    double orbit_step = 0.0;
    /// counts[e][k]: certified lower bound on s_t(eps) for eps_list[e], t_list[k]
    /// (running maximum of the greedy counts over t' <= t and eps' >= eps).
    std::vector<std::vector<std::size_t>> counts;
    std::vector<std::vector<std::size_t>> raw_counts;
    std::vector<double> slopes;                                  // NaN when no window
    std::vector<std::pair<std::size_t, std::size_t>> windows;    // [first, last] t indices
    double verdict = 0.0;
    double uncertainty = 0.0;
    double wall_seconds = 0.0;
};

namespace detail {

/// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

} // namespace detail

/// Counts s_t(eps) on a grid of (eps, t) and fits log-count slopes over the
/// longest run of t values with counts below 0.8 of the sample count.
inline EntropyReport entropy_estimate(const FlowSpec& f, const SampleSpec& spec, const std::vector<double>& eps_list,
                                      const std::vector<double>& t_list, std::optional<double> orbit_step = {},
                                      unsigned threads = 1, const IntegratorOptions& opt = {})
{
    if (eps_list.empty() || t_list.empty())
        throw Error(ErrorCode::Validation, "eps_list and t_list must be non-empty");
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1]))
            throw Error(ErrorCode::Validation, "eps_list must be strictly decreasing");
    for (std::size_t i = 1; i < t_list.size(); ++i)
        if (!(t_list[i] > t_list[i - 1]))
            throw Error(ErrorCode::Validation, "t_list must be strictly increasing");
    if (!(t_list.front() >= 0.0))
        throw Error(ErrorCode::Validation, "t_list must be non-negative");
    const double h = orbit_step.value_or(eps_list.back() / (2.0 * f.speed_bound));
    for (double e : eps_list)
        check_orbit_step(f, e, h);

    EntropyReport r;
    r.flow = f.name;
    r.sample_spec = spec;
    r.eps_list = eps_list;
    r.t_list = t_list;
    r.orbit_step = h;
    const auto samples = sample_points(f, spec);
    r.sample_count = samples.size();
    const OrbitCache cache = cache_orbits(f, samples, t_list.back(), h, threads, opt);

    const std::size_t E = eps_list.size(), T = t_list.size();
    r.raw_counts.assign(E, std::vector<std::size_t>(T, 0));
    for (std::size_t e = 0; e < E; ++e) {
        detail::SeparationTable table(f, cache, eps_list[e], threads);
        for (std::size_t k = 0; k < T; ++k)
            r.raw_counts[e][k] = table.greedy_count(detail::horizon_index(t_list[k], h));
    }
    r.counts = r.raw_counts;
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t k = 0; k < T; ++k) {
            if (k > 0)
                r.counts[e][k] = std::max(r.counts[e][k], r.counts[e][k - 1]);
            if (e > 0)
                r.counts[e][k] = std::max(r.counts[e][k], r.counts[e - 1][k]);
        }

    const double cap = 0.8 * static_cast<double>(r.sample_count);
    std::vector<double> valid;
    std::optional<double> finest;
    for (std::size_t e = 0; e < E; ++e) {
        std::size_t best_lo = 0, best_len = 0;
        for (std::size_t k = 0; k < T;) {
            if (!(static_cast<double>(r.counts[e][k]) < cap)) {
                ++k;
                continue;
            }
            std::size_t j = k;
            while (j < T && static_cast<double>(r.counts[e][j]) < cap)
                ++j;
            if (j - k > best_len) {
                best_len = j - k;
                best_lo = k;
            }
            k = j;
        }
        double slope = std::numeric_limits<double>::quiet_NaN();
        if (best_len >= 2) {
            std::vector<double> x, y;
            for (std::size_t k = best_lo; k < best_lo + best_len; ++k) {
                x.push_back(t_list[k]);
                y.push_back(std::log(static_cast<double>(r.counts[e][k])));
            }
            slope = detail::ls_slope(x, y);
            valid.push_back(slope);
            finest = slope;
            r.windows.emplace_back(best_lo, best_lo + best_len - 1);
        } else {
            r.windows.emplace_back(T, T);
        }
        r.slopes.push_back(slope);
    }
    if (!finest)
        throw Error(ErrorCode::Saturated, "every t-window is saturated; increase the sample count");
    r.verdict = *finest;
    const auto [mn, mx] = std::minmax_element(valid.begin(), valid.end());
    r.uncertainty = *mx - *mn;
    return r;
}

/// eps,t,count rows (certified counts), then raw counts in a second column.
inline void write_csv(std::ostream& os, const EntropyReport& r)
{
    os << "eps,t,count,raw_count\n";
    char buf[128];
    for (std::size_t e = 0; e < r.eps_list.size(); ++e)
        for (std::size_t k = 0; k < r.t_list.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.12g,%.12g,%zu,%zu\n", r.eps_list[e], r.t_list[k], r.counts[e][k],
                          r.raw_counts[e][k]);
            os << buf;
        }
}

/// Two-column "t log(count)" data for one eps.
inline void write_dat(std::ostream& os, const EntropyReport& r, std::size_t e)
{
    char buf[96];
    std::snprintf(buf, sizeof buf, "# eps = %.12g\n# t log_count\n", r.eps_list[e]);
    os << buf;
    for (std::size_t k = 0; k < r.t_list.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.12g %.17g\n", r.t_list[k], std::log(static_cast<double>(r.counts[e][k])));
        os << buf;
    }
}

} // namespace rexp
