#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "rexp/flows.hpp"
#include "rexp/integrate.hpp"

namespace oracle {

/// Eigenvalues of the cat matrix, ascending, from a dense solver.
inline std::pair<double, double> cat_eigenvalues()
{
    Eigen::Matrix2d a;
    a << 2, 1, 1, 1;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(a);
    return {es.eigenvalues()(0), es.eigenvalues()(1)};
}

/// Transverse offset of y from the base of a cat section, split into
/// unstable and stable coordinates scaled to unit length at height s.
inline std::pair<double, double> cat_split(const rexp::ModelManifold& m, const rexp::Point& base, const rexp::Point& y)
{
    const auto& g = *m.gluing;
    using rexp::operator-;
    const rexp::Vec3 d = y.coords - base.coords;
    const rexp::Vec2 dv{d[0], d[1]};
    const double s = base[2];
    return {std::pow(g.lambda, s) * rexp::dot(g.unstable_dual, dv), std::pow(g.lambda, -s) * rexp::dot(g.stable_dual, dv)};
}

/// The linear strip model: the offset (a, b) stays within tol for k = 1..n
/// steps of the hyperbolic map (sign +1 forward, -1 backward).
inline bool strip_member(double a, double b, double lambda, std::size_t n, double tol, int sign)
{
    for (std::size_t k = 1; k <= n; ++k) {
        const double gk = std::pow(lambda, sign * static_cast<double>(k));
        if (std::hypot(gk * a, b / gk) > tol)
            return false;
    }
    return true;
}

/// Bowen distance max_{0 <= k <= kt} d(phi_{kh} x, phi_{kh} y) by direct integration.
inline double bowen_distance(const rexp::FlowSpec& f, const rexp::Point& x, const rexp::Point& y, std::size_t kt,
                             double h)
{
    double d = rexp::distance(f.manifold, x, y);
    rexp::Point a = x, b = y;
    for (std::size_t k = 1; k <= kt; ++k) {
        a = rexp::flow_map(f, a, h);
        b = rexp::flow_map(f, b, h);
        d = std::max(d, rexp::distance(f.manifold, a, b));
    }
    return d;
}

/// Greedy separated subset in index order from an explicit distance matrix.
inline std::size_t greedy_separated(const std::vector<std::vector<double>>& d, double eps)
{
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (std::all_of(kept.begin(), kept.end(), [&](std::size_t j) { return d[i][j] > eps; }))
            kept.push_back(i);
    return kept.size();
}

/// Largest eps-separated subset by branch and bound (small inputs only).
inline std::size_t max_separated(const std::vector<std::vector<double>>& d, double eps)
{
    const std::size_t n = d.size();
    std::size_t best = 0;
    std::vector<std::size_t> chosen;
    std::function<void(std::size_t)> go = [&](std::size_t i) {
        if (chosen.size() + (n - i) <= best)
            return;
        if (i == n) {
            best = chosen.size();
            return;
        }
        if (std::all_of(chosen.begin(), chosen.end(), [&](std::size_t j) { return d[i][j] > eps; })) {
            chosen.push_back(i);
            go(i + 1);
            chosen.pop_back();
        }
        go(i + 1);
    };
    go(0);
    return best;
}

} // namespace oracle
