#pragma once

// Pareto dominance, non-dominated sorting, crowding distance and the 2-D
// hypervolume. Everything here is a pure function over objective vectors.

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "mocapo/types.hpp"

namespace mocapo {

/// a dominates b: a <= b in every objective and a < b in at least one.
inline bool dominates(ObjectiveVector const& a, ObjectiveVector const& b)
{
    if (a.size() != b.size()) { throw std::invalid_argument("dominates: dimension mismatch"); }
    bool strictly_better = false;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j] > b[j]) { return false; }
        if (a[j] < b[j]) { strictly_better = true; }
    }
    return strictly_better;
}

inline bool weakly_dominates(ObjectiveVector const& a, ObjectiveVector const& b)
{
    if (a.size() != b.size()) { throw std::invalid_argument("weakly_dominates: dimension mismatch"); }
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j] > b[j]) { return false; }
    }
    return true;
}

struct FrontPartition {
    std::vector<std::vector<std::size_t>> fronts;

    /// rank[i] = index of the front containing point i (0 = non-dominated)
    [[nodiscard]] std::vector<std::size_t> ranks(std::size_t n) const
    {
        std::vector<std::size_t> r(n, 0);
        for (std::size_t f = 0; f < fronts.size(); ++f) {
            for (auto i : fronts[f]) { r[i] = f; }
        }
        return r;
    }
};

/// Domination counts plus dominated lists, O(n^2 m). Within each front indices
/// keep their input order.
inline FrontPartition non_dominated_sort(std::span<ObjectiveVector const> points)
{
    if (points.empty()) { throw std::invalid_argument("non_dominated_sort: empty input"); }
    auto const m = points.front().size();
    for (auto const& p : points) {
        if (p.size() != m) { throw std::invalid_argument("non_dominated_sort: dimension mismatch"); }
    }

    auto const n = points.size();
    std::vector<std::size_t> dominated_by_count(n, 0);
    std::vector<std::vector<std::size_t>> dominates_list(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(points[i], points[j])) {
                dominates_list[i].push_back(j);
                ++dominated_by_count[j];
            } else if (dominates(points[j], points[i])) {
                dominates_list[j].push_back(i);
                ++dominated_by_count[i];
            }
        }
    }

    FrontPartition out;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        if (dominated_by_count[i] == 0) { current.push_back(i); }
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (auto i : current) {
            for (auto j : dominates_list[i]) {
                if (--dominated_by_count[j] == 0) { next.push_back(j); }
            }
        }
        std::sort(next.begin(), next.end());
        out.fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return out;
}

/// Indices of the non-dominated points, in input order.
inline std::vector<std::size_t> non_dominated_indices(std::span<ObjectiveVector const> points)
{
    if (points.empty()) { return {}; }
    return non_dominated_sort(points).fronts.front();
}

/// Crowding distance of each point of a single front. Objective-wise extremes
/// get +inf; an objective with zero range contributes nothing.
inline std::vector<double> crowding_distance(std::span<ObjectiveVector const> front)
{
    constexpr auto inf = std::numeric_limits<double>::infinity();
    auto const n = front.size();
    std::vector<double> cd(n, 0.0);
    if (n == 0) { return cd; }
    if (n <= 2) {
        std::fill(cd.begin(), cd.end(), inf);
        return cd;
    }
    auto const m = front.front().size();
    std::vector<std::size_t> order(n);
    for (std::size_t j = 0; j < m; ++j) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return front[a][j] < front[b][j]; });
        double const lo = front[order.front()][j];
        double const hi = front[order.back()][j];
        cd[order.front()] = inf;
        cd[order.back()] = inf;
        double const range = hi - lo;
        if (range <= 0.0) { continue; }
        for (std::size_t k = 1; k + 1 < n; ++k) {
            cd[order[k]] += (front[order[k + 1]][j] - front[order[k - 1]][j]) / range;
        }
    }
    return cd;
}

/// Exact dominated area w.r.t. reference point r (m = 2). Points that are not
/// weakly dominated by r are clipped out.
inline double hypervolume_2d(std::span<ObjectiveVector const> front, ObjectiveVector const& r)
{
    if (r.size() != 2) { throw std::invalid_argument("hypervolume_2d: reference point must be 2-D"); }
    std::vector<std::pair<double, double>> pts;
    pts.reserve(front.size());
    for (auto const& p : front) {
        if (p.size() != 2) { throw std::invalid_argument("hypervolume_2d: points must be 2-D"); }
        if (p[0] <= r[0] && p[1] <= r[1]) { pts.emplace_back(p[0], p[1]); }
    }
    std::sort(pts.begin(), pts.end());
    double area = 0.0;
    double ceiling = r[1];
    for (auto const& [x, y] : pts) {
        if (y < ceiling) {
            area += (r[0] - x) * (ceiling - y);
            ceiling = y;
        }
    }
    return area;
}

/// Weaker dominance between candidates with nested evaluation levels: the
/// better-evaluated candidate, restricted to the other's blocks, must Pareto-
/// dominate the other's estimate. `more_on(blocks)` yields the restricted estimate.
template <typename RestrictFn>
bool weakly_dominates_on_subset(BlockSet const& more_blocks, RestrictFn&& more_on, BlockSet const& less_blocks,
                                ObjectiveVector const& less_estimate)
{
    bool const subset = less_blocks.size() < more_blocks.size() &&
                        std::includes(more_blocks.begin(), more_blocks.end(), less_blocks.begin(), less_blocks.end());
    if (!subset) { throw std::invalid_argument("weakly_dominates_on_subset: blocks are not a strict subset"); }
    ObjectiveVector const restricted = more_on(less_blocks);
    return dominates(restricted, less_estimate);
}

} // namespace mocapo
