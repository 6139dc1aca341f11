#pragma once

// Post-hoc front quality: normalization, optimistic/pessimistic fronts, the
// approximation gap, noisy R2, attainment surfaces and budget trajectories.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mocapo/pareto.hpp"
#include "mocapo/rng.hpp"
#include "mocapo/types.hpp"

namespace mocapo {

/// Per-objective min-max bounds. A zero-width objective maps to 0.
class NormalizationBounds {
public:
    NormalizationBounds() = default;
    explicit NormalizationBounds(std::vector<std::pair<double, double>> ranges) : ranges_(std::move(ranges))
    {
        for (auto const& [lo, hi] : ranges_) {
            if (!(lo <= hi)) { throw Error("normalization bounds need min <= max"); }
        }
    }

    static NormalizationBounds from_vectors(std::span<ObjectiveVector const> vecs)
    {
        if (vecs.empty()) { throw Error("cannot derive normalization bounds from an empty set"); }
        std::vector<std::pair<double, double>> r;
        for (double x : vecs.front()) { r.emplace_back(x, x); }
        for (auto const& v : vecs) {
            if (v.size() != r.size()) { throw Error("objective vectors of mixed dimension"); }
            for (std::size_t j = 0; j < v.size(); ++j) {
                r[j].first = std::min(r[j].first, v[j]);
                r[j].second = std::max(r[j].second, v[j]);
            }
        }
        return NormalizationBounds(std::move(r));
    }

    [[nodiscard]] ObjectiveVector normalize(ObjectiveVector const& v) const
    {
        if (v.size() != ranges_.size()) { throw Error("objective vector does not match normalization bounds"); }
        std::vector<double> out(v.size());
        for (std::size_t j = 0; j < v.size(); ++j) {
            auto const [lo, hi] = ranges_[j];
            out[j] = hi > lo ? (v[j] - lo) / (hi - lo) : 0.0;
        }
        return ObjectiveVector(std::move(out));
    }

    [[nodiscard]] std::vector<ObjectiveVector> normalize(std::span<ObjectiveVector const> vs) const
    {
        std::vector<ObjectiveVector> out;
        out.reserve(vs.size());
        for (auto const& v : vs) { out.push_back(normalize(v)); }
        return out;
    }

    [[nodiscard]] std::vector<std::pair<double, double>> const& ranges() const noexcept { return ranges_; }

private:
    std::vector<std::pair<double, double>> ranges_;
};

inline ObjectiveVector default_reference_point() { return ObjectiveVector{1.1, 1.1}; }

struct FrontSplit {
    std::vector<std::size_t> optimistic;  // non-dominated among the test vectors
    std::vector<std::size_t> pessimistic; // dominate no other member on test
};

inline FrontSplit optimistic_pessimistic_split(std::span<ObjectiveVector const> test)
{
    if (test.empty()) { throw Error("optimistic/pessimistic split of an empty front"); }
    FrontSplit s;
    for (std::size_t i = 0; i < test.size(); ++i) {
        bool dominated = false;
        bool dominating = false;
        for (std::size_t k = 0; k < test.size(); ++k) {
            if (k == i) { continue; }
            dominated = dominated || dominates(test[k], test[i]);
            dominating = dominating || dominates(test[i], test[k]);
        }
        if (!dominated) { s.optimistic.push_back(i); }
        if (!dominating) { s.pessimistic.push_back(i); }
    }
    return s;
}

inline std::vector<ObjectiveVector> subset(std::span<ObjectiveVector const> vs, std::span<std::size_t const> idx)
{
    std::vector<ObjectiveVector> out;
    out.reserve(idx.size());
    for (auto i : idx) { out.push_back(vs[i]); }
    return out;
}

inline double approximation_gap(std::span<ObjectiveVector const> optimistic, std::span<ObjectiveVector const> pessimistic,
                                ObjectiveVector const& r)
{
    return hypervolume_2d(optimistic, r) - hypervolume_2d(pessimistic, r);
}

using Preference = std::array<double, 2>;

/// lambda_1 ~ U[0, 1], lambda_2 = 1 - lambda_1.
inline std::vector<Preference> sample_preferences(std::size_t n, std::uint64_t seed)
{
    auto rng = Rng::stream(seed, "preferences");
    std::vector<Preference> out(n);
    for (auto& p : out) {
        p[0] = rng.uniform01();
        p[1] = 1.0 - p[0];
    }
    return out;
}

inline double chebyshev_utility(ObjectiveVector const& f, Preference const& l)
{
    if (f.size() != 2) { throw Error("Chebyshev utility is defined for two objectives here"); }
    return std::max(l[0] * f[0], l[1] * f[1]);
}

struct Estimate {
    double mean{0.0};
    double std_error{0.0};
};

/// Per preference: pick the member minimizing utility on its (normalized) dev
/// vector, then score that member's (normalized) test vector. Ties go to the
/// lowest prompt id.
inline Estimate noisy_r2(std::span<PromptId const> ids, std::span<ObjectiveVector const> dev,
                         std::span<ObjectiveVector const> test, std::span<Preference const> prefs)
{
    if (ids.empty() || ids.size() != dev.size() || ids.size() != test.size()) {
        throw Error("noisy_r2 needs matching, non-empty id/dev/test lists");
    }
    if (prefs.empty()) { throw Error("noisy_r2 needs at least one preference vector"); }
    std::vector<double> u;
    u.reserve(prefs.size());
    for (auto const& l : prefs) {
        std::size_t best = 0;
        double best_u = chebyshev_utility(dev[0], l);
        for (std::size_t i = 1; i < ids.size(); ++i) {
            double const ui = chebyshev_utility(dev[i], l);
            if (ui < best_u || (ui == best_u && ids[i] < ids[best])) {
                best = i;
                best_u = ui;
            }
        }
        u.push_back(chebyshev_utility(test[best], l));
    }
    double mean = 0.0;
    for (double x : u) { mean += x; }
    mean /= static_cast<double>(u.size());
    double var = 0.0;
    for (double x : u) { var += (x - mean) * (x - mean); }
    auto const n = static_cast<double>(u.size());
    double const se = u.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
    return {mean, se};
}

/// In-sample R2: selection and scoring on the same vectors.
inline Estimate r2(std::span<PromptId const> ids, std::span<ObjectiveVector const> vecs, std::span<Preference const> prefs)
{
    return noisy_r2(ids, vecs, vecs, prefs);
}

/// Everything reported for one front: dev and test vectors must already be normalized.
struct FrontMetrics {
    double hv_optimistic{0.0};
    double hv_pessimistic{0.0};
    double gap{0.0};
    Estimate nr2;
    std::size_t size{0};
};

inline FrontMetrics front_metrics(std::span<PromptId const> ids, std::span<ObjectiveVector const> dev,
                                  std::span<ObjectiveVector const> test, std::span<Preference const> prefs,
                                  ObjectiveVector const& r = default_reference_point())
{
    auto const split = optimistic_pessimistic_split(test);
    auto const opt = subset(test, split.optimistic);
    auto const pes = subset(test, split.pessimistic);
    FrontMetrics m;
    m.hv_optimistic = hypervolume_2d(opt, r);
    m.hv_pessimistic = hypervolume_2d(pes, r);
    m.gap = m.hv_optimistic - m.hv_pessimistic;
    m.nr2 = noisy_r2(ids, dev, test, prefs);
    m.size = ids.size();
    return m;
}

// ---------------------------------------------------------------------------
// attainment

using Point2 = std::pair<double, double>;

/// Fraction of runs whose front weakly dominates y.
inline double attainment_at(std::span<std::vector<ObjectiveVector> const> fronts, Point2 y)
{
    if (fronts.empty()) { return 0.0; }
    std::size_t hits = 0;
    for (auto const& f : fronts) {
        bool const hit = std::any_of(f.begin(), f.end(), [&](ObjectiveVector const& p) { return p[0] <= y.first && p[1] <= y.second; });
        hits += hit ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(fronts.size());
}

/// Sorted, de-duplicated x coordinates of all front points.
inline std::vector<double> attainment_grid(std::span<std::vector<ObjectiveVector> const> fronts)
{
    std::vector<double> xs;
    for (auto const& f : fronts) {
        for (auto const& p : f) { xs.push_back(p[0]); }
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    return xs;
}

/// Level-L surface sampled at every grid x: the smallest y such that at least
/// L of the S runs weakly dominate (x, y); +inf where fewer than L runs reach x.
inline std::vector<Point2> attainment_surface(std::span<std::vector<ObjectiveVector> const> fronts, std::size_t level)
{
    auto const s = fronts.size();
    if (level < 1 || level > s) { throw Error("attainment level must lie in [1, number of runs]"); }
    constexpr auto inf = std::numeric_limits<double>::infinity();
    std::vector<Point2> out;
    for (double x : attainment_grid(fronts)) {
        std::vector<double> best(s, inf);
        for (std::size_t k = 0; k < s; ++k) {
            for (auto const& p : fronts[k]) {
                if (p.size() != 2) { throw Error("attainment surfaces need two objectives"); }
                if (p[0] <= x) { best[k] = std::min(best[k], p[1]); }
            }
        }
        std::nth_element(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(level - 1), best.end());
        out.emplace_back(x, best[level - 1]);
    }
    return out;
}

/// Staircase vertices of a sampled surface, dropping unreachable and redundant steps.
inline std::vector<Point2> staircase(std::span<Point2 const> surface)
{
    std::vector<Point2> out;
    double last = std::numeric_limits<double>::infinity();
    for (auto const& [x, y] : surface) {
        if (!std::isfinite(y) || y >= last) { continue; }
        out.emplace_back(x, y);
        last = y;
    }
    return out;
}

// ---------------------------------------------------------------------------
// trajectories

struct TrajectoryPoint {
    std::size_t step{0};
    std::uint64_t tokens{0};
    double fraction{0.0};
    double hv_pessimistic{0.0};
    double nr2{0.0};
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    std::optional<std::uint64_t> iter1; // tokens consumed when step 1 completed
    double tt80{0.0};                   // budget fraction where HV_pes first reaches 80% of its final value
};

/// `points` must be ordered by step with metric values filled in; `budget` of
/// zero measures fractions against the final token count instead.
inline Trajectory finish_trajectory(std::vector<TrajectoryPoint> points, std::uint64_t budget)
{
    if (points.empty()) { throw Error("trajectory of an empty archive"); }
    Trajectory t;
    auto const denom = static_cast<double>(budget > 0 ? budget : std::max<std::uint64_t>(points.back().tokens, 1));
    for (auto& p : points) {
        p.fraction = static_cast<double>(p.tokens) / denom;
        if (p.step == 1) { t.iter1 = p.tokens; }
    }
    double const target = 0.8 * points.back().hv_pessimistic;
    t.tt80 = points.back().fraction;
    for (auto const& p : points) {
        if (p.hv_pessimistic >= target) {
            t.tt80 = p.fraction;
            break;
        }
    }
    t.points = std::move(points);
    return t;
}

} // namespace mocapo
