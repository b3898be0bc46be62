#pragma once

// Breakpoint accuracy and a mean-shift baseline segmenter.

#include "cdss/series.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

namespace cdss {

struct BreakpointMatch {
    Index truth = 0;
    Index estimate = 0;
    Index error = 0;
};

struct BreakpointReport {
    std::vector<Index> truth;
    std::vector<Index> estimate;
    std::vector<BreakpointMatch> matches;  // ordered by truth
    std::vector<Index> unmatched_truth;
    std::vector<Index> unmatched_estimate;
    Index radius = 150;

    double mean_abs_error() const {
        if (matches.empty()) return 0.0;
        double s = 0.0;
        for (const auto& m : matches) s += static_cast<double>(m.error);
        return s / static_cast<double>(matches.size());
    }

    Index max_abs_error() const {
        Index m = 0;
        for (const auto& x : matches) m = std::max(m, x.error);
        return m;
    }

    /// Every truth point matched within `tolerance` and no spurious estimates.
    bool exact_recovery(Index tolerance) const {
        return unmatched_truth.empty() && unmatched_estimate.empty() && max_abs_error() <= tolerance;
    }
};

/// Greedy nearest matching: candidate pairs within `radius` are taken in
/// order of increasing distance, each point used at most once. Ties are
/// broken on the pair's (smaller, larger) position, which does not depend on
/// which list is called the truth.
inline BreakpointReport breakpoint_error(const std::vector<Index>& truth, const std::vector<Index>& estimate,
                                         Index radius = 150) {
    BreakpointReport rep;
    rep.truth = truth;
    rep.estimate = estimate;
    rep.radius = radius;
    std::vector<std::tuple<Index, Index, Index, std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (std::size_t j = 0; j < estimate.size(); ++j) {
            const Index d = std::abs(truth[i] - estimate[j]);
            if (d <= radius)
                pairs.emplace_back(d, std::min(truth[i], estimate[j]), std::max(truth[i], estimate[j]), i, j);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<bool> used_t(truth.size(), false), used_e(estimate.size(), false);
    for (const auto& [d, lo, hi, i, j] : pairs) {
        if (used_t[i] || used_e[j]) continue;
        used_t[i] = used_e[j] = true;
        rep.matches.push_back({truth[i], estimate[j], d});
    }
    std::sort(rep.matches.begin(), rep.matches.end(),
              [](const BreakpointMatch& a, const BreakpointMatch& b) { return a.truth < b.truth; });
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (!used_t[i]) rep.unmatched_truth.push_back(truth[i]);
    for (std::size_t j = 0; j < estimate.size(); ++j)
        if (!used_e[j]) rep.unmatched_estimate.push_back(estimate[j]);
    return rep;
}

inline nlohmann::json to_json(const BreakpointReport& r) {
    nlohmann::json matches = nlohmann::json::array();
    std::vector<Index> errors;
    for (const auto& m : r.matches) {
        matches.push_back({{"truth", m.truth}, {"estimate", m.estimate}, {"error", m.error}});
        errors.push_back(m.error);
    }
    return {{"truth", r.truth},
            {"estimate", r.estimate},
            {"radius", r.radius},
            {"matches", matches},
            {"errors", errors},
            {"unmatched_truth", r.unmatched_truth},
            {"unmatched_estimate", r.unmatched_estimate},
            {"mean_abs_error", r.mean_abs_error()},
            {"max_abs_error", r.max_abs_error()}};
}

struct MeanShiftConfig {
    int window = 50;
    double threshold = 1.0;
};

/// Global z-scoring, then a scan over t of the L1 distance between the means
/// of [t - w, t) and [t, t + w). Once the distance exceeds the threshold the
/// peak of that excursion (within the next w positions) is emitted and the
/// scan resumes w samples later.
inline std::vector<Index> baseline_mean_shift_segment(const Eigen::Ref<const Matrix>& values,
                                                      const MeanShiftConfig& cfg = {}) {
    require(cfg.window >= 2, "invalid_config", "mean-shift window must be >= 2");
    require(cfg.threshold >= 0.0, "invalid_config", "mean-shift threshold must be nonnegative");
    const Index t_len = values.rows();
    const Index w = cfg.window;
    std::vector<Index> out;
    if (t_len < 2 * w) return out;
    const Matrix z = apply_stats(values, compute_stats(values));
    Matrix prefix = Matrix::Zero(t_len + 1, z.cols());
    for (Index t = 0; t < t_len; ++t) prefix.row(t + 1) = prefix.row(t) + z.row(t);
    auto score = [&](Index t) {
        const auto left = (prefix.row(t) - prefix.row(t - w)) / static_cast<double>(w);
        const auto right = (prefix.row(t + w) - prefix.row(t)) / static_cast<double>(w);
        return (left - right).cwiseAbs().sum();
    };
    Index t = w;
    while (t + w <= t_len) {
        if (score(t) > cfg.threshold) {
            Index best = t;
            double best_score = score(t);
            for (Index u = t + 1; u < t + w && u + w <= t_len; ++u) {
                const double s = score(u);
                if (s > best_score) {
                    best_score = s;
                    best = u;
                }
            }
            out.push_back(best);
            t = best + w;
        } else {
            ++t;
        }
    }
    return out;
}

inline std::vector<Index> baseline_mean_shift_segment(const MultivariateSeries& series, const MeanShiftConfig& cfg = {}) {
    return baseline_mean_shift_segment(series.values(), cfg);
}

}  // namespace cdss
