#pragma once

// Causality-driven sequence segmentation: grow each phase from an initial
// window while its learned mechanism keeps predicting the incoming samples,
// and cut where the similarity distance reaches the phase threshold.

#include "cdss/causal_discovery.hpp"

#include <json.hpp>

#include <memory>
#include <optional>

namespace cdss {

enum class TestNormalization { own_window, training_stats };
enum class BreakPlacement { literal, window_start };
enum class TestWindow { cumulative, sliding };

struct SegmentationConfig {
    int h_init = 300;
    int max_lag = 3;
    int step = 25;
    double zeta = 50.0;
    double alpha = 1.8;
    double beta = 0.07;
    int max_breakpoints = 10;
    int min_remaining = 0;  // 0 means h_init + 2 * step
    TestNormalization test_normalization = TestNormalization::training_stats;
    BreakPlacement break_at = BreakPlacement::window_start;
    TestWindow test_window = TestWindow::sliding;
    DiscoveryConfig discovery;

    int effective_min_remaining() const { return min_remaining > 0 ? min_remaining : h_init + 2 * step; }

    DiscoveryConfig discovery_config() const {
        DiscoveryConfig c = discovery;
        c.max_lag = max_lag;
        return c;
    }

    void validate() const {
        require(max_lag >= 0, "invalid_config", "K must be >= 0");
        require(h_init > max_lag, "invalid_config", concat("h_init (", h_init, ") must exceed K (", max_lag, ")"));
        require(step >= 1, "invalid_config", "w must be >= 1");
        require(step > max_lag, "invalid_config", "w must exceed K so a test window yields a lag-extended row");
        require(zeta > 0.0, "invalid_config", "zeta must be positive");
        require(alpha > 0.0, "invalid_config", "alpha must be positive");
        require(beta >= 0.0, "invalid_config", "beta must be nonnegative");
        require(max_breakpoints >= 1, "invalid_config", "N_max must be >= 1");
        require(effective_min_remaining() >= h_init + step, "invalid_config", "L_min must be >= h_init + w");
        discovery_config().validate();
    }
};

struct DistanceSample {
    int n = 0;
    Index window_begin = 0;
    Index window_end = 0;
    double causal = 0.0;
    double stable = 0.0;
    double total = 0.0;
};

struct PhaseRecord {
    int index = 0;  // 1-based
    Index start = 0;
    Index end = 0;
    TemporalCausalGraph graph;
    std::shared_ptr<const CnnEnsemble> predictor;
    NormalizationStats train_stats;  // train_stats.mean is the raw training mean
    double train_loss = 0.0;
    double threshold = 0.0;
    double h = 0.0;
    bool reached_tolerance = true;
    bool breakpoint_emitted = false;
    bool terminal = false;
    std::vector<DistanceSample> trace;
};

struct SegmentationResult {
    std::vector<Index> bpt{0};
    std::vector<std::optional<TemporalCausalGraph>> cg{std::nullopt};
    std::vector<PhaseRecord> phases;

    std::vector<Index> interior_breakpoints(Index length) const {
        std::vector<Index> out;
        for (Index b : bpt)
            if (b > 0 && b < length) out.push_back(b);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Distances

/// Test loss of a phase's predictor on a raw window. The window is lag
/// extended internally, so rows before the K-th carry no prediction.
inline double causal_similarity_distance(const CnnEnsemble& predictor, const NormalizationStats& train_stats,
                                         const Eigen::Ref<const Matrix>& raw_window,
                                         TestNormalization normalization = TestNormalization::training_stats,
                                         LossConvention convention = LossConvention::root_mean_norm) {
    require(raw_window.cols() == predictor.dims(), "dimension_mismatch",
            concat("window has ", raw_window.cols(), " variables, predictor expects ", predictor.dims()));
    require(raw_window.rows() > predictor.lag() && raw_window.rows() >= 2, "window_too_short",
            concat("test window of ", raw_window.rows(), " rows is shorter than K+1=", predictor.lag() + 1));
    const Matrix normalized = normalization == TestNormalization::own_window
                                  ? normalize_window(raw_window).values
                                  : apply_stats(raw_window, train_stats);
    return model_test_rmse(predictor, lag_extend(normalized, predictor.lag()).rows, convention);
}

/// Manhattan distance between raw window means.
inline double stable_similarity_distance(const Eigen::Ref<const Vector>& train_mean,
                                         const Eigen::Ref<const Vector>& test_mean) {
    require(train_mean.size() == test_mean.size(), "dimension_mismatch",
            concat("mean vectors differ in length: ", train_mean.size(), " vs ", test_mean.size()));
    return (train_mean - test_mean).cwiseAbs().sum();
}

inline double similarity_distance(double causal, double stable, double zeta) {
    require(zeta > 0.0, "invalid_config", "zeta must be positive");
    return causal + stable / zeta;
}

inline double phase_threshold(double train_loss, double alpha, double beta) {
    require(train_loss >= 0.0, "invalid_argument", "training loss must be nonnegative");
    return alpha * train_loss + beta;
}

/// Distance of a raw window to a trained phase.
inline DistanceSample distance_to_phase(const PhaseRecord& phase, const Eigen::Ref<const Matrix>& raw_window,
                                        const SegmentationConfig& cfg) {
    require(phase.predictor != nullptr, "invalid_argument", concat("phase ", phase.index, " has no predictor"));
    DistanceSample s;
    s.causal = causal_similarity_distance(*phase.predictor, phase.train_stats, raw_window, cfg.test_normalization,
                                          cfg.discovery.loss_convention);
    s.stable = stable_similarity_distance(phase.train_stats.mean, window_mean(raw_window));
    s.total = similarity_distance(s.causal, s.stable, cfg.zeta);
    return s;
}

// ---------------------------------------------------------------------------
// Procedure

namespace detail {

inline PhaseRecord train_phase(const MultivariateSeries& series, Index start, Index train_end, int index,
                               const SegmentationConfig& cfg) {
    const auto window = series.values().middleRows(start, train_end - start);
    const NormalizedWindow nw = normalize_window(window);
    DiscoveryResult disc;
    try {
        disc = train_discovery(nw.values, cfg.discovery_config(), series.var_names());
    } catch (const Error& e) {
        throw Error(e.kind(), concat("phase ", index, " (rows ", start, "..", train_end, "): ", e.what()));
    }
    PhaseRecord p;
    p.index = index;
    p.start = start;
    p.graph = std::move(disc.graph);
    p.predictor = std::make_shared<const CnnEnsemble>(std::move(disc.model));
    p.train_stats = nw.stats;
    p.train_loss = disc.train_loss;
    p.threshold = phase_threshold(p.train_loss, cfg.alpha, cfg.beta);
    p.h = disc.h;
    p.reached_tolerance = disc.reached_tolerance;
    return p;
}

}  // namespace detail

/// One phase: train on [b, b + h), test growing windows after it, and append
/// the breakpoint where the distance first reaches the threshold. When fewer
/// than h + w samples remain, the final phase is stretched to the series end.
inline SegmentationResult add_new_breakpoint(const MultivariateSeries& series, SegmentationResult result,
                                             const SegmentationConfig& cfg) {
    cfg.validate();
    require(!result.bpt.empty(), "invalid_argument", "breakpoint list must start with 0");
    const Index length = series.length();
    const Index b = result.bpt.back();
    const Index h = cfg.h_init, w = cfg.step;

    if (b + h + w > length) {
        require(!result.phases.empty(), "series_too_short",
                concat("series of length ", length, " cannot hold h_init + w = ", h + w, " samples"));
        result.bpt.back() = length;
        result.phases.back().end = length;
        result.phases.back().terminal = true;
        return result;
    }

    PhaseRecord phase = detail::train_phase(series, b, b + h, static_cast<int>(result.phases.size()) + 1, cfg);
    int n = 1;
    while (b + h + static_cast<Index>(n) * w <= length) {
        const Index end = b + h + static_cast<Index>(n) * w;
        const Index begin = cfg.test_window == TestWindow::cumulative ? b + h : end - w;
        DistanceSample s = distance_to_phase(phase, series.values().middleRows(begin, end - begin), cfg);
        s.n = n;
        s.window_begin = begin;
        s.window_end = end;
        phase.trace.push_back(s);
        if (s.total < phase.threshold) {
            ++n;
        } else {
            phase.breakpoint_emitted = true;
            break;
        }
    }
    if (phase.breakpoint_emitted) {
        const int shift = cfg.break_at == BreakPlacement::literal ? n : n - 1;
        phase.end = b + h + static_cast<Index>(shift) * w;
    } else {
        phase.end = length;
        phase.terminal = true;
    }
    result.bpt.push_back(phase.end);
    result.cg.emplace_back(phase.graph);
    result.phases.push_back(std::move(phase));
    return result;
}

/// Repeats add_new_breakpoint until N_max breakpoints exist or fewer than
/// L_min samples remain. A leftover tail becomes a terminal phase trained on
/// its own samples, so the breakpoint list always ends at T.
inline SegmentationResult segment(const MultivariateSeries& series, const SegmentationConfig& cfg) {
    cfg.validate();
    const Index length = series.length();
    require(length >= cfg.h_init + cfg.step, "series_too_short",
            concat("series of length ", length, " is shorter than h_init + w = ", cfg.h_init + cfg.step));
    SegmentationResult result;
    while (static_cast<int>(result.bpt.size()) < cfg.max_breakpoints) {
        result = add_new_breakpoint(series, std::move(result), cfg);
        if (result.bpt.back() + cfg.effective_min_remaining() > length) break;
    }
    const Index b = result.bpt.back();
    if (b < length) {
        if (length - b > cfg.max_lag + 1) {
            PhaseRecord tail = detail::train_phase(series, b, length, static_cast<int>(result.phases.size()) + 1, cfg);
            tail.end = length;
            tail.terminal = true;
            result.bpt.push_back(length);
            result.cg.emplace_back(tail.graph);
            result.phases.push_back(std::move(tail));
        } else {
            result.bpt.back() = length;
            result.phases.back().end = length;
            result.phases.back().terminal = true;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const DiscoveryConfig& c) {
    return {{"K", c.max_lag},
            {"m", c.kernels},
            {"hidden", c.hidden},
            {"lambda1", c.lambda1.empty() ? std::vector<double>(static_cast<std::size_t>(c.max_lag + 1), 0.01)
                                          : c.lambda1},
            {"lambda2", c.lambda2},
            {"thresholds", c.threshold_vector()},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs_per_round", c.epochs_per_round},
            {"max_rounds", c.max_rounds},
            {"finetune_epochs", c.finetune_epochs},
            {"rho_init", c.rho_init},
            {"rho_factor", c.rho_factor},
            {"rho_max", c.rho_max},
            {"h_decrease", c.h_decrease},
            {"h_tol", c.h_tol},
            {"loss_convention", to_string(c.loss_convention)},
            {"seed", c.seed}};
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error("schema", concat("field '", key, "' has the wrong type"));
    }
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
    require(j.is_object(), "schema", concat(where, " must be a JSON object"));
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        require(ok, "schema", concat("unknown key '", key, "' in ", where));
    }
}

}  // namespace detail

inline DiscoveryConfig discovery_config_from_json(const nlohmann::json& j, DiscoveryConfig c = {}) {
    detail::reject_unknown_keys(j,
                                {"K", "m", "hidden", "lambda1", "lambda2", "thresholds", "learning_rate",
                                 "batch_size", "epochs_per_round", "max_rounds", "finetune_epochs", "rho_init",
                                 "rho_factor", "rho_max", "h_decrease", "h_tol", "loss_convention", "seed"},
                                "discovery config");
    detail::read_field(j, "K", c.max_lag);
    detail::read_field(j, "m", c.kernels);
    detail::read_field(j, "hidden", c.hidden);
    detail::read_field(j, "lambda1", c.lambda1);
    detail::read_field(j, "lambda2", c.lambda2);
    detail::read_field(j, "thresholds", c.thresholds);
    detail::read_field(j, "learning_rate", c.learning_rate);
    detail::read_field(j, "batch_size", c.batch_size);
    detail::read_field(j, "epochs_per_round", c.epochs_per_round);
    detail::read_field(j, "max_rounds", c.max_rounds);
    detail::read_field(j, "finetune_epochs", c.finetune_epochs);
    detail::read_field(j, "rho_init", c.rho_init);
    detail::read_field(j, "rho_factor", c.rho_factor);
    detail::read_field(j, "rho_max", c.rho_max);
    detail::read_field(j, "h_decrease", c.h_decrease);
    detail::read_field(j, "h_tol", c.h_tol);
    detail::read_field(j, "seed", c.seed);
    if (j.contains("loss_convention")) c.loss_convention = loss_convention_from_string(j["loss_convention"].get<std::string>());
    return c;
}

inline nlohmann::json to_json(const SegmentationConfig& c) {
    return {{"h_init", c.h_init},
            {"K", c.max_lag},
            {"w", c.step},
            {"zeta", c.zeta},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"N_max", c.max_breakpoints},
            {"L_min", c.effective_min_remaining()},
            {"test_normalization", c.test_normalization == TestNormalization::own_window ? "own" : "train"},
            {"break_at", c.break_at == BreakPlacement::literal ? "literal" : "window_start"},
            {"test_window", c.test_window == TestWindow::cumulative ? "cumulative" : "sliding"},
            {"discovery", to_json(c.discovery_config())}};
}

inline SegmentationConfig segmentation_config_from_json(const nlohmann::json& j, SegmentationConfig c = {}) {
    detail::reject_unknown_keys(j,
                                {"h_init", "K", "w", "zeta", "alpha", "beta", "N_max", "L_min",
                                 "test_normalization", "break_at", "test_window", "discovery"},
                                "segmentation config");
    detail::read_field(j, "h_init", c.h_init);
    detail::read_field(j, "K", c.max_lag);
    detail::read_field(j, "w", c.step);
    detail::read_field(j, "zeta", c.zeta);
    detail::read_field(j, "alpha", c.alpha);
    detail::read_field(j, "beta", c.beta);
    detail::read_field(j, "N_max", c.max_breakpoints);
    detail::read_field(j, "L_min", c.min_remaining);
    if (j.contains("test_normalization")) {
        const auto s = j["test_normalization"].get<std::string>();
        require(s == "own" || s == "train", "schema", "test_normalization must be 'own' or 'train'");
        c.test_normalization = s == "own" ? TestNormalization::own_window : TestNormalization::training_stats;
    }
    if (j.contains("break_at")) {
        const auto s = j["break_at"].get<std::string>();
        require(s == "literal" || s == "window_start", "schema", "break_at must be 'literal' or 'window_start'");
        c.break_at = s == "literal" ? BreakPlacement::literal : BreakPlacement::window_start;
    }
    if (j.contains("test_window")) {
        const auto s = j["test_window"].get<std::string>();
        require(s == "cumulative" || s == "sliding", "schema", "test_window must be 'cumulative' or 'sliding'");
        c.test_window = s == "cumulative" ? TestWindow::cumulative : TestWindow::sliding;
    }
    if (j.contains("discovery")) c.discovery = discovery_config_from_json(j["discovery"], c.discovery);
    c.discovery.max_lag = c.max_lag;
    c.validate();
    return c;
}

inline nlohmann::json to_json(const NormalizationStats& s) {
    std::vector<bool> floored = s.floored;
    return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
            {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())},
            {"floored", floored}};
}

inline NormalizationStats stats_from_json(const nlohmann::json& j) {
    NormalizationStats s;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto sd = j.at("std").get<std::vector<double>>();
    require(mean.size() == sd.size(), "schema", "stats mean/std length mismatch");
    s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
    s.std = Eigen::Map<const Vector>(sd.data(), static_cast<Index>(sd.size()));
    s.floored = j.contains("floored") ? j["floored"].get<std::vector<bool>>()
                                      : std::vector<bool>(mean.size(), false);
    return s;
}

inline nlohmann::json to_json(const DistanceSample& s) {
    return {{"n", s.n},           {"window_begin", s.window_begin}, {"window_end", s.window_end},
            {"dist_c", s.causal}, {"dist_m", s.stable},             {"dist", s.total}};
}

/// `graph_refs`, when given, replaces each inline graph by a file name.
inline nlohmann::json to_json(const SegmentationResult& r, const SegmentationConfig& cfg,
                              const std::vector<std::string>& graph_refs = {}) {
    nlohmann::json phases = nlohmann::json::array();
    for (std::size_t p = 0; p < r.phases.size(); ++p) {
        const auto& ph = r.phases[p];
        nlohmann::json trace = nlohmann::json::array();
        for (const auto& s : ph.trace) trace.push_back(to_json(s));
        nlohmann::json entry = {{"index", ph.index},
                                {"start", ph.start},
                                {"end", ph.end},
                                {"train_loss", ph.train_loss},
                                {"threshold", ph.threshold},
                                {"h", ph.h},
                                {"reached_h_tol", ph.reached_tolerance},
                                {"breakpoint_emitted", ph.breakpoint_emitted},
                                {"terminal", ph.terminal},
                                {"train_stats", to_json(ph.train_stats)},
                                {"edge_count", ph.graph.edge_count()},
                                {"trace", trace}};
        if (p < graph_refs.size())
            entry["graph_file"] = graph_refs[p];
        else
            entry["graph"] = to_json(ph.graph);
        phases.push_back(entry);
    }
    return {{"breakpoints", r.bpt}, {"phases", phases}, {"config", to_json(cfg)}};
}

}  // namespace cdss
