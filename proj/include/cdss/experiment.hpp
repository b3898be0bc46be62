#pragma once

// End-to-end runs from a JSON spec: data, segmentation method, optional soft
// sensing, breakpoint reports and SVG figures. Reports carry no timings; those
// go to a separate timing.json so reports stay byte-identical across reruns.

#include "cdss/evaluation.hpp"
#include "cdss/generators.hpp"
#include "cdss/pipeline.hpp"
#include "cdss/plot.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cdss {

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
    require(j.is_object(), "schema", concat(where, " must be a JSON object"));
    for (auto it = j.begin(); it != j.end(); ++it)
        require(std::find(known.begin(), known.end(), it.key()) != known.end(), "schema",
                concat("unknown key '", it.key(), "' in ", where));
}

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error("schema", concat("field '", key, "' in ", where, " has the wrong type"));
    }
}

}  // namespace detail

inline StationaryConfig stationary_config_from_json(const nlohmann::json& j, StationaryConfig c = {}) {
    const std::string where = "stationary generator config";
    detail::check_keys(j, {"dims", "max_lag", "mode_length", "n_modes", "inst_edge_prob", "lag_edge_prob",
                           "weight_low", "weight_high", "noise_std", "burn_in", "noise_stream"},
                       where);
    detail::get_if(j, "dims", c.dims, where);
    detail::get_if(j, "max_lag", c.max_lag, where);
    detail::get_if(j, "mode_length", c.mode_length, where);
    detail::get_if(j, "n_modes", c.n_modes, where);
    detail::get_if(j, "inst_edge_prob", c.inst_edge_prob, where);
    detail::get_if(j, "lag_edge_prob", c.lag_edge_prob, where);
    detail::get_if(j, "weight_low", c.weight_low, where);
    detail::get_if(j, "weight_high", c.weight_high, where);
    detail::get_if(j, "noise_std", c.noise_std, where);
    detail::get_if(j, "burn_in", c.burn_in, where);
    detail::get_if(j, "noise_stream", c.noise_stream, where);
    return c;
}

inline NonstationaryConfig nonstationary_config_from_json(const nlohmann::json& j, NonstationaryConfig c = {}) {
    const std::string where = "nonstationary generator config";
    detail::check_keys(j, {"mode_length", "noise_mean", "noise_std", "noise_stream"}, where);
    detail::get_if(j, "mode_length", c.mode_length, where);
    detail::get_if(j, "noise_mean", c.noise_mean, where);
    detail::get_if(j, "noise_std", c.noise_std, where);
    detail::get_if(j, "noise_stream", c.noise_stream, where);
    return c;
}

inline MeanShiftConfig mean_shift_config_from_json(const nlohmann::json& j, MeanShiftConfig c = {}) {
    const std::string where = "baseline config";
    detail::check_keys(j, {"window", "threshold"}, where);
    detail::get_if(j, "window", c.window, where);
    detail::get_if(j, "threshold", c.threshold, where);
    return c;
}

inline nlohmann::json to_json(const MeanShiftConfig& c) { return {{"window", c.window}, {"threshold", c.threshold}}; }

/// Generated example by name: "stationary" or "nonstationary".
inline std::pair<MultivariateSeries, SyntheticGroundTruth> generate_example(const std::string& name, std::uint64_t seed,
                                                                           const nlohmann::json& config = {},
                                                                           std::uint64_t noise_stream = 0) {
    const nlohmann::json cfg = config.is_null() ? nlohmann::json::object() : config;
    if (name == "stationary") {
        auto c = stationary_config_from_json(cfg);
        if (noise_stream != 0) c.noise_stream = noise_stream;
        return generate_stationary_example(seed, c);
    }
    require(name == "nonstationary", "schema", concat("unknown generator '", name, "'"));
    auto c = nonstationary_config_from_json(cfg);
    if (noise_stream != 0) c.noise_stream = noise_stream;
    return generate_nonstationary_example(seed, c);
}

// ---------------------------------------------------------------------------
// Figures

/// One panel per variable with estimated (dashed) and true (solid) breakpoints.
inline std::string plot_segmentation(const MultivariateSeries& s, const std::vector<Index>& estimate,
                                     const std::vector<Index>& truth, const std::string& title) {
    std::vector<plot::Panel> panels;
    std::vector<double> x(static_cast<std::size_t>(s.length()));
    for (Index t = 0; t < s.length(); ++t) x[static_cast<std::size_t>(t)] = static_cast<double>(t);
    for (Index j = 0; j < s.dims(); ++j) {
        plot::Panel p;
        p.title = j == 0 ? title : "";
        p.x_label = j + 1 == s.dims() ? "sample" : "";
        p.y_label = s.var_names()[static_cast<std::size_t>(j)];
        plot::Line l;
        l.x = x;
        l.y.assign(s.values().col(j).data(), s.values().col(j).data() + s.length());
        l.color = "#555555";
        l.width = 0.8;
        p.lines.push_back(std::move(l));
        for (Index b : truth) p.markers.push_back({static_cast<double>(b), "#000000", false});
        for (Index b : estimate) p.markers.push_back({static_cast<double>(b), "#1f77b4", true});
        panels.push_back(std::move(p));
    }
    if (!panels.empty()) {
        plot::Line key_t{"truth", {}, {}, "#000000"}, key_e{"estimate", {}, {}, "#1f77b4", 1.0, true};
        panels.front().lines.push_back(key_t);
        panels.front().lines.push_back(key_e);
    }
    return plot::render(panels, 960, 150);
}

/// Similarity distance per test step with each phase's threshold.
inline std::string plot_distance_trace(const std::vector<PhaseRecord>& phases, const std::string& title) {
    plot::Panel p;
    p.title = title;
    p.x_label = "end of test window";
    p.y_label = "distance";
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const auto& ph = phases[i];
        if (ph.trace.empty()) continue;
        const auto& color = plot::palette()[i % plot::palette().size()];
        plot::Line d{concat("phase ", ph.index, " Dist"), {}, {}, color, 1.5};
        plot::Line c{concat("phase ", ph.index, " Dist_c"), {}, {}, color, 0.8, true};
        for (const auto& s : ph.trace) {
            d.x.push_back(static_cast<double>(s.window_end));
            d.y.push_back(s.total);
            c.x.push_back(static_cast<double>(s.window_end));
            c.y.push_back(s.causal);
        }
        plot::Line thr{concat("phase ", ph.index, " threshold"), {d.x.front(), d.x.back()},
                       {ph.threshold, ph.threshold}, color, 2.0, true};
        p.lines.push_back(std::move(d));
        p.lines.push_back(std::move(c));
        p.lines.push_back(std::move(thr));
        if (ph.breakpoint_emitted) p.markers.push_back({static_cast<double>(ph.end), color, true});
    }
    return plot::render({p});
}

/// Distance of every trailing window to every phase, and the chosen phase.
inline std::string plot_phase_distances(const OnlinePrediction& pred, const std::string& title) {
    plot::Panel dist, chosen;
    dist.title = title;
    dist.y_label = "distance";
    chosen.x_label = "sample";
    chosen.y_label = "matched phase";
    std::vector<double> x(pred.time.begin(), pred.time.end());
    for (Index p = 0; p < pred.distances.cols(); ++p) {
        plot::Line l{concat("phase ", p + 1), x, {}, plot::palette()[static_cast<std::size_t>(p) % plot::palette().size()]};
        l.y.assign(pred.distances.col(p).data(), pred.distances.col(p).data() + pred.distances.rows());
        dist.lines.push_back(std::move(l));
    }
    plot::Line c{"", x, {}, "#000000"};
    for (auto ph : pred.phase) c.y.push_back(static_cast<double>(ph + 1));
    chosen.lines.push_back(std::move(c));
    return plot::render({dist, chosen});
}

inline std::string plot_predictions(const std::vector<Index>& time, const Eigen::Ref<const Vector>& truth,
                                    const Eigen::Ref<const Vector>& predicted, const std::string& title) {
    plot::Panel p;
    p.title = title;
    p.x_label = "sample";
    p.y_label = "quality variable";
    std::vector<double> x(time.begin(), time.end());
    p.lines.push_back({"measured", x, std::vector<double>(truth.data(), truth.data() + truth.size()), "#555555", 1.0});
    p.lines.push_back(
        {"predicted", x, std::vector<double>(predicted.data(), predicted.data() + predicted.size()), "#d62728", 1.0});
    return plot::render({p});
}

// ---------------------------------------------------------------------------
// Experiment spec

struct ExperimentSpec {
    std::string generator;           // "stationary" | "nonstationary", or empty with csv
    nlohmann::json generator_config = nlohmann::json::object();
    std::string csv;
    std::string truth_json;
    std::string test_csv;
    std::string method = "cdss";  // "cdss" | "baseline"
    SegmentationConfig seg;
    TcGcnConfig gcn;
    MeanShiftConfig baseline;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "experiment_out";
    std::string target;  // soft sensing runs only when set
    Index radius = 150;
    Index tolerance = 40;
    bool plots = true;
};

/// Relative paths inside the spec are resolved against `base_dir`.
inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    detail::check_keys(j, {"data", "method", "seg_config", "gcn_config", "baseline_config", "seeds", "output_dir",
                           "target", "radius", "tolerance", "plots"},
                       "experiment spec");
    require(j.contains("data"), "schema", "experiment spec needs 'data'");
    require(j.contains("method"), "schema", "experiment spec needs 'method'");
    ExperimentSpec s;
    const auto& data = j.at("data");
    detail::check_keys(data, {"generator", "config", "csv", "truth", "test_csv"}, "experiment data");
    auto resolve = [&](const std::string& p) {
        return p.empty() || std::filesystem::path(p).is_absolute() ? p : (base_dir / p).string();
    };
    detail::get_if(data, "generator", s.generator, "experiment data");
    if (data.contains("config")) s.generator_config = data.at("config");
    detail::get_if(data, "csv", s.csv, "experiment data");
    detail::get_if(data, "truth", s.truth_json, "experiment data");
    detail::get_if(data, "test_csv", s.test_csv, "experiment data");
    s.csv = resolve(s.csv);
    s.truth_json = resolve(s.truth_json);
    s.test_csv = resolve(s.test_csv);
    require(s.generator.empty() != s.csv.empty(), "schema", "experiment data needs exactly one of 'generator' or 'csv'");
    if (!s.generator.empty()) {
        require(s.generator == "stationary" || s.generator == "nonstationary", "schema",
                concat("unknown generator '", s.generator, "'"));
        if (s.generator == "stationary")
            stationary_config_from_json(s.generator_config);
        else
            nonstationary_config_from_json(s.generator_config);
    }
    detail::get_if(j, "method", s.method, "experiment spec");
    require(s.method == "cdss" || s.method == "baseline", "schema",
            concat("unknown method '", s.method, "' (expected 'cdss' or 'baseline')"));
    if (j.contains("seg_config")) s.seg = segmentation_config_from_json(j.at("seg_config"));
    if (j.contains("gcn_config")) s.gcn = tcgcn_config_from_json(j.at("gcn_config"));
    if (j.contains("baseline_config")) s.baseline = mean_shift_config_from_json(j.at("baseline_config"));
    detail::get_if(j, "seeds", s.seeds, "experiment spec");
    require(!s.seeds.empty(), "schema", "experiment spec needs at least one seed");
    detail::get_if(j, "output_dir", s.output_dir, "experiment spec");
    s.output_dir = resolve(s.output_dir);
    detail::get_if(j, "target", s.target, "experiment spec");
    detail::get_if(j, "radius", s.radius, "experiment spec");
    detail::get_if(j, "tolerance", s.tolerance, "experiment spec");
    detail::get_if(j, "plots", s.plots, "experiment spec");
    return s;
}

struct ExperimentOutput {
    nlohmann::json report;
    nlohmann::json timing;
};

/// Runs every seed of the spec, writing per-seed artifacts under
/// output_dir/seed_<s>/ and the aggregate report.json and timing.json.
inline ExperimentOutput run_experiment(const ExperimentSpec& spec) {
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;
    const fs::path root(spec.output_dir);
    fs::create_directories(root);
    ExperimentOutput out;
    nlohmann::json runs = nlohmann::json::array();
    nlohmann::json times = nlohmann::json::array();
    int recovered = 0;
    std::vector<double> errors, rmses;

    for (std::uint64_t seed : spec.seeds) {
        const auto t0 = clock::now();
        const fs::path dir = root / concat("seed_", seed);
        fs::create_directories(dir);
        MultivariateSeries series;
        std::optional<std::vector<Index>> truth;
        if (!spec.generator.empty()) {
            auto [s, t] = generate_example(spec.generator, seed, spec.generator_config);
            detail::write_file(dir / "truth.json", to_json(t).dump(2) + "\n");
            truth = t.breakpoints;
            series = std::move(s);
        } else {
            series = load_csv(spec.csv);
            if (!spec.truth_json.empty())
                truth = truth_breakpoints_from_json(detail::parse_json(detail::read_file(spec.truth_json), spec.truth_json));
        }
        save_csv(series, (dir / "series.csv").string());

        nlohmann::json run = {{"seed", seed}, {"method", spec.method}, {"length", series.length()},
                              {"dims", series.dims()}};
        std::vector<Index> estimate;
        SegmentationResult seg_result;
        SegmentationConfig seg = spec.seg;
        seg.discovery.seed = seed;
        if (spec.method == "cdss") {
            seg_result = segment(series, seg);
            estimate = seg_result.interior_breakpoints(series.length());
            detail::write_file(dir / "segmentation.json", to_json(seg_result, seg).dump(2) + "\n");
            bool all_tol = true;
            for (const auto& p : seg_result.phases) all_tol = all_tol && p.h <= seg.discovery.h_tol;
            run["acyclic_after_training"] = all_tol;
            run["phases"] = seg_result.phases.size();
        } else {
            estimate = baseline_mean_shift_segment(series, spec.baseline);
            detail::write_file(dir / "segmentation.json",
                               nlohmann::json({{"breakpoints", estimate}, {"baseline_config", to_json(spec.baseline)}})
                                       .dump(2) + "\n");
        }
        run["breakpoints"] = estimate;
        if (truth) {
            const auto rep = breakpoint_error(*truth, estimate, spec.radius);
            const bool ok = rep.exact_recovery(spec.tolerance);
            recovered += ok;
            for (const auto& m : rep.matches) errors.push_back(static_cast<double>(m.error));
            run["report"] = to_json(rep);
            run["recovered"] = ok;
        }
        if (spec.plots) {
            detail::write_file(dir / "segmentation.svg",
                               plot_segmentation(series, estimate, truth.value_or(std::vector<Index>{}),
                                                 concat(spec.method, " breakpoints, seed ", seed)));
            if (spec.method == "cdss")
                detail::write_file(dir / "distances.svg",
                                   plot_distance_trace(seg_result.phases, concat("similarity distance, seed ", seed)));
        }

        if (!spec.target.empty() && spec.method == "cdss") {
            TcGcnConfig gcn = spec.gcn;
            gcn.seed = seed;
            const PhaseLibrary lib = offline_train(series, spec.target, seg, gcn);
            MultivariateSeries test;
            if (!spec.generator.empty())
                test = generate_example(spec.generator, seed, spec.generator_config, 1).first;
            else if (!spec.test_csv.empty())
                test = load_csv(spec.test_csv);
            else
                test = series;
            const auto pred = online_predict(lib, test);
            Vector y(static_cast<Index>(pred.time.size()));
            const Index tcol = test.index_of(spec.target);
            for (std::size_t i = 0; i < pred.time.size(); ++i) y(static_cast<Index>(i)) = test.values()(pred.time[i], tcol);
            const double r = rmse(y, pred.y_hat);
            const double base = rmse(y, Vector::Constant(y.size(), series.values().col(series.index_of(spec.target)).mean()));
            rmses.push_back(r);
            std::vector<std::size_t> counts(lib.size(), 0);
            for (auto p : pred.phase) ++counts[p];
            run["soft_sensor"] = {{"target", spec.target},       {"library_phases", lib.size()},
                                  {"rmse", r},                   {"constant_mean_rmse", base},
                                  {"phase_counts", counts},      {"warnings", lib.warnings}};
            if (spec.plots) {
                detail::write_file(dir / "phase_distances.svg",
                                   plot_phase_distances(pred, concat("distance to each phase, seed ", seed)));
                detail::write_file(dir / "predictions.svg",
                                   plot_predictions(pred.time, y, pred.y_hat, concat(spec.target, ", seed ", seed)));
            }
        }
        detail::write_file(dir / "report.json", run.dump(2) + "\n");
        runs.push_back(run);
        times.push_back({{"seed", seed}, {"seconds", std::chrono::duration<double>(clock::now() - t0).count()}});
    }

    nlohmann::json aggregate = {{"runs", spec.seeds.size()}};
    if (!errors.empty()) {
        double s = 0.0;
        for (double e : errors) s += e;
        aggregate["mean_abs_error"] = s / static_cast<double>(errors.size());
        aggregate["max_abs_error"] = *std::max_element(errors.begin(), errors.end());
    }
    if (spec.generator.size() || !spec.truth_json.empty()) aggregate["recovered"] = recovered;
    if (!rmses.empty()) {
        std::vector<double> sorted = rmses;
        std::sort(sorted.begin(), sorted.end());
        aggregate["median_rmse"] = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                                     : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    }
    nlohmann::json data = spec.generator.empty()
                              ? nlohmann::json{{"csv", fs::path(spec.csv).filename().string()}}
                              : nlohmann::json{{"generator", spec.generator}, {"config", spec.generator_config}};
    out.report = {{"data", data},
                  {"method", spec.method},
                  {"seg_config", to_json(spec.seg)},
                  {"gcn_config", to_json(spec.gcn)},
                  {"baseline_config", to_json(spec.baseline)},
                  {"target", spec.target},
                  {"radius", spec.radius},
                  {"tolerance", spec.tolerance},
                  {"seeds", spec.seeds},
                  {"aggregate", aggregate},
                  {"per_seed", runs}};
    out.timing = {{"per_seed", times}};
    detail::write_file(root / "report.json", out.report.dump(2) + "\n");
    detail::write_file(root / "timing.json", out.timing.dump(2) + "\n");
    return out;
}

}  // namespace cdss
