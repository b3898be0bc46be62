#pragma once

// Segmenting, matching and predicting: a library of per-phase discovery
// predictors and soft sensors built offline, then used online to assign each
// test sample to its closest phase and predict the quality variable.

#include "cdss/segmentation.hpp"
#include "cdss/tcgcn.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace cdss {

struct LibraryPhase {
    PhaseRecord record;
    TcGcnModel sensor;
};

struct PhaseLibrary {
    std::vector<std::string> var_names;
    std::string target;
    std::vector<std::string> inputs;
    SegmentationConfig seg_config;
    TcGcnConfig gcn_config;
    std::vector<LibraryPhase> phases;
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return phases.size(); }
    int lag() const noexcept { return seg_config.max_lag; }

    std::vector<Index> breakpoints() const {
        std::vector<Index> out{0};
        for (const auto& p : phases) out.push_back(p.record.end);
        return out;
    }
};

/// Rows a phase needs before a soft sensor is trained on it.
inline Index min_phase_rows(const SegmentationConfig& seg, const TcGcnConfig& gcn) {
    return static_cast<Index>(seg.max_lag) + 1 + static_cast<Index>(gcn.batch_size);
}

namespace detail {

/// Folds phases shorter than `min_rows` into a neighbor (the previous one,
/// or the next one for a leading phase). The absorbing phase keeps its own
/// predictor, graph and statistics.
inline std::vector<PhaseRecord> merge_short_phases(std::vector<PhaseRecord> phases, Index min_rows,
                                                   std::vector<std::string>& warnings) {
    bool changed = true;
    while (changed && phases.size() > 1) {
        changed = false;
        for (std::size_t p = 0; p < phases.size(); ++p) {
            const Index len = phases[p].end - phases[p].start;
            if (len >= min_rows) continue;
            if (p > 0) {
                warnings.push_back(concat("phase ", phases[p].index, " [", phases[p].start, ", ", phases[p].end, ") has ",
                                          len, " rows (< ", min_rows, "); merged into phase ", phases[p - 1].index));
                phases[p - 1].end = phases[p].end;
                phases[p - 1].terminal = phases[p].terminal;
            } else {
                warnings.push_back(concat("phase ", phases[p].index, " [", phases[p].start, ", ", phases[p].end, ") has ",
                                          len, " rows (< ", min_rows, "); merged into phase ", phases[p + 1].index));
                phases[p + 1].start = phases[p].start;
            }
            phases.erase(phases.begin() + static_cast<std::ptrdiff_t>(p));
            changed = true;
            break;
        }
    }
    for (std::size_t p = 0; p < phases.size(); ++p) phases[p].index = static_cast<int>(p) + 1;
    return phases;
}

inline std::vector<std::string> default_inputs(const std::vector<std::string>& names, const std::string& target) {
    std::vector<std::string> out;
    for (const auto& n : names)
        if (n != target) out.push_back(n);
    return out;
}

}  // namespace detail

/// Trains one soft sensor on rows [start, end) of the series.
inline TcGcnModel train_phase_sensor(const MultivariateSeries& series, const PhaseRecord& phase,
                                     const std::vector<std::string>& inputs, const std::string& target,
                                     const TcGcnConfig& gcn, bool use_graph = true) {
    const auto part = series.slice(phase.start, phase.end);
    const auto data = soft_sensor_dataset(part, inputs, target, phase.graph.lag);
    const GraphAdjacency adj = use_graph
                                   ? prepare_adjacency(phase.graph, inputs, target, gcn.adjacency_mode, gcn.symmetrization)
                                   : identity_adjacency(inputs, phase.graph.lag);
    TcGcnConfig cfg = gcn;
    cfg.seed = mix_seed(gcn.seed, static_cast<std::uint64_t>(phase.index));
    return train_soft_sensor(data.inputs, data.targets, adj, target, cfg);
}

/// Segments the training series and fits a soft sensor per phase. `inputs`
/// defaults to every variable except the target.
inline PhaseLibrary offline_train(const MultivariateSeries& series, const std::string& target,
                                  const SegmentationConfig& seg, const TcGcnConfig& gcn,
                                  std::vector<std::string> inputs = {}) {
    seg.validate();
    gcn.validate();
    series.index_of(target);
    if (inputs.empty()) inputs = detail::default_inputs(series.var_names(), target);
    for (const auto& v : inputs) series.index_of(v);

    PhaseLibrary lib;
    lib.var_names = series.var_names();
    lib.target = target;
    lib.inputs = inputs;
    lib.seg_config = seg;
    lib.gcn_config = gcn;
    SegmentationResult result = segment(series, seg);
    auto phases = detail::merge_short_phases(std::move(result.phases), min_phase_rows(seg, gcn), lib.warnings);
    for (auto& rec : phases) {
        TcGcnModel sensor;
        try {
            sensor = train_phase_sensor(series, rec, inputs, target, gcn);
        } catch (const Error& e) {
            throw Error(e.kind(), concat("soft sensor for phase ", rec.index, ": ", e.what()));
        }
        lib.phases.push_back({std::move(rec), std::move(sensor)});
    }
    return lib;
}

struct PhaseMatch {
    std::size_t phase = 0;  // 0-based position in the library
    std::vector<double> distances;
};

/// Distance of the window to every phase; the smallest wins, ties going to
/// the earlier phase.
inline PhaseMatch match_phase(const PhaseLibrary& library, const Eigen::Ref<const Matrix>& raw_window) {
    require(!library.phases.empty(), "empty_library", "phase library is empty");
    PhaseMatch m;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < library.phases.size(); ++p) {
        const double d = distance_to_phase(library.phases[p].record, raw_window, library.seg_config).total;
        m.distances.push_back(d);
        if (d < best) {
            best = d;
            m.phase = p;
        }
    }
    return m;
}

struct OnlinePrediction {
    std::vector<Index> time;     // sample index in the test series
    std::vector<std::size_t> phase;
    Vector y_hat;
    Matrix distances;            // one row per entry of `time`, one column per phase
};

/// Assigns every sample t with a full trailing window [t - w_m + 1, t] to its
/// closest phase and predicts with that phase's sensor. w_m = 0 means the
/// segmentation step w.
inline OnlinePrediction online_predict(const PhaseLibrary& library, const MultivariateSeries& test, int window = 0) {
    require(!library.phases.empty(), "empty_library", "phase library is empty");
    require(test.var_names() == library.var_names, "dimension_mismatch", "test series variables differ from the library's");
    const Index wm = window > 0 ? window : library.seg_config.step;
    const int lag = library.lag();
    require(wm > lag && wm >= 2, "invalid_config", concat("matching window must exceed K=", lag));
    const Index first = std::max<Index>(lag, wm - 1);
    require(test.length() > first, "series_too_short",
            concat("test series of length ", test.length(), " needs more than ", first, " samples"));

    const auto data = soft_sensor_dataset(test, library.inputs, library.target, lag);
    OnlinePrediction out;
    const Index count = test.length() - first;
    out.distances.resize(count, static_cast<Index>(library.phases.size()));
    out.y_hat.resize(count);
    std::vector<std::vector<Index>> rows_of(library.phases.size());
    for (Index r = 0; r < count; ++r) {
        const Index t = first + r;
        const auto m = match_phase(library, test.values().middleRows(t - wm + 1, wm));
        out.time.push_back(t);
        out.phase.push_back(m.phase);
        for (std::size_t p = 0; p < m.distances.size(); ++p) out.distances(r, static_cast<Index>(p)) = m.distances[p];
        rows_of[m.phase].push_back(r);
    }
    for (std::size_t p = 0; p < rows_of.size(); ++p) {
        if (rows_of[p].empty()) continue;
        Matrix x(static_cast<Index>(rows_of[p].size()), data.inputs.cols());
        for (std::size_t i = 0; i < rows_of[p].size(); ++i)
            x.row(static_cast<Index>(i)) = data.inputs.row(first + rows_of[p][i] - lag);
        const Vector y = library.phases[p].sensor.predict(x);
        for (std::size_t i = 0; i < rows_of[p].size(); ++i) out.y_hat(rows_of[p][i]) = y(static_cast<Index>(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Directory bundle

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "io", concat("cannot read ", path.string()));
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "io", concat("cannot write ", path.string()));
    out << text;
    require(static_cast<bool>(out), "io", concat("failed writing ", path.string()));
}

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("schema", concat("malformed JSON in ", what, ": ", e.what()));
    }
}

}  // namespace detail

/// Writes segmentation.json, per-phase graph/predictor/sensor files and a
/// manifest.json listing every file with its size and FNV-1a hash.
inline void save_library(const PhaseLibrary& lib, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& ph : lib.phases) {
        const auto& r = ph.record;
        const std::string stem = concat("phase_", r.index);
        detail::write_file(dir / (stem + "_graph.json"), to_json(r.graph).dump(2) + "\n");
        detail::write_file(dir / (stem + "_edges.csv"), edge_list_csv(r.graph));
        detail::write_file(dir / (stem + "_predictor.json"), to_json(*r.predictor).dump() + "\n");
        save_soft_sensor(ph.sensor, lib.gcn_config, dir / (stem + "_sensor"));
        detail::write_file(dir / (stem + "_adjacency.csv"), adjacency_csv(ph.sensor.adjacency()));
        for (const char* suffix : {"_graph.json", "_edges.csv", "_predictor.json", "_sensor.json", "_sensor.bin",
                                   "_adjacency.csv"})
            files.push_back(stem + suffix);
        nlohmann::json trace = nlohmann::json::array();
        for (const auto& s : r.trace) trace.push_back(to_json(s));
        phases.push_back({{"index", r.index},
                          {"start", r.start},
                          {"end", r.end},
                          {"train_loss", r.train_loss},
                          {"threshold", r.threshold},
                          {"h", r.h},
                          {"reached_h_tol", r.reached_tolerance},
                          {"breakpoint_emitted", r.breakpoint_emitted},
                          {"terminal", r.terminal},
                          {"train_stats", to_json(r.train_stats)},
                          {"graph_file", stem + "_graph.json"},
                          {"predictor_file", stem + "_predictor.json"},
                          {"sensor_file", stem + "_sensor.json"},
                          {"trace", trace}});
    }
    const nlohmann::json seg = {{"format", "cdss-library-1"},
                                {"var_names", lib.var_names},
                                {"target", lib.target},
                                {"inputs", lib.inputs},
                                {"breakpoints", lib.breakpoints()},
                                {"seg_config", to_json(lib.seg_config)},
                                {"gcn_config", to_json(lib.gcn_config)},
                                {"warnings", lib.warnings},
                                {"phases", phases}};
    detail::write_file(dir / "segmentation.json", seg.dump(2) + "\n");
    files.insert(files.begin(), "segmentation.json");
    nlohmann::json manifest = nlohmann::json::object();
    for (const auto& f : files) {
        const std::string bytes = detail::read_file(dir / f);
        manifest[f] = {{"bytes", bytes.size()}, {"fnv1a64", fnv1a64(bytes)}};
    }
    detail::write_file(dir / "manifest.json", nlohmann::json({{"files", manifest}}).dump(2) + "\n");
}

inline PhaseLibrary load_library(const std::filesystem::path& dir) {
    const auto manifest = detail::parse_json(detail::read_file(dir / "manifest.json"), "manifest.json");
    for (auto it = manifest.at("files").begin(); it != manifest.at("files").end(); ++it) {
        const std::string bytes = detail::read_file(dir / it.key());
        require(bytes.size() == it.value().at("bytes").get<std::size_t>() &&
                    fnv1a64(bytes) == it.value().at("fnv1a64").get<std::uint64_t>(),
                "integrity", concat("bundle file ", it.key(), " does not match the manifest"));
    }
    const auto seg = detail::parse_json(detail::read_file(dir / "segmentation.json"), "segmentation.json");
    require(seg.value("format", "") == "cdss-library-1", "schema", "not a phase library bundle");
    PhaseLibrary lib;
    lib.var_names = seg.at("var_names").get<std::vector<std::string>>();
    lib.target = seg.at("target").get<std::string>();
    lib.inputs = seg.at("inputs").get<std::vector<std::string>>();
    lib.seg_config = segmentation_config_from_json(seg.at("seg_config"));
    lib.gcn_config = tcgcn_config_from_json(seg.at("gcn_config"));
    lib.warnings = seg.at("warnings").get<std::vector<std::string>>();
    for (const auto& p : seg.at("phases")) {
        LibraryPhase ph;
        auto& r = ph.record;
        r.index = p.at("index").get<int>();
        r.start = p.at("start").get<Index>();
        r.end = p.at("end").get<Index>();
        r.train_loss = p.at("train_loss").get<double>();
        r.threshold = p.at("threshold").get<double>();
        r.h = p.at("h").get<double>();
        r.reached_tolerance = p.at("reached_h_tol").get<bool>();
        r.breakpoint_emitted = p.at("breakpoint_emitted").get<bool>();
        r.terminal = p.at("terminal").get<bool>();
        r.train_stats = stats_from_json(p.at("train_stats"));
        for (const auto& s : p.at("trace")) {
            DistanceSample d;
            d.n = s.at("n").get<int>();
            d.window_begin = s.at("window_begin").get<Index>();
            d.window_end = s.at("window_end").get<Index>();
            d.causal = s.at("dist_c").get<double>();
            d.stable = s.at("dist_m").get<double>();
            d.total = s.at("dist").get<double>();
            r.trace.push_back(d);
        }
        const auto gfile = p.at("graph_file").get<std::string>();
        r.graph = graph_from_json(detail::parse_json(detail::read_file(dir / gfile), gfile));
        const auto pfile = p.at("predictor_file").get<std::string>();
        r.predictor = std::make_shared<const CnnEnsemble>(
            ensemble_from_json(detail::parse_json(detail::read_file(dir / pfile), pfile)));
        ph.sensor = load_soft_sensor(dir / p.at("sensor_file").get<std::string>());
        lib.phases.push_back(std::move(ph));
    }
    return lib;
}

}  // namespace cdss
