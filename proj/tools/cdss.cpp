// cdss: command-line front end for segmentation, soft sensing and evaluation.

#include "cdss/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Files and directories created by this invocation, removed on failure.
class OutputGuard {
public:
    void track(const fs::path& p) {
        if (!fs::exists(p)) created_.push_back(p);
    }
    void cleanup() noexcept {
        for (auto it = created_.rbegin(); it != created_.rend(); ++it) {
            std::error_code ec;
            fs::remove_all(*it, ec);
        }
        created_.clear();
    }
    void release() noexcept { created_.clear(); }

private:
    std::vector<fs::path> created_;
};

OutputGuard guard;

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path() && !fs::exists(path.parent_path())) {
        guard.track(path.parent_path());
        fs::create_directories(path.parent_path());
    }
    guard.track(path);
    cdss::detail::write_file(path, text);
}

json read_json(const fs::path& path) {
    return cdss::detail::parse_json(cdss::detail::read_file(path), path.string());
}

struct EnumFlags {
    std::string test_normalization, break_at, test_window, loss_convention;
};

void add_segmentation_options(CLI::App* app, cdss::SegmentationConfig& c, EnumFlags& e) {
    e.test_normalization = c.test_normalization == cdss::TestNormalization::own_window ? "own" : "train";
    e.break_at = c.break_at == cdss::BreakPlacement::literal ? "literal" : "window_start";
    e.test_window = c.test_window == cdss::TestWindow::cumulative ? "cumulative" : "sliding";
    e.loss_convention = cdss::to_string(c.discovery.loss_convention);
    auto& d = c.discovery;
    const std::string seg = "Segmentation", disc = "Causal discovery";
    app->add_option("--h-init", c.h_init, "initial training window h")->capture_default_str()->group(seg);
    app->add_option("--K,--max-lag", c.max_lag, "maximum lag K")->capture_default_str()->group(seg);
    app->add_option("--w,--step", c.step, "test window step w")->capture_default_str()->group(seg);
    app->add_option("--zeta", c.zeta, "weight balancing Dist_m against Dist_c")->capture_default_str()->group(seg);
    app->add_option("--alpha", c.alpha, "threshold scale on the training loss")->capture_default_str()->group(seg);
    app->add_option("--beta", c.beta, "threshold offset")->capture_default_str()->group(seg);
    app->add_option("--n-max", c.max_breakpoints, "maximum length of the breakpoint list")
        ->capture_default_str()
        ->group(seg);
    app->add_option("--l-min", c.min_remaining, "minimum remaining length (0 = h_init + 2w)")
        ->capture_default_str()
        ->group(seg);
    app->add_option("--test-normalization", e.test_normalization, "test window normalization")
        ->check(CLI::IsMember({"own", "train"}))
        ->capture_default_str()
        ->group(seg);
    app->add_option("--break-at", e.break_at, "breakpoint placement")
        ->check(CLI::IsMember({"literal", "window_start"}))
        ->capture_default_str()
        ->group(seg);
    app->add_option("--test-window", e.test_window, "test window shape")
        ->check(CLI::IsMember({"cumulative", "sliding"}))
        ->capture_default_str()
        ->group(seg);
    app->add_option("--m,--kernels", d.kernels, "convolution kernels per target")->capture_default_str()->group(disc);
    app->add_option("--hidden", d.hidden, "hidden units per target net")->capture_default_str()->group(disc);
    app->add_option("--lambda1", d.lambda1, "per-lag L1 weights, oldest first (comma separated)")
        ->delimiter(',')
        ->group(disc);
    app->add_option("--lambda2", d.lambda2, "ridge weight")->capture_default_str()->group(disc);
    app->add_option("--thresholds", d.thresholds, "per-lag pruning thresholds (comma separated)")
        ->delimiter(',')
        ->group(disc);
    app->add_option("--lr", d.learning_rate, "discovery learning rate")->capture_default_str()->group(disc);
    app->add_option("--batch-size", d.batch_size, "discovery batch size (<= 0 for full batch)")
        ->capture_default_str()
        ->group(disc);
    app->add_option("--epochs-per-round", d.epochs_per_round, "epochs per multiplier round")
        ->capture_default_str()
        ->group(disc);
    app->add_option("--max-rounds", d.max_rounds, "multiplier rounds")->capture_default_str()->group(disc);
    app->add_option("--finetune-epochs", d.finetune_epochs, "epochs after projecting to a DAG")
        ->capture_default_str()
        ->group(disc);
    app->add_option("--rho-init", d.rho_init, "initial penalty multiplier")->capture_default_str()->group(disc);
    app->add_option("--rho-factor", d.rho_factor, "penalty growth factor")->capture_default_str()->group(disc);
    app->add_option("--rho-max", d.rho_max, "penalty cap")->capture_default_str()->group(disc);
    app->add_option("--h-decrease", d.h_decrease, "required acyclicity decrease per round")
        ->capture_default_str()
        ->group(disc);
    app->add_option("--h-tol", d.h_tol, "acyclicity tolerance")->capture_default_str()->group(disc);
    app->add_option("--loss-convention", e.loss_convention, "training/test loss convention")
        ->check(CLI::IsMember({"root_mean_norm", "rmse"}))
        ->capture_default_str()
        ->group(disc);
}

void finish_segmentation_options(cdss::SegmentationConfig& c, const EnumFlags& e, std::uint64_t seed) {
    c.test_normalization =
        e.test_normalization == "own" ? cdss::TestNormalization::own_window : cdss::TestNormalization::training_stats;
    c.break_at = e.break_at == "literal" ? cdss::BreakPlacement::literal : cdss::BreakPlacement::window_start;
    c.test_window = e.test_window == "cumulative" ? cdss::TestWindow::cumulative : cdss::TestWindow::sliding;
    c.discovery.loss_convention = cdss::loss_convention_from_string(e.loss_convention);
    c.discovery.max_lag = c.max_lag;
    c.discovery.seed = seed;
    c.validate();
}

struct GcnFlags {
    std::string adjacency_mode, symmetrization;
};

void add_gcn_options(CLI::App* app, cdss::TcGcnConfig& c, GcnFlags& f) {
    f.adjacency_mode = cdss::to_string(c.adjacency_mode);
    f.symmetrization = cdss::to_string(c.symmetrization);
    const std::string g = "Soft sensor";
    app->add_option("--gc-hidden", c.gc_hidden, "GC block widths (comma separated)")
        ->delimiter(',')
        ->capture_default_str()
        ->group(g);
    app->add_option("--mlp-hidden", c.mlp_hidden, "MLP hidden widths (comma separated)")
        ->delimiter(',')
        ->capture_default_str()
        ->group(g);
    app->add_option("--gcn-batch-size", c.batch_size, "soft sensor batch size")->capture_default_str()->group(g);
    app->add_option("--gcn-lr", c.learning_rate, "soft sensor learning rate")->capture_default_str()->group(g);
    app->add_option("--gcn-epochs", c.epochs, "soft sensor epochs")->capture_default_str()->group(g);
    app->add_option("--adjacency-mode", f.adjacency_mode, "graph entries as 0/1 or as edge weights")
        ->check(CLI::IsMember({"boolean", "weighted"}))
        ->capture_default_str()
        ->group(g);
    app->add_option("--symmetrization", f.symmetrization, "max-symmetrize or keep direction")
        ->check(CLI::IsMember({"max", "directed"}))
        ->capture_default_str()
        ->group(g);
    app->add_option("--validation-fraction", c.validation_fraction, "chronological hold-out fraction")
        ->capture_default_str()
        ->group(g);
}

void finish_gcn_options(cdss::TcGcnConfig& c, const GcnFlags& f, std::uint64_t seed) {
    c.adjacency_mode = cdss::adjacency_mode_from_string(f.adjacency_mode);
    c.symmetrization = cdss::symmetrization_from_string(f.symmetrization);
    c.seed = seed;
    c.validate();
}

/// Interior breakpoints from a segmentation JSON written by `segment`.
std::vector<cdss::Index> estimated_breakpoints(const json& j) {
    if (j.contains("interior_breakpoints")) return j.at("interior_breakpoints").get<std::vector<cdss::Index>>();
    cdss::require(j.contains("breakpoints"), "schema", "segmentation JSON lacks 'breakpoints'");
    auto all = j.at("breakpoints").get<std::vector<cdss::Index>>();
    const cdss::Index length = j.value("length", all.empty() ? cdss::Index{0} : all.back());
    std::vector<cdss::Index> out;
    for (auto b : all)
        if (b > 0 && b < length) out.push_back(b);
    return out;
}

std::vector<cdss::PhaseRecord> phases_from_json(const json& j) {
    std::vector<cdss::PhaseRecord> out;
    if (!j.contains("phases")) return out;
    for (const auto& p : j.at("phases")) {
        cdss::PhaseRecord r;
        r.index = p.at("index").get<int>();
        r.start = p.at("start").get<cdss::Index>();
        r.end = p.at("end").get<cdss::Index>();
        r.threshold = p.at("threshold").get<double>();
        r.breakpoint_emitted = p.at("breakpoint_emitted").get<bool>();
        for (const auto& s : p.at("trace")) {
            cdss::DistanceSample d;
            d.window_end = s.at("window_end").get<cdss::Index>();
            d.causal = s.at("dist_c").get<double>();
            d.stable = s.at("dist_m").get<double>();
            d.total = s.at("dist").get<double>();
            r.trace.push_back(d);
        }
        out.push_back(std::move(r));
    }
    return out;
}

int emit_error(const std::string& kind, const std::string& message, int code) {
    std::cerr << json({{"error", kind}, {"message", message}}).dump() << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causality-driven sequence segmentation and graph soft sensing"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic multiphase example as CSV plus truth JSON");
    std::string example = "stationary", gen_out = "series.csv", gen_truth;
    std::uint64_t gen_seed = 0;
    cdss::StationaryConfig scfg;
    cdss::NonstationaryConfig ncfg;
    int mode_length = 500;
    gen->add_option("--example", example, "stationary | nonstationary")
        ->check(CLI::IsMember({"stationary", "nonstationary"}))
        ->capture_default_str();
    gen->add_option("--seed", gen_seed, "random seed")->capture_default_str();
    gen->add_option("-o,--output", gen_out, "CSV path")->capture_default_str();
    gen->add_option("--truth", gen_truth, "truth JSON path (default: <output stem>.truth.json)");
    gen->add_option("--mode-length", mode_length, "samples per mode")->capture_default_str();
    gen->add_option("--dims", scfg.dims, "stationary: variables")->capture_default_str();
    gen->add_option("--gen-max-lag", scfg.max_lag, "stationary: lag order of the mechanisms")->capture_default_str();
    gen->add_option("--n-modes", scfg.n_modes, "stationary: number of modes")->capture_default_str();
    gen->add_option("--inst-edge-prob", scfg.inst_edge_prob, "stationary: instantaneous edge probability")
        ->capture_default_str();
    gen->add_option("--lag-edge-prob", scfg.lag_edge_prob, "stationary: lagged edge probability")
        ->capture_default_str();
    gen->add_option("--weight-low", scfg.weight_low, "stationary: smallest mixing weight magnitude")
        ->capture_default_str();
    gen->add_option("--weight-high", scfg.weight_high, "stationary: largest mixing weight magnitude")
        ->capture_default_str();
    gen->add_option("--noise-std", scfg.noise_std, "stationary: noise standard deviation")->capture_default_str();
    gen->add_option("--burn-in", scfg.burn_in, "stationary: discarded warm-up samples per mode")->capture_default_str();
    gen->add_option("--ns-noise-mean", ncfg.noise_mean, "nonstationary: noise mean")->capture_default_str();
    gen->add_option("--ns-noise-std", ncfg.noise_std, "nonstationary: noise standard deviation")->capture_default_str();
    gen->add_option("--noise-stream", scfg.noise_stream, "noise replica index (same mechanisms, fresh noise)")
        ->capture_default_str();

    // segment
    auto* seg = app.add_subcommand("segment", "segment a CSV series");
    std::string seg_csv, seg_out = "segmentation.json", seg_method = "cdss", seg_plot, seg_edges;
    std::uint64_t seg_seed = 0;
    cdss::SegmentationConfig seg_cfg;
    EnumFlags seg_enums;
    cdss::MeanShiftConfig base_cfg;
    seg->add_option("series", seg_csv, "input CSV")->required()->check(CLI::ExistingFile);
    seg->add_option("-o,--output", seg_out, "segmentation JSON")->capture_default_str();
    seg->add_option("--method", seg_method, "cdss | baseline")
        ->check(CLI::IsMember({"cdss", "baseline"}))
        ->capture_default_str();
    seg->add_option("--seed", seg_seed, "random seed")->capture_default_str();
    seg->add_option("--plot", seg_plot, "also write the series/breakpoint SVG here");
    seg->add_option("--edges-dir", seg_edges, "also write one edge-list CSV per phase here");
    seg->add_option("--baseline-window", base_cfg.window, "baseline: window length")->capture_default_str();
    seg->add_option("--baseline-threshold", base_cfg.threshold, "baseline: L1 mean-shift threshold")
        ->capture_default_str();
    add_segmentation_options(seg, seg_cfg, seg_enums);

    // train-sensor
    auto* ts = app.add_subcommand("train-sensor", "segment a CSV series and fit one soft sensor per phase");
    std::string ts_csv, ts_target, ts_out = "library";
    std::vector<std::string> ts_inputs;
    std::uint64_t ts_seed = 0;
    cdss::SegmentationConfig ts_seg;
    EnumFlags ts_enums;
    cdss::TcGcnConfig ts_gcn;
    GcnFlags ts_gflags;
    ts->add_option("series", ts_csv, "training CSV")->required()->check(CLI::ExistingFile);
    ts->add_option("--target", ts_target, "quality variable")->required();
    ts->add_option("--inputs", ts_inputs, "input variables (default: all but the target)")->delimiter(',');
    ts->add_option("-o,--output", ts_out, "library bundle directory")->capture_default_str();
    ts->add_option("--seed", ts_seed, "random seed")->capture_default_str();
    add_segmentation_options(ts, ts_seg, ts_enums);
    add_gcn_options(ts, ts_gcn, ts_gflags);

    // predict
    auto* pr = app.add_subcommand("predict", "match each test window to a phase and predict the quality variable");
    std::string pr_lib, pr_csv, pr_out = "predictions.csv", pr_dist, pr_plot;
    int pr_window = 0;
    pr->add_option("series", pr_csv, "test CSV")->required()->check(CLI::ExistingFile);
    pr->add_option("--library", pr_lib, "library bundle directory")->required()->check(CLI::ExistingDirectory);
    pr->add_option("--window", pr_window, "matching window (0 = segmentation step)")->capture_default_str();
    pr->add_option("-o,--output", pr_out, "predictions CSV")->capture_default_str();
    pr->add_option("--distances", pr_dist, "also write the per-phase distance CSV here");
    pr->add_option("--plot", pr_plot, "also write SVG figures with this path prefix");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score breakpoints against truth, or run an experiment spec");
    std::string ev_truth, ev_est, ev_spec, ev_out, ev_outdir;
    cdss::Index ev_radius = 150;
    ev->add_option("--truth", ev_truth, "truth JSON from `generate`")->check(CLI::ExistingFile);
    ev->add_option("--est", ev_est, "segmentation JSON from `segment`")->check(CLI::ExistingFile);
    ev->add_option("--radius", ev_radius, "matching radius")->capture_default_str();
    ev->add_option("--spec", ev_spec, "experiment spec JSON")->check(CLI::ExistingFile);
    ev->add_option("--output-dir", ev_outdir, "override the spec's output_dir");
    ev->add_option("-o,--output", ev_out, "report path (default: stdout)");

    // plot
    auto* pl = app.add_subcommand("plot", "draw a segmentation as SVG");
    std::string pl_series, pl_seg, pl_truth, pl_out = "plot";
    pl->add_option("--series", pl_series, "series CSV")->required()->check(CLI::ExistingFile);
    pl->add_option("--segmentation", pl_seg, "segmentation JSON")->required()->check(CLI::ExistingFile);
    pl->add_option("--truth", pl_truth, "truth JSON")->check(CLI::ExistingFile);
    pl->add_option("-o,--output", pl_out, "output path prefix")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return emit_error("usage", e.what(), 2);
    }

    try {
        if (*gen) {
            scfg.mode_length = mode_length;
            ncfg.mode_length = mode_length;
            ncfg.noise_stream = scfg.noise_stream;
            auto [series, truth] = example == "stationary" ? cdss::generate_stationary_example(gen_seed, scfg)
                                                           : cdss::generate_nonstationary_example(gen_seed, ncfg);
            const fs::path out(gen_out);
            const fs::path truth_path =
                gen_truth.empty() ? out.parent_path() / (out.stem().string() + ".truth.json") : fs::path(gen_truth);
            guard.track(out);
            cdss::save_csv(series, out.string());
            write_text(truth_path, cdss::to_json(truth).dump(2) + "\n");
        } else if (*seg) {
            finish_segmentation_options(seg_cfg, seg_enums, seg_seed);
            const auto series = cdss::load_csv(seg_csv);
            json out;
            std::vector<cdss::Index> interior;
            if (seg_method == "cdss") {
                const auto result = cdss::segment(series, seg_cfg);
                out = cdss::to_json(result, seg_cfg);
                interior = result.interior_breakpoints(series.length());
                if (!seg_edges.empty()) {
                    guard.track(seg_edges);
                    fs::create_directories(seg_edges);
                    for (const auto& p : result.phases)
                        write_text(fs::path(seg_edges) / cdss::concat("phase_", p.index, "_edges.csv"),
                                   cdss::edge_list_csv(p.graph));
                }
            } else {
                interior = cdss::baseline_mean_shift_segment(series, base_cfg);
                std::vector<cdss::Index> all{0};
                all.insert(all.end(), interior.begin(), interior.end());
                all.push_back(series.length());
                out = {{"breakpoints", all}, {"baseline_config", cdss::to_json(base_cfg)}};
            }
            out["method"] = seg_method;
            out["seed"] = seg_seed;
            out["length"] = series.length();
            out["var_names"] = series.var_names();
            out["interior_breakpoints"] = interior;
            write_text(seg_out, out.dump(2) + "\n");
            if (!seg_plot.empty())
                write_text(seg_plot, cdss::plot_segmentation(series, interior, {}, seg_method + " breakpoints"));
        } else if (*ts) {
            finish_segmentation_options(ts_seg, ts_enums, ts_seed);
            finish_gcn_options(ts_gcn, ts_gflags, ts_seed);
            const auto series = cdss::load_csv(ts_csv);
            const auto lib = cdss::offline_train(series, ts_target, ts_seg, ts_gcn, ts_inputs);
            guard.track(ts_out);
            cdss::save_library(lib, ts_out);
            json phases = json::array();
            for (const auto& p : lib.phases)
                phases.push_back({{"index", p.record.index},
                                  {"start", p.record.start},
                                  {"end", p.record.end},
                                  {"train_mse", p.sensor.history().train_loss},
                                  {"validation_mse", p.sensor.history().validation_loss}});
            std::cout << json({{"library", ts_out}, {"breakpoints", lib.breakpoints()}, {"phases", phases},
                               {"warnings", lib.warnings}})
                             .dump(2)
                      << std::endl;
        } else if (*pr) {
            const auto lib = cdss::load_library(pr_lib);
            const auto test = cdss::load_csv(pr_csv);
            const auto pred = cdss::online_predict(lib, test, pr_window);
            const cdss::Index tcol = test.index_of(lib.target);
            std::string csv = "t,phase,y_hat,y_true\n";
            cdss::Vector y(static_cast<cdss::Index>(pred.time.size()));
            for (std::size_t i = 0; i < pred.time.size(); ++i) {
                y(static_cast<cdss::Index>(i)) = test.values()(pred.time[i], tcol);
                csv += cdss::concat(pred.time[i], ',', pred.phase[i] + 1, ',',
                                    cdss::detail::format_double(pred.y_hat(static_cast<cdss::Index>(i))), ',',
                                    cdss::detail::format_double(y(static_cast<cdss::Index>(i))), '\n');
            }
            write_text(pr_out, csv);
            if (!pr_dist.empty()) {
                std::string d = "t";
                for (std::size_t p = 0; p < lib.size(); ++p) d += cdss::concat(",phase_", p + 1);
                d += '\n';
                for (std::size_t i = 0; i < pred.time.size(); ++i) {
                    d += std::to_string(pred.time[i]);
                    for (cdss::Index p = 0; p < pred.distances.cols(); ++p)
                        d += "," + cdss::detail::format_double(pred.distances(static_cast<cdss::Index>(i), p));
                    d += '\n';
                }
                write_text(pr_dist, d);
            }
            if (!pr_plot.empty()) {
                write_text(pr_plot + "_phase_distances.svg", cdss::plot_phase_distances(pred, "distance to each phase"));
                write_text(pr_plot + "_predictions.svg", cdss::plot_predictions(pred.time, y, pred.y_hat, lib.target));
            }
            std::cout << json({{"rows", pred.time.size()}, {"rmse", cdss::rmse(y, pred.y_hat)}}).dump(2) << std::endl;
        } else if (*ev) {
            json report;
            if (!ev_spec.empty()) {
                cdss::require(ev_truth.empty() && ev_est.empty(), "usage", "--spec cannot be combined with --truth/--est");
                auto spec = cdss::experiment_spec_from_json(read_json(ev_spec), fs::path(ev_spec).parent_path());
                if (!ev_outdir.empty()) spec.output_dir = ev_outdir;
                guard.track(spec.output_dir);
                report = cdss::run_experiment(spec).report;
            } else {
                cdss::require(!ev_truth.empty() && !ev_est.empty(), "usage", "evaluate needs --truth and --est, or --spec");
                const auto truth = cdss::truth_breakpoints_from_json(read_json(ev_truth));
                report = cdss::to_json(cdss::breakpoint_error(truth, estimated_breakpoints(read_json(ev_est)), ev_radius));
            }
            if (ev_out.empty())
                std::cout << report.dump(2) << std::endl;
            else
                write_text(ev_out, report.dump(2) + "\n");
        } else if (*pl) {
            const auto series = cdss::load_csv(pl_series);
            const auto segj = read_json(pl_seg);
            std::vector<cdss::Index> truth;
            if (!pl_truth.empty()) truth = cdss::truth_breakpoints_from_json(read_json(pl_truth));
            write_text(pl_out + "_segmentation.svg",
                       cdss::plot_segmentation(series, estimated_breakpoints(segj), truth, "breakpoints"));
            const auto phases = phases_from_json(segj);
            if (!phases.empty())
                write_text(pl_out + "_distances.svg", cdss::plot_distance_trace(phases, "similarity distance"));
        }
    } catch (const cdss::Error& e) {
        guard.cleanup();
        return emit_error(e.kind(), e.what(), 1);
    } catch (const std::exception& e) {
        guard.cleanup();
        return emit_error("internal", e.what(), 1);
    }
    guard.release();
    return 0;
}
