// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "cdss/evaluation.hpp"
#include "cdss/generators.hpp"
#include "cdss/pipeline.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace cdss;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr Index kBreakTolerance = 40;
constexpr double kAcyclicityTol = 1e-8;
constexpr double kGradientRelTol = 1e-4;
constexpr double kIdentityTol = 1e-12;
constexpr double kMatchRate = 0.90;
constexpr double kRmseReduction = 0.70;
const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};
const std::vector<Index> kTruth{500, 1000};

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
    failures += !pass;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream ss;
    ss.precision(digits);
    ss << v;
    return ss.str();
}

std::string list(const std::vector<Index>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s + "]";
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Recursive three-color DFS, separate from the library's Kahn ordering.
bool has_cycle(const BoolMatrix& adj) {
    const Index n = adj.rows();
    std::vector<int> color(static_cast<std::size_t>(n), 0);
    std::function<bool(Index)> visit = [&](Index u) {
        color[static_cast<std::size_t>(u)] = 1;
        for (Index v = 0; v < n; ++v) {
            if (!adj(u, v)) continue;
            if (color[static_cast<std::size_t>(v)] == 1) return true;
            if (color[static_cast<std::size_t>(v)] == 0 && visit(v)) return true;
        }
        color[static_cast<std::size_t>(u)] = 2;
        return false;
    };
    for (Index u = 0; u < n; ++u)
        if (color[static_cast<std::size_t>(u)] == 0 && visit(u)) return true;
    return false;
}

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = n(rng);
    return m;
}

CnnEnsemble random_ensemble(Index d, int lag, int m, int hidden, std::uint64_t seed) {
    std::vector<std::string> names;
    for (Index i = 0; i < d; ++i) names.push_back(concat("v", i));
    auto e = CnnEnsemble::initialized(d, lag, m, hidden, seed, names);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> n(0.0, 0.7);
    for (Index i = 0; i < e.parameters().size(); ++i) e.parameters()(i) += n(rng);
    e.apply_mask();
    return e;
}

double manual_forward(const CnnEnsemble& e, Index j, const std::vector<double>& row) {
    double y = e.out_bias(j);
    std::vector<double> a1(static_cast<std::size_t>(e.kernels()));
    for (int k = 0; k < e.kernels(); ++k) {
        double z = e.conv_bias(j)(k);
        for (Index c = 0; c < e.width(); ++c) z += e.conv(j)(k, c) * row[static_cast<std::size_t>(c)];
        a1[static_cast<std::size_t>(k)] = 1.0 / (1.0 + std::exp(-z));
    }
    for (int h = 0; h < e.hidden(); ++h) {
        double z = e.fc_bias(j)(h);
        for (int k = 0; k < e.kernels(); ++k) z += e.fc(j)(h, k) * a1[static_cast<std::size_t>(k)];
        y += e.out(j)(h) * std::max(0.0, z);
    }
    return y;
}

// Scalar-loop recomputation of the causal distance from raw samples.
double brute_causal(const CnnEnsemble& e, const Matrix& train, const Matrix& test, bool own, bool rmse_conv) {
    const Index d = test.cols(), lag = e.lag();
    const Matrix& ref = own ? test : train;
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0), sd(static_cast<std::size_t>(d), 0.0);
    for (Index j = 0; j < d; ++j) {
        for (Index r = 0; r < ref.rows(); ++r) mean[static_cast<std::size_t>(j)] += ref(r, j);
        mean[static_cast<std::size_t>(j)] /= static_cast<double>(ref.rows());
        for (Index r = 0; r < ref.rows(); ++r) {
            const double c = ref(r, j) - mean[static_cast<std::size_t>(j)];
            sd[static_cast<std::size_t>(j)] += c * c;
        }
        sd[static_cast<std::size_t>(j)] = std::sqrt(sd[static_cast<std::size_t>(j)] / static_cast<double>(ref.rows()));
    }
    double sq = 0.0, norms = 0.0;
    Index rows = 0;
    for (Index t = lag; t < test.rows(); ++t) {
        std::vector<double> row;
        for (Index k = 0; k <= lag; ++k)
            for (Index j = 0; j < d; ++j)
                row.push_back((test(t - lag + k, j) - mean[static_cast<std::size_t>(j)]) / sd[static_cast<std::size_t>(j)]);
        double n2 = 0.0;
        for (Index j = 0; j < d; ++j) {
            const double err = manual_forward(e, j, row) - row[static_cast<std::size_t>(lag * d + j)];
            n2 += err * err;
        }
        sq += n2;
        norms += std::sqrt(n2);
        ++rows;
    }
    if (rmse_conv) return std::sqrt(sq / static_cast<double>(rows * d));
    return std::sqrt(norms / static_cast<double>(rows));
}

struct SegRun {
    std::vector<Index> interior;
    SegmentationResult result;
};

// ---------------------------------------------------------------------------

void recovery_criteria(std::vector<SegRun>& stationary, std::vector<SegRun>& nonstationary) {
    const SegmentationConfig cfg;
    int ok_s = 0, ok_n = 0, base_miss = 0, base_exact = 0;
    std::string det_s, det_n, det_b;
    for (auto seed : kSeeds) {
        SegmentationConfig c = cfg;
        c.discovery.seed = seed;
        auto s = generate_stationary_example(seed).first;
        auto rs = segment(s, c);
        auto is = rs.interior_breakpoints(s.length());
        const bool good_s = breakpoint_error(kTruth, is).exact_recovery(kBreakTolerance);
        ok_s += good_s;
        det_s += concat(" s", seed, "=", list(is));
        stationary.push_back({is, std::move(rs)});

        auto n = generate_nonstationary_example(seed).first;
        auto rn = segment(n, c);
        auto in = rn.interior_breakpoints(n.length());
        ok_n += breakpoint_error(kTruth, in).exact_recovery(kBreakTolerance);
        det_n += concat(" s", seed, "=", list(in));
        nonstationary.push_back({in, std::move(rn)});

        auto bn = baseline_mean_shift_segment(n);
        bool second = false;
        for (Index b : bn) second = second || std::abs(b - 1000) <= kBreakTolerance;
        base_miss += !second;
        base_exact += breakpoint_error(kTruth, bn).exact_recovery(kBreakTolerance);
        det_b += concat(" s", seed, "=", list(bn));
    }
    report(1, ok_s >= 4, concat("stationary exact recovery in ", ok_s, "/5 seeds (need >=4, +-", kBreakTolerance, ");",
                                det_s));
    report(2, ok_n >= 4 && base_miss >= 3,
           concat("nonstationary exact recovery in ", ok_n, "/5 seeds (need >=4);", det_n,
                  "; mean-shift baseline misses or misplaces the second break in ", base_miss, "/5 (need >=3),",
                  " recovers exactly 2 breaks in ", base_exact, "/5;", det_b));
}

void acyclicity_criterion(const std::vector<SegRun>& a, const std::vector<SegRun>& b) {
    int phases = 0, bad = 0;
    double worst = 0.0;
    for (const auto* runs : {&a, &b}) {
        for (const auto& r : *runs) {
            for (const auto& p : r.result.phases) {
                ++phases;
                worst = std::max(worst, p.h);
                const bool cyc = has_cycle((p.graph.instantaneous().array() > 0.0).matrix());
                bad += p.h > kAcyclicityTol || cyc;
            }
        }
    }
    report(3, bad == 0 && phases > 0,
           concat(phases, " trained phases, max h=", fmt(worst), " (tol ", kAcyclicityTol, "), ", bad, " violations"));
}

void gradient_criterion() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(41);
    double worst_obj = 0.0, worst_gcn = 0.0;
    const double eps = 1e-6;
    auto rel = [](double g, double fd) { return std::abs(g - fd) / std::max(1.0, std::abs(fd)); };
    for (int rep = 0; rep < 20; ++rep) {
        const Index d = 2 + rep % 2;
        const int lag = (rep / 2) % 2;
        const int m = 1 + rep % 2;
        auto e = random_ensemble(d, lag, m, 3, 500 + static_cast<std::uint64_t>(rep));
        const Matrix rows = random_matrix(6, e.width(), rng);
        DiscoveryConfig cfg;
        cfg.max_lag = lag;
        cfg.lambda1.assign(static_cast<std::size_t>(lag + 1), 0.05);
        cfg.lambda2 = 0.02;
        const AcyclicityWeights al{0.3, 2.0};
        const auto v = objective(e, rows, cfg, al);
        for (Index p = 0; p < e.parameters().size(); ++p) {
            const Index j = p / e.block_size(), off = p % e.block_size();
            if (off < e.kernels() * e.width() && e.mask()(off / e.kernels(), j) == 0.0) continue;
            CnnEnsemble plus = e, minus = e;
            plus.parameters()(p) += eps;
            minus.parameters()(p) -= eps;
            const double fd =
                (objective(plus, rows, cfg, al, false).total - objective(minus, rows, cfg, al, false).total) / (2 * eps);
            worst_obj = std::max(worst_obj, rel(v.gradient(p), fd));
        }

        std::vector<std::string> inputs;
        for (Index i = 0; i < d; ++i) inputs.push_back(concat("u", i));
        Matrix raw = Matrix::Zero(d * (lag + 1), d * (lag + 1));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (Index i = 0; i < raw.rows(); ++i)
            for (Index k = 0; k < raw.cols(); ++k)
                if (i != k && u(rng) < 0.4) raw(i, k) = u(rng);
        GraphAdjacency adj;
        adj.raw = raw;
        adj.normalized = normalize_adjacency(raw);
        adj.lag = lag;
        adj.input_vars = inputs;
        TcGcnModel g(adj, "y", {3, 2}, {3});
        g.initialize(900 + static_cast<std::uint64_t>(rep));
        const Matrix xs = random_matrix(7, adj.nodes(), rng);
        const Vector ys = random_matrix(7, 1, rng).col(0);
        const auto lv = tcgcn_loss(g, xs, ys);
        for (Index p = 0; p < g.parameters().size(); ++p) {
            TcGcnModel plus = g, minus = g;
            plus.parameters()(p) += eps;
            minus.parameters()(p) -= eps;
            const double fd = (tcgcn_loss(plus, xs, ys, false).loss - tcgcn_loss(minus, xs, ys, false).loss) / (2 * eps);
            worst_gcn = std::max(worst_gcn, rel(lv.gradient(p), fd));
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(4, worst_obj < kGradientRelTol && worst_gcn < kGradientRelTol && secs < 60.0,
           concat("20 instances, max rel err objective=", fmt(worst_obj), " tcgcn=", fmt(worst_gcn),
                  " (|g-fd|/max(1,|fd|) < ", kGradientRelTol, "), ", fmt(secs, 3), " s"));
}

void identity_criterion() {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const Index d = 2 + rep % 3;
        const int lag = rep % 3;
        auto e = random_ensemble(d, lag, 2, 3, 700 + static_cast<std::uint64_t>(rep));
        const Matrix train = random_matrix(40, d, rng, 1.0 + u(rng));
        const Matrix test = (random_matrix(25, d, rng, 2.0).array() + u(rng)).matrix();
        const auto stats = compute_stats(train);
        for (bool own : {false, true}) {
            for (bool rc : {false, true}) {
                const double got = causal_similarity_distance(
                    e, stats, test, own ? TestNormalization::own_window : TestNormalization::training_stats,
                    rc ? LossConvention::rmse : LossConvention::root_mean_norm);
                worst = std::max(worst, std::abs(got - brute_causal(e, train, test, own, rc)));
            }
        }
        double dm = 0.0;
        for (Index j = 0; j < d; ++j) {
            double a = 0.0, b = 0.0;
            for (Index r = 0; r < train.rows(); ++r) a += train(r, j);
            for (Index r = 0; r < test.rows(); ++r) b += test(r, j);
            dm += std::abs(a / static_cast<double>(train.rows()) - b / static_cast<double>(test.rows()));
        }
        worst = std::max(worst, std::abs(stable_similarity_distance(window_mean(train), window_mean(test)) - dm));
        const double dc = u(rng), zeta = 0.1 + 100.0 * u(rng), loss = u(rng), alpha = 3.0 * u(rng), beta = u(rng);
        worst = std::max(worst, std::abs(similarity_distance(dc, dm, zeta) - (dc + dm / zeta)));
        worst = std::max(worst, std::abs(phase_threshold(loss, alpha, beta) - (alpha * loss + beta)));
    }

    CnnEnsemble zero(2, 1, 2, 2);
    NormalizationStats unit;
    unit.mean = Vector::Zero(2);
    unit.std = Vector::Ones(2);
    unit.floored = {false, false};
    Matrix w(2, 2);
    w << 0, 0, 3, 4;
    const bool sqrt5 = causal_similarity_distance(zero, unit, w, TestNormalization::training_stats,
                                                  LossConvention::root_mean_norm) == std::sqrt(5.0);
    Vector a(2), b(2);
    a << 0, 0;
    b << 1, -2;
    const bool manhattan = stable_similarity_distance(a, b) == 3.0;
    report(5, worst <= kIdentityTol && sqrt5 && manhattan,
           concat("100 random inputs, max abs deviation ", fmt(worst), " (tol ", kIdentityTol, "); sqrt5 case ",
                  sqrt5 ? "exact" : "wrong", "; Manhattan case ", manhattan ? "exact" : "wrong"));
}

void matching_criterion(const std::vector<SegRun>& stationary, const std::vector<SegRun>& nonstationary) {
    int total = 0, correct = 0;
    std::string detail;
    for (int ex = 0; ex < 2; ++ex) {
        const auto& runs = ex == 0 ? stationary : nonstationary;
        int ex_total = 0, ex_correct = 0;
        for (std::size_t i = 0; i < kSeeds.size(); ++i) {
            const auto seed = kSeeds[i];
            PhaseLibrary lib;
            lib.seg_config = SegmentationConfig{};
            for (const auto& p : runs[i].result.phases) lib.phases.push_back({p, TcGcnModel{}});
            StationaryConfig sc;
            sc.noise_stream = 1;
            NonstationaryConfig nc;
            nc.noise_stream = 1;
            const auto held = ex == 0 ? generate_stationary_example(seed, sc).first
                                      : generate_nonstationary_example(seed, nc).first;
            const Index w = lib.seg_config.step;
            for (Index mode = 0; mode < 3; ++mode) {
                // phase that covers most of this mode in the training segmentation
                std::size_t expect = 0;
                Index best = -1;
                for (std::size_t p = 0; p < lib.phases.size(); ++p) {
                    const auto& r = lib.phases[p].record;
                    const Index ov = std::min(r.end, (mode + 1) * 500) - std::max(r.start, mode * 500);
                    if (ov > best) {
                        best = ov;
                        expect = p;
                    }
                }
                for (Index t = mode * 500; t + w <= (mode + 1) * 500; t += w) {
                    ++ex_total;
                    ex_correct += match_phase(lib, held.values().middleRows(t, w)).phase == expect;
                }
            }
        }
        total += ex_total;
        correct += ex_correct;
        detail += concat(ex == 0 ? " stationary " : " nonstationary ", ex_correct, "/", ex_total);
    }
    const double rate = static_cast<double>(correct) / static_cast<double>(total);
    report(6, rate >= kMatchRate,
           concat("held-out windows matched to the right phase: ", fmt(100.0 * rate, 4), "% (need >=",
                  100.0 * kMatchRate, "%);", detail));
}

void soft_sensor_criterion() {
    const std::string target = "y3";
    const std::vector<std::string> inputs{"y1", "y2"};
    TcGcnConfig gcn;
    gcn.gc_hidden = {64, 32};
    gcn.mlp_hidden = {64, 32};
    gcn.epochs = 200;
    std::vector<double> r_graph, r_ident, r_whole, red_graph, red_ident;
    for (auto seed : kSeeds) {
        SegmentationConfig seg;
        seg.discovery.seed = seed;
        gcn.seed = seed;
        const auto train = generate_nonstationary_example(seed).first;
        NonstationaryConfig nc;
        nc.noise_stream = 1;
        const auto test = generate_nonstationary_example(seed, nc).first;

        std::vector<std::string> warnings;
        auto phases = detail::merge_short_phases(segment(train, seg).phases, min_phase_rows(seg, gcn), warnings);
        PhaseLibrary with_graph, identity;
        for (auto* lib : {&with_graph, &identity}) {
            lib->var_names = train.var_names();
            lib->target = target;
            lib->inputs = inputs;
            lib->seg_config = seg;
            lib->gcn_config = gcn;
        }
        for (const auto& p : phases) {
            with_graph.phases.push_back({p, train_phase_sensor(train, p, inputs, target, gcn, true)});
            identity.phases.push_back({p, train_phase_sensor(train, p, inputs, target, gcn, false)});
        }
        const auto pg = online_predict(with_graph, test);
        const auto pi = online_predict(identity, test);
        Vector y(static_cast<Index>(pg.time.size()));
        for (std::size_t i = 0; i < pg.time.size(); ++i) y(static_cast<Index>(i)) = test.values()(pg.time[i], 2);
        const double mean = train.values().col(2).mean();
        const double r_const = rmse(y, Vector::Constant(y.size(), mean));

        // one sensor on the whole series, with a graph discovered on all of it
        PhaseRecord whole;
        whole.index = 1;
        whole.start = 0;
        whole.end = train.length();
        auto nw = normalize_window(train.values());
        whole.graph = train_discovery(nw.values, seg.discovery_config(), train.var_names()).graph;
        const auto ws = train_phase_sensor(train, whole, inputs, target, gcn, true);
        const auto data = soft_sensor_dataset(test, inputs, target, seg.max_lag);
        const Index first = pg.time.front() - seg.max_lag;
        const Vector yw = ws.predict(data.inputs.middleRows(first, y.size()));

        r_graph.push_back(rmse(y, pg.y_hat));
        r_ident.push_back(rmse(y, pi.y_hat));
        r_whole.push_back(rmse(y, yw));
        red_graph.push_back(1.0 - r_graph.back() / r_const);
        red_ident.push_back(1.0 - r_ident.back() / r_const);
        std::cout << "  seed " << seed << ": phases=" << phases.size() << " rmse graph=" << fmt(r_graph.back())
                  << " identity=" << fmt(r_ident.back()) << " whole-series=" << fmt(r_whole.back())
                  << " constant-mean=" << fmt(r_const) << std::endl;
    }
    const double mg = median(r_graph), mi = median(r_ident), mw = median(r_whole);
    const double rg = median(red_graph), ri = median(red_ident);
    report(7, mg <= mi * 1.0 && rg >= kRmseReduction && ri >= kRmseReduction && mg < mw,
           concat("median held-out RMSE graph=", fmt(mg), " identity=", fmt(mi), " whole-series=", fmt(mw),
                  "; median reduction vs constant mean graph=", fmt(100 * rg, 3), "% identity=", fmt(100 * ri, 3),
                  "% (need >=", 100 * kRmseReduction, "%); graph<=identity ", mg <= mi ? "yes" : "no",
                  ", per-phase<whole-series ", mg < mw ? "yes" : "no"));
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int sh(const std::string& args, const fs::path& out) {
    const std::string cmd = std::string("\"") + CDSS_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism_criterion() {
    const fs::path root = fs::temp_directory_path() / "cdss_acceptance_cli";
    fs::remove_all(root);
    std::vector<std::string> mismatched;
    int failed_runs = 0, compared = 0;
    for (int pass = 0; pass < 2; ++pass) {
        const fs::path d = root / concat("run", pass);
        fs::create_directories(d);
        const std::string p = d.string() + "/";
        failed_runs += sh("generate --example nonstationary --seed 7 -o " + p + "ns.csv", d / "gen.out") != 0;
        failed_runs += sh("generate --example stationary --seed 7 -o " + p + "s.csv", d / "gen2.out") != 0;
        failed_runs += sh("segment " + p + "s.csv --seed 7 -o " + p + "seg.json", d / "seg.out") != 0;
        failed_runs += sh("segment " + p + "ns.csv --method baseline -o " + p + "base.json", d / "base.out") != 0;
        failed_runs += sh("evaluate --truth " + p + "s.truth.json --est " + p + "seg.json -o " + p + "eval.json",
                          d / "eval.out") != 0;
        failed_runs += sh("train-sensor " + p + "ns.csv --target y3 --seed 7 --gcn-epochs 5 --gc-hidden 8 "
                          "--mlp-hidden 8 -o " + p + "lib",
                          d / "train.out") != 0;
        failed_runs += sh("predict " + p + "ns.csv --library " + p + "lib -o " + p + "pred.csv", d / "pred.out") != 0;
        {
            std::ofstream f(d / "spec.json");
            f << R"({"data": {"generator": "nonstationary"}, "method": "cdss", "seeds": [3], "output_dir": "exp",
                     "plots": false})";
        }
        failed_runs += sh("evaluate --spec " + p + "spec.json", d / "spec.out") != 0;
    }
    const fs::path a = root / "run0", b = root / "run1";
    for (const char* f : {"ns.csv", "ns.truth.json", "s.csv", "s.truth.json", "seg.json", "base.json", "eval.json",
                          "pred.csv", "lib/segmentation.json", "lib/manifest.json", "lib/phase_1_sensor.bin",
                          "exp/report.json", "exp/seed_3/segmentation.json", "spec.out", "pred.out"}) {
        ++compared;
        if (!fs::exists(a / f) || slurp(a / f) != slurp(b / f)) mismatched.push_back(f);
    }
    // train-sensor echoes the library path, which differs between the two runs
    std::string ta = slurp(a / "train.out"), tb = slurp(b / "train.out");
    for (auto* s : {&ta, &tb}) {
        const auto pos = s->find("\"library\"");
        if (pos != std::string::npos) s->erase(pos, s->find('\n', pos) - pos);
    }
    ++compared;
    if (ta != tb) mismatched.push_back("train-sensor stdout");
    fs::remove_all(root);
    std::string detail = concat(compared, " artifacts from 8 subcommand invocations compared byte for byte, ",
                                failed_runs, " failed invocations");
    if (!mismatched.empty()) {
        detail += "; differing:";
        for (const auto& m : mismatched) detail += " " + m;
    }
    report(8, failed_runs == 0 && mismatched.empty(), detail);
}

}  // namespace

int main() {
    try {
        std::vector<SegRun> stationary, nonstationary;
        recovery_criteria(stationary, nonstationary);
        acyclicity_criterion(stationary, nonstationary);
        gradient_criterion();
        identity_criterion();
        matching_criterion(stationary, nonstationary);
        soft_sensor_criterion();
        determinism_criterion();
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : concat(failures, " criteria failed")) << std::endl;
    return failures == 0 ? 0 : 1;
}
