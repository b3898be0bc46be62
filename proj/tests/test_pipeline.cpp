#include "cdss/generators.hpp"
#include "cdss/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace cdss;

namespace {

PhaseRecord record(int index, Index start, Index end) {
    PhaseRecord r;
    r.index = index;
    r.start = start;
    r.end = end;
    return r;
}

// A phase whose predictor is the zero network and whose sensor outputs a
// constant; only the training mean distinguishes phases.
LibraryPhase constant_phase(int index, Index start, Index end, const Vector& mean, double output) {
    const Index d = mean.size();
    LibraryPhase ph;
    ph.record = record(index, start, end);
    ph.record.predictor = std::make_shared<const CnnEnsemble>(d, 1, 2, 2);
    ph.record.graph.lag = 1;
    ph.record.graph.weights = {Matrix::Zero(d, d), Matrix::Zero(d, d)};
    ph.record.train_stats.mean = mean;
    ph.record.train_stats.std = Vector::Ones(d);
    ph.record.train_stats.floored.assign(static_cast<std::size_t>(d), false);
    std::vector<std::string> inputs;
    for (Index i = 0; i + 1 < d; ++i) inputs.push_back(concat("x", i));
    ph.sensor = TcGcnModel(identity_adjacency(inputs, 1), "y", {2}, {2});
    ph.sensor.target_mean() = output;
    return ph;
}

PhaseLibrary two_phase_library() {
    PhaseLibrary lib;
    lib.var_names = {"x0", "y"};
    lib.target = "y";
    lib.inputs = {"x0"};
    lib.seg_config.max_lag = 1;
    lib.seg_config.step = 10;
    Vector m0(2), m1(2);
    m0 << 0.0, 0.0;
    m1 << 5.0, 5.0;
    lib.phases.push_back(constant_phase(1, 0, 100, m0, -1.0));
    lib.phases.push_back(constant_phase(2, 100, 200, m1, 7.0));
    return lib;
}

}  // namespace

TEST(MergeShortPhases, FoldsIntoPreviousOrNext) {
    std::vector<std::string> warnings;
    auto out = detail::merge_short_phases({record(1, 0, 50), record(2, 50, 400), record(3, 400, 420)}, 100, warnings);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].start, 0);
    EXPECT_EQ(out[0].end, 420);
    EXPECT_EQ(out[0].index, 1);
    EXPECT_EQ(warnings.size(), 2u);

    warnings.clear();
    out = detail::merge_short_phases({record(1, 0, 300), record(2, 300, 600)}, 100, warnings);
    EXPECT_EQ(out.size(), 2u);
    EXPECT_TRUE(warnings.empty());

    out = detail::merge_short_phases({record(1, 0, 30)}, 100, warnings);
    EXPECT_EQ(out.size(), 1u);
}

TEST(MinPhaseRows, CoversLagAndBatch) {
    SegmentationConfig s;
    TcGcnConfig g;
    EXPECT_EQ(min_phase_rows(s, g), s.max_lag + 1 + g.batch_size);
}

TEST(MatchPhase, PicksClosestMeanAndBreaksTiesEarly) {
    auto lib = two_phase_library();
    auto m = match_phase(lib, Matrix::Constant(10, 2, 4.9));
    EXPECT_EQ(m.phase, 1u);
    ASSERT_EQ(m.distances.size(), 2u);
    EXPECT_LT(m.distances[1], m.distances[0]);
    // zero predictor: the causal term is the normalized offset itself
    EXPECT_NEAR(m.distances[0], 4.9 + 9.8 / lib.seg_config.zeta, 1e-12);
    EXPECT_NEAR(m.distances[1], 0.1 + 0.2 / lib.seg_config.zeta, 1e-12);
    EXPECT_EQ(match_phase(lib, Matrix::Constant(10, 2, 2.5)).phase, 0u);

    PhaseLibrary one = lib;
    one.phases.pop_back();
    EXPECT_EQ(match_phase(one, Matrix::Constant(10, 2, 100.0)).phase, 0u);
    EXPECT_THROW(match_phase(PhaseLibrary{}, Matrix::Zero(10, 2)), Error);
}

TEST(OnlinePredict, UsesTrailingWindowOnly) {
    auto lib = two_phase_library();
    Matrix v = Matrix::Zero(60, 2);
    v.bottomRows(30).setConstant(5.0);
    MultivariateSeries s(v, {"x0", "y"});
    auto out = online_predict(lib, s, 10);
    ASSERT_EQ(out.time.front(), 9);
    ASSERT_EQ(out.time.size(), 51u);
    for (std::size_t r = 0; r < out.time.size(); ++r) {
        const Index t = out.time[r];
        // t = 34 has five 5s among the ten window rows, so the means tie,
        // but five of the nine predicted rows are 5s
        const std::size_t expect = t >= 34 ? 1u : 0u;
        EXPECT_EQ(out.phase[r], expect) << "t=" << t;
        EXPECT_EQ(out.y_hat(static_cast<Index>(r)), expect == 1u ? 7.0 : -1.0);
    }

    // changing samples after t cannot change the decision at t
    Matrix w = v;
    w.bottomRows(10).setConstant(-50.0);
    auto cut = online_predict(lib, MultivariateSeries(w, {"x0", "y"}), 10);
    for (std::size_t r = 0; r < out.time.size(); ++r) {
        if (out.time[r] >= 50) break;
        EXPECT_EQ(cut.phase[r], out.phase[r]);
    }
}

TEST(OnlinePredict, RejectsMismatchedSeries) {
    auto lib = two_phase_library();
    EXPECT_THROW(online_predict(lib, MultivariateSeries(Matrix::Zero(40, 2), {"a", "y"})), Error);
    EXPECT_THROW(online_predict(lib, MultivariateSeries(Matrix::Zero(5, 2), {"x0", "y"}), 10), Error);
    EXPECT_THROW(online_predict(lib, MultivariateSeries(Matrix::Zero(40, 2), {"x0", "y"}), 1), Error);
}

TEST(Library, OfflineTrainSaveLoadRoundTrip) {
    auto [s, truth] = generate_nonstationary_example(1);
    SegmentationConfig seg;
    TcGcnConfig gcn;
    gcn.gc_hidden = {8};
    gcn.mlp_hidden = {8};
    gcn.epochs = 3;
    gcn.batch_size = 64;
    auto lib = offline_train(s, "y3", seg, gcn);
    ASSERT_GE(lib.size(), 2u);
    EXPECT_EQ(lib.inputs, (std::vector<std::string>{"y1", "y2"}));
    EXPECT_EQ(lib.breakpoints().back(), s.length());

    const auto dir = std::filesystem::temp_directory_path() / "cdss_library_test";
    std::filesystem::remove_all(dir);
    save_library(lib, dir);
    auto back = load_library(dir);
    EXPECT_EQ(back.breakpoints(), lib.breakpoints());
    EXPECT_EQ(to_json(back.seg_config), to_json(lib.seg_config));

    const auto test = s.slice(900, 1300);
    auto a = online_predict(lib, test);
    auto b = online_predict(back, test);
    EXPECT_EQ(a.phase, b.phase);
    EXPECT_LE((a.y_hat - b.y_hat).cwiseAbs().maxCoeff(), 1e-12);

    // tampering with any listed file is detected
    {
        std::ofstream f(dir / "phase_1_edges.csv", std::ios::app);
        f << "x";
    }
    EXPECT_THROW(load_library(dir), Error);
    std::filesystem::remove_all(dir);
}

TEST(Library, OfflineTrainRejectsUnknownTarget) {
    auto [s, truth] = generate_nonstationary_example(1);
    EXPECT_THROW(offline_train(s, "nope", SegmentationConfig{}, TcGcnConfig{}), Error);
}
