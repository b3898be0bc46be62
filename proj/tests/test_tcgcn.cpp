#include "cdss/tcgcn.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace cdss;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = n(rng);
    return m;
}

TemporalCausalGraph chain_graph() {
    // x0 -> x1 instantaneous, x0(t-1) -> x2; slice 1 is the current step
    TemporalCausalGraph g;
    g.lag = 1;
    g.var_names = {"x0", "x1", "x2", "y"};
    g.weights = {Matrix::Zero(4, 4), Matrix::Zero(4, 4)};
    g.thresholds = {0.3, 0.3};
    g.weights[1](0, 1) = 0.8;
    g.weights[0](0, 2) = 0.5;
    g.weights[0](1, 2) = 0.2;  // below threshold
    g.weights[1](0, 3) = 0.9;  // into the target, not an input
    return g;
}

std::vector<std::string> inputs3() { return {"x0", "x1", "x2"}; }

}  // namespace

TEST(Adjacency, TwoNodeEdge) {
    Matrix a(2, 2);
    a << 0, 1, 0, 0;
    const Matrix n = normalize_adjacency(a);
    EXPECT_NEAR((n - Matrix::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
    const Matrix d = normalize_adjacency(a, Symmetrization::directed);
    EXPECT_DOUBLE_EQ(d(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(d(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(d(1, 0), 0.0);
    EXPECT_DOUBLE_EQ(d(1, 1), 1.0);
}

TEST(Adjacency, EmptyGraphGivesIdentity) {
    EXPECT_TRUE(normalize_adjacency(Matrix::Zero(56, 56)).isIdentity(0.0));
    EXPECT_THROW(normalize_adjacency(Matrix::Constant(2, 2, -1.0)), Error);
    EXPECT_THROW(normalize_adjacency(Matrix::Zero(2, 3)), Error);
}

TEST(Adjacency, SymmetricNormalizationOracle) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix a(6, 6);
        for (Index i = 0; i < 6; ++i)
            for (Index j = 0; j < 6; ++j) a(i, j) = u(rng) < 0.3 ? u(rng) : 0.0;
        const Matrix n = normalize_adjacency(a);
        for (Index i = 0; i < 6; ++i) {
            for (Index j = 0; j < 6; ++j) {
                auto entry = [&](Index r, Index c) {
                    return (r == c ? 1.0 : 0.0) + std::max(a(r, c), a(c, r));
                };
                double di = 0.0, dj = 0.0;
                for (Index k = 0; k < 6; ++k) {
                    di += entry(i, k);
                    dj += entry(j, k);
                }
                EXPECT_NEAR(n(i, j), entry(i, j) / std::sqrt(di * dj), 1e-14);
            }
        }
        EXPECT_TRUE(n.isApprox(n.transpose(), 1e-14));
    }
}

TEST(Adjacency, PrepareMapsLaggedEdgesToExtendedNodes) {
    const auto g = chain_graph();
    const auto a = prepare_adjacency(g, inputs3(), "y");
    ASSERT_EQ(a.nodes(), 6);
    // node k*3 + i; k=1 is the current step
    EXPECT_EQ(a.raw(3, 4), 1.0);  // x0(t) -> x1(t)
    EXPECT_EQ(a.raw(0, 5), 1.0);  // x0(t-1) -> x2(t)
    EXPECT_EQ(a.raw.sum(), 2.0);
    const auto w = prepare_adjacency(g, inputs3(), "y", AdjacencyMode::weighted);
    EXPECT_EQ(w.raw(3, 4), 0.8);
    EXPECT_EQ(w.raw(0, 5), 0.5);
    EXPECT_THROW(prepare_adjacency(g, {"x0", "y"}, "y"), Error);
    EXPECT_THROW(prepare_adjacency(g, {"x0", "q"}, "y"), Error);
}

TEST(Adjacency, JsonRoundTrip) {
    const auto a = prepare_adjacency(chain_graph(), inputs3(), "y", AdjacencyMode::weighted, Symmetrization::directed);
    const auto b = adjacency_from_json(to_json(a));
    EXPECT_EQ(b.raw, a.raw);
    EXPECT_EQ(b.normalized, a.normalized);
    EXPECT_EQ(b.mode, a.mode);
    EXPECT_EQ(b.symmetrization, a.symmetrization);
    EXPECT_NE(adjacency_csv(a).find("x0@t-1,x2@t-0,"), std::string::npos);
}

TEST(GcBlock, MatchesTripleLoop) {
    std::mt19937_64 rng(2);
    const Matrix a = random_matrix(5, 5, rng), x = random_matrix(7, 5, rng);
    const Matrix we = random_matrix(5, 3, rng), wr = random_matrix(5, 3, rng);
    const Matrix got = gc_block_forward(a, x, we, wr);
    for (Index s = 0; s < 7; ++s) {
        for (Index h = 0; h < 3; ++h) {
            double v = 0.0;
            for (Index j = 0; j < 5; ++j) {
                double xa = 0.0;
                for (Index i = 0; i < 5; ++i) xa += x(s, i) * a(i, j);
                v += xa * we(j, h) + x(s, j) * wr(j, h);
            }
            EXPECT_NEAR(got(s, h), v, 1e-12);
        }
    }
    EXPECT_THROW(gc_block_forward(a, x.leftCols(4), we, wr), Error);
}

TEST(Mlp, MatchesManualLoops) {
    std::mt19937_64 rng(3);
    std::vector<DenseLayer> layers(2);
    layers[0] = {random_matrix(4, 3, rng), random_matrix(4, 1, rng).col(0)};
    layers[1] = {random_matrix(1, 4, rng), random_matrix(1, 1, rng).col(0)};
    const Matrix h0 = random_matrix(6, 3, rng);
    const Matrix out = mlp_forward(h0, layers);
    ASSERT_EQ(out.cols(), 1);
    for (Index s = 0; s < 6; ++s) {
        double y = layers[1].bias(0);
        for (Index k = 0; k < 4; ++k) {
            double u = layers[0].bias(k);
            for (Index i = 0; i < 3; ++i) u += layers[0].weight(k, i) * h0(s, i);
            y += layers[1].weight(0, k) * std::max(0.0, u);
        }
        EXPECT_NEAR(out(s, 0), y, 1e-12);
    }
}

TEST(Model, ForwardMatchesComposedPieces) {
    std::mt19937_64 rng(4);
    const auto adj = prepare_adjacency(chain_graph(), inputs3(), "y");
    TcGcnModel m(adj, "y", {5, 4}, {3});
    m.initialize(9);
    const Matrix xs = random_matrix(8, 6, rng);
    Matrix z = gc_block_forward(adj.normalized, xs, m.enc(0), m.res(0));
    z = z.cwiseMax(0.0) * m.enc(1) + xs * m.res(1);
    std::vector<DenseLayer> layers{{m.weight(0), m.bias(0)}, {m.weight(1), m.bias(1)}};
    const Matrix expected = mlp_forward(z, layers);
    EXPECT_LE((m.forward_standardized(xs) - expected.col(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Model, LossGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    const auto adj = prepare_adjacency(chain_graph(), inputs3(), "y", AdjacencyMode::weighted);
    for (int rep = 0; rep < 5; ++rep) {
        TcGcnModel m(adj, "y", {4, 3}, {5, 2});
        m.initialize(static_cast<std::uint64_t>(rep));
        const Matrix xs = random_matrix(9, 6, rng);
        const Vector ys = random_matrix(9, 1, rng).col(0);
        const auto lv = tcgcn_loss(m, xs, ys);
        ASSERT_EQ(lv.gradient.size(), m.parameters().size());
        const double eps = 1e-6;
        for (Index p = 0; p < m.parameters().size(); ++p) {
            TcGcnModel a = m, b = m;
            a.parameters()(p) += eps;
            b.parameters()(p) -= eps;
            const double fd = (tcgcn_loss(a, xs, ys, false).loss - tcgcn_loss(b, xs, ys, false).loss) / (2.0 * eps);
            EXPECT_NEAR(lv.gradient(p), fd, 1e-6 * std::max(1.0, std::abs(fd))) << "param " << p;
        }
        EXPECT_NEAR(lv.loss, (m.forward_standardized(xs) - ys).squaredNorm() / 9.0, 1e-12);
    }
}

TEST(Model, BatchOfOneMatchesFullBatchRows) {
    std::mt19937_64 rng(6);
    TcGcnModel m(identity_adjacency(inputs3(), 1), "y", {4}, {3});
    m.initialize(1);
    const Matrix x = random_matrix(10, 6, rng);
    const Vector all = m.predict(x);
    for (Index r = 0; r < 10; ++r) EXPECT_NEAR(m.predict(x.row(r))(0), all(r), 1e-13);
}

TEST(Dataset, AlignsTargetsWithCurrentStep) {
    Matrix v(5, 3);
    v << 1, 10, 100, 2, 20, 200, 3, 30, 300, 4, 40, 400, 5, 50, 500;
    auto d = soft_sensor_dataset(v, {0, 1}, 2, 2);
    ASSERT_EQ(d.inputs.rows(), 3);
    ASSERT_EQ(d.inputs.cols(), 6);
    EXPECT_EQ(d.targets(0), 300);
    EXPECT_EQ(d.inputs(0, 0), 1);   // x0(t-2)
    EXPECT_EQ(d.inputs(0, 5), 30);  // x1(t)
    EXPECT_THROW(soft_sensor_dataset(v, {0, 2}, 2, 1), Error);
}

TEST(Training, ZeroTargetsWithZeroOutputInitStayZero) {
    std::mt19937_64 rng(7);
    const Matrix x = random_matrix(40, 6, rng);
    TcGcnConfig cfg;
    cfg.gc_hidden = {4};
    cfg.mlp_hidden = {4};
    cfg.epochs = 5;
    cfg.zero_output_init = true;
    auto m = train_soft_sensor(x, Vector::Zero(40), identity_adjacency(inputs3(), 1), "y", cfg);
    for (double l : m.history().train_mse) EXPECT_EQ(l, 0.0);
    EXPECT_EQ(m.predict(x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Training, ReducesErrorOnLearnableTarget) {
    std::mt19937_64 rng(8);
    const Matrix x = random_matrix(400, 6, rng);
    const Vector y = (0.8 * x.col(5) - 0.5 * x.col(0) + 0.3 * x.col(3).cwiseAbs()).eval();
    TcGcnConfig cfg;
    cfg.gc_hidden = {16};
    cfg.mlp_hidden = {16};
    cfg.epochs = 60;
    cfg.batch_size = 32;
    cfg.seed = 3;
    const auto adj = prepare_adjacency(chain_graph(), inputs3(), "y");
    auto m = train_soft_sensor(x, y, adj, "y", cfg);
    const auto& h = m.history();
    ASSERT_EQ(h.train_mse.size(), 60u);
    EXPECT_LT(h.train_mse.back(), 0.25 * h.train_mse.front());
    EXPECT_EQ(h.train_rows, 360);
    EXPECT_EQ(h.validation_rows, 40);
    EXPECT_LT(h.validation_loss, 0.2 * (y.tail(40).array() - y.tail(40).mean()).square().mean());
    auto again = train_soft_sensor(x, y, adj, "y", cfg);
    EXPECT_EQ(again.parameters(), m.parameters());
}

TEST(Training, RejectsBadInputs) {
    TcGcnConfig cfg;
    cfg.epochs = 1;
    const auto adj = identity_adjacency(inputs3(), 1);
    EXPECT_THROW(train_soft_sensor(Matrix::Zero(10, 5), Vector::Zero(10), adj, "y", cfg), Error);
    EXPECT_THROW(train_soft_sensor(Matrix::Zero(10, 6), Vector::Zero(9), adj, "y", cfg), Error);
    Matrix bad = Matrix::Zero(10, 6);
    bad(3, 2) = std::nan("");
    EXPECT_THROW(train_soft_sensor(bad, Vector::Zero(10), adj, "y", cfg), Error);
    cfg.learning_rate = 0.0;
    EXPECT_THROW(train_soft_sensor(Matrix::Zero(10, 6), Vector::Zero(10), adj, "y", cfg), Error);
}

TEST(Serialization, SaveLoadReproducesPredictions) {
    std::mt19937_64 rng(9);
    const Matrix x = random_matrix(60, 6, rng);
    const Vector y = x.col(4) * 2.0 + Vector::Constant(60, 5.0);
    TcGcnConfig cfg;
    cfg.gc_hidden = {4, 3};
    cfg.mlp_hidden = {5};
    cfg.epochs = 3;
    auto m = train_soft_sensor(x, y, prepare_adjacency(chain_graph(), inputs3(), "y"), "y", cfg);
    const auto dir = std::filesystem::temp_directory_path() / "cdss_tcgcn_test";
    std::filesystem::create_directories(dir);
    save_soft_sensor(m, cfg, dir / "sensor");
    auto back = load_soft_sensor(dir / "sensor.json");
    EXPECT_EQ(back.predict(x), m.predict(x));
    EXPECT_EQ(back.input_vars(), m.input_vars());
    EXPECT_EQ(back.history().train_loss, m.history().train_loss);

    // corrupt one byte of the parameter file
    {
        std::fstream f(dir / "sensor.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(3);
        f.put('\x7f');
    }
    EXPECT_THROW(load_soft_sensor(dir / "sensor.json"), Error);
    std::filesystem::remove_all(dir);
}

TEST(Config, JsonRoundTripAndStrictness) {
    TcGcnConfig c;
    c.gc_hidden = {8};
    c.adjacency_mode = AdjacencyMode::weighted;
    EXPECT_EQ(to_json(tcgcn_config_from_json(to_json(c))), to_json(c));
    EXPECT_THROW(tcgcn_config_from_json({{"layers", 2}}), Error);
    EXPECT_THROW(tcgcn_config_from_json({{"adjacency_mode", "dense"}}), Error);
    EXPECT_THROW(tcgcn_config_from_json({{"validation_fraction", 1.0}}), Error);
}

TEST(Rmse, FixedCase) {
    Vector a(2), b(2);
    a << 0, 0;
    b << 3, 4;
    EXPECT_DOUBLE_EQ(rmse(a, b), std::sqrt(12.5));
    EXPECT_THROW(rmse(a, Vector::Zero(3)), Error);
}
