#pragma once

// Temporal causal discovery with an ensemble of per-variable convolutional
// predictors. Each target j has its own net:
//
//   row (K+1)*d  --conv (m kernels, d x (K+1))-->  sigmoid
//               --dense (hidden)-->  relu  --dense-->  x_j(t)
//
// The kernel spans the whole lag-extended row, so with stride 1 and no
// padding the convolution reduces to one m x ((K+1)*d) product. The input
// cell holding x_j(t) is masked out of net j. Edge strengths are the L2 norms
// of each input cell's m kernel weights.

#include "cdss/acyclicity.hpp"
#include "cdss/adam.hpp"
#include "cdss/generators.hpp"
#include "cdss/series.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace cdss {

enum class LossConvention {
    root_mean_norm,  // sqrt(mean_t ||e_t||_2), the loss as literally written
    rmse,            // sqrt(mean_{t,j} e_tj^2), the default
};

inline std::string to_string(LossConvention c) {
    return c == LossConvention::rmse ? "rmse" : "root_mean_norm";
}

inline LossConvention loss_convention_from_string(const std::string& s) {
    if (s == "rmse") return LossConvention::rmse;
    require(s == "root_mean_norm", "invalid_config", concat("unknown loss convention '", s, "'"));
    return LossConvention::root_mean_norm;
}

struct DiscoveryConfig {
    int max_lag = 3;
    int kernels = 8;
    int hidden = 10;
    std::vector<double> lambda1;     // per lag position (oldest first); empty = 0.003 everywhere
    double lambda2 = 0.001;
    std::vector<double> thresholds;  // per lag position; empty = 0.3 everywhere
    double learning_rate = 1e-2;
    int batch_size = 64;  // <= 0 means full batch
    int epochs_per_round = 20;
    int max_rounds = 10;
    int finetune_epochs = 60;
    double rho_init = 1.0;
    double rho_factor = 10.0;
    double rho_max = 1e16;
    double h_decrease = 0.25;
    double h_tol = 1e-8;
    LossConvention loss_convention = LossConvention::rmse;
    std::uint64_t seed = 0;

    double lambda1_at(int k) const {
        return lambda1.empty() ? 0.003 : lambda1.at(static_cast<std::size_t>(k));
    }
    double threshold_at(int k) const {
        return thresholds.empty() ? 0.3 : thresholds.at(static_cast<std::size_t>(k));
    }
    std::vector<double> threshold_vector() const {
        std::vector<double> t;
        for (int k = 0; k <= max_lag; ++k) t.push_back(threshold_at(k));
        return t;
    }

    void validate() const {
        require(max_lag >= 0, "invalid_config", "max_lag must be >= 0");
        require(kernels >= 1 && hidden >= 1, "invalid_config", "kernels and hidden width must be >= 1");
        const auto n = static_cast<std::size_t>(max_lag + 1);
        require(lambda1.empty() || lambda1.size() == n, "invalid_config",
                concat("lambda1 needs ", n, " entries (one per lag position)"));
        require(thresholds.empty() || thresholds.size() == n, "invalid_config",
                concat("thresholds need ", n, " entries (one per lag position)"));
        for (int k = 0; k <= max_lag; ++k) {
            require(lambda1_at(k) >= 0.0, "invalid_config", "lambda1 must be nonnegative");
            require(threshold_at(k) >= 0.0, "invalid_config", "thresholds must be nonnegative");
        }
        require(lambda2 >= 0.0, "invalid_config", "lambda2 must be nonnegative");
        require(h_tol > 0.0, "invalid_config", "h_tol must be positive");
        require(learning_rate > 0.0, "invalid_config", "learning rate must be positive");
        require(epochs_per_round >= 0 && max_rounds >= 1 && finetune_epochs >= 0, "invalid_config",
                "iteration budget must be nonnegative");
        require(rho_init > 0.0 && rho_factor >= 1.0 && rho_max >= rho_init, "invalid_config",
                "bad penalty schedule");
    }
};

/// Weighted temporal graph. weights[k](i, j) is the strength of the edge from
/// variable i at lag position k to variable j at the current step; position
/// `lag` is instantaneous, position 0 is the oldest lag.
struct TemporalCausalGraph {
    int lag = 0;
    std::vector<std::string> var_names;
    std::vector<Matrix> weights;
    std::vector<double> thresholds;

    Index dims() const { return static_cast<Index>(var_names.size()); }
    const Matrix& instantaneous() const { return weights.back(); }

    BoolSlices boolean() const {
        BoolSlices out;
        for (const auto& w : weights) out.push_back((w.array() > 0.0).matrix());
        return out;
    }

    std::size_t edge_count() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += static_cast<std::size_t>((w.array() > 0.0).count());
        return n;
    }
};

/// Parameters of all d per-target nets, stored in one flat vector.
class CnnEnsemble {
public:
    CnnEnsemble() = default;

    CnnEnsemble(Index dims, int lag, int kernels, int hidden)
        : dims_(dims), lag_(lag), kernels_(kernels), hidden_(hidden) {
        require(dims >= 1 && lag >= 0 && kernels >= 1 && hidden >= 1, "invalid_config", "bad ensemble shape");
        params_ = Vector::Zero(block_size() * dims_);
        mask_ = Matrix::Ones(width(), dims_);
        for (Index j = 0; j < dims_; ++j) mask_(lag_ * dims_ + j, j) = 0.0;
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization. Every kernel
    /// cell draws from a stream keyed by (seed, target name, source name,
    /// lag position), so relabeling the variables permutes the ensemble.
    static CnnEnsemble initialized(Index dims, int lag, int kernels, int hidden, std::uint64_t seed,
                                   const std::vector<std::string>& names) {
        CnnEnsemble e(dims, lag, kernels, hidden);
        require(static_cast<Index>(names.size()) == dims, "dimension_mismatch", "one name per variable required");
        auto uniform_fill = [](auto&& block, double bound, std::mt19937_64& rng) {
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Index c = 0; c < block.cols(); ++c)
                for (Index r = 0; r < block.rows(); ++r) block(r, c) = u(rng);
        };
        const double conv_bound = 1.0 / std::sqrt(static_cast<double>(e.width()));
        for (Index j = 0; j < dims; ++j) {
            const auto target_key = fnv1a64(names[static_cast<std::size_t>(j)]);
            auto conv = e.conv(j);
            for (int k = 0; k <= lag; ++k) {
                for (Index i = 0; i < dims; ++i) {
                    std::mt19937_64 rng(mix_seed(mix_seed(seed, target_key),
                                                 mix_seed(fnv1a64(names[static_cast<std::size_t>(i)]),
                                                          static_cast<std::uint64_t>(k))));
                    uniform_fill(conv.col(k * dims + i), conv_bound, rng);
                }
            }
            std::mt19937_64 rng(mix_seed(seed ^ 0x5bd1e995ULL, target_key));
            uniform_fill(e.conv_bias(j), conv_bound, rng);
            const double fc_bound = 1.0 / std::sqrt(static_cast<double>(kernels));
            uniform_fill(e.fc(j), fc_bound, rng);
            uniform_fill(e.fc_bias(j), fc_bound, rng);
            const double out_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
            uniform_fill(e.out(j), out_bound, rng);
            std::uniform_real_distribution<double> ub(-out_bound, out_bound);
            e.out_bias(j) = ub(rng);
        }
        e.apply_mask();
        return e;
    }

    Index dims() const noexcept { return dims_; }
    int lag() const noexcept { return lag_; }
    int kernels() const noexcept { return kernels_; }
    int hidden() const noexcept { return hidden_; }
    Index width() const noexcept { return (lag_ + 1) * dims_; }
    Index block_size() const noexcept {
        return kernels_ * width() + kernels_ + hidden_ * kernels_ + hidden_ + hidden_ + 1;
    }
    Index block_offset(Index j) const noexcept { return j * block_size(); }

    Vector& parameters() noexcept { return params_; }
    const Vector& parameters() const noexcept { return params_; }

    Eigen::Map<Matrix> conv(Index j) { return {ptr(j, 0), kernels_, width()}; }
    Eigen::Map<const Matrix> conv(Index j) const { return {ptr(j, 0), kernels_, width()}; }
    Eigen::Map<Vector> conv_bias(Index j) { return {ptr(j, off_cb()), kernels_}; }
    Eigen::Map<const Vector> conv_bias(Index j) const { return {ptr(j, off_cb()), kernels_}; }
    Eigen::Map<Matrix> fc(Index j) { return {ptr(j, off_fc()), hidden_, kernels_}; }
    Eigen::Map<const Matrix> fc(Index j) const { return {ptr(j, off_fc()), hidden_, kernels_}; }
    Eigen::Map<Vector> fc_bias(Index j) { return {ptr(j, off_fb()), hidden_}; }
    Eigen::Map<const Vector> fc_bias(Index j) const { return {ptr(j, off_fb()), hidden_}; }
    Eigen::Map<Vector> out(Index j) { return {ptr(j, off_out()), hidden_}; }
    Eigen::Map<const Vector> out(Index j) const { return {ptr(j, off_out()), hidden_}; }
    double& out_bias(Index j) { return *ptr(j, off_ob()); }
    double out_bias(Index j) const { return *ptr(j, off_ob()); }

    /// width x dims; entry (c, j) is 1 when input column c may feed target j.
    const Matrix& mask() const noexcept { return mask_; }

    void block_input(Index target, Index column) {
        mask_(column, target) = 0.0;
        conv(target).col(column).setZero();
    }

    void apply_mask() {
        for (Index j = 0; j < dims_; ++j) {
            auto c = conv(j);
            for (Index col = 0; col < width(); ++col)
                if (mask_(col, j) == 0.0) c.col(col).setZero();
        }
    }

    /// Gradient segments that touch masked kernel cells are zeroed in place.
    void mask_gradient(Vector& grad) const {
        for (Index j = 0; j < dims_; ++j) {
            Eigen::Map<Matrix> g(grad.data() + block_offset(j), kernels_, width());
            for (Index col = 0; col < width(); ++col)
                if (mask_(col, j) == 0.0) g.col(col).setZero();
        }
    }

    /// Prediction for every lag-extended row; column j is E[x_j(t) | parents].
    Matrix predict(const Eigen::Ref<const Matrix>& rows) const {
        require(rows.cols() == width(), "dimension_mismatch",
                concat("expected rows of width ", width(), ", got ", rows.cols()));
        Matrix out(rows.rows(), dims_);
        for (Index j = 0; j < dims_; ++j) out.col(j) = predict_target(j, rows);
        return out;
    }

    Vector predict_row(const Eigen::Ref<const Vector>& row) const {
        require(row.size() == width(), "dimension_mismatch",
                concat("expected a row of width ", width(), ", got ", row.size()));
        Matrix m = row.transpose();
        return predict(m).row(0).transpose();
    }

    Vector predict_target(Index j, const Eigen::Ref<const Matrix>& rows) const {
        Matrix z1 = (rows * conv(j).transpose()).rowwise() + conv_bias(j).transpose();
        Matrix a1 = z1.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        Matrix z2 = (a1 * fc(j).transpose()).rowwise() + fc_bias(j).transpose();
        Matrix a2 = z2.cwiseMax(0.0);
        return (a2 * out(j)).array() + out_bias(j);
    }

private:
    Index off_cb() const { return kernels_ * width(); }
    Index off_fc() const { return off_cb() + kernels_; }
    Index off_fb() const { return off_fc() + hidden_ * kernels_; }
    Index off_out() const { return off_fb() + hidden_; }
    Index off_ob() const { return off_out() + hidden_; }
    double* ptr(Index j, Index off) { return params_.data() + block_offset(j) + off; }
    const double* ptr(Index j, Index off) const { return params_.data() + block_offset(j) + off; }

    Index dims_ = 0;
    int lag_ = 0;
    int kernels_ = 1;
    int hidden_ = 1;
    Vector params_;
    Matrix mask_;
};

inline Matrix predict_conditional(const CnnEnsemble& model, const Eigen::Ref<const Matrix>& extended_rows) {
    return model.predict(extended_rows);
}

inline Vector predict_conditional(const CnnEnsemble& model, const Eigen::Ref<const Vector>& extended_row) {
    return model.predict_row(extended_row);
}

/// Instantaneous slice only: W(i, j) = ||phi_{i,j}||_2 at the current step.
inline Matrix instantaneous_weights(const CnnEnsemble& model) {
    const Index d = model.dims();
    Matrix w(d, d);
    for (Index j = 0; j < d; ++j) {
        auto c = model.conv(j);
        for (Index i = 0; i < d; ++i) w(i, j) = c.col(model.lag() * d + i).norm();
    }
    return w;
}

inline TemporalCausalGraph extract_adjacency(const CnnEnsemble& model, std::vector<double> thresholds = {},
                                             std::vector<std::string> names = {}) {
    const Index d = model.dims();
    TemporalCausalGraph g;
    g.lag = model.lag();
    if (names.empty())
        for (Index i = 0; i < d; ++i) names.push_back(concat("v", i + 1));
    g.var_names = std::move(names);
    g.thresholds = thresholds.empty() ? std::vector<double>(static_cast<std::size_t>(g.lag + 1), 0.0)
                                      : std::move(thresholds);
    for (int k = 0; k <= g.lag; ++k) {
        Matrix w(d, d);
        for (Index j = 0; j < d; ++j) {
            auto c = model.conv(j);
            for (Index i = 0; i < d; ++i) w(i, j) = c.col(k * d + i).norm();
        }
        g.weights.push_back(std::move(w));
    }
    return g;
}

/// Zeroes every weight at or below its lag position's threshold and checks
/// that the surviving instantaneous edges form a DAG.
inline TemporalCausalGraph prune_graph(const TemporalCausalGraph& graph, const std::vector<double>& thresholds) {
    require(thresholds.size() == graph.weights.size(), "invalid_config",
            concat("expected ", graph.weights.size(), " thresholds, got ", thresholds.size()));
    TemporalCausalGraph out = graph;
    out.thresholds = thresholds;
    for (std::size_t k = 0; k < out.weights.size(); ++k) {
        require(thresholds[k] >= 0.0, "invalid_config", "thresholds must be nonnegative");
        out.weights[k] = (out.weights[k].array() > thresholds[k]).select(out.weights[k], 0.0);
    }
    require(is_acyclic((out.instantaneous().array() > 0.0).matrix()), "cyclic_graph",
            "pruned instantaneous graph still contains a directed cycle");
    return out;
}

// ---------------------------------------------------------------------------
// Objective

/// Weights of the acyclicity term alpha * h + rho / 2 * h^2. The defaults
/// give the plain additive h used in the training objective; the training
/// loop drives them with the augmented Lagrangian schedule.
struct AcyclicityWeights {
    double alpha = 1.0;
    double rho = 0.0;
};

struct ObjectiveValue {
    double total = 0.0;
    double prediction = 0.0;  // (1/n) sum_t sum_j (xhat - x)^2
    double l1 = 0.0;
    double l2 = 0.0;
    double acyclicity = 0.0;  // alpha * h + rho / 2 * h^2
    double h = 0.0;
    Vector gradient;
};

inline ObjectiveValue objective(const CnnEnsemble& model, const Eigen::Ref<const Matrix>& rows,
                                const DiscoveryConfig& cfg, const AcyclicityWeights& weights = {},
                                bool with_gradient = true) {
    require(rows.rows() >= 1, "empty_data", "objective needs at least one row");
    require(rows.cols() == model.width(), "dimension_mismatch",
            concat("expected rows of width ", model.width(), ", got ", rows.cols()));
    const Index d = model.dims(), n = rows.rows(), width = model.width();
    const int lag = model.lag();
    const Index m = model.kernels();

    ObjectiveValue v;
    if (with_gradient) v.gradient = Vector::Zero(model.parameters().size());
    const double inv_n = 1.0 / static_cast<double>(n);

    for (Index j = 0; j < d; ++j) {
        Matrix z1 = (rows * model.conv(j).transpose()).rowwise() + model.conv_bias(j).transpose();
        Matrix a1 = z1.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
        Matrix z2 = (a1 * model.fc(j).transpose()).rowwise() + model.fc_bias(j).transpose();
        Matrix a2 = z2.cwiseMax(0.0);
        Vector y = (a2 * model.out(j)).array() + model.out_bias(j);
        Vector err = y - rows.col(lag * d + j);
        v.prediction += err.squaredNorm() * inv_n;

        if (!with_gradient) continue;
        const Index off = model.block_offset(j);
        const Index kw = m * width;
        Vector dy = 2.0 * inv_n * err;
        // output layer
        Eigen::Map<Vector>(v.gradient.data() + off + kw + m + model.hidden() * m + model.hidden(), model.hidden()) =
            a2.transpose() * dy;
        v.gradient(off + kw + m + model.hidden() * m + 2 * model.hidden()) = dy.sum();
        Matrix dz2 = (dy * model.out(j).transpose()).cwiseProduct((z2.array() > 0.0).cast<double>().matrix());
        Eigen::Map<Matrix>(v.gradient.data() + off + kw + m, model.hidden(), m) = dz2.transpose() * a1;
        Eigen::Map<Vector>(v.gradient.data() + off + kw + m + model.hidden() * m, model.hidden()) =
            dz2.colwise().sum().transpose();
        Matrix dz1 = (dz2 * model.fc(j)).cwiseProduct(a1.cwiseProduct((1.0 - a1.array()).matrix()));
        Eigen::Map<Matrix>(v.gradient.data() + off, m, width) = dz1.transpose() * rows;
        Eigen::Map<Vector>(v.gradient.data() + off + kw, m) = dz1.colwise().sum().transpose();
    }

    // sparsity on kernel weights, per lag position
    for (Index j = 0; j < d; ++j) {
        auto c = model.conv(j);
        for (int k = 0; k <= lag; ++k) {
            const double lam = cfg.lambda1_at(k);
            auto block = c.middleCols(k * d, d);
            v.l1 += lam * block.cwiseAbs().sum();
            if (with_gradient && lam != 0.0) {
                Eigen::Map<Matrix> g(v.gradient.data() + model.block_offset(j), m, width);
                g.middleCols(k * d, d).array() += lam * block.array().sign();
            }
        }
    }

    v.l2 = 0.5 * cfg.lambda2 * model.parameters().squaredNorm();
    if (with_gradient) v.gradient += cfg.lambda2 * model.parameters();

    if (weights.alpha != 0.0 || weights.rho != 0.0) {
        const Matrix w = instantaneous_weights(model);
        const auto acyc = acyclicity_with_exp(w);
        v.h = acyc.h;
        v.acyclicity = weights.alpha * v.h + 0.5 * weights.rho * v.h * v.h;
        if (with_gradient) {
            const double coef = weights.alpha + weights.rho * v.h;
            // d tr(exp(A)) / dA(i, j) = exp(A)(j, i), with A(i, j) = ||phi_ij||^2
            for (Index j = 0; j < d; ++j) {
                Eigen::Map<Matrix> g(v.gradient.data() + model.block_offset(j), m, width);
                auto c = model.conv(j);
                for (Index i = 0; i < d; ++i)
                    g.col(lag * d + i) += coef * acyc.exp_hadamard(j, i) * 2.0 * c.col(lag * d + i);
            }
        }
    } else {
        v.h = acyclicity_penalty(instantaneous_weights(model));
    }

    if (with_gradient) model.mask_gradient(v.gradient);
    v.total = v.prediction + v.l1 + v.l2 + v.acyclicity;
    return v;
}

// ---------------------------------------------------------------------------
// Losses

inline double prediction_loss(const Eigen::Ref<const Matrix>& predicted, const Eigen::Ref<const Matrix>& target,
                              LossConvention convention = LossConvention::root_mean_norm) {
    require(predicted.rows() >= 1, "empty_data", "loss needs at least one row");
    require(predicted.rows() == target.rows() && predicted.cols() == target.cols(), "dimension_mismatch",
            "prediction and target shapes differ");
    const Matrix e = predicted - target;
    if (convention == LossConvention::rmse) return std::sqrt(e.squaredNorm() / static_cast<double>(e.size()));
    return std::sqrt(e.rowwise().norm().mean());
}

/// Test loss of the ensemble on lag-extended rows of normalized data.
inline double model_test_rmse(const CnnEnsemble& model, const Eigen::Ref<const Matrix>& extended_rows,
                              LossConvention convention = LossConvention::root_mean_norm) {
    require(extended_rows.rows() >= 1, "empty_data", "no rows to evaluate");
    return prediction_loss(model.predict(extended_rows), extended_rows.rightCols(model.dims()), convention);
}

// ---------------------------------------------------------------------------
// Training

struct DiscoveryResult {
    CnnEnsemble model;
    TemporalCausalGraph weighted;  // raw kernel norms
    TemporalCausalGraph graph;     // pruned at the configured thresholds
    double train_loss = 0.0;
    double h = 0.0;
    bool reached_tolerance = false;  // false: schedule ran out and weakest cycle edges were cut
    int rounds = 0;
    double final_rho = 0.0;
    std::vector<std::pair<Index, Index>> removed_edges;  // (source, target) cut to restore a DAG
    ObjectiveValue final_objective;
};

namespace detail {

inline bool reachable(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adj, Index from, Index to) {
    std::vector<Index> stack{from};
    std::vector<bool> seen(static_cast<std::size_t>(adj.rows()), false);
    seen[static_cast<std::size_t>(from)] = true;
    while (!stack.empty()) {
        Index u = stack.back();
        stack.pop_back();
        if (u == to) return true;
        for (Index v = 0; v < adj.cols(); ++v) {
            if (adj(u, v) && !seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = true;
                stack.push_back(v);
            }
        }
    }
    return false;
}

/// Keeps instantaneous edges strongest-first unless they close a cycle; the
/// rejected ones are masked out of the ensemble.
inline std::vector<std::pair<Index, Index>> restrict_to_dag(CnnEnsemble& model) {
    const Index d = model.dims();
    const Matrix w = instantaneous_weights(model);
    struct Edge {
        double w;
        Index i, j;
    };
    std::vector<Edge> edges;
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            if (i != j && w(i, j) > 0.0) edges.push_back({w(i, j), i, j});
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w > b.w; });
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> kept;
    kept.setConstant(d, d, false);
    std::vector<std::pair<Index, Index>> removed;
    for (const auto& e : edges) {
        if (reachable(kept, e.j, e.i)) {
            model.block_input(e.j, model.lag() * d + e.i);
            removed.emplace_back(e.i, e.j);
        } else {
            kept(e.i, e.j) = true;
        }
    }
    return removed;
}

}  // namespace detail

/// Fits the ensemble to a normalized window under the augmented Lagrangian
/// acyclicity schedule and returns the model, its graph and the training loss.
inline DiscoveryResult train_discovery(const Eigen::Ref<const Matrix>& window, const DiscoveryConfig& cfg,
                                       std::vector<std::string> names = {}) {
    cfg.validate();
    const Index d = window.cols();
    require(d >= 1, "invalid_data", "window has no variables");
    require(window.rows() > cfg.max_lag + 1, "window_too_short",
            concat("discovery needs more than K+1=", cfg.max_lag + 1, " rows, got ", window.rows()));
    require(window.allFinite(), "non_finite", "window contains non-finite values");
    if (names.empty())
        for (Index i = 0; i < d; ++i) names.push_back(concat("v", i + 1));

    const LagExtendedMatrix data = lag_extend(window, cfg.max_lag);
    const Index n = data.count();
    DiscoveryResult res;
    res.model = CnnEnsemble::initialized(d, cfg.max_lag, cfg.kernels, cfg.hidden, cfg.seed, names);
    CnnEnsemble& model = res.model;
    Adam opt(model.parameters().size(), cfg.learning_rate);
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xd15c0ULL));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const Index batch = (cfg.batch_size <= 0 || cfg.batch_size >= n) ? n : cfg.batch_size;

    AcyclicityWeights al{0.0, cfg.rho_init};
    Matrix batch_rows(batch, data.width());
    auto run_epochs = [&](int epochs, int round) {
        for (int e = 0; e < epochs; ++e) {
            if (batch < n) std::shuffle(order.begin(), order.end(), rng);
            for (Index start = 0; start < n; start += batch) {
                const Index len = std::min(batch, n - start);
                if (len < batch && start > 0) break;  // drop a ragged tail
                for (Index r = 0; r < len; ++r) batch_rows.row(r) = data.rows.row(order[static_cast<std::size_t>(start + r)]);
                auto obj = objective(model, batch_rows.topRows(len), cfg, al, true);
                if (!std::isfinite(obj.total) || !obj.gradient.allFinite()) {
                    throw Error("divergence", concat("discovery training diverged (round ", round, ", epoch ", e,
                                                     "): prediction=", obj.prediction, " l1=", obj.l1,
                                                     " l2=", obj.l2, " acyclicity=", obj.acyclicity,
                                                     " rho=", al.rho, " alpha=", al.alpha));
                }
                opt.step(model.parameters(), obj.gradient);
                model.apply_mask();
            }
        }
    };

    double h_prev = std::numeric_limits<double>::infinity();
    double h = 0.0;
    for (int round = 0; round < cfg.max_rounds; ++round) {
        run_epochs(cfg.epochs_per_round, round);
        res.rounds = round + 1;
        h = acyclicity_penalty(instantaneous_weights(model));
        require(std::isfinite(h), "divergence", "acyclicity measure became non-finite");
        if (h <= cfg.h_tol) {
            res.reached_tolerance = true;
            break;
        }
        if (h > cfg.h_decrease * h_prev) al.rho = std::min(al.rho * cfg.rho_factor, cfg.rho_max);
        al.alpha += al.rho * h;
        h_prev = h;
    }
    if (!res.reached_tolerance) {
        res.removed_edges = detail::restrict_to_dag(model);
        run_epochs(cfg.finetune_epochs, cfg.max_rounds);
    }
    res.final_rho = al.rho;
    res.final_objective = objective(model, data.rows, cfg, al, false);
    res.h = res.final_objective.h;
    res.train_loss = model_test_rmse(model, data.rows, cfg.loss_convention);
    require(std::isfinite(res.train_loss), "divergence", "training loss is non-finite");
    res.weighted = extract_adjacency(model, cfg.threshold_vector(), names);
    res.graph = prune_graph(res.weighted, cfg.threshold_vector());
    return res;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const TemporalCausalGraph& g) {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& slice : g.weights) {
        nlohmann::json rows = nlohmann::json::array();
        for (Index i = 0; i < slice.rows(); ++i) {
            std::vector<double> row(static_cast<std::size_t>(slice.cols()));
            for (Index j = 0; j < slice.cols(); ++j) row[static_cast<std::size_t>(j)] = slice(i, j);
            rows.push_back(row);
        }
        w.push_back(rows);
    }
    return {{"K", g.lag}, {"d", g.dims()}, {"var_names", g.var_names}, {"thresholds", g.thresholds}, {"weights", w}};
}

inline TemporalCausalGraph graph_from_json(const nlohmann::json& j) {
    TemporalCausalGraph g;
    g.lag = j.at("K").get<int>();
    g.var_names = j.at("var_names").get<std::vector<std::string>>();
    g.thresholds = j.at("thresholds").get<std::vector<double>>();
    const auto d = static_cast<Index>(g.var_names.size());
    require(j.at("d").get<Index>() == d, "schema", "graph 'd' disagrees with var_names");
    const auto& w = j.at("weights");
    require(w.size() == static_cast<std::size_t>(g.lag + 1), "schema", "graph needs K+1 weight slices");
    for (const auto& slice : w) {
        Matrix m(d, d);
        require(slice.size() == static_cast<std::size_t>(d), "schema", "weight slice has wrong row count");
        for (Index i = 0; i < d; ++i) {
            const auto row = slice[static_cast<std::size_t>(i)].get<std::vector<double>>();
            require(row.size() == static_cast<std::size_t>(d), "schema", "weight slice has wrong column count");
            for (Index c = 0; c < d; ++c) m(i, c) = row[static_cast<std::size_t>(c)];
        }
        g.weights.push_back(std::move(m));
    }
    return g;
}

/// Edge list `lag,source,target,weight` with lag counted back from the
/// current step (0 = instantaneous). Zero-weight entries are omitted.
inline std::string edge_list_csv(const TemporalCausalGraph& g) {
    std::string out = "lag,source,target,weight\n";
    for (int k = 0; k <= g.lag; ++k) {
        const auto& w = g.weights[static_cast<std::size_t>(k)];
        for (Index i = 0; i < w.rows(); ++i)
            for (Index j = 0; j < w.cols(); ++j)
                if (w(i, j) > 0.0)
                    out += concat(g.lag - k, ',', g.var_names[static_cast<std::size_t>(i)], ',',
                                  g.var_names[static_cast<std::size_t>(j)], ',', detail::format_double(w(i, j)), '\n');
    }
    return out;
}

inline nlohmann::json to_json(const CnnEnsemble& e) {
    const Vector& p = e.parameters();
    std::vector<double> mask(e.mask().data(), e.mask().data() + e.mask().size());
    return {{"dims", e.dims()},
            {"lag", e.lag()},
            {"kernels", e.kernels()},
            {"hidden", e.hidden()},
            {"parameters", std::vector<double>(p.data(), p.data() + p.size())},
            {"mask", mask}};
}

inline CnnEnsemble ensemble_from_json(const nlohmann::json& j) {
    CnnEnsemble e(j.at("dims").get<Index>(), j.at("lag").get<int>(), j.at("kernels").get<int>(),
                  j.at("hidden").get<int>());
    const auto p = j.at("parameters").get<std::vector<double>>();
    const auto mask = j.at("mask").get<std::vector<double>>();
    require(static_cast<Index>(p.size()) == e.parameters().size(), "schema", "ensemble parameter count mismatch");
    require(static_cast<Index>(mask.size()) == e.mask().size(), "schema", "ensemble mask size mismatch");
    e.parameters() = Eigen::Map<const Vector>(p.data(), static_cast<Index>(p.size()));
    for (Index c = 0; c < e.width(); ++c)
        for (Index t = 0; t < e.dims(); ++t)
            if (mask[static_cast<std::size_t>(t * e.width() + c)] == 0.0) e.block_input(t, c);
    return e;
}

}  // namespace cdss
