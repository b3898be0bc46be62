#pragma once

// Graph-convolutional soft sensor over lag-extended inputs.
//
//   z_1 = X A W_enc_1 + X W_res_1
//   z_b = relu(z_{b-1}) W_enc_b + X W_res_b          (b > 1)
//   h_l = relu(h_{l-1} W_l^T + b_l),  h_0 = z_B
//   y   = h_L w_out^T + b_out
//
// X holds one row per sample and one column per extended node (lag position,
// input variable), so A mixes nodes within each sample. Only the first block
// sees node-indexed features; later blocks act on hidden features.

#include "cdss/adam.hpp"
#include "cdss/causal_discovery.hpp"
#include "cdss/series.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace cdss {

enum class AdjacencyMode { boolean, weighted };
enum class Symmetrization {
    max,       // A <- max(A, A^T), then D^{-1/2} (A + I) D^{-1/2}
    directed,  // keep direction, row-normalize D^{-1} (A + I)
};

inline std::string to_string(AdjacencyMode m) { return m == AdjacencyMode::boolean ? "boolean" : "weighted"; }
inline std::string to_string(Symmetrization s) { return s == Symmetrization::max ? "max" : "directed"; }

inline AdjacencyMode adjacency_mode_from_string(const std::string& s) {
    if (s == "boolean") return AdjacencyMode::boolean;
    require(s == "weighted", "invalid_config", concat("unknown adjacency mode '", s, "'"));
    return AdjacencyMode::weighted;
}

inline Symmetrization symmetrization_from_string(const std::string& s) {
    if (s == "max") return Symmetrization::max;
    require(s == "directed", "invalid_config", concat("unknown symmetrization '", s, "'"));
    return Symmetrization::directed;
}

/// Adjacency over the (K+1)*d_in extended nodes; node k*d_in + i is input
/// variable i at lag position k (oldest first), matching lag_extend columns.
struct GraphAdjacency {
    Matrix raw;         // A before symmetrization and self-loops
    Matrix normalized;  // prepared A-hat
    AdjacencyMode mode = AdjacencyMode::boolean;
    Symmetrization symmetrization = Symmetrization::max;
    int lag = 0;
    std::vector<std::string> input_vars;

    Index nodes() const noexcept { return normalized.rows(); }
};

/// Self-loops, then symmetric (or row) degree normalization of a square
/// nonnegative matrix.
inline Matrix normalize_adjacency(const Eigen::Ref<const Matrix>& a, Symmetrization sym = Symmetrization::max) {
    require(a.rows() == a.cols(), "not_square", "adjacency must be square");
    require(a.allFinite() && (a.array() >= 0.0).all(), "invalid_graph", "adjacency must be finite and nonnegative");
    Matrix m = sym == Symmetrization::max ? Matrix(a.cwiseMax(a.transpose())) : Matrix(a);
    m.diagonal().array() += 1.0;
    const Vector deg = m.rowwise().sum();
    if (sym == Symmetrization::directed) return deg.cwiseInverse().asDiagonal() * m;
    const Vector s = deg.cwiseSqrt().cwiseInverse();
    return s.asDiagonal() * m * s.asDiagonal();
}

/// Builds the extended-node adjacency of `graph` restricted to `input_vars`.
/// Entry (k*d_in + i, K*d_in + j) is W^k_{i,j} (or 1 in boolean mode) for
/// weights above the graph's per-lag threshold.
inline GraphAdjacency prepare_adjacency(const TemporalCausalGraph& graph, const std::vector<std::string>& input_vars,
                                        const std::string& target, AdjacencyMode mode = AdjacencyMode::boolean,
                                        Symmetrization sym = Symmetrization::max) {
    require(!input_vars.empty(), "invalid_config", "soft sensor needs at least one input variable");
    require(std::find(input_vars.begin(), input_vars.end(), target) == input_vars.end(), "target_in_inputs",
            concat("target '", target, "' must not be among the inputs"));
    require(static_cast<int>(graph.weights.size()) == graph.lag + 1, "invalid_graph", "graph needs K+1 weight slices");
    std::vector<Index> idx;
    for (const auto& v : input_vars) {
        auto it = std::find(graph.var_names.begin(), graph.var_names.end(), v);
        require(it != graph.var_names.end(), "unknown_variable", concat("input '", v, "' not in graph"));
        idx.push_back(static_cast<Index>(it - graph.var_names.begin()));
    }
    const int lag = graph.lag;
    const auto d = static_cast<Index>(input_vars.size());
    GraphAdjacency out;
    out.mode = mode;
    out.symmetrization = sym;
    out.lag = lag;
    out.input_vars = input_vars;
    out.raw = Matrix::Zero((lag + 1) * d, (lag + 1) * d);
    for (int k = 0; k <= lag; ++k) {
        const Matrix& w = graph.weights[static_cast<std::size_t>(k)];
        const double thr = graph.thresholds.size() > static_cast<std::size_t>(k)
                               ? graph.thresholds[static_cast<std::size_t>(k)]
                               : 0.0;
        for (Index i = 0; i < d; ++i) {
            for (Index j = 0; j < d; ++j) {
                const double v = w(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
                if (!(v > thr) || v <= 0.0) continue;
                out.raw(k * d + i, lag * d + j) = mode == AdjacencyMode::boolean ? 1.0 : v;
            }
        }
    }
    out.normalized = normalize_adjacency(out.raw, sym);
    return out;
}

/// Self-loops only: the graph-free baseline.
inline GraphAdjacency identity_adjacency(const std::vector<std::string>& input_vars, int lag) {
    GraphAdjacency out;
    out.lag = lag;
    out.input_vars = input_vars;
    const auto n = static_cast<Index>(input_vars.size()) * (lag + 1);
    out.raw = Matrix::Zero(n, n);
    out.normalized = Matrix::Identity(n, n);
    return out;
}

/// h0 = (X A) W_enc + X W_res.
inline Matrix gc_block_forward(const Eigen::Ref<const Matrix>& a_hat, const Eigen::Ref<const Matrix>& x,
                               const Eigen::Ref<const Matrix>& w_enc, const Eigen::Ref<const Matrix>& w_res) {
    require(a_hat.rows() == a_hat.cols() && x.cols() == a_hat.rows() && w_enc.rows() == a_hat.cols() &&
                w_res.rows() == x.cols() && w_enc.cols() == w_res.cols(),
            "dimension_mismatch",
            concat("gc block shapes: A ", a_hat.rows(), "x", a_hat.cols(), ", X ", x.rows(), "x", x.cols(),
                   ", W_enc ", w_enc.rows(), "x", w_enc.cols(), ", W_res ", w_res.rows(), "x", w_res.cols()));
    return (x * a_hat) * w_enc + x * w_res;
}

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

/// Rectified hidden layers, linear last layer; one output column per unit of
/// the last layer.
inline Matrix mlp_forward(const Eigen::Ref<const Matrix>& h0, const std::vector<DenseLayer>& layers) {
    Matrix h = h0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        require(layer.weight.cols() == h.cols() && layer.bias.size() == layer.weight.rows(), "dimension_mismatch",
                concat("mlp layer ", l, " expects ", layer.weight.cols(), " inputs, got ", h.cols()));
        Matrix u = (h * layer.weight.transpose()).rowwise() + layer.bias.transpose();
        h = l + 1 < layers.size() ? Matrix(u.cwiseMax(0.0)) : u;
    }
    return h;
}

struct TcGcnConfig {
    std::vector<int> gc_hidden{512, 256};
    std::vector<int> mlp_hidden{512, 128};
    int batch_size = 128;
    double learning_rate = 1e-3;
    int epochs = 2000;
    AdjacencyMode adjacency_mode = AdjacencyMode::boolean;
    Symmetrization symmetrization = Symmetrization::max;
    double validation_fraction = 0.1;
    bool zero_output_init = false;
    std::uint64_t seed = 0;

    void validate() const {
        require(!gc_hidden.empty(), "invalid_config", "at least one GC block is required");
        for (int h : gc_hidden) require(h >= 1, "invalid_config", "GC hidden sizes must be >= 1");
        for (int h : mlp_hidden) require(h >= 1, "invalid_config", "MLP hidden sizes must be >= 1");
        require(batch_size >= 1, "invalid_config", "batch size must be >= 1");
        require(learning_rate > 0.0 && std::isfinite(learning_rate), "invalid_config", "learning rate must be positive");
        require(epochs >= 0, "invalid_config", "epochs must be >= 0");
        require(validation_fraction >= 0.0 && validation_fraction < 1.0, "invalid_config",
                "validation fraction must lie in [0, 1)");
    }
};

struct TrainingHistory {
    std::vector<double> train_mse;  // per epoch, standardized units
    double train_loss = 0.0;        // final MSE in target units
    double validation_loss = 0.0;   // NaN-free; 0 when no validation rows
    Index train_rows = 0;
    Index validation_rows = 0;
};

/// Soft-sensor network. Parameters live in one flat vector; inputs and the
/// target are standardized internally with statistics from the training rows.
class TcGcnModel {
public:
    TcGcnModel() = default;

    TcGcnModel(GraphAdjacency adjacency, std::string target, std::vector<int> gc_hidden, std::vector<int> mlp_hidden)
        : adj_(std::move(adjacency)), target_(std::move(target)), gc_(std::move(gc_hidden)), mlp_(std::move(mlp_hidden)) {
        require(!gc_.empty(), "invalid_config", "at least one GC block is required");
        const Index p = nodes();
        require(p >= 1, "invalid_config", "adjacency has no nodes");
        Index off = 0;
        Index in = p;
        for (int h : gc_) {
            enc_off_.push_back(off);
            off += in * h;
            res_off_.push_back(off);
            off += p * h;
            in = h;
        }
        std::vector<int> widths = mlp_;
        widths.push_back(1);
        for (int h : widths) {
            layer_in_.push_back(in);
            layer_out_.push_back(h);
            w_off_.push_back(off);
            off += h * in;
            b_off_.push_back(off);
            off += h;
            in = h;
        }
        params_ = Vector::Zero(off);
        x_mean_ = Vector::Zero(p);
        x_scale_ = Vector::Ones(p);
    }

    Index nodes() const noexcept { return adj_.normalized.rows(); }
    Index input_dims() const noexcept { return static_cast<Index>(adj_.input_vars.size()); }
    int lag() const noexcept { return adj_.lag; }
    const GraphAdjacency& adjacency() const noexcept { return adj_; }
    const std::string& target() const noexcept { return target_; }
    const std::vector<std::string>& input_vars() const noexcept { return adj_.input_vars; }
    const std::vector<int>& gc_hidden() const noexcept { return gc_; }
    const std::vector<int>& mlp_hidden() const noexcept { return mlp_; }
    std::size_t blocks() const noexcept { return gc_.size(); }
    std::size_t layers() const noexcept { return layer_out_.size(); }

    Vector& parameters() noexcept { return params_; }
    const Vector& parameters() const noexcept { return params_; }

    Eigen::Map<Matrix> enc(std::size_t b) { return {params_.data() + enc_off_[b], block_in(b), gc_[b]}; }
    Eigen::Map<const Matrix> enc(std::size_t b) const { return {params_.data() + enc_off_[b], block_in(b), gc_[b]}; }
    Eigen::Map<Matrix> res(std::size_t b) { return {params_.data() + res_off_[b], nodes(), gc_[b]}; }
    Eigen::Map<const Matrix> res(std::size_t b) const { return {params_.data() + res_off_[b], nodes(), gc_[b]}; }
    Eigen::Map<Matrix> weight(std::size_t l) { return {params_.data() + w_off_[l], layer_out_[l], layer_in_[l]}; }
    Eigen::Map<const Matrix> weight(std::size_t l) const {
        return {params_.data() + w_off_[l], layer_out_[l], layer_in_[l]};
    }
    Eigen::Map<Vector> bias(std::size_t l) { return {params_.data() + b_off_[l], layer_out_[l]}; }
    Eigen::Map<const Vector> bias(std::size_t l) const { return {params_.data() + b_off_[l], layer_out_[l]}; }

    // Standardization applied before the network and undone after it.
    Vector& input_mean() noexcept { return x_mean_; }
    const Vector& input_mean() const noexcept { return x_mean_; }
    Vector& input_scale() noexcept { return x_scale_; }
    const Vector& input_scale() const noexcept { return x_scale_; }
    double& target_mean() noexcept { return y_mean_; }
    double target_mean() const noexcept { return y_mean_; }
    double& target_scale() noexcept { return y_scale_; }
    double target_scale() const noexcept { return y_scale_; }

    TrainingHistory& history() noexcept { return history_; }
    const TrainingHistory& history() const noexcept { return history_; }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    void initialize(std::uint64_t seed, bool zero_output = false) {
        std::mt19937_64 rng(mix_seed(seed, 0x7c6c9ULL));
        auto fill = [&](auto&& m, Index fan_in) {
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (Index c = 0; c < m.cols(); ++c)
                for (Index r = 0; r < m.rows(); ++r) m(r, c) = bound * u(rng);
        };
        for (std::size_t b = 0; b < blocks(); ++b) {
            fill(enc(b), block_in(b));
            fill(res(b), nodes());
        }
        for (std::size_t l = 0; l < layers(); ++l) {
            fill(weight(l), layer_in_[l]);
            fill(bias(l), layer_in_[l]);
        }
        if (zero_output) {
            weight(layers() - 1).setZero();
            bias(layers() - 1).setZero();
        }
    }

    Matrix standardize_inputs(const Eigen::Ref<const Matrix>& x) const {
        require(x.cols() == nodes(), "dimension_mismatch",
                concat("expected ", nodes(), " extended input columns, got ", x.cols()));
        return (x.rowwise() - x_mean_.transpose()).array().rowwise() / x_scale_.transpose().array();
    }

    /// Network output in standardized target units.
    Vector forward_standardized(const Eigen::Ref<const Matrix>& xs) const {
        Matrix z = gc_block_forward(adj_.normalized, xs, enc(0), res(0));
        for (std::size_t b = 1; b < blocks(); ++b) z = z.cwiseMax(0.0) * enc(b) + xs * res(b);
        for (std::size_t l = 0; l < layers(); ++l) {
            Matrix u = (z * weight(l).transpose()).rowwise() + bias(l).transpose();
            z = l + 1 < layers() ? Matrix(u.cwiseMax(0.0)) : u;
        }
        return z.col(0);
    }

    /// Predictions in target units for raw extended inputs.
    Vector predict(const Eigen::Ref<const Matrix>& extended_inputs) const {
        require(extended_inputs.allFinite(), "non_finite", "inputs contain non-finite values");
        return (forward_standardized(standardize_inputs(extended_inputs)).array() * y_scale_ + y_mean_).matrix();
    }

private:
    Index block_in(std::size_t b) const { return b == 0 ? nodes() : gc_[b - 1]; }

    GraphAdjacency adj_;
    std::string target_;
    std::vector<int> gc_, mlp_;
    std::vector<Index> enc_off_, res_off_, w_off_, b_off_, layer_in_, layer_out_;
    Vector params_;
    Vector x_mean_, x_scale_;
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    TrainingHistory history_;
};

struct LossValue {
    double loss = 0.0;
    Vector gradient;
};

/// Mean squared error on standardized inputs/targets, with its gradient with
/// respect to the flat parameter vector.
inline LossValue tcgcn_loss(const TcGcnModel& model, const Eigen::Ref<const Matrix>& xs,
                            const Eigen::Ref<const Vector>& ys, bool with_gradient = true) {
    require(xs.rows() == ys.size() && xs.rows() >= 1, "dimension_mismatch", "inputs and targets must align");
    const std::size_t nb = model.blocks();
    const std::size_t nl = model.layers();
    const Matrix xa = xs * model.adjacency().normalized;
    std::vector<Matrix> z(nb);
    z[0] = xa * model.enc(0) + xs * model.res(0);
    for (std::size_t b = 1; b < nb; ++b) z[b] = z[b - 1].cwiseMax(0.0) * model.enc(b) + xs * model.res(b);
    std::vector<Matrix> h(nl + 1), u(nl);
    h[0] = z[nb - 1];
    for (std::size_t l = 0; l < nl; ++l) {
        u[l] = (h[l] * model.weight(l).transpose()).rowwise() + model.bias(l).transpose();
        h[l + 1] = l + 1 < nl ? Matrix(u[l].cwiseMax(0.0)) : u[l];
    }
    const Vector err = h[nl].col(0) - ys;
    const auto n = static_cast<double>(ys.size());
    LossValue out;
    out.loss = err.squaredNorm() / n;
    if (!with_gradient) return out;

    TcGcnModel g = model;  // reuse the layout for the gradient
    g.parameters().setZero();
    Matrix gh = (2.0 / n) * err;
    for (std::size_t l = nl; l-- > 0;) {
        Matrix gu = l + 1 < nl ? Matrix(gh.cwiseProduct((u[l].array() > 0.0).cast<double>().matrix())) : gh;
        g.weight(l) = gu.transpose() * h[l];
        g.bias(l) = gu.colwise().sum().transpose();
        gh = gu * model.weight(l);
    }
    for (std::size_t b = nb; b-- > 0;) {
        g.res(b) = xs.transpose() * gh;
        if (b == 0) {
            g.enc(0) = xa.transpose() * gh;
        } else {
            const Matrix a = z[b - 1].cwiseMax(0.0);
            g.enc(b) = a.transpose() * gh;
            gh = (gh * model.enc(b).transpose()).cwiseProduct((z[b - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    out.gradient = std::move(g.parameters());
    return out;
}

inline double rmse(const Eigen::Ref<const Vector>& y_true, const Eigen::Ref<const Vector>& y_pred) {
    require(y_true.size() == y_pred.size(), "dimension_mismatch",
            concat("rmse needs equal lengths, got ", y_true.size(), " and ", y_pred.size()));
    require(y_true.size() >= 1, "empty_input", "rmse of an empty vector");
    return std::sqrt((y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size()));
}

/// Lag-extended inputs (input columns only) and the target at the current step.
struct SoftSensorData {
    Matrix inputs;
    Vector targets;
};

inline SoftSensorData soft_sensor_dataset(const Eigen::Ref<const Matrix>& values, const std::vector<Index>& input_cols,
                                          Index target_col, int lag) {
    require(target_col >= 0 && target_col < values.cols(), "invalid_range", "target column out of range");
    require(std::find(input_cols.begin(), input_cols.end(), target_col) == input_cols.end(), "target_in_inputs",
            "target column must not be among the inputs");
    Matrix in(values.rows(), static_cast<Index>(input_cols.size()));
    for (std::size_t c = 0; c < input_cols.size(); ++c) {
        require(input_cols[c] >= 0 && input_cols[c] < values.cols(), "invalid_range", "input column out of range");
        in.col(static_cast<Index>(c)) = values.col(input_cols[c]);
    }
    SoftSensorData out;
    out.inputs = lag_extend(in, lag).rows;
    out.targets = values.col(target_col).tail(values.rows() - lag);
    return out;
}

inline SoftSensorData soft_sensor_dataset(const MultivariateSeries& series, const std::vector<std::string>& inputs,
                                          const std::string& target, int lag) {
    std::vector<Index> cols;
    for (const auto& v : inputs) cols.push_back(series.index_of(v));
    return soft_sensor_dataset(series.values(), cols, series.index_of(target), lag);
}

/// Mini-batch Adam on the MSE. The last `validation_fraction` of the rows
/// (chronological) is held out for monitoring only.
inline TcGcnModel train_soft_sensor(const Eigen::Ref<const Matrix>& extended_inputs,
                                    const Eigen::Ref<const Vector>& targets, const GraphAdjacency& adjacency,
                                    const std::string& target, const TcGcnConfig& cfg) {
    cfg.validate();
    require(extended_inputs.rows() == targets.size(), "dimension_mismatch",
            concat(extended_inputs.rows(), " input rows but ", targets.size(), " targets"));
    require(extended_inputs.cols() == adjacency.nodes(), "dimension_mismatch",
            concat("inputs have ", extended_inputs.cols(), " columns, adjacency has ", adjacency.nodes(), " nodes"));
    require(extended_inputs.allFinite() && targets.allFinite(), "non_finite", "training data contain non-finite values");
    const Index total = targets.size();
    Index n_val = static_cast<Index>(std::floor(cfg.validation_fraction * static_cast<double>(total)));
    if (total - n_val < 2) n_val = 0;
    const Index n = total - n_val;
    require(n >= 2, "window_too_short", concat("soft sensor needs at least 2 training rows, got ", n));

    TcGcnModel model(adjacency, target, cfg.gc_hidden, cfg.mlp_hidden);
    model.initialize(cfg.seed, cfg.zero_output_init);
    const auto x_stats = compute_stats(extended_inputs.topRows(n));
    for (Index c = 0; c < model.nodes(); ++c) {
        model.input_mean()(c) = x_stats.mean(c);
        model.input_scale()(c) = x_stats.floored[static_cast<std::size_t>(c)] ? 1.0 : x_stats.std(c);
    }
    const auto y_stats = compute_stats(targets.head(n));
    model.target_mean() = y_stats.mean(0);
    model.target_scale() = y_stats.floored[0] ? 1.0 : y_stats.std(0);

    const Matrix xs = model.standardize_inputs(extended_inputs.topRows(n));
    const Vector ys = (targets.head(n).array() - model.target_mean()) / model.target_scale();

    Adam opt(model.parameters().size(), cfg.learning_rate);
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x9c5e7ULL));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const Index batch = std::min<Index>(cfg.batch_size, n);
    Matrix bx(batch, model.nodes());
    Vector by(batch);
    auto& hist = model.history();
    for (int e = 0; e < cfg.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (Index start = 0; start < n; start += batch) {
            const Index len = std::min(batch, n - start);
            for (Index r = 0; r < len; ++r) {
                bx.row(r) = xs.row(order[static_cast<std::size_t>(start + r)]);
                by(r) = ys(order[static_cast<std::size_t>(start + r)]);
            }
            auto lv = tcgcn_loss(model, bx.topRows(len), by.head(len), true);
            if (!std::isfinite(lv.loss) || !lv.gradient.allFinite())
                throw Error("divergence", concat("soft sensor training diverged at epoch ", e, " (batch at row ", start,
                                                 "): loss=", lv.loss, " lr=", cfg.learning_rate));
            opt.step(model.parameters(), lv.gradient);
            sum += lv.loss * static_cast<double>(len);
        }
        hist.train_mse.push_back(sum / static_cast<double>(n));
    }
    hist.train_rows = n;
    hist.validation_rows = n_val;
    const Vector fit = model.predict(extended_inputs.topRows(n));
    hist.train_loss = (fit - targets.head(n)).squaredNorm() / static_cast<double>(n);
    require(std::isfinite(hist.train_loss), "divergence", "soft sensor training loss is non-finite");
    if (n_val > 0) {
        const Vector pv = model.predict(extended_inputs.bottomRows(n_val));
        hist.validation_loss = (pv - targets.tail(n_val)).squaredNorm() / static_cast<double>(n_val);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Serialization: a JSON document plus a little-endian float64 parameter file.

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    const auto r = static_cast<Index>(j.size());
    if (r == 0) return Matrix(0, 0);
    const auto c = static_cast<Index>(j[0].size());
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i) {
        const auto row = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
        require(static_cast<Index>(row.size()) == c, "schema", "ragged matrix");
        for (Index k = 0; k < c; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
    }
    return m;
}

inline std::vector<double> to_std_vector(const Eigen::Ref<const Vector>& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline std::string bytes_of(const Vector& v) {
    std::string out(static_cast<std::size_t>(v.size()) * sizeof(double), '\0');
    std::memcpy(out.data(), v.data(), out.size());
    return out;
}

}  // namespace detail

inline nlohmann::json to_json(const TcGcnConfig& c) {
    return {{"gc_hidden", c.gc_hidden},         {"mlp_hidden", c.mlp_hidden},
            {"batch_size", c.batch_size},       {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},               {"adjacency_mode", to_string(c.adjacency_mode)},
            {"symmetrization", to_string(c.symmetrization)}, {"validation_fraction", c.validation_fraction},
            {"zero_output_init", c.zero_output_init}, {"seed", c.seed}};
}

inline TcGcnConfig tcgcn_config_from_json(const nlohmann::json& j, TcGcnConfig c = {}) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::vector<std::string> known{"gc_hidden",      "mlp_hidden",          "batch_size",
                                                    "learning_rate",  "epochs",              "adjacency_mode",
                                                    "symmetrization", "validation_fraction", "zero_output_init",
                                                    "seed"};
        require(std::find(known.begin(), known.end(), it.key()) != known.end(), "schema",
                concat("unknown key '", it.key(), "' in soft sensor config"));
    }
    if (j.contains("gc_hidden")) c.gc_hidden = j["gc_hidden"].get<std::vector<int>>();
    if (j.contains("mlp_hidden")) c.mlp_hidden = j["mlp_hidden"].get<std::vector<int>>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("adjacency_mode")) c.adjacency_mode = adjacency_mode_from_string(j["adjacency_mode"].get<std::string>());
    if (j.contains("symmetrization"))
        c.symmetrization = symmetrization_from_string(j["symmetrization"].get<std::string>());
    if (j.contains("validation_fraction")) c.validation_fraction = j["validation_fraction"].get<double>();
    if (j.contains("zero_output_init")) c.zero_output_init = j["zero_output_init"].get<bool>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    c.validate();
    return c;
}

inline nlohmann::json to_json(const GraphAdjacency& a) {
    return {{"K", a.lag},
            {"input_vars", a.input_vars},
            {"mode", to_string(a.mode)},
            {"symmetrization", to_string(a.symmetrization)},
            {"raw", detail::matrix_to_json(a.raw)},
            {"normalized", detail::matrix_to_json(a.normalized)}};
}

inline GraphAdjacency adjacency_from_json(const nlohmann::json& j) {
    GraphAdjacency a;
    a.lag = j.at("K").get<int>();
    a.input_vars = j.at("input_vars").get<std::vector<std::string>>();
    a.mode = adjacency_mode_from_string(j.at("mode").get<std::string>());
    a.symmetrization = symmetrization_from_string(j.at("symmetrization").get<std::string>());
    a.raw = detail::matrix_from_json(j.at("raw"));
    a.normalized = detail::matrix_from_json(j.at("normalized"));
    const auto n = static_cast<Index>(a.input_vars.size()) * (a.lag + 1);
    require(a.normalized.rows() == n && a.normalized.cols() == n, "schema", "adjacency size disagrees with inputs");
    return a;
}

/// `row,col,value` for every nonzero entry of the prepared adjacency, with
/// nodes named `<var>@t-<lag>`.
inline std::string adjacency_csv(const GraphAdjacency& a) {
    const auto d = static_cast<Index>(a.input_vars.size());
    auto node = [&](Index n) {
        return concat(a.input_vars[static_cast<std::size_t>(n % d)], "@t-", a.lag - static_cast<int>(n / d));
    };
    std::string out = "row,col,value\n";
    for (Index r = 0; r < a.normalized.rows(); ++r)
        for (Index c = 0; c < a.normalized.cols(); ++c)
            if (a.normalized(r, c) != 0.0)
                out += concat(node(r), ',', node(c), ',', detail::format_double(a.normalized(r, c)), '\n');
    return out;
}

/// Writes `<stem>.json` and `<stem>.bin`; the JSON names the binary file and
/// carries its size and FNV-1a hash.
inline void save_soft_sensor(const TcGcnModel& m, const TcGcnConfig& cfg, const std::filesystem::path& stem) {
    const auto bin_path = std::filesystem::path(stem).concat(".bin");
    const auto json_path = std::filesystem::path(stem).concat(".json");
    const std::string bytes = detail::bytes_of(m.parameters());
    {
        std::ofstream out(bin_path, std::ios::binary);
        require(static_cast<bool>(out), "io", concat("cannot write ", bin_path.string()));
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(static_cast<bool>(out), "io", concat("failed writing ", bin_path.string()));
    }
    const auto& h = m.history();
    nlohmann::json j = {{"format", "tcgcn-bundle-1"},
                        {"target", m.target()},
                        {"config", to_json(cfg)},
                        {"adjacency", to_json(m.adjacency())},
                        {"gc_hidden", m.gc_hidden()},
                        {"mlp_hidden", m.mlp_hidden()},
                        {"input_mean", detail::to_std_vector(m.input_mean())},
                        {"input_scale", detail::to_std_vector(m.input_scale())},
                        {"target_mean", m.target_mean()},
                        {"target_scale", m.target_scale()},
                        {"train_loss", h.train_loss},
                        {"validation_loss", h.validation_loss},
                        {"train_rows", h.train_rows},
                        {"validation_rows", h.validation_rows},
                        {"parameters", {{"file", bin_path.filename().string()},
                                        {"count", m.parameters().size()},
                                        {"dtype", "float64-le"},
                                        {"fnv1a64", fnv1a64(bytes)}}}};
    std::ofstream out(json_path);
    require(static_cast<bool>(out), "io", concat("cannot write ", json_path.string()));
    out << j.dump(2) << '\n';
    require(static_cast<bool>(out), "io", concat("failed writing ", json_path.string()));
}

inline TcGcnModel load_soft_sensor(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    require(static_cast<bool>(in), "io", concat("cannot read ", json_path.string()));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("schema", concat("malformed soft sensor bundle ", json_path.string(), ": ", e.what()));
    }
    require(j.value("format", "") == "tcgcn-bundle-1", "schema", "not a soft sensor bundle");
    TcGcnModel m(adjacency_from_json(j.at("adjacency")), j.at("target").get<std::string>(),
                 j.at("gc_hidden").get<std::vector<int>>(), j.at("mlp_hidden").get<std::vector<int>>());
    const auto& p = j.at("parameters");
    require(p.at("count").get<Index>() == m.parameters().size(), "schema", "parameter count mismatch");
    const auto bin_path = json_path.parent_path() / p.at("file").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    require(static_cast<bool>(bin), "io", concat("cannot read ", bin_path.string()));
    std::string bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    require(bytes.size() == static_cast<std::size_t>(m.parameters().size()) * sizeof(double), "schema",
            "parameter file has the wrong size");
    require(fnv1a64(bytes) == p.at("fnv1a64").get<std::uint64_t>(), "schema", "parameter file hash mismatch");
    std::memcpy(m.parameters().data(), bytes.data(), bytes.size());
    const auto mean = j.at("input_mean").get<std::vector<double>>();
    const auto scale = j.at("input_scale").get<std::vector<double>>();
    require(static_cast<Index>(mean.size()) == m.nodes() && static_cast<Index>(scale.size()) == m.nodes(), "schema",
            "standardization size mismatch");
    m.input_mean() = Eigen::Map<const Vector>(mean.data(), m.nodes());
    m.input_scale() = Eigen::Map<const Vector>(scale.data(), m.nodes());
    m.target_mean() = j.at("target_mean").get<double>();
    m.target_scale() = j.at("target_scale").get<double>();
    m.history().train_loss = j.at("train_loss").get<double>();
    m.history().validation_loss = j.at("validation_loss").get<double>();
    m.history().train_rows = j.at("train_rows").get<Index>();
    m.history().validation_rows = j.at("validation_rows").get<Index>();
    return m;
}

}  // namespace cdss
