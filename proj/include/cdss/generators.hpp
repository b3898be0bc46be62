#pragma once

// Synthetic multiphase benchmarks: a stationary nonlinear SCM with per-mode
// random temporal graphs, and a three-mode non-stationary sinusoidal process.

#include "cdss/series.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace cdss {

/// Boolean temporal graph: slices[k](i, j) means source i at lag position k
/// drives target j. Position K is instantaneous, position 0 is lag K.
using BoolSlices = std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>>;

struct StationaryConfig {
    int dims = 5;
    int max_lag = 3;
    int mode_length = 500;
    int n_modes = 3;
    double inst_edge_prob = 0.3;
    double lag_edge_prob = 0.2;
    // mixing weights are uniform on [-high, -low] U [low, high]
    double weight_low = 0.5;
    double weight_high = 1.0;
    double noise_std = 1.0;
    int burn_in = 100;
    // graphs and weights depend on the seed only; the noise draws also on
    // this stream, so replicas of the same mechanisms can be drawn
    std::uint64_t noise_stream = 0;
};

struct NonstationaryConfig {
    int mode_length = 500;
    double noise_mean = 0.1;
    double noise_std = 0.05;
    std::uint64_t noise_stream = 0;
};

/// Mixing weights of one node in one mode, aligned with `parents`.
struct NodeMechanism {
    std::vector<std::pair<int, int>> parents;  // (lag position, source)
    Vector w1, w2, w3;
};

struct ModeCoefficients {
    double frequency = 0.0;
    double y2_from_y1 = 0.0;
    double y3_from_y2 = 0.0;
};

struct SyntheticGroundTruth {
    std::string example;
    std::uint64_t seed = 0;
    std::vector<Index> breakpoints;       // interior breakpoints, strictly increasing
    std::vector<BoolSlices> mode_graphs;  // one (K+1) x d x d tensor per mode
    std::vector<std::vector<NodeMechanism>> mechanisms;  // stationary only
    std::vector<ModeCoefficients> coefficients;          // non-stationary only
    nlohmann::json config;
};

namespace detail {

inline BoolSlices empty_slices(int lag, int d) {
    BoolSlices s(static_cast<std::size_t>(lag + 1));
    for (auto& m : s) m.setConstant(d, d, false);
    return s;
}

inline double signed_uniform(std::mt19937_64& rng, double low, double high) {
    std::uniform_real_distribution<double> mag(low, high);
    std::bernoulli_distribution sign(0.5);
    const double v = mag(rng);
    return sign(rng) ? v : -v;
}

}  // namespace detail

inline std::vector<int> topological_order(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adj) {
    const auto d = static_cast<int>(adj.rows());
    std::vector<int> indeg(static_cast<std::size_t>(d), 0), order, stack;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (adj(i, j)) ++indeg[static_cast<std::size_t>(j)];
    for (int j = d - 1; j >= 0; --j)
        if (indeg[static_cast<std::size_t>(j)] == 0) stack.push_back(j);
    while (!stack.empty()) {
        int i = stack.back();
        stack.pop_back();
        order.push_back(i);
        for (int j = d - 1; j >= 0; --j) {
            if (adj(i, j) && --indeg[static_cast<std::size_t>(j)] == 0) stack.push_back(j);
        }
    }
    return order;  // shorter than d iff the graph has a cycle
}

inline bool is_acyclic(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adj) {
    return static_cast<Index>(topological_order(adj).size()) == adj.rows();
}

inline std::pair<MultivariateSeries, SyntheticGroundTruth> generate_stationary_example(
    std::uint64_t seed, const StationaryConfig& cfg = {}) {
    require(cfg.dims >= 1 && cfg.max_lag >= 0 && cfg.n_modes >= 1, "invalid_config", "bad stationary config");
    require(cfg.mode_length > cfg.max_lag, "invalid_config", "mode_length must exceed the max lag");
    require(cfg.weight_low >= 0.0 && cfg.weight_high >= cfg.weight_low, "invalid_config", "bad weight range");
    require(cfg.noise_std >= 0.0 && cfg.burn_in >= 0, "invalid_config", "bad noise or burn-in");

    const int d = cfg.dims, lag = cfg.max_lag;
    std::mt19937_64 rng(seed);
    std::mt19937_64 noise_rng(mix_seed(seed, cfg.noise_stream));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SyntheticGroundTruth truth;
    truth.example = "stationary";
    truth.seed = seed;
    Matrix values(static_cast<Index>(cfg.mode_length) * cfg.n_modes, d);

    for (int mode = 0; mode < cfg.n_modes; ++mode) {
        BoolSlices g = detail::empty_slices(lag, d);
        std::vector<int> perm(static_cast<std::size_t>(d));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int a = 0; a < d; ++a)
            for (int b = a + 1; b < d; ++b)
                if (unit(rng) < cfg.inst_edge_prob) g[static_cast<std::size_t>(lag)](perm[a], perm[b]) = true;
        for (int k = 0; k < lag; ++k)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    if (unit(rng) < cfg.lag_edge_prob) g[static_cast<std::size_t>(k)](i, j) = true;

        std::vector<NodeMechanism> mech(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            auto& m = mech[static_cast<std::size_t>(j)];
            for (int k = 0; k <= lag; ++k)
                for (int i = 0; i < d; ++i)
                    if (g[static_cast<std::size_t>(k)](i, j)) m.parents.emplace_back(k, i);
            const auto np = static_cast<Index>(m.parents.size());
            m.w1.resize(np);
            m.w2.resize(np);
            m.w3.resize(np);
            for (Index p = 0; p < np; ++p) {
                m.w1(p) = detail::signed_uniform(rng, cfg.weight_low, cfg.weight_high);
                m.w2(p) = detail::signed_uniform(rng, cfg.weight_low, cfg.weight_high);
                m.w3(p) = detail::signed_uniform(rng, cfg.weight_low, cfg.weight_high);
            }
        }

        const auto order = topological_order(g[static_cast<std::size_t>(lag)]);
        const int total = cfg.burn_in + cfg.mode_length;
        Matrix sim = Matrix::Zero(total + lag, d);  // first `lag` rows are zero history
        for (int t = lag; t < total + lag; ++t) {
            for (int j : order) {
                const auto& m = mech[static_cast<std::size_t>(j)];
                Vector pa(static_cast<Index>(m.parents.size()));
                for (std::size_t p = 0; p < m.parents.size(); ++p) {
                    const auto [k, i] = m.parents[p];
                    pa(static_cast<Index>(p)) = sim(t - (lag - k), i);
                }
                const double z = cfg.noise_std > 0.0 ? cfg.noise_std * noise(noise_rng) : 0.0;
                sim(t, j) = std::tanh(pa.dot(m.w1)) + std::cos(pa.dot(m.w2)) + std::sin(pa.dot(m.w3)) + z;
            }
        }
        values.middleRows(static_cast<Index>(mode) * cfg.mode_length, cfg.mode_length) =
            sim.bottomRows(cfg.mode_length);
        if (mode > 0) truth.breakpoints.push_back(static_cast<Index>(mode) * cfg.mode_length);
        truth.mode_graphs.push_back(std::move(g));
        truth.mechanisms.push_back(std::move(mech));
    }

    truth.config = {{"dims", cfg.dims},           {"max_lag", cfg.max_lag},
                    {"mode_length", cfg.mode_length}, {"n_modes", cfg.n_modes},
                    {"inst_edge_prob", cfg.inst_edge_prob}, {"lag_edge_prob", cfg.lag_edge_prob},
                    {"weight_low", cfg.weight_low},   {"weight_high", cfg.weight_high},
                    {"noise_std", cfg.noise_std},     {"burn_in", cfg.burn_in},
                    {"noise_stream", cfg.noise_stream}};

    std::vector<std::string> names;
    for (int i = 0; i < d; ++i) names.push_back(concat("x", i + 1));
    return {MultivariateSeries(std::move(values), std::move(names)), std::move(truth)};
}

inline const std::vector<ModeCoefficients>& nonstationary_modes() {
    static const std::vector<ModeCoefficients> modes = {
        {0.05, 1.2, 0.0},
        {0.05, 0.6, 0.6},
        {0.03, 0.6, 1.0},
    };
    return modes;
}

/// Closed-form values of the three-variable process at in-mode time t with
/// the given noise draws.
inline Eigen::Vector3d nonstationary_values(const ModeCoefficients& c, double t, const Eigen::Vector3d& z) {
    const double y1 = std::sin(c.frequency * t) + z(0);
    const double y2 = c.y2_from_y1 * y1 + z(1);
    const double y3 = 0.5 * y1 * y1 + c.y3_from_y2 * y2 + z(2);
    return {y1, y2, y3};
}

inline std::pair<MultivariateSeries, SyntheticGroundTruth> generate_nonstationary_example(
    std::uint64_t seed, const NonstationaryConfig& cfg = {}) {
    require(cfg.mode_length >= 1, "invalid_config", "mode_length must be at least 1");
    require(cfg.noise_std >= 0.0, "invalid_config", "noise std must be nonnegative");
    const auto& modes = nonstationary_modes();
    std::mt19937_64 rng(mix_seed(seed, cfg.noise_stream));
    std::normal_distribution<double> noise(0.0, 1.0);

    SyntheticGroundTruth truth;
    truth.example = "nonstationary";
    truth.seed = seed;
    truth.coefficients = modes;
    const auto n = static_cast<Index>(cfg.mode_length);
    Matrix values(n * static_cast<Index>(modes.size()), 3);
    for (std::size_t m = 0; m < modes.size(); ++m) {
        BoolSlices g = detail::empty_slices(0, 3);
        g[0](0, 1) = true;
        g[0](0, 2) = true;
        if (modes[m].y3_from_y2 != 0.0) g[0](1, 2) = true;
        truth.mode_graphs.push_back(std::move(g));
        for (Index t = 1; t <= n; ++t) {
            Eigen::Vector3d z;
            for (int i = 0; i < 3; ++i) z(i) = cfg.noise_mean + cfg.noise_std * noise(rng);
            values.row(static_cast<Index>(m) * n + t - 1) =
                nonstationary_values(modes[m], static_cast<double>(t), z).transpose();
        }
        if (m > 0) truth.breakpoints.push_back(static_cast<Index>(m) * n);
    }
    truth.config = {{"mode_length", cfg.mode_length},
                    {"noise_mean", cfg.noise_mean},
                    {"noise_std", cfg.noise_std},
                    {"noise_stream", cfg.noise_stream}};
    return {MultivariateSeries(std::move(values), {"y1", "y2", "y3"}), std::move(truth)};
}

inline nlohmann::json to_json(const SyntheticGroundTruth& truth) {
    using nlohmann::json;
    json j;
    j["example"] = truth.example;
    j["seed"] = truth.seed;
    j["breakpoints"] = truth.breakpoints;
    json graphs = json::array();
    for (const auto& g : truth.mode_graphs) {
        json tensor = json::array();
        for (const auto& slice : g) {
            json rows = json::array();
            for (Index i = 0; i < slice.rows(); ++i) {
                json row = json::array();
                for (Index c = 0; c < slice.cols(); ++c) row.push_back(slice(i, c) ? 1 : 0);
                rows.push_back(row);
            }
            tensor.push_back(rows);
        }
        graphs.push_back(tensor);
    }
    j["mode_graphs"] = graphs;
    if (!truth.mechanisms.empty()) {
        json modes = json::array();
        for (const auto& mode : truth.mechanisms) {
            json nodes = json::array();
            for (const auto& m : mode) {
                json parents = json::array();
                for (auto [k, i] : m.parents) parents.push_back({k, i});
                auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
                nodes.push_back({{"parents", parents}, {"w1", vec(m.w1)}, {"w2", vec(m.w2)}, {"w3", vec(m.w3)}});
            }
            modes.push_back(nodes);
        }
        j["mechanisms"] = modes;
    }
    if (!truth.coefficients.empty()) {
        json modes = json::array();
        for (const auto& c : truth.coefficients)
            modes.push_back({{"frequency", c.frequency}, {"y2_from_y1", c.y2_from_y1}, {"y3_from_y2", c.y3_from_y2}});
        j["coefficients"] = modes;
    }
    j["config"] = truth.config;
    return j;
}

/// Reads back the breakpoint list; the only part consumers need.
inline std::vector<Index> truth_breakpoints_from_json(const nlohmann::json& j) {
    require(j.contains("breakpoints") && j["breakpoints"].is_array(), "schema", "truth JSON lacks 'breakpoints'");
    return j["breakpoints"].get<std::vector<Index>>();
}

}  // namespace cdss
