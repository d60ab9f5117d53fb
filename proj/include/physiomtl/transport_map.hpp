#pragma once

// Parameterized transport maps from task-feature space to cosinor-parameter
// space. Two families: affine (weight matrix times the feature vector with a
// trailing bias entry) and RBF-kernel (weight matrix times the kernel vector
// against a fixed support set). Maps act on standardized features and carry
// the standardization statistics needed to accept raw features.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "physiomtl/errors.hpp"

namespace physiomtl {

// Per-dimension z-score statistics. Zero-variance dimensions keep std 1 so
// standardization stays defined.
struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stdev;

    static FeatureStats fit(const Eigen::MatrixXd& features) {
        if (features.rows() == 0) throw InvalidInput("FeatureStats: no rows");
        FeatureStats s;
        s.mean = features.colwise().mean();
        const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
        s.stdev = (centered.array().square().colwise().mean()).sqrt();
        for (Eigen::Index k = 0; k < s.stdev.size(); ++k)
            if (s.stdev[k] == 0.0) s.stdev[k] = 1.0;
        return s;
    }

    Eigen::VectorXd standardize(const Eigen::VectorXd& s) const {
        if (s.size() != mean.size())
            throw InvalidInput("standardize: feature dimension mismatch");
        return (s - mean).array() / stdev.array();
    }
    Eigen::MatrixXd standardize(const Eigen::MatrixXd& S) const {
        if (S.cols() != mean.size())
            throw InvalidInput("standardize: feature dimension mismatch");
        return (S.rowwise() - mean.transpose()).array().rowwise() / stdev.transpose().array();
    }
};

enum class MapKind { linear, kernel };

inline std::string to_string(MapKind k) { return k == MapKind::linear ? "linear" : "kernel"; }
inline MapKind map_kind_from_string(const std::string& s) {
    if (s == "linear") return MapKind::linear;
    if (s == "kernel") return MapKind::kernel;
    throw InvalidInput("unknown map kind '" + s + "'");
}

/// RBF kernel vector against a support set; entry t = exp(-||s_t - s||^2 / (2 sigma^2)).
inline Eigen::VectorXd rbf_kernel_vector(const Eigen::MatrixXd& support, const Eigen::VectorXd& s,
                                         double sigma) {
    if (!(sigma > 0.0)) throw InvalidInput("rbf_kernel_vector: sigma must be positive");
    if (support.rows() == 0) throw InvalidInput("rbf_kernel_vector: empty support");
    if (support.cols() != s.size())
        throw InvalidInput("rbf_kernel_vector: feature dimension mismatch");
    return (-(support.rowwise() - s.transpose()).rowwise().squaredNorm() /
            (2.0 * sigma * sigma)).array().exp();
}

struct TransportMap {
    MapKind kind = MapKind::linear;
    // linear: d_w x (d_s + 1), last column multiplies the bias entry.
    // kernel: d_w x T, column t paired with support row t.
    Eigen::MatrixXd weights;
    Eigen::MatrixXd support;  // kernel only: T x d_s standardized features
    double sigma = 0.0;       // kernel only
    FeatureStats stats;
    std::vector<std::string> feature_names;

    Eigen::Index feature_dim() const { return stats.mean.size(); }
};

/// Applies the map to an already-standardized feature vector.
inline Eigen::VectorXd apply_map(const TransportMap& map, const Eigen::VectorXd& s_std) {
    if (map.kind == MapKind::linear) {
        if (map.weights.cols() != s_std.size() + 1)
            throw InvalidInput("apply_map: feature dimension mismatch");
        Eigen::VectorXd aug(s_std.size() + 1);
        aug << s_std, 1.0;
        return map.weights * aug;
    }
    if (map.support.rows() != map.weights.cols())
        throw InvalidInput("apply_map: kernel weights/support mismatch");
    return map.weights * rbf_kernel_vector(map.support, s_std, map.sigma);
}

/// Standardizes a raw feature vector with the map's stored statistics, then applies.
inline Eigen::VectorXd apply_map_raw(const TransportMap& map, const Eigen::VectorXd& s_raw) {
    return apply_map(map, map.stats.standardize(s_raw));
}

// ---- JSON serialization ----

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw InvalidInput("json matrix: expected array of rows");
    const Eigen::Index n = static_cast<Eigen::Index>(j.size());
    if (n == 0) return {};
    const Eigen::Index m = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd M(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(j[static_cast<size_t>(i)].size()) != m)
            throw InvalidInput("json matrix: ragged rows");
        for (Eigen::Index k = 0; k < m; ++k)
            M(i, k) = j[static_cast<size_t>(i)][static_cast<size_t>(k)].get<double>();
    }
    return M;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<size_t>(i)].get<double>();
    return v;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const FeatureStats& s) {
    j = nlohmann::json{{"mean", detail::vector_to_json(s.mean)},
                       {"std", detail::vector_to_json(s.stdev)}};
}

inline void from_json(const nlohmann::json& j, FeatureStats& s) {
    s.mean = detail::vector_from_json(j.at("mean"));
    s.stdev = detail::vector_from_json(j.at("std"));
}

inline void to_json(nlohmann::json& j, const TransportMap& m) {
    j = nlohmann::json{{"kind", to_string(m.kind)},
                       {"weights", detail::matrix_to_json(m.weights)},
                       {"feature_stats", m.stats},
                       {"feature_names", m.feature_names}};
    if (m.kind == MapKind::kernel) {
        j["support"] = detail::matrix_to_json(m.support);
        j["sigma"] = m.sigma;
    }
}

inline void from_json(const nlohmann::json& j, TransportMap& m) {
    m.kind = map_kind_from_string(j.at("kind").get<std::string>());
    m.weights = detail::matrix_from_json(j.at("weights"));
    m.stats = j.at("feature_stats").get<FeatureStats>();
    m.feature_names = j.value("feature_names", std::vector<std::string>{});
    if (m.kind == MapKind::kernel) {
        m.support = detail::matrix_from_json(j.at("support"));
        m.sigma = j.at("sigma").get<double>();
        if (!(m.sigma > 0.0)) throw InvalidInput("transport map: sigma must be positive");
    } else {
        m.support = {};
        m.sigma = 0.0;
    }
}

}  // namespace physiomtl
