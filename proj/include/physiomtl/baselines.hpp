#pragma once

// Reference predictors: pooled global average, independent per-task lasso
// cosinor fits, and the k-nearest-task transfer rule that turns per-task
// models into out-of-sample predictions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "physiomtl/errors.hpp"
#include "physiomtl/rhythm.hpp"
#include "physiomtl/task.hpp"

namespace physiomtl::baselines {

struct GlobalAverage {
    double mean = 0.0;
};

/// Mean of all HRV values pooled over every training task.
inline GlobalAverage fit_global_average(const std::vector<TaskRecord>& tasks) {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& t : tasks) {
        sum = std::accumulate(t.values.begin(), t.values.end(), sum);
        n += t.values.size();
    }
    if (n == 0) throw InvalidInput("fit_global_average: no observations");
    return GlobalAverage{sum / static_cast<double>(n)};
}

inline std::vector<double> predict(const GlobalAverage& m, std::span<const double> times) {
    return std::vector<double>(times.size(), m.mean);
}

/// Lasso cosinor fit of a single task by cyclic coordinate descent on
/// (w0, w1, w2); the intercept w0 is not penalized. lambda = 0 reduces to
/// the plain least-squares fit.
inline RhythmModel fit_lasso_cosinor(std::span<const double> times,
                                     std::span<const double> values, double lambda,
                                     double period_hours = 24.0, const std::string& task_id = {}) {
    if (!(lambda >= 0.0)) throw InvalidInput("fit_lasso_cosinor: lambda must be >= 0");
    if (lambda == 0.0) return fit_rhythm(times, values, period_hours, 0.0, task_id);
    if (times.size() != values.size())
        throw InvalidInput("fit_lasso_cosinor: times/values length mismatch");

    const Eigen::MatrixXd D = design_matrix(times, period_hours);
    Eigen::MatrixXd X(D.rows(), 3);  // columns (1, sin, cos) to match (w0, w1, w2)
    X.col(0) = D.col(2);
    X.col(1) = D.col(0);
    X.col(2) = D.col(1);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = values[static_cast<size_t>(i)];

    const Eigen::Vector3d col_sq = X.colwise().squaredNorm();
    Eigen::Vector3d w = Eigen::Vector3d::Zero();
    Eigen::VectorXd resid = y;  // y - X w
    const auto soft = [](double z, double t) {
        if (z > t) return z - t;
        if (z < -t) return z + t;
        return 0.0;
    };
    for (int sweep = 0; sweep < 200000; ++sweep) {
        double max_change = 0.0;
        for (int k = 0; k < 3; ++k) {
            if (col_sq[k] == 0.0) continue;
            const double z = X.col(k).dot(resid) + col_sq[k] * w[k];
            const double w_new = k == 0 ? z / col_sq[k] : soft(z, lambda) / col_sq[k];
            const double delta = w_new - w[k];
            if (delta != 0.0) {
                resid -= delta * X.col(k);
                w[k] = w_new;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        if (max_change < 1e-13 * std::max(1.0, w.cwiseAbs().maxCoeff())) break;
    }
    return RhythmModel{w[0], w[1], w[2], period_hours};
}

struct IndependentModel {
    Eigen::MatrixXd weights;         // T x 3
    Eigen::MatrixXd train_features;  // raw task features, row-aligned with weights
    double period_hours = 24.0;
};

/// Per-task lasso cosinor fits. Rank-deficient designs propagate DegenerateFit
/// (with the task id) via the lambda = 0 reduction.
inline IndependentModel fit_independent(const std::vector<TaskRecord>& tasks, double l1_penalty,
                                        double period_hours = 24.0) {
    validate_tasks(tasks);
    IndependentModel m;
    m.period_hours = period_hours;
    m.train_features = feature_matrix(tasks);
    m.weights.resize(static_cast<Eigen::Index>(tasks.size()), 3);
    for (size_t t = 0; t < tasks.size(); ++t) {
        const RhythmModel r =
            fit_lasso_cosinor(tasks[t].times, tasks[t].values, l1_penalty, period_hours,
                              tasks[t].task_id);
        m.weights.row(static_cast<Eigen::Index>(t)) << r.w0, r.w1, r.w2;
    }
    return m;
}

/// Unweighted mean of the k nearest tasks' weight rows, distance
/// <m, |s_i - s_new|> on the given (standardized) features; ties broken by
/// task index ascending.
inline Eigen::Vector3d knn_task_transfer(const Eigen::MatrixXd& train_weights,
                                         const Eigen::MatrixXd& train_features,
                                         const Eigen::VectorXd& s_new, int k,
                                         const Eigen::VectorXd& m) {
    const Eigen::Index T = train_weights.rows();
    if (train_features.rows() != T)
        throw InvalidInput("knn_task_transfer: weights/features row mismatch");
    if (k < 1 || k > T) throw InvalidInput("knn_task_transfer: k out of range [1, T]");
    if (train_features.cols() != s_new.size() || m.size() != s_new.size())
        throw InvalidInput("knn_task_transfer: feature dimension mismatch");

    std::vector<Eigen::Index> order(static_cast<size_t>(T));
    std::iota(order.begin(), order.end(), 0);
    Eigen::VectorXd dist(T);
    for (Eigen::Index i = 0; i < T; ++i)
        dist[i] = (train_features.row(i).transpose() - s_new).cwiseAbs().dot(m);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return dist[a] < dist[b]; });

    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int i = 0; i < k; ++i) acc += train_weights.row(order[static_cast<size_t>(i)]);
    return acc / static_cast<double>(k);
}

}  // namespace physiomtl::baselines
