#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "physiomtl/errors.hpp"

namespace physiomtl {

// One task: a subject's raw HRV observations plus its task-wise feature vector.
struct TaskRecord {
    std::string task_id;
    std::vector<double> times;   // hours of day
    std::vector<double> values;  // HRV, ms
    Eigen::VectorXd features;    // task-wise feature vector s_t

    void validate() const {
        if (times.size() != values.size())
            throw InvalidInput(task_id + ": times/values length mismatch");
        if (times.empty())
            throw InvalidInput(task_id + ": task has no observations");
        for (double t : times)
            if (!std::isfinite(t)) throw InvalidInput(task_id + ": non-finite timestamp");
        for (double v : values)
            if (!std::isfinite(v)) throw InvalidInput(task_id + ": non-finite value");
        for (Eigen::Index i = 0; i < features.size(); ++i)
            if (!std::isfinite(features[i])) throw InvalidInput(task_id + ": non-finite feature");
    }
};

// Checks every task and that all feature vectors share one dimension.
inline void validate_tasks(const std::vector<TaskRecord>& tasks) {
    if (tasks.empty()) throw InvalidInput("no tasks");
    const Eigen::Index d = tasks.front().features.size();
    for (const auto& t : tasks) {
        t.validate();
        if (t.features.size() != d)
            throw InvalidInput(t.task_id + ": feature dimension " +
                               std::to_string(t.features.size()) + " != " + std::to_string(d));
    }
}

// Stacks task features into a T x d matrix, row t = s_t.
inline Eigen::MatrixXd feature_matrix(const std::vector<TaskRecord>& tasks) {
    const Eigen::Index d = tasks.empty() ? 0 : tasks.front().features.size();
    Eigen::MatrixXd S(static_cast<Eigen::Index>(tasks.size()), d);
    for (Eigen::Index t = 0; t < S.rows(); ++t) S.row(t) = tasks[static_cast<size_t>(t)].features;
    return S;
}

// Folds a timestamp into [0, 24).
inline double fold_hours(double t) {
    double r = std::fmod(t, 24.0);
    return r < 0 ? r + 24.0 : r;
}

}  // namespace physiomtl
