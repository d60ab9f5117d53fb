#pragma once

// Cosinor model of the diurnal HRV rhythm:
//     hrv(tau) = M + A*sin(2*pi*tau/P + phi)
// linearized (P fixed) as
//     hrv(tau) = w0 + w1*sin(2*pi*tau/P) + w2*cos(2*pi*tau/P)
// with w0 = M (MESOR), w1 = A*cos(phi), w2 = A*sin(phi).

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "physiomtl/errors.hpp"
#include "physiomtl/task.hpp"

namespace physiomtl {

struct RhythmModel {
    double w0 = 0.0;  // MESOR, ms
    double w1 = 0.0;  // A*cos(phi), coefficient on sin(2*pi*tau/P)
    double w2 = 0.0;  // A*sin(phi), coefficient on cos(2*pi*tau/P)
    double period_hours = 24.0;
};

struct PhysioParams {
    double mesor = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;  // radians, in (-pi, pi]
};

/// Design matrix of the linearized cosinor model; row i = [sin, cos, 1] at time i.
inline Eigen::MatrixXd design_matrix(std::span<const double> times, double period_hours) {
    if (times.empty()) throw InvalidInput("design_matrix: empty time list");
    if (!(period_hours > 0.0)) throw InvalidInput("design_matrix: period must be positive");
    const double omega = 2.0 * std::numbers::pi / period_hours;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(times.size()), 3);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double t = times[static_cast<size_t>(i)];
        if (!std::isfinite(t)) throw InvalidInput("design_matrix: non-finite time");
        X(i, 0) = std::sin(omega * t);
        X(i, 1) = std::cos(omega * t);
        X(i, 2) = 1.0;
    }
    return X;
}

/// Least-squares cosinor fit, optionally ridge-stabilized:
/// minimizes ||X*v - y||^2 + ridge_eps*||v||^2.
/// Throws DegenerateFit when the design is rank deficient and ridge_eps == 0.
inline RhythmModel fit_rhythm(std::span<const double> times, std::span<const double> values,
                              double period_hours = 24.0, double ridge_eps = 1e-8,
                              const std::string& task_id = {}) {
    if (times.size() != values.size())
        throw InvalidInput("fit_rhythm: times/values length mismatch");
    if (ridge_eps < 0.0) throw InvalidInput("fit_rhythm: negative ridge");
    const Eigen::MatrixXd X = design_matrix(times, period_hours);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = values[static_cast<size_t>(i)];

    Eigen::Vector3d v;
    if (ridge_eps == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        if (qr.rank() < 3)
            throw DegenerateFit("rank-deficient cosinor design (need >= 3 distinct times mod P)",
                                task_id);
        v = qr.solve(y);
    } else {
        Eigen::Matrix3d A = X.transpose() * X + ridge_eps * Eigen::Matrix3d::Identity();
        v = A.ldlt().solve(X.transpose() * y);
    }
    // design order is (sin, cos, 1); model order is (intercept, sin, cos)
    return RhythmModel{v[2], v[0], v[1], period_hours};
}

inline RhythmModel fit_rhythm(const TaskRecord& record, double period_hours = 24.0,
                              double ridge_eps = 1e-8) {
    return fit_rhythm(record.times, record.values, period_hours, ridge_eps, record.task_id);
}

/// Evaluates the fitted rhythm at the given times.
inline std::vector<double> predict_rhythm(const RhythmModel& m, std::span<const double> times) {
    if (!(m.period_hours > 0.0)) throw InvalidInput("predict_rhythm: period must be positive");
    const double omega = 2.0 * std::numbers::pi / m.period_hours;
    std::vector<double> out(times.size());
    for (size_t i = 0; i < times.size(); ++i)
        out[i] = m.w0 + m.w1 * std::sin(omega * times[i]) + m.w2 * std::cos(omega * times[i]);
    return out;
}

/// (w0, w1, w2) -> (MESOR, amplitude, phase). Zero amplitude maps to phase 0.
inline PhysioParams to_physio(const RhythmModel& m) {
    PhysioParams p;
    p.mesor = m.w0;
    p.amplitude = std::hypot(m.w1, m.w2);
    p.phase = p.amplitude == 0.0 ? 0.0 : std::atan2(m.w2, m.w1);
    return p;
}

inline RhythmModel from_physio(const PhysioParams& p, double period_hours = 24.0) {
    return RhythmModel{p.mesor, p.amplitude * std::cos(p.phase), p.amplitude * std::sin(p.phase),
                       period_hours};
}

}  // namespace physiomtl
