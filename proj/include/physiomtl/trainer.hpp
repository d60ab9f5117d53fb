#pragma once

// Joint learner: per-task cosinor weights W plus a transport map F from task
// features to cosinor parameters, minimizing
//     (1/2) sum_t ||X_t w_t - y_t||^2 + alpha * sum_{i,j} pi*_{i,j} ||F(s_i) - W_j||^2
// with pi* an entropic OT coupling computed once from the task-feature
// similarity cost and frozen for the whole alternation.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "physiomtl/errors.hpp"
#include "physiomtl/ot.hpp"
#include "physiomtl/rhythm.hpp"
#include "physiomtl/task.hpp"
#include "physiomtl/transport_map.hpp"

namespace physiomtl {

struct FitConfig {
    double alpha = 0.1;          // regularization weight
    double gamma = 0.1;          // Sinkhorn coefficient, in median-normalized cost units
    Eigen::VectorXd m;           // similarity weights; empty selects all-ones
    MapKind map_kind = MapKind::kernel;
    double sigma = 20.0;         // RBF lengthscale, standardized-feature units
    double step_F = 1e-2;
    double step_W = 1e-2;
    int max_outer = 500;
    int max_inner = 10;
    double tol_obj = 1e-7;       // relative objective-decrease stopping threshold
    double ridge_eps = 1e-8;
    int sinkhorn_max_iter = 10000;
    double sinkhorn_tol = 1e-8;
    double period_hours = 24.0;
    long seed = 0;

    void validate() const {
        if (!(alpha >= 0.0)) throw InvalidInput("FitConfig: alpha must be >= 0");
        if (!(gamma > 0.0)) throw InvalidInput("FitConfig: gamma must be > 0");
        if (!(step_F > 0.0) || !(step_W > 0.0))
            throw InvalidInput("FitConfig: step sizes must be > 0");
        if (!(tol_obj > 0.0)) throw InvalidInput("FitConfig: tol_obj must be > 0");
        if (!(ridge_eps >= 0.0)) throw InvalidInput("FitConfig: ridge_eps must be >= 0");
        if (map_kind == MapKind::kernel && !(sigma > 0.0))
            throw InvalidInput("FitConfig: sigma must be > 0 for the kernel map");
        if (max_outer < 1 || max_inner < 1)
            throw InvalidInput("FitConfig: iteration budgets must be >= 1");
        if (!(period_hours > 0.0)) throw InvalidInput("FitConfig: period must be > 0");
        for (Eigen::Index k = 0; k < m.size(); ++k)
            if (!(m[k] >= 0.0)) throw InvalidInput("FitConfig: similarity weights must be >= 0");
    }
};

struct PhysioMtlModel {
    Eigen::MatrixXd weights;  // T x 3, row t = (w0, w1, w2) of task t
    TransportMap map;
    ot::Coupling coupling;
    FitConfig config;
    std::vector<std::string> task_ids;
    Eigen::MatrixXd train_features;  // raw T x d_s
    std::vector<double> objective_trace;

    double period_hours() const { return config.period_hours; }
};

namespace detail {

// Design with columns (1, sin, cos) so X * (w0, w1, w2)^T evaluates the rhythm.
inline Eigen::MatrixXd model_design(std::span<const double> times, double period_hours) {
    const Eigen::MatrixXd D = design_matrix(times, period_hours);
    Eigen::MatrixXd X(D.rows(), 3);
    X.col(0) = D.col(2);
    X.col(1) = D.col(0);
    X.col(2) = D.col(1);
    return X;
}

// Rows are the map inputs: augmented standardized features (linear) or
// kernel vectors against the support (kernel).
inline Eigen::MatrixXd feature_expansion(const TransportMap& map, const Eigen::MatrixXd& S_std) {
    const Eigen::Index T = S_std.rows();
    if (map.kind == MapKind::linear) {
        Eigen::MatrixXd phi(T, S_std.cols() + 1);
        phi << S_std, Eigen::VectorXd::Ones(T);
        return phi;
    }
    Eigen::MatrixXd phi(T, map.support.rows());
    for (Eigen::Index i = 0; i < T; ++i)
        phi.row(i) =
            rbf_kernel_vector(map.support, S_std.row(i).transpose(), map.sigma).transpose();
    return phi;
}

struct TrainContext {
    std::vector<Eigen::MatrixXd> X;  // per task, n_t x 3
    std::vector<Eigen::VectorXd> y;
    Eigen::MatrixXd phi;  // T x p map inputs

    static TrainContext build(const std::vector<TaskRecord>& tasks, const TransportMap& map,
                              double period_hours) {
        TrainContext ctx;
        ctx.X.reserve(tasks.size());
        ctx.y.reserve(tasks.size());
        Eigen::MatrixXd S_std = map.stats.standardize(feature_matrix(tasks));
        for (const auto& t : tasks) {
            ctx.X.push_back(model_design(t.times, period_hours));
            ctx.y.push_back(Eigen::Map<const Eigen::VectorXd>(
                t.values.data(), static_cast<Eigen::Index>(t.values.size())));
        }
        ctx.phi = feature_expansion(map, S_std);
        return ctx;
    }
};

inline double objective_impl(const Eigen::MatrixXd& W, const Eigen::MatrixXd& map_weights,
                             const TrainContext& ctx, const Eigen::MatrixXd& pi, double alpha) {
    double data = 0.0;
    for (size_t t = 0; t < ctx.X.size(); ++t)
        data += 0.5 * (ctx.X[t] * W.row(static_cast<Eigen::Index>(t)).transpose() - ctx.y[t])
                          .squaredNorm();
    const Eigen::MatrixXd P = ctx.phi * map_weights.transpose();  // row i = F(s_i)
    double reg = 0.0;
    for (Eigen::Index i = 0; i < pi.rows(); ++i)
        for (Eigen::Index j = 0; j < pi.cols(); ++j)
            reg += pi(i, j) * (P.row(i) - W.row(j)).squaredNorm();
    return data + alpha * reg;
}

inline Eigen::MatrixXd grad_weights_impl(const Eigen::MatrixXd& W,
                                         const Eigen::MatrixXd& map_weights,
                                         const TrainContext& ctx, const Eigen::MatrixXd& pi,
                                         double alpha) {
    const Eigen::MatrixXd P = ctx.phi * map_weights.transpose();
    const Eigen::VectorXd col_mass = pi.colwise().sum();
    const Eigen::MatrixXd Q = pi.transpose() * P;  // row t = sum_i pi_{i,t} F(s_i)
    Eigen::MatrixXd G(W.rows(), W.cols());
    for (Eigen::Index t = 0; t < W.rows(); ++t) {
        const auto& X = ctx.X[static_cast<size_t>(t)];
        const Eigen::VectorXd r = X * W.row(t).transpose() - ctx.y[static_cast<size_t>(t)];
        G.row(t) = (X.transpose() * r).transpose() +
                   2.0 * alpha * (col_mass[t] * W.row(t) - Q.row(t));
    }
    return G;
}

inline Eigen::MatrixXd grad_map_impl(const Eigen::MatrixXd& W, const Eigen::MatrixXd& map_weights,
                                     const TrainContext& ctx, const Eigen::MatrixXd& pi,
                                     double alpha) {
    const Eigen::MatrixXd P = ctx.phi * map_weights.transpose();
    const Eigen::VectorXd row_mass = pi.rowwise().sum();
    const Eigen::MatrixXd A = row_mass.asDiagonal() * P - pi * W;  // T x 3
    return 2.0 * alpha * A.transpose() * ctx.phi;                  // 3 x p
}

// Exact minimizer of sum_{i,j} pi_{i,j} ||F phi_i - W_j||^2 over F:
// F = (W^T pi^T Phi) (Phi^T diag(pi 1) Phi)^+.
inline Eigen::MatrixXd solve_map_block(const Eigen::MatrixXd& W, const TrainContext& ctx,
                                       const Eigen::MatrixXd& pi) {
    const Eigen::VectorXd row_mass = pi.rowwise().sum();
    const Eigen::MatrixXd A = ctx.phi.transpose() * row_mass.asDiagonal() * ctx.phi;
    const Eigen::MatrixXd Bt = ctx.phi.transpose() * pi * W;  // p x 3
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    return cod.solve(Bt).transpose();  // 3 x p
}

// Backtracking (halving, Armijo 1e-4) gradient descent; mutates x, returns
// the objective after at most max_steps accepted steps. Never increases it.
// The trial step adapts: doubled after an accepted step, halved on
// rejection, carried across calls through `step`.
template <class GradFn, class ObjFn>
double descend(Eigen::MatrixXd& x, double f, int max_steps, double& step, GradFn grad,
               ObjFn obj) {
    for (int s = 0; s < max_steps; ++s) {
        const Eigen::MatrixXd g = grad(x);
        const double n2 = g.squaredNorm();
        if (!(n2 > 1e-30)) break;
        bool accepted = false;
        while (step > 1e-20) {
            Eigen::MatrixXd cand = x - step * g;
            const double fc = obj(cand);
            if (std::isfinite(fc) && fc <= f - 1e-4 * step * n2) {
                x = std::move(cand);
                f = fc;
                accepted = true;
                step = std::min(step * 2.0, 1e8);
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    return f;
}

}  // namespace detail

/// Independent per-task cosinor fits; rows are (w0, w1, w2).
inline Eigen::MatrixXd init_weights(const std::vector<TaskRecord>& tasks, double ridge_eps = 1e-8,
                                    double period_hours = 24.0) {
    validate_tasks(tasks);
    Eigen::MatrixXd W(static_cast<Eigen::Index>(tasks.size()), 3);
    for (size_t t = 0; t < tasks.size(); ++t) {
        const RhythmModel m = fit_rhythm(tasks[t], period_hours, ridge_eps);
        W.row(static_cast<Eigen::Index>(t)) << m.w0, m.w1, m.w2;
    }
    return W;
}

namespace detail {

inline void check_shapes(const Eigen::MatrixXd& W, const ot::Coupling& coupling,
                         const std::vector<TaskRecord>& tasks) {
    const auto T = static_cast<Eigen::Index>(tasks.size());
    if (W.rows() != T || W.cols() != 3) throw InvalidInput("weights must be T x 3");
    if (coupling.entries.rows() != T || coupling.entries.cols() != T)
        throw InvalidInput("coupling must be T x T");
}

}  // namespace detail

/// Eq.-14 objective value for the given weights, map, and frozen coupling.
inline double objective(const Eigen::MatrixXd& W, const TransportMap& map,
                        const ot::Coupling& coupling, const std::vector<TaskRecord>& tasks,
                        double alpha, double period_hours = 24.0) {
    validate_tasks(tasks);
    detail::check_shapes(W, coupling, tasks);
    const auto ctx = detail::TrainContext::build(tasks, map, period_hours);
    return detail::objective_impl(W, map.weights, ctx, coupling.entries, alpha);
}

/// Gradient of the objective with respect to the map's weight matrix.
inline Eigen::MatrixXd grad_map(const Eigen::MatrixXd& W, const TransportMap& map,
                                const ot::Coupling& coupling,
                                const std::vector<TaskRecord>& tasks, double alpha,
                                double period_hours = 24.0) {
    validate_tasks(tasks);
    detail::check_shapes(W, coupling, tasks);
    const auto ctx = detail::TrainContext::build(tasks, map, period_hours);
    return detail::grad_map_impl(W, map.weights, ctx, coupling.entries, alpha);
}

/// Gradient of the objective with respect to the per-task weight rows.
inline Eigen::MatrixXd grad_weights(const Eigen::MatrixXd& W, const TransportMap& map,
                                    const ot::Coupling& coupling,
                                    const std::vector<TaskRecord>& tasks, double alpha,
                                    double period_hours = 24.0) {
    validate_tasks(tasks);
    detail::check_shapes(W, coupling, tasks);
    const auto ctx = detail::TrainContext::build(tasks, map, period_hours);
    return detail::grad_weights_impl(W, map.weights, ctx, coupling.entries, alpha);
}

// Everything fit derives from the task features before the alternation:
// standardization, the similarity cost (raw and median-normalized), and the
// frozen Sinkhorn coupling.
struct CouplingBuild {
    FeatureStats stats;
    Eigen::MatrixXd features_std;
    Eigen::MatrixXd cost;             // <m, |s_i - s_j|> on standardized features
    double cost_scale = 1.0;          // median off-diagonal cost, 1 when zero
    Eigen::MatrixXd cost_normalized;  // cost / cost_scale
    ot::Coupling coupling;
};

inline CouplingBuild compute_task_coupling(const std::vector<TaskRecord>& tasks,
                                           const FitConfig& config) {
    validate_tasks(tasks);
    CouplingBuild b;
    const Eigen::MatrixXd S = feature_matrix(tasks);
    b.stats = FeatureStats::fit(S);
    b.features_std = b.stats.standardize(S);
    const Eigen::VectorXd m =
        config.m.size() == 0 ? Eigen::VectorXd::Ones(S.cols()) : config.m;
    if (m.size() != S.cols())
        throw InvalidInput("similarity weight vector has dimension " + std::to_string(m.size()) +
                           ", features have " + std::to_string(S.cols()));
    b.cost = ot::cost_matrix(b.features_std, m);
    const double med = ot::median_off_diagonal(b.cost);
    b.cost_scale = med > 0.0 ? med : 1.0;
    b.cost_normalized = b.cost / b.cost_scale;
    b.coupling = ot::sinkhorn(b.cost_normalized, config.gamma, config.sinkhorn_max_iter,
                              config.sinkhorn_tol);
    return b;
}

/// Joint fit of W and F (Algorithm: init by per-task regression, freeze the
/// Sinkhorn coupling, then alternate a map update and weight updates until
/// the objective decrease stalls). The objective trace is recorded per outer
/// iteration, starting with the initial value, and is non-increasing.
inline PhysioMtlModel fit(const std::vector<TaskRecord>& tasks, const FitConfig& config = {}) {
    config.validate();
    validate_tasks(tasks);

    PhysioMtlModel model;
    model.config = config;
    model.train_features = feature_matrix(tasks);
    for (const auto& t : tasks) model.task_ids.push_back(t.task_id);

    CouplingBuild cb = compute_task_coupling(tasks, config);
    model.coupling = cb.coupling;

    model.map.kind = config.map_kind;
    model.map.stats = cb.stats;
    if (config.map_kind == MapKind::kernel) {
        model.map.support = cb.features_std;
        model.map.sigma = config.sigma;
        model.map.weights =
            Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(tasks.size()));
    } else {
        model.map.weights = Eigen::MatrixXd::Zero(3, cb.features_std.cols() + 1);
    }

    model.weights = init_weights(tasks, config.ridge_eps, config.period_hours);

    const auto ctx = detail::TrainContext::build(tasks, model.map, config.period_hours);
    const Eigen::MatrixXd& pi = model.coupling.entries;
    Eigen::MatrixXd& W = model.weights;
    Eigen::MatrixXd& F = model.map.weights;

    double f = detail::objective_impl(W, F, ctx, pi, config.alpha);
    if (!std::isfinite(f)) throw DivergedSolve("non-finite initial objective", 0);
    model.objective_trace.push_back(f);

    double step_F = config.step_F;
    double step_W = config.step_W;
    for (int outer = 1; outer <= config.max_outer; ++outer) {
        const double f_prev = f;

        if (config.map_kind == MapKind::linear) {
            Eigen::MatrixXd F_new = detail::solve_map_block(W, ctx, pi);
            const double f_new = detail::objective_impl(W, F_new, ctx, pi, config.alpha);
            if (std::isfinite(f_new) && f_new <= f) {
                F = std::move(F_new);
                f = f_new;
            }
        } else {
            f = detail::descend(
                F, f, config.max_inner, step_F,
                [&](const Eigen::MatrixXd& x) {
                    return detail::grad_map_impl(W, x, ctx, pi, config.alpha);
                },
                [&](const Eigen::MatrixXd& x) {
                    return detail::objective_impl(W, x, ctx, pi, config.alpha);
                });
        }

        f = detail::descend(
            W, f, config.max_inner, step_W,
            [&](const Eigen::MatrixXd& x) {
                return detail::grad_weights_impl(x, F, ctx, pi, config.alpha);
            },
            [&](const Eigen::MatrixXd& x) {
                return detail::objective_impl(x, F, ctx, pi, config.alpha);
            });

        if (!std::isfinite(f)) throw DivergedSolve("non-finite objective", outer);
        model.objective_trace.push_back(f);
        if (f_prev - f < config.tol_obj * std::max(1.0, std::abs(f_prev))) break;
    }
    return model;
}

/// Predicts HRV for an unseen task from its raw feature vector alone.
inline std::vector<double> predict_unseen(const PhysioMtlModel& model,
                                          const Eigen::VectorXd& s_new,
                                          std::span<const double> times) {
    if (s_new.size() != model.map.feature_dim())
        throw InvalidInput("predict_unseen: feature vector has dimension " +
                           std::to_string(s_new.size()) + ", model expects " +
                           std::to_string(model.map.feature_dim()));
    const Eigen::VectorXd w = apply_map_raw(model.map, s_new);
    const RhythmModel rm{w[0], w[1], w[2], model.period_hours()};
    return predict_rhythm(rm, times);
}

// ---- JSON serialization ----

inline void to_json(nlohmann::json& j, const FitConfig& c) {
    j = nlohmann::json{{"alpha", c.alpha},
                       {"gamma", c.gamma},
                       {"m", detail::vector_to_json(c.m)},
                       {"map_kind", to_string(c.map_kind)},
                       {"sigma", c.sigma},
                       {"step_F", c.step_F},
                       {"step_W", c.step_W},
                       {"max_outer", c.max_outer},
                       {"max_inner", c.max_inner},
                       {"tol_obj", c.tol_obj},
                       {"ridge_eps", c.ridge_eps},
                       {"sinkhorn_max_iter", c.sinkhorn_max_iter},
                       {"sinkhorn_tol", c.sinkhorn_tol},
                       {"period_hours", c.period_hours},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, FitConfig& c) {
    FitConfig d;
    c.alpha = j.value("alpha", d.alpha);
    c.gamma = j.value("gamma", d.gamma);
    c.m = j.contains("m") ? detail::vector_from_json(j.at("m")) : Eigen::VectorXd{};
    c.map_kind = map_kind_from_string(j.value("map_kind", to_string(d.map_kind)));
    c.sigma = j.value("sigma", d.sigma);
    c.step_F = j.value("step_F", d.step_F);
    c.step_W = j.value("step_W", d.step_W);
    c.max_outer = j.value("max_outer", d.max_outer);
    c.max_inner = j.value("max_inner", d.max_inner);
    c.tol_obj = j.value("tol_obj", d.tol_obj);
    c.ridge_eps = j.value("ridge_eps", d.ridge_eps);
    c.sinkhorn_max_iter = j.value("sinkhorn_max_iter", d.sinkhorn_max_iter);
    c.sinkhorn_tol = j.value("sinkhorn_tol", d.sinkhorn_tol);
    c.period_hours = j.value("period_hours", d.period_hours);
    c.seed = j.value("seed", d.seed);
}

namespace ot_json {
inline void to_json(nlohmann::json& j, const ot::Coupling& c) {
    j = nlohmann::json{{"entries", detail::matrix_to_json(c.entries)},
                       {"row_marginal", detail::vector_to_json(c.row_marginal)},
                       {"col_marginal", detail::vector_to_json(c.col_marginal)},
                       {"converged", c.converged},
                       {"iterations", c.iterations}};
}
inline void from_json(const nlohmann::json& j, ot::Coupling& c) {
    c.entries = detail::matrix_from_json(j.at("entries"));
    c.row_marginal = detail::vector_from_json(j.at("row_marginal"));
    c.col_marginal = detail::vector_from_json(j.at("col_marginal"));
    c.converged = j.value("converged", true);
    c.iterations = j.value("iterations", 0);
}
}  // namespace ot_json

inline nlohmann::json model_to_json(const PhysioMtlModel& model) {
    nlohmann::json coupling;
    ot_json::to_json(coupling, model.coupling);
    return nlohmann::json{{"format", "physiomtl-model"},
                          {"version", 1},
                          {"task_ids", model.task_ids},
                          {"weights", detail::matrix_to_json(model.weights)},
                          {"map", model.map},
                          {"coupling", std::move(coupling)},
                          {"config", model.config},
                          {"train_features", detail::matrix_to_json(model.train_features)},
                          {"objective_trace", model.objective_trace}};
}

inline PhysioMtlModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "physiomtl-model")
        throw InvalidInput("not a physiomtl model file");
    PhysioMtlModel model;
    model.task_ids = j.at("task_ids").get<std::vector<std::string>>();
    model.weights = detail::matrix_from_json(j.at("weights"));
    model.map = j.at("map").get<TransportMap>();
    ot_json::from_json(j.at("coupling"), model.coupling);
    model.config = j.at("config").get<FitConfig>();
    model.train_features = detail::matrix_from_json(j.at("train_features"));
    model.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    return model;
}

}  // namespace physiomtl
