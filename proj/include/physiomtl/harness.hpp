#pragma once

// Reproducible experiments: repeated random-split RMSE evaluation, the
// divergence-sweep generalization benchmark, and counterfactual feature
// sweeps through a fitted model. All randomness derives from the seed
// arguments; repeats use seeds pre-drawn from the master seed so a failed
// repeat never shifts the later ones.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "physiomtl/baselines.hpp"
#include "physiomtl/csv.hpp"
#include "physiomtl/errors.hpp"
#include "physiomtl/synth.hpp"
#include "physiomtl/task.hpp"
#include "physiomtl/trainer.hpp"

namespace physiomtl::harness {

inline double rmse(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.empty() || predicted.size() != actual.size())
        throw InvalidInput("rmse: inputs must be nonempty and equally sized");
    double s = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - actual[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(predicted.size()));
}

struct MethodConfig {
    FitConfig fit;
    double lasso_lambda = 0.9;  // per-task lasso penalty for the single_lasso baseline
    int knn_k = 5;              // nearest-task count, clamped to the training-set size
};

inline void to_json(nlohmann::json& j, const MethodConfig& c) {
    j = nlohmann::json{{"fit", c.fit}, {"lasso_lambda", c.lasso_lambda}, {"knn_k", c.knn_k}};
}

// Prediction for one unseen task from its raw feature vector.
using Predictor =
    std::function<std::vector<double>(const Eigen::VectorXd&, std::span<const double>)>;

inline const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names{"global_average", "single_lasso", "knn_transfer",
                                                "physiomtl_linear", "physiomtl_kernel"};
    return names;
}

/// Fits a named method on the training tasks and returns its out-of-sample
/// predictor. Per-task baselines transfer to unseen tasks via the k-nearest
/// task rule on standardized features.
inline Predictor fit_method(const std::string& name, const std::vector<TaskRecord>& train,
                            const MethodConfig& cfg = {}) {
    const double period = cfg.fit.period_hours;
    if (name == "global_average") {
        const baselines::GlobalAverage ga = baselines::fit_global_average(train);
        return [ga](const Eigen::VectorXd&, std::span<const double> times) {
            return baselines::predict(ga, times);
        };
    }
    if (name == "single_lasso" || name == "knn_transfer") {
        validate_tasks(train);
        const Eigen::MatrixXd weights =
            name == "single_lasso"
                ? baselines::fit_independent(train, cfg.lasso_lambda, period).weights
                : init_weights(train, cfg.fit.ridge_eps, period);
        const FeatureStats stats = FeatureStats::fit(feature_matrix(train));
        const Eigen::MatrixXd S_std = stats.standardize(feature_matrix(train));
        const Eigen::VectorXd m = cfg.fit.m.size() == 0
                                      ? Eigen::VectorXd::Ones(S_std.cols())
                                      : cfg.fit.m;
        const int k = std::min<int>(cfg.knn_k, static_cast<int>(train.size()));
        return [=](const Eigen::VectorXd& s, std::span<const double> times) {
            const Eigen::Vector3d w =
                baselines::knn_task_transfer(weights, S_std, stats.standardize(s), k, m);
            return predict_rhythm(RhythmModel{w[0], w[1], w[2], period}, times);
        };
    }
    if (name == "physiomtl_linear" || name == "physiomtl_kernel") {
        FitConfig fc = cfg.fit;
        fc.map_kind = name == "physiomtl_linear" ? MapKind::linear : MapKind::kernel;
        const PhysioMtlModel model = fit(train, fc);
        return [model](const Eigen::VectorXd& s, std::span<const double> times) {
            return predict_unseen(model, s, times);
        };
    }
    throw InvalidInput("unknown method '" + name + "'");
}

struct ExperimentReport {
    std::string method;
    double train_fraction = 0.0;
    int repeats_requested = 0;
    std::uint64_t seed = 0;
    std::vector<double> rmses;          // one per completed repeat
    std::vector<std::string> failures;  // messages for aborted repeats
    MethodConfig config;

    double mean() const {
        if (rmses.empty()) return std::numeric_limits<double>::quiet_NaN();
        return std::accumulate(rmses.begin(), rmses.end(), 0.0) /
               static_cast<double>(rmses.size());
    }
    double stdev() const {
        if (rmses.size() < 2) return 0.0;
        const double mu = mean();
        double s = 0.0;
        for (double r : rmses) s += (r - mu) * (r - mu);
        return std::sqrt(s / static_cast<double>(rmses.size() - 1));
    }
};

inline void to_json(nlohmann::json& j, const ExperimentReport& r) {
    j = nlohmann::json{{"method", r.method},
                       {"train_fraction", r.train_fraction},
                       {"repeats", r.repeats_requested},
                       {"seed", r.seed},
                       {"rmses", r.rmses},
                       {"mean", r.mean()},
                       {"std", r.stdev()},
                       {"failures", r.failures},
                       {"config", r.config}};
}

namespace detail {

inline std::vector<std::uint64_t> repeat_seeds(std::uint64_t seed, int repeats) {
    std::mt19937_64 master(seed);
    std::vector<std::uint64_t> out(static_cast<size_t>(repeats));
    for (auto& s : out) s = master();
    return out;
}

// pooled RMSE over all observations of the held-out tasks, each predicted at
// its own measurement times from its feature vector alone
inline double pooled_test_rmse(const Predictor& predict,
                               const std::vector<TaskRecord>& test_tasks) {
    double sum_sq = 0.0;
    size_t n = 0;
    for (const auto& task : test_tasks) {
        const std::vector<double> pred = predict(task.features, task.times);
        for (size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - task.values[i];
            sum_sq += d * d;
        }
        n += pred.size();
    }
    if (n == 0) throw InvalidInput("pooled_test_rmse: no held-out observations");
    return std::sqrt(sum_sq / static_cast<double>(n));
}

}  // namespace detail

/// Repeated random-split evaluation (the Tables-2/3 protocol): per repeat,
/// fit on a seeded random train fraction and report the pooled RMSE over all
/// held-out observations. Failed repeats are recorded, not silently skipped.
inline ExperimentReport run_split_experiment(const std::vector<TaskRecord>& tasks,
                                             const std::string& method, double train_fraction,
                                             int repeats, std::uint64_t seed,
                                             const MethodConfig& cfg = {}) {
    validate_tasks(tasks);
    if (tasks.size() < 2)
        throw InvalidInput("run_split_experiment: need at least 2 tasks");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidInput("run_split_experiment: train_fraction must be in (0, 1)");
    if (repeats < 1) throw InvalidInput("run_split_experiment: repeats must be >= 1");
    if (std::find(method_names().begin(), method_names().end(), method) ==
        method_names().end())
        throw InvalidInput("unknown method '" + method + "'");

    ExperimentReport report;
    report.method = method;
    report.train_fraction = train_fraction;
    report.repeats_requested = repeats;
    report.seed = seed;
    report.config = cfg;

    const auto T = static_cast<int>(tasks.size());
    const int n_train = std::clamp(
        static_cast<int>(std::lround(train_fraction * T)), 1, T - 1);

    const auto seeds = detail::repeat_seeds(seed, repeats);
    for (int r = 0; r < repeats; ++r) {
        std::mt19937_64 rng(seeds[static_cast<size_t>(r)]);
        std::vector<size_t> idx(tasks.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<TaskRecord> train, test;
        for (int i = 0; i < T; ++i)
            (i < n_train ? train : test).push_back(tasks[idx[static_cast<size_t>(i)]]);
        try {
            const Predictor p = fit_method(method, train, cfg);
            report.rmses.push_back(detail::pooled_test_rmse(p, test));
        } catch (const Error& e) {
            report.failures.push_back("repeat " + std::to_string(r) + ": " + e.what());
        }
    }
    return report;
}

struct SweepRow {
    double shift = 0.0;
    double divergence = 0.0;
    std::string method;
    double rmse = 0.0;
    std::uint64_t seed = 0;
};

/// Fig.-3-style benchmark: for each feature shift, generate seeded synthetic
/// train/test splits, measure the train/test feature divergence, and evaluate
/// every method on the shifted test tasks. One row per (shift, seed, method).
inline std::vector<SweepRow> divergence_sweep(const synth::SynthConfig& base,
                                              const std::vector<double>& shift_grid,
                                              const std::vector<std::string>& methods,
                                              int seeds_per_shift, std::uint64_t seed,
                                              const MethodConfig& cfg = {}) {
    if (shift_grid.empty()) throw InvalidInput("divergence_sweep: empty shift grid");
    if (seeds_per_shift < 1) throw InvalidInput("divergence_sweep: seeds_per_shift must be >= 1");
    const auto seeds =
        detail::repeat_seeds(seed, static_cast<int>(shift_grid.size()) * seeds_per_shift);

    std::vector<SweepRow> rows;
    size_t seed_idx = 0;
    for (double shift : shift_grid) {
        for (int k = 0; k < seeds_per_shift; ++k) {
            synth::SynthConfig c = base;
            c.seed = seeds[seed_idx++];
            const auto [train, test] = synth::generate_shifted_split(c, shift);
            const double div = synth::feature_divergence(train, test, c.seed);
            for (const auto& method : methods) {
                const Predictor p = fit_method(method, train, cfg);
                rows.push_back({shift, div, method, detail::pooled_test_rmse(p, test), c.seed});
            }
        }
    }
    return rows;
}

/// Least-squares slope of RMSE against divergence for one method's rows.
inline double rmse_divergence_slope(const std::vector<SweepRow>& rows,
                                    const std::string& method) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.method != method) continue;
        sx += r.divergence;
        sy += r.rmse;
        sxx += r.divergence * r.divergence;
        sxy += r.divergence * r.rmse;
        ++n;
    }
    if (n < 2) throw InvalidInput("rmse_divergence_slope: not enough rows for '" + method + "'");
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0)
        throw InvalidInput("rmse_divergence_slope: degenerate divergence values");
    return (n * sxy - sx * sy) / denom;
}

inline double mean_rmse_at_shift(const std::vector<SweepRow>& rows, const std::string& method,
                                 double shift) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.method == method && r.shift == shift) {
            s += r.rmse;
            ++n;
        }
    if (n == 0) throw InvalidInput("mean_rmse_at_shift: no rows for '" + method + "'");
    return s / n;
}

struct Curve {
    std::string label;
    std::vector<double> times;
    std::vector<double> values;
};

inline Eigen::VectorXd feature_median(const Eigen::MatrixXd& features) {
    Eigen::VectorXd med(features.cols());
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
        std::vector<double> col(features.col(c).data(),
                                features.col(c).data() + features.rows());
        std::sort(col.begin(), col.end());
        const size_t n = col.size();
        med[c] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return med;
}

/// Counterfactual feature sweep: hold the baseline vector fixed, vary one
/// named dimension over the grid, and emit the predicted curve for each
/// setting. The baseline curve comes first, so a grid of g values yields
/// g + 1 labeled curves.
inline std::vector<Curve> counterfactual_sweep(const PhysioMtlModel& model,
                                               const Eigen::VectorXd& baseline,
                                               const std::string& dim_name,
                                               const std::vector<double>& grid,
                                               const std::vector<double>& times) {
    const auto& names = model.map.feature_names;
    const auto it = std::find(names.begin(), names.end(), dim_name);
    if (it == names.end())
        throw InvalidInput("counterfactual_sweep: unknown feature dimension '" + dim_name + "'");
    const auto dim = static_cast<Eigen::Index>(it - names.begin());
    if (baseline.size() != static_cast<Eigen::Index>(names.size()))
        throw InvalidInput("counterfactual_sweep: baseline feature dimension mismatch");

    std::vector<Curve> curves;
    curves.push_back({"baseline", times, predict_unseen(model, baseline, times)});
    for (double v : grid) {
        Eigen::VectorXd s = baseline;
        s[dim] = v;
        char label[64];
        std::snprintf(label, sizeof label, "%s=%g", dim_name.c_str(), v);
        curves.push_back({label, times, predict_unseen(model, s, times)});
    }
    return curves;
}

// ---- file emission ----

inline void write_report_csv(const std::filesystem::path& path,
                             const std::vector<ExperimentReport>& reports) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write " + path.string());
    out << "method,train_fraction,repeats,mean_rmse,std_rmse,completed,failed\n";
    for (const auto& r : reports)
        out << r.method << ',' << csv::format_double(r.train_fraction) << ','
            << r.repeats_requested << ',' << csv::format_double(r.mean()) << ','
            << csv::format_double(r.stdev()) << ',' << r.rmses.size() << ','
            << r.failures.size() << '\n';
}

inline void write_sweep_csv(const std::filesystem::path& path,
                            const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write " + path.string());
    out << "shift,divergence,method,rmse,seed\n";
    for (const auto& r : rows)
        out << csv::format_double(r.shift) << ',' << csv::format_double(r.divergence) << ','
            << r.method << ',' << csv::format_double(r.rmse) << ',' << r.seed << '\n';
}

inline void write_curves_csv(const std::filesystem::path& path,
                             const std::vector<Curve>& curves) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write " + path.string());
    out << "label,time_hours,hrv_ms\n";
    for (const auto& c : curves)
        for (size_t i = 0; i < c.times.size(); ++i)
            out << c.label << ',' << csv::format_double(c.times[i]) << ','
                << csv::format_double(c.values[i]) << '\n';
}

}  // namespace physiomtl::harness
