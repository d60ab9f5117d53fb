#pragma once

// Synthetic benchmark: tasks whose cosinor parameters are affine in a scalar
// task feature s ~ U[p, q],
//     y = m(s) + A(s) * sin(2*pi*tau/P + phi(s)) + e,  e ~ N(0, sigma^2),
// plus the divergence-controlled train/test splits used to probe
// out-of-distribution generalization.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "physiomtl/errors.hpp"
#include "physiomtl/ot.hpp"
#include "physiomtl/task.hpp"

namespace physiomtl::synth {

struct SynthConfig {
    double p = 0.0, q = 10.0;  // support of the task-feature distribution
    double a_m = 50.0, b_m = 2.0;
    double a_A = 10.0, b_A = 1.0;
    double a_phi = 0.0, b_phi = 0.1;
    double sigma_noise = 2.0;
    double period = 24.0;
    int n_per_task = 20;
    int n_train = 10;
    int n_test = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (p > q) throw InvalidInput("SynthConfig: p must be <= q");
        if (!(sigma_noise >= 0.0)) throw InvalidInput("SynthConfig: sigma_noise must be >= 0");
        if (n_per_task < 1 || n_train < 1 || n_test < 0)
            throw InvalidInput("SynthConfig: counts must be positive");
        if (!(period > 0.0)) throw InvalidInput("SynthConfig: period must be > 0");
    }
};

struct GroundTruth {
    double mesor, amplitude, phase;
};

inline GroundTruth ground_truth_params(const SynthConfig& c, double s) {
    return GroundTruth{c.a_m + c.b_m * s, c.a_A + c.b_A * s, c.a_phi + c.b_phi * s};
}

/// Linearized ground-truth weights (w0, w1, w2) for feature value s.
inline Eigen::Vector3d ground_truth_weights(const SynthConfig& c, double s) {
    const GroundTruth g = ground_truth_params(c, s);
    return {g.mesor, g.amplitude * std::cos(g.phase), g.amplitude * std::sin(g.phase)};
}

namespace detail {

inline TaskRecord make_task(const SynthConfig& c, const std::string& id, double lo, double hi,
                            std::mt19937_64& rng) {
    std::uniform_real_distribution<double> feat(lo, hi);
    std::uniform_real_distribution<double> time(0.0, c.period);
    std::normal_distribution<double> noise(0.0, 1.0);

    TaskRecord t;
    t.task_id = id;
    const double s = lo == hi ? lo : feat(rng);
    t.features = Eigen::VectorXd::Constant(1, s);
    const GroundTruth g = ground_truth_params(c, s);
    const double omega = 2.0 * std::numbers::pi / c.period;
    t.times.resize(static_cast<size_t>(c.n_per_task));
    t.values.resize(static_cast<size_t>(c.n_per_task));
    for (int i = 0; i < c.n_per_task; ++i) {
        const double tau = time(rng);
        t.times[static_cast<size_t>(i)] = tau;
        t.values[static_cast<size_t>(i)] =
            g.mesor + g.amplitude * std::sin(omega * tau + g.phase) +
            c.sigma_noise * noise(rng);
    }
    return t;
}

inline std::string padded(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%03d", prefix, i);
    return buf;
}

}  // namespace detail

/// n_train + n_test tasks with features drawn from U[p, q]; deterministic per seed.
inline std::vector<TaskRecord> generate_tasks(const SynthConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::vector<TaskRecord> tasks;
    const int total = config.n_train + config.n_test;
    tasks.reserve(static_cast<size_t>(total));
    for (int t = 0; t < total; ++t)
        tasks.push_back(detail::make_task(config, detail::padded("task_", t), config.p, config.q,
                                          rng));
    return tasks;
}

/// Train tasks from U[p, q] and test tasks from U[p + shift, q + shift]:
/// the shift dials the train/test divergence for the generalization sweep.
inline std::pair<std::vector<TaskRecord>, std::vector<TaskRecord>> generate_shifted_split(
    const SynthConfig& config, double shift) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::pair<std::vector<TaskRecord>, std::vector<TaskRecord>> out;
    for (int t = 0; t < config.n_train; ++t)
        out.first.push_back(detail::make_task(config, detail::padded("train_", t), config.p,
                                              config.q, rng));
    for (int t = 0; t < config.n_test; ++t)
        out.second.push_back(detail::make_task(config, detail::padded("test_", t),
                                               config.p + shift, config.q + shift, rng));
    return out;
}

struct Split {
    std::vector<TaskRecord> train;
    std::vector<TaskRecord> test;
    double divergence = 0.0;  // 1-D 2-Wasserstein over scalar task features
};

/// Random disjoint split plus the feature divergence between the two groups.
/// The larger group is subsampled (seeded) to the smaller group's size before
/// the equal-size 1-D Wasserstein distance is taken.
inline Split split_by_divergence(const std::vector<TaskRecord>& tasks, int n_train, int n_test,
                                 std::uint64_t seed) {
    if (n_train < 1 || n_test < 1) throw InvalidInput("split_by_divergence: counts must be >= 1");
    if (static_cast<size_t>(n_train) + static_cast<size_t>(n_test) > tasks.size())
        throw InvalidInput("split_by_divergence: n_train + n_test exceeds task count");
    validate_tasks(tasks);

    std::mt19937_64 rng(seed);
    std::vector<size_t> idx(tasks.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);

    Split out;
    for (int i = 0; i < n_train; ++i) out.train.push_back(tasks[idx[static_cast<size_t>(i)]]);
    for (int i = 0; i < n_test; ++i)
        out.test.push_back(tasks[idx[static_cast<size_t>(n_train + i)]]);

    auto first_feature = [](const std::vector<TaskRecord>& v) {
        std::vector<double> f;
        f.reserve(v.size());
        for (const auto& t : v) f.push_back(t.features[0]);
        return f;
    };
    std::vector<double> a = first_feature(out.train);
    std::vector<double> b = first_feature(out.test);
    const size_t n = std::min(a.size(), b.size());
    auto subsample = [&rng, n](std::vector<double>& v) {
        if (v.size() == n) return;
        std::shuffle(v.begin(), v.end(), rng);
        v.resize(n);
    };
    subsample(a);
    subsample(b);
    out.divergence = ot::wasserstein_1d(std::move(a), std::move(b));
    return out;
}

/// Divergence between two task groups' scalar features (equal-size subsample).
inline double feature_divergence(const std::vector<TaskRecord>& train,
                                 const std::vector<TaskRecord>& test, std::uint64_t seed = 0) {
    std::vector<double> a, b;
    for (const auto& t : train) a.push_back(t.features[0]);
    for (const auto& t : test) b.push_back(t.features[0]);
    const size_t n = std::min(a.size(), b.size());
    std::mt19937_64 rng(seed);
    auto subsample = [&rng, n](std::vector<double>& v) {
        if (v.size() == n) return;
        std::shuffle(v.begin(), v.end(), rng);
        v.resize(n);
    };
    subsample(a);
    subsample(b);
    return ot::wasserstein_1d(std::move(a), std::move(b));
}

}  // namespace physiomtl::synth
