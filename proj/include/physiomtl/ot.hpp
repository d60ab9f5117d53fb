#pragma once

// Optimal-transport primitives: task-similarity cost matrix, entropic OT via
// Sinkhorn matrix scaling, an exact small-instance solver used as a test
// oracle, and the 1-D 2-Wasserstein distance between equal-size samples.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "physiomtl/errors.hpp"

namespace physiomtl::ot {

// Nonnegative T_row x T_col coupling with prescribed marginals.
struct Coupling {
    Eigen::MatrixXd entries;
    Eigen::VectorXd row_marginal;
    Eigen::VectorXd col_marginal;
    bool converged = true;
    int iterations = 0;

    double max_marginal_violation() const {
        const double r = (entries.rowwise().sum() - row_marginal).cwiseAbs().maxCoeff();
        const double c = (entries.colwise().sum().transpose() - col_marginal).cwiseAbs().maxCoeff();
        return std::max(r, c);
    }
    double transport_cost(const Eigen::MatrixXd& cost) const {
        return (entries.array() * cost.array()).sum();
    }
};

/// Task-similarity cost: C(i,j) = <m, |s_i - s_j|>, rows of `features` are tasks.
inline Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& features, const Eigen::VectorXd& m) {
    if (features.cols() != m.size())
        throw InvalidInput("cost_matrix: weight dimension " + std::to_string(m.size()) +
                           " != feature dimension " + std::to_string(features.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k) {
        if (!(m[k] >= 0.0)) throw InvalidInput("cost_matrix: similarity weights must be >= 0");
    }
    if (!features.allFinite()) throw InvalidInput("cost_matrix: non-finite feature");
    const Eigen::Index T = features.rows();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
        for (Eigen::Index j = i + 1; j < T; ++j) {
            const double c = (features.row(i) - features.row(j)).cwiseAbs().matrix() * m;
            C(i, j) = c;
            C(j, i) = c;
        }
    }
    return C;
}

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1, v.end());
    return 0.5 * (hi + v[mid - 1]);
}

inline double log_sum_exp(const Eigen::VectorXd& x) {
    const double c = x.maxCoeff();
    if (!std::isfinite(c)) return c;  // all -inf stays -inf
    return c + std::log((x.array() - c).exp().sum());
}

}  // namespace detail

/// Median matrix entry; with a zero diagonal this is pulled toward zero,
/// so callers interested in the cost scale use median_off_diagonal instead.
inline double median_entry(const Eigen::MatrixXd& C) {
    std::vector<double> v(C.data(), C.data() + C.size());
    return detail::median(std::move(v));
}

/// Median of the strictly off-diagonal entries of a square matrix.
inline double median_off_diagonal(const Eigen::MatrixXd& C) {
    std::vector<double> v;
    v.reserve(static_cast<size_t>(C.size()));
    for (Eigen::Index i = 0; i < C.rows(); ++i)
        for (Eigen::Index j = 0; j < C.cols(); ++j)
            if (i != j) v.push_back(C(i, j));
    return detail::median(std::move(v));
}

/// Entropic OT with uniform marginals 1/n, 1/m: matrix scaling on
/// K = exp(-C/gamma). When gamma is small relative to the costs the plain
/// scaling underflows, so the solve switches to log-domain updates with an
/// annealed coefficient. Sets converged=false when max_iter is hit before
/// the marginal violation drops below tol; clustered instances with tiny
/// cross-cluster kernel mass equilibrate too slowly for any tol and are
/// reported that way rather than hidden.
inline Coupling sinkhorn(const Eigen::MatrixXd& cost, double gamma, int max_iter = 10000,
                         double tol = 1e-8) {
    if (!(gamma > 0.0)) throw InvalidInput("sinkhorn: gamma must be positive");
    if (cost.size() == 0) throw InvalidInput("sinkhorn: empty cost matrix");
    if (!cost.allFinite() || cost.minCoeff() < 0.0)
        throw InvalidInput("sinkhorn: cost entries must be finite and >= 0");
    if (max_iter < 1) throw InvalidInput("sinkhorn: max_iter must be >= 1");

    const Eigen::Index n = cost.rows(), m = cost.cols();
    Coupling out;
    out.row_marginal = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    out.col_marginal = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    const Eigen::VectorXd& mu = out.row_marginal;
    const Eigen::VectorXd& nu = out.col_marginal;

    const double med = median_entry(cost);
    const bool log_domain = med > 0.0 && gamma < 0.05 * med;

    if (!log_domain) {
        // std::exp per entry: Eigen's vectorized exp clamps large negative
        // arguments instead of underflowing, which would mask the documented
        // all-zero-row failure mode.
        const Eigen::MatrixXd K =
            cost.unaryExpr([gamma](double c) { return std::exp(-c / gamma); });
        for (Eigen::Index i = 0; i < n; ++i)
            if (K.row(i).maxCoeff() == 0.0)
                throw NumericalFailure("sinkhorn: kernel row underflowed to zero; raise gamma");
        for (Eigen::Index j = 0; j < m; ++j)
            if (K.col(j).maxCoeff() == 0.0)
                throw NumericalFailure("sinkhorn: kernel column underflowed to zero; raise gamma");

        Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
        Eigen::VectorXd v = Eigen::VectorXd::Ones(m);
        for (int it = 1; it <= max_iter; ++it) {
            u = mu.array() / (K * v).array();
            v = nu.array() / (K.transpose() * u).array();
            if (!u.allFinite() || !v.allFinite())
                throw NumericalFailure("sinkhorn: scaling vectors diverged; raise gamma");
            out.entries = u.asDiagonal() * K * v.asDiagonal();
            out.iterations = it;
            if (out.max_marginal_violation() < tol) {
                out.converged = true;
                return out;
            }
        }
    } else {
        // Log-domain potentials f, g with pi = exp((f_i + g_j - C_ij)/gamma).
        // Epsilon scaling: anneal the coefficient geometrically from the cost
        // scale down to gamma, warm-starting the potentials at each level;
        // cold-started scaling at small gamma stalls near assignment ties.
        Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
        const Eigen::VectorXd log_mu = mu.array().log();
        const Eigen::VectorXd log_nu = nu.array().log();

        std::vector<double> levels;
        for (double level = 0.5 * med; level > 2.0 * gamma; level *= 0.5)
            levels.push_back(level);
        levels.push_back(gamma);

        const auto update = [&](double eps) {
            for (Eigen::Index i = 0; i < n; ++i)
                f[i] = eps * log_mu[i] -
                       eps * detail::log_sum_exp((g - cost.row(i).transpose()) / eps);
            for (Eigen::Index j = 0; j < m; ++j)
                g[j] = eps * log_nu[j] - eps * detail::log_sum_exp((f - cost.col(j)) / eps);
        };
        const auto plan = [&](double eps) {
            out.entries = (((-cost).colwise() + f).rowwise() + g.transpose()) / eps;
            out.entries = out.entries.array().exp();
        };

        int used = 0;
        const int warm_budget = max_iter / 2;  // the target level always runs
        const double warm_tol = std::max(tol, 1e-4);
        for (size_t lv = 0; lv + 1 < levels.size() && used < warm_budget; ++lv) {
            for (int it = 0; it < 50 && used < warm_budget; ++it) {
                update(levels[lv]);
                ++used;
                plan(levels[lv]);
                out.iterations = used;
                if (out.max_marginal_violation() < warm_tol) break;
            }
        }
        while (used < max_iter) {
            update(gamma);
            ++used;
            plan(gamma);
            out.iterations = used;
            if (out.max_marginal_violation() < tol) {
                out.converged = true;
                return out;
            }
        }
    }
    out.converged = false;
    return out;
}

/// Exact OT for uniform marginals on a square cost, n <= 8, by enumerating
/// permutations (an optimal vertex of the Birkhoff polytope). Test oracle.
inline Coupling exact_ot_small(const Eigen::MatrixXd& cost) {
    const Eigen::Index n = cost.rows();
    if (n == 0 || cost.cols() != n) throw InvalidInput("exact_ot_small: square matrix required");
    if (n > 8) throw InvalidInput("exact_ot_small: n must be <= 8");
    if (!cost.allFinite()) throw InvalidInput("exact_ot_small: non-finite cost");

    std::vector<Eigen::Index> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<Eigen::Index> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) c += cost(i, perm[static_cast<size_t>(i)]);
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    Coupling out;
    out.entries = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        out.entries(i, best[static_cast<size_t>(i)]) = 1.0 / static_cast<double>(n);
    out.row_marginal = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    out.col_marginal = out.row_marginal;
    return out;
}

/// 2-Wasserstein distance between uniform empirical measures of equal size:
/// sort both samples, RMS of the sorted pairwise gaps.
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw InvalidInput("wasserstein_1d: empty sample");
    if (a.size() != b.size())
        throw InvalidInput("wasserstein_1d: samples must have equal size");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace physiomtl::ot
