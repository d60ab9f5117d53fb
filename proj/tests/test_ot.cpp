#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "physiomtl/ot.hpp"

using namespace physiomtl;
using Catch::Approx;

namespace {
Eigen::MatrixXd random_cost(std::mt19937& rng, int n, double lo = 0.5, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd C(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) C(i, j) = u(rng);
    return C;
}
}  // namespace

TEST_CASE("cost_matrix hand cases") {
    Eigen::MatrixXd S(3, 1);
    S << 0.0, 1.0, 3.0;
    const Eigen::VectorXd m = Eigen::VectorXd::Constant(1, 2.0);
    const Eigen::MatrixXd C = ot::cost_matrix(S, m);
    Eigen::MatrixXd want(3, 3);
    want << 0, 2, 6, 2, 0, 4, 6, 4, 0;
    CHECK((C - want).cwiseAbs().maxCoeff() == Approx(0.0).margin(1e-15));

    // identical features give the zero matrix
    Eigen::MatrixXd same(4, 2);
    same << 1, 2, 1, 2, 1, 2, 1, 2;
    CHECK(ot::cost_matrix(same, Eigen::VectorXd::Ones(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cost_matrix input validation") {
    Eigen::MatrixXd S(2, 2);
    S << 0, 1, 2, 3;
    Eigen::VectorXd neg(2);
    neg << 1.0, -0.5;
    CHECK_THROWS_AS(ot::cost_matrix(S, neg), InvalidInput);
    CHECK_THROWS_AS(ot::cost_matrix(S, Eigen::VectorXd::Ones(3)), InvalidInput);
}

TEST_CASE("cost_matrix is symmetric with zero diagonal") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    Eigen::MatrixXd S(6, 3);
    for (Eigen::Index i = 0; i < S.size(); ++i) S(i) = u(rng);
    Eigen::VectorXd m(3);
    m << 0.5, 1.0, 2.0;
    const Eigen::MatrixXd C = ot::cost_matrix(S, m);
    CHECK((C - C.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(C.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(C.minCoeff() >= 0.0);
}

TEST_CASE("exact_ot_small enumerates the optimum") {
    Eigen::MatrixXd C(2, 2);
    C << 0, 1, 1, 0;
    const ot::Coupling pi = ot::exact_ot_small(C);
    CHECK(pi.entries(0, 0) == Approx(0.5));
    CHECK(pi.entries(1, 1) == Approx(0.5));
    CHECK(pi.transport_cost(C) == Approx(0.0).margin(1e-15));

    Eigen::MatrixXd D(2, 2);
    D << 1, 2, 3, 0;  // identity cost 0.5 beats swap cost 2.5
    const ot::Coupling pd = ot::exact_ot_small(D);
    CHECK(pd.entries(0, 0) == Approx(0.5));
    CHECK(pd.entries(1, 1) == Approx(0.5));
    CHECK(pd.transport_cost(D) == Approx(0.5));

    const ot::Coupling p1 = ot::exact_ot_small(Eigen::MatrixXd::Constant(1, 1, 3.0));
    CHECK(p1.entries(0, 0) == Approx(1.0));

    CHECK_THROWS_AS(ot::exact_ot_small(Eigen::MatrixXd::Zero(9, 9)), InvalidInput);
    CHECK_THROWS_AS(ot::exact_ot_small(Eigen::MatrixXd::Zero(2, 3)), InvalidInput);
}

TEST_CASE("sinkhorn on a constant cost is the product coupling") {
    for (double gamma : {0.01, 0.5, 10.0}) {
        const ot::Coupling pi =
            ot::sinkhorn(Eigen::MatrixXd::Constant(2, 2, 3.0), gamma);
        CHECK(pi.converged);
        for (Eigen::Index i = 0; i < 2; ++i)
            for (Eigen::Index j = 0; j < 2; ++j) CHECK(pi.entries(i, j) == Approx(0.25));
    }
}

TEST_CASE("sinkhorn concentrates on the assignment for small gamma") {
    Eigen::MatrixXd C(2, 2);
    C << 0, 1, 1, 0;
    const ot::Coupling pi = ot::sinkhorn(C, 0.01);
    CHECK(pi.converged);
    CHECK(std::abs(pi.entries(0, 0) - 0.5) < 1e-6);
    CHECK(std::abs(pi.entries(1, 1) - 0.5) < 1e-6);
    CHECK(std::abs(pi.entries(0, 1)) < 1e-6);
    CHECK(pi.max_marginal_violation() < 1e-8);
}

TEST_CASE("sinkhorn input validation and failure modes") {
    Eigen::MatrixXd C(2, 2);
    C << 0, 1, 1, 0;
    CHECK_THROWS_AS(ot::sinkhorn(C, 0.0), InvalidInput);
    CHECK_THROWS_AS(ot::sinkhorn(C, -1.0), InvalidInput);

    // median entry 1 selects the plain-scaling path at gamma = 0.6, where a
    // uniformly huge row underflows exp(-C/gamma) to zero
    Eigen::MatrixXd bad(3, 3);
    bad << 0, 1, 1, 1, 0, 1, 1e6, 1e6, 1e6;
    CHECK_THROWS_AS(ot::sinkhorn(bad, 0.6), NumericalFailure);
}

TEST_CASE("sinkhorn marginals and mass, rectangular included") {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd C(3, 5);
    for (Eigen::Index i = 0; i < C.size(); ++i) C(i) = u(rng);
    const ot::Coupling pi = ot::sinkhorn(C, 0.2);
    CHECK(pi.converged);
    CHECK(pi.max_marginal_violation() < 1e-8);
    CHECK(pi.entries.sum() == Approx(1.0).margin(1e-8));
    CHECK(pi.entries.minCoeff() >= 0.0);
}

TEST_CASE("sinkhorn approaches the exact optimum as gamma shrinks") {
    std::mt19937 rng(42);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 2 + rep % 5;  // 2..6
        const Eigen::MatrixXd C = random_cost(rng, n);
        const ot::Coupling exact = ot::exact_ot_small(C);
        const double best = exact.transport_cost(C);

        const double range = C.maxCoeff() - C.minCoeff();
        const ot::Coupling tight = ot::sinkhorn(C, 1e-3, 200000, 1e-9);
        CHECK(tight.converged);
        CHECK(tight.transport_cost(C) <= best + 0.01 * range);
        CHECK(tight.transport_cost(C) >= best - 1e-9);

        // entropic cost gap decreases monotonically in gamma
        double prev_gap = std::numeric_limits<double>::infinity();
        for (double gamma : {1.0, 0.1, 0.01, 0.001}) {
            const ot::Coupling pi = ot::sinkhorn(C, gamma, 200000, 1e-10);
            const double gap = pi.transport_cost(C) - best;
            CHECK(gap <= prev_gap + 1e-9);
            prev_gap = gap;
        }
    }
}

TEST_CASE("wasserstein_1d") {
    CHECK(ot::wasserstein_1d({1.0, 2.0, 3.0}, {3.0, 1.0, 2.0}) == 0.0);
    CHECK(ot::wasserstein_1d({0.0}, {3.0}) == Approx(3.0));
    CHECK(ot::wasserstein_1d({0.0, 1.0}, {1.0, 2.0}) == Approx(1.0));
    CHECK_THROWS_AS(ot::wasserstein_1d({1.0}, {1.0, 2.0}), InvalidInput);
    CHECK_THROWS_AS(ot::wasserstein_1d({}, {}), InvalidInput);

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    std::vector<double> a(12), b(12);
    for (size_t i = 0; i < a.size(); ++i) {
        a[i] = u(rng);
        b[i] = u(rng);
    }
    CHECK(ot::wasserstein_1d(a, b) == Approx(ot::wasserstein_1d(b, a)));
    std::vector<double> shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(ot::wasserstein_1d(a, shuffled) == 0.0);  // identity on multisets
}
