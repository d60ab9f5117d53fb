#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "physiomtl/rhythm.hpp"

using namespace physiomtl;
using Catch::Approx;

namespace {
constexpr double kPi = std::numbers::pi;

std::vector<double> eval_sinusoid(double M, double A, double phi, double period,
                                  const std::vector<double>& times) {
    std::vector<double> y(times.size());
    for (size_t i = 0; i < times.size(); ++i)
        y[i] = M + A * std::sin(2.0 * kPi * times[i] / period + phi);
    return y;
}
}  // namespace

TEST_CASE("design_matrix at reference times") {
    const Eigen::MatrixXd X0 = design_matrix(std::vector<double>{0.0}, 24.0);
    CHECK(X0(0, 0) == Approx(0.0).margin(1e-15));
    CHECK(X0(0, 1) == Approx(1.0));
    CHECK(X0(0, 2) == 1.0);

    const Eigen::MatrixXd X6 = design_matrix(std::vector<double>{6.0}, 24.0);
    CHECK(X6(0, 0) == Approx(1.0));
    CHECK(X6(0, 1) == Approx(0.0).margin(1e-15));

    // quarter points of the 24 h cycle
    const Eigen::MatrixXd Q = design_matrix(std::vector<double>{0.0, 6.0, 12.0, 18.0}, 24.0);
    const double expected[4][2] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}};
    for (int i = 0; i < 4; ++i) {
        CHECK(Q(i, 0) == Approx(expected[i][0]).margin(1e-15));
        CHECK(Q(i, 1) == Approx(expected[i][1]).margin(1e-15));
        CHECK(Q(i, 2) == 1.0);
    }
}

TEST_CASE("design_matrix rejects bad input") {
    CHECK_THROWS_AS(design_matrix(std::vector<double>{}, 24.0), InvalidInput);
    CHECK_THROWS_AS(design_matrix(std::vector<double>{1.0}, 0.0), InvalidInput);
    CHECK_THROWS_AS(design_matrix(std::vector<double>{1.0}, -3.0), InvalidInput);
}

TEST_CASE("design_matrix rows: bias column is one, sin/cos part has unit norm") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> time(-50.0, 50.0);
    std::vector<double> times(40);
    for (auto& t : times) t = time(rng);
    const Eigen::MatrixXd X = design_matrix(times, 24.0);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        CHECK(X(i, 2) == 1.0);
        CHECK(std::abs(X.row(i).head(2).norm() - 1.0) < 4e-16);
    }
}

TEST_CASE("fit_rhythm on a constant signal") {
    const std::vector<double> times{0.0, 6.0, 12.0, 18.0};
    const std::vector<double> values{50.0, 50.0, 50.0, 50.0};
    const RhythmModel m = fit_rhythm(times, values, 24.0, 0.0);
    CHECK(m.w0 == Approx(50.0).margin(1e-12));
    CHECK(m.w1 == Approx(0.0).margin(1e-12));
    CHECK(m.w2 == Approx(0.0).margin(1e-12));
}

TEST_CASE("fit_rhythm recovers noise-free coefficients") {
    std::vector<double> times;
    for (int i = 0; i < 8; ++i) times.push_back(i * 3.0);
    const auto y = eval_sinusoid(60.0, 10.0, kPi / 2.0, 24.0, times);
    const RhythmModel m = fit_rhythm(times, y, 24.0, 0.0);
    CHECK(m.w0 == Approx(60.0).margin(1e-8));
    CHECK(m.w1 == Approx(0.0).margin(1e-8));
    CHECK(m.w2 == Approx(10.0).margin(1e-8));
}

TEST_CASE("fit_rhythm noise-free recovery property") {
    std::mt19937 rng(123);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const double M = 30.0 + 60.0 * ud(rng);
        const double A = 1.0 + 20.0 * ud(rng);
        const double phi = -kPi + 2.0 * kPi * ud(rng);
        const int n = 3 + static_cast<int>(10 * ud(rng));
        std::vector<double> times;
        for (int i = 0; i < n; ++i) times.push_back(24.0 * (i + ud(rng) * 0.5) / n);
        const auto y = eval_sinusoid(M, A, phi, 24.0, times);
        const RhythmModel m = fit_rhythm(times, y, 24.0, 0.0);
        CHECK(std::abs(m.w0 - M) < 1e-8);
        CHECK(std::abs(m.w1 - A * std::cos(phi)) < 1e-8);
        CHECK(std::abs(m.w2 - A * std::sin(phi)) < 1e-8);
    }
}

TEST_CASE("fit_rhythm is least squares: perturbations never reduce the residual") {
    std::mt19937 rng(5);
    std::normal_distribution<double> noise(0.0, 3.0);
    std::uniform_real_distribution<double> time(0.0, 24.0);
    std::vector<double> times;
    std::vector<double> values;
    for (int i = 0; i < 25; ++i) {
        times.push_back(time(rng));
        values.push_back(55.0 + 8.0 * std::sin(2.0 * kPi * times.back() / 24.0 + 0.7) +
                         noise(rng));
    }
    const RhythmModel m = fit_rhythm(times, values, 24.0, 0.0);
    const Eigen::MatrixXd X = design_matrix(times, 24.0);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                          static_cast<Eigen::Index>(values.size()));
    const Eigen::Vector3d w_fit(m.w1, m.w2, m.w0);  // design order
    const double base = (X * w_fit - y).squaredNorm();
    std::normal_distribution<double> delta(0.0, 0.05);
    for (int rep = 0; rep < 50; ++rep) {
        Eigen::Vector3d w = w_fit + Eigen::Vector3d(delta(rng), delta(rng), delta(rng));
        CHECK((X * w - y).squaredNorm() >= base - 1e-10);
    }
}

TEST_CASE("fit_rhythm degenerate designs") {
    CHECK_THROWS_AS(fit_rhythm(std::vector<double>{1.0, 2.0}, std::vector<double>{5.0, 6.0},
                               24.0, 0.0),
                    DegenerateFit);
    // three observations but only two distinct times mod P
    CHECK_THROWS_AS(fit_rhythm(std::vector<double>{3.0, 3.0, 27.0},
                               std::vector<double>{5.0, 6.0, 7.0}, 24.0, 0.0),
                    DegenerateFit);
    // ridge makes it solvable
    CHECK_NOTHROW(fit_rhythm(std::vector<double>{1.0, 2.0}, std::vector<double>{5.0, 6.0}, 24.0,
                             1e-8));
}

TEST_CASE("predict_rhythm closed-form cases") {
    CHECK(predict_rhythm(RhythmModel{50, 0, 0, 24}, std::vector<double>{0.0, 7.3, 19.0}) ==
          std::vector<double>{50.0, 50.0, 50.0});
    CHECK(predict_rhythm(RhythmModel{60, 0, 10, 24}, std::vector<double>{0.0})[0] ==
          Approx(70.0));
    CHECK(predict_rhythm(RhythmModel{0, 3, 4, 24}, std::vector<double>{6.0})[0] == Approx(3.0));
}

TEST_CASE("to_physio conversions") {
    const PhysioParams flat = to_physio(RhythmModel{50, 0, 0, 24});
    CHECK(flat.mesor == 50.0);
    CHECK(flat.amplitude == 0.0);
    CHECK(flat.phase == 0.0);  // zero-amplitude convention

    const PhysioParams p = to_physio(RhythmModel{60, 0, 10, 24});
    CHECK(p.amplitude == Approx(10.0));
    CHECK(p.phase == Approx(kPi / 2.0));

    const PhysioParams q = to_physio(RhythmModel{0, 3, 4, 24});
    CHECK(q.amplitude == Approx(5.0));
    CHECK(q.phase == Approx(std::atan2(4.0, 3.0)));  // 0.92729...
}

TEST_CASE("to_physio / from_physio roundtrip") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (int rep = 0; rep < 100; ++rep) {
        const RhythmModel m{u(rng), u(rng), u(rng), 24.0};
        const RhythmModel r = from_physio(to_physio(m), m.period_hours);
        CHECK(std::abs(r.w0 - m.w0) < 1e-12);
        CHECK(std::abs(r.w1 - m.w1) < 1e-12 * std::max(1.0, std::abs(m.w1)));
        CHECK(std::abs(r.w2 - m.w2) < 1e-12 * std::max(1.0, std::abs(m.w2)));
    }
}
