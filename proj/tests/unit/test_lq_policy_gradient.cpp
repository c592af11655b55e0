#include <gtest/gtest.h>

#include <cmath>

#include "dst/lq/policy_gradient.hpp"
#include "fixtures.hpp"

using namespace dst::lq;

namespace {

GainPair scalar_gains(double theta, double thetabold) {
    return {Matrix::Constant(1, 1, theta), Matrix::Constant(1, 1, thetabold)};
}

double total_cost(const std::vector<double>& c) {
    double s = 0.0;
    for (double v : c) s += v;
    return s;
}

}  // namespace

TEST(PgHyperparams, Validation) {
    PgHyperparams h;
    EXPECT_NO_THROW(h.validate());
    h.L = 0;
    EXPECT_THROW(h.validate(), dst::InvalidInput);
    h = PgHyperparams{};
    h.r = 0.0;
    EXPECT_THROW(h.validate(), dst::InvalidInput);
    h = PgHyperparams{};
    h.eta = -1.0;
    EXPECT_THROW(h.validate(), dst::InvalidInput);
    h = PgHyperparams{};
    h.T = 0;
    EXPECT_THROW(h.validate(), dst::InvalidInput);
}

TEST(SamplePerturbation, NormAndScalarCase) {
    dst::Rng rng(3);
    int plus = 0;
    const int N = 20000;
    for (int k = 0; k < N; ++k) {
        const Matrix p = sample_perturbation(1, 1, 0.15, rng);
        EXPECT_DOUBLE_EQ(std::abs(p(0, 0)), 0.15);
        plus += p(0, 0) > 0;
    }
    EXPECT_NEAR(plus / double(N), 0.5, 4.0 * 0.5 / std::sqrt(double(N)));
    for (int k = 0; k < 100; ++k) EXPECT_NEAR(sample_perturbation(3, 2, 0.4, rng).norm(), 0.4, 1e-14);
    EXPECT_THROW(sample_perturbation(2, 2, 0.0, rng), dst::InvalidInput);
    EXPECT_EQ(sample_perturbation(2, 3, 0.2, 17), sample_perturbation(2, 3, 0.2, 17));
}

TEST(SamplePerturbation, RotationSymmetric) {
    dst::Rng rng(9);
    const int N = 100000, rows = 2, cols = 2;
    const double r = 0.3;
    Vector mean = Vector::Zero(4);
    Matrix second = Matrix::Zero(4, 4);
    for (int k = 0; k < N; ++k) {
        const Matrix p = sample_perturbation(rows, cols, r, rng);
        const Vector v = Eigen::Map<const Vector>(p.data(), 4);
        mean += v;
        second += v * v.transpose();
    }
    mean /= N;
    second /= N;
    EXPECT_LE(mean.cwiseAbs().maxCoeff(), 3.0 * r / std::sqrt(double(N) * rows * cols));
    // E[v v'] = r^2 / d I on the sphere.
    const Matrix expected = (r * r / 4.0) * Matrix::Identity(4, 4);
    EXPECT_LE((second - expected).cwiseAbs().maxCoeff(), 5e-4);
}

TEST(RolloutCost, ZeroNoiseZeroStart) {
    auto d = fixtures::smart_grid_definition();
    d.noise = DistributionSpec::point(Vector::Zero(1));
    d.initial = DistributionSpec::point(Vector::Zero(1));
    const auto r = rollout_cost(LqTeamModel(d), scalar_gains(-0.3, 0.2), 10, 1);
    ASSERT_EQ(r.costs.size(), 10u);
    for (double c : r.costs) EXPECT_EQ(c, 0.0);
    EXPECT_FALSE(r.diverged);
}

TEST(RolloutCost, SingleStepByHand) {
    auto d = fixtures::smart_grid_definition();
    d.initial = DistributionSpec::point(Vector::Constant(1, 0.05));
    const LqTeamModel m(d);
    const double theta = -0.4, thetabold = -0.7;
    const auto r = rollout_cost(m, scalar_gains(theta, thetabold), 1, 5);
    ASSERT_EQ(r.costs.size(), 1u);
    // All agents at 0.05: xbar = 0.05 * mean(alpha), u^i = theta x + alpha^i (thetabold - theta) xbar.
    const Matrix& a = d.alpha;
    const double xbar = 0.05 * a.col(0).mean();
    double c = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double u = theta * 0.05 + a(i, 0) * (thetabold - theta) * xbar;
        const double ubar = thetabold * xbar;
        c += 0.05 * 0.05 + u * u + 4.0 * xbar * xbar + ubar * ubar;
    }
    EXPECT_NEAR(r.costs[0], c / 10.0, 1e-14);
}

TEST(RolloutCost, DeterministicAndCapped) {
    const auto m = fixtures::smart_grid();
    const auto a = rollout_cost(m, scalar_gains(-0.5, -0.5), 10, 42);
    const auto b = rollout_cost(m, scalar_gains(-0.5, -0.5), 10, 42);
    EXPECT_EQ(a.costs, b.costs);

    const auto blow = rollout_cost(m, scalar_gains(50.0, 50.0), 10, 1, 1e9, 1e4);
    EXPECT_TRUE(blow.diverged);
    ASSERT_EQ(blow.costs.size(), 10u);
    for (double c : blow.costs) EXPECT_LE(c, 1e4);
    EXPECT_EQ(blow.costs.back(), 1e4);
}

TEST(GradientEstimates, Examples) {
    PgHyperparams h;
    h.L = 1;
    h.T = 1;
    h.r = 0.15;
    h.beta = 1.0;
    const std::vector<GainPair> perts{scalar_gains(0.15, -0.15)};
    const auto g = gradient_estimates({{2.0}}, perts, 1, 1, 1, h);
    EXPECT_NEAR(g.theta(0, 0), 13.3333333333, 1e-9);
    EXPECT_NEAR(g.thetabold(0, 0), -13.3333333333, 1e-9);

    const auto zero = gradient_estimates({{0.0}}, perts, 1, 1, 1, h);
    EXPECT_EQ(zero.theta(0, 0), 0.0);
    EXPECT_EQ(zero.thetabold(0, 0), 0.0);

    h.L = 2;
    h.T = 3;
    h.beta = 0.5;
    const std::vector<GainPair> two{scalar_gains(0.15, 0.15), scalar_gains(-0.15, 0.15)};
    const std::vector<std::vector<double>> costs{{1.0, 2.0, 4.0}, {3.0, 0.0, 0.0}};
    const auto g1 = gradient_estimates(costs, two, 1, 1, 1, h);
    // Discounted sums 3 and 3: theta parts cancel.
    EXPECT_NEAR(g1.theta(0, 0), 0.0, 1e-14);
    EXPECT_NEAR(g1.thetabold(0, 0), 6.0 * 0.15 / (3.0 * 2.0 * 0.0225), 1e-12);
    const auto g2 = gradient_estimates({{2.0, 4.0, 8.0}, {6.0, 0.0, 0.0}}, two, 1, 1, 1, h);
    EXPECT_NEAR(g2.thetabold(0, 0), 2.0 * g1.thetabold(0, 0), 1e-12);

    EXPECT_THROW(gradient_estimates(costs, perts, 1, 1, 1, h), dst::DimensionMismatch);
}

TEST(GradientEstimates, DimensionFactors) {
    PgHyperparams h;
    h.L = 1;
    h.T = 1;
    h.r = 1.0;
    const int z = 2, hx = 3, hu = 2;
    GainPair p{Matrix::Constant(hu, hx, 1.0), Matrix::Constant(z * hu, z * hx, 1.0)};
    const auto g = gradient_estimates({{1.0}}, {p}, z, hx, hu, h);
    EXPECT_DOUBLE_EQ(g.theta(0, 0), 6.0);
    EXPECT_DOUBLE_EQ(g.thetabold(0, 0), 24.0);
}

TEST(UpdateGains, Examples) {
    const auto g0 = scalar_gains(0.0, 0.0);
    const auto g = update_gains(g0, scalar_gains(13.3333333333, 0.0), 0.3);
    EXPECT_NEAR(g.theta(0, 0), -4.0, 1e-9);
    EXPECT_EQ(g.thetabold(0, 0), 0.0);
    const auto same = update_gains(scalar_gains(-0.2, 0.4), scalar_gains(0.0, 0.0), 0.3);
    EXPECT_EQ(same.theta(0, 0), -0.2);
    const auto frozen = update_gains(scalar_gains(-0.2, 0.4), scalar_gains(5.0, 5.0), 0.0);
    EXPECT_EQ(frozen.thetabold(0, 0), 0.4);
    EXPECT_THROW(update_gains(g0, GainPair{Matrix::Zero(2, 1), Matrix::Zero(1, 1)}, 0.1), dst::DimensionMismatch);
}

TEST(RunPolicyGradient, ZeroCostModelNeverMoves) {
    auto d = fixtures::smart_grid_definition();
    d.noise = DistributionSpec::point(Vector::Zero(1));
    d.initial = DistributionSpec::point(Vector::Zero(1));
    PgHyperparams h;
    h.iters = 20;
    h.L = 10;
    const auto trace = run_policy_gradient(LqTeamModel(d), h, scalar_gains(-0.1, 0.2));
    ASSERT_EQ(trace.rows.size(), 20u);
    for (const auto& row : trace.rows) {
        EXPECT_EQ(row.gains.theta(0, 0), -0.1);
        EXPECT_EQ(row.gains.thetabold(0, 0), 0.2);
        EXPECT_EQ(row.mean_cost, 0.0);
        EXPECT_TRUE(std::isnan(row.dist_theta));
    }
    EXPECT_EQ(trace.rows.front().k, 1u);
    EXPECT_EQ(trace.rows.back().k, 20u);
}

TEST(RunPolicyGradient, ReproducibleAcrossThreadCounts) {
    const auto m = fixtures::smart_grid();
    PgHyperparams h;
    h.iters = 30;
    h.seed = 5;
    h.threads = 1;
    const auto a = run_policy_gradient(m, h);
    h.threads = 4;
    const auto b = run_policy_gradient(m, h);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
        EXPECT_EQ(a.rows[k].gains.theta, b.rows[k].gains.theta);
        EXPECT_EQ(a.rows[k].gains.thetabold, b.rows[k].gains.thetabold);
        EXPECT_EQ(a.rows[k].mean_cost, b.rows[k].mean_cost);
    }
    h.seed = 6;
    const auto c = run_policy_gradient(m, h);
    EXPECT_NE(a.rows.back().gains.theta, c.rows.back().gains.theta);
}

TEST(RunPolicyGradient, DistanceTrendsDown) {
    const auto m = fixtures::smart_grid();
    const GainPair ref = scalar_gains(fixtures::smart_grid_theta(), fixtures::smart_grid_thetabold());
    PgHyperparams h;
    h.iters = 1500;
    h.seed = 1;
    const auto trace = run_policy_gradient(m, h, std::nullopt, ref);
    ASSERT_EQ(trace.rows.size(), 1500u);
    std::vector<double> window_mean;
    for (std::size_t w = 0; w < 3; ++w) {
        double s = 0.0;
        for (std::size_t k = w * 500; k < (w + 1) * 500; ++k)
            s += trace.rows[k].dist_theta + trace.rows[k].dist_thetabold;
        window_mean.push_back(s / 500.0);
    }
    const double start = std::abs(ref.theta(0, 0)) + std::abs(ref.thetabold(0, 0));
    EXPECT_LT(window_mean[0], start);
    EXPECT_LT(window_mean[2], window_mean[0]);
}

TEST(GradientEstimates, SignAgreesWithFiniteDifference) {
    const auto m = fixtures::smart_grid();
    const GainPair base = scalar_gains(0.2, 0.1);
    PgHyperparams h;
    h.L = 1;
    h.T = 10;
    h.r = 0.15;
    const int N = 10000;
    GainPair mean{Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
    for (int k = 0; k < N; ++k) {
        dst::Rng rng(dst::derive_seed(77, static_cast<std::uint64_t>(k)));
        GainPair p{sample_perturbation(1, 1, h.r, rng), sample_perturbation(1, 1, h.r, rng)};
        GainPair g{base.theta + p.theta, base.thetabold + p.thetabold};
        const auto r = rollout_cost(m, g, h.T, rng());
        const auto est = gradient_estimates({r.costs}, {p}, 1, 1, 1, h);
        mean.theta += est.theta / N;
        mean.thetabold += est.thetabold / N;
    }

    // Central differences of the smoothed cost with common random numbers.
    auto fd = [&](bool bold) {
        std::vector<double> d(N);
        for (int k = 0; k < N; ++k) {
            dst::Rng rng(dst::derive_seed(78, static_cast<std::uint64_t>(k)));
            const double other = sample_perturbation(1, 1, h.r, rng)(0, 0);
            const std::uint64_t seed = rng();
            GainPair plus = base, minus = base;
            (bold ? plus.thetabold : plus.theta)(0, 0) += h.r;
            (bold ? minus.thetabold : minus.theta)(0, 0) -= h.r;
            (bold ? plus.theta : plus.thetabold)(0, 0) += other;
            (bold ? minus.theta : minus.thetabold)(0, 0) += other;
            d[k] = (total_cost(rollout_cost(m, plus, h.T, seed).costs) -
                    total_cost(rollout_cost(m, minus, h.T, seed).costs)) /
                   (2.0 * h.r * h.T);
        }
        return summarize_objectives(d);
    };
    const auto ft = fd(false), fb = fd(true);
    int asserted = 0;
    if (std::abs(ft.mean) > ft.std_error) {
        EXPECT_EQ(std::signbit(ft.mean), std::signbit(mean.theta(0, 0)));
        ++asserted;
    }
    if (std::abs(fb.mean) > fb.std_error) {
        EXPECT_EQ(std::signbit(fb.mean), std::signbit(mean.thetabold(0, 0)));
        ++asserted;
    }
    EXPECT_GE(asserted, 1);
}
