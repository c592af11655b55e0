#include <gtest/gtest.h>

#include <cmath>

#include "dst/lq/team.hpp"
#include "fixtures.hpp"

using namespace dst::lq;

namespace {

Matrix col(std::initializer_list<double> v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, dst::Rng& rng) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dst::standard_normal(rng);
    return m;
}

Matrix random_spd(Eigen::Index k, dst::Rng& rng, double shift) {
    const Matrix g = random_matrix(k, k, rng);
    return g * g.transpose() + shift * Matrix::Identity(k, k);
}

// Coupled two-feature model with vector states.
LqTeamModel::Definition coupled_definition(int n, dst::Rng& rng) {
    LqTeamModel::Definition d;
    d.n = n;
    d.z = 2;
    d.hx = 2;
    d.hu = 1;
    d.A = 0.5 * random_matrix(2, 2, rng);
    d.B = random_matrix(2, 1, rng);
    d.Q = random_spd(2, rng, 0.1);
    d.R = random_spd(1, rng, 0.5);
    d.qbar = random_spd(4, rng, 0.0);
    d.rbar = random_spd(2, rng, 0.1);
    d.abar = {0.2 * random_matrix(2, 4, rng), 0.2 * random_matrix(2, 4, rng)};
    d.bbar = {0.2 * random_matrix(2, 2, rng), 0.2 * random_matrix(2, 2, rng)};
    d.alpha = random_orthonormal_alpha(n, 2, rng);
    d.beta = 0.9;
    d.noise = DistributionSpec::gaussian(Vector::Zero(2), 0.1 * Matrix::Identity(2, 2));
    d.initial = DistributionSpec::uniform(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
    return d;
}

}  // namespace

TEST(DistributionSpec, MomentsAndValidation) {
    const auto u = DistributionSpec::uniform(col({0.0, -2.0}).col(0), col({0.1, 2.0}).col(0));
    EXPECT_NEAR(u.mean()(0), 0.05, 1e-15);
    EXPECT_NEAR(u.covariance()(0, 0), 0.01 / 12.0, 1e-15);
    EXPECT_NEAR(u.covariance()(1, 1), 16.0 / 12.0, 1e-15);
    EXPECT_EQ(u.covariance()(0, 1), 0.0);

    Matrix not_sym(2, 2);
    not_sym << 1, 0.5, 0, 1;
    EXPECT_THROW(DistributionSpec::gaussian(Vector::Zero(2), not_sym), dst::InvalidInput);
    EXPECT_THROW(DistributionSpec::gaussian(Vector::Zero(1), Matrix::Constant(1, 1, -1.0)), dst::InvalidInput);
    EXPECT_THROW(DistributionSpec::uniform(Vector::Constant(1, 1.0), Vector::Constant(1, 0.0)), dst::InvalidInput);

    const auto p = DistributionSpec::point(Vector::Constant(2, 3.0));
    dst::Rng rng(1);
    EXPECT_EQ(p.sample(rng), Vector::Constant(2, 3.0));
    EXPECT_EQ(p.covariance(), Matrix::Zero(2, 2));
}

TEST(DistributionSpec, SampleMomentsMatch) {
    Matrix cov(2, 2);
    cov << 2.0, 0.6, 0.6, 0.5;
    const auto g = DistributionSpec::gaussian(col({1.0, -1.0}).col(0), cov);
    dst::Rng rng(5);
    const int N = 200000;
    Vector mean = Vector::Zero(2);
    Matrix second = Matrix::Zero(2, 2);
    for (int k = 0; k < N; ++k) {
        const Vector s = g.sample(rng);
        mean += s;
        second += s * s.transpose();
    }
    mean /= N;
    const Matrix c = second / N - mean * mean.transpose();
    EXPECT_LE((mean - g.mean()).cwiseAbs().maxCoeff(), 0.02);
    EXPECT_LE((c - cov).cwiseAbs().maxCoeff(), 0.03);

    const auto scaled = g.scaled_covariance(2.0);
    EXPECT_EQ(scaled.mean(), g.mean());
    EXPECT_LE((scaled.covariance() - 2.0 * cov).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LqTeamModel, ValidatesStructure) {
    auto d = fixtures::smart_grid_definition();
    EXPECT_NO_THROW(LqTeamModel{d});

    auto bad_alpha = d;
    bad_alpha.alpha(0, 0) = 1.0;
    try {
        LqTeamModel m(bad_alpha);
        FAIL();
    } catch (const dst::InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("orthonormal"), std::string::npos);
    }

    auto r_bad = d;
    r_bad.R = Matrix::Constant(1, 1, 0.0);
    EXPECT_THROW(LqTeamModel{r_bad}, dst::InvalidInput);
    r_bad.enforce_cost_definiteness = false;
    EXPECT_NO_THROW(LqTeamModel{r_bad});

    auto shape = d;
    shape.qbar = Matrix::Identity(2, 2);
    EXPECT_THROW(LqTeamModel{shape}, dst::InvalidInput);

    auto beta = d;
    beta.beta = 1.5;
    EXPECT_THROW(LqTeamModel{beta}, dst::InvalidInput);

    auto z = d;
    z.z = 11;
    EXPECT_THROW(LqTeamModel{z}, dst::InvalidInput);
}

TEST(LqTeamModel, WeaklyCoupledRequiresBlockStructure) {
    dst::Rng rng(3);
    auto d = coupled_definition(8, rng);
    d.weakly_coupled = true;
    EXPECT_THROW(LqTeamModel{d}, dst::InvalidInput);
    d.abar = {embed_feature_block(0.1 * Matrix::Identity(2, 2), 0, 2), embed_feature_block(0.2 * Matrix::Identity(2, 2), 1, 2)};
    d.bbar = {embed_feature_block(Matrix::Zero(2, 1), 0, 2), embed_feature_block(Matrix::Zero(2, 1), 1, 2)};
    d.qbar = block_diagonal(std::vector<Matrix>{Matrix::Identity(2, 2), 2.0 * Matrix::Identity(2, 2)});
    d.rbar = Matrix::Identity(2, 2);
    EXPECT_NO_THROW(LqTeamModel{d});
}

TEST(RandomOrthonormalAlpha, Orthonormal) {
    dst::Rng rng(7);
    for (int z : {1, 2, 3}) {
        const Matrix a = random_orthonormal_alpha(12, z, rng);
        EXPECT_LE(orthonormality_error(a), 1e-12);
    }
    EXPECT_LE(orthonormality_error(fixtures::smart_grid_alpha()), 1e-12);
}

TEST(Aggregate, Examples) {
    EXPECT_DOUBLE_EQ(aggregate(col({2.0, 4.0}), col({1.0, 1.0}))(0), 3.0);
    EXPECT_DOUBLE_EQ(aggregate(col({2.0, 4.0}), col({1.0, -1.0}))(0), -1.0);
    EXPECT_EQ(aggregate(Matrix::Zero(5, 3), Matrix::Ones(5, 1)), Vector::Zero(3));
    Matrix alpha(2, 2);
    alpha << 1, 1, 1, -1;
    Matrix x(2, 2);
    x << 1, 2, 3, 4;
    const Vector xb = aggregate(x, alpha);
    ASSERT_EQ(xb.size(), 4);
    EXPECT_DOUBLE_EQ(xb(0), 2.0);
    EXPECT_DOUBLE_EQ(xb(1), 3.0);
    EXPECT_DOUBLE_EQ(xb(2), -1.0);
    EXPECT_DOUBLE_EQ(xb(3), -1.0);
}

TEST(BuildAggregateMatrices, Examples) {
    const auto agg = build_aggregate_matrices(fixtures::smart_grid());
    EXPECT_DOUBLE_EQ(agg.A(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(agg.B(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(agg.Q(0, 0), 5.0);
    EXPECT_DOUBLE_EQ(agg.R(0, 0), 2.0);

    dst::Rng rng(2);
    auto d = coupled_definition(6, rng);
    d.abar.clear();
    d.bbar.clear();
    const auto z2 = build_aggregate_matrices(LqTeamModel(d));
    EXPECT_EQ(z2.A, block_diagonal(d.A, 2));
    EXPECT_EQ(z2.B, block_diagonal(d.B, 2));
    EXPECT_LE((z2.Q - (block_diagonal(d.Q, 2) + d.qbar)).cwiseAbs().maxCoeff(), 1e-15);

    auto c = coupled_definition(6, rng);
    const auto full = build_aggregate_matrices(LqTeamModel(c));
    EXPECT_LE((full.A.block(0, 0, 2, 4) - (embed_feature_block(c.A, 0, 2) + c.abar[0])).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((full.A.block(2, 0, 2, 4) - (embed_feature_block(c.A, 1, 2) + c.abar[1])).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((full.B.block(2, 0, 2, 2) - (embed_feature_block(c.B, 1, 2) + c.bbar[1])).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GaugeTransform, Examples) {
    const auto g = gauge_transform(col({2.0, 4.0}), col({0.0, 0.0}), col({1.0, 1.0}));
    EXPECT_DOUBLE_EQ(g.xbar(0), 3.0);
    EXPECT_DOUBLE_EQ(g.dx(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(g.dx(1, 0), 1.0);

    const auto same = gauge_transform(Matrix::Constant(4, 2, 1.5), Matrix::Constant(4, 1, 0.2), Matrix::Ones(4, 1));
    EXPECT_LE(same.dx.cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE(same.du.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GaugeTransform, ReconstructionAndOrthogonality) {
    dst::Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + trial % 7, z = 1 + trial % 3;
        const Matrix alpha = random_orthonormal_alpha(n, z, rng);
        const Matrix x = random_matrix(n, 2, rng), u = random_matrix(n, 3, rng);
        const auto g = gauge_transform(x, u, alpha);
        for (int i = 0; i < n; ++i) {
            Vector rx = g.dx.row(i).transpose(), ru = g.du.row(i).transpose();
            for (int j = 0; j < z; ++j) {
                rx += alpha(i, j) * g.xbar.segment(2 * j, 2);
                ru += alpha(i, j) * g.ubar.segment(3 * j, 3);
            }
            EXPECT_LE((rx - x.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LE((ru - u.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-12);
        }
        for (int j = 0; j < z; ++j) {
            EXPECT_LE(aggregate(g.dx, alpha).cwiseAbs().maxCoeff(), 1e-10);
            EXPECT_LE(aggregate(g.du, alpha).cwiseAbs().maxCoeff(), 1e-10);
        }
    }
}

TEST(PerStepCost, Examples) {
    const auto m = fixtures::smart_grid();
    auto v = [](double s) { return Vector::Constant(1, s); };
    EXPECT_DOUBLE_EQ(per_step_cost(m, v(1.0), v(0.0), v(0.5), v(0.0)), 2.0);
    EXPECT_DOUBLE_EQ(per_step_cost(m, v(0.0), v(0.0), v(0.0), v(0.0)), 0.0);

    LqTeamModel::Definition d;
    d.n = 2;
    d.z = 1;
    d.hx = 2;
    d.hu = 2;
    d.A = d.B = d.Q = d.R = Matrix::Identity(2, 2);
    d.qbar = d.rbar = Matrix::Identity(2, 2);
    d.alpha = Matrix::Ones(2, 1);
    d.noise = d.initial = DistributionSpec::point(Vector::Zero(2));
    const LqTeamModel id(d);
    const Vector e0 = Vector::Unit(2, 0), e1 = Vector::Unit(2, 1);
    EXPECT_DOUBLE_EQ(per_step_cost(id, e0, e1, e1, e0), 4.0);
    EXPECT_DOUBLE_EQ(per_step_cost(id, 2.0 * e0, e1, Vector::Zero(2), Vector::Zero(2)), 5.0);
}

TEST(TeamAverageCost, DecomposesThroughGauge) {
    dst::Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = LqTeamModel(coupled_definition(4 + trial % 9, rng));
        const auto& d = m.def();
        const Matrix x = random_matrix(d.n, 2, rng), u = random_matrix(d.n, 1, rng);
        const auto g = gauge_transform(x, u, d.alpha);
        const auto agg = build_aggregate_matrices(m);
        double local = 0.0;
        for (int i = 0; i < d.n; ++i) {
            const Vector dx = g.dx.row(i).transpose(), du = g.du.row(i).transpose();
            local += dx.dot(d.Q * dx) + du.dot(d.R * du);
        }
        const double decomposed = local / d.n + g.xbar.dot(agg.Q * g.xbar) + g.ubar.dot(agg.R * g.ubar);
        const double direct = team_average_cost(m, x, u);
        EXPECT_NEAR(direct, decomposed, 1e-9 * std::max(1.0, std::abs(direct)));
    }
}

TEST(SimulateLqTeam, ZeroNoiseZeroStart) {
    dst::Rng rng(4);
    auto d = coupled_definition(5, rng);
    d.noise = DistributionSpec::point(Vector::Zero(2));
    d.initial = DistributionSpec::point(Vector::Zero(2));
    const LqTeamModel m(d);
    const LqController k = [](std::size_t, const Matrix& x, const Vector&) { return Matrix(x.col(0) * 0.3); };
    const auto log = simulate_lq_team(m, k, 10, 1);
    ASSERT_EQ(log.steps.size(), 10u);
    for (const auto& s : log.steps) {
        EXPECT_EQ(s.cost, 0.0);
        EXPECT_EQ(s.xbar, Vector::Zero(4));
    }
}

TEST(SimulateLqTeam, ConstantTrajectories) {
    LqTeamModel::Definition d;
    d.n = 1;
    d.A = d.B = d.Q = d.R = Matrix::Identity(1, 1);
    d.qbar = d.rbar = Matrix::Zero(1, 1);
    d.alpha = Matrix::Ones(1, 1);
    d.initial = DistributionSpec::point(Vector::Constant(1, 1.0));
    const LqController zero = [](std::size_t, const Matrix& x, const Vector&) { return Matrix(Matrix::Zero(x.rows(), 1)); };
    LqSimulationOptions opt;
    opt.record_agents = true;
    for (const auto& s : simulate_lq_team(LqTeamModel(d), zero, 6, 3, opt).steps) EXPECT_EQ(s.states(0, 0), 1.0);

    auto g = fixtures::smart_grid_definition();
    g.noise = DistributionSpec::point(Vector::Zero(1));
    opt.initial_states = Matrix::Constant(10, 1, 0.05);
    for (const auto& s : simulate_lq_team(LqTeamModel(g), zero, 6, 3, opt).steps) {
        EXPECT_EQ(s.states, Matrix::Constant(10, 1, 0.05));
        EXPECT_EQ(s.actions, Matrix::Zero(10, 1));
    }
}

TEST(SimulateLqTeam, ReproducibleAndDivergence) {
    const auto m = fixtures::smart_grid();
    const LqController k = [](std::size_t, const Matrix& x, const Vector&) { return Matrix(-0.5 * x); };
    const auto a = simulate_lq_team(m, k, 50, 77);
    const auto b = simulate_lq_team(m, k, 50, 77);
    for (std::size_t t = 0; t < 50; ++t) {
        EXPECT_EQ(a.steps[t].xbar, b.steps[t].xbar);
        EXPECT_EQ(a.steps[t].cost, b.steps[t].cost);
    }
    const auto c = simulate_lq_team(m, k, 50, 78);
    EXPECT_NE(a.steps[10].cost, c.steps[10].cost);

    const LqController blowup = [](std::size_t, const Matrix& x, const Vector&) { return Matrix(9.0 * x); };
    LqSimulationOptions opt;
    opt.initial_states = Matrix::Ones(10, 1);
    opt.divergence_threshold = 1e6;
    try {
        (void)simulate_lq_team(m, blowup, 50, 1, opt);
        FAIL();
    } catch (const dst::Diverged& e) {
        EXPECT_EQ(e.step(), 6u);
    }
    opt.truncate_on_divergence = true;
    const auto t = simulate_lq_team(m, blowup, 50, 1, opt);
    ASSERT_TRUE(t.diverged_at.has_value());
    EXPECT_EQ(*t.diverged_at, 6u);
}
