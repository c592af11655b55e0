#include "dst/lq/team.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace dst::lq {

namespace {

constexpr double kOrthoTol = 1e-9;
constexpr double kSymTol = 1e-10;

bool is_symmetric(const Matrix& m) {
    return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= kSymTol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols)
        throw DimensionMismatch(std::string(name) + " must be " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
}

// Zero outside the diagonal z blocks of size b.
bool block_diagonal_only(const Matrix& m, int z, int b) {
    for (int i = 0; i < z; ++i)
        for (int j = 0; j < z; ++j)
            if (i != j && m.block(i * b, j * b, b, b).cwiseAbs().maxCoeff() > 0.0) return false;
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// DistributionSpec

DistributionSpec DistributionSpec::gaussian(Vector mean, Matrix cov) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw DimensionMismatch("gaussian covariance must match mean dimension");
    if (!is_symmetric(cov)) throw InvalidInput("covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
    if (es.eigenvalues().minCoeff() < -1e-12) throw InvalidInput("covariance must be positive semi-definite");
    DistributionSpec d;
    d.family_ = Family::Gaussian;
    d.mean_ = std::move(mean);
    d.cov_ = std::move(cov);
    d.factor_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    return d;
}

DistributionSpec DistributionSpec::uniform(Vector low, Vector high) {
    if (low.size() != high.size()) throw DimensionMismatch("uniform bounds must have equal length");
    if (((high - low).array() < 0.0).any()) throw InvalidInput("uniform bounds need low <= high");
    DistributionSpec d;
    d.family_ = Family::Uniform;
    d.mean_ = 0.5 * (low + high);
    d.cov_ = ((high - low).array().square() / 12.0).matrix().asDiagonal();
    d.low_ = std::move(low);
    d.high_ = std::move(high);
    return d;
}

DistributionSpec DistributionSpec::point(Vector value) {
    DistributionSpec d;
    d.family_ = Family::Point;
    d.cov_ = Matrix::Zero(value.size(), value.size());
    d.mean_ = std::move(value);
    return d;
}

Vector DistributionSpec::sample(Rng& rng) const {
    switch (family_) {
        case Family::Gaussian: {
            Vector g(mean_.size());
            for (Eigen::Index k = 0; k < g.size(); ++k) g(k) = standard_normal(rng);
            return mean_ + factor_ * g;
        }
        case Family::Uniform: {
            Vector v(mean_.size());
            for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = low_(k) + (high_(k) - low_(k)) * uniform01(rng);
            return v;
        }
        case Family::Point: return mean_;
    }
    return mean_;
}

DistributionSpec DistributionSpec::scaled_covariance(double factor) const {
    if (factor < 0.0) throw InvalidInput("covariance scale must be non-negative");
    switch (family_) {
        case Family::Gaussian: return gaussian(mean_, cov_ * factor);
        case Family::Uniform: {
            const Vector half = 0.5 * (high_ - low_) * std::sqrt(factor);
            return uniform(mean_ - half, mean_ + half);
        }
        case Family::Point: return *this;
    }
    return *this;
}

// ---------------------------------------------------------------------------
// Model

LqTeamModel::LqTeamModel(Definition def) : def_(std::move(def)) {
    const int z = def_.z;
    if (def_.abar.empty() && z >= 1 && def_.hx >= 1)
        def_.abar.assign(static_cast<std::size_t>(z), Matrix::Zero(def_.hx, z * def_.hx));
    if (def_.bbar.empty() && z >= 1 && def_.hx >= 1 && def_.hu >= 1)
        def_.bbar.assign(static_cast<std::size_t>(z), Matrix::Zero(def_.hx, z * def_.hu));
    validate();
}

void LqTeamModel::validate() const {
    const auto& d = def_;
    if (d.n < 1 || d.z < 1 || d.hx < 1 || d.hu < 1)
        throw InvalidInput("n, z, hx and hu must be positive");
    if (d.z > d.n) throw InvalidInput("cannot have more orthonormal features than agents");
    if (!(d.beta > 0.0 && d.beta <= 1.0)) throw InvalidInput("beta must lie in (0, 1]");
    expect_shape(d.A, d.hx, d.hx, "A");
    expect_shape(d.B, d.hx, d.hu, "B");
    expect_shape(d.Q, d.hx, d.hx, "Q");
    expect_shape(d.R, d.hu, d.hu, "R");
    expect_shape(d.qbar, d.z * d.hx, d.z * d.hx, "Qbar");
    expect_shape(d.rbar, d.z * d.hu, d.z * d.hu, "Rbar");
    expect_shape(d.alpha, d.n, d.z, "alpha");
    if (d.abar.size() != static_cast<std::size_t>(d.z) || d.bbar.size() != static_cast<std::size_t>(d.z))
        throw DimensionMismatch("Abar and Bbar need one matrix per feature");
    for (int j = 0; j < d.z; ++j) {
        expect_shape(d.abar[static_cast<std::size_t>(j)], d.hx, d.z * d.hx, "Abar[j]");
        expect_shape(d.bbar[static_cast<std::size_t>(j)], d.hx, d.z * d.hu, "Bbar[j]");
    }
    if (!d.alpha.allFinite()) throw InvalidInput("alpha must be finite");
    const double ortho = orthonormality_error(d.alpha);
    if (ortho > kOrthoTol)
        throw InvalidInput("alpha violates orthonormality (1/n) sum_i alpha_ij alpha_ik = [j == k]; max error " +
                           std::to_string(ortho));
    for (const auto* m : {&d.Q, &d.R, &d.qbar, &d.rbar})
        if (!is_symmetric(*m)) throw InvalidInput("cost matrices Q, R, Qbar, Rbar must be symmetric");
    if (d.noise.dim() != static_cast<std::size_t>(d.hx) || d.initial.dim() != static_cast<std::size_t>(d.hx))
        throw DimensionMismatch("noise and initial laws must have dimension hx");

    if (d.enforce_cost_definiteness) {
        const Matrix qb = block_diagonal(d.Q, d.z) + d.qbar;
        const Matrix rb = block_diagonal(d.R, d.z) + d.rbar;
        if (min_eigenvalue(d.Q) < -1e-10) throw InvalidInput("Q must be positive semi-definite");
        if (min_eigenvalue(qb) < -1e-10) throw InvalidInput("aggregate Qbar must be positive semi-definite");
        if (min_eigenvalue(d.R) <= 1e-12) throw InvalidInput("R must be positive definite");
        if (min_eigenvalue(rb) <= 1e-12) throw InvalidInput("aggregate Rbar must be positive definite");
    }

    if (d.weakly_coupled) {
        for (int j = 0; j < d.z; ++j) {
            Matrix a = d.abar[static_cast<std::size_t>(j)];
            Matrix b = d.bbar[static_cast<std::size_t>(j)];
            a.block(0, j * d.hx, d.hx, d.hx).setZero();
            b.block(0, j * d.hu, d.hx, d.hu).setZero();
            if (a.cwiseAbs().maxCoeff() > 0.0 || b.cwiseAbs().maxCoeff() > 0.0)
                throw InvalidInput("weakly coupled model: Abar[j], Bbar[j] may only act on feature j");
        }
        if (!block_diagonal_only(d.qbar, d.z, d.hx) || !block_diagonal_only(d.rbar, d.z, d.hu))
            throw InvalidInput("weakly coupled model: Qbar and Rbar must be block diagonal");
    }
}

LqTeamModel LqTeamModel::with_team(int n, Matrix alpha) const {
    Definition d = def_;
    d.n = n;
    d.alpha = std::move(alpha);
    return LqTeamModel(std::move(d));
}

Matrix embed_feature_block(const Matrix& block, int j, int z) {
    if (j < 0 || j >= z) throw InvalidInput("feature index out of range");
    Matrix out = Matrix::Zero(block.rows(), z * block.cols());
    out.block(0, j * block.cols(), block.rows(), block.cols()) = block;
    return out;
}

double orthonormality_error(const Matrix& alpha) {
    const Matrix gram = alpha.transpose() * alpha / static_cast<double>(alpha.rows());
    return (gram - Matrix::Identity(alpha.cols(), alpha.cols())).cwiseAbs().maxCoeff();
}

Matrix block_diagonal(const Matrix& block, int copies) {
    Matrix out = Matrix::Zero(copies * block.rows(), copies * block.cols());
    for (int j = 0; j < copies; ++j) out.block(j * block.rows(), j * block.cols(), block.rows(), block.cols()) = block;
    return out;
}

Matrix block_diagonal(const std::vector<Matrix>& blocks) {
    Eigen::Index rows = 0, cols = 0;
    for (const auto& b : blocks) {
        rows += b.rows();
        cols += b.cols();
    }
    Matrix out = Matrix::Zero(rows, cols);
    Eigen::Index r = 0, c = 0;
    for (const auto& b : blocks) {
        out.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return out;
}

AggregateMatrices build_aggregate_matrices(const LqTeamModel& model) {
    const auto& d = model.def();
    AggregateMatrices m;
    m.A = block_diagonal(d.A, d.z);
    m.B = block_diagonal(d.B, d.z);
    for (int j = 0; j < d.z; ++j) {
        m.A.middleRows(j * d.hx, d.hx) += d.abar[static_cast<std::size_t>(j)];
        m.B.middleRows(j * d.hx, d.hx) += d.bbar[static_cast<std::size_t>(j)];
    }
    m.Q = block_diagonal(d.Q, d.z) + d.qbar;
    m.R = block_diagonal(d.R, d.z) + d.rbar;
    return m;
}

// ---------------------------------------------------------------------------
// Aggregation, gauge transform, cost

Vector aggregate(const Matrix& values, const Matrix& alpha) {
    if (values.rows() != alpha.rows()) throw DimensionMismatch("aggregate: one row per agent required");
    const Matrix per_feature = alpha.transpose() * values / static_cast<double>(values.rows());  // z x h
    Vector out(per_feature.size());
    for (Eigen::Index j = 0; j < per_feature.rows(); ++j)
        out.segment(j * per_feature.cols(), per_feature.cols()) = per_feature.row(j).transpose();
    return out;
}

namespace {

// z x h view of a stacked feature vector.
Matrix unstack(const Vector& v, Eigen::Index z) {
    const Eigen::Index h = v.size() / z;
    Matrix m(z, h);
    for (Eigen::Index j = 0; j < z; ++j) m.row(j) = v.segment(j * h, h).transpose();
    return m;
}

double average_cost(const LqTeamModel& model, const Matrix& states, const Matrix& actions, const Vector& xbar,
                    const Vector& ubar) {
    const auto& d = model.def();
    const double local = ((states * d.Q).cwiseProduct(states)).sum() + ((actions * d.R).cwiseProduct(actions)).sum();
    return local / static_cast<double>(states.rows()) + xbar.dot(d.qbar * xbar) + ubar.dot(d.rbar * ubar);
}

}  // namespace

GaugeDecomposition gauge_transform(const Matrix& states, const Matrix& actions, const Matrix& alpha) {
    if (states.rows() != alpha.rows() || actions.rows() != alpha.rows())
        throw DimensionMismatch("gauge_transform: one row per agent required");
    GaugeDecomposition g;
    g.xbar = aggregate(states, alpha);
    g.ubar = aggregate(actions, alpha);
    g.dx = states - alpha * unstack(g.xbar, alpha.cols());
    g.du = actions - alpha * unstack(g.ubar, alpha.cols());
    return g;
}

double per_step_cost(const LqTeamModel& model, const Vector& x, const Vector& u, const Vector& xbar,
                     const Vector& ubar) {
    const auto& d = model.def();
    if (x.size() != d.hx || u.size() != d.hu || xbar.size() != d.z * d.hx || ubar.size() != d.z * d.hu)
        throw DimensionMismatch("per_step_cost: argument dimensions do not match the model");
    return x.dot(d.Q * x) + u.dot(d.R * u) + xbar.dot(d.qbar * xbar) + ubar.dot(d.rbar * ubar);
}

double team_average_cost(const LqTeamModel& model, const Matrix& states, const Matrix& actions) {
    return average_cost(model, states, actions, aggregate(states, model.alpha()), aggregate(actions, model.alpha()));
}

// ---------------------------------------------------------------------------
// Simulation

LqTrajectoryLog simulate_lq_team(const LqTeamModel& model, const LqController& controller,
                                 std::size_t horizon, std::uint64_t seed,
                                 const LqSimulationOptions& options) {
    const auto& d = model.def();
    Rng rng(seed);
    Matrix X(d.n, d.hx);
    if (options.initial_states) {
        expect_shape(*options.initial_states, d.n, d.hx, "initial states");
        X = *options.initial_states;
    } else {
        for (int i = 0; i < d.n; ++i) X.row(i) = d.initial.sample(rng).transpose();
    }

    LqTrajectoryLog log;
    log.seed = seed;
    log.steps.reserve(horizon);
    const Matrix At = d.A.transpose();
    const Matrix Bt = d.B.transpose();
    Matrix coupling(d.z, d.hx);
    Matrix noise(d.n, d.hx);

    for (std::size_t t = 1; t <= horizon; ++t) {
        const Vector xbar = aggregate(X, d.alpha);
        const Matrix U = controller(t, X, xbar);
        expect_shape(U, d.n, d.hu, "controller output");
        const Vector ubar = aggregate(U, d.alpha);

        LqTrajectoryLog::Step step{t, xbar, average_cost(model, X, U, xbar, ubar), {}, {}};
        if (options.record_agents) {
            step.states = X;
            step.actions = U;
        }
        log.steps.push_back(std::move(step));

        for (int j = 0; j < d.z; ++j)
            coupling.row(j) = (d.abar[static_cast<std::size_t>(j)] * xbar + d.bbar[static_cast<std::size_t>(j)] * ubar).transpose();
        for (int i = 0; i < d.n; ++i) noise.row(i) = d.noise.sample(rng).transpose();
        X = X * At + U * Bt + d.alpha * coupling + noise;
        if (!X.allFinite() || X.cwiseAbs().maxCoeff() > options.divergence_threshold) {
            if (!options.truncate_on_divergence) throw Diverged(t);
            log.diverged_at = t;
            break;
        }
    }
    return log;
}

Matrix random_orthonormal_alpha(int n, int z, Rng& rng) {
    if (z < 1 || z > n) throw InvalidInput("need 1 <= z <= n");
    Matrix g(n, z);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = standard_normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    const Matrix thin = qr.householderQ() * Matrix::Identity(n, z);
    return thin * std::sqrt(static_cast<double>(n));
}

}  // namespace dst::lq
