#include "dst/lq/planning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <complex>
#include <memory>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace dst::lq {

namespace {

using CMatrix = Eigen::MatrixXcd;

double min_eig(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

Matrix psd_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

Matrix riccati_map(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, double beta,
                   const Matrix& P) {
    const Matrix BtP = B.transpose() * P;
    const Matrix S = BtP * B + R / beta;
    const Matrix K = S.ldlt().solve(BtP * A);
    Matrix next = Q + beta * A.transpose() * P * A - beta * (BtP * A).transpose() * K;
    return 0.5 * (next + next.transpose());
}

// Smallest singular value of [lambda I - A; C] (or [lambda I - A, B]) over the
// eigenvalues of A with |lambda| >= 1.
bool pbh_passes(const Matrix& A, const Matrix& other, bool columns, double tol) {
    Eigen::EigenSolver<Matrix> es(A, false);
    const Eigen::Index h = A.rows();
    const double scale = std::max({1.0, A.cwiseAbs().maxCoeff(), other.size() ? other.cwiseAbs().maxCoeff() : 0.0});
    for (Eigen::Index k = 0; k < h; ++k) {
        const std::complex<double> lambda = es.eigenvalues()(k);
        if (std::abs(lambda) < 1.0 - tol) continue;
        CMatrix shifted = lambda * CMatrix::Identity(h, h) - A.cast<std::complex<double>>();
        CMatrix stacked;
        if (columns) {
            stacked.resize(h, h + other.cols());
            stacked << shifted, other.cast<std::complex<double>>();
        } else {
            stacked.resize(h + other.rows(), h);
            stacked << shifted, other.cast<std::complex<double>>();
        }
        Eigen::JacobiSVD<CMatrix> svd(stacked);
        if (svd.singularValues().minCoeff() <= tol * scale) return false;
    }
    return true;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

double spectral_radius(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_stabilizable(const Matrix& A, const Matrix& B, double tol) { return pbh_passes(A, B, true, tol); }

bool is_detectable(const Matrix& A, const Matrix& C, double tol) { return pbh_passes(A, C, false, tol); }

Matrix riccati_gain(const Matrix& A, const Matrix& B, const Matrix& R, double beta, const Matrix& P) {
    const Matrix BtP = B.transpose() * P;
    return -(BtP * B + R / beta).ldlt().solve(BtP * A);
}

double riccati_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, double beta,
                        const Matrix& P) {
    return (riccati_map(A, B, Q, R, beta, P) - P).cwiseAbs().maxCoeff();
}

RiccatiResult solve_discounted_riccati(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                       double beta, double tol, int max_iter) {
    if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() || Q.cols() != A.cols() ||
        R.rows() != B.cols() || R.cols() != B.cols())
        throw DimensionMismatch("Riccati: inconsistent matrix shapes");
    if (!(beta > 0.0 && beta <= 1.0)) throw InvalidInput("beta must lie in (0, 1]");
    Matrix P = Q;
    double gap = 0.0;
    for (int k = 1; k <= max_iter; ++k) {
        Matrix next = riccati_map(A, B, Q, R, beta, P);
        gap = (next - P).cwiseAbs().maxCoeff();
        P = std::move(next);
        if (!P.allFinite()) throw NonConvergence("Riccati iteration produced non-finite values", gap);
        if (gap <= tol) {
            const double res = riccati_residual(A, B, Q, R, beta, P);
            if (res <= tol) return {P, riccati_gain(A, B, R, beta, P), res, k};
        }
    }
    throw NonConvergence("Riccati iteration did not reach tolerance", gap);
}

DeepRiccatiSolution solve_deep_riccati(const LqTeamModel& model, double tol, int max_iter) {
    const auto& d = model.def();
    const AggregateMatrices agg = build_aggregate_matrices(model);
    const double sb = std::sqrt(d.beta);

    if (min_eig(d.Q) < -1e-10) throw AssumptionViolation("Q positive semi-definite", "min eigenvalue " + fmt(min_eig(d.Q)));
    if (min_eig(d.R) <= 1e-12) throw AssumptionViolation("R positive definite", "min eigenvalue " + fmt(min_eig(d.R)));
    if (min_eig(agg.Q) < -1e-10)
        throw AssumptionViolation("aggregate Q positive semi-definite", "min eigenvalue " + fmt(min_eig(agg.Q)));
    if (min_eig(agg.R) <= 1e-12)
        throw AssumptionViolation("aggregate R positive definite", "min eigenvalue " + fmt(min_eig(agg.R)));
    if (!is_stabilizable(sb * d.A, sb * d.B))
        throw AssumptionViolation("(A, B) stabilizable", "PBH rank test failed on the discount-scaled pair");
    if (!is_stabilizable(sb * agg.A, sb * agg.B))
        throw AssumptionViolation("(Abold, Bbold) stabilizable", "PBH rank test failed on the discount-scaled pair");
    if (!is_detectable(sb * d.A, psd_sqrt(d.Q)))
        throw AssumptionViolation("(A, Q^1/2) detectable", "PBH rank test failed on the discount-scaled pair");
    if (!is_detectable(sb * agg.A, psd_sqrt(agg.Q)))
        throw AssumptionViolation("(Abold, Qbold^1/2) detectable", "PBH rank test failed on the discount-scaled pair");

    const RiccatiResult local = solve_discounted_riccati(d.A, d.B, d.Q, d.R, d.beta, tol, max_iter);
    const RiccatiResult bold = solve_discounted_riccati(agg.A, agg.B, agg.Q, agg.R, d.beta, tol, max_iter);
    DeepRiccatiSolution s;
    s.P = local.P;
    s.theta = local.gain;
    s.residual = local.residual;
    s.Pbold = bold.P;
    s.thetabold = bold.gain;
    s.residual_bold = bold.residual;
    s.z = d.z;
    return s;
}

std::vector<WeaklyCoupledBlock> solve_weakly_coupled(const LqTeamModel& model, double tol, int max_iter) {
    const auto& d = model.def();
    if (!d.weakly_coupled) throw InvalidInput("solve_weakly_coupled needs a weakly coupled model");
    std::vector<WeaklyCoupledBlock> out;
    for (int j = 0; j < d.z; ++j) {
        const auto js = static_cast<std::size_t>(j);
        const Matrix A = d.A + d.abar[js].block(0, j * d.hx, d.hx, d.hx);
        const Matrix B = d.B + d.bbar[js].block(0, j * d.hu, d.hx, d.hu);
        const Matrix Q = d.Q + d.qbar.block(j * d.hx, j * d.hx, d.hx, d.hx);
        const Matrix R = d.R + d.rbar.block(j * d.hu, j * d.hu, d.hu, d.hu);
        const double sb = std::sqrt(d.beta);
        if (min_eig(R) <= 1e-12) throw AssumptionViolation("R + Rbar^j positive definite", "feature " + std::to_string(j));
        if (!is_stabilizable(sb * A, sb * B))
            throw AssumptionViolation("(A + Abar^j, B + Bbar^j) stabilizable", "feature " + std::to_string(j));
        if (!is_detectable(sb * A, psd_sqrt(Q)))
            throw AssumptionViolation("(A + Abar^j, (Q + Qbar^j)^1/2) detectable", "feature " + std::to_string(j));
        const RiccatiResult r = solve_discounted_riccati(A, B, Q, R, d.beta, tol, max_iter);
        out.push_back({r.P, r.gain, r.residual});
    }
    return out;
}

namespace {

Matrix control_from_reference(const DeepRiccatiSolution& s, const Matrix& alpha, const Matrix& states,
                              const Vector& ref) {
    const Eigen::Index hx = s.theta.cols();
    const Eigen::Index hu = s.theta.rows();
    const Eigen::Index z = alpha.cols();
    if (ref.size() != z * hx) throw DimensionMismatch("controller: deep state has the wrong length");
    Matrix V(z, hu);
    const Vector all = s.thetabold * ref;
    for (Eigen::Index j = 0; j < z; ++j)
        V.row(j) = (all.segment(j * hu, hu) - s.theta * ref.segment(j * hx, hx)).transpose();
    return states * s.theta.transpose() + alpha * V;
}

}  // namespace

LqController dss_controller(const DeepRiccatiSolution& solution, const Matrix& alpha) {
    return [solution, alpha](std::size_t, const Matrix& states, const Vector& xbar) {
        return control_from_reference(solution, alpha, states, xbar);
    };
}

Vector propagate_mean_field(const Vector& m, const AggregateMatrices& aggregates, const Matrix& thetabold) {
    if (m.size() != aggregates.A.rows()) throw DimensionMismatch("mean field has the wrong length");
    return (aggregates.A + aggregates.B * thetabold) * m;
}

Matrix mean_field_closed_loop(const LqTeamModel& model, const DeepRiccatiSolution& solution) {
    const AggregateMatrices agg = build_aggregate_matrices(model);
    return agg.A + agg.B * block_diagonal(solution.theta, model.z());
}

LqController ns_controller(const LqTeamModel& model, const DeepRiccatiSolution& solution, const Vector& m1) {
    const double rho = spectral_radius(mean_field_closed_loop(model, solution));
    if (!(rho < 1.0))
        throw AssumptionViolation("mean-field closed loop Schur stable",
                                  "spectral radius of Abold + Bbold blockdiag(theta) is " + fmt(rho));
    const AggregateMatrices agg = build_aggregate_matrices(model);
    if (m1.size() != agg.A.rows()) throw DimensionMismatch("m_1 has the wrong length");
    auto path = std::make_shared<std::vector<Vector>>(1, m1);
    const Matrix step = agg.A + agg.B * solution.thetabold;
    return [solution, alpha = model.alpha(), path, step](std::size_t t, const Matrix& states, const Vector&) {
        if (t == 0) throw InvalidInput("time index starts at 1");
        while (path->size() < t) path->push_back(step * path->back());
        return control_from_reference(solution, alpha, states, (*path)[t - 1]);
    };
}

Vector expected_initial_deep_state(const LqTeamModel& model) {
    const auto& d = model.def();
    const Vector alpha_mean = d.alpha.colwise().mean().transpose();
    Vector m(d.z * d.hx);
    for (int j = 0; j < d.z; ++j) m.segment(j * d.hx, d.hx) = alpha_mean(j) * d.initial.mean();
    return m;
}

bool AssumptionReport::all_satisfied() const {
    for (const auto& c : checks)
        if (!c.satisfied) return false;
    return true;
}

const AssumptionCheck* AssumptionReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

AssumptionReport check_assumptions(const LqTeamModel& model, const DeepRiccatiSolution* solution) {
    const auto& d = model.def();
    const AggregateMatrices agg = build_aggregate_matrices(model);
    AssumptionReport rep;
    auto add = [&](std::string name, bool ok, std::string detail) {
        rep.checks.push_back({std::move(name), ok, std::move(detail)});
    };
    auto eig_check = [&](const char* name, const Matrix& m, bool strict) {
        const double e = min_eig(m);
        add(name, strict ? e > 1e-12 : e >= -1e-10, "min eigenvalue " + fmt(e));
    };
    eig_check("Q_psd", d.Q, false);
    eig_check("R_pd", d.R, true);
    eig_check("Qbold_psd", agg.Q, false);
    eig_check("Rbold_pd", agg.R, true);
    add("AB_stabilizable", is_stabilizable(d.A, d.B), "PBH rank test, tolerance 1e-8");
    add("AbBb_stabilizable", is_stabilizable(agg.A, agg.B), "PBH rank test, tolerance 1e-8");
    add("AQ_detectable", is_detectable(d.A, psd_sqrt(d.Q)), "PBH rank test, tolerance 1e-8");
    add("AbQb_detectable", is_detectable(agg.A, psd_sqrt(agg.Q)), "PBH rank test, tolerance 1e-8");

    const auto& W = d.noise.covariance();
    const auto& S0 = d.initial.covariance();
    const bool bounded = W.allFinite() && S0.allFinite() && min_eig(W) >= -1e-12 && min_eig(S0) >= -1e-12;
    add("covariances_bounded", bounded, "noise and initial covariances finite and PSD");

    if (solution) {
        rep.mean_field_spectral_radius = spectral_radius(mean_field_closed_loop(model, *solution));
        add("mean_field_stable", rep.mean_field_spectral_radius < 1.0,
            "spectral radius " + fmt(rep.mean_field_spectral_radius) +
                " (Hurwitz read as Schur: radius < 1 for the discrete-time loop)");
    } else {
        rep.mean_field_spectral_radius = std::numeric_limits<double>::quiet_NaN();
        add("mean_field_stable", false, "no Riccati solution available");
    }

    eig_check("noise_cov_pd", W, true);
    eig_check("initial_cov_pd", S0, true);
    return rep;
}

double riccati_predicted_cost(const DeepRiccatiSolution& solution, const LqTeamModel& model) {
    const auto& d = model.def();
    const AggregateMatrices agg = build_aggregate_matrices(model);
    const double rho_local = spectral_radius(std::sqrt(d.beta) * (d.A + d.B * solution.theta));
    const double rho_bold = spectral_radius(std::sqrt(d.beta) * (agg.A + agg.B * solution.thetabold));
    if (!(rho_local < 1.0) || !(rho_bold < 1.0))
        throw AssumptionViolation("closed loop stable", "spectral radii " + fmt(rho_local) + ", " + fmt(rho_bold));
    if (d.noise.mean().cwiseAbs().maxCoeff() > 0.0)
        throw InvalidInput("predicted cost assumes zero-mean noise");

    const double n = d.n;
    const Matrix& W = d.noise.covariance();
    const double noise_term =
        (1.0 - d.z / n) * (solution.P * W).trace() + (solution.Pbold * block_diagonal(W, d.z)).trace() / n;
    if (d.beta >= 1.0) return noise_term;

    const Vector& mu = d.initial.mean();
    const Matrix& S0 = d.initial.covariance();
    const Vector m1 = expected_initial_deep_state(model);
    const Matrix xbar_cov = block_diagonal(S0, d.z) / n;
    auto expect_quad = [&](const Matrix& M) { return m1.dot(M * m1) + (M * xbar_cov).trace(); };
    const double local_all = (solution.P * (S0 + mu * mu.transpose())).trace();
    const double dx_part = local_all - expect_quad(block_diagonal(solution.P, d.z));
    const double initial_term = dx_part + expect_quad(solution.Pbold);
    return (1.0 - d.beta) * initial_term + d.beta * noise_term;
}

double lq_objective(const std::vector<double>& costs, double beta) {
    if (costs.empty()) return 0.0;
    long double total = 0.0L;
    if (beta >= 1.0) {
        for (double c : costs) total += c;
        return static_cast<double>(total / static_cast<long double>(costs.size()));
    }
    long double disc = 1.0L;
    for (double c : costs) {
        total += disc * c;
        disc *= beta;
    }
    return static_cast<double>((1.0L - beta) * total);
}

std::vector<double> lq_trial_objectives(const LqTeamModel& model, const LqController& controller,
                                        std::size_t horizon, std::size_t trials, std::uint64_t seed) {
    if (horizon < 1 || trials < 1) throw InvalidInput("horizon and trials must be at least 1");
    std::vector<double> out;
    out.reserve(trials);
    std::vector<double> costs;
    for (std::size_t k = 0; k < trials; ++k) {
        const LqTrajectoryLog log = simulate_lq_team(model, controller, horizon, derive_seed(seed, k));
        costs.clear();
        for (const auto& s : log.steps) costs.push_back(s.cost);
        out.push_back(lq_objective(costs, model.beta()));
    }
    return out;
}

LqCostEstimate summarize_objectives(const std::vector<double>& v) {
    if (v.empty()) throw InvalidInput("no objectives to summarize");
    long double sum = 0.0L;
    for (double x : v) sum += x;
    const double mean = static_cast<double>(sum / static_cast<long double>(v.size()));
    if (v.size() < 2) return {mean, 0.0};
    long double ss = 0.0L;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = static_cast<double>(ss / static_cast<long double>(v.size() - 1));
    return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace dst::lq
