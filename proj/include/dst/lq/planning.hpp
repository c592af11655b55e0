#pragma once

#include <string>
#include <vector>

#include "dst/lq/team.hpp"

namespace dst::lq {

struct RiccatiResult {
    Matrix P;
    Matrix gain;  // -(B'PB + R/beta)^{-1} B'PA
    double residual = 0.0;
    int iterations = 0;
};

// Fixed-point iteration of P <- Q + beta A'PA - beta A'PB (B'PB + R/beta)^{-1} B'PA from P = Q.
RiccatiResult solve_discounted_riccati(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                       double beta, double tol = 1e-10, int max_iter = 100000);

// Max-abs residual of the discounted Riccati equation at P.
double riccati_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, double beta,
                        const Matrix& P);

Matrix riccati_gain(const Matrix& A, const Matrix& B, const Matrix& R, double beta, const Matrix& P);

struct DeepRiccatiSolution {
    Matrix P;          // hx x hx
    Matrix Pbold;      // z hx x z hx
    Matrix theta;      // hu x hx
    Matrix thetabold;  // z hu x z hx
    double residual = 0.0;
    double residual_bold = 0.0;
    int z = 1;
};

// Checks stabilizability and detectability on the discount-scaled pairs, then solves both equations.
// Throws AssumptionViolation naming the failed condition or NonConvergence.
DeepRiccatiSolution solve_deep_riccati(const LqTeamModel& model, double tol = 1e-10, int max_iter = 100000);

struct WeaklyCoupledBlock {
    Matrix P;      // hx x hx
    Matrix theta;  // hu x hx
    double residual = 0.0;
};

// One Riccati per feature in (A + Abar^jj, B + Bbar^jj, Q + Qbar^jj, R + Rbar^jj).
std::vector<WeaklyCoupledBlock> solve_weakly_coupled(const LqTeamModel& model, double tol = 1e-10,
                                                    int max_iter = 100000);

// u^i = theta x^i + sum_j alpha(i,j) (thetabold^j xbar - theta xbar^j).
LqController dss_controller(const DeepRiccatiSolution& solution, const Matrix& alpha);

// Mean-field version: xbar replaced by m_t = (Abold + Bbold thetabold)^{t-1} m_1.
LqController ns_controller(const LqTeamModel& model, const DeepRiccatiSolution& solution, const Vector& m1);

Vector propagate_mean_field(const Vector& m, const AggregateMatrices& aggregates, const Matrix& thetabold);

// E[xbar_1] under the model's initial law.
Vector expected_initial_deep_state(const LqTeamModel& model);

double spectral_radius(const Matrix& m);

// Abold + Bbold blockdiag(theta, ..., theta).
Matrix mean_field_closed_loop(const LqTeamModel& model, const DeepRiccatiSolution& solution);

bool is_stabilizable(const Matrix& A, const Matrix& B, double tol = 1e-8);
bool is_detectable(const Matrix& A, const Matrix& C, double tol = 1e-8);

struct AssumptionCheck {
    std::string name;
    bool satisfied;
    std::string detail;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;
    double mean_field_spectral_radius = 0.0;

    bool all_satisfied() const;
    const AssumptionCheck* find(const std::string& name) const;
};

// Report-only. Pass nullptr when no solution is available; the stability
// condition is then reported as unsatisfied.
AssumptionReport check_assumptions(const LqTeamModel& model, const DeepRiccatiSolution* solution);

// Per-agent objective of the DSS controller.
//   beta < 1: (1 - beta) sum_t beta^{t-1} E c_t
//           = (1 - beta) E[(1/n) sum_i dx'P dx + xbar'Pbold xbar]_{t=1}
//             + beta [(1 - z/n) tr(P W) + tr(Pbold blockdiag(W)) / n]
//   beta = 1: long-run average, (1 - z/n) tr(P W) + tr(Pbold blockdiag(W)) / n
// W is the noise covariance; the noise must be zero-mean.
double riccati_predicted_cost(const DeepRiccatiSolution& solution, const LqTeamModel& model);

// beta < 1: (1 - beta) sum_t beta^{t-1} c_t; beta = 1: (1/T) sum_t c_t.
double lq_objective(const std::vector<double>& costs, double beta);

// One objective per trial; trial k uses seed derive_seed(seed, k), so two
// controllers evaluated with the same seed see the same initial states and noise.
std::vector<double> lq_trial_objectives(const LqTeamModel& model, const LqController& controller,
                                        std::size_t horizon, std::size_t trials, std::uint64_t seed);

struct LqCostEstimate {
    double mean;
    double std_error;
};

LqCostEstimate summarize_objectives(const std::vector<double>& objectives);

}  // namespace dst::lq
