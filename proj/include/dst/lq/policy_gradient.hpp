#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dst/lq/planning.hpp"

namespace dst::lq {

struct PgHyperparams {
    std::size_t L = 100;      // trajectories per iteration
    std::size_t T = 10;       // rollout horizon
    double r = 0.15;          // smoothing radius (Frobenius)
    double eta = 0.3;         // step size
    double beta = 1.0;
    std::size_t iters = 5000;
    std::uint64_t seed = 0;
    double cost_ceiling = 1e8;
    double divergence_threshold = 1e9;
    unsigned threads = 0;     // 0: hardware concurrency

    void validate() const;
};

// theta: hu x hx, thetabold: z hu x z hx.
struct GainPair {
    Matrix theta;
    Matrix thetabold;
};

// Uniform on the Frobenius sphere of radius r.
Matrix sample_perturbation(Eigen::Index rows, Eigen::Index cols, double r, Rng& rng);
Matrix sample_perturbation(Eigen::Index rows, Eigen::Index cols, double r, std::uint64_t seed);

struct RolloutResult {
    std::vector<double> costs;  // length T
    bool diverged = false;
};

// Per-agent average costs c_1..c_T under u^i = theta x^i + sum_j alpha(i,j)(thetabold^j xbar - theta xbar^j).
// A diverged rollout fills the remaining steps with the ceiling; every cost is capped by it.
RolloutResult rollout_cost(const LqTeamModel& model, const GainPair& gains, std::size_t T, std::uint64_t seed,
                           double divergence_threshold = 1e9, double cost_ceiling = 1e8);

// grad   = hx hu / (T L r^2)     sum_l sum_t beta^{t-1} c_t^l theta~_l
// gradbar = z^2 hx hu / (T L r^2) sum_l sum_t beta^{t-1} c_t^l thetabold~_l
GainPair gradient_estimates(const std::vector<std::vector<double>>& costs, const std::vector<GainPair>& perturbations,
                            int z, int hx, int hu, const PgHyperparams& hyper);

GainPair update_gains(const GainPair& gains, const GainPair& grads, double eta);

struct GainTraceRow {
    std::size_t k;        // gains after k updates
    GainPair gains;
    double mean_cost;     // mean over the L rollouts of sum_t beta^{t-1} c_t / T
    double dist_theta;    // Frobenius distance to the reference, NaN without one
    double dist_thetabold;
    std::size_t diverged; // rollouts that diverged in this iteration
};

struct GainTrace {
    std::vector<GainTraceRow> rows;
};

GainTrace run_policy_gradient(const LqTeamModel& model, const PgHyperparams& hyper,
                              const std::optional<GainPair>& initial = std::nullopt,
                              const std::optional<GainPair>& reference = std::nullopt);

}  // namespace dst::lq
