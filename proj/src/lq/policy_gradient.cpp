#include "dst/lq/policy_gradient.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace dst::lq {

void PgHyperparams::validate() const {
    if (L < 1 || T < 1) throw InvalidInput("L and T must be at least 1");
    if (!(r > 0.0)) throw InvalidInput("smoothing radius r must be positive");
    if (!(eta > 0.0)) throw InvalidInput("step size eta must be positive");
    if (!(beta > 0.0 && beta <= 1.0)) throw InvalidInput("beta must lie in (0, 1]");
    if (!(cost_ceiling > 0.0)) throw InvalidInput("cost ceiling must be positive");
}

Matrix sample_perturbation(Eigen::Index rows, Eigen::Index cols, double r, Rng& rng) {
    if (!(r > 0.0)) throw InvalidInput("perturbation radius must be positive");
    if (rows < 1 || cols < 1) throw InvalidInput("perturbation shape must be non-empty");
    Matrix g(rows, cols);
    double norm = 0.0;
    while (norm == 0.0) {
        for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = standard_normal(rng);
        norm = g.norm();
    }
    return g * (r / norm);
}

Matrix sample_perturbation(Eigen::Index rows, Eigen::Index cols, double r, std::uint64_t seed) {
    Rng rng(seed);
    return sample_perturbation(rows, cols, r, rng);
}

RolloutResult rollout_cost(const LqTeamModel& model, const GainPair& gains, std::size_t T, std::uint64_t seed,
                           double divergence_threshold, double cost_ceiling) {
    DeepRiccatiSolution s;
    s.theta = gains.theta;
    s.thetabold = gains.thetabold;
    s.z = model.z();
    if (s.theta.rows() != model.hu() || s.theta.cols() != model.hx() || s.thetabold.rows() != model.z() * model.hu() ||
        s.thetabold.cols() != model.z() * model.hx())
        throw DimensionMismatch("gain shapes do not match the model");
    LqSimulationOptions opts;
    opts.divergence_threshold = divergence_threshold;
    opts.truncate_on_divergence = true;
    const LqTrajectoryLog log = simulate_lq_team(model, dss_controller(s, model.alpha()), T, seed, opts);
    RolloutResult out;
    out.costs.assign(T, cost_ceiling);
    for (std::size_t t = 0; t < log.steps.size(); ++t) {
        const double c = log.steps[t].cost;
        out.costs[t] = std::isfinite(c) ? std::min(c, cost_ceiling) : cost_ceiling;
    }
    out.diverged = log.diverged_at.has_value();
    if (out.diverged) std::fill(out.costs.begin() + static_cast<std::ptrdiff_t>(*log.diverged_at), out.costs.end(), cost_ceiling);
    return out;
}

GainPair gradient_estimates(const std::vector<std::vector<double>>& costs, const std::vector<GainPair>& perturbations,
                            int z, int hx, int hu, const PgHyperparams& hyper) {
    if (costs.size() != perturbations.size() || costs.empty())
        throw DimensionMismatch("need one perturbation pair per cost sequence");
    GainPair g{Matrix::Zero(hu, hx), Matrix::Zero(z * hu, z * hx)};
    for (std::size_t l = 0; l < costs.size(); ++l) {
        const auto& p = perturbations[l];
        if (p.theta.rows() != hu || p.theta.cols() != hx || p.thetabold.rows() != z * hu || p.thetabold.cols() != z * hx)
            throw DimensionMismatch("perturbation shape does not match the gains");
        double total = 0.0, disc = 1.0;
        for (double c : costs[l]) {
            total += disc * c;
            disc *= hyper.beta;
        }
        g.theta += total * p.theta;
        g.thetabold += total * p.thetabold;
    }
    const double denom = static_cast<double>(hyper.T) * static_cast<double>(costs.size()) * hyper.r * hyper.r;
    g.theta *= static_cast<double>(hx * hu) / denom;
    g.thetabold *= static_cast<double>(z * z * hx * hu) / denom;
    return g;
}

GainPair update_gains(const GainPair& gains, const GainPair& grads, double eta) {
    if (gains.theta.rows() != grads.theta.rows() || gains.theta.cols() != grads.theta.cols() ||
        gains.thetabold.rows() != grads.thetabold.rows() || gains.thetabold.cols() != grads.thetabold.cols())
        throw DimensionMismatch("gradient shapes do not match the gains");
    return {gains.theta - eta * grads.theta, gains.thetabold - eta * grads.thetabold};
}

GainTrace run_policy_gradient(const LqTeamModel& model, const PgHyperparams& hyper,
                              const std::optional<GainPair>& initial, const std::optional<GainPair>& reference) {
    hyper.validate();
    const int z = model.z(), hx = model.hx(), hu = model.hu();
    GainPair gains = initial.value_or(GainPair{Matrix::Zero(hu, hx), Matrix::Zero(z * hu, z * hx)});
    if (gains.theta.rows() != hu || gains.theta.cols() != hx || gains.thetabold.rows() != z * hu ||
        gains.thetabold.cols() != z * hx)
        throw DimensionMismatch("initial gain shapes do not match the model");

    const unsigned workers = std::max(1u, std::min<unsigned>(hyper.threads ? hyper.threads : std::thread::hardware_concurrency(),
                                                             static_cast<unsigned>(hyper.L)));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    GainTrace trace;
    trace.rows.reserve(hyper.iters);
    std::vector<std::vector<double>> costs(hyper.L);
    std::vector<GainPair> perts(hyper.L);
    std::vector<char> diverged(hyper.L);

    for (std::size_t k = 1; k <= hyper.iters; ++k) {
        auto work = [&](std::size_t begin, std::size_t stride) {
            for (std::size_t l = begin; l < hyper.L; l += stride) {
                Rng rng(derive_seed(hyper.seed, k, l));
                perts[l].theta = sample_perturbation(hu, hx, hyper.r, rng);
                perts[l].thetabold = sample_perturbation(z * hu, z * hx, hyper.r, rng);
                const GainPair trial{gains.theta + perts[l].theta, gains.thetabold + perts[l].thetabold};
                RolloutResult res = rollout_cost(model, trial, hyper.T, rng(), hyper.divergence_threshold,
                                                 hyper.cost_ceiling);
                costs[l] = std::move(res.costs);
                diverged[l] = res.diverged;
            }
        };
        if (workers == 1) {
            work(0, 1);
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
            for (auto& th : pool) th.join();
        }

        double mean_cost = 0.0;
        std::size_t n_div = 0;
        for (std::size_t l = 0; l < hyper.L; ++l) {
            double total = 0.0, disc = 1.0;
            for (double c : costs[l]) {
                total += disc * c;
                disc *= hyper.beta;
            }
            mean_cost += total / static_cast<double>(hyper.T);
            n_div += diverged[l] ? 1 : 0;
        }
        mean_cost /= static_cast<double>(hyper.L);

        gains = update_gains(gains, gradient_estimates(costs, perts, z, hx, hu, hyper), hyper.eta);
        GainTraceRow row{k, gains, mean_cost, nan, nan, n_div};
        if (reference) {
            row.dist_theta = (gains.theta - reference->theta).norm();
            row.dist_thetabold = (gains.thetabold - reference->thetabold).norm();
        }
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

}  // namespace dst::lq
