#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dst/finite/planning.hpp"

namespace dst::finite {

// Q_k(d, gamma) over (deep-state rank, deterministic-law index), plus the
// per-pair visit counters that drive the learning rate.
struct QTable {
    Eigen::MatrixXd q;
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> visits;

    QTable(Index num_deep_states, Index num_laws)
        : q(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_deep_states),
                                  static_cast<Eigen::Index>(num_laws))),
          visits(decltype(visits)::Zero(static_cast<Eigen::Index>(num_deep_states),
                                        static_cast<Eigen::Index>(num_laws))) {}

    double min_over_laws(Index rank) const { return q.row(static_cast<Eigen::Index>(rank)).minCoeff(); }
};

// Learning-rate rule eta = lambda(visits). Polynomial rates 1/(v+1)^omega with
// omega in (1/2, 1] satisfy sum eta = inf and sum eta^2 < inf; the constant
// rule does not and exists for diagnostics only.
class LearningSchedule {
public:
    enum class Kind { InverseVisits, Polynomial, Constant };

    static LearningSchedule inverse_visits() { return {Kind::InverseVisits, 1.0}; }
    static LearningSchedule polynomial(double omega);
    static LearningSchedule constant(double eta);

    // Rate for the update that follows `prior_visits` earlier updates of the pair.
    double rate(std::int64_t prior_visits) const;
    bool satisfies_robbins_monro() const;

    Kind kind() const { return kind_; }
    double parameter() const { return param_; }

private:
    LearningSchedule(Kind k, double p) : kind_(k), param_(p) {}
    Kind kind_;
    double param_;
};

// Q(d,g) <- (1 - eta) Q(d,g) + eta (cost + beta min_g' Q(d',g')).
void q_update(QTable& table, Index rank, Index law, double observed_cost, Index next_rank,
              double beta, const LearningSchedule& schedule);

struct BehaviorPolicy {
    enum class Kind { Uniform, EpsilonGreedy };
    Kind kind = Kind::Uniform;
    double epsilon = 0.1;
};

struct QLearningOptions {
    std::size_t episodes = 1000;
    std::size_t horizon = 20;
    BehaviorPolicy behavior;
    LearningSchedule schedule = LearningSchedule::inverse_visits();
    std::uint64_t seed = 0;
    std::size_t trace_every = 0;        // 0: only the final point
    std::size_t greedy_eval_trials = 0;  // 0: skip greedy-policy cost estimates
    std::size_t greedy_eval_horizon = 50;
};

struct QTracePoint {
    std::size_t iteration;
    double sup_error;   // NaN without a reference
    double greedy_cost; // NaN when not evaluated
};

struct QLearningResult {
    QTable table;
    std::vector<QTracePoint> trace;
};

QLearningResult run_q_learning(const FiniteTeamModel& model, const QLearningOptions& options,
                               const QTable* reference = nullptr);

// Lowest-index arg-min law per deep state.
std::vector<Index> greedy_policy(const QTable& table);
FiniteStrategy greedy_strategy(const FiniteTeamModel& model, const QTable& table);

// Q*(d, g) from the exact planner restricted to deterministic laws.
QTable q_star_oracle(const FiniteTeamModel& model, double tol = 1e-12, int max_iter = 100000);

double sup_norm_distance(const QTable& a, const QTable& b);

}  // namespace dst::finite
