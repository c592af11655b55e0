#include "dst/finite/qlearning.hpp"

#include <cmath>
#include <limits>

namespace dst::finite {

LearningSchedule LearningSchedule::polynomial(double omega) {
    if (!(omega > 0.5 && omega <= 1.0)) throw InvalidInput("polynomial rate exponent must lie in (0.5, 1]");
    return {Kind::Polynomial, omega};
}

LearningSchedule LearningSchedule::constant(double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidInput("constant rate must lie in [0, 1]");
    return {Kind::Constant, eta};
}

double LearningSchedule::rate(std::int64_t prior_visits) const {
    const double k = static_cast<double>(prior_visits) + 1.0;
    switch (kind_) {
        case Kind::InverseVisits: return 1.0 / k;
        case Kind::Polynomial: return std::pow(k, -param_);
        case Kind::Constant: return param_;
    }
    return 0.0;
}

bool LearningSchedule::satisfies_robbins_monro() const { return kind_ != Kind::Constant; }

void q_update(QTable& table, Index rank, Index law, double observed_cost, Index next_rank,
              double beta, const LearningSchedule& schedule) {
    const auto r = static_cast<Eigen::Index>(rank);
    const auto l = static_cast<Eigen::Index>(law);
    if (r >= table.q.rows() || l >= table.q.cols() ||
        static_cast<Eigen::Index>(next_rank) >= table.q.rows())
        throw InvalidInput("Q-table index out of range");
    const double eta = schedule.rate(table.visits(r, l));
    const double target = observed_cost + beta * table.min_over_laws(next_rank);
    table.q(r, l) = (1.0 - eta) * table.q(r, l) + eta * target;
    ++table.visits(r, l);
}

std::vector<Index> greedy_policy(const QTable& table) {
    std::vector<Index> policy(static_cast<Index>(table.q.rows()));
    for (Eigen::Index r = 0; r < table.q.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index l = 1; l < table.q.cols(); ++l)
            if (table.q(r, l) < table.q(r, best)) best = l;
        policy[static_cast<Index>(r)] = static_cast<Index>(best);
    }
    return policy;
}

FiniteStrategy greedy_strategy(const FiniteTeamModel& model, const QTable& table) {
    const DeterministicLawSpace laws(model.num_states(), model.num_actions());
    const CompositionSpace space(model.num_states(), model.n());
    return {"greedy", [laws, space, policy = greedy_policy(table)](std::size_t, const DeepState& d) {
                return laws.law(policy[space.rank(d)]);
            }};
}

double sup_norm_distance(const QTable& a, const QTable& b) {
    if (a.q.rows() != b.q.rows() || a.q.cols() != b.q.cols())
        throw DimensionMismatch("Q-tables differ in shape");
    return (a.q - b.q).cwiseAbs().maxCoeff();
}

QTable q_star_oracle(const FiniteTeamModel& model, double tol, int max_iter) {
    const auto tr = build_dss_transitions(model, deterministic_law_grid(model.num_states(), model.num_actions()));
    const ValueTable vt = value_iteration_dss(tr, model.beta(), tol, max_iter);
    QTable out(tr.space.size(), tr.laws.size());
    for (Index r = 0; r < tr.space.size(); ++r)
        for (Index k = 0; k < tr.laws.size(); ++k)
            out.q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                dss_backup(tr, model.beta(), vt.values, r, k);
    return out;
}

namespace {

// One realized team step under a deterministic law; returns (cost, next profile).
double sample_step(const FiniteTeamModel& model, const std::vector<Index>& law,
                   std::vector<Index>& states, Rng& rng) {
    const Index nx = model.num_states();
    const Index nu = model.num_actions();
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nu));
    for (Index s : states) ++counts(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(law[s]));
    const JointMeasure joint = JointDistribution(counts).measure();
    long double cost = 0.0L;
    for (Index s : states) cost += model.cost(s, law[s], joint);
    for (Index& s : states) {
        const Index u = law[s];
        const double r = uniform01(rng);
        double acc = 0.0;
        Index pick = s;
        for (Index y = 0; y < nx; ++y) {
            const double p = model.kernel(y, s, u, joint);
            if (p <= 0.0) continue;
            acc += p;
            pick = y;
            if (r < acc) break;
        }
        s = pick;
    }
    return static_cast<double>(cost / static_cast<long double>(states.size()));
}

}  // namespace

QLearningResult run_q_learning(const FiniteTeamModel& model, const QLearningOptions& options,
                               const QTable* reference) {
    if (model.beta() >= 1.0) throw UnsupportedDiscount("Q-learning needs beta < 1");
    const DeterministicLawSpace laws(model.num_states(), model.num_actions());
    const CompositionSpace space(model.num_states(), model.n());
    QLearningResult result{QTable(space.size(), laws.size()), {}};
    if (reference && (reference->q.rows() != result.table.q.rows() ||
                      reference->q.cols() != result.table.q.cols()))
        throw DimensionMismatch("reference Q-table has the wrong shape");

    Rng rng(options.seed);
    const std::size_t total = options.episodes * options.horizon;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    auto record = [&](std::size_t it) {
        QTracePoint p{it, nan, nan};
        if (reference) p.sup_error = sup_norm_distance(result.table, *reference);
        if (options.greedy_eval_trials > 0) {
            p.greedy_cost = evaluate_strategy_cost(model, greedy_strategy(model, result.table), model.beta(),
                                                   options.greedy_eval_horizon, options.greedy_eval_trials,
                                                   derive_seed(options.seed, 0x9e37, it))
                                .mean;
        }
        result.trace.push_back(p);
    };

    std::vector<Index> states(static_cast<Index>(model.n()));
    std::size_t it = 0;
    for (std::size_t ep = 0; ep < options.episodes; ++ep) {
        for (Index& s : states) {
            const double r = uniform01(rng);
            double acc = 0.0;
            s = model.num_states() - 1;
            for (Index x = 0; x < model.num_states(); ++x) {
                acc += model.initial_law()[x];
                if (r < acc) {
                    s = x;
                    break;
                }
            }
        }
        Index rank = space.rank(empirical_from_profile(model, states));
        for (std::size_t h = 0; h < options.horizon; ++h) {
            Index law = static_cast<Index>(rng() % laws.size());
            if (options.behavior.kind == BehaviorPolicy::Kind::EpsilonGreedy &&
                uniform01(rng) >= options.behavior.epsilon) {
                Eigen::Index best = 0;
                result.table.q.row(static_cast<Eigen::Index>(rank)).minCoeff(&best);
                law = static_cast<Index>(best);
            }
            const double cost = sample_step(model, laws.actions(law), states, rng);
            const Index next = space.rank(empirical_from_profile(model, states));
            q_update(result.table, rank, law, cost, next, model.beta(), options.schedule);
            rank = next;
            ++it;
            if (options.trace_every > 0 && it % options.trace_every == 0 && it != total) record(it);
        }
    }
    record(it);
    return result;
}

}  // namespace dst::finite
