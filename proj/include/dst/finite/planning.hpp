#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dst/finite/team.hpp"

namespace dst::finite {

// All mappings X -> U, indexed in mixed radix with state 0 as the least
// significant digit: index = sum_x a(x) |U|^x.
class DeterministicLawSpace {
public:
    DeterministicLawSpace(Index num_states, Index num_actions);

    Index size() const { return size_; }
    std::vector<Index> actions(Index index) const;
    Index index(const std::vector<Index>& actions) const;
    LocalLaw law(Index index) const;
    std::vector<LocalLaw> all() const;

private:
    Index num_states_;
    Index num_actions_;
    Index size_;
};

using LawGrid = std::vector<LocalLaw>;

LawGrid deterministic_law_grid(Index num_states, Index num_actions);

// Every law whose rows lie on the 1/step grid of the action simplex. Rows are
// ordered by composition rank; state 0 varies fastest.
LawGrid mixed_law_grid(Index num_states, Index num_actions, int step);

// Expected cost and exact successor law for every (deep state, grid law) pair.
struct DssTransitions {
    struct Entry {
        double cost;
        std::vector<std::pair<Index, double>> successors;  // (rank, probability)
    };
    CompositionSpace space;
    LawGrid laws;
    std::vector<std::vector<Entry>> entries;  // [rank][law]
};

DssTransitions build_dss_transitions(const FiniteTeamModel& model, const LawGrid& laws,
                                     double bound = kDefaultEnumerationBound);

struct ValueTable {
    CompositionSpace space;
    LawGrid laws;
    std::vector<double> values;  // by deep-state rank
    std::vector<Index> policy;   // law index per rank
    std::vector<double> gap_history;

    const LocalLaw& law_at(const DeepState& d) const { return laws[policy[space.rank(d)]]; }
    double value_at(const DeepState& d) const { return values[space.rank(d)]; }
};

// Q(d, law) = cbar(d, law) + beta * sum_d' P(d' | d, law) V(d').
double dss_backup(const DssTransitions& tr, double beta, const std::vector<double>& values,
                  Index rank, Index law);

ValueTable value_iteration_dss(const FiniteTeamModel& model, const LawGrid& laws, double tol,
                               int max_iter, double bound = kDefaultEnumerationBound);
ValueTable value_iteration_dss(const DssTransitions& tr, double beta, double tol, int max_iter);

// Strategies choose the local law at step t (1-based) given the realized deep
// state. Mean-field strategies ignore the deep state.
struct FiniteStrategy {
    std::string name;
    std::function<LocalLaw(std::size_t t, const DeepState& d)> law;
};

FiniteStrategy extract_dss_strategy(const ValueTable& table);
FiniteStrategy fixed_law_strategy(std::vector<LocalLaw> laws, std::string name = "fixed");

class MeanField {
public:
    MeanField() = default;
    explicit MeanField(std::vector<double> probs);

    const std::vector<double>& probs() const { return probs_; }
    double operator[](Index x) const { return probs_[x]; }
    Index size() const { return probs_.size(); }

private:
    std::vector<double> probs_;
};

JointMeasure mean_field_measure(const MeanField& m, const LocalLaw& gamma);
MeanField mean_field_step(const FiniteTeamModel& model, const MeanField& m, const LocalLaw& gamma);
double mean_field_cost(const FiniteTeamModel& model, const MeanField& m, const LocalLaw& gamma);

// Nearest point of the q-grid on the simplex (counts summing to q). Ties go to
// the lexicographically smallest point.
std::vector<int> project_to_grid(const MeanField& m, int q);

struct QuantizedValueTable {
    int q;
    CompositionSpace grid;
    LawGrid laws;
    std::vector<double> values;
    std::vector<Index> policy;
    std::vector<Index> successor;  // [point * laws + law] -> projected next point
    std::vector<double> stage_cost;
    std::vector<double> gap_history;

    MeanField point(Index rank) const;
    Index locate(const MeanField& m) const { return grid.rank(project_to_grid(m, q)); }
    const LocalLaw& law_at(const MeanField& m) const { return laws[policy[locate(m)]]; }
};

QuantizedValueTable value_iteration_ns(const FiniteTeamModel& model, int q, const LawGrid& laws,
                                       double tol, int max_iter);

// Open-loop laws gamma_t = psi(m_t) with m_1 = P_X and m_{t+1} = f(m_t, gamma_t).
std::vector<LocalLaw> ns_law_sequence(const FiniteTeamModel& model,
                                      const QuantizedValueTable& table, std::size_t horizon);
FiniteStrategy ns_strategy(const FiniteTeamModel& model, const QuantizedValueTable& table,
                           std::size_t horizon);

struct TrajectoryLog {
    struct Step {
        std::size_t t;
        DeepState state;
        std::vector<Index> agent_states;   // empty unless requested
        std::vector<Index> agent_actions;  // empty unless requested
        double cost;                       // per-agent average
    };
    std::vector<Step> steps;
    std::uint64_t seed = 0;
    std::string strategy;
};

struct SimulationOptions {
    std::optional<DeepState> initial;  // otherwise agents drawn i.i.d. from initial_law
    bool record_agents = false;
};

TrajectoryLog simulate_finite_team(const FiniteTeamModel& model, const FiniteStrategy& strategy,
                                   std::size_t horizon, std::uint64_t seed,
                                   const SimulationOptions& options = {});

struct CostEstimate {
    double mean;
    double std_error;
};

// beta < 1: (1 - beta) sum_t beta^(t-1) c_t; beta = 1: (1/T) sum_t c_t.
double objective_from_costs(const std::vector<double>& costs, double beta);

CostEstimate evaluate_strategy_cost(const FiniteTeamModel& model, const FiniteStrategy& strategy,
                                    double beta, std::size_t horizon, std::size_t trials,
                                    std::uint64_t seed, const SimulationOptions& options = {});

}  // namespace dst::finite
