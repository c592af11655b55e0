#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dst/common.hpp"

// Finite-state, finite-action exchangeable teams. Agents interact only through
// the empirical distribution of (state, action) pairs; everything here is
// expressed in counts so that exact enumeration is possible on small teams.
namespace dst::finite {

using Index = std::size_t;

// Fractional joint measure over X x U. Holds D(x,u) = count/n for a realized
// team, or the mean-field product m(x) gamma(x)(u).
using JointMeasure = Eigen::MatrixXd;

using KernelFn = std::function<double(Index next, Index x, Index u, const JointMeasure& joint)>;
using CostFn = std::function<double(Index x, Index u, const JointMeasure& joint)>;

inline constexpr double kDefaultEnumerationBound = 1e6;

class FiniteTeamModel {
public:
    struct Definition {
        std::vector<std::string> states;
        std::vector<std::string> actions;
        int n = 1;
        double beta = 0.9;
        std::vector<double> initial_law;
        KernelFn kernel;
        CostFn cost;
        bool kernel_depends_on_joint = true;
        bool cost_depends_on_joint = true;
    };

    // Validates the definition. Kernel rows are checked at the uniform joint
    // measure and at every point-mass measure.
    explicit FiniteTeamModel(Definition def);

    // kernel[x][u][x'] and cost[x][u]; neither depends on the joint measure.
    static FiniteTeamModel from_tables(std::vector<std::string> states,
                                       std::vector<std::string> actions, int n, double beta,
                                       std::vector<double> initial_law,
                                       std::vector<std::vector<std::vector<double>>> kernel,
                                       std::vector<std::vector<double>> cost);

    double kernel(Index next, Index x, Index u, const JointMeasure& joint) const {
        return def_.kernel(next, x, u, joint);
    }
    double cost(Index x, Index u, const JointMeasure& joint) const {
        return def_.cost(x, u, joint);
    }

    Index num_states() const { return def_.states.size(); }
    Index num_actions() const { return def_.actions.size(); }
    int n() const { return def_.n; }
    double beta() const { return def_.beta; }
    const std::vector<double>& initial_law() const { return def_.initial_law; }
    const std::vector<std::string>& state_names() const { return def_.states; }
    const std::vector<std::string>& action_names() const { return def_.actions; }
    bool kernel_depends_on_joint() const { return def_.kernel_depends_on_joint; }
    bool cost_depends_on_joint() const { return def_.cost_depends_on_joint; }

    Index state_index(const std::string& name) const;
    Index action_index(const std::string& name) const;

    // Same dynamics and cost with a different team size / discount.
    FiniteTeamModel with_agents(int n) const;
    FiniteTeamModel with_beta(double beta) const;
    FiniteTeamModel with_initial_law(std::vector<double> law) const;

    const Definition& definition() const { return def_; }

private:
    void validate() const;
    Definition def_;
};

// Agent counts per local state; entry k is n * d(s_k).
class DeepState {
public:
    DeepState() = default;
    explicit DeepState(std::vector<int> counts);

    const std::vector<int>& counts() const { return counts_; }
    int count(Index x) const { return counts_[x]; }
    int n() const { return n_; }
    Index size() const { return counts_.size(); }
    double fraction(Index x) const { return static_cast<double>(counts_[x]) / n_; }
    std::vector<double> fractions() const;

    friend bool operator==(const DeepState&, const DeepState&) = default;

private:
    std::vector<int> counts_;
    int n_ = 0;
};

// Compositions of n into k parts in colexicographic order. Used to index every
// table keyed by deep state (and by points of the quantized simplex).
class CompositionSpace {
public:
    CompositionSpace(Index parts, int total);

    Index size() const { return size_; }
    Index parts() const { return parts_; }
    int total() const { return total_; }

    Index rank(const std::vector<int>& counts) const;
    std::vector<int> unrank(Index rank) const;

    Index rank(const DeepState& d) const { return rank(d.counts()); }
    DeepState state(Index rank) const { return DeepState(unrank(rank)); }

private:
    Index parts_;
    int total_;
    Index size_;
};

// n * D(x,u) for a realized team.
class JointDistribution {
public:
    JointDistribution(Index num_states, Index num_actions, int n);
    explicit JointDistribution(Eigen::MatrixXi counts);

    const Eigen::MatrixXi& counts() const { return counts_; }
    int n() const { return n_; }
    JointMeasure measure() const;
    DeepState state_counts() const;

    friend bool operator==(const JointDistribution& a, const JointDistribution& b) {
        return a.n_ == b.n_ && a.counts_ == b.counts_;
    }

private:
    Eigen::MatrixXi counts_;
    int n_;
};

// gamma: one probability row over U per local state.
class LocalLaw {
public:
    LocalLaw() = default;
    explicit LocalLaw(Eigen::MatrixXd probs);

    // Puts mass one on actions[x] in row x.
    static LocalLaw deterministic(const std::vector<Index>& actions, Index num_actions);

    const Eigen::MatrixXd& probs() const { return probs_; }
    double operator()(Index x, Index u) const { return probs_(x, u); }
    Index num_states() const { return static_cast<Index>(probs_.rows()); }
    Index num_actions() const { return static_cast<Index>(probs_.cols()); }

    // The action with mass one in every row, if the law is deterministic.
    std::optional<std::vector<Index>> as_deterministic() const;

    friend bool operator==(const LocalLaw& a, const LocalLaw& b) { return a.probs_ == b.probs_; }

private:
    Eigen::MatrixXd probs_;
};

// Probability vector over {0, ..., support_size - 1}.
struct CountDistribution {
    std::vector<double> probs;
    Index support_size() const { return probs.size(); }
    double operator[](Index k) const { return probs[k]; }
};

struct WeightedJoint {
    JointDistribution joint;
    double prob;
};

struct WeightedDeepState {
    DeepState state;
    double prob;
};

CountDistribution binomial(int trials, double p);
CountDistribution convolve(const CountDistribution& a, const CountDistribution& b);

DeepState empirical_from_profile(const FiniteTeamModel& model, const std::vector<Index>& profile);
DeepState empirical_from_profile(const FiniteTeamModel& model,
                                 const std::vector<std::string>& profile);

// Exact law of the realized joint distribution given (d, gamma): independent
// multinomials across local states. Zero-probability outcomes are omitted.
std::vector<WeightedJoint> joint_action_distribution(const FiniteTeamModel& model,
                                                     const DeepState& d, const LocalLaw& gamma,
                                                     double bound = kDefaultEnumerationBound);

// D(x,u) = d(x) gamma(x)(u).
JointMeasure plug_in_measure(const DeepState& d, const LocalLaw& gamma);

// Probability that one agent in x moves to next under gamma. A joint-dependent
// kernel is read at the plug-in measure.
double mixed_transition(const FiniteTeamModel& model, Index next, Index x, const LocalLaw& gamma,
                        const DeepState& d);

CountDistribution phi(const FiniteTeamModel& model, Index next, Index x, const LocalLaw& gamma,
                      const DeepState& d);

// Law of the number of agents landing in `next`; support size n + 1.
CountDistribution bar_phi(const FiniteTeamModel& model, Index next, const LocalLaw& gamma,
                          const DeepState& d);

double deep_state_marginal(const FiniteTeamModel& model, const DeepState& d,
                           const LocalLaw& gamma, Index next, int y);

// Brute-force law of the next deep state, conditioning the kernel on each
// realized joint distribution. Sorted by deep-state rank.
std::vector<WeightedDeepState> joint_deep_kernel_exact(const FiniteTeamModel& model,
                                                       const DeepState& d, const LocalLaw& gamma,
                                                       double bound = kDefaultEnumerationBound);

// Expected per-agent cost of one step.
double expected_cost(const FiniteTeamModel& model, const DeepState& d, const LocalLaw& gamma,
                     double bound = kDefaultEnumerationBound);

}  // namespace dst::finite
