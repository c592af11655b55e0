#include "dst/finite/planning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dst::finite {

namespace {

constexpr double kSimplexTol = 1e-12;

// Lowest index among entries within rounding distance of the minimum.
Index argmin_lowest(const std::vector<double>& v) {
    const double best = *std::min_element(v.begin(), v.end());
    const double slack = 1e-12 * std::max(1.0, std::abs(best));
    for (Index i = 0; i < v.size(); ++i)
        if (v[i] <= best + slack) return i;
    return 0;
}

double sup_gap(const std::vector<double>& a, const std::vector<double>& b) {
    double g = 0.0;
    for (Index i = 0; i < a.size(); ++i) g = std::max(g, std::abs(a[i] - b[i]));
    return g;
}

void require_discounted(double beta) {
    if (beta >= 1.0)
        throw UnsupportedDiscount("exact planning needs beta < 1; use simulation for beta = 1");
}

Index sample_index(const double* probs, Index size, Rng& rng) {
    const double r = uniform01(rng);
    double acc = 0.0;
    Index last = 0;
    for (Index i = 0; i < size; ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last = i;
        if (r < acc) return i;
    }
    return last;
}

}  // namespace

// ---------------------------------------------------------------------------
// Law grids

DeterministicLawSpace::DeterministicLawSpace(Index num_states, Index num_actions)
    : num_states_(num_states), num_actions_(num_actions), size_(1) {
    if (num_states == 0 || num_actions == 0) throw InvalidInput("alphabets must be non-empty");
    for (Index x = 0; x < num_states; ++x) {
        if (size_ > std::numeric_limits<Index>::max() / num_actions)
            throw InvalidInput("deterministic law space too large");
        size_ *= num_actions;
    }
}

std::vector<Index> DeterministicLawSpace::actions(Index index) const {
    if (index >= size_) throw InvalidInput("law index out of range");
    std::vector<Index> a(num_states_);
    for (Index x = 0; x < num_states_; ++x) {
        a[x] = index % num_actions_;
        index /= num_actions_;
    }
    return a;
}

Index DeterministicLawSpace::index(const std::vector<Index>& actions) const {
    if (actions.size() != num_states_) throw InvalidInput("law needs one action per state");
    Index idx = 0;
    for (Index x = num_states_; x-- > 0;) {
        if (actions[x] >= num_actions_) throw InvalidInput("action index out of range");
        idx = idx * num_actions_ + actions[x];
    }
    return idx;
}

LocalLaw DeterministicLawSpace::law(Index index) const {
    return LocalLaw::deterministic(actions(index), num_actions_);
}

std::vector<LocalLaw> DeterministicLawSpace::all() const {
    std::vector<LocalLaw> out;
    out.reserve(size_);
    for (Index i = 0; i < size_; ++i) out.push_back(law(i));
    return out;
}

LawGrid deterministic_law_grid(Index num_states, Index num_actions) {
    return DeterministicLawSpace(num_states, num_actions).all();
}

LawGrid mixed_law_grid(Index num_states, Index num_actions, int step) {
    if (step < 1) throw InvalidInput("law grid step must be >= 1");
    const CompositionSpace rows(num_actions, step);
    Index total = 1;
    for (Index x = 0; x < num_states; ++x) total *= rows.size();
    LawGrid out;
    out.reserve(total);
    for (Index i = 0; i < total; ++i) {
        Eigen::MatrixXd p(static_cast<Eigen::Index>(num_states), static_cast<Eigen::Index>(num_actions));
        Index rest = i;
        for (Index x = 0; x < num_states; ++x) {
            const auto c = rows.unrank(rest % rows.size());
            rest /= rows.size();
            for (Index u = 0; u < num_actions; ++u)
                p(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u)) = static_cast<double>(c[u]) / step;
        }
        out.emplace_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exact DSS planner

DssTransitions build_dss_transitions(const FiniteTeamModel& model, const LawGrid& laws,
                                     double bound) {
    if (laws.empty()) throw InvalidInput("law grid must be non-empty");
    DssTransitions tr{CompositionSpace(model.num_states(), model.n()), laws, {}};
    tr.entries.resize(tr.space.size());
    for (Index r = 0; r < tr.space.size(); ++r) {
        const DeepState d = tr.space.state(r);
        tr.entries[r].reserve(laws.size());
        for (const auto& gamma : laws) {
            DssTransitions::Entry e;
            e.cost = expected_cost(model, d, gamma, bound);
            for (const auto& w : joint_deep_kernel_exact(model, d, gamma, bound))
                if (w.prob > 0.0) e.successors.emplace_back(tr.space.rank(w.state), w.prob);
            tr.entries[r].push_back(std::move(e));
        }
    }
    return tr;
}

double dss_backup(const DssTransitions& tr, double beta, const std::vector<double>& values,
                  Index rank, Index law) {
    const auto& e = tr.entries[rank][law];
    long double future = 0.0L;
    for (const auto& [next, p] : e.successors) future += static_cast<long double>(p) * values[next];
    return e.cost + beta * static_cast<double>(future);
}

ValueTable value_iteration_dss(const DssTransitions& tr, double beta, double tol, int max_iter) {
    require_discounted(beta);
    const Index ns = tr.space.size();
    const Index nl = tr.laws.size();
    ValueTable table{tr.space, tr.laws, std::vector<double>(ns, 0.0), std::vector<Index>(ns, 0), {}};
    const double threshold = tol * (1.0 - beta) / beta;

    std::vector<double> next(ns);
    std::vector<double> q(nl);
    double gap = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        for (Index r = 0; r < ns; ++r) {
            for (Index k = 0; k < nl; ++k) q[k] = dss_backup(tr, beta, table.values, r, k);
            const Index best = argmin_lowest(q);
            next[r] = q[best];
            table.policy[r] = best;
        }
        gap = sup_gap(next, table.values);
        table.values.swap(next);
        table.gap_history.push_back(gap);
        if (gap <= threshold) {
            // Greedy policy with respect to the returned values.
            for (Index r = 0; r < ns; ++r) {
                for (Index k = 0; k < nl; ++k) q[k] = dss_backup(tr, beta, table.values, r, k);
                table.policy[r] = argmin_lowest(q);
            }
            return table;
        }
    }
    throw NonConvergence("DSS value iteration did not converge", gap);
}

ValueTable value_iteration_dss(const FiniteTeamModel& model, const LawGrid& laws, double tol,
                               int max_iter, double bound) {
    require_discounted(model.beta());
    return value_iteration_dss(build_dss_transitions(model, laws, bound), model.beta(), tol, max_iter);
}

FiniteStrategy extract_dss_strategy(const ValueTable& table) {
    return {"dss", [table](std::size_t, const DeepState& d) { return table.law_at(d); }};
}

FiniteStrategy fixed_law_strategy(std::vector<LocalLaw> laws, std::string name) {
    if (laws.empty()) throw InvalidInput("fixed strategy needs at least one law");
    return {std::move(name), [laws = std::move(laws)](std::size_t t, const DeepState&) {
                const std::size_t i = std::min(t == 0 ? 0 : t - 1, laws.size() - 1);
                return laws[i];
            }};
}

// ---------------------------------------------------------------------------
// Mean field

MeanField::MeanField(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw InvalidInput("mean field must be non-empty");
    double s = 0.0;
    for (double p : probs_) {
        if (!(p >= -kSimplexTol && p <= 1.0 + kSimplexTol))
            throw InvalidInput("mean field entries must lie in [0, 1]");
        s += p;
    }
    if (std::abs(s - 1.0) > kSimplexTol) throw InvalidInput("mean field must sum to 1");
}

JointMeasure mean_field_measure(const MeanField& m, const LocalLaw& gamma) {
    JointMeasure j = gamma.probs();
    for (Index x = 0; x < m.size(); ++x) j.row(static_cast<Eigen::Index>(x)) *= m[x];
    return j;
}

MeanField mean_field_step(const FiniteTeamModel& model, const MeanField& m, const LocalLaw& gamma) {
    if (m.size() != model.num_states()) throw InvalidInput("mean field size mismatch");
    const JointMeasure joint = mean_field_measure(m, gamma);
    std::vector<long double> next(model.num_states(), 0.0L);
    for (Index x = 0; x < model.num_states(); ++x) {
        if (m[x] == 0.0) continue;
        for (Index u = 0; u < model.num_actions(); ++u) {
            const double w = m[x] * gamma(x, u);
            if (w == 0.0) continue;
            for (Index y = 0; y < model.num_states(); ++y)
                next[y] += static_cast<long double>(w) * model.kernel(y, x, u, joint);
        }
    }
    // Renormalize so long iterations stay on the simplex.
    const long double total = std::accumulate(next.begin(), next.end(), 0.0L);
    std::vector<double> out(next.size());
    for (Index y = 0; y < out.size(); ++y) out[y] = static_cast<double>(next[y] / total);
    return MeanField(std::move(out));
}

double mean_field_cost(const FiniteTeamModel& model, const MeanField& m, const LocalLaw& gamma) {
    if (m.size() != model.num_states()) throw InvalidInput("mean field size mismatch");
    const JointMeasure joint = mean_field_measure(m, gamma);
    long double c = 0.0L;
    for (Index x = 0; x < model.num_states(); ++x)
        for (Index u = 0; u < model.num_actions(); ++u) {
            const double w = joint(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u));
            if (w > 0.0) c += static_cast<long double>(w) * model.cost(x, u, joint);
        }
    return static_cast<double>(c);
}

std::vector<int> project_to_grid(const MeanField& m, int q) {
    if (q < 1) throw InvalidInput("quantization q must be >= 1");
    const Index k = m.size();
    std::vector<int> c(k);
    std::vector<double> frac(k);
    int placed = 0;
    for (Index i = 0; i < k; ++i) {
        double y = m[i] * q;
        const double r = std::round(y);
        if (std::abs(y - r) < 1e-9) y = r;
        c[i] = static_cast<int>(std::floor(y));
        frac[i] = y - c[i];
        placed += c[i];
    }
    std::vector<Index> order(k);
    std::iota(order.begin(), order.end(), Index{0});
    // Largest remainders first; among equal remainders later coordinates
    // receive the extra unit, which yields the lexicographically smallest point.
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (std::abs(frac[a] - frac[b]) > 1e-12) return frac[a] > frac[b];
        return a > b;
    });
    for (int i = 0; i < q - placed; ++i) ++c[order[static_cast<Index>(i)]];
    return c;
}

MeanField QuantizedValueTable::point(Index rank) const {
    const auto c = grid.unrank(rank);
    std::vector<double> p(c.size());
    for (Index i = 0; i < p.size(); ++i) p[i] = static_cast<double>(c[i]) / q;
    return MeanField(std::move(p));
}

QuantizedValueTable value_iteration_ns(const FiniteTeamModel& model, int q, const LawGrid& laws,
                                       double tol, int max_iter) {
    require_discounted(model.beta());
    if (laws.empty()) throw InvalidInput("law grid must be non-empty");
    if (q < 1) throw InvalidInput("quantization q must be >= 1");
    const double beta = model.beta();
    QuantizedValueTable t{q, CompositionSpace(model.num_states(), q), laws, {}, {}, {}, {}, {}};
    const Index ng = t.grid.size();
    const Index nl = laws.size();
    t.successor.resize(ng * nl);
    t.stage_cost.resize(ng * nl);
    for (Index g = 0; g < ng; ++g) {
        const MeanField m = t.point(g);
        for (Index k = 0; k < nl; ++k) {
            t.stage_cost[g * nl + k] = mean_field_cost(model, m, laws[k]);
            t.successor[g * nl + k] = t.locate(mean_field_step(model, m, laws[k]));
        }
    }
    t.values.assign(ng, 0.0);
    t.policy.assign(ng, 0);
    std::vector<double> next(ng), qv(nl);
    const double threshold = tol * (1.0 - beta) / beta;
    double gap = std::numeric_limits<double>::infinity();
    auto sweep = [&](std::vector<double>& out) {
        for (Index g = 0; g < ng; ++g) {
            for (Index k = 0; k < nl; ++k)
                qv[k] = t.stage_cost[g * nl + k] + beta * t.values[t.successor[g * nl + k]];
            const Index best = argmin_lowest(qv);
            out[g] = qv[best];
            t.policy[g] = best;
        }
    };
    for (int it = 0; it < max_iter; ++it) {
        sweep(next);
        gap = sup_gap(next, t.values);
        t.values.swap(next);
        t.gap_history.push_back(gap);
        if (gap <= threshold) {
            sweep(next);  // refresh the greedy policy; values stay as returned
            return t;
        }
    }
    throw NonConvergence("mean-field value iteration did not converge", gap);
}

std::vector<LocalLaw> ns_law_sequence(const FiniteTeamModel& model,
                                      const QuantizedValueTable& table, std::size_t horizon) {
    std::vector<LocalLaw> laws;
    laws.reserve(horizon);
    MeanField m(model.initial_law());
    for (std::size_t t = 0; t < horizon; ++t) {
        laws.push_back(table.law_at(m));
        m = mean_field_step(model, m, laws.back());
    }
    return laws;
}

FiniteStrategy ns_strategy(const FiniteTeamModel& model, const QuantizedValueTable& table,
                           std::size_t horizon) {
    if (horizon == 0) horizon = 1;
    return fixed_law_strategy(ns_law_sequence(model, table, horizon), "ns");
}

// ---------------------------------------------------------------------------
// Simulation

TrajectoryLog simulate_finite_team(const FiniteTeamModel& model, const FiniteStrategy& strategy,
                                   std::size_t horizon, std::uint64_t seed,
                                   const SimulationOptions& options) {
    const Index nx = model.num_states();
    const Index nu = model.num_actions();
    const int n = model.n();
    Rng rng(seed);

    std::vector<Index> states;
    states.reserve(static_cast<Index>(n));
    if (options.initial) {
        if (options.initial->n() != n || options.initial->size() != nx)
            throw InvalidInput("initial deep state inconsistent with model");
        for (Index x = 0; x < nx; ++x)
            for (int k = 0; k < options.initial->count(x); ++k) states.push_back(x);
    } else {
        for (int i = 0; i < n; ++i) states.push_back(sample_index(model.initial_law().data(), nx, rng));
    }

    TrajectoryLog log;
    log.seed = seed;
    log.strategy = strategy.name;
    log.steps.reserve(horizon);
    std::vector<Index> actions(static_cast<Index>(n));
    std::vector<double> kernel_row(nx * nu * nx);
    std::vector<char> row_ready(nx * nu);

    for (std::size_t t = 1; t <= horizon; ++t) {
        const DeepState d = empirical_from_profile(model, states);
        const LocalLaw gamma = strategy.law(t, d);
        Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nu));
        for (Index i = 0; i < states.size(); ++i) {
            const Eigen::RowVectorXd r = gamma.probs().row(static_cast<Eigen::Index>(states[i]));
            actions[i] = sample_index(r.data(), nu, rng);
            ++counts(static_cast<Eigen::Index>(states[i]), static_cast<Eigen::Index>(actions[i]));
        }
        const JointMeasure joint = JointDistribution(counts).measure();

        long double cost = 0.0L;
        for (Index i = 0; i < states.size(); ++i) cost += model.cost(states[i], actions[i], joint);

        TrajectoryLog::Step step{t, d, {}, {}, static_cast<double>(cost / n)};
        if (options.record_agents) {
            step.agent_states = states;
            step.agent_actions = actions;
        }
        log.steps.push_back(std::move(step));

        std::fill(row_ready.begin(), row_ready.end(), 0);
        for (Index i = 0; i < states.size(); ++i) {
            const Index cell = states[i] * nu + actions[i];
            double* row = kernel_row.data() + cell * nx;
            if (!row_ready[cell]) {
                for (Index y = 0; y < nx; ++y) row[y] = model.kernel(y, states[i], actions[i], joint);
                row_ready[cell] = 1;
            }
            states[i] = sample_index(row, nx, rng);
        }
    }
    return log;
}

double objective_from_costs(const std::vector<double>& costs, double beta) {
    if (costs.empty()) return 0.0;
    long double total = 0.0L;
    if (beta >= 1.0) {
        for (double c : costs) total += c;
        return static_cast<double>(total / costs.size());
    }
    long double w = 1.0L;
    for (double c : costs) {
        total += w * c;
        w *= beta;
    }
    return static_cast<double>((1.0L - beta) * total);
}

CostEstimate evaluate_strategy_cost(const FiniteTeamModel& model, const FiniteStrategy& strategy,
                                    double beta, std::size_t horizon, std::size_t trials,
                                    std::uint64_t seed, const SimulationOptions& options) {
    if (horizon < 1 || trials < 1) throw InvalidInput("horizon and trials must be >= 1");
    if (!(beta > 0.0 && beta <= 1.0)) throw InvalidInput("beta must lie in (0, 1]");
    std::vector<double> samples(trials);
    std::vector<double> costs(horizon);
    for (std::size_t k = 0; k < trials; ++k) {
        const auto log = simulate_finite_team(model, strategy, horizon, derive_seed(seed, k), options);
        for (std::size_t t = 0; t < horizon; ++t) costs[t] = log.steps[t].cost;
        samples[k] = objective_from_costs(costs, beta);
    }
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / trials;
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    const double se = trials > 1 ? std::sqrt(var / (trials - 1) / trials) : 0.0;
    return {mean, se};
}

}  // namespace dst::finite
