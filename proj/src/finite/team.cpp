#include "dst/finite/team.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace dst::finite {

namespace {

constexpr double kSumTol = 1e-12;

double binom_count(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Number of ways to place k indistinguishable items into m labelled boxes.
double compositions_count(int k, Index m) {
    if (m == 0) return k == 0 ? 1.0 : 0.0;
    return binom_count(k + static_cast<int>(m) - 1, static_cast<int>(m) - 1);
}

struct Allocation {
    std::vector<int> counts;
    long double prob;
};

// All allocations of k agents over categories with probabilities p, skipping
// categories of zero probability.
std::vector<Allocation> multinomial_outcomes(int k, const std::vector<double>& p) {
    std::vector<Index> support;
    for (Index i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) support.push_back(i);

    std::vector<Allocation> out;
    std::vector<int> counts(p.size(), 0);
    if (k == 0) {
        out.push_back({counts, 1.0L});
        return out;
    }
    if (support.empty()) return out;

    std::vector<long double> log_fact(k + 1, 0.0L);
    for (int i = 1; i <= k; ++i) log_fact[i] = log_fact[i - 1] + std::log(static_cast<long double>(i));

    // Recursive fill over the support categories.
    std::function<void(Index, int)> fill = [&](Index pos, int remaining) {
        const Index cat = support[pos];
        if (pos + 1 == support.size()) {
            counts[cat] = remaining;
            long double logp = log_fact[k];
            for (Index s : support) {
                const int c = counts[s];
                logp -= log_fact[c];
                if (c > 0) logp += c * std::log(static_cast<long double>(p[s]));
            }
            out.push_back({counts, std::exp(logp)});
            counts[cat] = 0;
            return;
        }
        for (int c = 0; c <= remaining; ++c) {
            counts[cat] = c;
            fill(pos + 1, remaining - c);
        }
        counts[cat] = 0;
    };
    fill(0, k);
    return out;
}

std::vector<double> row(const Eigen::MatrixXd& m, Index r) {
    std::vector<double> v(static_cast<Index>(m.cols()));
    for (Index c = 0; c < v.size(); ++c) v[c] = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    return v;
}

void check_inputs(const FiniteTeamModel& model, const DeepState& d, const LocalLaw& gamma) {
    if (d.size() != model.num_states() || d.n() != model.n())
        throw InvalidInput("deep state inconsistent with model (|X| or n mismatch)");
    if (gamma.num_states() != model.num_states() || gamma.num_actions() != model.num_actions())
        throw InvalidInput("local law shape does not match model alphabets");
}

std::vector<long double> convolve_ld(const std::vector<long double>& a,
                                     const std::vector<long double>& b) {
    std::vector<long double> out(a.size() + b.size() - 1, 0.0L);
    for (Index i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0L) continue;
        for (Index j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return out;
}

std::vector<long double> binomial_ld(int trials, double p) {
    std::vector<long double> out(static_cast<Index>(trials) + 1, 0.0L);
    if (p <= 0.0) {
        out.front() = 1.0L;
        return out;
    }
    if (p >= 1.0) {
        out.back() = 1.0L;
        return out;
    }
    const long double lp = std::log(static_cast<long double>(p));
    const long double lq = std::log1p(-static_cast<long double>(p));
    const long double lnf = std::lgamma(static_cast<long double>(trials) + 1.0L);
    for (int k = 0; k <= trials; ++k) {
        const long double lc = lnf - std::lgamma(static_cast<long double>(k) + 1.0L) -
                               std::lgamma(static_cast<long double>(trials - k) + 1.0L);
        out[static_cast<Index>(k)] = std::exp(lc + k * lp + (trials - k) * lq);
    }
    return out;
}

CountDistribution to_double(const std::vector<long double>& v) {
    CountDistribution out;
    out.probs.assign(v.begin(), v.end());
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// FiniteTeamModel

FiniteTeamModel::FiniteTeamModel(Definition def) : def_(std::move(def)) { validate(); }

FiniteTeamModel FiniteTeamModel::from_tables(std::vector<std::string> states,
                                             std::vector<std::string> actions, int n, double beta,
                                             std::vector<double> initial_law,
                                             std::vector<std::vector<std::vector<double>>> kernel,
                                             std::vector<std::vector<double>> cost) {
    const Index nx = states.size();
    const Index nu = actions.size();
    if (kernel.size() != nx || cost.size() != nx)
        throw DimensionMismatch("kernel/cost tables need one entry per state");
    for (Index x = 0; x < nx; ++x) {
        if (kernel[x].size() != nu || cost[x].size() != nu)
            throw DimensionMismatch("kernel/cost tables need one entry per action");
        for (Index u = 0; u < nu; ++u)
            if (kernel[x][u].size() != nx)
                throw DimensionMismatch("kernel rows must have one entry per next state");
    }
    Definition def;
    def.states = std::move(states);
    def.actions = std::move(actions);
    def.n = n;
    def.beta = beta;
    def.initial_law = std::move(initial_law);
    def.kernel = [k = std::move(kernel)](Index next, Index x, Index u, const JointMeasure&) {
        return k[x][u][next];
    };
    def.cost = [c = std::move(cost)](Index x, Index u, const JointMeasure&) { return c[x][u]; };
    def.kernel_depends_on_joint = false;
    def.cost_depends_on_joint = false;
    return FiniteTeamModel(std::move(def));
}

void FiniteTeamModel::validate() const {
    const Index nx = def_.states.size();
    const Index nu = def_.actions.size();
    if (nx == 0 || nu == 0) throw InvalidInput("state and action alphabets must be non-empty");
    auto unique = [](std::vector<std::string> v) {
        std::sort(v.begin(), v.end());
        return std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    if (!unique(def_.states) || !unique(def_.actions))
        throw InvalidInput("alphabet symbols must be unique");
    if (def_.n < 1) throw InvalidInput("agent count n must be positive");
    if (!(def_.beta > 0.0 && def_.beta <= 1.0)) throw InvalidInput("beta must lie in (0, 1]");
    if (!def_.kernel || !def_.cost) throw InvalidInput("kernel and cost must be set");
    if (def_.initial_law.size() != nx)
        throw DimensionMismatch("initial_law needs one entry per state");
    double total = 0.0;
    for (double p : def_.initial_law) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("initial_law entries must lie in [0, 1]");
        total += p;
    }
    if (std::abs(total - 1.0) > kSumTol) throw InvalidInput("initial_law must sum to 1");

    std::vector<JointMeasure> probes;
    probes.push_back(JointMeasure::Constant(static_cast<Eigen::Index>(nx),
                                            static_cast<Eigen::Index>(nu), 1.0 / (nx * nu)));
    if (def_.kernel_depends_on_joint || def_.cost_depends_on_joint) {
        for (Index x = 0; x < nx; ++x)
            for (Index u = 0; u < nu; ++u) {
                JointMeasure m = JointMeasure::Zero(static_cast<Eigen::Index>(nx),
                                                    static_cast<Eigen::Index>(nu));
                m(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u)) = 1.0;
                probes.push_back(m);
            }
    }
    for (const auto& m : probes) {
        for (Index x = 0; x < nx; ++x)
            for (Index u = 0; u < nu; ++u) {
                double s = 0.0;
                for (Index y = 0; y < nx; ++y) {
                    const double p = def_.kernel(y, x, u, m);
                    if (!(p >= 0.0 && p <= 1.0))
                        throw InvalidInput("kernel probabilities must lie in [0, 1]");
                    s += p;
                }
                if (std::abs(s - 1.0) > kSumTol) {
                    std::ostringstream os;
                    os << "kernel row (" << def_.states[x] << ", " << def_.actions[u]
                       << ") sums to " << s << ", not 1";
                    throw InvalidInput(os.str());
                }
                const double c = def_.cost(x, u, m);
                if (!std::isfinite(c) || c < 0.0)
                    throw InvalidInput("cost values must be finite and non-negative");
            }
    }
}

Index FiniteTeamModel::state_index(const std::string& name) const {
    auto it = std::find(def_.states.begin(), def_.states.end(), name);
    if (it == def_.states.end()) throw InvalidInput("unknown state symbol '" + name + "'");
    return static_cast<Index>(it - def_.states.begin());
}

Index FiniteTeamModel::action_index(const std::string& name) const {
    auto it = std::find(def_.actions.begin(), def_.actions.end(), name);
    if (it == def_.actions.end()) throw InvalidInput("unknown action symbol '" + name + "'");
    return static_cast<Index>(it - def_.actions.begin());
}

FiniteTeamModel FiniteTeamModel::with_agents(int n) const {
    Definition d = def_;
    d.n = n;
    return FiniteTeamModel(std::move(d));
}

FiniteTeamModel FiniteTeamModel::with_beta(double beta) const {
    Definition d = def_;
    d.beta = beta;
    return FiniteTeamModel(std::move(d));
}

FiniteTeamModel FiniteTeamModel::with_initial_law(std::vector<double> law) const {
    Definition d = def_;
    d.initial_law = std::move(law);
    return FiniteTeamModel(std::move(d));
}

// ---------------------------------------------------------------------------
// DeepState / CompositionSpace

DeepState::DeepState(std::vector<int> counts) : counts_(std::move(counts)) {
    if (counts_.empty()) throw InvalidInput("deep state needs at least one local state");
    for (int c : counts_)
        if (c < 0) throw InvalidInput("deep state counts must be non-negative");
    n_ = std::accumulate(counts_.begin(), counts_.end(), 0);
    if (n_ <= 0) throw InvalidInput("deep state counts must sum to a positive n");
}

std::vector<double> DeepState::fractions() const {
    std::vector<double> f(counts_.size());
    for (Index i = 0; i < f.size(); ++i) f[i] = fraction(i);
    return f;
}

CompositionSpace::CompositionSpace(Index parts, int total) : parts_(parts), total_(total) {
    if (parts == 0 || total < 0) throw InvalidInput("composition space needs parts >= 1, total >= 0");
    size_ = static_cast<Index>(std::llround(compositions_count(total, parts)));
}

// Colex order: compare the last coordinate first. With m the mass still to be
// placed and p the number of free parts after position i, the compositions
// that put fewer than r_i at i number C(m+p, p) - C(m-r_i+p, p).
Index CompositionSpace::rank(const std::vector<int>& counts) const {
    if (counts.size() != parts_) throw InvalidInput("composition has wrong number of parts");
    int m = total_;
    Index r = 0;
    for (Index step = 0; step + 1 < parts_; ++step) {
        const int v = counts[parts_ - 1 - step];
        if (v < 0 || v > m) throw InvalidInput("composition entries out of range");
        const int p = static_cast<int>(parts_ - 1 - step);
        r += static_cast<Index>(std::llround(binom_count(m + p, p) - binom_count(m - v + p, p)));
        m -= v;
    }
    if (counts[0] != m) throw InvalidInput("composition does not sum to the space total");
    return r;
}

std::vector<int> CompositionSpace::unrank(Index rank) const {
    if (rank >= size_) throw InvalidInput("composition rank out of range");
    std::vector<int> counts(parts_, 0);
    int m = total_;
    for (Index step = 0; step + 1 < parts_; ++step) {
        const int p = static_cast<int>(parts_ - 1 - step);
        int v = 0;
        // Largest v whose preceding block size does not exceed the rank.
        while (v < m) {
            const auto below = static_cast<Index>(
                std::llround(binom_count(m + p, p) - binom_count(m - (v + 1) + p, p)));
            if (below > rank) break;
            ++v;
        }
        rank -= static_cast<Index>(std::llround(binom_count(m + p, p) - binom_count(m - v + p, p)));
        counts[parts_ - 1 - step] = v;
        m -= v;
    }
    counts[0] = m;
    return counts;
}

// ---------------------------------------------------------------------------
// JointDistribution / LocalLaw

JointDistribution::JointDistribution(Index num_states, Index num_actions, int n)
    : counts_(Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(num_states),
                                    static_cast<Eigen::Index>(num_actions))),
      n_(n) {}

JointDistribution::JointDistribution(Eigen::MatrixXi counts)
    : counts_(std::move(counts)), n_(counts_.sum()) {
    if ((counts_.array() < 0).any()) throw InvalidInput("joint counts must be non-negative");
    if (n_ <= 0) throw InvalidInput("joint counts must sum to a positive n");
}

JointMeasure JointDistribution::measure() const { return counts_.cast<double>() / n_; }

DeepState JointDistribution::state_counts() const {
    std::vector<int> c(static_cast<Index>(counts_.rows()));
    for (Index x = 0; x < c.size(); ++x) c[x] = counts_.row(static_cast<Eigen::Index>(x)).sum();
    return DeepState(std::move(c));
}

LocalLaw::LocalLaw(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw InvalidInput("local law must be non-empty");
    for (Eigen::Index x = 0; x < probs_.rows(); ++x) {
        for (Eigen::Index u = 0; u < probs_.cols(); ++u)
            if (!(probs_(x, u) >= 0.0 && probs_(x, u) <= 1.0))
                throw InvalidInput("local law entries must lie in [0, 1]");
        if (std::abs(probs_.row(x).sum() - 1.0) > kSumTol)
            throw InvalidInput("local law rows must sum to 1");
    }
}

LocalLaw LocalLaw::deterministic(const std::vector<Index>& actions, Index num_actions) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()),
                                              static_cast<Eigen::Index>(num_actions));
    for (Index x = 0; x < actions.size(); ++x) {
        if (actions[x] >= num_actions) throw InvalidInput("action index out of range");
        p(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(actions[x])) = 1.0;
    }
    return LocalLaw(std::move(p));
}

std::optional<std::vector<Index>> LocalLaw::as_deterministic() const {
    std::vector<Index> a(num_states());
    for (Index x = 0; x < a.size(); ++x) {
        bool found = false;
        for (Index u = 0; u < num_actions(); ++u) {
            const double p = (*this)(x, u);
            if (p == 1.0) {
                a[x] = u;
                found = true;
            } else if (p != 0.0) {
                return std::nullopt;
            }
        }
        if (!found) return std::nullopt;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Kernel machinery

CountDistribution binomial(int trials, double p) {
    if (trials < 0) throw InvalidInput("binomial trial count must be non-negative");
    return to_double(binomial_ld(trials, p));
}

CountDistribution convolve(const CountDistribution& a, const CountDistribution& b) {
    std::vector<long double> la(a.probs.begin(), a.probs.end());
    std::vector<long double> lb(b.probs.begin(), b.probs.end());
    return to_double(convolve_ld(la, lb));
}

DeepState empirical_from_profile(const FiniteTeamModel& model, const std::vector<Index>& profile) {
    if (profile.empty()) throw InvalidInput("profile must contain at least one agent");
    std::vector<int> counts(model.num_states(), 0);
    for (Index s : profile) {
        if (s >= model.num_states())
            throw InvalidInput("profile symbol " + std::to_string(s) + " is outside the state alphabet");
        ++counts[s];
    }
    return DeepState(std::move(counts));
}

DeepState empirical_from_profile(const FiniteTeamModel& model,
                                 const std::vector<std::string>& profile) {
    std::vector<Index> idx;
    idx.reserve(profile.size());
    for (const auto& s : profile) idx.push_back(model.state_index(s));
    return empirical_from_profile(model, idx);
}

std::vector<WeightedJoint> joint_action_distribution(const FiniteTeamModel& model,
                                                     const DeepState& d, const LocalLaw& gamma,
                                                     double bound) {
    check_inputs(model, d, gamma);
    const Index nx = model.num_states();
    const Index nu = model.num_actions();

    double terms = 1.0;
    for (Index x = 0; x < nx; ++x) {
        Index support = 0;
        for (Index u = 0; u < nu; ++u)
            if (gamma(x, u) > 0.0) ++support;
        terms *= compositions_count(d.count(x), support);
    }
    if (terms > bound) throw EnumerationBoundExceeded(terms, bound);

    std::vector<std::vector<Allocation>> per_state(nx);
    for (Index x = 0; x < nx; ++x)
        per_state[x] = multinomial_outcomes(d.count(x), row(gamma.probs(), x));

    std::vector<WeightedJoint> out;
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(nx),
                                                   static_cast<Eigen::Index>(nu));
    std::function<void(Index, long double)> product = [&](Index x, long double prob) {
        if (x == nx) {
            out.push_back({JointDistribution(counts), static_cast<double>(prob)});
            return;
        }
        for (const auto& a : per_state[x]) {
            for (Index u = 0; u < nu; ++u)
                counts(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u)) = a.counts[u];
            product(x + 1, prob * a.prob);
        }
    };
    product(0, 1.0L);
    return out;
}

JointMeasure plug_in_measure(const DeepState& d, const LocalLaw& gamma) {
    JointMeasure m = gamma.probs();
    for (Index x = 0; x < d.size(); ++x) m.row(static_cast<Eigen::Index>(x)) *= d.fraction(x);
    return m;
}

double mixed_transition(const FiniteTeamModel& model, Index next, Index x, const LocalLaw& gamma,
                        const DeepState& d) {
    check_inputs(model, d, gamma);
    if (next >= model.num_states() || x >= model.num_states())
        throw InvalidInput("state index out of range");
    const JointMeasure m = plug_in_measure(d, gamma);
    long double t = 0.0L;
    for (Index u = 0; u < model.num_actions(); ++u) {
        const double g = gamma(x, u);
        if (g > 0.0) t += static_cast<long double>(model.kernel(next, x, u, m)) * g;
    }
    return static_cast<double>(t);
}

CountDistribution phi(const FiniteTeamModel& model, Index next, Index x, const LocalLaw& gamma,
                      const DeepState& d) {
    if (d.count(x) == 0) return CountDistribution{{1.0}};
    return binomial(d.count(x), mixed_transition(model, next, x, gamma, d));
}

CountDistribution bar_phi(const FiniteTeamModel& model, Index next, const LocalLaw& gamma,
                          const DeepState& d) {
    check_inputs(model, d, gamma);
    std::vector<long double> acc{1.0L};
    for (Index x = 0; x < model.num_states(); ++x) {
        if (d.count(x) == 0) continue;  // Dirac at zero is the convolution identity
        acc = convolve_ld(acc, binomial_ld(d.count(x), mixed_transition(model, next, x, gamma, d)));
    }
    return to_double(acc);
}

double deep_state_marginal(const FiniteTeamModel& model, const DeepState& d,
                           const LocalLaw& gamma, Index next, int y) {
    if (y < 0 || y > model.n()) throw InvalidInput("count y must lie in [0, n]");
    return bar_phi(model, next, gamma, d)[static_cast<Index>(y)];
}

std::vector<WeightedDeepState> joint_deep_kernel_exact(const FiniteTeamModel& model,
                                                       const DeepState& d, const LocalLaw& gamma,
                                                       double bound) {
    const auto joints = joint_action_distribution(model, d, gamma, bound);
    const Index nx = model.num_states();
    const Index nu = model.num_actions();

    double terms = 0.0;
    for (const auto& wj : joints) {
        double t = 1.0;
        for (Index x = 0; x < nx; ++x)
            for (Index u = 0; u < nu; ++u)
                t *= compositions_count(wj.joint.counts()(static_cast<Eigen::Index>(x),
                                                          static_cast<Eigen::Index>(u)),
                                        nx);
        terms += t;
    }
    if (terms > bound) throw EnumerationBoundExceeded(terms, bound);

    std::map<std::vector<int>, long double> law;
    for (const auto& wj : joints) {
        const JointMeasure m = wj.joint.measure();
        std::map<std::vector<int>, long double> partial{{std::vector<int>(nx, 0), 1.0L}};
        for (Index x = 0; x < nx; ++x) {
            for (Index u = 0; u < nu; ++u) {
                const int k = wj.joint.counts()(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u));
                if (k == 0) continue;
                std::vector<double> p(nx);
                for (Index y = 0; y < nx; ++y) p[y] = model.kernel(y, x, u, m);
                const auto outcomes = multinomial_outcomes(k, p);
                std::map<std::vector<int>, long double> next;
                for (const auto& [acc, pa] : partial) {
                    for (const auto& o : outcomes) {
                        std::vector<int> c = acc;
                        for (Index y = 0; y < nx; ++y) c[y] += o.counts[y];
                        next[c] += pa * o.prob;
                    }
                }
                partial = std::move(next);
            }
        }
        for (const auto& [c, p] : partial) law[c] += p * static_cast<long double>(wj.prob);
    }

    const CompositionSpace space(nx, model.n());
    std::vector<WeightedDeepState> out;
    out.reserve(law.size());
    for (const auto& [c, p] : law) out.push_back({DeepState(c), static_cast<double>(p)});
    std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
        return space.rank(a.state) < space.rank(b.state);
    });
    return out;
}

double expected_cost(const FiniteTeamModel& model, const DeepState& d, const LocalLaw& gamma,
                     double bound) {
    check_inputs(model, d, gamma);
    if (!model.cost_depends_on_joint()) {
        const JointMeasure m = plug_in_measure(d, gamma);
        long double total = 0.0L;
        for (Index x = 0; x < model.num_states(); ++x) {
            if (d.count(x) == 0) continue;
            long double inner = 0.0L;
            for (Index u = 0; u < model.num_actions(); ++u)
                if (gamma(x, u) > 0.0) inner += gamma(x, u) * static_cast<long double>(model.cost(x, u, m));
            total += d.fraction(x) * inner;
        }
        return static_cast<double>(total);
    }
    long double total = 0.0L;
    for (const auto& wj : joint_action_distribution(model, d, gamma, bound)) {
        const JointMeasure m = wj.joint.measure();
        long double step = 0.0L;
        for (Eigen::Index x = 0; x < m.rows(); ++x)
            for (Eigen::Index u = 0; u < m.cols(); ++u)
                if (m(x, u) > 0.0)
                    step += static_cast<long double>(model.cost(static_cast<Index>(x), static_cast<Index>(u), m)) * m(x, u);
        total += step * wj.prob;
    }
    return static_cast<double>(total);
}

}  // namespace dst::finite
