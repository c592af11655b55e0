#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dst/finite/planning.hpp"
#include "fixtures.hpp"

using namespace dst::finite;
using fixtures::flow2;

namespace {

FiniteTeamModel zero_cost(int n) {
    return FiniteTeamModel::from_tables({"a", "b"}, {"stay", "move"}, n, 0.9, {0.5, 0.5},
                                        {{{1, 0}, {0, 1}}, {{0, 1}, {0, 1}}}, {{0, 0}, {0, 0}});
}

// Plain value iteration over deep states, computing transitions from the
// agent-level enumeration instead of the library kernel.
std::vector<double> brute_force_values(const FiniteTeamModel& m, const LawGrid& laws, int sweeps) {
    const CompositionSpace cs(m.num_states(), m.n());
    std::vector<std::vector<std::map<std::vector<int>, double>>> next(cs.size());
    std::vector<std::vector<double>> cost(cs.size());
    for (Index r = 0; r < cs.size(); ++r)
        for (const auto& g : laws) {
            const DeepState d = cs.state(r);
            next[r].push_back(fixtures::brute_force_next(m, fixtures::profile_of(d.counts()), g));
            double c = 0.0;
            for (Index x = 0; x < m.num_states(); ++x)
                for (Index u = 0; u < m.num_actions(); ++u) c += d.fraction(x) * g(x, u) * m.cost(x, u, JointMeasure());
            cost[r].push_back(c);
        }
    std::vector<double> v(cs.size(), 0.0);
    for (int s = 0; s < sweeps; ++s) {
        std::vector<double> nv(cs.size());
        for (Index r = 0; r < cs.size(); ++r) {
            double best = INFINITY;
            for (Index l = 0; l < laws.size(); ++l) {
                double q = cost[r][l];
                for (const auto& [counts, p] : next[r][l]) q += m.beta() * p * v[cs.rank(counts)];
                best = std::min(best, q);
            }
            nv[r] = best;
        }
        v = nv;
    }
    return v;
}

}  // namespace

TEST(DeterministicLawSpace, MixedRadixIndex) {
    DeterministicLawSpace s(3, 2);
    EXPECT_EQ(s.size(), 8u);
    EXPECT_EQ(s.index({1, 0, 0}), 1u);
    EXPECT_EQ(s.index({0, 1, 0}), 2u);
    EXPECT_EQ(s.index({1, 1, 1}), 7u);
    for (Index i = 0; i < s.size(); ++i) EXPECT_EQ(s.index(s.actions(i)), i);
    EXPECT_EQ(s.law(5), LocalLaw::deterministic({1, 0, 1}, 2));
}

TEST(LawGrid, RowsAreDistributions) {
    const auto grid = mixed_law_grid(2, 3, 2);
    // 6 points per row, two rows.
    EXPECT_EQ(grid.size(), 36u);
    std::set<std::vector<double>> seen;
    for (const auto& g : grid) {
        for (Index x = 0; x < 2; ++x) {
            double s = 0.0;
            for (Index u = 0; u < 3; ++u) {
                EXPECT_GE(g(x, u), 0.0);
                EXPECT_DOUBLE_EQ(std::fmod(g(x, u) * 2.0, 1.0), 0.0);
                s += g(x, u);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
        seen.insert(std::vector<double>(g.probs().data(), g.probs().data() + g.probs().size()));
    }
    EXPECT_EQ(seen.size(), grid.size());
    EXPECT_EQ(deterministic_law_grid(2, 3).size(), 9u);
}

TEST(DssTransitions, SuccessorsAreDistributions) {
    const auto m = fixtures::three_state(3);
    const auto tr = build_dss_transitions(m, mixed_law_grid(3, 2, 2));
    for (const auto& row : tr.entries)
        for (const auto& e : row) {
            double s = 0.0;
            for (const auto& [rank, p] : e.successors) {
                EXPECT_GE(p, 0.0);
                EXPECT_LT(rank, tr.space.size());
                s += p;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
            EXPECT_GE(e.cost, 0.0);
        }
}

TEST(ValueIterationDss, Flow2ValueIsMassInA) {
    for (int n : {1, 2, 3, 4, 6}) {
        const auto m = flow2(n);
        const auto t = value_iteration_dss(m, deterministic_law_grid(2, 2), 1e-12, 10000);
        for (Index r = 0; r < t.space.size(); ++r) {
            const DeepState d = t.space.state(r);
            EXPECT_NEAR(t.values[r], d.fraction(0), 1e-9) << "n=" << n << " r=" << r;
            if (d.count(0) > 0) {
                EXPECT_EQ(t.laws[t.policy[r]](0, 1), 1.0);
            }
        }
    }
}

TEST(ValueIterationDss, MatchesAgentLevelOracle) {
    for (int n : {2, 3}) {
        const auto m = fixtures::three_state(n);
        const auto laws = deterministic_law_grid(3, 2);
        const auto t = value_iteration_dss(m, laws, 1e-13, 100000);
        const auto oracle = brute_force_values(m, laws, 400);
        for (Index r = 0; r < oracle.size(); ++r) EXPECT_NEAR(t.values[r], oracle[r], 1e-9);
    }
}

TEST(ValueIterationDss, BellmanFixedPoint) {
    const auto m = fixtures::noisy2(5);
    const auto laws = mixed_law_grid(2, 2, 2);
    const auto tr = build_dss_transitions(m, laws);
    const auto t = value_iteration_dss(tr, m.beta(), 1e-12, 100000);
    for (Index r = 0; r < tr.space.size(); ++r) {
        double best = INFINITY;
        for (Index l = 0; l < laws.size(); ++l) best = std::min(best, dss_backup(tr, m.beta(), t.values, r, l));
        EXPECT_NEAR(best, t.values[r], 1e-10);
        EXPECT_NEAR(dss_backup(tr, m.beta(), t.values, r, t.policy[r]), best, 1e-10);
        EXPECT_GE(t.values[r], 0.0);
    }
    // The stopping rule bounds the distance to the fixed point by tol.
    EXPECT_LE(t.gap_history.back() * m.beta() / (1.0 - m.beta()), 1e-12 + 1e-15);
}

TEST(ValueIterationDss, GapsContract) {
    const auto m = fixtures::three_state(3, 0.7);
    const auto t = value_iteration_dss(m, deterministic_law_grid(3, 2), 1e-12, 10000);
    for (std::size_t k = 1; k < t.gap_history.size(); ++k)
        EXPECT_LE(t.gap_history[k], m.beta() * t.gap_history[k - 1] + 1e-14);
}

TEST(ValueIterationDss, ZeroCostAndErrors) {
    const auto t = value_iteration_dss(zero_cost(3), deterministic_law_grid(2, 2), 1e-12, 100);
    for (double v : t.values) EXPECT_EQ(v, 0.0);
    for (Index p : t.policy) EXPECT_EQ(p, 0u);

    EXPECT_THROW(value_iteration_dss(flow2(3, 1.0), deterministic_law_grid(2, 2), 1e-12, 100),
                 dst::UnsupportedDiscount);
    try {
        (void)value_iteration_dss(fixtures::noisy2(3, 0.99), deterministic_law_grid(2, 2), 1e-14, 3);
        FAIL();
    } catch (const dst::NonConvergence& e) {
        EXPECT_GT(e.last_gap(), 0.0);
    }
}

TEST(ValueIterationDss, AbsorbingZeroCostState) {
    const auto t = value_iteration_dss(flow2(4), deterministic_law_grid(2, 2), 1e-12, 1000);
    EXPECT_EQ(t.value_at(DeepState({0, 4})), 0.0);
}

TEST(ExtractDssStrategy, TiesAndSingleAction) {
    const auto m = flow2(3);
    const auto t = value_iteration_dss(m, deterministic_law_grid(2, 2), 1e-12, 1000);
    const auto s = extract_dss_strategy(t);
    for (Index r = 0; r < t.space.size(); ++r) {
        const DeepState d = t.space.state(r);
        // Row b is irrelevant to the value, so the lowest index (b -> stay) wins.
        if (d.count(0) > 0) EXPECT_EQ(s.law(1, d), LocalLaw::deterministic({1, 0}, 2));
        else EXPECT_EQ(s.law(1, d), LocalLaw::deterministic({0, 0}, 2));
    }

    const auto single = FiniteTeamModel::from_tables({"a", "b"}, {"u"}, 2, 0.5, {0.5, 0.5},
                                                     {{{0.5, 0.5}}, {{0.5, 0.5}}}, {{1}, {0}});
    const auto ts = value_iteration_dss(single, deterministic_law_grid(2, 1), 1e-12, 1000);
    EXPECT_EQ(ts.laws.size(), 1u);
    for (Index p : ts.policy) EXPECT_EQ(p, 0u);
}

TEST(MeanFieldStep, Examples) {
    const auto m = flow2(2);
    const MeanField a({1.0, 0.0});
    EXPECT_EQ(mean_field_step(m, a, LocalLaw::deterministic({1, 0}, 2)).probs(), (std::vector<double>{0.0, 1.0}));
    Eigen::MatrixXd half(2, 2);
    half << 0.5, 0.5, 0.0, 1.0;
    const auto next = mean_field_step(m, a, LocalLaw(half)).probs();
    EXPECT_NEAR(next[0], 0.5, 1e-15);
    EXPECT_NEAR(next[1], 0.5, 1e-15);

    const auto uniform = FiniteTeamModel::from_tables({"a", "b"}, {"u"}, 2, 0.5, {0.5, 0.5},
                                                      {{{0.5, 0.5}}, {{0.5, 0.5}}}, {{1}, {0}});
    for (double p : {0.0, 0.3, 1.0}) {
        const auto r = mean_field_step(uniform, MeanField({p, 1.0 - p}), LocalLaw::deterministic({0, 0}, 1)).probs();
        EXPECT_NEAR(r[0], 0.5, 1e-15);
        EXPECT_NEAR(r[1], 0.5, 1e-15);
    }
}

TEST(MeanFieldStep, StaysOnSimplex) {
    const auto m = fixtures::three_state(5);
    dst::Rng rng(3);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> p{dst::uniform01(rng), dst::uniform01(rng), dst::uniform01(rng)};
        const double s = p[0] + p[1] + p[2];
        for (double& v : p) v /= s;
        Eigen::MatrixXd g(3, 2);
        for (int x = 0; x < 3; ++x) {
            g(x, 0) = dst::uniform01(rng);
            g(x, 1) = 1.0 - g(x, 0);
        }
        const auto next = mean_field_step(m, MeanField(p), LocalLaw(g)).probs();
        double total = 0.0;
        for (double v : next) {
            EXPECT_GE(v, 0.0);
            total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(MeanFieldCost, Examples) {
    const auto m = flow2(2);
    Eigen::MatrixXd half = Eigen::MatrixXd::Constant(2, 2, 0.5);
    EXPECT_DOUBLE_EQ(mean_field_cost(m, MeanField({0.5, 0.5}), LocalLaw(half)), 0.5);
    EXPECT_DOUBLE_EQ(mean_field_cost(zero_cost(2), MeanField({0.5, 0.5}), LocalLaw(half)), 0.0);

    auto def = m.definition();
    def.cost = [](Index, Index, const JointMeasure& D) { return D(0, 1); };
    const FiniteTeamModel linear(def);
    EXPECT_NEAR(mean_field_cost(linear, MeanField({0.5, 0.5}), LocalLaw(half)), 0.25, 1e-15);
}

TEST(ProjectToGrid, NearestPointAndTies) {
    EXPECT_EQ(project_to_grid(MeanField({0.5, 0.5}), 2), (std::vector<int>{1, 1}));
    EXPECT_EQ(project_to_grid(MeanField({0.7, 0.3}), 1), (std::vector<int>{1, 0}));
    // Equidistant from (1,0) and (0,1): the lexicographically smallest wins.
    EXPECT_EQ(project_to_grid(MeanField({0.5, 0.5}), 1), (std::vector<int>{0, 1}));
    EXPECT_EQ(project_to_grid(MeanField({0.34, 0.33, 0.33}), 3), (std::vector<int>{1, 1, 1}));
    // Projection of a grid point is itself.
    const CompositionSpace cs(3, 4);
    for (Index r = 0; r < cs.size(); ++r) {
        const auto c = cs.unrank(r);
        EXPECT_EQ(project_to_grid(MeanField({c[0] / 4.0, c[1] / 4.0, c[2] / 4.0}), 4), c);
    }
}

TEST(ProjectToGrid, MinimizesEuclideanDistance) {
    dst::Rng rng(11);
    for (int k = 0; k < 200; ++k) {
        std::vector<double> p{dst::uniform01(rng), dst::uniform01(rng), dst::uniform01(rng)};
        const double s = p[0] + p[1] + p[2];
        for (double& v : p) v /= s;
        const int q = 5;
        const auto got = project_to_grid(MeanField(p), q);
        auto dist = [&](const std::vector<int>& c) {
            double d = 0.0;
            for (int i = 0; i < 3; ++i) d += (c[i] / double(q) - p[i]) * (c[i] / double(q) - p[i]);
            return d;
        };
        const CompositionSpace cs(3, q);
        for (Index r = 0; r < cs.size(); ++r) EXPECT_LE(dist(got), dist(cs.unrank(r)) + 1e-15);
    }
}

TEST(ValueIterationNs, Flow2) {
    const auto m = flow2(4);
    const auto t = value_iteration_ns(m, 2, deterministic_law_grid(2, 2), 1e-12, 10000);
    for (Index r = 0; r < t.grid.size(); ++r) {
        const auto pt = t.point(r);
        EXPECT_NEAR(t.values[r], pt[0], 1e-9);
        if (pt[0] > 0) {
            EXPECT_EQ(t.laws[t.policy[r]](0, 1), 1.0);
        }
    }
}

TEST(ValueIterationNs, DegenerateGridAndZeroCost) {
    const auto m = fixtures::three_state(4);
    const auto t = value_iteration_ns(m, 1, mixed_law_grid(3, 2, 2), 1e-12, 10000);
    EXPECT_EQ(t.grid.size(), 3u);
    for (Index s : t.successor) EXPECT_LT(s, 3u);

    const auto z = value_iteration_ns(zero_cost(3), 3, deterministic_law_grid(2, 2), 1e-12, 100);
    for (double v : z.values) EXPECT_EQ(v, 0.0);
}

TEST(ValueIterationNs, GridPointsAndBellman) {
    const auto m = fixtures::noisy2(10);
    const int q = 8;
    const auto laws = mixed_law_grid(2, 2, 4);
    const auto t = value_iteration_ns(m, q, laws, 1e-12, 100000);
    for (Index r = 0; r < t.grid.size(); ++r) {
        const auto pt = t.point(r);
        EXPECT_NEAR(pt[0] + pt[1], 1.0, 1e-15);
        EXPECT_DOUBLE_EQ(std::round(pt[0] * q), pt[0] * q);
        double best = INFINITY;
        for (Index l = 0; l < laws.size(); ++l) {
            const double c = mean_field_cost(m, pt, laws[l]);
            EXPECT_NEAR(c, t.stage_cost[r * laws.size() + l], 1e-14);
            const Index nxt = t.locate(mean_field_step(m, pt, laws[l]));
            EXPECT_EQ(nxt, t.successor[r * laws.size() + l]);
            best = std::min(best, c + m.beta() * t.values[nxt]);
        }
        EXPECT_NEAR(best, t.values[r], 1e-10);
    }
}

TEST(NsLawSequence, LengthAndOpenLoop) {
    const auto m = flow2(4, 0.9, {1.0, 0.0});
    const auto t = value_iteration_ns(m, 4, deterministic_law_grid(2, 2), 1e-12, 1000);
    const auto seq = ns_law_sequence(m, t, 7);
    ASSERT_EQ(seq.size(), 7u);
    EXPECT_EQ(seq[0](0, 1), 1.0);
    const auto s = ns_strategy(m, t, 7);
    for (std::size_t k = 1; k <= 7; ++k) {
        EXPECT_EQ(s.law(k, DeepState({4, 0})), seq[k - 1]);
        EXPECT_EQ(s.law(k, DeepState({0, 4})), seq[k - 1]);
    }
}

TEST(SimulateFiniteTeam, OptimalFlow2FromAllInA) {
    const auto m = flow2(5);
    const auto t = value_iteration_dss(m, deterministic_law_grid(2, 2), 1e-12, 1000);
    SimulationOptions opt;
    opt.initial = DeepState({5, 0});
    const auto log = simulate_finite_team(m, extract_dss_strategy(t), 6, 42, opt);
    ASSERT_EQ(log.steps.size(), 6u);
    EXPECT_EQ(log.steps[0].cost, 1.0);
    for (std::size_t k = 1; k < 6; ++k) EXPECT_EQ(log.steps[k].cost, 0.0);
    EXPECT_EQ(log.steps[0].state, DeepState({5, 0}));
    EXPECT_EQ(log.steps[1].state, DeepState({0, 5}));
}

TEST(SimulateFiniteTeam, DeterministicSystemsIgnoreSeed) {
    const auto m = flow2(4);
    SimulationOptions opt;
    opt.initial = DeepState({3, 1});
    opt.record_agents = true;
    const auto s = fixed_law_strategy({LocalLaw::deterministic({0, 0}, 2), LocalLaw::deterministic({1, 0}, 2)});
    const auto a = simulate_finite_team(m, s, 5, 1, opt);
    const auto b = simulate_finite_team(m, s, 5, 99, opt);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_EQ(a.steps[k].state, b.steps[k].state);
        EXPECT_EQ(a.steps[k].cost, b.steps[k].cost);
        EXPECT_EQ(a.steps[k].agent_states.size(), 4u);
    }
    EXPECT_EQ(a.steps[0].cost, 0.75);
    EXPECT_EQ(a.steps[1].cost, 0.75);
    EXPECT_EQ(a.steps[2].cost, 0.0);
}

TEST(SimulateFiniteTeam, SameSeedSameLog) {
    const auto m = fixtures::noisy2(6);
    Eigen::MatrixXd g(2, 2);
    g << 0.4, 0.6, 0.7, 0.3;
    const auto s = fixed_law_strategy({LocalLaw(g)});
    const auto a = simulate_finite_team(m, s, 30, 5);
    const auto b = simulate_finite_team(m, s, 30, 5);
    for (std::size_t k = 0; k < 30; ++k) {
        EXPECT_EQ(a.steps[k].state, b.steps[k].state);
        EXPECT_EQ(a.steps[k].t, k + 1);
    }
}

TEST(SimulateFiniteTeam, SingleAgentMatchesMdp) {
    const auto m = fixtures::noisy2(1);
    Eigen::MatrixXd g(2, 2);
    g << 0.0, 1.0, 1.0, 0.0;
    const auto s = fixed_law_strategy({LocalLaw(g)});
    // Long-run frequency of state lo under the induced chain lo->hi w.p. 0.7, hi->hi w.p. 0.6.
    const double stationary_lo = 0.4 / (0.7 + 0.4);
    double lo = 0.0;
    const std::size_t T = 40000;
    const auto log = simulate_finite_team(m, s, T, 8);
    for (const auto& st : log.steps) lo += st.state.count(0);
    EXPECT_NEAR(lo / T, stationary_lo, 0.015);
}

TEST(EvaluateStrategyCost, Examples) {
    const auto m = flow2(5);
    const auto t = value_iteration_dss(m, deterministic_law_grid(2, 2), 1e-12, 1000);
    SimulationOptions opt;
    opt.initial = DeepState({5, 0});
    const auto e = evaluate_strategy_cost(m, extract_dss_strategy(t), 0.9, 200, 50, 3, opt);
    EXPECT_NEAR(e.mean, 0.1, 1e-12);
    EXPECT_NEAR(e.std_error, 0.0, 1e-12);

    const auto z = evaluate_strategy_cost(zero_cost(4), fixed_law_strategy({LocalLaw::deterministic({0, 0}, 2)}), 0.9, 50,
                                          20, 3);
    EXPECT_EQ(z.mean, 0.0);

    const auto one = FiniteTeamModel::from_tables({"s"}, {"u"}, 3, 0.9, {1.0}, {{{1}}}, {{1}});
    const auto c = evaluate_strategy_cost(one, fixed_law_strategy({LocalLaw::deterministic({0}, 1)}), 1.0, 30, 5, 1);
    EXPECT_DOUBLE_EQ(c.mean, 1.0);
}

TEST(EvaluateStrategyCost, AgreesWithPlannerValue) {
    const auto m = fixtures::noisy2(4);
    const auto t = value_iteration_dss(m, deterministic_law_grid(2, 2), 1e-12, 100000);
    double expected = 0.0;
    const CompositionSpace& cs = t.space;
    // Deep state at t = 1 is multinomial(n, initial_law).
    for (Index r = 0; r < cs.size(); ++r) {
        const DeepState d = cs.state(r);
        const double p = std::tgamma(5.0) / (std::tgamma(d.count(0) + 1.0) * std::tgamma(d.count(1) + 1.0)) *
                         std::pow(0.5, 4);
        expected += p * t.values[r];
    }
    expected *= 1.0 - m.beta();
    const auto e = evaluate_strategy_cost(m, extract_dss_strategy(t), m.beta(), 250, 4000, 17);
    EXPECT_NEAR(e.mean, expected, 4.0 * e.std_error + 1e-9);
}

TEST(ObjectiveFromCosts, Discounted) {
    EXPECT_NEAR(objective_from_costs({1.0, 0.0, 0.0}, 0.9), 0.1, 1e-15);
    EXPECT_NEAR(objective_from_costs({1.0, 1.0}, 0.5), 0.75, 1e-15);
    EXPECT_NEAR(objective_from_costs({1.0, 3.0}, 1.0), 2.0, 1e-15);
}
