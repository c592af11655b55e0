#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "dst/finite/team.hpp"
#include "dst/lq/team.hpp"

namespace fixtures {

using dst::finite::FiniteTeamModel;
using dst::finite::Index;

// X = {a, b}, U = {stay, move}; b absorbing, move takes a to b, cost 1{x = a}.
inline FiniteTeamModel flow2(int n, double beta = 0.9, std::vector<double> init = {0.5, 0.5}) {
    return FiniteTeamModel::from_tables({"a", "b"}, {"stay", "move"}, n, beta, std::move(init),
                                        {{{1, 0}, {0, 1}}, {{0, 1}, {0, 1}}}, {{1, 1}, {0, 0}});
}

// Two states, stochastic and action dependent, no dependence on the joint measure.
inline FiniteTeamModel noisy2(int n, double beta = 0.9) {
    return FiniteTeamModel::from_tables({"lo", "hi"}, {"idle", "push"}, n, beta, {0.5, 0.5},
                                        {{{0.8, 0.2}, {0.3, 0.7}}, {{0.4, 0.6}, {0.1, 0.9}}},
                                        {{1.0, 1.3}, {0.2, 0.5}});
}

// Three states, two actions, random-looking but fixed tables.
inline FiniteTeamModel three_state(int n, double beta = 0.8) {
    return FiniteTeamModel::from_tables(
        {"s0", "s1", "s2"}, {"u0", "u1"}, n, beta, {0.2, 0.3, 0.5},
        {{{0.6, 0.3, 0.1}, {0.1, 0.2, 0.7}},
         {{0.25, 0.5, 0.25}, {0.0, 0.4, 0.6}},
         {{0.3, 0.0, 0.7}, {0.5, 0.5, 0.0}}},
        {{0.9, 0.4}, {0.3, 0.8}, {0.0, 0.6}});
}

// Counts per next state from every profile, by brute force over agents.
// Each agent in x draws u from gamma(x) then x' from kernel(., x, u, D_realized).
inline std::map<std::vector<int>, double> brute_force_next(const FiniteTeamModel& m, const std::vector<Index>& profile,
                                                           const dst::finite::LocalLaw& gamma) {
    const Index nx = m.num_states(), nu = m.num_actions();
    const std::size_t n = profile.size();
    std::map<std::vector<int>, double> out;
    std::vector<Index> acts(n, 0);
    while (true) {
        double pa = 1.0;
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nu));
        for (std::size_t i = 0; i < n; ++i) {
            pa *= gamma(profile[i], acts[i]);
            D(static_cast<Eigen::Index>(profile[i]), static_cast<Eigen::Index>(acts[i])) += 1.0 / static_cast<double>(n);
        }
        if (pa > 0.0) {
            std::vector<Index> nxt(n, 0);
            while (true) {
                double p = pa;
                for (std::size_t i = 0; i < n; ++i) p *= m.kernel(nxt[i], profile[i], acts[i], D);
                if (p > 0.0) {
                    std::vector<int> counts(nx, 0);
                    for (Index y : nxt) ++counts[y];
                    out[counts] += p;
                }
                std::size_t k = 0;
                while (k < n && ++nxt[k] == nx) nxt[k++] = 0;
                if (k == n) break;
            }
        }
        std::size_t k = 0;
        while (k < n && ++acts[k] == nu) acts[k++] = 0;
        if (k == n) break;
    }
    return out;
}

inline std::vector<Index> profile_of(const std::vector<int>& counts) {
    std::vector<Index> p;
    for (Index x = 0; x < counts.size(); ++x)
        for (int k = 0; k < counts[x]; ++k) p.push_back(x);
    return p;
}

inline dst::lq::Matrix smart_grid_alpha() {
    dst::lq::Matrix a(10, 1);
    for (int i = 0; i < 6; ++i) a(i, 0) = std::sqrt(0.5);
    a(6, 0) = std::sqrt(1.5);
    a(7, 0) = 1.0;
    a(8, 0) = std::sqrt(2.0);
    a(9, 0) = std::sqrt(2.5);
    return a;
}

inline dst::lq::LqTeamModel::Definition smart_grid_definition() {
    using dst::lq::Matrix;
    using dst::lq::Vector;
    dst::lq::LqTeamModel::Definition d;
    d.n = 10;
    d.A = Matrix::Constant(1, 1, 1.0);
    d.B = Matrix::Constant(1, 1, 1.0);
    d.Q = Matrix::Constant(1, 1, 1.0);
    d.R = Matrix::Constant(1, 1, 1.0);
    d.qbar = Matrix::Constant(1, 1, 4.0);
    d.rbar = Matrix::Constant(1, 1, 1.0);
    d.alpha = smart_grid_alpha();
    d.beta = 1.0;
    d.noise = dst::lq::DistributionSpec::gaussian(Vector::Zero(1), Matrix::Constant(1, 1, 0.02));
    d.initial = dst::lq::DistributionSpec::uniform(Vector::Zero(1), Vector::Constant(1, 0.1));
    return d;
}

inline dst::lq::LqTeamModel smart_grid() { return dst::lq::LqTeamModel(smart_grid_definition()); }

// Roots of the scalar Riccati quadratics for the smart-grid model.
inline double smart_grid_P() { return (1.0 + std::sqrt(5.0)) / 2.0; }
inline double smart_grid_Pbold() { return (5.0 + std::sqrt(65.0)) / 2.0; }
// theta = -P / (P + R) for A = B = 1, beta = 1.
inline double smart_grid_theta() { return -smart_grid_P() / (smart_grid_P() + 1.0); }
inline double smart_grid_thetabold() { return -smart_grid_Pbold() / (smart_grid_Pbold() + 2.0); }

}  // namespace fixtures
