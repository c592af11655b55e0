#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dst/common.hpp"

// Linear-quadratic teams coupled through z orthonormal weighted averages
// ("features") of the agents' states and actions.
namespace dst::lq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Per-agent law of an initial state or a noise sample.
class DistributionSpec {
public:
    enum class Family { Gaussian, Uniform, Point };

    static DistributionSpec gaussian(Vector mean, Matrix cov);
    // Independent coordinates, each uniform on [low_k, high_k].
    static DistributionSpec uniform(Vector low, Vector high);
    static DistributionSpec point(Vector value);

    Family family() const { return family_; }
    std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
    const Vector& mean() const { return mean_; }
    const Matrix& covariance() const { return cov_; }
    const Vector& low() const { return low_; }
    const Vector& high() const { return high_; }

    Vector sample(Rng& rng) const;
    // Scales the covariance by `factor` around the same mean.
    DistributionSpec scaled_covariance(double factor) const;

private:
    DistributionSpec() = default;
    Family family_ = Family::Point;
    Vector mean_;
    Matrix cov_;
    Matrix factor_;  // cov = factor * factor'
    Vector low_, high_;
};

class LqTeamModel {
public:
    struct Definition {
        int n = 1;
        int z = 1;
        int hx = 1;
        int hu = 1;
        Matrix A, B;
        // abar[j]: hx x (z hx), bbar[j]: hx x (z hu). Empty vectors mean no coupling.
        std::vector<Matrix> abar, bbar;
        Matrix Q, R;
        Matrix qbar;  // (z hx) x (z hx)
        Matrix rbar;  // (z hu) x (z hu)
        Matrix alpha; // n x z
        double beta = 1.0;
        DistributionSpec noise = DistributionSpec::point(Vector::Zero(1));
        DistributionSpec initial = DistributionSpec::point(Vector::Zero(1));
        bool weakly_coupled = false;
        // Reject cost matrices that are not PSD / PD at construction. Turned
        // off only to inspect a model through check_assumptions.
        bool enforce_cost_definiteness = true;
    };

    explicit LqTeamModel(Definition def);

    const Definition& def() const { return def_; }
    int n() const { return def_.n; }
    int z() const { return def_.z; }
    int hx() const { return def_.hx; }
    int hu() const { return def_.hu; }
    double beta() const { return def_.beta; }
    const Matrix& alpha() const { return def_.alpha; }
    bool weakly_coupled() const { return def_.weakly_coupled; }

    // Same model with a different team (n, alpha).
    LqTeamModel with_team(int n, Matrix alpha) const;

private:
    void validate() const;
    Definition def_;
};

// hx x (z hx) coupling matrix acting only on feature block j.
Matrix embed_feature_block(const Matrix& block, int j, int z);

// max |(1/n) alpha' alpha - I|.
double orthonormality_error(const Matrix& alpha);

struct AggregateMatrices {
    Matrix A, B, Q, R;  // bold Abar, Bbar, Qbar, Rbar
};

AggregateMatrices build_aggregate_matrices(const LqTeamModel& model);

Matrix block_diagonal(const Matrix& block, int copies);
Matrix block_diagonal(const std::vector<Matrix>& blocks);

// Stacked feature averages: block j = (1/n) sum_i alpha(i,j) row_i(values).
Vector aggregate(const Matrix& values, const Matrix& alpha);

struct GaugeDecomposition {
    Matrix dx;   // n x hx
    Matrix du;   // n x hu
    Vector xbar; // z hx
    Vector ubar; // z hu
};

GaugeDecomposition gauge_transform(const Matrix& states, const Matrix& actions, const Matrix& alpha);

double per_step_cost(const LqTeamModel& model, const Vector& x, const Vector& u, const Vector& xbar,
                     const Vector& ubar);

// (1/n) sum_i per_step_cost(i) for a whole profile.
double team_average_cost(const LqTeamModel& model, const Matrix& states, const Matrix& actions);

// Maps (t, agent states n x hx, deep state) to agent actions n x hu.
using LqController = std::function<Matrix(std::size_t t, const Matrix& states, const Vector& xbar)>;

struct LqTrajectoryLog {
    struct Step {
        std::size_t t;
        Vector xbar;
        double cost;
        Matrix states;   // empty unless requested
        Matrix actions;  // empty unless requested
    };
    std::vector<Step> steps;
    std::uint64_t seed = 0;
    std::optional<std::size_t> diverged_at;  // set only with truncate_on_divergence
};

struct LqSimulationOptions {
    bool record_agents = false;
    double divergence_threshold = 1e9;
    std::optional<Matrix> initial_states;  // otherwise drawn from the initial law
    bool truncate_on_divergence = false;   // stop and return the prefix instead of throwing
};

// Throws Diverged when any state leaves the divergence threshold, unless
// truncate_on_divergence is set.
LqTrajectoryLog simulate_lq_team(const LqTeamModel& model, const LqController& controller,
                                 std::size_t horizon, std::uint64_t seed,
                                 const LqSimulationOptions& options = {});

// Alpha with (1/n) alpha' alpha = I built from a Gaussian draw.
Matrix random_orthonormal_alpha(int n, int z, Rng& rng);

}  // namespace dst::lq
