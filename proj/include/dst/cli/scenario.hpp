#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "dst/finite/team.hpp"
#include "dst/lq/team.hpp"

namespace dst::cli {

// Malformed YAML or a bad --override argument.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line = 0, int column = 0)
        : Error(line > 0 ? what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")" : what),
          line_(line), column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_, column_;
};

// Well-formed file that breaks the schema or a model invariant.
class ValidationError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

enum class Task { PlanDss, PlanNs, QLearn, Riccati, Pg, Simulate, Evaluate };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

struct DistributionConfig {
    std::string family = "point";  // gaussian | uniform | point
    std::vector<double> mean;      // gaussian mean, point value
    lq::Matrix cov;                // gaussian covariance
    std::vector<double> low, high; // uniform bounds

    lq::DistributionSpec build() const;
    bool operator==(const DistributionConfig& o) const;
};

struct FiniteModelConfig {
    std::vector<std::string> states, actions;
    int n = 1;
    double beta = 0.9;
    std::vector<double> initial_law;
    std::vector<std::vector<std::vector<double>>> kernel;  // [x][u][x']
    std::vector<std::vector<double>> cost;                 // [x][u]

    finite::FiniteTeamModel build() const;
    bool operator==(const FiniteModelConfig&) const = default;
};

struct LqModelConfig {
    int n = 1, z = 1, hx = 1, hu = 1;
    lq::Matrix A, B, Q, R, qbar, rbar, alpha;
    std::vector<lq::Matrix> abar, bbar;  // empty: no coupling
    double beta = 1.0;
    bool weakly_coupled = false;
    DistributionConfig noise, initial;

    lq::LqTeamModel build() const;
    bool operator==(const LqModelConfig& o) const;
};

struct PlanDssHyper {
    double tol = 1e-10;
    int max_iter = 100000;
    std::string law_grid = "deterministic";  // deterministic | mixed
    int grid_step = 2;
    double enumeration_bound = finite::kDefaultEnumerationBound;
    bool operator==(const PlanDssHyper&) const = default;
};

struct PlanNsHyper {
    int q = 20;
    double tol = 1e-10;
    int max_iter = 100000;
    std::string law_grid = "deterministic";
    int grid_step = 2;
    std::size_t horizon = 50;  // length of the exported law sequence
    bool operator==(const PlanNsHyper&) const = default;
};

struct QLearnHyper {
    std::size_t episodes = 20000;
    std::size_t horizon = 20;
    std::string behavior = "uniform";  // uniform | epsilon_greedy
    double epsilon = 0.1;
    std::string schedule = "inverse_visits";  // inverse_visits | polynomial | constant
    double schedule_param = 1.0;
    std::size_t trace_every = 1000;
    std::size_t greedy_eval_trials = 0;
    std::size_t greedy_eval_horizon = 50;
    bool reference = true;
    bool operator==(const QLearnHyper&) const = default;
};

struct RiccatiHyper {
    double tol = 1e-10;
    int max_iter = 100000;
    bool operator==(const RiccatiHyper&) const = default;
};

struct PgHyper {
    std::size_t L = 100, T = 10;
    double r = 0.15, eta = 0.3;
    std::size_t iters = 5000;
    double cost_ceiling = 1e8;
    double divergence_threshold = 1e9;
    std::vector<std::uint64_t> seeds{1, 2, 3};  // used by the smart-grid example
    bool operator==(const PgHyper&) const = default;
};

struct SimulateHyper {
    std::size_t horizon = 50;
    std::string strategy = "dss";  // dss | ns (| zero for lq)
    bool record_agents = false;
    bool operator==(const SimulateHyper&) const = default;
};

struct EvaluateHyper {
    std::size_t horizon = 200;
    std::size_t trials = 1000;
    std::vector<std::string> strategies{"dss", "ns"};
    bool operator==(const EvaluateHyper&) const = default;
};

struct OutputConfig {
    std::string dir = "out";
    std::vector<std::string> formats{"csv"};  // csv, json
    bool operator==(const OutputConfig&) const = default;
};

struct ScenarioConfig {
    std::uint64_t seed = 0;
    std::optional<Task> task;
    std::string model_type;  // finite | lq
    std::optional<FiniteModelConfig> finite;
    std::optional<LqModelConfig> lq;
    PlanDssHyper plan_dss;
    PlanNsHyper plan_ns;
    QLearnHyper qlearn;
    RiccatiHyper riccati;
    PgHyper pg;
    SimulateHyper simulate;
    EvaluateHyper evaluate;
    OutputConfig output;

    bool operator==(const ScenarioConfig&) const = default;
};

// KEY=VALUE with a dotted KEY; VALUE is read as YAML.
void apply_override(YAML::Node& root, const std::string& assignment);

ScenarioConfig parse_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
ScenarioConfig parse_scenario_text(const std::string& text, const std::vector<std::string>& overrides = {});
ScenarioConfig scenario_from_yaml(const YAML::Node& root);

std::string serialize_scenario(const ScenarioConfig& config);

}  // namespace dst::cli
