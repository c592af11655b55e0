#include "dst/cli/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "dst/cli/output.hpp"

namespace dst::cli {

namespace {

std::string where(const YAML::Node& n) {
    const YAML::Mark m = n.Mark();
    if (m.is_null()) return "";
    return " (line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ")";
}

[[noreturn]] void fail(const YAML::Node& n, const std::string& path, const std::string& msg) {
    throw ValidationError(path + ": " + msg + where(n));
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const YAML::Node& map, const std::string& path, const std::set<std::string>& allowed) {
    if (!map.IsMap()) fail(map, path.empty() ? "<root>" : path, "expected a mapping");
    for (const auto& kv : map) {
        const std::string key = kv.first.Scalar();
        if (!allowed.count(key)) fail(kv.first, path.empty() ? "<root>" : path, "unknown key '" + key + "'");
    }
}

const YAML::Node require(const YAML::Node& map, const std::string& key, const std::string& path) {
    const YAML::Node n = map[key];
    if (!n) fail(map, join(path, key), "missing required key");
    return n;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool parse_plain_number(std::string s, double& out) {
    s = trim(s);
    if (s == ".inf" || s == ".Inf" || s == "+.inf") return out = std::numeric_limits<double>::infinity(), true;
    if (s == "-.inf" || s == "-.Inf") return out = -std::numeric_limits<double>::infinity(), true;
    if (s == ".nan" || s == ".NaN") return out = std::numeric_limits<double>::quiet_NaN(), true;
    if (!s.empty() && s[0] == '+') s.erase(0, 1);
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

// Plain number or [-]sqrt(number).
double scalar(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) fail(n, path, "expected a number");
    std::string s = trim(n.Scalar());
    double sign = 1.0;
    std::string body = s;
    if (!body.empty() && body[0] == '-' && body.rfind("-sqrt(", 0) == 0) {
        sign = -1.0;
        body.erase(0, 1);
    }
    if (body.rfind("sqrt(", 0) == 0 && body.back() == ')') {
        double inner = 0.0;
        if (!parse_plain_number(body.substr(5, body.size() - 6), inner) || inner < 0.0)
            fail(n, path, "invalid sqrt argument in '" + s + "'");
        return sign * std::sqrt(inner);
    }
    double v = 0.0;
    if (!parse_plain_number(s, v)) fail(n, path, "expected a number, got '" + s + "'");
    return v;
}

long long integer(const YAML::Node& n, const std::string& path, long long lo, long long hi) {
    if (!n.IsScalar()) fail(n, path, "expected an integer");
    const std::string s = trim(n.Scalar());
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(n, path, "expected an integer, got '" + s + "'");
    if (v < lo || v > hi) fail(n, path, "value " + s + " out of range");
    return v;
}

std::uint64_t unsigned64(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) fail(n, path, "expected a non-negative integer");
    const std::string s = trim(n.Scalar());
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(n, path, "expected a non-negative integer, got '" + s + "'");
    return v;
}

std::size_t count(const YAML::Node& n, const std::string& path) {
    return static_cast<std::size_t>(integer(n, path, 0, std::numeric_limits<long long>::max()));
}

bool boolean(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) fail(n, path, "expected true or false");
    const std::string s = n.Scalar();
    if (s == "true") return true;
    if (s == "false") return false;
    fail(n, path, "expected true or false, got '" + s + "'");
}

std::string text(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) fail(n, path, "expected a string");
    return n.Scalar();
}

std::string choice(const YAML::Node& n, const std::string& path, const std::set<std::string>& options) {
    const std::string s = text(n, path);
    if (!options.count(s)) {
        std::string all;
        for (const auto& o : options) all += (all.empty() ? "" : ", ") + o;
        fail(n, path, "'" + s + "' is not one of: " + all);
    }
    return s;
}

std::vector<double> numbers(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence()) fail(n, path, "expected a list of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < n.size(); ++k) out.push_back(scalar(n[k], path + "[" + std::to_string(k) + "]"));
    return out;
}

std::vector<std::string> strings(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence()) fail(n, path, "expected a list of strings");
    std::vector<std::string> out;
    for (std::size_t k = 0; k < n.size(); ++k) out.push_back(text(n[k], path + "[" + std::to_string(k) + "]"));
    return out;
}

// Nested lists, one per row. A bare number is a 1x1 matrix.
lq::Matrix matrix(const YAML::Node& n, const std::string& path) {
    if (n.IsScalar()) return lq::Matrix::Constant(1, 1, scalar(n, path));
    if (!n.IsSequence() || n.size() == 0) fail(n, path, "expected a non-empty list of rows");
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n.size(); ++i) rows.push_back(numbers(n[i], path + "[" + std::to_string(i) + "]"));
    lq::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) fail(n[i], path, "rows have different lengths");
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

// "norm(mu, var)", "unif(low, high)" or "point(v)" for scalar laws.
DistributionConfig distribution_from_string(const YAML::Node& n, const std::string& path) {
    const std::string s = trim(n.Scalar());
    const auto open = s.find('(');
    if (open == std::string::npos || s.back() != ')') fail(n, path, "expected norm(m, v), unif(a, b) or point(v)");
    const std::string name = trim(s.substr(0, open));
    std::vector<double> args;
    std::stringstream ss(s.substr(open + 1, s.size() - open - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0.0;
        if (!parse_plain_number(item, v)) fail(n, path, "bad argument '" + trim(item) + "'");
        args.push_back(v);
    }
    DistributionConfig d;
    if (name == "norm" && args.size() == 2) {
        d.family = "gaussian";
        d.mean = {args[0]};
        d.cov = lq::Matrix::Constant(1, 1, args[1]);
    } else if (name == "unif" && args.size() == 2) {
        d.family = "uniform";
        d.low = {args[0]};
        d.high = {args[1]};
    } else if (name == "point" && args.size() == 1) {
        d.family = "point";
        d.mean = {args[0]};
    } else {
        fail(n, path, "unrecognised distribution '" + s + "'");
    }
    return d;
}

DistributionConfig distribution(const YAML::Node& n, const std::string& path) {
    if (n.IsScalar()) return distribution_from_string(n, path);
    check_keys(n, path, {"family", "mean", "cov", "low", "high", "value"});
    DistributionConfig d;
    d.family = choice(require(n, "family", path), join(path, "family"), {"gaussian", "uniform", "point"});
    auto forbid = [&](std::initializer_list<const char*> keys) {
        for (const char* k : keys)
            if (n[k]) fail(n[k], join(path, k), "not used by family " + d.family);
    };
    if (d.family == "gaussian") {
        forbid({"low", "high", "value"});
        d.mean = numbers(require(n, "mean", path), join(path, "mean"));
        d.cov = matrix(require(n, "cov", path), join(path, "cov"));
    } else if (d.family == "uniform") {
        forbid({"mean", "cov", "value"});
        d.low = numbers(require(n, "low", path), join(path, "low"));
        d.high = numbers(require(n, "high", path), join(path, "high"));
    } else {
        forbid({"mean", "cov", "low", "high"});
        d.mean = numbers(require(n, "value", path), join(path, "value"));
    }
    try {
        (void)d.build();
    } catch (const InvalidInput& e) {
        fail(n, path, e.what());
    }
    return d;
}

lq::Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const lq::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

FiniteModelConfig finite_model(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"model_type", "states", "actions", "n", "beta", "initial_law", "kernel", "cost"});
    FiniteModelConfig m;
    m.states = strings(require(n, "states", path), join(path, "states"));
    m.actions = strings(require(n, "actions", path), join(path, "actions"));
    m.n = static_cast<int>(integer(require(n, "n", path), join(path, "n"), 1, 1000000));
    m.beta = scalar(require(n, "beta", path), join(path, "beta"));
    m.initial_law = numbers(require(n, "initial_law", path), join(path, "initial_law"));
    const YAML::Node k = require(n, "kernel", path);
    if (!k.IsSequence()) fail(k, join(path, "kernel"), "expected kernel[x][u] = list over next states");
    for (std::size_t x = 0; x < k.size(); ++x) {
        const std::string px = join(path, "kernel") + "[" + std::to_string(x) + "]";
        if (!k[x].IsSequence()) fail(k[x], px, "expected one list per action");
        std::vector<std::vector<double>> rows;
        for (std::size_t u = 0; u < k[x].size(); ++u) rows.push_back(numbers(k[x][u], px + "[" + std::to_string(u) + "]"));
        m.kernel.push_back(std::move(rows));
    }
    const YAML::Node c = require(n, "cost", path);
    if (!c.IsSequence()) fail(c, join(path, "cost"), "expected cost[x] = list over actions");
    for (std::size_t x = 0; x < c.size(); ++x)
        m.cost.push_back(numbers(c[x], join(path, "cost") + "[" + std::to_string(x) + "]"));
    try {
        (void)m.build();
    } catch (const InvalidInput& e) {
        fail(n, path, e.what());
    }
    return m;
}

LqModelConfig lq_model(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"model_type", "n", "z", "hx", "hu", "A", "B", "abar", "bbar", "Q", "R", "qbar", "rbar",
                         "alpha", "beta", "weakly_coupled", "noise", "initial"});
    LqModelConfig m;
    m.n = static_cast<int>(integer(require(n, "n", path), join(path, "n"), 1, 100000000));
    m.A = matrix(require(n, "A", path), join(path, "A"));
    m.B = matrix(require(n, "B", path), join(path, "B"));
    m.Q = matrix(require(n, "Q", path), join(path, "Q"));
    m.R = matrix(require(n, "R", path), join(path, "R"));
    m.alpha = matrix(require(n, "alpha", path), join(path, "alpha"));
    m.beta = scalar(require(n, "beta", path), join(path, "beta"));
    m.hx = static_cast<int>(m.A.rows());
    m.hu = static_cast<int>(m.B.cols());
    m.z = static_cast<int>(m.alpha.cols());
    auto dim = [&](const char* key, int derived) {
        if (const YAML::Node d = n[key]) {
            const int v = static_cast<int>(integer(d, join(path, key), 1, 1000000));
            if (v != derived)
                fail(d, join(path, key), "declared " + std::to_string(v) + " but the matrices imply " + std::to_string(derived));
        }
    };
    dim("hx", m.hx);
    dim("hu", m.hu);
    dim("z", m.z);
    m.qbar = n["qbar"] ? matrix(n["qbar"], join(path, "qbar")) : lq::Matrix::Zero(m.z * m.hx, m.z * m.hx);
    m.rbar = n["rbar"] ? matrix(n["rbar"], join(path, "rbar")) : lq::Matrix::Zero(m.z * m.hu, m.z * m.hu);
    auto matrices = [&](const char* key) {
        std::vector<lq::Matrix> out;
        if (const YAML::Node l = n[key]) {
            if (!l.IsSequence()) fail(l, join(path, key), "expected one matrix per feature");
            for (std::size_t j = 0; j < l.size(); ++j)
                out.push_back(matrix(l[j], join(path, key) + "[" + std::to_string(j) + "]"));
        }
        return out;
    };
    m.abar = matrices("abar");
    m.bbar = matrices("bbar");
    if (const YAML::Node w = n["weakly_coupled"]) m.weakly_coupled = boolean(w, join(path, "weakly_coupled"));
    m.noise = distribution(require(n, "noise", path), join(path, "noise"));
    m.initial = distribution(require(n, "initial", path), join(path, "initial"));
    try {
        (void)m.build();
    } catch (const InvalidInput& e) {
        fail(n, path, e.what());
    }
    return m;
}

void read_hyper(const YAML::Node& h, ScenarioConfig& c) {
    const std::string path = "hyper";
    check_keys(h, path, {"plan-dss", "plan-ns", "qlearn", "riccati", "pg", "simulate", "evaluate"});
    if (const YAML::Node s = h["plan-dss"]) {
        const std::string p = "hyper.plan-dss";
        check_keys(s, p, {"tol", "max_iter", "law_grid", "grid_step", "enumeration_bound"});
        auto& o = c.plan_dss;
        if (s["tol"]) o.tol = scalar(s["tol"], p + ".tol");
        if (s["max_iter"]) o.max_iter = static_cast<int>(integer(s["max_iter"], p + ".max_iter", 1, 1000000000));
        if (s["law_grid"]) o.law_grid = choice(s["law_grid"], p + ".law_grid", {"deterministic", "mixed"});
        if (s["grid_step"]) o.grid_step = static_cast<int>(integer(s["grid_step"], p + ".grid_step", 1, 1000));
        if (s["enumeration_bound"]) o.enumeration_bound = scalar(s["enumeration_bound"], p + ".enumeration_bound");
        if (!(o.tol > 0.0)) fail(s, p + ".tol", "must be positive");
    }
    if (const YAML::Node s = h["plan-ns"]) {
        const std::string p = "hyper.plan-ns";
        check_keys(s, p, {"q", "tol", "max_iter", "law_grid", "grid_step", "horizon"});
        auto& o = c.plan_ns;
        if (s["q"]) o.q = static_cast<int>(integer(s["q"], p + ".q", 1, 100000));
        if (s["tol"]) o.tol = scalar(s["tol"], p + ".tol");
        if (s["max_iter"]) o.max_iter = static_cast<int>(integer(s["max_iter"], p + ".max_iter", 1, 1000000000));
        if (s["law_grid"]) o.law_grid = choice(s["law_grid"], p + ".law_grid", {"deterministic", "mixed"});
        if (s["grid_step"]) o.grid_step = static_cast<int>(integer(s["grid_step"], p + ".grid_step", 1, 1000));
        if (s["horizon"]) o.horizon = count(s["horizon"], p + ".horizon");
        if (!(o.tol > 0.0)) fail(s, p + ".tol", "must be positive");
    }
    if (const YAML::Node s = h["qlearn"]) {
        const std::string p = "hyper.qlearn";
        check_keys(s, p, {"episodes", "horizon", "behavior", "epsilon", "schedule", "schedule_param", "trace_every",
                          "greedy_eval_trials", "greedy_eval_horizon", "reference"});
        auto& o = c.qlearn;
        if (s["episodes"]) o.episodes = count(s["episodes"], p + ".episodes");
        if (s["horizon"]) o.horizon = count(s["horizon"], p + ".horizon");
        if (s["behavior"]) o.behavior = choice(s["behavior"], p + ".behavior", {"uniform", "epsilon_greedy"});
        if (s["epsilon"]) o.epsilon = scalar(s["epsilon"], p + ".epsilon");
        if (s["schedule"])
            o.schedule = choice(s["schedule"], p + ".schedule", {"inverse_visits", "polynomial", "constant"});
        if (s["schedule_param"]) o.schedule_param = scalar(s["schedule_param"], p + ".schedule_param");
        if (s["trace_every"]) o.trace_every = count(s["trace_every"], p + ".trace_every");
        if (s["greedy_eval_trials"]) o.greedy_eval_trials = count(s["greedy_eval_trials"], p + ".greedy_eval_trials");
        if (s["greedy_eval_horizon"]) o.greedy_eval_horizon = count(s["greedy_eval_horizon"], p + ".greedy_eval_horizon");
        if (s["reference"]) o.reference = boolean(s["reference"], p + ".reference");
        if (!(o.epsilon >= 0.0 && o.epsilon <= 1.0)) fail(s, p + ".epsilon", "must lie in [0, 1]");
        if (o.horizon < 1) fail(s, p + ".horizon", "must be at least 1");
    }
    if (const YAML::Node s = h["riccati"]) {
        const std::string p = "hyper.riccati";
        check_keys(s, p, {"tol", "max_iter"});
        if (s["tol"]) c.riccati.tol = scalar(s["tol"], p + ".tol");
        if (s["max_iter"]) c.riccati.max_iter = static_cast<int>(integer(s["max_iter"], p + ".max_iter", 1, 1000000000));
        if (!(c.riccati.tol > 0.0)) fail(s, p + ".tol", "must be positive");
    }
    if (const YAML::Node s = h["pg"]) {
        const std::string p = "hyper.pg";
        check_keys(s, p, {"L", "T", "r", "eta", "iters", "cost_ceiling", "divergence_threshold", "seeds"});
        auto& o = c.pg;
        if (s["L"]) o.L = count(s["L"], p + ".L");
        if (s["T"]) o.T = count(s["T"], p + ".T");
        if (s["r"]) o.r = scalar(s["r"], p + ".r");
        if (s["eta"]) o.eta = scalar(s["eta"], p + ".eta");
        if (s["iters"]) o.iters = count(s["iters"], p + ".iters");
        if (s["cost_ceiling"]) o.cost_ceiling = scalar(s["cost_ceiling"], p + ".cost_ceiling");
        if (s["divergence_threshold"]) o.divergence_threshold = scalar(s["divergence_threshold"], p + ".divergence_threshold");
        if (const YAML::Node l = s["seeds"]) {
            if (!l.IsSequence() || l.size() == 0) fail(l, p + ".seeds", "expected a non-empty list of seeds");
            o.seeds.clear();
            for (std::size_t k = 0; k < l.size(); ++k) o.seeds.push_back(unsigned64(l[k], p + ".seeds"));
        }
        if (o.L < 1 || o.T < 1) fail(s, p, "L and T must be at least 1");
        if (!(o.r > 0.0)) fail(s, p + ".r", "must be positive");
        if (!(o.eta > 0.0)) fail(s, p + ".eta", "must be positive");
    }
    if (const YAML::Node s = h["simulate"]) {
        const std::string p = "hyper.simulate";
        check_keys(s, p, {"horizon", "strategy", "record_agents"});
        if (s["horizon"]) c.simulate.horizon = count(s["horizon"], p + ".horizon");
        if (s["strategy"]) c.simulate.strategy = choice(s["strategy"], p + ".strategy", {"dss", "ns", "zero"});
        if (s["record_agents"]) c.simulate.record_agents = boolean(s["record_agents"], p + ".record_agents");
    }
    if (const YAML::Node s = h["evaluate"]) {
        const std::string p = "hyper.evaluate";
        check_keys(s, p, {"horizon", "trials", "strategies"});
        if (s["horizon"]) c.evaluate.horizon = count(s["horizon"], p + ".horizon");
        if (s["trials"]) c.evaluate.trials = count(s["trials"], p + ".trials");
        if (s["strategies"]) {
            c.evaluate.strategies = strings(s["strategies"], p + ".strategies");
            for (const auto& st : c.evaluate.strategies)
                if (st != "dss" && st != "ns" && st != "zero") fail(s["strategies"], p + ".strategies", "unknown strategy '" + st + "'");
        }
        if (c.evaluate.horizon < 1 || c.evaluate.trials < 1) fail(s, p, "horizon and trials must be at least 1");
    }
}

// --- emission ---------------------------------------------------------------

void emit_matrix(YAML::Emitter& out, const lq::Matrix& m) {
    out << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << YAML::Flow << YAML::BeginSeq;
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << m(i, j);
        out << YAML::EndSeq;
    }
    out << YAML::EndSeq;
}

template <class T>
void emit_list(YAML::Emitter& out, const std::vector<T>& v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& x : v) out << x;
    out << YAML::EndSeq;
}

void emit_distribution(YAML::Emitter& out, const DistributionConfig& d) {
    out << YAML::BeginMap << YAML::Key << "family" << YAML::Value << d.family;
    if (d.family == "gaussian") {
        out << YAML::Key << "mean" << YAML::Value;
        emit_list(out, d.mean);
        out << YAML::Key << "cov" << YAML::Value;
        emit_matrix(out, d.cov);
    } else if (d.family == "uniform") {
        out << YAML::Key << "low" << YAML::Value;
        emit_list(out, d.low);
        out << YAML::Key << "high" << YAML::Value;
        emit_list(out, d.high);
    } else {
        out << YAML::Key << "value" << YAML::Value;
        emit_list(out, d.mean);
    }
    out << YAML::EndMap;
}

}  // namespace

std::string to_string(Task task) {
    switch (task) {
        case Task::PlanDss: return "plan-dss";
        case Task::PlanNs: return "plan-ns";
        case Task::QLearn: return "qlearn";
        case Task::Riccati: return "riccati";
        case Task::Pg: return "pg";
        case Task::Simulate: return "simulate";
        case Task::Evaluate: return "evaluate";
    }
    return "";
}

Task task_from_string(const std::string& name) {
    for (Task t : {Task::PlanDss, Task::PlanNs, Task::QLearn, Task::Riccati, Task::Pg, Task::Simulate, Task::Evaluate})
        if (to_string(t) == name) return t;
    throw ValidationError("unknown task '" + name + "'");
}

lq::DistributionSpec DistributionConfig::build() const {
    if (family == "gaussian") return lq::DistributionSpec::gaussian(to_vector(mean), cov);
    if (family == "uniform") return lq::DistributionSpec::uniform(to_vector(low), to_vector(high));
    if (family == "point") return lq::DistributionSpec::point(to_vector(mean));
    throw ValidationError("unknown distribution family '" + family + "'");
}

bool DistributionConfig::operator==(const DistributionConfig& o) const {
    return family == o.family && mean == o.mean && low == o.low && high == o.high && cov.rows() == o.cov.rows() &&
           cov.cols() == o.cov.cols() && cov == o.cov;
}

finite::FiniteTeamModel FiniteModelConfig::build() const {
    return finite::FiniteTeamModel::from_tables(states, actions, n, beta, initial_law, kernel, cost);
}

lq::LqTeamModel LqModelConfig::build() const {
    lq::LqTeamModel::Definition d;
    d.n = n;
    d.z = z;
    d.hx = hx;
    d.hu = hu;
    d.A = A;
    d.B = B;
    d.abar = abar;
    d.bbar = bbar;
    d.Q = Q;
    d.R = R;
    d.qbar = qbar;
    d.rbar = rbar;
    d.alpha = alpha;
    d.beta = beta;
    d.weakly_coupled = weakly_coupled;
    d.noise = noise.build();
    d.initial = initial.build();
    return lq::LqTeamModel(std::move(d));
}

bool LqModelConfig::operator==(const LqModelConfig& o) const {
    auto same = [](const lq::Matrix& a, const lq::Matrix& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
    };
    auto same_list = [&](const std::vector<lq::Matrix>& a, const std::vector<lq::Matrix>& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t k = 0; k < a.size(); ++k)
            if (!same(a[k], b[k])) return false;
        return true;
    };
    return n == o.n && z == o.z && hx == o.hx && hu == o.hu && same(A, o.A) && same(B, o.B) && same(Q, o.Q) &&
           same(R, o.R) && same(qbar, o.qbar) && same(rbar, o.rbar) && same(alpha, o.alpha) &&
           same_list(abar, o.abar) && same_list(bbar, o.bbar) && beta == o.beta &&
           weakly_coupled == o.weakly_coupled && noise == o.noise && initial == o.initial;
}

void apply_override(YAML::Node& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError("override must look like KEY=VALUE: '" + assignment + "'");
    const std::string key = trim(assignment.substr(0, eq));
    YAML::Node value;
    try {
        value = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::Exception& e) {
        throw ParseError("override value for '" + key + "' is not valid YAML: " + e.msg);
    }
    std::vector<std::string> parts;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ParseError("empty segment in override key '" + key + "'");
        parts.push_back(part);
    }
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    YAML::Node cur = root;
    for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
        if (!cur.IsMap()) throw ParseError("override '" + key + "' descends into a non-mapping");
        if (!cur[parts[k]]) cur[parts[k]] = YAML::Node(YAML::NodeType::Map);
        YAML::Node next = cur[parts[k]];
        cur.reset(next);
    }
    if (!cur.IsMap()) throw ParseError("override '" + key + "' descends into a non-mapping");
    cur[parts.back()] = value;
}

ScenarioConfig scenario_from_yaml(const YAML::Node& root) {
    check_keys(root, "", {"seed", "task", "model", "hyper", "output"});
    ScenarioConfig c;
    if (const YAML::Node s = root["seed"]) c.seed = unsigned64(s, "seed");
    if (const YAML::Node t = root["task"]) {
        try {
            c.task = task_from_string(text(t, "task"));
        } catch (const ValidationError&) {
            fail(t, "task", "unknown task '" + t.Scalar() + "'");
        }
    }
    const YAML::Node model = root["model"];
    if (!model) fail(root, "model", "missing required section");
    if (!model.IsMap()) fail(model, "model", "expected a mapping");
    c.model_type = choice(require(model, "model_type", "model"), "model.model_type", {"finite", "lq"});
    if (c.model_type == "finite")
        c.finite = finite_model(model, "model");
    else
        c.lq = lq_model(model, "model");
    if (const YAML::Node h = root["hyper"]) read_hyper(h, c);
    if (const YAML::Node o = root["output"]) {
        check_keys(o, "output", {"dir", "formats"});
        if (o["dir"]) c.output.dir = text(o["dir"], "output.dir");
        if (o["formats"]) {
            c.output.formats = strings(o["formats"], "output.formats");
            for (const auto& f : c.output.formats)
                if (f != "csv" && f != "json") fail(o["formats"], "output.formats", "unknown format '" + f + "'");
            if (c.output.formats.empty()) fail(o["formats"], "output.formats", "need at least one format");
        }
    }
    return c;
}

ScenarioConfig parse_scenario_text(const std::string& text, const std::vector<std::string>& overrides) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ParseError(e.msg, e.mark.line + 1, e.mark.column + 1);
    }
    for (const auto& o : overrides) apply_override(root, o);
    if (!root.IsMap()) throw ValidationError("<root>: expected a mapping");
    return scenario_from_yaml(root);
}

ScenarioConfig parse_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open scenario file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str(), overrides);
}

std::string serialize_scenario(const ScenarioConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "seed" << YAML::Value << c.seed;
    if (c.task) out << YAML::Key << "task" << YAML::Value << to_string(*c.task);

    out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "model_type" << YAML::Value << c.model_type;
    if (c.finite) {
        const auto& m = *c.finite;
        out << YAML::Key << "states" << YAML::Value;
        emit_list(out, m.states);
        out << YAML::Key << "actions" << YAML::Value;
        emit_list(out, m.actions);
        out << YAML::Key << "n" << YAML::Value << m.n;
        out << YAML::Key << "beta" << YAML::Value << m.beta;
        out << YAML::Key << "initial_law" << YAML::Value;
        emit_list(out, m.initial_law);
        out << YAML::Key << "kernel" << YAML::Value << YAML::BeginSeq;
        for (const auto& rows : m.kernel) {
            out << YAML::Flow << YAML::BeginSeq;
            for (const auto& r : rows) emit_list(out, r);
            out << YAML::EndSeq;
        }
        out << YAML::EndSeq;
        out << YAML::Key << "cost" << YAML::Value << YAML::BeginSeq;
        for (const auto& r : m.cost) emit_list(out, r);
        out << YAML::EndSeq;
    }
    if (c.lq) {
        const auto& m = *c.lq;
        out << YAML::Key << "n" << YAML::Value << m.n;
        out << YAML::Key << "z" << YAML::Value << m.z;
        out << YAML::Key << "hx" << YAML::Value << m.hx;
        out << YAML::Key << "hu" << YAML::Value << m.hu;
        for (auto [key, mat] : {std::pair{"A", &m.A}, {"B", &m.B}, {"Q", &m.Q}, {"R", &m.R}, {"qbar", &m.qbar},
                                {"rbar", &m.rbar}, {"alpha", &m.alpha}}) {
            out << YAML::Key << key << YAML::Value;
            emit_matrix(out, *mat);
        }
        for (auto [key, list] : {std::pair{"abar", &m.abar}, {"bbar", &m.bbar}}) {
            if (list->empty()) continue;
            out << YAML::Key << key << YAML::Value << YAML::BeginSeq;
            for (const auto& mat : *list) emit_matrix(out, mat);
            out << YAML::EndSeq;
        }
        out << YAML::Key << "beta" << YAML::Value << m.beta;
        out << YAML::Key << "weakly_coupled" << YAML::Value << m.weakly_coupled;
        out << YAML::Key << "noise" << YAML::Value;
        emit_distribution(out, m.noise);
        out << YAML::Key << "initial" << YAML::Value;
        emit_distribution(out, m.initial);
    }
    out << YAML::EndMap;

    out << YAML::Key << "hyper" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "plan-dss" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "tol" << YAML::Value << c.plan_dss.tol;
    out << YAML::Key << "max_iter" << YAML::Value << c.plan_dss.max_iter;
    out << YAML::Key << "law_grid" << YAML::Value << c.plan_dss.law_grid;
    out << YAML::Key << "grid_step" << YAML::Value << c.plan_dss.grid_step;
    out << YAML::Key << "enumeration_bound" << YAML::Value << c.plan_dss.enumeration_bound;
    out << YAML::EndMap;
    out << YAML::Key << "plan-ns" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "q" << YAML::Value << c.plan_ns.q;
    out << YAML::Key << "tol" << YAML::Value << c.plan_ns.tol;
    out << YAML::Key << "max_iter" << YAML::Value << c.plan_ns.max_iter;
    out << YAML::Key << "law_grid" << YAML::Value << c.plan_ns.law_grid;
    out << YAML::Key << "grid_step" << YAML::Value << c.plan_ns.grid_step;
    out << YAML::Key << "horizon" << YAML::Value << c.plan_ns.horizon;
    out << YAML::EndMap;
    out << YAML::Key << "qlearn" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "episodes" << YAML::Value << c.qlearn.episodes;
    out << YAML::Key << "horizon" << YAML::Value << c.qlearn.horizon;
    out << YAML::Key << "behavior" << YAML::Value << c.qlearn.behavior;
    out << YAML::Key << "epsilon" << YAML::Value << c.qlearn.epsilon;
    out << YAML::Key << "schedule" << YAML::Value << c.qlearn.schedule;
    out << YAML::Key << "schedule_param" << YAML::Value << c.qlearn.schedule_param;
    out << YAML::Key << "trace_every" << YAML::Value << c.qlearn.trace_every;
    out << YAML::Key << "greedy_eval_trials" << YAML::Value << c.qlearn.greedy_eval_trials;
    out << YAML::Key << "greedy_eval_horizon" << YAML::Value << c.qlearn.greedy_eval_horizon;
    out << YAML::Key << "reference" << YAML::Value << c.qlearn.reference;
    out << YAML::EndMap;
    out << YAML::Key << "riccati" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "tol" << YAML::Value << c.riccati.tol;
    out << YAML::Key << "max_iter" << YAML::Value << c.riccati.max_iter;
    out << YAML::EndMap;
    out << YAML::Key << "pg" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "L" << YAML::Value << c.pg.L;
    out << YAML::Key << "T" << YAML::Value << c.pg.T;
    out << YAML::Key << "r" << YAML::Value << c.pg.r;
    out << YAML::Key << "eta" << YAML::Value << c.pg.eta;
    out << YAML::Key << "iters" << YAML::Value << c.pg.iters;
    out << YAML::Key << "cost_ceiling" << YAML::Value << c.pg.cost_ceiling;
    out << YAML::Key << "divergence_threshold" << YAML::Value << c.pg.divergence_threshold;
    out << YAML::Key << "seeds" << YAML::Value;
    emit_list(out, c.pg.seeds);
    out << YAML::EndMap;
    out << YAML::Key << "simulate" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "horizon" << YAML::Value << c.simulate.horizon;
    out << YAML::Key << "strategy" << YAML::Value << c.simulate.strategy;
    out << YAML::Key << "record_agents" << YAML::Value << c.simulate.record_agents;
    out << YAML::EndMap;
    out << YAML::Key << "evaluate" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "horizon" << YAML::Value << c.evaluate.horizon;
    out << YAML::Key << "trials" << YAML::Value << c.evaluate.trials;
    out << YAML::Key << "strategies" << YAML::Value;
    emit_list(out, c.evaluate.strategies);
    out << YAML::EndMap;
    out << YAML::EndMap;

    out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "dir" << YAML::Value << c.output.dir;
    out << YAML::Key << "formats" << YAML::Value;
    emit_list(out, c.output.formats);
    out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

}  // namespace dst::cli
