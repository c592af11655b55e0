#include "dst/cli/runner.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <limits>

#include <spdlog/spdlog.h>

#include "dst/cli/output.hpp"
#include "dst/finite/planning.hpp"
#include "dst/finite/qlearning.hpp"
#include "dst/lq/planning.hpp"
#include "dst/lq/policy_gradient.hpp"

#ifndef DST_SCENARIO_DIR
#define DST_SCENARIO_DIR "scenarios"
#endif

namespace dst::cli {

namespace fs = std::filesystem;
using finite::Index;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e)) return kExitUsage;
    if (dynamic_cast<const AssumptionViolation*>(&e)) return kExitAssumption;
    if (dynamic_cast<const NonConvergence*>(&e) || dynamic_cast<const Diverged*>(&e)) return kExitNumerical;
    if (dynamic_cast<const InvalidInput*>(&e) || dynamic_cast<const UnsupportedDiscount*>(&e) ||
        dynamic_cast<const EnumerationBoundExceeded*>(&e))
        return kExitValidation;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
    return kExitFailure;
}

std::string error_category(int code) {
    switch (code) {
        case kExitOk: return "ok";
        case kExitUsage: return "usage";
        case kExitValidation: return "validation";
        case kExitNumerical: return "numerical";
        case kExitAssumption: return "assumption";
        case kExitIo: return "io";
        default: return "failure";
    }
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : outputs) files.push_back({{"file", f.name}, {"bytes", f.bytes}, {"sha256", f.sha256}});
    return {{"tool", kToolName},     {"tool_version", tool_version},
            {"task", task},          {"seed", seed},
            {"started_at", started_at}, {"wall_clock_seconds", wall_clock_seconds},
            {"config", config},      {"outputs", files}};
}

fs::path bundled_scenario(const std::string& file_name) { return fs::path(DST_SCENARIO_DIR) / file_name; }

namespace {

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Collects emitted files and finishes with the manifest.
class Sink {
public:
    Sink(const ScenarioConfig& config, fs::path dir, std::string task)
        : config_(config), start_(std::chrono::steady_clock::now()) {
        manifest_.task = std::move(task);
        manifest_.seed = config.seed;
        manifest_.started_at = utc_now();
        manifest_.config = serialize_scenario(config);
        manifest_.dir = std::move(dir);
    }

    bool wants(const std::string& format) const {
        for (const auto& f : config_.output.formats)
            if (f == format) return true;
        return false;
    }

    void table(const std::string& name, const Table& t) {
        if (wants("csv")) write(name + ".csv", to_csv(t));
        if (wants("json")) write(name + ".json", to_json(t).dump(2) + "\n");
    }

    void json(const std::string& name, const nlohmann::json& doc) { write(name + ".json", doc.dump(2) + "\n"); }

    RunManifest finish() {
        manifest_.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_atomic(manifest_.dir / "manifest.json", manifest_.to_json().dump(2) + "\n");
        spdlog::info("wrote {} files and manifest.json to {}", manifest_.outputs.size(), manifest_.dir.string());
        return manifest_;
    }

private:
    void write(const std::string& file, const std::string& content) {
        write_atomic(manifest_.dir / file, content);
        manifest_.outputs.push_back({file, content.size(), sha256_hex(content)});
    }

    const ScenarioConfig& config_;
    std::chrono::steady_clock::time_point start_;
    RunManifest manifest_;
};

// --- finite helpers -----------------------------------------------------------

const FiniteModelConfig& finite_section(const ScenarioConfig& c, const std::string& task) {
    if (!c.finite) throw ValidationError("task " + task + " needs model_type: finite");
    return *c.finite;
}

const LqModelConfig& lq_section(const ScenarioConfig& c, const std::string& task) {
    if (!c.lq) throw ValidationError("task " + task + " needs model_type: lq");
    return *c.lq;
}

finite::LawGrid law_grid(const finite::FiniteTeamModel& m, const std::string& kind, int step) {
    if (kind == "mixed") return finite::mixed_law_grid(m.num_states(), m.num_actions(), step);
    return finite::deterministic_law_grid(m.num_states(), m.num_actions());
}

std::vector<std::string> count_columns(const finite::FiniteTeamModel& m, const std::string& prefix) {
    std::vector<std::string> cols;
    for (const auto& s : m.state_names()) cols.push_back(prefix + s);
    return cols;
}

std::vector<std::string> law_columns(const finite::FiniteTeamModel& m) {
    std::vector<std::string> cols;
    for (const auto& x : m.state_names())
        for (const auto& u : m.action_names()) cols.push_back("gamma_" + x + "_" + u);
    return cols;
}

void append_law(std::vector<Cell>& row, const finite::LocalLaw& g) {
    for (Index x = 0; x < g.num_states(); ++x)
        for (Index u = 0; u < g.num_actions(); ++u) row.emplace_back(g(x, u));
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

Table gap_table(const std::vector<double>& gaps) {
    Table t({"iteration", "gap"});
    for (std::size_t k = 0; k < gaps.size(); ++k) t.add({static_cast<std::int64_t>(k + 1), gaps[k]});
    return t;
}

finite::ValueTable plan_dss(const ScenarioConfig& c, const finite::FiniteTeamModel& m) {
    const auto& h = c.plan_dss;
    return finite::value_iteration_dss(m, law_grid(m, h.law_grid, h.grid_step), h.tol, h.max_iter,
                                       h.enumeration_bound);
}

finite::QuantizedValueTable plan_ns(const ScenarioConfig& c, const finite::FiniteTeamModel& m) {
    const auto& h = c.plan_ns;
    return finite::value_iteration_ns(m, h.q, law_grid(m, h.law_grid, h.grid_step), h.tol, h.max_iter);
}

finite::FiniteStrategy finite_strategy(const ScenarioConfig& c, const finite::FiniteTeamModel& m,
                                       const std::string& name, std::size_t horizon) {
    if (name == "dss") return finite::extract_dss_strategy(plan_dss(c, m));
    if (name == "ns") return finite::ns_strategy(m, plan_ns(c, m), horizon);
    throw ValidationError("strategy '" + name + "' is not available for finite models");
}

void task_plan_dss(const ScenarioConfig& c, Sink& sink) {
    const auto m = finite_section(c, "plan-dss").build();
    const finite::ValueTable vt = plan_dss(c, m);
    Table values(concat(concat({"rank"}, count_columns(m, "count_")), concat({"value", "law_index"}, law_columns(m))));
    for (Index r = 0; r < vt.space.size(); ++r) {
        std::vector<Cell> row{static_cast<std::int64_t>(r)};
        for (int cnt : vt.space.unrank(r)) row.emplace_back(static_cast<std::int64_t>(cnt));
        row.emplace_back(vt.values[r]);
        row.emplace_back(static_cast<std::int64_t>(vt.policy[r]));
        append_law(row, vt.laws[vt.policy[r]]);
        values.add(std::move(row));
    }
    sink.table("dss_values", values);
    sink.table("dss_gaps", gap_table(vt.gap_history));
}

void task_plan_ns(const ScenarioConfig& c, Sink& sink) {
    const auto m = finite_section(c, "plan-ns").build();
    const finite::QuantizedValueTable qt = plan_ns(c, m);
    Table values(concat(concat({"point"}, count_columns(m, "m_")), concat({"value", "law_index"}, law_columns(m))));
    for (Index r = 0; r < qt.grid.size(); ++r) {
        std::vector<Cell> row{static_cast<std::int64_t>(r)};
        const finite::MeanField point = qt.point(r);
        for (double p : point.probs()) row.emplace_back(p);
        row.emplace_back(qt.values[r]);
        row.emplace_back(static_cast<std::int64_t>(qt.policy[r]));
        append_law(row, qt.laws[qt.policy[r]]);
        values.add(std::move(row));
    }
    sink.table("ns_values", values);

    const auto laws = finite::ns_law_sequence(m, qt, c.plan_ns.horizon);
    Table seq(concat(concat({"t"}, count_columns(m, "m_")), law_columns(m)));
    finite::MeanField mf(m.initial_law());
    for (std::size_t t = 0; t < laws.size(); ++t) {
        std::vector<Cell> row{static_cast<std::int64_t>(t + 1)};
        for (double p : mf.probs()) row.emplace_back(p);
        append_law(row, laws[t]);
        seq.add(std::move(row));
        mf = finite::mean_field_step(m, mf, laws[t]);
    }
    sink.table("ns_law_sequence", seq);
    sink.table("ns_gaps", gap_table(qt.gap_history));
}

void task_qlearn(const ScenarioConfig& c, Sink& sink) {
    const auto m = finite_section(c, "qlearn").build();
    const auto& h = c.qlearn;
    finite::QLearningOptions o;
    o.episodes = h.episodes;
    o.horizon = h.horizon;
    o.behavior.kind = h.behavior == "epsilon_greedy" ? finite::BehaviorPolicy::Kind::EpsilonGreedy
                                                     : finite::BehaviorPolicy::Kind::Uniform;
    o.behavior.epsilon = h.epsilon;
    o.schedule = h.schedule == "polynomial" ? finite::LearningSchedule::polynomial(h.schedule_param)
                 : h.schedule == "constant" ? finite::LearningSchedule::constant(h.schedule_param)
                                            : finite::LearningSchedule::inverse_visits();
    o.seed = c.seed;
    o.trace_every = h.trace_every;
    o.greedy_eval_trials = h.greedy_eval_trials;
    o.greedy_eval_horizon = h.greedy_eval_horizon;

    std::optional<finite::QTable> reference;
    if (h.reference) reference = finite::q_star_oracle(m);
    const auto res = finite::run_q_learning(m, o, reference ? &*reference : nullptr);

    Table trace({"iteration", "sup_error", "greedy_cost"});
    for (const auto& p : res.trace) trace.add({static_cast<std::int64_t>(p.iteration), p.sup_error, p.greedy_cost});
    sink.table("q_trace", trace);

    const finite::DeterministicLawSpace laws(m.num_states(), m.num_actions());
    const finite::CompositionSpace space(m.num_states(), m.n());
    std::vector<std::string> action_cols;
    for (const auto& s : m.state_names()) action_cols.push_back("action_" + s);
    const auto action_cells = [&](std::vector<Cell>& row, Index law) {
        for (Index a : laws.actions(law)) row.emplace_back(m.action_names()[a]);
    };

    Table q(concat(concat({"rank"}, count_columns(m, "count_")), concat(concat({"law_index"}, action_cols), {"q", "visits"})));
    for (Index r = 0; r < space.size(); ++r)
        for (Index l = 0; l < laws.size(); ++l) {
            std::vector<Cell> row{static_cast<std::int64_t>(r)};
            for (int cnt : space.unrank(r)) row.emplace_back(static_cast<std::int64_t>(cnt));
            row.emplace_back(static_cast<std::int64_t>(l));
            action_cells(row, l);
            row.emplace_back(res.table.q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l)));
            row.emplace_back(static_cast<std::int64_t>(res.table.visits(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l))));
            q.add(std::move(row));
        }
    sink.table("q_table", q);

    const auto policy = finite::greedy_policy(res.table);
    Table greedy(concat(concat({"rank"}, count_columns(m, "count_")), concat({"law_index"}, action_cols)));
    for (Index r = 0; r < space.size(); ++r) {
        std::vector<Cell> row{static_cast<std::int64_t>(r)};
        for (int cnt : space.unrank(r)) row.emplace_back(static_cast<std::int64_t>(cnt));
        row.emplace_back(static_cast<std::int64_t>(policy[r]));
        action_cells(row, policy[r]);
        greedy.add(std::move(row));
    }
    sink.table("greedy_policy", greedy);
}

// --- lq helpers ----------------------------------------------------------------

nlohmann::json matrix_json(const lq::Matrix& m) {
    std::vector<double> data;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

void matrix_rows(Table& t, const std::string& name, const lq::Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            t.add({name, static_cast<std::int64_t>(i), static_cast<std::int64_t>(j), m(i, j)});
}

lq::DeepRiccatiSolution solve(const ScenarioConfig& c, const lq::LqTeamModel& m) {
    return lq::solve_deep_riccati(m, c.riccati.tol, c.riccati.max_iter);
}

void emit_riccati(const lq::LqTeamModel& m, const lq::DeepRiccatiSolution& s, Sink& sink) {
    const lq::AssumptionReport rep = lq::check_assumptions(m, &s);
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& ck : rep.checks)
        checks.push_back({{"name", ck.name}, {"satisfied", ck.satisfied}, {"detail", ck.detail}});
    nlohmann::json doc = {{"P", matrix_json(s.P)},
                          {"Pbold", matrix_json(s.Pbold)},
                          {"theta", matrix_json(s.theta)},
                          {"thetabold", matrix_json(s.thetabold)},
                          {"residual", s.residual},
                          {"residual_bold", s.residual_bold},
                          {"mean_field_spectral_radius", rep.mean_field_spectral_radius},
                          {"assumptions", checks}};
    try {
        doc["predicted_cost"] = lq::riccati_predicted_cost(s, m);
    } catch (const Error& e) {
        doc["predicted_cost"] = nullptr;
        doc["predicted_cost_note"] = e.what();
    }
    if (m.weakly_coupled()) {
        nlohmann::json blocks = nlohmann::json::array();
        for (const auto& b : lq::solve_weakly_coupled(m))
            blocks.push_back({{"P", matrix_json(b.P)}, {"theta", matrix_json(b.theta)}, {"residual", b.residual}});
        doc["weakly_coupled_blocks"] = blocks;
    }
    sink.json("riccati", doc);
    if (sink.wants("csv")) {
        Table t({"matrix", "row", "col", "value"});
        matrix_rows(t, "P", s.P);
        matrix_rows(t, "Pbold", s.Pbold);
        matrix_rows(t, "theta", s.theta);
        matrix_rows(t, "thetabold", s.thetabold);
        sink.table("riccati_gains", t);
    }
}

void task_riccati(const ScenarioConfig& c, Sink& sink) {
    const auto m = lq_section(c, "riccati").build();
    emit_riccati(m, solve(c, m), sink);
}

lq::PgHyperparams pg_hyper(const ScenarioConfig& c, const lq::LqTeamModel& m, std::uint64_t seed) {
    lq::PgHyperparams h;
    h.L = c.pg.L;
    h.T = c.pg.T;
    h.r = c.pg.r;
    h.eta = c.pg.eta;
    h.beta = m.beta();
    h.iters = c.pg.iters;
    h.seed = seed;
    h.cost_ceiling = c.pg.cost_ceiling;
    h.divergence_threshold = c.pg.divergence_threshold;
    return h;
}

std::optional<lq::GainPair> reference_gains(const ScenarioConfig& c, const lq::LqTeamModel& m) {
    try {
        const auto s = solve(c, m);
        return lq::GainPair{s.theta, s.thetabold};
    } catch (const Error& e) {
        spdlog::warn("no reference gains for the distance columns: {}", e.what());
        return std::nullopt;
    }
}

Table gain_trace_table(const lq::LqTeamModel& m, const lq::GainTrace& trace) {
    std::vector<std::string> cols{"k"};
    for (int i = 0; i < m.hu(); ++i)
        for (int j = 0; j < m.hx(); ++j) cols.push_back("theta_" + std::to_string(i) + "_" + std::to_string(j));
    for (int i = 0; i < m.z() * m.hu(); ++i)
        for (int j = 0; j < m.z() * m.hx(); ++j) cols.push_back("thetabold_" + std::to_string(i) + "_" + std::to_string(j));
    for (const char* s : {"mean_cost", "dist_theta", "dist_thetabold", "diverged"}) cols.emplace_back(s);
    Table t(cols);
    for (const auto& r : trace.rows) {
        std::vector<Cell> row{static_cast<std::int64_t>(r.k)};
        for (Eigen::Index i = 0; i < r.gains.theta.rows(); ++i)
            for (Eigen::Index j = 0; j < r.gains.theta.cols(); ++j) row.emplace_back(r.gains.theta(i, j));
        for (Eigen::Index i = 0; i < r.gains.thetabold.rows(); ++i)
            for (Eigen::Index j = 0; j < r.gains.thetabold.cols(); ++j) row.emplace_back(r.gains.thetabold(i, j));
        row.emplace_back(r.mean_cost);
        row.emplace_back(r.dist_theta);
        row.emplace_back(r.dist_thetabold);
        row.emplace_back(static_cast<std::int64_t>(r.diverged));
        t.add(std::move(row));
    }
    return t;
}

std::size_t diverged_total(const lq::GainTrace& trace) {
    std::size_t total = 0;
    for (const auto& r : trace.rows) total += r.diverged;
    return total;
}

void task_pg(const ScenarioConfig& c, Sink& sink) {
    const auto m = lq_section(c, "pg").build();
    const auto ref = reference_gains(c, m);
    const auto trace = lq::run_policy_gradient(m, pg_hyper(c, m, c.seed), std::nullopt, ref);
    if (const auto d = diverged_total(trace)) spdlog::warn("{} rollouts diverged and were capped", d);
    sink.table("gain_trace", gain_trace_table(m, trace));
}

lq::LqController lq_controller(const ScenarioConfig& c, const lq::LqTeamModel& m, const std::string& name) {
    if (name == "zero")
        return [hu = m.hu()](std::size_t, const lq::Matrix& x, const lq::Vector&) {
            return lq::Matrix::Zero(x.rows(), hu).eval();
        };
    const auto s = solve(c, m);
    if (name == "dss") return lq::dss_controller(s, m.alpha());
    if (name == "ns") return lq::ns_controller(m, s, lq::expected_initial_deep_state(m));
    throw ValidationError("unknown strategy '" + name + "'");
}

void task_simulate(const ScenarioConfig& c, Sink& sink) {
    const auto& h = c.simulate;
    if (c.finite) {
        const auto m = c.finite->build();
        finite::SimulationOptions opts;
        opts.record_agents = h.record_agents;
        const auto log = finite::simulate_finite_team(m, finite_strategy(c, m, h.strategy, h.horizon), h.horizon,
                                                      c.seed, opts);
        Table t(concat(concat({"t"}, count_columns(m, "count_")), {"cost"}));
        Table agents({"t", "agent", "state", "action"});
        for (const auto& s : log.steps) {
            std::vector<Cell> row{static_cast<std::int64_t>(s.t)};
            for (int cnt : s.state.counts()) row.emplace_back(static_cast<std::int64_t>(cnt));
            row.emplace_back(s.cost);
            t.add(std::move(row));
            for (std::size_t i = 0; i < s.agent_states.size(); ++i)
                agents.add({static_cast<std::int64_t>(s.t), static_cast<std::int64_t>(i),
                            m.state_names()[s.agent_states[i]], m.action_names()[s.agent_actions[i]]});
        }
        sink.table("trajectory", t);
        if (h.record_agents) sink.table("agents", agents);
        return;
    }
    const auto m = c.lq->build();
    lq::LqSimulationOptions opts;
    opts.record_agents = h.record_agents;
    const auto log = lq::simulate_lq_team(m, lq_controller(c, m, h.strategy), h.horizon, c.seed, opts);
    std::vector<std::string> cols{"t"};
    for (int j = 0; j < m.z(); ++j)
        for (int k = 0; k < m.hx(); ++k) cols.push_back("xbar_" + std::to_string(j) + "_" + std::to_string(k));
    cols.emplace_back("cost");
    Table t(cols);
    std::vector<std::string> acols{"t", "agent"};
    for (int k = 0; k < m.hx(); ++k) acols.push_back("x_" + std::to_string(k));
    for (int k = 0; k < m.hu(); ++k) acols.push_back("u_" + std::to_string(k));
    Table agents(acols);
    for (const auto& s : log.steps) {
        std::vector<Cell> row{static_cast<std::int64_t>(s.t)};
        for (Eigen::Index k = 0; k < s.xbar.size(); ++k) row.emplace_back(s.xbar(k));
        row.emplace_back(s.cost);
        t.add(std::move(row));
        for (Eigen::Index i = 0; i < s.states.rows(); ++i) {
            std::vector<Cell> ar{static_cast<std::int64_t>(s.t), static_cast<std::int64_t>(i)};
            for (Eigen::Index k = 0; k < s.states.cols(); ++k) ar.emplace_back(s.states(i, k));
            for (Eigen::Index k = 0; k < s.actions.cols(); ++k) ar.emplace_back(s.actions(i, k));
            agents.add(std::move(ar));
        }
    }
    sink.table("trajectory", t);
    if (h.record_agents) sink.table("agents", agents);
}

void task_evaluate(const ScenarioConfig& c, Sink& sink) {
    const auto& h = c.evaluate;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Table t({"strategy", "mean", "std_error", "trials", "horizon", "predicted"});
    if (c.finite) {
        const auto m = c.finite->build();
        for (const auto& name : h.strategies) {
            const auto est = finite::evaluate_strategy_cost(m, finite_strategy(c, m, name, h.horizon), m.beta(),
                                                            h.horizon, h.trials, c.seed);
            t.add({name, est.mean, est.std_error, static_cast<std::int64_t>(h.trials),
                   static_cast<std::int64_t>(h.horizon), nan});
        }
    } else {
        const auto m = c.lq->build();
        for (const auto& name : h.strategies) {
            const auto est =
                lq::summarize_objectives(lq::lq_trial_objectives(m, lq_controller(c, m, name), h.horizon, h.trials, c.seed));
            double predicted = nan;
            if (name == "dss") {
                try {
                    predicted = lq::riccati_predicted_cost(solve(c, m), m);
                } catch (const Error&) {
                }
            }
            t.add({name, est.mean, est.std_error, static_cast<std::int64_t>(h.trials),
                   static_cast<std::int64_t>(h.horizon), predicted});
        }
    }
    sink.table("evaluation", t);
}

}  // namespace

RunManifest run_task(const ScenarioConfig& config, const fs::path& out_dir) {
    if (!config.task) throw ValidationError("no task given in the scenario or on the command line");
    const std::string name = to_string(*config.task);
    spdlog::info("task {} (seed {})", name, config.seed);
    Sink sink(config, out_dir, name);
    switch (*config.task) {
        case Task::PlanDss: task_plan_dss(config, sink); break;
        case Task::PlanNs: task_plan_ns(config, sink); break;
        case Task::QLearn: task_qlearn(config, sink); break;
        case Task::Riccati: task_riccati(config, sink); break;
        case Task::Pg: task_pg(config, sink); break;
        case Task::Simulate: task_simulate(config, sink); break;
        case Task::Evaluate: task_evaluate(config, sink); break;
    }
    return sink.finish();
}

RunManifest run_smart_grid_example(const ScenarioConfig& config, const fs::path& out_dir) {
    const auto m = lq_section(config, "example smart-grid").build();
    Sink sink(config, out_dir, "example smart-grid");
    const auto s = solve(config, m);
    emit_riccati(m, s, sink);
    const lq::GainPair ref{s.theta, s.thetabold};
    constexpr double kTolerance = 0.05;

    Table summary({"seed", "iters", "final_theta_max_error", "final_thetabold_max_error", "terminal_within_0.05",
                   "first_entry_k", "diverged_rollouts"});
    for (std::uint64_t seed : config.pg.seeds) {
        spdlog::info("policy gradient, seed {}", seed);
        const auto trace = lq::run_policy_gradient(m, pg_hyper(config, m, seed), std::nullopt, ref);
        sink.table("gain_trace_seed" + std::to_string(seed), gain_trace_table(m, trace));
        auto err = [&](const lq::GainPair& g) {
            return std::pair{(g.theta - ref.theta).cwiseAbs().maxCoeff(),
                             (g.thetabold - ref.thetabold).cwiseAbs().maxCoeff()};
        };
        std::int64_t first = -1;
        for (const auto& r : trace.rows) {
            const auto [a, b] = err(r.gains);
            if (a <= kTolerance && b <= kTolerance) {
                first = static_cast<std::int64_t>(r.k);
                break;
            }
        }
        const lq::GainPair last = trace.rows.empty()
                                      ? lq::GainPair{lq::Matrix::Zero(m.hu(), m.hx()),
                                                     lq::Matrix::Zero(m.z() * m.hu(), m.z() * m.hx())}
                                      : trace.rows.back().gains;
        const auto [ea, eb] = err(last);
        summary.add({static_cast<std::int64_t>(seed), static_cast<std::int64_t>(trace.rows.size()), ea, eb,
                     static_cast<std::int64_t>(ea <= kTolerance && eb <= kTolerance), first,
                     static_cast<std::int64_t>(diverged_total(trace))});
    }
    sink.table("pg_summary", summary);
    return sink.finish();
}

}  // namespace dst::cli
