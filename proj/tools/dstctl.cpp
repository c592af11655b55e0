#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dst/cli/runner.hpp"

namespace {

struct Common {
    std::string scenario;
    std::string out;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, Common& c, bool scenario_required) {
    auto* s = cmd->add_option("--scenario", c.scenario, "Scenario file (YAML)");
    if (scenario_required) s->required();
    cmd->add_option("--out", c.out, "Output directory (default: output.dir from the scenario)");
    cmd->add_option("--override", c.overrides, "KEY=VALUE with a dotted key, e.g. hyper.pg.iters=100")
        ->take_all()
        ->allow_extra_args(false);
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&c](const std::uint64_t& v) { c.seed = v, c.seed_given = true; }, "Base seed");
}

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("dstctl");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("DST_LOG_LEVEL");
    spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace dst::cli;
    configure_logging();

    CLI::App app{"Planning and learning for deep structured teams"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    Common common;
    std::vector<std::pair<CLI::App*, Task>> tasks;
    for (Task t : {Task::PlanDss, Task::PlanNs, Task::QLearn, Task::Riccati, Task::Pg, Task::Simulate, Task::Evaluate}) {
        auto* cmd = app.add_subcommand(to_string(t), "Run the " + to_string(t) + " task");
        add_common(cmd, common, true);
        tasks.emplace_back(cmd, t);
    }
    std::string example;
    auto* ex = app.add_subcommand("example", "Run a bundled example");
    ex->add_option("name", example, "Example name")->required()->check(CLI::IsMember({"smart-grid"}));
    add_common(ex, common, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        std::vector<std::string> overrides = common.overrides;
        if (common.seed_given) overrides.push_back("seed=" + std::to_string(common.seed));
        RunManifest manifest;
        if (ex->parsed()) {
            const auto path = common.scenario.empty() ? bundled_scenario("smart_grid.scenario")
                                                      : std::filesystem::path(common.scenario);
            const ScenarioConfig config = parse_scenario(path, overrides);
            manifest = run_smart_grid_example(config, common.out.empty() ? config.output.dir : common.out);
        } else {
            for (const auto& [cmd, task] : tasks) {
                if (!cmd->parsed()) continue;
                overrides.push_back("task=" + to_string(task));
                const ScenarioConfig config = parse_scenario(common.scenario, overrides);
                manifest = run_task(config, common.out.empty() ? config.output.dir : common.out);
            }
        }
        for (const auto& f : manifest.outputs) std::cout << (manifest.dir / f.name).string() << "\n";
        std::cout << (manifest.dir / "manifest.json").string() << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        std::cerr << "error [" << error_category(code) << "]: " << e.what() << "\n";
        return code;
    }
}
