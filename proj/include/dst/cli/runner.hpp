#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dst/cli/scenario.hpp"

namespace dst::cli {

inline constexpr const char* kToolName = "dstctl";
inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitUsage = 2,       // command line or scenario syntax
    kExitValidation = 3,  // schema, model invariants, unsupported settings
    kExitNumerical = 4,   // non-convergence, diverged trajectories
    kExitAssumption = 5,  // failed model assumption (definiteness, stability, ...)
    kExitIo = 6,
};

int exit_code_for(const std::exception& e);
std::string error_category(int exit_code);

struct OutputFile {
    std::string name;
    std::uintmax_t bytes;
    std::string sha256;
};

struct RunManifest {
    std::string task;
    std::string tool_version = kToolVersion;
    std::uint64_t seed = 0;
    std::string started_at;  // UTC, ISO 8601
    double wall_clock_seconds = 0.0;
    std::string config;      // resolved scenario, serialized
    std::vector<OutputFile> outputs;
    std::filesystem::path dir;

    nlohmann::json to_json() const;
};

// Runs config.task and writes its tables plus manifest.json under out_dir.
RunManifest run_task(const ScenarioConfig& config, const std::filesystem::path& out_dir);

// Riccati reference gains, then one policy-gradient trace per seed in hyper.pg.seeds.
RunManifest run_smart_grid_example(const ScenarioConfig& config, const std::filesystem::path& out_dir);

// Scenarios shipped in the repository's scenarios/ directory.
std::filesystem::path bundled_scenario(const std::string& file_name);

}  // namespace dst::cli
