#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "evstop/ingest.hpp"
#include "evstop/simlab.hpp"

namespace evstop::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitDataError = 2,
    kExitConfigError = 3,
    kExitInternalError = 4,
};

inline constexpr const char* kOutputDirEnv = "EVSTOP_OUTPUT_DIR";
inline constexpr double kDefaultAlpha = 0.01;
inline constexpr std::size_t kPilotSamples = 200;

struct ThinningChoice {
    enum class Kind { automatic, off, fixed } kind = Kind::automatic;
    std::size_t interval = 1; // fixed only

    // "auto", "off" or a positive integer. Throws ConfigError.
    static ThinningChoice parse(const std::string& text);
};

struct RunConfig {
    std::vector<std::filesystem::path> inputs;
    std::optional<std::filesystem::path> report_input;
    double alpha = kDefaultAlpha;
    ReferenceMode mode = ReferenceMode::de_warmstart;
    std::optional<std::size_t> budget; // defaults to the longest chain
    ThinningChoice thinning;
    std::optional<std::filesystem::path> output_dir; // falls back to $EVSTOP_OUTPUT_DIR
    std::optional<double> clamp_floor;
    std::size_t jobs = 1;
};

struct ReportConfig {
    std::filesystem::path decisions;
    std::filesystem::path records;
    std::optional<std::filesystem::path> report_records;
    std::optional<double> clamp_floor;
    bool json = false;
};

struct SimulateConfig {
    ScenarioSpec spec;
    double alpha = 0.05;
    std::size_t replications = 2000;
    std::optional<std::filesystem::path> dump_dir;
    std::optional<std::filesystem::path> output; // stdout when empty
};

struct ThinConfig {
    std::filesystem::path records;
    std::size_t pilot = 0; // 0: whole chain
    std::optional<double> clamp_floor;
};

// Each command writes results to `out`, diagnostics to `err`, and reports
// failures by exception; run_cli maps those to exit codes.
void cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err);
void cmd_report(const ReportConfig& config, std::ostream& out, std::ostream& err);
void cmd_simulate(const SimulateConfig& config, std::ostream& out, std::ostream& err);
void cmd_thin(const ThinConfig& config, std::ostream& out, std::ostream& err);

// Prints the failure to `err` and returns its exit code: DataError 2,
// ConfigError 3, anything else 4.
int report_failure(std::exception_ptr failure, std::ostream& err);

// Parses argv and dispatches; never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace evstop::cli
