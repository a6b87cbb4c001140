// Command-line frontend: configuration, subcommands and file writers.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 I/O failure,
// 3 numeric degradation (more than 1% of cells failed, or a fatal numeric error).

#pragma once

#include "mottsf/probes.hpp"
#include "mottsf/sweep.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mottsf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumeric = 3;

// Bumped whenever a CSV or JSON layout changes.
inline constexpr int kFormatVersion = 1;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OutputFormat { csv, json, both };

const char* to_string(OutputFormat format) noexcept;
OutputFormat parse_format(const std::string& text);

enum class LobeAxis { delta1, delta2, omega, g };

const char* to_string(LobeAxis axis) noexcept;
LobeAxis parse_axis(const std::string& text);

struct NumericsConfig {
    int n_max = 8;              // equilibrium cutoff
    int dissipative_n_max = 6;  // cutoff for master-equation runs
    double beta = 0.5;
    int max_iter = 500;
    double step_tolerance = 1e-10;
    double distinct_tolerance = 1e-4;
    int random_starts = 2;
    std::uint64_t seed = 0x5eed;
    bool warm_start = true;
    bool truncation_check = true;
};

struct LobesConfig {
    LobeAxis axis = LobeAxis::delta1;
    double lo = -10.0;
    double hi = 10.0;
    int count = 201;  // 1 gives a single axis point
    std::vector<int> charges{0, 1, 2, 3};
};

struct ObservablesConfig {
    std::vector<double> mu_list{-0.6, -0.4, -0.2};
    AxisRange k{0.0, 0.3, 61};
    SweepMode mode = SweepMode::equilibrium;
};

struct SpectrumConfig {
    std::vector<double> mu_list{-0.1, -0.3, -0.5};
    double k = 0.13;
    std::vector<Channel> channels{Channel::a};
    double omega_lo = -15.0;
    double omega_hi = 15.0;
    double omega_step = 0.01;
    double prominence = 0.01;
};

struct OutputConfig {
    std::string directory = "mottsf-out";
    OutputFormat format = OutputFormat::csv;
};

// Every key has a default; the model defaults are the reference equilibrium
// parameter set.
struct RunConfig {
    ModelParams model;
    NumericsConfig numerics;
    AxisRange mu{-1.0, 0.0, 60};
    AxisRange k{0.0, 0.3, 60};
    LobesConfig lobes;
    ObservablesConfig observables;
    SpectrumConfig spectrum;
    OutputConfig output;
};

// Sets one dotted key ("model.omega", "grid.k_count", ...) from its text
// form. Throws UsageError on unknown keys or malformed values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

// Accepts the sectioned key = value format or JSON (either a config object or
// a meta.json containing one under "config"). Throws UsageError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical JSON form of a resolved config (what meta.json embeds).
std::string config_to_json(const RunConfig& config, int indent = 2);

// Shortest text that reads back to the same double; "nan", "inf", "-inf".
std::string format_double(double value);

SelfConsistencyOptions self_consistency_options(const NumericsConfig& numerics);

struct CommandResult {
    int exit_code = kExitOk;
    std::vector<std::string> files;  // paths written, in order
    std::string summary;
};

CommandResult cmd_phase_diagram(const RunConfig& config, int workers);
CommandResult cmd_lobes(const RunConfig& config);
CommandResult cmd_dissipative_diagram(const RunConfig& config, int workers);
CommandResult cmd_observables(const RunConfig& config, int workers);
CommandResult cmd_spectrum(const RunConfig& config, int workers);

// Full CLI: argument parsing, environment (MOTTSF_WORKERS), dispatch and the
// exit-code contract. Messages go to out/err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// The tool's version string (git describe when available).
const char* version() noexcept;

}  // namespace mottsf::cli
