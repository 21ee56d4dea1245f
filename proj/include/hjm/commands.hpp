#ifndef HJM_COMMANDS_HPP
#define HJM_COMMANDS_HPP

#include <hjm/error.hpp>
#include <hjm/run_config.hpp>

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace hjm {

enum ExitCode : int {
    exit_ok = 0,
    exit_property_failure = 1,
    exit_config_error = 2,
    exit_trend_failure = 3,
    exit_usage = 64,
};

// Exit code for a library error: configuration and I/O problems map to 2,
// numerical failures to 1.
int exit_code_for(const Error& error);
nlohmann::json error_json(const Error& error);

// One checked property with a human-readable witness.
struct PropertyCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

// price: PDE chain, LSMC oracle, European control and martingale diagnostic.
// Writes summary.json, surface.csv and boundary.csv into `out_dir`.
nlohmann::json run_price(const RunContext& ctx, const std::filesystem::path& out_dir);

struct ConvergeRow {
    double axis_value = 0.0;
    double price = 0.0;
    double change = 0.0; // |price - previous price|, 0 for the first row
};

struct ConvergeResult {
    std::string axis;
    std::vector<ConvergeRow> rows;
    std::vector<PropertyCheck> checks;
    nlohmann::json diagnostics;
    bool passed() const;
};

// converge: re-solves along one axis (k, alpha, n, grid) and checks the trend.
// Writes converge_<axis>.csv and converge_<axis>.json.
ConvergeResult run_converge(const RunContext& ctx, const std::string& axis, const std::filesystem::path& out_dir);

struct SuiteResult {
    std::string suite;
    std::vector<PropertyCheck> checks;
    nlohmann::json diagnostics;
    bool passed() const;
};

const std::vector<std::string>& proptest_suites();
// proptest: payoff, regularity, martingale or gaussian. Writes
// proptest_<suite>.xml (JUnit) and proptest_<suite>.txt.
SuiteResult run_proptest(const RunContext& ctx, const std::string& suite, const std::filesystem::path& out_dir);

// simulate: full-model path ensemble; summary in simulate.json and, when
// requested, the gzip CSV dump paths.csv.gz.
nlohmann::json run_simulate(const RunContext& ctx, const std::filesystem::path& out_dir, bool dump_paths);

// Writes JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

} // namespace hjm

#endif
