#ifndef HJM_RUN_CONFIG_HPP
#define HJM_RUN_CONFIG_HPP

#include <hjm/curve_space.hpp>
#include <hjm/hjm_dynamics.hpp>
#include <hjm/mc_oracle.hpp>
#include <hjm/problem.hpp>
#include <hjm/vi_pricer.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace hjm {

// Parsed subset of TOML: [section] headers and key = value lines with numbers,
// booleans, quoted strings and flat numeric arrays.
using TomlValue = std::variant<double, bool, std::string, std::vector<double>>;
using TomlTable = std::map<std::string, std::map<std::string, TomlValue>>; // "" holds top-level keys

TomlTable parse_toml(const std::string& text);

struct CurveSource {
    enum class Kind { flat, csv, nelson_siegel };
    Kind kind = Kind::flat;
    double level = 0.01;
    std::filesystem::path path;
    // f(x) = beta0 + beta1 e^{-x/tau} + beta2 (x/tau) e^{-x/tau}
    double beta0 = 0.03;
    double beta1 = -0.01;
    double beta2 = 0.01;
    double tau = 1.0;
};

struct ConvergeConfig {
    std::vector<double> k{4.0, 16.0, 64.0, 256.0};
    std::vector<double> alpha{10.0, 50.0, 250.0};
    std::vector<double> n{1.0, 2.0};
    // n_state per level; n_time = 2 (n_state - 1)
    std::vector<double> grid{61.0, 121.0, 241.0};
};

struct MartingaleConfig {
    std::size_t n_paths = 10000;
    // path step; 0 means (T - t0) / 400
    double dt = 0.0;
    std::size_t n_checkpoints = 5;
    // PDE grid used for the rule; 0 keeps [pde]
    std::size_t n_state = 201;
    std::size_t n_time = 400;
};

struct ProptestConfig {
    std::size_t payoff_samples = 10000;
    std::size_t lipschitz_pairs = 1000;
    std::size_t gaussian_samples = 100000;
    std::size_t regularity_probes = 200;
    // regularity constants (L, L', beta), fitted once on the reference case and frozen
    double regularity_l = 0.5;
    double regularity_l_time = 0.08;
    double regularity_beta = 1.0;
};

struct SimulateConfig {
    std::size_t n_paths = 1000;
};

// Everything a run needs. Defaults form the stochastic reference case.
struct RunConfig {
    double strike = 0.99;
    double maturity = 1.0;
    double t0 = 0.0;
    std::optional<double> expiry;
    CurveSource curve;
    VolatilityModel volatility{VolatilityModel::Kind::deterministic_exp, 0.02, 1.0};
    SpaceConfig space = default_space();
    ChainConfig chain;
    PdeConfig pde;
    LsmcConfig mc;
    MartingaleConfig martingale;
    ConvergeConfig converge;
    ProptestConfig proptest;
    SimulateConfig simulate;
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 20240601;
    std::size_t threads = 0;

    // n_x aligned with T / 200 so shifts are exact on the path grid
    static SpaceConfig default_space();
    // Contract and value invariants; does not touch the file system.
    void validate() const;
    nlohmann::json to_json() const;
};

// Reads, schema-checks and validates. Unknown keys and wrong types are configuration errors.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_toml(const TomlTable& table, const std::filesystem::path& base_dir = {});
// SHA-256 of the canonical JSON form.
std::string config_hash(const RunConfig& config);

// Objects built from a configuration.
struct RunContext {
    RunConfig config;
    GridPtr grid;
    std::shared_ptr<const BasisSet> basis;
    PricingProblem problem;
};

ForwardCurve build_initial_curve(const CurveSource& source, const GridPtr& grid);
RunContext make_context(const RunConfig& config);

} // namespace hjm

#endif
