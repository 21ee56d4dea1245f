// Command-line front end: price, converge, proptest, simulate.

#include <hjm/commands.hpp>
#include <hjm/error.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    bool dump_paths = false;
    std::string axis;
    std::string suite;
};

void add_common(CLI::App* cmd, Options& opt)
{
    cmd->add_option("--config", opt.config, "TOML run configuration (defaults when omitted)");
    cmd->add_option("--seed", opt.seed, "override the configured seed");
    cmd->add_option("--out", opt.out, "output directory");
    cmd->add_option("--threads", opt.threads, "worker threads (0 = all cores)");
}

hjm::RunConfig resolve(const Options& opt)
{
    hjm::RunConfig config = opt.config.empty() ? hjm::RunConfig{} : hjm::load_run_config(opt.config);
    if (opt.seed) {
        config.seed = *opt.seed;
    }
    if (opt.out) {
        config.out_dir = *opt.out;
    }
    if (opt.threads) {
        config.threads = *opt.threads;
    }
    config.validate();
    return config;
}

int report_error(const hjm::Error& e, const std::filesystem::path& out_dir)
{
    const auto body = hjm::error_json(e);
    std::cout << body.dump() << '\n';
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!ec) {
        try {
            hjm::write_json(out_dir / "error.json", body);
        } catch (const hjm::Error&) {
        }
    }
    return hjm::exit_code_for(e);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"American bond put pricing under Musiela-HJM: PDE chain and LSMC oracle"};
    app.require_subcommand(1);
    Options opt;

    auto* price = app.add_subcommand("price", "price with the PDE chain and the LSMC oracle");
    add_common(price, opt);
    auto* converge = app.add_subcommand("converge", "convergence study along one axis");
    add_common(converge, opt);
    converge->add_option("--axis", opt.axis, "k, alpha, n or grid")->required();
    auto* proptest = app.add_subcommand("proptest", "run a property-test suite");
    add_common(proptest, opt);
    proptest->add_option("--suite", opt.suite, "payoff, regularity, martingale or gaussian")->required();
    auto* simulate = app.add_subcommand("simulate", "simulate full-model paths");
    add_common(simulate, opt);
    simulate->add_flag("--dump-paths", opt.dump_paths, "write paths.csv.gz");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? hjm::exit_ok : hjm::exit_usage;
    }

    if (proptest->parsed()) {
        const auto& suites = hjm::proptest_suites();
        if (std::find(suites.begin(), suites.end(), opt.suite) == suites.end()) {
            std::cerr << "usage: --suite must be one of payoff, regularity, martingale, gaussian\n";
            return hjm::exit_usage;
        }
    }
    if (converge->parsed() && opt.axis != "k" && opt.axis != "alpha" && opt.axis != "n" && opt.axis != "grid") {
        std::cerr << "usage: --axis must be one of k, alpha, n, grid\n";
        return hjm::exit_usage;
    }

    std::filesystem::path out_dir = opt.out ? std::filesystem::path(*opt.out) : std::filesystem::path("out");
    try {
        const hjm::RunConfig config = resolve(opt);
        out_dir = config.out_dir;
        hjm::set_default_threads(config.threads);
        const hjm::RunContext ctx = hjm::make_context(config);

        if (price->parsed()) {
            const auto summary = hjm::run_price(ctx, out_dir);
            nlohmann::json brief;
            for (const char* key : {"price_pde", "price_lsmc_out", "stderr", "price_european", "martingale_max_dev",
                                    "config_hash"}) {
                brief[key] = summary.at(key);
            }
            std::cout << brief.dump(2) << '\n';
            return hjm::exit_ok;
        }
        if (converge->parsed()) {
            const auto result = hjm::run_converge(ctx, opt.axis, out_dir);
            std::cout << "axis_value,price,max_change\n";
            for (const auto& row : result.rows) {
                std::cout << row.axis_value << ',' << row.price << ',' << row.change << '\n';
            }
            for (const auto& c : result.checks) {
                std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
            }
            return result.passed() ? hjm::exit_ok : hjm::exit_trend_failure;
        }
        if (proptest->parsed()) {
            const auto result = hjm::run_proptest(ctx, opt.suite, out_dir);
            for (const auto& c : result.checks) {
                std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
            }
            return result.passed() ? hjm::exit_ok : hjm::exit_property_failure;
        }
        const auto summary = hjm::run_simulate(ctx, out_dir, opt.dump_paths);
        std::cout << summary.dump(2) << '\n';
        return hjm::exit_ok;
    } catch (const hjm::Error& e) {
        return report_error(e, out_dir);
    } catch (const std::exception& e) {
        return report_error(hjm::Error(hjm::ErrorKind::io, e.what()), out_dir);
    }
}
