// Acceptance criteria: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <hjm/commands.hpp>
#include <hjm/error.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

using namespace hjm;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::filesystem::path work_dir;

std::string fmt(double value)
{
    std::ostringstream out;
    out.precision(6);
    out << value;
    return out.str();
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const PropertyCheck* find_check(const SuiteResult& suite, const std::string& prefix)
{
    for (const auto& c : suite.checks) {
        if (c.name.rfind(prefix, 0) == 0) {
            return &c;
        }
    }
    return nullptr;
}

RunConfig flat_config(double level, double strike, double sigma0)
{
    RunConfig config;
    config.curve.kind = CurveSource::Kind::flat;
    config.curve.level = level;
    config.strike = strike;
    config.volatility = {VolatilityModel::Kind::deterministic_exp, sigma0, 1.0};
    return config;
}

// 1. deterministic benchmark from both engines
Outcome analytic_benchmark()
{
    Outcome out{true, ""};
    const double analytic = 0.9 - std::exp(-0.2);
    for (const auto& [level, target, tol] : {std::tuple{0.2, analytic, 1e-3}, std::tuple{-0.05, 0.0, 1e-4}}) {
        RunConfig config = flat_config(level, 0.9, 0.0);
        config.mc.n_paths = 10000;
        const RunContext ctx = make_context(config);
        const double pde = solve_pde(ctx.problem, config.volatility, ctx.basis, config.chain, config.pde).price();
        const double mc = lsmc_price(ctx.problem, config.volatility, ctx.config.mc).out_of_sample.price;
        const bool ok = std::abs(pde - target) <= tol && std::abs(mc - target) <= tol;
        out.passed = out.passed && ok;
        out.detail += "h=" + fmt(level) + ": PDE " + fmt(pde) + " LSMC " + fmt(mc) + " target " + fmt(target) + "; ";
    }
    return out;
}

// 2 and 3 share the payoff suite
SuiteResult payoff_suite_result()
{
    static const SuiteResult result = [] {
        const RunContext ctx = make_context(RunConfig{});
        return run_proptest(ctx, "payoff", work_dir / "payoff");
    }();
    return result;
}

Outcome mollification_bound()
{
    const auto suite = payoff_suite_result();
    Outcome out{true, ""};
    for (const char* k : {"k=10", "k=100", "k=1000"}) {
        const auto* c = find_check(suite, std::string("mollification bound ") + k);
        out.passed = out.passed && c != nullptr && c->passed;
        out.detail += c ? c->detail + "; " : std::string("missing; ");
    }
    return out;
}

Outcome injection_and_lipschitz()
{
    const auto suite = payoff_suite_result();
    Outcome out{true, ""};
    for (const char* name : {"injection", "payoff Lipschitz"}) {
        const auto* c = find_check(suite, name);
        out.passed = out.passed && c != nullptr && c->passed;
        out.detail += std::string(name) + ": " + (c ? c->detail : "missing") + "; ";
    }
    return out;
}

// 4. PDE chain against the LSMC oracle on the 6-case matrix
Outcome oracle_agreement()
{
    Outcome out{true, ""};
    for (double strike : {0.88, 0.92}) {
        for (double level : {0.01, 0.05, 0.10}) {
            RunConfig config = flat_config(level, strike, 0.01);
            config.mc.n_paths = 100000;
            const RunContext ctx = make_context(config);
            const double pde = solve_pde(ctx.problem, config.volatility, ctx.basis, config.chain, config.pde).price();
            const auto mc = lsmc_price(ctx.problem, config.volatility, ctx.config.mc).out_of_sample;
            const double gap = std::abs(pde - mc.price);
            const bool ok = gap <= std::max(2e-3, 3.0 * mc.std_error);
            out.passed = out.passed && ok;
            out.detail += "K=" + fmt(strike) + " h=" + fmt(level) + ": " + fmt(pde) + " vs " + fmt(mc.price) + "; ";
        }
    }
    return out;
}

// 5. stopped-value identity on the default stochastic config
Outcome martingale()
{
    const RunContext ctx = make_context(RunConfig{});
    const auto suite = run_proptest(ctx, "martingale", work_dir / "martingale");
    const auto* c = find_check(suite, "stopped-value identity");
    return {c != nullptr && c->passed, c ? c->detail : "missing"};
}

// 6. convergence trends along k, alpha, n and the PDE grid
Outcome convergence()
{
    const RunContext ctx = make_context(RunConfig{});
    Outcome out{true, ""};
    for (const char* axis : {"k", "alpha", "n", "grid"}) {
        const auto result = run_converge(ctx, axis, work_dir / "converge");
        out.passed = out.passed && result.passed();
        out.detail += std::string(axis) + ":";
        for (const auto& row : result.rows) {
            out.detail += " " + fmt(row.price);
        }
        for (const auto& c : result.checks) {
            if (!c.passed) {
                out.detail += " [failed " + c.name + ": " + c.detail + "]";
            }
        }
        if (result.diagnostics.contains("richardson_ratios")) {
            out.detail += " ratios " + result.diagnostics["richardson_ratios"].dump();
        }
        if (result.diagnostics.contains("loglog_slope")) {
            out.detail += " slope " + fmt(result.diagnostics["loglog_slope"].get<double>());
        }
        out.detail += "; ";
    }
    return out;
}

Outcome suite_outcome(const std::string& suite)
{
    const RunContext ctx = make_context(RunConfig{});
    const auto result = run_proptest(ctx, suite, work_dir / suite);
    Outcome out{result.passed(), ""};
    for (const auto& c : result.checks) {
        if (!c.passed || suite == "regularity") {
            out.detail += c.name + ": " + c.detail + "; ";
        }
    }
    if (out.detail.empty()) {
        out.detail = std::to_string(result.checks.size()) + " checks";
    }
    return out;
}

// 9. byte-identical reports from two runs with the same seed
Outcome determinism()
{
    RunConfig config;
    config.mc.n_paths = 10000;
    config.martingale.n_paths = 2000;
    config.martingale.n_state = 101;
    config.martingale.n_time = 200;
    config.simulate.n_paths = 200;
    Outcome out{true, ""};
    for (int run = 0; run < 2; ++run) {
        const RunContext ctx = make_context(config);
        run_price(ctx, work_dir / ("det" + std::to_string(run)));
        run_simulate(ctx, work_dir / ("det" + std::to_string(run)), true);
    }
    for (const char* file : {"summary.json", "surface.csv", "boundary.csv", "simulate.json", "paths.csv.gz"}) {
        const auto a = read_file(work_dir / "det0" / file);
        const auto b = read_file(work_dir / "det1" / file);
        const bool same = !a.empty() && a == b;
        out.passed = out.passed && same;
        out.detail += std::string(file) + (same ? " identical; " : " DIFFERS; ");
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    work_dir = argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "hjm_acceptance";
    std::filesystem::remove_all(work_dir);
    std::filesystem::create_directories(work_dir);

    struct Criterion {
        int id;
        const char* name;
        double budget_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "analytic deterministic benchmark", 30.0, analytic_benchmark},
        {2, "mollification bound |Psi_k - Psi| <= 1/k", 10.0, mollification_bound},
        {3, "injection and payoff Lipschitz", 10.0, injection_and_lipschitz},
        {4, "oracle agreement PDE vs LSMC (6 cases)", 300.0, oracle_agreement},
        {5, "stopped-value identity / martingale diagnostic", 120.0, martingale},
        {6, "convergence trends in k, alpha, n and grid", 600.0, convergence},
        {7, "regularity surrogates with frozen constants", 120.0, [] { return suite_outcome("regularity"); }},
        {8, "Gaussian measure variances and trace", 10.0, [] { return suite_outcome("gaussian"); }},
        {9, "determinism of reports", 60.0, determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("error: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds <= c.budget_seconds;
        const bool passed = outcome.passed && in_time;
        failures += passed ? 0 : 1;
        std::cout << (passed ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " (" << fmt(seconds)
                  << " s of " << fmt(c.budget_seconds) << " s" << (in_time ? "" : ", over budget") << ") "
                  << outcome.detail << std::endl;
    }
    std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
