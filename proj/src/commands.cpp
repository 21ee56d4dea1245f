#include <hjm/commands.hpp>
#include <hjm/error.hpp>
#include <hjm/payoff_smoothing.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hjm {

namespace {

std::string fmt(double value)
{
    std::ostringstream out;
    out << std::setprecision(6) << value;
    return out.str();
}

ValueSurface solve(const RunContext& ctx, const ChainConfig& chain, const PdeConfig& pde)
{
    return solve_pde(ctx.problem, ctx.config.volatility, ctx.basis, chain, pde);
}

nlohmann::json estimate_json(const McEstimate& e) { return {{"price", e.price}, {"stderr", e.std_error}}; }

nlohmann::json martingale_json(const MartingaleReport& report)
{
    nlohmann::json checkpoints = nlohmann::json::array();
    for (const auto& c : report.checkpoints) {
        checkpoints.push_back({{"t", c.t}, {"mean", c.mean}, {"stderr", c.std_error}, {"deviation", c.deviation},
                               {"second_moment", c.second_moment}});
    }
    return {
        {"value", report.value},
        {"max_deviation", report.max_deviation},
        {"max_abs_deviation", report.max_abs_deviation},
        {"sup_second_moment", report.sup_second_moment},
        {"stopped_payoff", estimate_json(report.stopped_payoff)},
        {"stopped_deviation", report.stopped_deviation},
        {"exits", report.exits},
        {"n_paths", report.n_paths},
        {"checkpoints", checkpoints},
    };
}

struct MartingaleRun {
    double pde_price = 0.0;
    MartingaleReport report;
};

MartingaleRun run_martingale(const RunContext& ctx)
{
    const RunConfig& cfg = ctx.config;
    PdeConfig pde = cfg.pde;
    if (cfg.martingale.n_state > 0) {
        pde.n_state = cfg.martingale.n_state;
    }
    if (cfg.martingale.n_time > 0) {
        pde.n_time = cfg.martingale.n_time;
    }
    const auto surface = solve(ctx, cfg.chain, pde);
    LsmcConfig mc = cfg.mc;
    mc.n_paths = cfg.martingale.n_paths;
    mc.dt = cfg.martingale.dt > 0.0 ? cfg.martingale.dt : (cfg.maturity - cfg.t0) / 400.0;
    return {surface.price(),
            martingale_diagnostic(surface, ctx.problem, cfg.volatility, mc, cfg.martingale.n_checkpoints)};
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    out << text;
}

std::string xml_escape(const std::string& text)
{
    std::string out;
    for (char c : text) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

PropertyCheck check(std::string name, bool passed, std::string detail)
{
    return {std::move(name), passed, std::move(detail)};
}

// Perturbed curves h0 + sum xi_i sqrt(lambda_i) phi_i.
ForwardCurve random_curve(const RunContext& ctx, Rng& rng)
{
    const auto z = sample_gaussian_coordinates(ctx.basis->size(), ctx.grid->config(), rng);
    return ctx.problem.initial + ctx.basis->reconstruct(z);
}

// ---- payoff suite

std::vector<PropertyCheck> payoff_suite(const RunContext& ctx, nlohmann::json& diag)
{
    const RunConfig& cfg = ctx.config;
    const double strike = cfg.strike;
    const double maturity = cfg.maturity;
    Rng rng = make_rng(cfg.seed, 101);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<PropertyCheck> checks;

    // bonds of random (t, h), plus a band around the kink where smoothing acts
    const std::size_t samples = cfg.proptest.payoff_samples;
    std::vector<double> bonds;
    bonds.reserve(2 * samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const double t = cfg.t0 + (maturity - cfg.t0) * unit(rng);
        bonds.push_back(bond_price(random_curve(ctx, rng), maturity - t));
    }
    for (std::size_t i = 0; i < samples; ++i) {
        bonds.push_back(strike + (2.0 * unit(rng) - 1.0) * 2e-3);
    }
    for (double k : {10.0, 100.0, 1000.0}) {
        const MollifiedPayoff smooth(strike, k);
        double worst = 0.0;
        double worst_bond = 0.0;
        bool bounded = true;
        for (double b : bonds) {
            const double gk = smooth.from_bond(b);
            const double gap = std::abs(gk - payoff_from_bond(b, strike));
            if (gap > worst) {
                worst = gap;
                worst_bond = b;
            }
            bounded = bounded && gk >= 0.0 && gk <= strike;
        }
        const std::string tag = "k=" + fmt(k);
        checks.push_back(check("mollification bound " + tag, worst <= 1.0 / k,
                               "sup |Psi_k - Psi| = " + fmt(worst) + " at B = " + fmt(worst_bond) + ", 1/k = "
                                   + fmt(1.0 / k)));
        checks.push_back(check("0 <= Psi_k <= K " + tag, bounded, "over " + std::to_string(bonds.size()) + " bonds"));
        diag["mollification_sup"][tag] = worst;
    }

    // injection and payoff Lipschitz bounds
    const double c = sup_bound_constant(cfg.space);
    const double slack = 1e-6;
    double injection = 0.0;
    double lipschitz = 0.0;
    double lipschitz_k = 0.0;
    bool injection_ok = true;
    bool lipschitz_ok = true;
    bool lipschitz_k_ok = true;
    std::string witness;
    const MollifiedPayoff smooth(strike, cfg.chain.k);
    for (std::size_t i = 0; i < cfg.proptest.lipschitz_pairs; ++i) {
        const ForwardCurve h = random_curve(ctx, rng);
        const ForwardCurve g = random_curve(ctx, rng);
        const double t = cfg.t0 + (maturity - cfg.t0) * unit(rng);
        double sup = 0.0;
        for (double v : h.values()) {
            sup = std::max(sup, std::abs(v));
        }
        const double nh = norm_w(h);
        injection = std::max(injection, sup / nh);
        if (sup > c * nh + slack) {
            injection_ok = false;
        }
        const double distance = norm_w(h - g);
        const double bh = bond_price(h, maturity - t);
        const double bg = bond_price(g, maturity - t);
        const double dpsi = std::abs(payoff_from_bond(bh, strike) - payoff_from_bond(bg, strike));
        const double dpsi_k = std::abs(smooth.from_bond(bh) - smooth.from_bond(bg));
        lipschitz = std::max(lipschitz, dpsi / distance);
        lipschitz_k = std::max(lipschitz_k, dpsi_k / distance);
        if (dpsi > c * maturity * distance + slack) {
            lipschitz_ok = false;
            witness = "pair " + std::to_string(i) + " t = " + fmt(t);
        }
        if (dpsi_k > c * maturity * distance + slack) {
            lipschitz_k_ok = false;
        }
    }
    checks.push_back(check("injection sup|h| <= C ||h||_w", injection_ok,
                           "max ratio " + fmt(injection) + ", C = " + fmt(c)));
    checks.push_back(check("payoff Lipschitz |Psi(h) - Psi(g)| <= C T ||h - g||_w", lipschitz_ok,
                           "max ratio " + fmt(lipschitz) + ", C T = " + fmt(c * maturity) + " " + witness));
    checks.push_back(check("smoothed payoff Lipschitz", lipschitz_k_ok,
                           "max ratio " + fmt(lipschitz_k) + ", C T = " + fmt(c * maturity)));
    diag["injection_ratio"] = injection;
    diag["lipschitz_ratio"] = lipschitz;
    diag["c"] = c;
    return checks;
}

// ---- regularity suite

struct RegularityFit {
    double space = 0.0; // max |V(t,h) - V(t,g)| / ((e^{b|h|/2} + e^{b|g|/2}) |h - g|)
    double time = 0.0;  // max |V(t2,h) - V(t1,h)| / ((1 + |h|) e^{b|h|/2} |t2 - t1|)
    std::size_t space_violations = 0;
    std::size_t time_violations = 0;
    std::string witness;
};

RegularityFit regularity_fit(const RunContext& ctx, const ValueSurface& surface)
{
    const RunConfig& cfg = ctx.config;
    const double beta = cfg.proptest.regularity_beta;
    const auto& grid = surface.grid;
    const std::size_t n = grid.n;
    // frozen probe set: fixed stream, independent of the run seed
    Rng rng = make_rng(20240601, 707);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double horizon = ctx.problem.exercise_end() - cfg.t0;
    const double dt = 0.05 * horizon;
    auto probe = [&]() {
        std::vector<double> z(ctx.basis->size(), 0.0);
        for (std::size_t a = 0; a < n; ++a) {
            const double half = 0.5 * (grid.upper(a) - grid.lower[a]);
            z[a] = surface.z0[a] + 0.4 * half * (2.0 * unit(rng) - 1.0);
        }
        return ctx.basis->reconstruct(z);
    };
    RegularityFit fit;
    for (std::size_t i = 0; i < cfg.proptest.regularity_probes; ++i) {
        const double t = cfg.t0 + 0.8 * horizon * unit(rng);
        const ForwardCurve h = probe();
        const ForwardCurve g = probe();
        const double nh = norm_w(h);
        const double ng = norm_w(g);
        const double vh = value_at(surface, t, h);
        const double space_scale = (std::exp(0.5 * beta * nh) + std::exp(0.5 * beta * ng)) * norm_w(h - g);
        const double space_ratio = std::abs(vh - value_at(surface, t, g)) / space_scale;
        const double time_scale = (1.0 + nh) * std::exp(0.5 * beta * nh) * dt;
        const double time_ratio = std::abs(value_at(surface, t + dt, h) - vh) / time_scale;
        fit.space = std::max(fit.space, space_ratio);
        fit.time = std::max(fit.time, time_ratio);
        if (space_ratio > cfg.proptest.regularity_l) {
            ++fit.space_violations;
            fit.witness = "probe " + std::to_string(i) + " t = " + fmt(t);
        }
        if (time_ratio > cfg.proptest.regularity_l_time) {
            ++fit.time_violations;
            fit.witness = "probe " + std::to_string(i) + " t = " + fmt(t);
        }
    }
    return fit;
}

std::vector<PropertyCheck> regularity_suite(const RunContext& ctx, nlohmann::json& diag)
{
    const RunConfig& cfg = ctx.config;
    const auto surface = solve(ctx, cfg.chain, cfg.pde);
    const RegularityFit fit = regularity_fit(ctx, surface);
    diag["fitted_l"] = fit.space;
    diag["fitted_l_time"] = fit.time;
    diag["frozen_l"] = cfg.proptest.regularity_l;
    diag["frozen_l_time"] = cfg.proptest.regularity_l_time;
    diag["beta"] = cfg.proptest.regularity_beta;
    const std::string probes = std::to_string(cfg.proptest.regularity_probes);
    return {
        check("space Lipschitz surrogate", fit.space_violations == 0,
              std::to_string(fit.space_violations) + "/" + probes + " violations; fitted " + fmt(fit.space)
                  + " vs frozen L = " + fmt(cfg.proptest.regularity_l) + " " + fit.witness),
        check("time Lipschitz surrogate", fit.time_violations == 0,
              std::to_string(fit.time_violations) + "/" + probes + " violations; fitted " + fmt(fit.time)
                  + " vs frozen L' = " + fmt(cfg.proptest.regularity_l_time) + " " + fit.witness),
    };
}

// ---- martingale suite

std::vector<PropertyCheck> martingale_suite(const RunContext& ctx, nlohmann::json& diag)
{
    const auto run = run_martingale(ctx);
    const auto& r = run.report;
    diag = martingale_json(r);
    std::string per;
    for (const auto& c : r.checkpoints) {
        per += "t=" + fmt(c.t) + ":" + fmt(c.deviation) + " ";
    }
    const bool finite = std::isfinite(r.sup_second_moment) && r.sup_second_moment <= ctx.config.strike * ctx.config.strike;
    return {
        check("stopped-value identity at checkpoints", r.max_deviation <= 3.0,
              "max deviation " + fmt(r.max_deviation) + " stderr; " + per),
        check("stopped payoff at tau* matches V(t0)", r.stopped_deviation <= 3.0,
              "E[D Psi_k(tau*)] = " + fmt(r.stopped_payoff.price) + " vs V = " + fmt(r.value) + ", "
                  + fmt(r.stopped_deviation) + " stderr"),
        check("uniform integrability surrogate sup E[Y^2] <= K^2", finite, "sup E[Y^2] = " + fmt(r.sup_second_moment)),
    };
}

// ---- gaussian suite

std::vector<PropertyCheck> gaussian_suite(const RunContext& ctx, nlohmann::json& diag)
{
    const RunConfig& cfg = ctx.config;
    const BasisSet& basis = *ctx.basis;
    const std::size_t n = basis.size();
    // Gram matrix of the discrete basis: coordinates and norms of sum c_i phi_i follow exactly
    std::vector<double> gram(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            gram[i * n + j] = inner_w(basis[i], basis[j]);
        }
    }
    Rng rng = make_rng(cfg.seed, 303);
    const std::size_t samples = cfg.proptest.gaussian_samples;
    std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
    double norm_sq = 0.0;
    double roundtrip = 0.0;
    std::vector<double> coords(n);
    for (std::size_t s = 0; s < samples; ++s) {
        const auto c = sample_gaussian_coordinates(n, cfg.space, rng);
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double zi = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                zi += gram[i * n + j] * c[j];
            }
            coords[i] = zi;
            norm += c[i] * zi;
        }
        if (s < 1000) {
            // direct path through the curve for a subset
            const ForwardCurve h = basis.reconstruct(c);
            const auto direct = basis.coordinates(h, n);
            for (std::size_t i = 0; i < n; ++i) {
                roundtrip = std::max(roundtrip, std::abs(direct[i] - coords[i]));
            }
            roundtrip = std::max(roundtrip, std::abs(norm_w(h) * norm_w(h) - norm));
        }
        for (std::size_t i = 0; i < n; ++i) {
            sum[i] += coords[i];
            sum_sq[i] += coords[i] * coords[i];
        }
        norm_sq += norm;
    }
    std::vector<PropertyCheck> checks;
    double trace = 0.0;
    const double count = static_cast<double>(samples);
    for (std::size_t i = 0; i < n; ++i) {
        const double lambda = cfg.space.eigenvalue(i);
        trace += lambda;
        const double mean = sum[i] / count;
        const double var = (sum_sq[i] - count * mean * mean) / (count - 1.0);
        const double rel = std::abs(var / lambda - 1.0);
        diag["variance"].push_back({{"i", i + 1}, {"lambda", lambda}, {"sample", var}});
        checks.push_back(check("coordinate variance i=" + std::to_string(i + 1), rel <= 0.05,
                               "sample " + fmt(var) + " vs lambda " + fmt(lambda) + " (rel " + fmt(rel) + ")"));
    }
    const double mean_norm = norm_sq / count;
    const double rel = std::abs(mean_norm / trace - 1.0);
    checks.push_back(check("E||h||_w^2 = sum lambda_i", rel <= 0.05,
                           "sample " + fmt(mean_norm) + " vs " + fmt(trace) + " (rel " + fmt(rel) + ")"));
    checks.push_back(check("basis orthonormal in H_w", basis.gram_residual() <= 1e-8 && roundtrip <= 1e-8,
                           "gram residual " + fmt(basis.gram_residual()) + ", curve roundtrip " + fmt(roundtrip)));
    diag["trace"] = trace;
    diag["mean_norm_sq"] = mean_norm;
    return checks;
}

std::string suite_text(const SuiteResult& result)
{
    std::ostringstream out;
    std::size_t failed = 0;
    for (const auto& c : result.checks) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        failed += c.passed ? 0 : 1;
    }
    out << "suite " << result.suite << ": " << (result.checks.size() - failed) << '/' << result.checks.size()
        << " passed\n";
    return out.str();
}

std::string junit_xml(const SuiteResult& result)
{
    std::size_t failures = 0;
    for (const auto& c : result.checks) {
        failures += c.passed ? 0 : 1;
    }
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<testsuite name=\"" << xml_escape(result.suite) << "\" tests=\"" << result.checks.size()
        << "\" failures=\"" << failures << "\" errors=\"0\">\n";
    for (const auto& c : result.checks) {
        out << "  <testcase classname=\"proptest." << xml_escape(result.suite) << "\" name=\"" << xml_escape(c.name)
            << "\">\n";
        if (!c.passed) {
            out << "    <failure message=\"" << xml_escape(c.detail) << "\"/>\n";
        }
        out << "    <system-out>" << xml_escape(c.detail) << "</system-out>\n";
        out << "  </testcase>\n";
    }
    out << "</testsuite>\n";
    return out.str();
}

} // namespace

int exit_code_for(const Error& error)
{
    switch (error.kind()) {
    case ErrorKind::configuration:
    case ErrorKind::io:
    case ErrorKind::contract:
    case ErrorKind::invalid_curve:
    case ErrorKind::argument:
        return exit_config_error;
    default:
        return exit_property_failure;
    }
}

nlohmann::json error_json(const Error& error)
{
    return {{"error", {{"kind", to_string(error.kind())}, {"message", error.what()}}}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value)
{
    write_text(path, value.dump(2) + "\n");
}

nlohmann::json run_price(const RunContext& ctx, const std::filesystem::path& out_dir)
{
    const RunConfig& cfg = ctx.config;
    std::filesystem::create_directories(out_dir);
    const auto surface = solve(ctx, cfg.chain, cfg.pde);
    const auto lsmc = lsmc_price(ctx.problem, cfg.volatility, cfg.mc);
    const auto european = european_price(ctx.problem, cfg.volatility, cfg.mc);
    const auto martingale = run_martingale(ctx);
    const double layer = boundary_layer_indicator(ctx.problem, cfg.volatility, ctx.basis, cfg.chain, cfg.pde);

    write_surface_csv(out_dir / "surface.csv", surface);
    write_boundary_csv(out_dir / "boundary.csv", surface);
    nlohmann::json summary{
        {"price_pde", surface.price()},
        {"price_lsmc_out", lsmc.out_of_sample.price},
        {"stderr", lsmc.out_of_sample.std_error},
        {"price_lsmc_in", lsmc.in_sample.price},
        {"stderr_in", lsmc.in_sample.std_error},
        {"price_european", european.price},
        {"stderr_european", european.std_error},
        {"martingale_max_dev", martingale.report.max_deviation},
        {"martingale", martingale_json(martingale.report)},
        {"martingale_pde_price", martingale.pde_price},
        {"boundary_layer", layer},
        {"lsmc",
         {{"all_out_of_money", lsmc.all_out_of_money},
          {"exercise_at_start", lsmc.exercise_at_start},
          {"degree_reductions", lsmc.degree_reductions},
          {"n_steps", lsmc.n_steps}}},
        {"pde", surface_summary(surface)},
        {"config", cfg.to_json()},
        {"config_hash", config_hash(cfg)},
    };
    write_json(out_dir / "summary.json", summary);
    return summary;
}

bool ConvergeResult::passed() const
{
    return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.passed; });
}

bool SuiteResult::passed() const
{
    return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.passed; });
}

ConvergeResult run_converge(const RunContext& ctx, const std::string& axis, const std::filesystem::path& out_dir)
{
    const RunConfig& cfg = ctx.config;
    const std::vector<double>* schedule = nullptr;
    if (axis == "k") {
        schedule = &cfg.converge.k;
    } else if (axis == "alpha") {
        schedule = &cfg.converge.alpha;
    } else if (axis == "n") {
        schedule = &cfg.converge.n;
    } else if (axis == "grid") {
        schedule = &cfg.converge.grid;
    } else {
        fail(ErrorKind::argument, "unknown axis '" + axis + "' (expected k, alpha, n or grid)");
    }
    require(!schedule->empty(), ErrorKind::configuration, "empty schedule for axis " + axis);
    std::filesystem::create_directories(out_dir);

    ConvergeResult result;
    result.axis = axis;
    for (double value : *schedule) {
        ChainConfig chain = cfg.chain;
        PdeConfig pde = cfg.pde;
        if (axis == "k") {
            chain.k = value;
        } else if (axis == "alpha") {
            chain.alpha = value;
        } else if (axis == "n") {
            require(value >= 1.0 && value == std::floor(value), ErrorKind::configuration, "n values must be integers");
            chain.n = static_cast<std::size_t>(value);
        } else {
            require(value >= 5.0 && value == std::floor(value), ErrorKind::configuration,
                    "grid values are node counts >= 5");
            pde.n_state = static_cast<std::size_t>(value);
            pde.n_time = 2 * (pde.n_state - 1);
        }
        chain.validate();
        ConvergeRow row;
        row.axis_value = value;
        row.price = solve(ctx, chain, pde).price();
        if (!result.rows.empty()) {
            row.change = std::abs(row.price - result.rows.back().price);
        }
        result.rows.push_back(row);
    }

    const auto& rows = result.rows;
    const double tiny = 1e-12;
    // changes between consecutive levels shrink
    if (rows.size() >= 3) {
        bool shrinking = true;
        std::string detail;
        for (std::size_t i = 2; i < rows.size(); ++i) {
            shrinking = shrinking && rows[i].change <= rows[i - 1].change + tiny;
            detail += fmt(rows[i - 1].change) + " -> " + fmt(rows[i].change) + "; ";
        }
        result.checks.push_back(check(axis + ": changes shrink", shrinking, detail));
    }

    if (axis == "k" && rows.size() >= 2) {
        // distance to the finest level decreases and decays like c/k
        const double reference = rows.back().price;
        std::vector<double> ks, ds;
        bool decreasing = true;
        for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
            const double d = std::abs(rows[i].price - reference);
            if (!ds.empty()) {
                decreasing = decreasing && d <= ds.back() + tiny;
            }
            ks.push_back(rows[i].axis_value);
            ds.push_back(d);
        }
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < ks.size(); ++i) {
            num += ds[i] / ks[i];
            den += 1.0 / (ks[i] * ks[i]);
        }
        const double c = num / den;
        result.diagnostics["fitted_c"] = c;
        result.checks.push_back(check("k: |price_k - price_ref| decreasing", decreasing, ""));
        if (ds.front() <= tiny) {
            result.checks.push_back(check("k: c/k domination", true, "price independent of k"));
        } else if (ks.size() >= 2) {
            // log-log slope of d_k against k over the levels that still move
            double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
            std::size_t m = 0;
            for (std::size_t i = 0; i < ks.size(); ++i) {
                if (ds[i] > tiny) {
                    const double x = std::log(ks[i]), y = std::log(ds[i]);
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    sxy += x * y;
                    ++m;
                }
            }
            const double slope = m >= 2 ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : -1.0;
            result.diagnostics["loglog_slope"] = slope;
            std::string detail = "fitted c = " + fmt(c) + ", slope " + fmt(slope) + "; ";
            for (std::size_t i = 0; i < ks.size(); ++i) {
                detail += "k=" + fmt(ks[i]) + ": " + fmt(ds[i]) + " vs c/k " + fmt(c / ks[i]) + "; ";
            }
            result.checks.push_back(check("k: c/k domination", slope <= -0.8, detail));
        }
    }

    if (axis == "grid" && rows.size() >= 3) {
        bool ok = true;
        std::string detail;
        nlohmann::json ratios = nlohmann::json::array();
        for (std::size_t i = 2; i < rows.size(); ++i) {
            if (rows[i - 1].change <= tiny && rows[i].change <= tiny) {
                detail += "no grid dependence; ";
                continue;
            }
            const double ratio = rows[i].change > 0.0 ? rows[i - 1].change / rows[i].change
                                                      : std::numeric_limits<double>::infinity();
            ratios.push_back(ratio);
            ok = ok && ratio >= 2.5 && ratio <= 5.5;
            detail += "ratio " + fmt(ratio) + "; ";
        }
        result.diagnostics["richardson_ratios"] = ratios;
        result.checks.push_back(check("grid: Richardson ratio in [2.5, 5.5]", ok, detail));
    }

    if (axis == "n") {
        // larger n moves the chain towards the full-model oracle
        const auto lsmc = lsmc_price(ctx.problem, cfg.volatility, cfg.mc);
        const double oracle = lsmc.out_of_sample.price;
        const double se = lsmc.out_of_sample.std_error;
        result.diagnostics["lsmc"] = estimate_json(lsmc.out_of_sample);
        bool closer = true;
        std::string detail = "LSMC " + fmt(oracle) + " +- " + fmt(se) + "; ";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double gap = std::abs(rows[i].price - oracle);
            detail += "n=" + fmt(rows[i].axis_value) + ": gap " + fmt(gap) + "; ";
            if (i > 0) {
                closer = closer && gap <= std::abs(rows[i - 1].price - oracle) + 3.0 * se;
            }
        }
        result.checks.push_back(check("n: gap to the full-model oracle shrinks", closer, detail));
    }

    std::ostringstream csv;
    csv << std::setprecision(12) << "axis_value,price,max_change\n";
    for (const auto& r : rows) {
        csv << r.axis_value << ',' << r.price << ',' << r.change << '\n';
    }
    write_text(out_dir / ("converge_" + axis + ".csv"), csv.str());
    nlohmann::json report{{"axis", axis}, {"diagnostics", result.diagnostics}, {"config_hash", config_hash(cfg)}};
    for (const auto& c : result.checks) {
        report["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    write_json(out_dir / ("converge_" + axis + ".json"), report);
    return result;
}

const std::vector<std::string>& proptest_suites()
{
    static const std::vector<std::string> suites{"payoff", "regularity", "martingale", "gaussian"};
    return suites;
}

SuiteResult run_proptest(const RunContext& ctx, const std::string& suite, const std::filesystem::path& out_dir)
{
    SuiteResult result;
    result.suite = suite;
    if (suite == "payoff") {
        result.checks = payoff_suite(ctx, result.diagnostics);
    } else if (suite == "regularity") {
        result.checks = regularity_suite(ctx, result.diagnostics);
    } else if (suite == "martingale") {
        result.checks = martingale_suite(ctx, result.diagnostics);
    } else if (suite == "gaussian") {
        result.checks = gaussian_suite(ctx, result.diagnostics);
    } else {
        fail(ErrorKind::argument, "unknown suite '" + suite + "'");
    }
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / ("proptest_" + suite + ".xml"), junit_xml(result));
    write_text(out_dir / ("proptest_" + suite + ".txt"), suite_text(result));
    return result;
}

nlohmann::json run_simulate(const RunContext& ctx, const std::filesystem::path& out_dir, bool dump_paths)
{
    const RunConfig& cfg = ctx.config;
    std::filesystem::create_directories(out_dir);
    const double dt = cfg.mc.step(ctx.problem);
    SimulationOptions options;
    options.antithetic = cfg.mc.antithetic;
    options.threads = cfg.threads;
    const auto ensemble = simulate_paths(ctx.problem.initial, cfg.t0, cfg.maturity, dt, cfg.simulate.n_paths,
                                         cfg.volatility, cfg.seed, options);
    // discounted bond D(t) B(t, T) is a martingale with mean B(t0, T)
    const double bond0 = bond_price(ctx.problem.initial, cfg.maturity - cfg.t0);
    nlohmann::json checkpoints = nlohmann::json::array();
    for (std::size_t q = 0; q <= 4; ++q) {
        const std::size_t m = q * ensemble.n_steps / 4;
        std::vector<double> values(ensemble.n_paths);
        for (std::size_t p = 0; p < ensemble.n_paths; ++p) {
            const std::size_t idx = ensemble.index(p, m);
            values[p] = std::exp(ensemble.log_discount[idx]) * ensemble.bond[idx];
        }
        double mean = 0.0;
        for (double v : values) {
            mean += v;
        }
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) {
            var += (v - mean) * (v - mean);
        }
        const double se = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)
                                                        / static_cast<double>(values.size()))
                                            : 0.0;
        checkpoints.push_back({{"t", ensemble.time(m)}, {"discounted_bond_mean", mean}, {"stderr", se}});
    }
    nlohmann::json summary{
        {"n_paths", ensemble.n_paths},
        {"n_steps", ensemble.n_steps},
        {"dt", dt},
        {"bond_t0", bond0},
        {"checkpoints", checkpoints},
        {"config_hash", config_hash(cfg)},
    };
    if (dump_paths) {
        write_paths_csv_gz(out_dir / "paths.csv.gz", ensemble);
        summary["paths_file"] = "paths.csv.gz";
    }
    write_json(out_dir / "simulate.json", summary);
    return summary;
}

} // namespace hjm
