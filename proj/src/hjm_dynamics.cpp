#include <hjm/error.hpp>
#include <hjm/hjm_dynamics.hpp>

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <string>

namespace hjm {

// ---------------------------------------------------------------------------
// VolatilityModel
// ---------------------------------------------------------------------------

const char* to_string(VolatilityModel::Kind kind)
{
    switch (kind) {
    case VolatilityModel::Kind::deterministic_exp: return "deterministic-exp";
    case VolatilityModel::Kind::level_dependent: return "level-dependent";
    }
    return "unknown";
}

VolatilityModel::Kind parse_volatility_kind(const std::string& name)
{
    if (name == "deterministic-exp" || name == "deterministic_exp") {
        return VolatilityModel::Kind::deterministic_exp;
    }
    if (name == "level-dependent" || name == "level_dependent") {
        return VolatilityModel::Kind::level_dependent;
    }
    fail(ErrorKind::configuration, "unknown volatility kind: " + name);
}

double VolatilityModel::envelope(double x) const { return sigma0 * std::exp(-kappa * x); }

double VolatilityModel::c_sigma(const Grid& grid) const
{
    auto grid_ptr = Grid::make(grid.config());
    return norm_w(ForwardCurve::from_function(grid_ptr, [this](double x) { return envelope(x); }));
}

double VolatilityModel::l_sigma() const { return kind == Kind::level_dependent ? 0.5 * sigma0 : 0.0; }

void VolatilityModel::validate(const Grid& grid) const
{
    require(std::isfinite(sigma0) && sigma0 >= 0.0, ErrorKind::configuration, "sigma0 must be nonnegative");
    require(std::isfinite(kappa) && kappa >= 0.0, ErrorKind::configuration, "kappa must be nonnegative");
    require(envelope(grid.x_max()) <= 1e-6, ErrorKind::configuration,
            "volatility does not decay to zero at the end of the grid; increase kappa or x_max");
}

// ---------------------------------------------------------------------------
// CurveDynamics
// ---------------------------------------------------------------------------

CurveDynamics::CurveDynamics(VolatilityModel model, GridPtr grid)
    : m_model(model), m_grid(std::move(grid)), m_envelope(m_grid->size())
{
    for (std::size_t j = 0; j < m_envelope.size(); ++j) {
        m_envelope[j] = m_model.envelope(m_grid->node(j));
    }
}

void CurveDynamics::coefficients(std::span<const double> h, std::span<double> sigma, std::span<double> drift) const
{
    const std::size_t n = h.size();
    if (m_model.kind == VolatilityModel::Kind::level_dependent) {
        for (std::size_t j = 0; j < n; ++j) {
            sigma[j] = 0.5 * (1.0 + std::tanh(h[j])) * m_envelope[j];
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            sigma[j] = m_envelope[j];
        }
    }
    const double half_dx = 0.5 * m_grid->spacing();
    double cumulative = 0.0;
    drift[0] = 0.0;
    for (std::size_t j = 1; j < n; ++j) {
        cumulative += half_dx * (sigma[j - 1] + sigma[j]);
        drift[j] = sigma[j] * cumulative;
    }
}

ForwardCurve CurveDynamics::sigma(const ForwardCurve& h) const
{
    std::vector<double> s(h.size()), f(h.size());
    coefficients(h.values(), s, f);
    return ForwardCurve(h.grid_ptr(), std::move(s));
}

ForwardCurve CurveDynamics::drift(const ForwardCurve& h) const
{
    std::vector<double> s(h.size()), f(h.size());
    coefficients(h.values(), s, f);
    return ForwardCurve(h.grid_ptr(), std::move(f));
}

ForwardCurve sigma_of(const ForwardCurve& h, const VolatilityModel& model)
{
    return CurveDynamics(model, h.grid_ptr()).sigma(h);
}

ForwardCurve hjm_drift(const ForwardCurve& h, const VolatilityModel& model)
{
    return CurveDynamics(model, h.grid_ptr()).drift(h);
}

// ---------------------------------------------------------------------------
// Stepping and pricing
// ---------------------------------------------------------------------------

double PathState::discount() const { return std::exp(log_discount); }

PathState euler_step(const PathState& state, double dt, double dB, const CurveDynamics& dynamics)
{
    require(dt > 0.0 && std::isfinite(dt), ErrorKind::argument, "euler_step requires dt > 0");
    const auto h = state.curve.values();
    const std::size_t n = h.size();
    std::vector<double> sigma(n), drift(n), increment(n);
    dynamics.coefficients(h, sigma, drift);
    for (std::size_t j = 0; j < n; ++j) {
        increment[j] = h[j] + dt * drift[j] + sigma[j] * dB;
    }
    PathState next{state.t + dt, shift(ForwardCurve(state.curve.grid_ptr(), std::move(increment)), dt),
                   state.log_discount};
    next.log_discount -= 0.5 * dt * (state.spot() + next.spot());
    return next;
}

PathState euler_step(const PathState& state, double dt, double dB, const VolatilityModel& model)
{
    return euler_step(state, dt, dB, CurveDynamics(model, state.curve.grid_ptr()));
}

double bond_price(const ForwardCurve& curve, double time_to_maturity)
{
    require(time_to_maturity >= -1e-12, ErrorKind::argument, "bond price requested after maturity");
    return std::exp(-curve.integral(std::max(0.0, time_to_maturity)));
}

double bond_price(const PathState& state, double maturity)
{
    require(state.t <= maturity + 1e-12, ErrorKind::argument, "bond price requested after maturity");
    return bond_price(state.curve, maturity - state.t);
}

void validate_strike(double strike)
{
    require(std::isfinite(strike) && strike > 0.0 && strike < 1.0, ErrorKind::contract,
            "strike must lie in (0, 1)");
}

double payoff_from_bond(double bond, double strike) { return std::max(strike - bond, 0.0); }

double payoff(const PathState& state, double strike, double maturity)
{
    validate_strike(strike);
    return payoff_from_bond(bond_price(state, maturity), strike);
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

std::size_t step_count(double t0, double maturity, double dt)
{
    require(dt > 0.0 && std::isfinite(dt), ErrorKind::argument, "time step must be positive");
    require(maturity > t0, ErrorKind::argument, "maturity must exceed the start time");
    const double horizon = maturity - t0;
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    require(rounded >= 1.0 && std::abs(ratio - rounded) <= 1e-8 * std::max(1.0, ratio), ErrorKind::argument,
            "dt must divide T - t0");
    return static_cast<std::size_t>(rounded);
}

IncrementSource::IncrementSource(std::uint64_t seed, std::size_t path, bool antithetic, double dt)
    : m_rng(make_rng(seed, antithetic ? path / 2 : path)),
      m_sign((antithetic && path % 2 == 1) ? -1.0 : 1.0),
      m_scale(std::sqrt(dt))
{
}

double IncrementSource::next() { return m_sign * m_scale * m_normal(m_rng); }

WindowSimulator::WindowSimulator(const ForwardCurve& h0, double t0, double maturity, double dt, VolatilityModel model)
    : m_model(model), m_dt(dt), m_steps(step_count(t0, maturity, dt))
{
    const std::size_t nodes = m_steps + 1;
    m_initial.resize(nodes);
    m_envelope.resize(nodes);
    m_sigma.resize(nodes);
    m_drift.resize(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
        const double x = dt * static_cast<double>(j);
        m_initial[j] = h0.at(x);
        m_envelope[j] = m_model.envelope(x);
    }
    // state-independent coefficients are fixed for the whole path
    double cumulative = 0.0;
    m_sigma[0] = m_envelope[0];
    m_drift[0] = 0.0;
    for (std::size_t j = 1; j < nodes; ++j) {
        m_sigma[j] = m_envelope[j];
        cumulative += 0.5 * dt * (m_sigma[j - 1] + m_sigma[j]);
        m_drift[j] = m_sigma[j] * cumulative;
    }
}

namespace {

double window_integral(const std::vector<double>& r, std::size_t last, double dx)
{
    if (last == 0) {
        return 0.0;
    }
    double sum = 0.5 * (r[0] + r[last]);
    for (std::size_t j = 1; j < last; ++j) {
        sum += r[j];
    }
    return sum * dx;
}

} // namespace

void WindowSimulator::simulate(IncrementSource& increments, std::span<double> bond, std::span<double> spot,
                               std::span<double> log_discount) const
{
    std::vector<double> draws(m_steps);
    for (double& d : draws) {
        d = increments.next();
    }
    simulate(draws, bond, spot, log_discount);
}

void WindowSimulator::simulate(std::span<const double> increments, std::span<double> bond, std::span<double> spot,
                               std::span<double> log_discount) const
{
    require(increments.size() >= m_steps, ErrorKind::argument, "not enough Brownian increments for the path");
    const std::size_t n = m_steps;
    std::vector<double> r = m_initial;
    std::vector<double> sigma_buf, drift_buf;
    const bool state_dependent = m_model.state_dependent();
    if (state_dependent) {
        sigma_buf.resize(n + 1);
        drift_buf.resize(n + 1);
    }

    double logd = 0.0;
    bond[0] = std::exp(-window_integral(r, n, m_dt));
    spot[0] = r[0];
    log_discount[0] = 0.0;

    for (std::size_t m = 0; m < n; ++m) {
        const std::size_t last = n - m; // valid nodes 0..last
        const double* sigma = m_sigma.data();
        const double* drift = m_drift.data();
        if (state_dependent) {
            double cumulative = 0.0;
            for (std::size_t j = 0; j <= last; ++j) {
                sigma_buf[j] = 0.5 * (1.0 + std::tanh(r[j])) * m_envelope[j];
                if (j > 0) {
                    cumulative += 0.5 * m_dt * (sigma_buf[j - 1] + sigma_buf[j]);
                }
                drift_buf[j] = sigma_buf[j] * cumulative;
            }
            sigma = sigma_buf.data();
            drift = drift_buf.data();
        }
        const double dB = increments[m];
        const double old_spot = r[0];
        for (std::size_t j = 0; j < last; ++j) {
            r[j] = r[j + 1] + m_dt * drift[j + 1] + sigma[j + 1] * dB;
        }
        logd -= 0.5 * m_dt * (old_spot + r[0]);
        bond[m + 1] = std::exp(-window_integral(r, last - 1, m_dt));
        spot[m + 1] = r[0];
        log_discount[m + 1] = logd;
    }
}

PathEnsemble simulate_paths(const ForwardCurve& h0, double t0, double maturity, double dt, std::size_t n_paths,
                            const VolatilityModel& model, std::uint64_t seed, const SimulationOptions& options)
{
    require(n_paths >= 1, ErrorKind::argument, "need at least one path");
    const WindowSimulator simulator(h0, t0, maturity, dt, model);

    PathEnsemble out;
    out.n_paths = n_paths;
    out.n_steps = simulator.n_steps();
    out.t0 = t0;
    out.dt = dt;
    const double bytes = 3.0 * 8.0 * static_cast<double>(n_paths) * static_cast<double>(out.stride());
    require(bytes <= static_cast<double>(options.max_bytes), ErrorKind::capacity,
            "path ensemble would need " + std::to_string(static_cast<long long>(bytes / (1 << 20)))
                + " MiB, above the configured limit");
    const std::size_t total = n_paths * out.stride();
    out.bond.resize(total);
    out.spot.resize(total);
    out.log_discount.resize(total);

    parallel_for(n_paths, options.threads, [&](std::size_t p) {
        IncrementSource increments(seed, p, options.antithetic, dt);
        const std::size_t offset = out.index(p, 0);
        const std::size_t len = out.stride();
        simulator.simulate(increments, std::span<double>(out.bond).subspan(offset, len),
                           std::span<double>(out.spot).subspan(offset, len),
                           std::span<double>(out.log_discount).subspan(offset, len));
    });
    return out;
}

void write_paths_csv_gz(const std::filesystem::path& path, const PathEnsemble& ensemble)
{
    gzFile file = gzopen(path.string().c_str(), "wb");
    require(file != nullptr, ErrorKind::io, "cannot open path dump: " + path.string());
    std::string buffer = "path_id,t,spot,bond,log_discount\n";
    char line[160];
    for (std::size_t p = 0; p < ensemble.n_paths; ++p) {
        for (std::size_t m = 0; m <= ensemble.n_steps; ++m) {
            const std::size_t k = ensemble.index(p, m);
            const int len = std::snprintf(line, sizeof line, "%zu,%.10g,%.12g,%.12g,%.12g\n", p, ensemble.time(m),
                                          ensemble.spot[k], ensemble.bond[k], ensemble.log_discount[k]);
            buffer.append(line, static_cast<std::size_t>(len));
        }
        if (buffer.size() > (1u << 20)) {
            gzwrite(file, buffer.data(), static_cast<unsigned>(buffer.size()));
            buffer.clear();
        }
    }
    if (!buffer.empty()) {
        gzwrite(file, buffer.data(), static_cast<unsigned>(buffer.size()));
    }
    require(gzclose(file) == Z_OK, ErrorKind::io, "failed to finish path dump: " + path.string());
}

} // namespace hjm
