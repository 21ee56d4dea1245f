#ifndef HJM_HJM_DYNAMICS_HPP
#define HJM_HJM_DYNAMICS_HPP

#include <hjm/curve_space.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hjm {

// Volatility map sigma: H_w -> H_w^0.
//   deterministic_exp: sigma(h)(x) = sigma0 exp(-kappa x)
//   level_dependent:   sigma(h)(x) = sigma0 (1 + tanh(h(x))) / 2 * exp(-kappa x)
struct VolatilityModel {
    enum class Kind { deterministic_exp, level_dependent };

    Kind kind = Kind::deterministic_exp;
    double sigma0 = 0.01;
    double kappa = 1.0;

    static VolatilityModel zero() { return {Kind::deterministic_exp, 0.0, 1.0}; }

    bool state_dependent() const { return kind == Kind::level_dependent && sigma0 != 0.0; }
    double envelope(double x) const;
    // Bound constant: norm_w of the envelope sigma0 exp(-kappa x).
    double c_sigma(const Grid& grid) const;
    // Pointwise Lipschitz constant: |sigma(f)(x) - sigma(g)(x)| <= l_sigma |f(x) - g(x)|.
    double l_sigma() const;
    // Checks nonnegativity and decay to zero at the end of the grid.
    void validate(const Grid& grid) const;
};

const char* to_string(VolatilityModel::Kind kind);
VolatilityModel::Kind parse_volatility_kind(const std::string& name);

// Volatility and drift evaluation bound to one grid; caches the envelope.
class CurveDynamics {
public:
    CurveDynamics(VolatilityModel model, GridPtr grid);

    const VolatilityModel& model() const { return m_model; }
    const GridPtr& grid_ptr() const { return m_grid; }

    ForwardCurve sigma(const ForwardCurve& h) const;
    // F_sigma(h)(x) = sigma(h)(x) int_0^x sigma(h)(y) dy, cumulative trapezoid.
    ForwardCurve drift(const ForwardCurve& h) const;
    // Fills sigma and drift node values for curve values `h`.
    void coefficients(std::span<const double> h, std::span<double> sigma, std::span<double> drift) const;

private:
    VolatilityModel m_model;
    GridPtr m_grid;
    std::vector<double> m_envelope;
};

ForwardCurve sigma_of(const ForwardCurve& h, const VolatilityModel& model);
ForwardCurve hjm_drift(const ForwardCurve& h, const VolatilityModel& model);

struct PathState {
    double t = 0.0;
    ForwardCurve curve;
    // -int_0^t r_s(0) ds, trapezoid on the step grid
    double log_discount = 0.0;

    double spot() const { return curve[0]; }
    double discount() const;
};

// One step of the mild Euler scheme:
//   r(x) <- r(x + dt) + dt F(r)(x + dt) + sigma(r)(x + dt) dB
PathState euler_step(const PathState& state, double dt, double dB, const VolatilityModel& model);
PathState euler_step(const PathState& state, double dt, double dB, const CurveDynamics& dynamics);

// B(t, T) = exp(-int_0^{T-t} r_t(x) dx).
double bond_price(const PathState& state, double maturity);
double bond_price(const ForwardCurve& curve, double time_to_maturity);

// Put payoff [K - B(t, T)]^+ with K in (0, 1).
double payoff(const PathState& state, double strike, double maturity);
double payoff_from_bond(double bond, double strike);
void validate_strike(double strike);

struct SimulationOptions {
    bool antithetic = true;
    std::size_t threads = 0;
    std::size_t max_bytes = std::size_t{3} << 30;
};

// Per path and time node: bond price B(t, T), spot r_t(0), and -int spot.
struct PathEnsemble {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> bond;
    std::vector<double> spot;
    std::vector<double> log_discount;

    std::size_t stride() const { return n_steps + 1; }
    double time(std::size_t step) const { return t0 + dt * static_cast<double>(step); }
    std::size_t index(std::size_t path, std::size_t step) const { return path * stride() + step; }
};

// Number of steps with n * dt = T - t0; throws when dt does not divide the horizon.
std::size_t step_count(double t0, double maturity, double dt);

// Brownian increments for one path. Antithetic pairs share a stream and the
// odd member uses the negated draws.
class IncrementSource {
public:
    IncrementSource(std::uint64_t seed, std::size_t path, bool antithetic, double dt);
    double next();

private:
    Rng m_rng;
    std::normal_distribution<double> m_normal;
    double m_sign;
    double m_scale;
};

// Simulates the mild Euler scheme on the maturity window [0, T - t0] sampled
// with spacing dt, which makes every shift exact. Only the window enters bond
// prices and spot rates, so truncating the curve there changes no output.
PathEnsemble simulate_paths(const ForwardCurve& h0, double t0, double maturity, double dt, std::size_t n_paths,
                            const VolatilityModel& model, std::uint64_t seed, const SimulationOptions& options = {});

// Streams one path through the same window scheme; visit(step, bond, spot, log_discount).
class WindowSimulator {
public:
    WindowSimulator(const ForwardCurve& h0, double t0, double maturity, double dt, VolatilityModel model);

    std::size_t n_steps() const { return m_steps; }
    double dt() const { return m_dt; }

    template <class Visit>
    void run(IncrementSource& increments, Visit&& visit) const;

    // Fills per-step outputs (n_steps + 1 entries each) from the given increments.
    void simulate(std::span<const double> increments, std::span<double> bond, std::span<double> spot,
                  std::span<double> log_discount) const;
    void simulate(IncrementSource& increments, std::span<double> bond, std::span<double> spot,
                  std::span<double> log_discount) const;

private:
    VolatilityModel m_model;
    double m_dt;
    std::size_t m_steps;
    std::vector<double> m_initial;
    std::vector<double> m_envelope;
    std::vector<double> m_sigma;
    std::vector<double> m_drift;
};

template <class Visit>
void WindowSimulator::run(IncrementSource& increments, Visit&& visit) const
{
    std::vector<double> bond(m_steps + 1), spot(m_steps + 1), log_discount(m_steps + 1);
    simulate(increments, bond, spot, log_discount);
    for (std::size_t m = 0; m <= m_steps; ++m) {
        visit(m, bond[m], spot[m], log_discount[m]);
    }
}

// gzip-compressed CSV: path_id,t,spot,bond,log_discount
void write_paths_csv_gz(const std::filesystem::path& path, const PathEnsemble& ensemble);

} // namespace hjm

#endif
