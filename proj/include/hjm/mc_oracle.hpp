#ifndef HJM_MC_ORACLE_HPP
#define HJM_MC_ORACLE_HPP

#include <hjm/hjm_dynamics.hpp>
#include <hjm/problem.hpp>
#include <hjm/vi_pricer.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace hjm {

struct LsmcConfig {
    std::size_t n_paths = 100000;
    // simulation and exercise step; 0 means (T - t0) / 200
    double dt = 0.0;
    // polynomial degree in the bond price
    std::size_t degree = 3;
    // add (T - t) and (T - t) B features
    bool time_features = true;
    std::uint64_t seed = 20240601;
    bool antithetic = true;
    std::size_t threads = 0;

    double step(const PricingProblem& problem) const;
    void validate() const;
};

struct McEstimate {
    double price = 0.0;
    double std_error = 0.0;
};

struct LsmcResult {
    // headline number: fresh-seed re-pricing with the fitted exercise policy
    McEstimate out_of_sample;
    McEstimate in_sample;
    bool all_out_of_money = false;
    bool exercise_at_start = false;
    // exercise dates where the bond polynomial had to be shortened
    std::size_t degree_reductions = 0;
    std::size_t n_steps = 0;
};

LsmcResult lsmc_price(const PricingProblem& problem, const VolatilityModel& model, const LsmcConfig& config);

// Discounted payoff at expiry. With the default expiry = maturity this is 0.
McEstimate european_price(const PricingProblem& problem, const VolatilityModel& model, const LsmcConfig& config);

// Full-model paths with the Galerkin coordinates of the curve at every step.
// Requires a space grid whose spacing divides dt so that shifts are exact.
class CoordinatePathSimulator {
public:
    CoordinatePathSimulator(const ForwardCurve& h0, double t0, double maturity, double dt, VolatilityModel model,
                            std::shared_ptr<const BasisSet> basis, std::size_t n);

    std::size_t n_steps() const { return m_steps; }
    std::size_t n() const { return m_n; }
    double dt() const { return m_dt; }

    // z holds (n_steps + 1) * n coordinates; bond and log_discount n_steps + 1 entries.
    void simulate(std::span<const double> increments, std::span<double> z, std::span<double> bond,
                  std::span<double> log_discount) const;

private:
    void simulate_linear(std::span<const double> increments, std::span<double> z, std::span<double> bond,
                         std::span<double> log_discount) const;
    void simulate_full(std::span<const double> increments, std::span<double> z, std::span<double> bond,
                       std::span<double> log_discount) const;

    ForwardCurve m_h0;
    double m_t0;
    double m_maturity;
    double m_dt;
    std::size_t m_steps;
    VolatilityModel m_model;
    std::shared_ptr<const BasisSet> m_basis;
    std::size_t m_n;
    // state-independent volatility: every output is affine in the increments,
    // value(m) = base(m) + sum_{j<m} kernel(m, m - j) dB_j
    std::size_t m_outputs = 0; // n coordinates, spot, bond exponent
    std::vector<double> m_base;
    std::vector<double> m_kernel;
};

struct CheckpointReport {
    double t = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    double deviation = 0.0; // |mean - V(t0, z0)| in standard errors (0 when both vanish)
    double second_moment = 0.0;
};

struct MartingaleReport {
    double value = 0.0; // V(t0, z0)
    std::vector<CheckpointReport> checkpoints;
    double max_deviation = 0.0;
    double max_abs_deviation = 0.0;
    double sup_second_moment = 0.0;
    // E[D(tau*) Psi_k(tau*)] with tau* from the exercise rule
    McEstimate stopped_payoff;
    double stopped_deviation = 0.0;
    std::size_t exits = 0;
    std::size_t n_paths = 0;
};

// Evaluates Y = D(tau) V(tau, z_tau) at tau = checkpoint ^ tau* on full-model
// paths. Paths leaving the solved box stop there with the obstacle value.
MartingaleReport martingale_diagnostic(const ValueSurface& surface, const PricingProblem& problem,
                                       const VolatilityModel& model, const LsmcConfig& config,
                                       std::size_t n_checkpoints = 5);

} // namespace hjm

#endif
