#ifndef HJM_VI_PRICER_HPP
#define HJM_VI_PRICER_HPP

#include <hjm/approximation_chain.hpp>
#include <hjm/payoff_smoothing.hpp>
#include <hjm/problem.hpp>

#include <json.hpp>

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace hjm {

struct PdeConfig {
    std::size_t n_state = 101; // nodes per state axis
    std::size_t n_time = 200;
    // half-width per axis: width_sigmas sqrt(a_ii tau) + |b_i| tau + min_half_width
    double width_sigmas = 6.0;
    double min_half_width = 0.02;
    double width_scale = 1.0;
    double omega = 1.5;
    double tol = 1e-9;
    std::size_t max_iterations = 10000;
    bool rannacher = true;
    // obstacle enforced only at expiry
    bool european = false;

    void validate() const;
};

// Tensor grid on the box centred at the initial coordinates. For n = 1 the
// second axis has a single node.
struct PdeGrid {
    std::size_t n = 1;
    std::array<std::size_t, 2> count{1, 1};
    std::array<double, 2> lower{0.0, 0.0};
    std::array<double, 2> spacing{1.0, 1.0};
    std::size_t n_time = 0;
    double t0 = 0.0;
    double t_end = 0.0;

    std::size_t size() const { return count[0] * count[1]; }
    std::size_t index(std::size_t i, std::size_t j) const { return j * count[0] + i; }
    double coordinate(std::size_t axis, std::size_t i) const { return lower[axis] + spacing[axis] * static_cast<double>(i); }
    double upper(std::size_t axis) const { return coordinate(axis, count[axis] - 1); }
    double dt() const { return (t_end - t0) / static_cast<double>(n_time); }
    double time(std::size_t m) const { return t0 + dt() * static_cast<double>(m); }
    bool on_boundary(std::size_t i, std::size_t j) const;
    bool contains(std::span<const double> z) const;
};

// Stencil offsets of the discrete generator: centre, +-e1, +-e2, then diagonals.
inline constexpr std::array<std::array<int, 2>, 9> stencil_offsets{{
    {0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1},
}};

// Discretised L V = 1/2 tr(a D^2 V) + b . grad V - rho V on interior nodes.
struct DiscreteOperator {
    PdeGrid grid;
    // coefficient s of node p at coefficients[p * 9 + s]; zero rows on the boundary
    std::vector<double> coefficients;
    std::size_t upwinded_nodes = 0;

    double apply(std::span<const double> v, std::size_t i, std::size_t j) const;
};

PdeGrid make_pde_grid(const EffectiveCoefficients& coefficients, std::span<const double> z0, double t0, double t_end,
                      const PdeConfig& config);
DiscreteOperator build_operator(const EffectiveCoefficients& coefficients, const PdeGrid& grid);

struct StepReport {
    std::size_t iterations = 0;
    // max over nodes of (V - Psi) |A V - rhs|
    double complementarity = 0.0;
};

struct ValueSurface {
    PdeGrid grid;
    std::vector<double> z0;
    double strike = 0.0;
    double maturity = 0.0;
    double tol_gap = 0.0;
    // row m holds time slice t_m
    std::vector<double> values;
    std::vector<double> obstacle;
    std::vector<unsigned char> exercise;
    std::vector<StepReport> steps;
    // smallest first coordinate in the exercise region along the row through z0, NaN if none
    std::vector<double> boundary;
    std::shared_ptr<const GalerkinModel> model;
    // int_0^{T - t_m} phi_i at phi_integrals[m * n + i]
    std::vector<double> phi_integrals;
    MollifiedPayoff payoff{0.9, 1.0};

    std::span<const double> slice(std::size_t m) const { return {values.data() + m * grid.size(), grid.size()}; }
    std::span<const double> obstacle_slice(std::size_t m) const { return {obstacle.data() + m * grid.size(), grid.size()}; }
    // V(t0, z0)
    double price() const;
    // Interpolated V and V - Psi; throw an extrapolation error outside the box or time range.
    double value(double t, std::span<const double> z) const;
    double gap(double t, std::span<const double> z) const;
    double obstacle_at(double t, std::span<const double> z) const;
    std::size_t total_iterations() const;
    double max_complementarity() const;
};

// Psi_k(t, z) from the coordinates, with B(t, T) = exp(-sum z_i int_0^{T-t} phi_i).
double coordinate_bond(const GalerkinModel& model, double time_to_maturity, std::span<const double> z);

// Backward theta-scheme (Crank-Nicolson, Rannacher start) with projected SOR.
ValueSurface psor_solve(const DiscreteOperator& op, const PricingProblem& problem,
                        std::shared_ptr<const GalerkinModel> model, std::span<const double> z0, double k,
                        const PdeConfig& config);

// Full chain: Galerkin model, operator, grid and solve.
ValueSurface solve_pde(const PricingProblem& problem, const VolatilityModel& volatility,
                      std::shared_ptr<const BasisSet> basis, const ChainConfig& chain, const PdeConfig& config);

// |V - V'| where V' is re-solved on a box 1.25 times wider.
double boundary_layer_indicator(const PricingProblem& problem, const VolatilityModel& volatility,
                                std::shared_ptr<const BasisSet> basis, const ChainConfig& chain,
                                const PdeConfig& config);

double value_at(const ValueSurface& surface, double t, const ForwardCurve& h);

class ExerciseRule {
public:
    explicit ExerciseRule(const ValueSurface& surface) : m_surface(&surface) {}

    const ValueSurface& surface() const { return *m_surface; }
    // True when the projected state is in the exercise region, at expiry or
    // outside the box (where the bounded-domain problem stops).
    bool stop(double t, std::span<const double> z) const;
    bool outside(std::span<const double> z) const { return !m_surface->grid.contains(z); }
    const std::vector<double>& boundary() const { return m_surface->boundary; }

private:
    const ValueSurface* m_surface;
};

ExerciseRule exercise_rule(const ValueSurface& surface);

// Surface export: t, z1[, z2], V, Psi, exercised for every `time_stride`-th slice.
void write_surface_csv(const std::filesystem::path& path, const ValueSurface& surface, std::size_t time_stride = 0);
void write_boundary_csv(const std::filesystem::path& path, const ValueSurface& surface);
nlohmann::json surface_summary(const ValueSurface& surface);

} // namespace hjm

#endif
