#ifndef HJM_CURVE_SPACE_HPP
#define HJM_CURVE_SPACE_HPP

#include <hjm/random.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace hjm {

// Parameters of the weighted curve space H_w and of the Gaussian measure on it.
// The weight is w(x) = (1 + x)^w_exponent.
struct SpaceConfig {
    double w_exponent = 4.0;
    double x_max = 11.0;
    std::size_t n_x = 512;
    std::size_t basis_size = 8;
    // Covariance eigenvalues lambda_1, lambda_2, ...; empty means 2^-i.
    std::vector<double> q_eigenvalues;

    void validate() const;
    // Shifted curves must stay on the grid over the option life.
    void validate_horizon(double maturity) const;
    double eigenvalue(std::size_t index) const; // zero-based
};

std::vector<double> geometric_eigenvalues(std::size_t count);

// Uniform maturity grid on [0, x_max] together with the sampled weight.
class Grid {
public:
    explicit Grid(SpaceConfig config);

    static std::shared_ptr<const Grid> make(SpaceConfig config);

    const SpaceConfig& config() const { return m_config; }
    std::size_t size() const { return m_nodes.size(); }
    double spacing() const { return m_dx; }
    double x_max() const { return m_config.x_max; }
    double node(std::size_t j) const { return m_nodes[j]; }
    std::span<const double> nodes() const { return m_nodes; }
    std::span<const double> weights() const { return m_weights; }
    double weight(double x) const;

    bool same_as(const Grid& other) const;

private:
    SpaceConfig m_config;
    double m_dx;
    std::vector<double> m_nodes;
    std::vector<double> m_weights;
};

using GridPtr = std::shared_ptr<const Grid>;

// A forward curve sampled on a grid. Between nodes the curve is linear, beyond
// x_max it is continued by its last value.
class ForwardCurve {
public:
    ForwardCurve(GridPtr grid, std::vector<double> values);

    static ForwardCurve constant(GridPtr grid, double level);
    static ForwardCurve zero(GridPtr grid) { return constant(std::move(grid), 0.0); }
    static ForwardCurve from_function(GridPtr grid, const std::function<double(double)>& f);

    const Grid& grid() const { return *m_grid; }
    const GridPtr& grid_ptr() const { return m_grid; }
    std::size_t size() const { return m_values.size(); }
    std::span<const double> values() const { return m_values; }
    double operator[](std::size_t j) const { return m_values[j]; }

    // Linear interpolation, constant extension beyond x_max. Requires x >= 0.
    double at(double x) const;
    // Exact integral of the interpolant over [0, upper].
    double integral(double upper) const;

    ForwardCurve& operator+=(const ForwardCurve& other);
    ForwardCurve& operator-=(const ForwardCurve& other);
    ForwardCurve& operator*=(double factor);

    friend ForwardCurve operator+(ForwardCurve a, const ForwardCurve& b) { return a += b; }
    friend ForwardCurve operator-(ForwardCurve a, const ForwardCurve& b) { return a -= b; }
    friend ForwardCurve operator*(ForwardCurve a, double s) { return a *= s; }
    friend ForwardCurve operator*(double s, ForwardCurve a) { return a *= s; }

private:
    void check_compatible(const ForwardCurve& other) const;

    GridPtr m_grid;
    std::vector<double> m_values;
};

// Central differences in the interior, second-order one-sided at both ends.
ForwardCurve derivative(const ForwardCurve& h);

// <f, g>_w = f(0) g(0) + int f'(x) g'(x) w(x) dx with trapezoid quadrature.
double inner_w(const ForwardCurve& f, const ForwardCurve& g);
double norm_w(const ForwardCurve& h);

// Constant C with sup|h| <= C ||h||_w, namely sqrt(1 + int_0^inf 1/w).
double sup_bound_constant(const SpaceConfig& config);

// Left shift S(dt)h(x) = h(x + dt).
ForwardCurve shift(const ForwardCurve& h, double dt);

// (alpha I - A)^{-1} h with A = d/dx, i.e. g(x) = int_x^inf exp(-alpha (y - x)) h(y) dy.
ForwardCurve resolvent(const ForwardCurve& h, double alpha);
// A_alpha h = alpha A (alpha I - A)^{-1} h = alpha^2 (alpha I - A)^{-1} h - alpha h.
ForwardCurve yosida_apply(const ForwardCurve& h, double alpha);

// Orthonormal basis of H_w obtained from {1, e^-x, x e^-x, x^2 e^-x, ...}.
class BasisSet {
public:
    BasisSet(GridPtr grid, std::vector<ForwardCurve> functions, double gram_residual);

    std::size_t size() const { return m_functions.size(); }
    const ForwardCurve& operator[](std::size_t i) const { return m_functions[i]; }
    const std::vector<ForwardCurve>& functions() const { return m_functions; }
    double gram_residual() const { return m_gram_residual; }
    const GridPtr& grid_ptr() const { return m_grid; }

    // Coordinates <h, phi_i>_w for i < n.
    std::vector<double> coordinates(const ForwardCurve& h, std::size_t n) const;
    double coordinate(const ForwardCurve& h, std::size_t i) const;
    ForwardCurve reconstruct(std::span<const double> coefficients) const;

private:
    GridPtr m_grid;
    std::vector<ForwardCurve> m_functions;
    // Row i holds the linear functional h -> <h, phi_i>_w on the grid nodes.
    std::vector<std::vector<double>> m_functionals;
    double m_gram_residual;
};

BasisSet build_basis(const GridPtr& grid);

// P_n h = sum_{i<=n} <h, phi_i>_w phi_i.
ForwardCurve project(const ForwardCurve& h, std::size_t n, const BasisSet& basis);

// Draw sum_{i<=n} xi_i sqrt(lambda_i) phi_i, xi_i iid N(0,1).
ForwardCurve sample_gaussian(std::size_t n, const BasisSet& basis, std::uint64_t seed);
std::vector<double> sample_gaussian_coordinates(std::size_t n, const SpaceConfig& config, Rng& rng);

// sum_i lambda_i ||phi_i'||_w^2, a finite-basis stand-in for Tr[A Q A*].
double trace_condition(const BasisSet& basis);

// CSV with header "x,rate". Reading resamples onto the grid.
ForwardCurve read_curve_csv(const std::filesystem::path& path, const GridPtr& grid);
void write_curve_csv(const std::filesystem::path& path, const ForwardCurve& h);

} // namespace hjm

#endif
