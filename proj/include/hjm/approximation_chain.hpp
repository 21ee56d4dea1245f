#ifndef HJM_APPROXIMATION_CHAIN_HPP
#define HJM_APPROXIMATION_CHAIN_HPP

#include <hjm/curve_space.hpp>
#include <hjm/hjm_dynamics.hpp>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace hjm {

// Strong Euler step of the Yosida-regularised equation
//   dr = (A_alpha r + F(r)) dt + sigma(r) dB.
// dt = 0 returns the state unchanged.
PathState yosida_step(const PathState& state, double dt, double dB, double alpha, const CurveDynamics& dynamics);
PathState yosida_step(const PathState& state, double dt, double dB, double alpha, const VolatilityModel& model);

// Noise floor eps_n = scale / n.
double epsilon_schedule(std::size_t n, double scale);

// Galerkin reduction of the Yosida equation onto span{phi_1..phi_n} with an
// additive noise floor eps on each coordinate.
class GalerkinModel {
public:
    GalerkinModel(std::size_t n, double alpha, double epsilon, VolatilityModel model,
                  std::shared_ptr<const BasisSet> basis);

    std::size_t n() const { return m_n; }
    double alpha() const { return m_alpha; }
    double epsilon() const { return m_epsilon; }
    const VolatilityModel& volatility() const { return m_dynamics.model(); }
    const BasisSet& basis() const { return *m_basis; }
    const std::shared_ptr<const BasisSet>& basis_ptr() const { return m_basis; }

    ForwardCurve reconstruct(std::span<const double> z) const;
    // P_n (A_alpha h + F(h)) and P_n sigma(h) in coordinates.
    void coefficients(std::span<const double> z, std::span<double> drift, std::span<double> vol) const;
    // Spot rate h(0) = sum z_i phi_i(0).
    double spot(std::span<const double> z) const;

private:
    std::size_t m_n;
    double m_alpha;
    double m_epsilon;
    CurveDynamics m_dynamics;
    std::shared_ptr<const BasisSet> m_basis;
    std::vector<double> m_phi0;
    // Linear part <A_alpha phi_j, phi_i>, row-major n x n.
    std::vector<double> m_generator;
    // Cached projections when sigma does not depend on the state.
    std::vector<double> m_const_drift;
    std::vector<double> m_const_vol;
};

// Euler step in coordinates. dB holds the n extra increments W^1..W^n.
std::vector<double> galerkin_step(std::span<const double> z, double dt, double dB0, std::span<const double> dB,
                                  const GalerkinModel& model);

// Coefficients of the finite-dimensional generator, for the PDE builder:
//   dZ = b(Z) dt + s(Z) dW^0 + eps dW, discount rate rho(Z) = Z . phi(0).
struct EffectiveCoefficients {
    std::size_t n = 0;
    double epsilon = 0.0;
    std::function<std::vector<double>(std::span<const double>)> drift;
    std::function<std::vector<double>(std::span<const double>)> volatility;
    std::function<double(std::span<const double>)> rho;
    // Covariance a = s s^T + eps^2 I at z, row-major.
    std::vector<double> covariance(std::span<const double> z) const;
};

EffectiveCoefficients effective_coefficients(std::shared_ptr<const GalerkinModel> model);

} // namespace hjm

#endif
