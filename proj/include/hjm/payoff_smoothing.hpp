#ifndef HJM_PAYOFF_SMOOTHING_HPP
#define HJM_PAYOFF_SMOOTHING_HPP

#include <hjm/curve_space.hpp>
#include <hjm/hjm_dynamics.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace hjm {

// Standard bump rho(y) = c exp(-1/(1 - y^2)) on |y| < 1, normalised to unit mass.
double bump_normalizer();
double unit_mollifier(double y);

// g_k = rho_k * g for g(z) = min(max(z, 0), K), where rho_k(y) = k rho(k y).
// On the actual payoff domain z = K - B < K this is the put's positive part;
// the cap only keeps g_k bounded by K.
class MollifiedPayoff {
public:
    MollifiedPayoff(double strike, double k);

    double strike() const { return m_strike; }
    double k() const { return m_k; }

    double g(double z) const;
    double dg(double z) const;

    // Psi_k(t, h) = g_k(K - exp(-int_0^{T-t} h)).
    double operator()(const PathState& state, double maturity) const;
    double from_bond(double bond) const { return g(m_strike - bond); }
    // d/dt Psi_k(t, h) at fixed h: g_k'(z) * (-B h(T - t)).
    double time_derivative(const PathState& state, double maturity) const;

private:
    double m_strike;
    double m_k;
};

double mollified_payoff(const PathState& state, double strike, double maturity, double k);

struct LpEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// (E_mu_n |f(h)|^p)^{1/p} by sampling the truncated Gaussian measure.
// The standard error is propagated from the sample mean by the delta method.
LpEstimate lp_mu_norm(const std::function<double(const ForwardCurve&)>& f, double p, std::size_t n,
                      const BasisSet& basis, std::size_t n_samples, std::uint64_t seed);

} // namespace hjm

#endif
