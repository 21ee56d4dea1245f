#include <hjm/approximation_chain.hpp>
#include <hjm/error.hpp>

#include <cmath>

namespace hjm {

PathState yosida_step(const PathState& state, double dt, double dB, double alpha, const CurveDynamics& dynamics)
{
    require(std::isfinite(dt) && dt >= 0.0, ErrorKind::argument, "yosida_step requires dt >= 0");
    require(std::isfinite(alpha) && alpha > 0.0, ErrorKind::argument, "alpha must be positive");
    if (dt == 0.0) {
        return state;
    }
    const auto h = state.curve.values();
    const std::size_t size = h.size();
    std::vector<double> sigma(size), drift(size);
    dynamics.coefficients(h, sigma, drift);
    const auto generator = yosida_apply(state.curve, alpha);
    std::vector<double> next(size);
    for (std::size_t j = 0; j < size; ++j) {
        next[j] = h[j] + dt * (generator[j] + drift[j]) + sigma[j] * dB;
    }
    PathState out{state.t + dt, ForwardCurve(state.curve.grid_ptr(), std::move(next)), state.log_discount};
    out.log_discount -= 0.5 * dt * (state.spot() + out.spot());
    return out;
}

PathState yosida_step(const PathState& state, double dt, double dB, double alpha, const VolatilityModel& model)
{
    return yosida_step(state, dt, dB, alpha, CurveDynamics(model, state.curve.grid_ptr()));
}

double epsilon_schedule(std::size_t n, double scale)
{
    require(n >= 1, ErrorKind::argument, "dimension must be >= 1");
    return scale / static_cast<double>(n);
}

GalerkinModel::GalerkinModel(std::size_t n, double alpha, double epsilon, VolatilityModel model,
                             std::shared_ptr<const BasisSet> basis)
    : m_n(n), m_alpha(alpha), m_epsilon(epsilon), m_dynamics(model, basis->grid_ptr()), m_basis(std::move(basis))
{
    require(n >= 1 && n <= m_basis->size(), ErrorKind::argument, "Galerkin dimension must be in [1, basis size]");
    require(std::isfinite(alpha) && alpha > 0.0, ErrorKind::argument, "alpha must be positive");
    require(std::isfinite(epsilon) && epsilon >= 0.0, ErrorKind::argument, "epsilon must be nonnegative");
    m_phi0.resize(n);
    m_generator.resize(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        m_phi0[j] = (*m_basis)[j][0];
        const auto column = m_basis->coordinates(yosida_apply((*m_basis)[j], alpha), n);
        for (std::size_t i = 0; i < n; ++i) {
            m_generator[i * n + j] = column[i];
        }
    }
    if (!model.state_dependent()) {
        const auto zero = ForwardCurve::zero(m_basis->grid_ptr());
        m_const_drift = m_basis->coordinates(m_dynamics.drift(zero), n);
        m_const_vol = m_basis->coordinates(m_dynamics.sigma(zero), n);
    }
}

ForwardCurve GalerkinModel::reconstruct(std::span<const double> z) const
{
    require(z.size() == m_n, ErrorKind::argument, "coordinate vector has the wrong dimension");
    return m_basis->reconstruct(z);
}

double GalerkinModel::spot(std::span<const double> z) const
{
    require(z.size() == m_n, ErrorKind::argument, "coordinate vector has the wrong dimension");
    double r = 0.0;
    for (std::size_t i = 0; i < m_n; ++i) {
        r += z[i] * m_phi0[i];
    }
    return r;
}

void GalerkinModel::coefficients(std::span<const double> z, std::span<double> drift, std::span<double> vol) const
{
    require(z.size() == m_n && drift.size() == m_n && vol.size() == m_n, ErrorKind::argument,
            "coordinate vector has the wrong dimension");
    if (m_const_vol.empty()) {
        const auto h = reconstruct(z);
        const auto f = m_basis->coordinates(m_dynamics.drift(h), m_n);
        const auto s = m_basis->coordinates(m_dynamics.sigma(h), m_n);
        std::copy(f.begin(), f.end(), drift.begin());
        std::copy(s.begin(), s.end(), vol.begin());
    } else {
        std::copy(m_const_drift.begin(), m_const_drift.end(), drift.begin());
        std::copy(m_const_vol.begin(), m_const_vol.end(), vol.begin());
    }
    for (std::size_t i = 0; i < m_n; ++i) {
        for (std::size_t j = 0; j < m_n; ++j) {
            drift[i] += m_generator[i * m_n + j] * z[j];
        }
    }
}

std::vector<double> galerkin_step(std::span<const double> z, double dt, double dB0, std::span<const double> dB,
                                  const GalerkinModel& model)
{
    const std::size_t n = model.n();
    require(z.size() == n, ErrorKind::argument, "coordinate vector has the wrong dimension");
    require(dB.size() == n, ErrorKind::argument, "need one noise increment per coordinate");
    require(std::isfinite(dt) && dt >= 0.0, ErrorKind::argument, "galerkin_step requires dt >= 0");
    std::vector<double> drift(n), vol(n), out(z.begin(), z.end());
    model.coefficients(z, drift, vol);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] += dt * drift[i] + vol[i] * dB0 + model.epsilon() * dB[i];
    }
    return out;
}

std::vector<double> EffectiveCoefficients::covariance(std::span<const double> z) const
{
    const auto s = volatility(z);
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a[i * n + j] = s[i] * s[j] + (i == j ? epsilon * epsilon : 0.0);
        }
    }
    return a;
}

EffectiveCoefficients effective_coefficients(std::shared_ptr<const GalerkinModel> model)
{
    require(model != nullptr, ErrorKind::argument, "missing Galerkin model");
    if (model->n() > 2) {
        fail(ErrorKind::unsupported_dimension, "the obstacle solver supports n <= 2, got n = " + std::to_string(model->n()));
    }
    EffectiveCoefficients out;
    out.n = model->n();
    out.epsilon = model->epsilon();
    out.drift = [model](std::span<const double> z) {
        std::vector<double> b(model->n()), s(model->n());
        model->coefficients(z, b, s);
        return b;
    };
    out.volatility = [model](std::span<const double> z) {
        std::vector<double> b(model->n()), s(model->n());
        model->coefficients(z, b, s);
        return s;
    };
    out.rho = [model](std::span<const double> z) { return model->spot(z); };
    return out;
}

} // namespace hjm
