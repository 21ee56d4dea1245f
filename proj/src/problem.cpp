#include <hjm/error.hpp>
#include <hjm/hjm_dynamics.hpp>
#include <hjm/problem.hpp>

#include <cmath>

namespace hjm {

void PricingProblem::validate() const
{
    validate_strike(strike);
    require(std::isfinite(t0) && t0 >= 0.0, ErrorKind::contract, "valuation time must be >= 0");
    require(std::isfinite(maturity) && maturity > t0, ErrorKind::contract, "maturity must exceed the valuation time");
    if (expiry) {
        require(std::isfinite(*expiry) && *expiry > t0 && *expiry <= maturity, ErrorKind::contract,
                "expiry must lie in (t0, maturity]");
    }
    require(initial.size() > 0, ErrorKind::contract, "missing initial curve");
    initial.grid().config().validate_horizon(maturity);
}

double ChainConfig::epsilon() const { return epsilon_scale / static_cast<double>(n); }

void ChainConfig::validate() const
{
    require(std::isfinite(k) && k >= 1.0, ErrorKind::configuration, "chain.k must be >= 1");
    require(std::isfinite(alpha) && alpha > 0.0, ErrorKind::configuration, "chain.alpha must be positive");
    require(n >= 1, ErrorKind::configuration, "chain.n must be >= 1");
    require(std::isfinite(epsilon_scale) && epsilon_scale >= 0.0, ErrorKind::configuration,
            "chain.epsilon_scale must be nonnegative");
}

} // namespace hjm
