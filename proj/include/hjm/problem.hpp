#ifndef HJM_PROBLEM_HPP
#define HJM_PROBLEM_HPP

#include <hjm/curve_space.hpp>

#include <cstddef>
#include <optional>

namespace hjm {

// American put on the zero-coupon bond maturing at `maturity`, exercisable on
// [t0, expiry]. By default the option expires with the bond.
struct PricingProblem {
    double strike = 0.9;
    double maturity = 1.0;
    double t0 = 0.0;
    ForwardCurve initial;
    std::optional<double> expiry;

    double exercise_end() const { return expiry.value_or(maturity); }
    // Checks the contract and that the curve grid covers the bond horizon.
    void validate() const;
};

// Smoothing, Yosida and Galerkin parameters of the approximation chain.
struct ChainConfig {
    double k = 256.0;
    double alpha = 250.0;
    std::size_t n = 2;
    // eps_n = epsilon_scale / n
    double epsilon_scale = 1e-3;

    double epsilon() const;
    void validate() const;
};

} // namespace hjm

#endif
