#include <doctest.h>

#include <hjm/approximation_chain.hpp>
#include <hjm/error.hpp>

#include <cmath>

using namespace hjm;

namespace {

GridPtr grid_with(std::size_t n_x)
{
    SpaceConfig config;
    config.n_x = n_x;
    return Grid::make(config);
}

std::shared_ptr<const BasisSet> basis_on(const GridPtr& grid)
{
    return std::make_shared<const BasisSet>(build_basis(grid));
}

const VolatilityModel exp_vol{VolatilityModel::Kind::deterministic_exp, 0.01, 1.0};
const VolatilityModel level_vol{VolatilityModel::Kind::level_dependent, 0.02, 1.0};

ForwardCurve smooth_curve(const GridPtr& grid)
{
    return ForwardCurve::from_function(grid, [](double x) { return 0.03 + 0.02 * std::exp(-1.5 * x); });
}

} // namespace

TEST_CASE("yosida_step trivial cases")
{
    const auto grid = grid_with(512);
    const PathState flat{0.0, ForwardCurve::constant(grid, 0.04), 0.0};
    const auto next = yosida_step(flat, 0.01, 0.3, 50.0, VolatilityModel::zero());
    for (double v : next.curve.values()) {
        CHECK(v == doctest::Approx(0.04).epsilon(1e-12));
    }
    CHECK(next.log_discount == doctest::Approx(-0.04 * 0.01).epsilon(1e-12));

    const PathState state{0.3, smooth_curve(grid), -0.1};
    const auto same = yosida_step(state, 0.0, 0.5, 10.0, level_vol);
    CHECK(same.t == state.t);
    CHECK(same.log_discount == state.log_discount);
    CHECK(same.curve.values()[3] == state.curve.values()[3]);
    CHECK_THROWS_AS(yosida_step(state, 0.01, 0.0, 0.0, level_vol), Error);
    CHECK_THROWS_AS(yosida_step(state, -0.01, 0.0, 1.0, level_vol), Error);
}

TEST_CASE("Yosida paths approach the mild solution as alpha grows")
{
    const double dt = 0.002;
    const std::size_t steps = 500;
    const auto grid = grid_with(5501); // dx = dt, so the mild step shifts exactly
    const auto h0 = smooth_curve(grid);
    const CurveDynamics dynamics(level_vol, grid);
    const std::vector<double> alphas{10.0, 50.0, 250.0};
    std::vector<double> distance(alphas.size(), 0.0);
    Rng rng = make_rng(42);
    std::normal_distribution<double> normal;
    const int paths = 8;
    for (int p = 0; p < paths; ++p) {
        std::vector<double> increments(steps);
        for (double& d : increments) {
            d = std::sqrt(dt) * normal(rng);
        }
        std::vector<PathState> mild;
        mild.reserve(steps + 1);
        mild.push_back(PathState{0.0, h0, 0.0});
        for (std::size_t m = 0; m < steps; ++m) {
            mild.push_back(euler_step(mild.back(), dt, increments[m], dynamics));
        }
        for (std::size_t a = 0; a < alphas.size(); ++a) {
            PathState state{0.0, h0, 0.0};
            double sup = 0.0;
            for (std::size_t m = 0; m < steps; ++m) {
                state = yosida_step(state, dt, increments[m], alphas[a], dynamics);
                sup = std::max(sup, std::pow(norm_w(state.curve - mild[m + 1].curve), 2));
            }
            distance[a] += sup / paths;
        }
    }
    for (std::size_t a = 0; a + 1 < alphas.size(); ++a) {
        MESSAGE("alpha " << alphas[a] << ": " << distance[a]);
        CHECK(distance[a + 1] < distance[a]);
    }
}

TEST_CASE("galerkin_step")
{
    const auto grid = grid_with(512);
    const auto basis = basis_on(grid);
    SUBCASE("constants are invariant")
    {
        const GalerkinModel model(1, 50.0, 0.0, VolatilityModel::zero(), basis);
        const std::vector<double> z{0.05};
        const std::vector<double> dB{0.7};
        const auto next = galerkin_step(z, 0.01, 0.4, dB, model);
        CHECK(next[0] == doctest::Approx(0.05).epsilon(1e-12));
    }
    SUBCASE("additive noise variance")
    {
        const double eps = epsilon_schedule(2, 1.0);
        CHECK(eps == 0.5);
        const GalerkinModel model(2, 50.0, eps, VolatilityModel::zero(), basis);
        const double dt = 0.01;
        Rng rng = make_rng(6);
        std::normal_distribution<double> normal;
        const std::vector<double> zero{0.0, 0.0};
        double sum_sq[2] = {0.0, 0.0};
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) {
            const std::vector<double> dB{std::sqrt(dt) * normal(rng), std::sqrt(dt) * normal(rng)};
            const auto next = galerkin_step(zero, dt, std::sqrt(dt) * normal(rng), dB, model);
            sum_sq[0] += next[0] * next[0];
            sum_sq[1] += next[1] * next[1];
        }
        for (double s : sum_sq) {
            CHECK(s / draws == doctest::Approx(eps * eps * dt).epsilon(0.05));
        }
    }
    SUBCASE("dimension mismatch")
    {
        const GalerkinModel model(2, 50.0, 0.0, exp_vol, basis);
        const std::vector<double> z{0.0};
        const std::vector<double> dB{0.0, 0.0};
        try {
            galerkin_step(z, 0.01, 0.0, dB, model);
            FAIL("expected argument error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::argument);
        }
        const std::vector<double> z2{0.0, 0.0};
        const std::vector<double> dB1{0.0};
        CHECK_THROWS_AS(galerkin_step(z2, 0.01, 0.0, dB1, model), Error);
    }
}

TEST_CASE("Galerkin reconstruction approaches the Yosida path as n grows")
{
    const double dt = 0.005;
    const std::size_t steps = 200;
    const double alpha = 50.0;
    const auto grid = grid_with(512);
    const auto basis = basis_on(grid);
    const auto h0 = smooth_curve(grid);
    const CurveDynamics dynamics(level_vol, grid);
    const std::vector<std::size_t> dims{1, 2, 4, 8};
    std::vector<double> distance(dims.size(), 0.0);
    Rng rng = make_rng(9);
    std::normal_distribution<double> normal;
    const int paths = 10;
    for (int p = 0; p < paths; ++p) {
        std::vector<double> increments(steps);
        for (double& d : increments) {
            d = std::sqrt(dt) * normal(rng);
        }
        std::vector<ForwardCurve> reference{h0};
        PathState state{0.0, h0, 0.0};
        for (std::size_t m = 0; m < steps; ++m) {
            state = yosida_step(state, dt, increments[m], alpha, dynamics);
            reference.push_back(state.curve);
        }
        for (std::size_t d = 0; d < dims.size(); ++d) {
            const std::size_t n = dims[d];
            const GalerkinModel model(n, alpha, epsilon_schedule(n, 1e-3), level_vol, basis);
            auto z = basis->coordinates(h0, n);
            std::vector<double> extra(n);
            double sup = std::pow(norm_w(model.reconstruct(z) - h0), 2);
            for (std::size_t m = 0; m < steps; ++m) {
                for (double& e : extra) {
                    e = std::sqrt(dt) * normal(rng);
                }
                z = galerkin_step(z, dt, increments[m], extra, model);
                sup = std::max(sup, std::pow(norm_w(model.reconstruct(z) - reference[m + 1]), 2));
            }
            distance[d] += sup / paths;
        }
    }
    for (std::size_t d = 0; d + 1 < dims.size(); ++d) {
        MESSAGE("n = " << dims[d] << ": " << distance[d]);
        CHECK(distance[d + 1] < distance[d]);
    }
}

TEST_CASE("discount bound is uniform in alpha and n")
{
    const double dt = 0.005;
    const std::size_t steps = 200;
    const auto grid = grid_with(512);
    const auto basis = basis_on(grid);
    // zero initial rates so that the discount factor can exceed one
    const auto h0 = ForwardCurve::zero(grid);
    const VolatilityModel vol{VolatilityModel::Kind::deterministic_exp, 0.1, 1.0};
    std::vector<double> estimates;
    for (double alpha : {10.0, 50.0, 250.0}) {
        for (std::size_t n : {1u, 2u, 4u}) {
            if (alpha * dt > 0.5 && n > 2) {
                continue; // explicit Euler on P_n A_alpha P_n needs alpha dt small
            }
            const GalerkinModel model(n, alpha, epsilon_schedule(n, 1e-3), vol, basis);
            Rng rng = make_rng(100 + n);
            std::normal_distribution<double> normal;
            double mean = 0.0;
            const int paths = 4000;
            for (int p = 0; p < paths; ++p) {
                auto z = basis->coordinates(h0, n);
                std::vector<double> extra(n);
                double logd = 0.0;
                double sup = 1.0;
                for (std::size_t m = 0; m < steps; ++m) {
                    for (double& e : extra) {
                        e = std::sqrt(dt) * normal(rng);
                    }
                    const double r0 = model.spot(z);
                    z = galerkin_step(z, dt, std::sqrt(dt) * normal(rng), extra, model);
                    logd -= 0.5 * dt * (r0 + model.spot(z));
                    sup = std::max(sup, std::exp(logd));
                }
                mean += sup / paths;
            }
            estimates.push_back(mean);
        }
    }
    const auto [lo, hi] = std::minmax_element(estimates.begin(), estimates.end());
    MESSAGE("discount sup moments in [" << *lo << ", " << *hi << "]");
    CHECK(*hi <= 2.0 * *lo);
}

TEST_CASE("projection is a contraction on volatilities")
{
    const auto grid = grid_with(512);
    const auto basis = basis_on(grid);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto h = sample_gaussian(6, *basis, seed);
        const auto s = sigma_of(h, level_vol);
        for (std::size_t n : {1u, 2u, 4u, 8u}) {
            CHECK(norm_w(project(s, n, *basis)) <= norm_w(s) + 1e-14);
        }
    }
}

TEST_CASE("effective_coefficients")
{
    const auto grid = grid_with(512);
    const auto basis = basis_on(grid);
    SUBCASE("n = 1 with deterministic volatility")
    {
        const auto model = std::make_shared<const GalerkinModel>(1, 50.0, 1e-3, exp_vol, basis);
        const auto eff = effective_coefficients(model);
        const double expected = inner_w(sigma_of(ForwardCurve::zero(grid), exp_vol), (*basis)[0]);
        for (double z : {-0.1, 0.0, 0.2}) {
            const std::vector<double> point{z};
            CHECK(eff.volatility(point)[0] == doctest::Approx(expected).epsilon(1e-13));
            CHECK(eff.rho(point) == doctest::Approx(z).epsilon(1e-14));
        }
        const std::vector<double> zero{0.0};
        const auto a = eff.covariance(zero);
        CHECK(a[0] == doctest::Approx(expected * expected + 1e-6));
    }
    SUBCASE("n = 2 discount rate and drift consistency")
    {
        const auto model = std::make_shared<const GalerkinModel>(2, 50.0, 5e-4, level_vol, basis);
        const auto eff = effective_coefficients(model);
        const std::vector<double> z{0.03, -0.02};
        CHECK(eff.rho(z) == doctest::Approx(0.03).epsilon(1e-13));
        const std::vector<double> zero{0.0, 0.0};
        const auto drift = hjm_drift(ForwardCurve::zero(grid), level_vol);
        CHECK(std::abs(eff.drift(zero)[0] - inner_w(drift, (*basis)[0])) < 1e-10);
        CHECK(std::abs(eff.drift(zero)[1] - inner_w(drift, (*basis)[1])) < 1e-10);
    }
    SUBCASE("unsupported dimension")
    {
        const auto model = std::make_shared<const GalerkinModel>(3, 50.0, 1e-3, exp_vol, basis);
        try {
            effective_coefficients(model);
            FAIL("expected unsupported dimension");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::unsupported_dimension);
        }
    }
}
