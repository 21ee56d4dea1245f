#include <doctest.h>

#include <hjm/error.hpp>
#include <hjm/mc_oracle.hpp>

#include <cmath>
#include <random>

using namespace hjm;

namespace {

struct Setup {
    GridPtr grid;
    std::shared_ptr<const BasisSet> basis;
};

const Setup& setup()
{
    static const Setup s = [] {
        SpaceConfig config;
        config.n_x = 2201; // dx = 0.005 = T / 200
        auto grid = Grid::make(config);
        return Setup{grid, std::make_shared<const BasisSet>(build_basis(grid))};
    }();
    return s;
}

PricingProblem flat_problem(double level, double strike, std::optional<double> expiry = {})
{
    return PricingProblem{strike, 1.0, 0.0, ForwardCurve::constant(setup().grid, level), expiry};
}

const VolatilityModel stochastic_vol{VolatilityModel::Kind::deterministic_exp, 0.02, 1.0};

LsmcConfig paths(std::size_t n, std::uint64_t seed = 20240601)
{
    LsmcConfig config;
    config.n_paths = n;
    config.seed = seed;
    return config;
}

double joint(const McEstimate& a, const McEstimate& b) { return std::hypot(a.std_error, b.std_error); }

} // namespace

TEST_CASE("deterministic limit: immediate exercise and exhaustive date search")
{
    const auto problem = flat_problem(0.2, 0.9);
    const auto result = lsmc_price(problem, VolatilityModel::zero(), paths(2000));
    // search over the simulation dates t_m = m / 200
    double best = 0.0;
    for (int m = 0; m <= 200; ++m) {
        const double t = m / 200.0;
        best = std::max(best, std::exp(-0.2 * t) * std::max(0.9 - std::exp(-0.2 * (1.0 - t)), 0.0));
    }
    CHECK(best == doctest::Approx(0.9 - std::exp(-0.2)).epsilon(1e-12));
    CHECK(std::abs(result.out_of_sample.price - best) < 1e-3);
    CHECK(std::abs(result.in_sample.price - best) < 1e-3);
    CHECK(result.exercise_at_start);

    const auto zero = lsmc_price(flat_problem(-0.05, 0.9), VolatilityModel::zero(), paths(2000));
    CHECK(zero.all_out_of_money);
    CHECK(zero.out_of_sample.price == 0.0);
    CHECK(zero.out_of_sample.std_error == 0.0);
    CHECK(european_price(flat_problem(0.2, 0.9), VolatilityModel::zero(), paths(2000)).price == 0.0);
}

TEST_CASE("configuration errors")
{
    const auto problem = flat_problem(0.01, 0.99);
    CHECK_THROWS_AS(lsmc_price(problem, stochastic_vol, paths(999)), Error);
    CHECK_THROWS_AS(lsmc_price(problem, stochastic_vol, paths(1001)), Error);
    auto bad = paths(2000);
    bad.degree = 0;
    CHECK_THROWS_AS(lsmc_price(problem, stochastic_vol, bad), Error);
}

TEST_CASE("stochastic config: ordering and bounds")
{
    const auto problem = flat_problem(0.01, 0.99);
    const auto result = lsmc_price(problem, stochastic_vol, paths(20000));
    const auto& out = result.out_of_sample;
    const auto& in = result.in_sample;
    MESSAGE("out " << out.price << " +- " << out.std_error << " in " << in.price << " +- " << in.std_error);
    CHECK(out.price > 0.0);
    CHECK(out.price <= problem.strike);
    CHECK(in.price >= out.price - 3.0 * joint(in, out));
    const auto european = european_price(problem, stochastic_vol, paths(20000));
    CHECK(out.price >= european.price - 3.0 * joint(out, european));

    // option expiring before the bond: nontrivial European value
    const auto early = flat_problem(0.01, 0.99, 0.5);
    const auto american = lsmc_price(early, stochastic_vol, paths(20000)).out_of_sample;
    const auto euro = european_price(early, stochastic_vol, paths(20000));
    MESSAGE("expiry 0.5: american " << american.price << " european " << euro.price << " +- " << euro.std_error);
    CHECK(euro.price > 0.0);
    CHECK(american.price >= euro.price - 3.0 * joint(american, euro));
}

TEST_CASE("European estimator: seed stability and antithetic variance reduction")
{
    const auto early = flat_problem(0.01, 0.99, 0.5);
    const auto a = european_price(early, stochastic_vol, paths(20000, 1));
    const auto b = european_price(early, stochastic_vol, paths(20000, 2));
    CHECK(std::abs(a.price - b.price) <= 3.0 * joint(a, b));

    auto plain = paths(20000, 3);
    plain.antithetic = false;
    const auto c = european_price(early, stochastic_vol, plain);
    MESSAGE("antithetic se " << a.std_error << " plain se " << c.std_error);
    CHECK(std::abs(a.price - c.price) <= 3.0 * joint(a, c));
    CHECK(a.std_error < c.std_error);
}

TEST_CASE("coordinate simulator matches the curve simulator")
{
    const auto& s = setup();
    const ForwardCurve h0 = ForwardCurve::from_function(s.grid, [](double x) { return 0.02 + 0.01 * std::exp(-x); });
    const double dt = 0.01; // two grid cells per step
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal(0.0, std::sqrt(dt));
    const std::size_t steps = 100;
    std::vector<double> dB(steps);
    for (double& x : dB) {
        x = normal(rng);
    }
    for (const auto& vol : {stochastic_vol, VolatilityModel{VolatilityModel::Kind::level_dependent, 0.02, 1.0}}) {
        const CoordinatePathSimulator coords(h0, 0.0, 1.0, dt, vol, s.basis, 2);
        REQUIRE(coords.n_steps() == steps);
        std::vector<double> z((steps + 1) * 2), bond(steps + 1), logd(steps + 1);
        coords.simulate(dB, z, bond, logd);

        PathState state{0.0, h0, 0.0};
        double max_z = 0.0, max_bond = 0.0, max_logd = 0.0;
        for (std::size_t m = 0; m <= steps; ++m) {
            const auto exact = s.basis->coordinates(state.curve, 2);
            max_z = std::max({max_z, std::abs(exact[0] - z[2 * m]), std::abs(exact[1] - z[2 * m + 1])});
            max_bond = std::max(max_bond, std::abs(bond_price(state, 1.0) - bond[m]));
            max_logd = std::max(max_logd, std::abs(state.log_discount - logd[m]));
            if (m < steps) {
                state = euler_step(state, dt, dB[m], vol);
            }
        }
        MESSAGE(std::string(to_string(vol.kind)) << ": z " << max_z << " bond " << max_bond << " logd " << max_logd);
        CHECK(max_z < 1e-10);
        CHECK(max_bond < 1e-12);
        CHECK(max_logd < 1e-12);
    }
    CHECK_THROWS_AS(CoordinatePathSimulator(h0, 0.0, 1.0, 0.0075, stochastic_vol, s.basis, 2), Error);
}

TEST_CASE("martingale diagnostic: deterministic case has zero deviation")
{
    const auto problem = flat_problem(0.2, 0.9);
    const auto surface = solve_pde(problem, VolatilityModel::zero(), setup().basis, ChainConfig{}, PdeConfig{});
    const auto report = martingale_diagnostic(surface, problem, VolatilityModel::zero(), paths(1000));
    CHECK(report.value == surface.price());
    REQUIRE(report.checkpoints.size() == 5);
    CHECK(report.checkpoints.front().t == 0.0);
    for (const auto& c : report.checkpoints) {
        CHECK(std::abs(c.mean - report.value) <= 1e-6);
    }
    CHECK(report.max_deviation == 0.0);
    CHECK(report.sup_second_moment == doctest::Approx(report.value * report.value).epsilon(1e-9));
}

TEST_CASE("martingale diagnostic: stochastic case is a martingale within noise")
{
    const auto problem = flat_problem(0.01, 0.99);
    PdeConfig pde;
    pde.n_state = 101;
    pde.n_time = 200;
    const auto surface = solve_pde(problem, stochastic_vol, setup().basis, ChainConfig{}, pde);
    const auto report = martingale_diagnostic(surface, problem, stochastic_vol, paths(4000));
    MESSAGE("max deviation " << report.max_deviation << " exits " << report.exits);
    CHECK(report.checkpoints.front().deviation == 0.0);
    CHECK(report.max_deviation <= 3.0);
    CHECK(report.sup_second_moment < 1e-4);
    CHECK(report.stopped_payoff.price > 0.0);
}
