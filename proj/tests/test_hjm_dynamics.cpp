#include <doctest.h>

#include <hjm/error.hpp>
#include <hjm/hjm_dynamics.hpp>

#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace hjm;

namespace {

GridPtr grid_with(std::size_t n_x, double x_max = 11.0, std::size_t basis = 8)
{
    SpaceConfig config;
    config.n_x = n_x;
    config.x_max = x_max;
    config.basis_size = basis;
    return Grid::make(config);
}

VolatilityModel exp_model(double sigma0 = 0.01, double kappa = 1.0)
{
    return {VolatilityModel::Kind::deterministic_exp, sigma0, kappa};
}

VolatilityModel level_model(double sigma0 = 0.01, double kappa = 1.0)
{
    return {VolatilityModel::Kind::level_dependent, sigma0, kappa};
}

ForwardCurve random_curve(const GridPtr& grid, Rng& rng, double level_scale = 0.05, double shape_scale = 0.03)
{
    std::normal_distribution<double> normal;
    const double a = level_scale * normal(rng);
    const double b = shape_scale * normal(rng);
    const double c = shape_scale * normal(rng);
    const double rate = 0.3 + std::abs(normal(rng));
    return ForwardCurve::from_function(grid, [=](double x) {
        return a + b * std::exp(-rate * x) + c * x * std::exp(-rate * x);
    });
}

} // namespace

TEST_CASE("sigma_of")
{
    const auto grid = grid_with(512);
    Rng rng = make_rng(3);
    for (int i = 0; i < 5; ++i) {
        const auto h = random_curve(grid, rng);
        CHECK(sigma_of(h, exp_model()).values()[0] == doctest::Approx(0.01).epsilon(1e-15));
    }
    const auto s = sigma_of(ForwardCurve::zero(grid), level_model());
    for (std::size_t j = 0; j < s.size(); j += 37) {
        CHECK(s[j] == doctest::Approx(0.005 * std::exp(-grid->node(j))).epsilon(1e-14));
    }
    // values in H_w^0: the volatility vanishes at the end of the grid
    CHECK(std::abs(s[s.size() - 1]) < 1e-6);
    CHECK_NOTHROW(exp_model().validate(*grid));
    CHECK_THROWS_AS(exp_model(0.01, 0.1).validate(*grid), Error);
}

TEST_CASE("level-dependent volatility is Lipschitz")
{
    const auto grid = grid_with(512);
    const auto model = level_model(0.01, 1.0);
    Rng rng = make_rng(17);
    double fitted = 0.0;
    for (int i = 0; i < 500; ++i) {
        const auto f = random_curve(grid, rng);
        const auto h = random_curve(grid, rng);
        const double gap = norm_w(f - h);
        if (gap < 1e-12) {
            continue;
        }
        const auto sf = sigma_of(f, model);
        const auto sh = sigma_of(h, model);
        fitted = std::max(fitted, norm_w(sf - sh) / gap);
        for (std::size_t j = 0; j < f.size(); j += 7) {
            CHECK(sf[j] >= 0.0);
            CHECK(std::abs(sf[j] - sh[j]) <= model.l_sigma() * std::abs(f[j] - h[j]) + 1e-15);
        }
    }
    MESSAGE("fitted H_w Lipschitz constant of sigma: " << fitted);
    CHECK(fitted > 0.0);
    CHECK(model.l_sigma() < model.sigma0);

    // In the weighted norm the envelope amplifies: a constant shift c gives
    // (sigma0 / 2) sqrt(1 + int e^{-2x} (1+x)^4 dx) = 1.25 sigma0 for small c.
    const auto zero = ForwardCurve::zero(grid);
    const auto bumped = ForwardCurve::constant(grid, 1e-6);
    const double shift_ratio = norm_w(sigma_of(bumped, model) - sigma_of(zero, model)) / 1e-6;
    CHECK(shift_ratio == doctest::Approx(1.25 * model.sigma0).epsilon(1e-3));
    CHECK(fitted < 1.5 * model.sigma0);
}

TEST_CASE("hjm_drift")
{
    const auto grid = grid_with(2201); // dx = 0.005
    Rng rng = make_rng(5);
    for (int i = 0; i < 3; ++i) {
        const auto h = random_curve(grid, rng);
        CHECK(hjm_drift(h, level_model())[0] == 0.0);
        CHECK(hjm_drift(h, exp_model())[0] == 0.0);
    }
    const auto f = hjm_drift(ForwardCurve::zero(grid), exp_model(0.01, 1.0));
    // (sigma0^2 / kappa)(e^{-x} - e^{-2x}) at x = ln 2 is 1e-4 * (0.5 - 0.25)
    CHECK(f.at(std::log(2.0)) == doctest::Approx(2.5e-5).epsilon(1e-4));
    const auto zero = hjm_drift(random_curve(grid, rng), VolatilityModel::zero());
    for (double v : zero.values()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("euler_step special cases")
{
    const auto grid = grid_with(221); // dx = 0.05
    const double dt = 0.05;
    SUBCASE("constant curve without volatility")
    {
        const PathState s{0.0, ForwardCurve::constant(grid, 0.03), 0.0};
        const auto next = euler_step(s, dt, 0.7, VolatilityModel::zero());
        for (double v : next.curve.values()) {
            CHECK(v == doctest::Approx(0.03).epsilon(1e-15));
        }
        CHECK(next.log_discount == doctest::Approx(-0.03 * dt).epsilon(1e-14));
        CHECK(next.t == doctest::Approx(dt));
    }
    SUBCASE("pure transport")
    {
        Rng rng = make_rng(8);
        const auto h = random_curve(grid, rng);
        const PathState s{0.0, h, 0.0};
        const auto next = euler_step(s, dt, -1.3, VolatilityModel::zero());
        const auto expected = shift(h, dt);
        for (std::size_t j = 0; j < h.size(); ++j) {
            CHECK(next.curve[j] == expected[j]);
        }
    }
    SUBCASE("argument errors")
    {
        const PathState s{0.0, ForwardCurve::constant(grid, 0.03), 0.0};
        CHECK_THROWS_AS(euler_step(s, 0.0, 0.1, exp_model()), Error);
        CHECK_THROWS_AS(euler_step(s, -0.1, 0.1, exp_model()), Error);
    }
}

TEST_CASE("euler_step is time-homogeneous")
{
    const auto grid = grid_with(221);
    const auto model = level_model(0.02, 1.0);
    Rng rng = make_rng(21);
    const auto h = random_curve(grid, rng);
    PathState from_zero{0.0, h, 0.0};
    PathState from_later{0.4, h, 0.0};
    std::normal_distribution<double> normal;
    for (int m = 0; m < 10; ++m) {
        const double dB = std::sqrt(0.05) * normal(rng);
        from_zero = euler_step(from_zero, 0.05, dB, model);
        from_later = euler_step(from_later, 0.05, dB, model);
        for (std::size_t j = 0; j < h.size(); ++j) {
            REQUIRE(from_zero.curve[j] == from_later.curve[j]);
        }
        CHECK(from_zero.log_discount == from_later.log_discount);
    }
}

TEST_CASE("bond_price and payoff")
{
    const auto grid = grid_with(512);
    CHECK(bond_price(PathState{0.0, ForwardCurve::zero(grid), 0.0}, 1.0) == 1.0);
    CHECK(bond_price(PathState{0.0, ForwardCurve::constant(grid, 0.05), 0.0}, 1.0)
          == doctest::Approx(std::exp(-0.05)).epsilon(1e-14));
    CHECK(std::exp(-0.05) == doctest::Approx(0.951229).epsilon(1e-6));
    Rng rng = make_rng(1);
    CHECK(bond_price(PathState{1.0, random_curve(grid, rng), 0.0}, 1.0) == 1.0);
    CHECK_THROWS_AS(bond_price(PathState{1.5, ForwardCurve::zero(grid), 0.0}, 1.0), Error);

    CHECK(payoff(PathState{0.0, ForwardCurve::zero(grid), 0.0}, 0.9, 1.0) == 0.0);
    CHECK(payoff(PathState{0.0, ForwardCurve::constant(grid, 0.2), 0.0}, 0.9, 1.0)
          == doctest::Approx(0.9 - std::exp(-0.2)).epsilon(1e-13));
    CHECK(0.9 - std::exp(-0.2) == doctest::Approx(0.081269).epsilon(1e-5));
    for (double bad : {0.0, 1.0, 1.2, -0.5}) {
        try {
            payoff(PathState{0.0, ForwardCurve::zero(grid), 0.0}, bad, 1.0);
            FAIL("expected a contract error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::contract);
        }
    }
}

TEST_CASE("payoff is Lipschitz in the curve")
{
    const auto grid = grid_with(512);
    const double c = sup_bound_constant(grid->config());
    const double maturity = 1.0;
    Rng rng = make_rng(99);
    std::uniform_real_distribution<double> uniform(0.0, maturity);
    for (int i = 0; i < 500; ++i) {
        const auto h = random_curve(grid, rng, 0.1, 0.05);
        const auto g = random_curve(grid, rng, 0.1, 0.05);
        const double t = uniform(rng);
        const double lhs = std::abs(payoff(PathState{t, h, 0.0}, 0.95, maturity) - payoff(PathState{t, g, 0.0}, 0.95, maturity));
        CHECK(lhs <= c * maturity * norm_w(h - g) + 1e-12);
        CHECK(payoff(PathState{t, h, 0.0}, 0.95, maturity) <= 0.95);
    }
}

TEST_CASE("window simulation reproduces euler_step on an aligned grid")
{
    const auto grid = grid_with(221); // dx = 0.05 = dt
    const double dt = 0.05;
    const double maturity = 1.0;
    Rng rng = make_rng(4);
    const auto h0 = random_curve(grid, rng);
    for (const auto& model : {exp_model(0.02, 1.0), level_model(0.02, 0.8)}) {
        const WindowSimulator simulator(h0, 0.0, maturity, dt, model);
        REQUIRE(simulator.n_steps() == 20);
        std::vector<double> increments(20);
        std::normal_distribution<double> normal;
        for (double& d : increments) {
            d = std::sqrt(dt) * normal(rng);
        }
        std::vector<double> bond(21), spot(21), logd(21);
        simulator.simulate(increments, bond, spot, logd);

        const CurveDynamics dynamics(model, grid);
        PathState state{0.0, h0, 0.0};
        for (std::size_t m = 0; m <= 20; ++m) {
            CHECK(spot[m] == doctest::Approx(state.spot()).epsilon(1e-13));
            CHECK(bond[m] == doctest::Approx(bond_price(state, maturity)).epsilon(1e-13));
            CHECK(logd[m] == doctest::Approx(state.log_discount).epsilon(1e-13));
            if (m < 20) {
                state = euler_step(state, dt, increments[m], dynamics);
            }
        }
    }
}

TEST_CASE("simulate_paths without volatility is deterministic transport")
{
    const auto grid = grid_with(512);
    const auto h0 = ForwardCurve::from_function(grid, [](double x) { return 0.02 + 0.01 * x; });
    const auto ensemble = simulate_paths(h0, 0.0, 1.0, 0.01, 8, VolatilityModel::zero(), 7);
    for (std::size_t p = 0; p < ensemble.n_paths; ++p) {
        for (std::size_t m = 0; m <= ensemble.n_steps; ++m) {
            const double t = ensemble.time(m);
            const std::size_t k = ensemble.index(p, m);
            CHECK(ensemble.spot[k] == doctest::Approx(0.02 + 0.01 * t).epsilon(1e-12));
            // int_t^1 (0.02 + 0.01 s) ds
            const double integral = 0.02 * (1 - t) + 0.005 * (1 - t * t);
            CHECK(ensemble.bond[k] == doctest::Approx(std::exp(-integral)).epsilon(1e-12));
            const double discount = std::exp(ensemble.log_discount[k]);
            CHECK(discount > 0.0);
            CHECK(discount <= 1.0);
        }
    }
}

TEST_CASE("simulate_paths is reproducible and thread-independent")
{
    const auto grid = grid_with(512);
    const auto h0 = ForwardCurve::constant(grid, 0.04);
    SimulationOptions one;
    one.threads = 1;
    SimulationOptions four;
    four.threads = 4;
    const auto a = simulate_paths(h0, 0.0, 1.0, 0.01, 64, level_model(), 123, one);
    const auto b = simulate_paths(h0, 0.0, 1.0, 0.01, 64, level_model(), 123, four);
    CHECK(a.bond == b.bond);
    CHECK(a.log_discount == b.log_discount);
    const auto c = simulate_paths(h0, 0.0, 1.0, 0.01, 64, level_model(), 124, one);
    CHECK(a.bond != c.bond);

    // antithetic partners mirror each other to first order
    const auto e = simulate_paths(h0, 0.0, 1.0, 0.01, 2, exp_model(), 5);
    const double s0 = e.spot[e.index(0, 50)] - 0.04;
    const double s1 = e.spot[e.index(1, 50)] - 0.04;
    CHECK(std::abs(s0 + s1) < 1e-4);
}

TEST_CASE("simulate_paths error handling")
{
    const auto grid = grid_with(512);
    const auto h0 = ForwardCurve::constant(grid, 0.04);
    CHECK_THROWS_AS(simulate_paths(h0, 0.0, 1.0, 0.03, 4, exp_model(), 1), Error);
    SimulationOptions tiny;
    tiny.max_bytes = 1000;
    try {
        simulate_paths(h0, 0.0, 1.0, 0.01, 100, exp_model(), 1, tiny);
        FAIL("expected capacity error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::capacity);
    }
}

TEST_CASE("mild Euler scheme has strong order one")
{
    const auto grid = grid_with(512);
    const double maturity = 0.5;
    const double fine_dt = 1e-4;
    const auto h0 = ForwardCurve::constant(grid, 0.03);
    const auto model = exp_model(0.02, 2.0);
    const std::size_t fine_steps = 5000;
    const WindowSimulator reference(h0, 0.0, maturity, fine_dt, model);
    const std::vector<double> coarse_dts{0.02, 0.01, 0.005};
    std::vector<double> errors(coarse_dts.size(), 0.0);
    Rng rng = make_rng(77);
    std::normal_distribution<double> normal;
    const int paths = 50;
    for (int p = 0; p < paths; ++p) {
        std::vector<double> fine(fine_steps);
        for (double& d : fine) {
            d = std::sqrt(fine_dt) * normal(rng);
        }
        std::vector<double> bond(fine_steps + 1), spot(fine_steps + 1), logd(fine_steps + 1);
        reference.simulate(fine, bond, spot, logd);
        const double exact = spot.back();
        for (std::size_t c = 0; c < coarse_dts.size(); ++c) {
            const WindowSimulator coarse(h0, 0.0, maturity, coarse_dts[c], model);
            const std::size_t ratio = fine_steps / coarse.n_steps();
            std::vector<double> agg(coarse.n_steps(), 0.0);
            for (std::size_t m = 0; m < fine_steps; ++m) {
                agg[m / ratio] += fine[m];
            }
            std::vector<double> cb(coarse.n_steps() + 1), cs(coarse.n_steps() + 1), cl(coarse.n_steps() + 1);
            coarse.simulate(agg, cb, cs, cl);
            errors[c] += std::abs(cs.back() - exact) / paths;
        }
    }
    for (std::size_t c = 0; c + 1 < errors.size(); ++c) {
        const double ratio = errors[c] / errors[c + 1];
        MESSAGE("strong error " << errors[c] << " -> " << errors[c + 1] << ", ratio " << ratio);
        CHECK(ratio > 1.6);
        CHECK(ratio < 2.5);
    }
}

TEST_CASE("discounted bond is a martingale at zero rates")
{
    const auto grid = grid_with(512);
    const auto h0 = ForwardCurve::zero(grid);
    SimulationOptions options;
    options.antithetic = false;
    const std::size_t n = 100000;
    const auto ensemble = simulate_paths(h0, 0.0, 1.0, 0.005, n, exp_model(0.01, 1.0), 31, options);
    const double b0 = ensemble.bond[0];
    CHECK(b0 == 1.0);
    for (std::size_t m : {40u, 100u, 160u}) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const std::size_t k = ensemble.index(p, m);
            const double y = std::exp(ensemble.log_discount[k]) * ensemble.bond[k];
            sum += y;
            sum_sq += y * y;
        }
        const double mean = sum / n;
        const double se = std::sqrt((sum_sq / n - mean * mean) / n);
        CHECK(std::abs(mean - b0) < 3.0 * se);
    }
}

TEST_CASE("discount supremum moment is finite and seed-stable")
{
    const auto grid = grid_with(512);
    const auto h0 = ForwardCurve::constant(grid, 0.02);
    std::vector<double> means;
    std::vector<double> errors;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const std::size_t n = 20000;
        const auto ensemble = simulate_paths(h0, 0.0, 1.0, 0.005, n, level_model(0.05, 1.0), seed);
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            double sup = 0.0;
            for (std::size_t m = 0; m <= ensemble.n_steps; ++m) {
                sup = std::max(sup, std::exp(ensemble.log_discount[ensemble.index(p, m)]));
                CHECK_FALSE(ensemble.bond[ensemble.index(p, m)] <= 0.0);
            }
            sum += sup;
            sum_sq += sup * sup;
        }
        const double mean = sum / n;
        means.push_back(mean);
        errors.push_back(std::sqrt((sum_sq / n - mean * mean) / n));
        CHECK(std::isfinite(mean));
    }
    for (std::size_t i = 0; i < means.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            CHECK(std::abs(means[i] - means[j]) < 4.0 * std::hypot(errors[i], errors[j]));
        }
    }
}

TEST_CASE("second moment of the curve norm is bounded by the initial norm")
{
    const auto grid = grid_with(221); // dx = dt = 0.05
    const auto model = level_model(0.05, 1.0);
    const CurveDynamics dynamics(model, grid);
    Rng rng = make_rng(55);
    std::normal_distribution<double> normal;
    std::vector<double> ratios;
    for (int c = 0; c < 10; ++c) {
        const auto h0 = random_curve(grid, rng, 0.05, 0.05);
        const double base = 1.0 + std::pow(norm_w(h0), 2);
        double mean_sup = 0.0;
        const int paths = 40;
        for (int p = 0; p < paths; ++p) {
            PathState state{0.0, h0, 0.0};
            double sup = std::pow(norm_w(h0), 2);
            for (int m = 0; m < 20; ++m) {
                state = euler_step(state, 0.05, std::sqrt(0.05) * normal(rng), dynamics);
                sup = std::max(sup, std::pow(norm_w(state.curve), 2));
            }
            mean_sup += sup / paths;
        }
        ratios.push_back(mean_sup / base);
    }
    const double fitted = *std::max_element(ratios.begin(), ratios.end());
    MESSAGE("fitted moment constant " << fitted);
    CHECK(fitted < 1.5);
}

TEST_CASE("path dump is a gzip csv")
{
    const auto grid = grid_with(512);
    const auto ensemble = simulate_paths(ForwardCurve::constant(grid, 0.01), 0.0, 1.0, 0.25, 2, exp_model(), 9);
    const auto path = std::filesystem::temp_directory_path() / "hjm_paths_test.csv.gz";
    write_paths_csv_gz(path, ensemble);
    gzFile file = gzopen(path.string().c_str(), "rb");
    REQUIRE(file != nullptr);
    char buffer[4096];
    const int n = gzread(file, buffer, sizeof buffer - 1);
    gzclose(file);
    REQUIRE(n > 0);
    buffer[n] = '\0';
    const std::string text(buffer);
    CHECK(text.rfind("path_id,t,spot,bond,log_discount\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 * 5);
    std::filesystem::remove(path);
}
