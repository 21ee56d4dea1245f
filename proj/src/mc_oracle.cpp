#include <hjm/error.hpp>
#include <hjm/mc_oracle.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hjm {

double LsmcConfig::step(const PricingProblem& problem) const
{
    return dt > 0.0 ? dt : (problem.maturity - problem.t0) / 200.0;
}

void LsmcConfig::validate() const
{
    require(n_paths >= 1000, ErrorKind::configuration, "mc.n_paths must be >= 1000");
    require(!antithetic || n_paths % 2 == 0, ErrorKind::configuration, "antithetic sampling needs an even path count");
    require(std::isfinite(dt) && dt >= 0.0, ErrorKind::configuration, "mc.dt must be nonnegative");
    require(degree >= 1 && degree <= 6, ErrorKind::configuration, "mc.degree must lie in [1, 6]");
}

namespace {

std::uint64_t fresh_seed(std::uint64_t seed)
{
    // splitmix64 finaliser; keeps the out-of-sample stream disjoint from the fit
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Mean and standard error; antithetic partners are averaged first.
McEstimate estimate(std::span<const double> values, bool antithetic)
{
    const std::size_t group = antithetic ? 2 : 1;
    const std::size_t count = values.size() / group;
    auto grouped = [&](std::size_t g) {
        double y = 0.0;
        for (std::size_t q = 0; q < group; ++q) {
            y += values[g * group + q];
        }
        return y / static_cast<double>(group);
    };
    double sum = 0.0;
    for (std::size_t g = 0; g < count; ++g) {
        sum += grouped(g);
    }
    McEstimate out;
    const double n = static_cast<double>(count);
    out.price = sum / n;
    if (count > 1) {
        // two-pass variance: exact zero for constant samples
        double sum_sq = 0.0;
        for (std::size_t g = 0; g < count; ++g) {
            const double d = grouped(g) - out.price;
            sum_sq += d * d;
        }
        out.std_error = std::sqrt(sum_sq / (n - 1.0) / n);
    }
    return out;
}

struct ExercisePolicy {
    bool active = false;
    double centre = 0.0;
    double scale = 1.0;
    std::size_t degree = 0;
    double tau = 0.0;
    bool time_features = false;
    Eigen::VectorXd beta;

    std::size_t width() const { return degree + 1 + (time_features ? 2 : 0); }

    void features(double bond, double* row) const
    {
        const double u = (bond - centre) / scale;
        double power = 1.0;
        for (std::size_t d = 0; d <= degree; ++d) {
            row[d] = power;
            power *= u;
        }
        if (time_features) {
            row[degree + 1] = tau;
            row[degree + 2] = tau * u;
        }
    }

    double continuation(double bond) const
    {
        double row[16];
        features(bond, row);
        double sum = 0.0;
        for (std::size_t c = 0; c < width(); ++c) {
            sum += beta[static_cast<Eigen::Index>(c)] * row[c];
        }
        return sum;
    }
};

struct Horizon {
    double dt;
    std::size_t sim_steps;
    std::size_t exercise_steps;
};

Horizon horizon(const PricingProblem& problem, const LsmcConfig& config)
{
    Horizon h;
    h.dt = config.step(problem);
    h.sim_steps = step_count(problem.t0, problem.maturity, h.dt);
    h.exercise_steps = step_count(problem.t0, problem.exercise_end(), h.dt);
    return h;
}

} // namespace

LsmcResult lsmc_price(const PricingProblem& problem, const VolatilityModel& model, const LsmcConfig& config)
{
    problem.validate();
    config.validate();
    const Horizon hz = horizon(problem, config);
    const WindowSimulator simulator(problem.initial, problem.t0, problem.maturity, hz.dt, model);
    const std::size_t paths = config.n_paths;
    const std::size_t dates = hz.exercise_steps + 1;
    const double strike = problem.strike;

    LsmcResult result;
    result.n_steps = hz.exercise_steps;

    std::vector<double> bond(paths * dates), logd(paths * dates);
    parallel_for(paths, config.threads, [&](std::size_t p) {
        IncrementSource increments(config.seed, p, config.antithetic, hz.dt);
        std::vector<double> b(hz.sim_steps + 1), s(hz.sim_steps + 1), l(hz.sim_steps + 1);
        simulator.simulate(increments, b, s, l);
        std::copy_n(b.begin(), dates, bond.begin() + static_cast<std::ptrdiff_t>(p * dates));
        std::copy_n(l.begin(), dates, logd.begin() + static_cast<std::ptrdiff_t>(p * dates));
    });

    const double start_payoff = payoff_from_bond(bond[0], strike);
    bool any_itm = false;
    for (double b : bond) {
        if (strike - b > 0.0) {
            any_itm = true;
            break;
        }
    }
    if (!any_itm) {
        result.all_out_of_money = true;
        return result;
    }

    // backward induction on discounted cash flows Y_p = D(t0, tau_p) Psi(tau_p)
    std::vector<double> y(paths);
    const std::size_t last = dates - 1;
    for (std::size_t p = 0; p < paths; ++p) {
        y[p] = std::exp(logd[p * dates + last]) * payoff_from_bond(bond[p * dates + last], strike);
    }
    std::vector<ExercisePolicy> policies(dates);
    std::vector<std::size_t> itm;
    for (std::size_t m = last; m-- > 1;) {
        itm.clear();
        double mean = 0.0;
        for (std::size_t p = 0; p < paths; ++p) {
            if (strike - bond[p * dates + m] > 0.0) {
                itm.push_back(p);
                mean += bond[p * dates + m];
            }
        }
        ExercisePolicy& policy = policies[m];
        policy.time_features = config.time_features;
        policy.tau = problem.maturity - (problem.t0 + hz.dt * static_cast<double>(m));
        if (itm.size() < 4 * (config.degree + 3)) {
            continue; // too few in-the-money paths to regress: keep holding
        }
        mean /= static_cast<double>(itm.size());
        double var = 0.0;
        for (std::size_t p : itm) {
            var += std::pow(bond[p * dates + m] - mean, 2);
        }
        const double sd = std::sqrt(var / static_cast<double>(itm.size()));
        if (!(sd > 0.0)) {
            continue;
        }
        policy.centre = mean;
        policy.scale = sd;

        // shorten the bond polynomial until its design is full rank
        policy.degree = config.degree;
        const auto rows = static_cast<Eigen::Index>(itm.size());
        while (true) {
            Eigen::MatrixXd poly(rows, static_cast<Eigen::Index>(policy.degree + 1));
            for (Eigen::Index r = 0; r < rows; ++r) {
                const double u = (bond[itm[static_cast<std::size_t>(r)] * dates + m] - mean) / sd;
                double power = 1.0;
                for (std::size_t d = 0; d <= policy.degree; ++d) {
                    poly(r, static_cast<Eigen::Index>(d)) = power;
                    power *= u;
                }
            }
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(poly);
            if (qr.rank() == poly.cols() || policy.degree == 1) {
                break;
            }
            --policy.degree;
            ++result.degree_reductions;
        }

        // the time columns are constant on one date; the rank-revealing solve absorbs them
        Eigen::MatrixXd design(rows, static_cast<Eigen::Index>(policy.width()));
        Eigen::VectorXd target(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const std::size_t p = itm[static_cast<std::size_t>(r)];
            double row[16];
            policy.features(bond[p * dates + m], row);
            for (std::size_t c = 0; c < policy.width(); ++c) {
                design(r, static_cast<Eigen::Index>(c)) = row[c];
            }
            target[r] = y[p] * std::exp(-logd[p * dates + m]);
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        policy.beta = qr.solve(target);
        policy.active = true;

        for (std::size_t p : itm) {
            const double b = bond[p * dates + m];
            const double exercise = strike - b;
            if (exercise >= policy.continuation(b)) {
                y[p] = std::exp(logd[p * dates + m]) * exercise;
            }
        }
    }

    const McEstimate held = estimate(y, config.antithetic);
    if (start_payoff > 0.0 && start_payoff >= held.price) {
        result.exercise_at_start = true;
        result.in_sample = {start_payoff, 0.0};
        result.out_of_sample = {start_payoff, 0.0};
        return result;
    }
    result.in_sample = held;

    // out-of-sample re-pricing with the fitted policy on fresh paths
    const std::uint64_t seed = fresh_seed(config.seed);
    std::vector<double> fresh(paths);
    parallel_for(paths, config.threads, [&](std::size_t p) {
        IncrementSource increments(seed, p, config.antithetic, hz.dt);
        std::vector<double> b(hz.sim_steps + 1), s(hz.sim_steps + 1), l(hz.sim_steps + 1);
        simulator.simulate(increments, b, s, l);
        double value = std::exp(l[last]) * payoff_from_bond(b[last], strike);
        for (std::size_t m = 1; m < last; ++m) {
            const double exercise = strike - b[m];
            if (exercise > 0.0 && policies[m].active && exercise >= policies[m].continuation(b[m])) {
                value = std::exp(l[m]) * exercise;
                break;
            }
        }
        fresh[p] = value;
    });
    result.out_of_sample = estimate(fresh, config.antithetic);
    return result;
}

McEstimate european_price(const PricingProblem& problem, const VolatilityModel& model, const LsmcConfig& config)
{
    problem.validate();
    config.validate();
    const Horizon hz = horizon(problem, config);
    const WindowSimulator simulator(problem.initial, problem.t0, problem.maturity, hz.dt, model);
    std::vector<double> values(config.n_paths);
    const std::size_t last = hz.exercise_steps;
    parallel_for(config.n_paths, config.threads, [&](std::size_t p) {
        IncrementSource increments(config.seed, p, config.antithetic, hz.dt);
        std::vector<double> b(hz.sim_steps + 1), s(hz.sim_steps + 1), l(hz.sim_steps + 1);
        simulator.simulate(increments, b, s, l);
        values[p] = std::exp(l[last]) * payoff_from_bond(b[last], problem.strike);
    });
    return estimate(values, config.antithetic);
}

// ---------------------------------------------------------------------------
// Coordinate paths
// ---------------------------------------------------------------------------

CoordinatePathSimulator::CoordinatePathSimulator(const ForwardCurve& h0, double t0, double maturity, double dt,
                                                 VolatilityModel model, std::shared_ptr<const BasisSet> basis,
                                                 std::size_t n)
    : m_h0(h0), m_t0(t0), m_maturity(maturity), m_dt(dt), m_steps(step_count(t0, maturity, dt)), m_model(model),
      m_basis(std::move(basis)), m_n(n)
{
    require(m_basis != nullptr && m_basis->grid_ptr()->same_as(h0.grid()), ErrorKind::argument,
            "basis and initial curve live on different grids");
    require(n >= 1 && n <= m_basis->size(), ErrorKind::argument, "coordinate dimension out of range");
    const double ratio = dt / h0.grid().spacing();
    require(std::abs(ratio - std::round(ratio)) < 1e-9 && std::round(ratio) >= 1.0, ErrorKind::configuration,
            "the curve grid spacing must divide the time step (choose n_x so that x_max / (n_x - 1) divides dt)");
    if (m_model.state_dependent()) {
        return;
    }
    const CurveDynamics dynamics(m_model, h0.grid_ptr());
    const auto zero = ForwardCurve::zero(h0.grid_ptr());
    const auto sigma = dynamics.sigma(zero);
    const auto drift_step = dynamics.drift(zero) * dt;
    const std::size_t steps = m_steps;
    m_outputs = n + 2;
    m_base.assign(m_outputs * (steps + 1), 0.0);
    m_kernel.assign(m_outputs * (steps + 1) * (steps + 1), 0.0);
    auto base = [&](std::size_t o, std::size_t m) -> double& { return m_base[o * (steps + 1) + m]; };
    auto kernel = [&](std::size_t o, std::size_t m, std::size_t k) -> double& {
        return m_kernel[(o * (steps + 1) + m) * (steps + 1) + k];
    };

    // int_0^{T - t_m} of a curve, from its cumulative trapezoid sums on the aligned grid
    const double dx = h0.grid().spacing();
    std::vector<double> cumulative(h0.size());
    auto bond_exponents = [&](const ForwardCurve& curve, std::size_t first, auto&& store) {
        cumulative[0] = 0.0;
        for (std::size_t j = 1; j < curve.size(); ++j) {
            cumulative[j] = cumulative[j - 1] + 0.5 * dx * (curve[j - 1] + curve[j]);
        }
        for (std::size_t m = first; m <= steps; ++m) {
            const double upper = maturity - (t0 + dt * static_cast<double>(m));
            const auto node = static_cast<std::size_t>(std::llround(upper / dx));
            store(m, cumulative[std::min(node, curve.size() - 1)]);
        }
    };

    ForwardCurve mean = h0;
    for (std::size_t m = 0; m <= steps; ++m) {
        const auto z = m_basis->coordinates(mean, n);
        for (std::size_t i = 0; i < n; ++i) {
            base(i, m) = z[i];
        }
        base(n, m) = mean[0];
        base(n + 1, m) = mean.integral(maturity - (t0 + dt * static_cast<double>(m)));
        if (m < steps) {
            mean = shift(mean + drift_step, dt);
        }
    }
    // q_k = S^k sigma enters step m through the increment dB_{m-k}
    ForwardCurve q = sigma;
    for (std::size_t k = 1; k <= steps; ++k) {
        q = shift(q, dt);
        const auto z = m_basis->coordinates(q, n);
        for (std::size_t m = k; m <= steps; ++m) {
            for (std::size_t i = 0; i < n; ++i) {
                kernel(i, m, k) = z[i];
            }
            kernel(n, m, k) = q[0];
        }
        bond_exponents(q, k, [&](std::size_t m, double value) { kernel(n + 1, m, k) = value; });
    }
}

void CoordinatePathSimulator::simulate(std::span<const double> increments, std::span<double> z, std::span<double> bond,
                                       std::span<double> log_discount) const
{
    require(increments.size() >= m_steps, ErrorKind::argument, "not enough Brownian increments for the path");
    require(z.size() >= (m_steps + 1) * m_n && bond.size() >= m_steps + 1 && log_discount.size() >= m_steps + 1,
            ErrorKind::argument, "output buffers too small");
    if (m_outputs > 0) {
        simulate_linear(increments, z, bond, log_discount);
    } else {
        simulate_full(increments, z, bond, log_discount);
    }
}

void CoordinatePathSimulator::simulate_linear(std::span<const double> increments, std::span<double> z,
                                              std::span<double> bond, std::span<double> log_discount) const
{
    const std::size_t steps = m_steps;
    double previous_spot = 0.0;
    double logd = 0.0;
    for (std::size_t m = 0; m <= steps; ++m) {
        for (std::size_t o = 0; o < m_outputs; ++o) {
            double value = m_base[o * (steps + 1) + m];
            const double* row = m_kernel.data() + (o * (steps + 1) + m) * (steps + 1);
            for (std::size_t j = 0; j < m; ++j) {
                value += row[m - j] * increments[j];
            }
            if (o < m_n) {
                z[m * m_n + o] = value;
            } else if (o == m_n) {
                if (m > 0) {
                    logd -= 0.5 * m_dt * (previous_spot + value);
                }
                previous_spot = value;
            } else {
                bond[m] = std::exp(-value);
            }
        }
        log_discount[m] = logd;
    }
}

void CoordinatePathSimulator::simulate_full(std::span<const double> increments, std::span<double> z,
                                            std::span<double> bond, std::span<double> log_discount) const
{
    const CurveDynamics dynamics(m_model, m_h0.grid_ptr());
    PathState state{m_t0, m_h0, 0.0};
    for (std::size_t m = 0; m <= m_steps; ++m) {
        const auto coords = m_basis->coordinates(state.curve, m_n);
        std::copy(coords.begin(), coords.end(), z.begin() + static_cast<std::ptrdiff_t>(m * m_n));
        bond[m] = bond_price(state.curve, m_maturity - state.t);
        log_discount[m] = state.log_discount;
        if (m < m_steps) {
            state = euler_step(state, m_dt, increments[m], dynamics);
        }
    }
}

// ---------------------------------------------------------------------------
// Martingale diagnostic
// ---------------------------------------------------------------------------

MartingaleReport martingale_diagnostic(const ValueSurface& surface, const PricingProblem& problem,
                                       const VolatilityModel& model, const LsmcConfig& config,
                                       std::size_t n_checkpoints)
{
    problem.validate();
    require(config.n_paths >= 2 && (!config.antithetic || config.n_paths % 2 == 0), ErrorKind::configuration,
            "martingale diagnostic needs an even path count with antithetic sampling");
    require(n_checkpoints >= 2, ErrorKind::argument, "need at least two checkpoints");
    const Horizon hz = horizon(problem, config);
    const std::size_t n = surface.grid.n;
    const CoordinatePathSimulator simulator(problem.initial, problem.t0, problem.maturity, hz.dt, model,
                                            surface.model->basis_ptr(), n);
    const ExerciseRule rule(surface);
    const std::size_t last = hz.exercise_steps;
    std::vector<std::size_t> checkpoints(n_checkpoints);
    for (std::size_t q = 0; q < n_checkpoints; ++q) {
        checkpoints[q] = static_cast<std::size_t>(
            std::llround(static_cast<double>(q * last) / static_cast<double>(n_checkpoints - 1)));
    }

    const std::size_t paths = config.n_paths;
    std::vector<double> samples(n_checkpoints * paths), stopped(paths);
    std::vector<unsigned char> exited(paths, 0);
    parallel_for(paths, config.threads, [&](std::size_t p) {
        IncrementSource source(config.seed, p, config.antithetic, hz.dt);
        std::vector<double> increments(hz.sim_steps);
        for (double& d : increments) {
            d = source.next();
        }
        std::vector<double> z((hz.sim_steps + 1) * n), bond(hz.sim_steps + 1), logd(hz.sim_steps + 1);
        simulator.simulate(increments, z, bond, logd);
        auto state = [&](std::size_t m) { return std::span<const double>(z.data() + m * n, n); };
        auto time = [&](std::size_t m) { return problem.t0 + hz.dt * static_cast<double>(m); };
        std::size_t tau = last;
        for (std::size_t m = 0; m <= last; ++m) {
            if (rule.stop(time(m), state(m))) {
                tau = m;
                break;
            }
        }
        const bool out = rule.outside(state(tau));
        exited[p] = out ? 1 : 0;
        const double stop_payoff = surface.obstacle_at(time(tau), state(tau));
        stopped[p] = std::exp(logd[tau]) * stop_payoff;
        for (std::size_t q = 0; q < n_checkpoints; ++q) {
            const std::size_t m = std::min(checkpoints[q], tau);
            const double v = (out && m == tau) ? stop_payoff : surface.value(time(m), state(m));
            samples[q * paths + p] = std::exp(logd[m]) * v;
        }
    });

    MartingaleReport report;
    report.value = surface.price();
    report.n_paths = paths;
    for (unsigned char e : exited) {
        report.exits += e;
    }
    auto deviation = [](double mean, double se, double target) {
        const double gap = std::abs(mean - target);
        // rounding of a constant sample is not a deviation
        if (gap <= 1e-12 * std::max(1.0, std::abs(target))) {
            return 0.0;
        }
        if (se > 0.0) {
            return gap / se;
        }
        return gap <= 1e-6 ? 0.0 : std::numeric_limits<double>::infinity();
    };
    for (std::size_t q = 0; q < n_checkpoints; ++q) {
        const std::span<const double> ys(samples.data() + q * paths, paths);
        const McEstimate e = estimate(ys, config.antithetic);
        CheckpointReport c;
        c.t = problem.t0 + hz.dt * static_cast<double>(checkpoints[q]);
        c.mean = e.price;
        c.std_error = e.std_error;
        c.deviation = deviation(e.price, e.std_error, report.value);
        double second = 0.0;
        for (double y : ys) {
            second += y * y;
        }
        c.second_moment = second / static_cast<double>(paths);
        report.max_deviation = std::max(report.max_deviation, c.deviation);
        report.max_abs_deviation = std::max(report.max_abs_deviation, std::abs(c.mean - report.value));
        report.sup_second_moment = std::max(report.sup_second_moment, c.second_moment);
        report.checkpoints.push_back(c);
    }
    report.stopped_payoff = estimate(stopped, config.antithetic);
    report.stopped_deviation = deviation(report.stopped_payoff.price, report.stopped_payoff.std_error, report.value);
    return report;
}

} // namespace hjm
