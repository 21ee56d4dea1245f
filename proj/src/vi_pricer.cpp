#include <hjm/error.hpp>
#include <hjm/vi_pricer.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace hjm {

void PdeConfig::validate() const
{
    require(n_state >= 5, ErrorKind::configuration, "pde.n_state must be >= 5");
    require(n_time >= 2, ErrorKind::configuration, "pde.n_time must be >= 2");
    require(width_sigmas > 0.0 && min_half_width > 0.0 && width_scale > 0.0, ErrorKind::configuration,
            "pde box widths must be positive");
    require(omega > 0.0 && omega < 2.0, ErrorKind::configuration, "pde.omega must lie in (0, 2)");
    require(tol > 0.0, ErrorKind::configuration, "pde.tol must be positive");
    require(max_iterations >= 1, ErrorKind::configuration, "pde.max_iterations must be >= 1");
}

bool PdeGrid::on_boundary(std::size_t i, std::size_t j) const
{
    if (i == 0 || i + 1 == count[0]) {
        return true;
    }
    return n == 2 && (j == 0 || j + 1 == count[1]);
}

bool PdeGrid::contains(std::span<const double> z) const
{
    for (std::size_t a = 0; a < n; ++a) {
        const double slack = 1e-12 * spacing[a];
        if (z[a] < lower[a] - slack || z[a] > upper(a) + slack) {
            return false;
        }
    }
    return true;
}

PdeGrid make_pde_grid(const EffectiveCoefficients& coefficients, std::span<const double> z0, double t0, double t_end,
                      const PdeConfig& config)
{
    config.validate();
    require(z0.size() == coefficients.n, ErrorKind::argument, "initial coordinates have the wrong dimension");
    require(t_end > t0, ErrorKind::argument, "empty time horizon");
    PdeGrid grid;
    grid.n = coefficients.n;
    grid.n_time = config.n_time;
    grid.t0 = t0;
    grid.t_end = t_end;
    const double tau = t_end - t0;
    const auto a = coefficients.covariance(z0);
    const auto b = coefficients.drift(z0);
    for (std::size_t axis = 0; axis < grid.n; ++axis) {
        const double diffusion = a[axis * grid.n + axis];
        require(std::isfinite(diffusion) && diffusion >= 0.0, ErrorKind::assembly, "negative diffusion at the initial state");
        const double half = config.width_scale
            * (config.width_sigmas * std::sqrt(diffusion * tau) + std::abs(b[axis]) * tau + config.min_half_width);
        grid.count[axis] = config.n_state;
        grid.lower[axis] = z0[axis] - half;
        grid.spacing[axis] = 2.0 * half / static_cast<double>(config.n_state - 1);
    }
    return grid;
}

double DiscreteOperator::apply(std::span<const double> v, std::size_t i, std::size_t j) const
{
    const std::size_t p = grid.index(i, j);
    const double* c = coefficients.data() + p * 9;
    double sum = 0.0;
    const std::size_t stencil = grid.n == 1 ? 3 : 9;
    for (std::size_t s = 0; s < stencil; ++s) {
        if (c[s] != 0.0) {
            sum += c[s] * v[grid.index(i + stencil_offsets[s][0], j + stencil_offsets[s][1])];
        }
    }
    return sum;
}

namespace {

// Stencil slot for offset (di, dj).
std::size_t slot(int di, int dj)
{
    for (std::size_t s = 0; s < stencil_offsets.size(); ++s) {
        if (stencil_offsets[s][0] == di && stencil_offsets[s][1] == dj) {
            return s;
        }
    }
    return 0;
}

} // namespace

DiscreteOperator build_operator(const EffectiveCoefficients& coefficients, const PdeGrid& grid)
{
    require(grid.n == coefficients.n, ErrorKind::argument, "grid and model dimensions differ");
    DiscreteOperator op;
    op.grid = grid;
    op.coefficients.assign(grid.size() * 9, 0.0);
    const std::size_t n = grid.n;
    std::vector<double> z(n);
    for (std::size_t j = 0; j < grid.count[1]; ++j) {
        for (std::size_t i = 0; i < grid.count[0]; ++i) {
            if (grid.on_boundary(i, j)) {
                continue;
            }
            z[0] = grid.coordinate(0, i);
            if (n == 2) {
                z[1] = grid.coordinate(1, j);
            }
            const auto a = coefficients.covariance(z);
            const auto b = coefficients.drift(z);
            const double rho = coefficients.rho(z);
            double* c = op.coefficients.data() + grid.index(i, j) * 9;
            bool upwinded = false;
            for (std::size_t axis = 0; axis < n; ++axis) {
                const double h = grid.spacing[axis];
                const double diffusion = a[axis * n + axis];
                if (!std::isfinite(diffusion) || diffusion < 0.0 || !std::isfinite(b[axis])) {
                    std::ostringstream msg;
                    msg << "invalid coefficients at node (" << i << ", " << j << "): diffusion " << diffusion
                        << ", drift " << b[axis];
                    fail(ErrorKind::assembly, msg.str());
                }
                const int e0 = axis == 0 ? 1 : 0;
                const int e1 = axis == 1 ? 1 : 0;
                const std::size_t plus = slot(e0, e1);
                const std::size_t minus = slot(-e0, -e1);
                c[plus] += 0.5 * diffusion / (h * h);
                c[minus] += 0.5 * diffusion / (h * h);
                c[0] -= diffusion / (h * h);
                // central differences unless the cell Peclet number |b| h / (a / 2) exceeds 2
                if (std::abs(b[axis]) * h <= diffusion) {
                    c[plus] += 0.5 * b[axis] / h;
                    c[minus] -= 0.5 * b[axis] / h;
                } else {
                    upwinded = true;
                    if (b[axis] > 0.0) {
                        c[plus] += b[axis] / h;
                        c[0] -= b[axis] / h;
                    } else {
                        c[minus] -= b[axis] / h;
                        c[0] += b[axis] / h;
                    }
                }
            }
            if (n == 2) {
                // a12 d2/dz1dz2 with the seven-point stencil matching the sign of a12
                const double a12 = a[1];
                require(std::isfinite(a12), ErrorKind::assembly, "non-finite mixed diffusion");
                const double m = a12 / (2.0 * grid.spacing[0] * grid.spacing[1]);
                if (a12 >= 0.0) {
                    c[slot(1, 1)] += m;
                    c[slot(-1, -1)] += m;
                    c[slot(1, 0)] -= m;
                    c[slot(-1, 0)] -= m;
                    c[slot(0, 1)] -= m;
                    c[slot(0, -1)] -= m;
                    c[0] += 2.0 * m;
                } else {
                    c[slot(1, -1)] -= m;
                    c[slot(-1, 1)] -= m;
                    c[slot(1, 0)] += m;
                    c[slot(-1, 0)] += m;
                    c[slot(0, 1)] += m;
                    c[slot(0, -1)] += m;
                    c[0] -= 2.0 * m;
                }
            }
            c[0] -= rho;
            op.upwinded_nodes += upwinded ? 1 : 0;
        }
    }
    return op;
}

double coordinate_bond(const GalerkinModel& model, double time_to_maturity, std::span<const double> z)
{
    double integral = 0.0;
    for (std::size_t i = 0; i < model.n(); ++i) {
        integral += z[i] * model.basis()[i].integral(time_to_maturity);
    }
    return std::exp(-integral);
}

namespace {

void fill_obstacle(const ValueSurface& surface, std::size_t m, std::span<double> out)
{
    const PdeGrid& grid = surface.grid;
    const std::size_t n = grid.n;
    const double* integrals = surface.phi_integrals.data() + m * n;
    for (std::size_t j = 0; j < grid.count[1]; ++j) {
        for (std::size_t i = 0; i < grid.count[0]; ++i) {
            double exponent = grid.coordinate(0, i) * integrals[0];
            if (n == 2) {
                exponent += grid.coordinate(1, j) * integrals[1];
            }
            out[grid.index(i, j)] = surface.payoff.from_bond(std::exp(-exponent));
        }
    }
}

// One theta step: (I - theta dt L) v = (I + (1 - theta) dt L) next, v >= psi.
StepReport theta_step(const DiscreteOperator& op, std::span<const double> next, std::span<const double> psi,
                      bool constrained, double dt, double theta, const PdeConfig& config, std::span<double> v,
                      double time)
{
    const PdeGrid& grid = op.grid;
    const std::size_t size = grid.size();
    std::vector<double> rhs(size, 0.0);
    for (std::size_t j = 0; j < grid.count[1]; ++j) {
        for (std::size_t i = 0; i < grid.count[0]; ++i) {
            const std::size_t p = grid.index(i, j);
            if (grid.on_boundary(i, j)) {
                v[p] = psi[p];
                continue;
            }
            rhs[p] = next[p] + (1.0 - theta) * dt * op.apply(next, i, j);
            v[p] = constrained ? std::max(next[p], psi[p]) : next[p];
        }
    }
    const std::size_t stencil = grid.n == 1 ? 3 : 9;
    StepReport report;
    double change = 0.0;
    do {
        change = 0.0;
        for (std::size_t j = 0; j < grid.count[1]; ++j) {
            for (std::size_t i = 0; i < grid.count[0]; ++i) {
                if (grid.on_boundary(i, j)) {
                    continue;
                }
                const std::size_t p = grid.index(i, j);
                const double* c = op.coefficients.data() + p * 9;
                double off = 0.0;
                for (std::size_t s = 1; s < stencil; ++s) {
                    if (c[s] != 0.0) {
                        off += c[s] * v[grid.index(i + stencil_offsets[s][0], j + stencil_offsets[s][1])];
                    }
                }
                const double diag = 1.0 - theta * dt * c[0];
                const double gauss_seidel = (rhs[p] + theta * dt * off) / diag;
                double updated = v[p] + config.omega * (gauss_seidel - v[p]);
                if (constrained) {
                    updated = std::max(updated, psi[p]);
                }
                change = std::max(change, std::abs(updated - v[p]));
                v[p] = updated;
            }
        }
        ++report.iterations;
        if (report.iterations >= config.max_iterations && change > config.tol) {
            std::ostringstream msg;
            msg << "projected SOR did not converge at t = " << time << " after " << report.iterations
                << " iterations; last update " << change << " (tol " << config.tol << ")";
            fail(ErrorKind::solver, msg.str());
        }
    } while (change > config.tol);

    for (std::size_t j = 0; j < grid.count[1]; ++j) {
        for (std::size_t i = 0; i < grid.count[0]; ++i) {
            if (grid.on_boundary(i, j)) {
                continue;
            }
            const std::size_t p = grid.index(i, j);
            const double residual = v[p] - theta * dt * op.apply(v, i, j) - rhs[p];
            const double slack = constrained ? v[p] - psi[p] : 1.0;
            report.complementarity = std::max(report.complementarity, std::abs(slack * residual));
        }
    }
    return report;
}

// Bilinear weights of z on the grid; throws outside the box.
struct Stencil {
    std::array<std::size_t, 4> nodes{};
    std::array<double, 4> weights{};
    std::size_t count = 0;
};

Stencil locate(const PdeGrid& grid, std::span<const double> z)
{
    if (z.size() != grid.n) {
        fail(ErrorKind::argument, "coordinates have the wrong dimension");
    }
    if (!grid.contains(z)) {
        std::ostringstream msg;
        msg << "state (" << z[0];
        if (grid.n == 2) {
            msg << ", " << z[1];
        }
        msg << ") lies outside the solved box";
        fail(ErrorKind::extrapolation, msg.str());
    }
    std::array<std::size_t, 2> cell{0, 0};
    std::array<double, 2> frac{0.0, 0.0};
    for (std::size_t a = 0; a < grid.n; ++a) {
        const double u = std::clamp((z[a] - grid.lower[a]) / grid.spacing[a], 0.0,
                                    static_cast<double>(grid.count[a] - 1));
        cell[a] = std::min(static_cast<std::size_t>(u), grid.count[a] - 2);
        frac[a] = u - static_cast<double>(cell[a]);
    }
    Stencil s;
    if (grid.n == 1) {
        s.nodes = {cell[0], cell[0] + 1, 0, 0};
        s.weights = {1.0 - frac[0], frac[0], 0.0, 0.0};
        s.count = 2;
    } else {
        s.nodes = {grid.index(cell[0], cell[1]), grid.index(cell[0] + 1, cell[1]), grid.index(cell[0], cell[1] + 1),
                   grid.index(cell[0] + 1, cell[1] + 1)};
        s.weights = {(1 - frac[0]) * (1 - frac[1]), frac[0] * (1 - frac[1]), (1 - frac[0]) * frac[1], frac[0] * frac[1]};
        s.count = 4;
    }
    return s;
}

double interpolate(std::span<const double> slice, const Stencil& s)
{
    double sum = 0.0;
    for (std::size_t q = 0; q < s.count; ++q) {
        sum += s.weights[q] * slice[s.nodes[q]];
    }
    return sum;
}

// Linear-in-time interpolation of a nodal field at (t, z).
template <class Slice>
double interpolate_surface(const ValueSurface& surface, double t, std::span<const double> z, Slice&& slice)
{
    const PdeGrid& grid = surface.grid;
    const double dt = grid.dt();
    require(t >= grid.t0 - 1e-12 && t <= grid.t_end + 1e-12, ErrorKind::extrapolation,
            "time outside the solved horizon");
    const Stencil s = locate(grid, z);
    const double u = std::clamp((t - grid.t0) / dt, 0.0, static_cast<double>(grid.n_time));
    auto m = static_cast<std::size_t>(std::floor(u + 1e-9));
    m = std::min(m, grid.n_time);
    double frac = u - static_cast<double>(m);
    if (std::abs(frac) < 1e-9 || m == grid.n_time) {
        return interpolate(slice(m), s);
    }
    return (1.0 - frac) * interpolate(slice(m), s) + frac * interpolate(slice(m + 1), s);
}

} // namespace

ValueSurface psor_solve(const DiscreteOperator& op, const PricingProblem& problem,
                        std::shared_ptr<const GalerkinModel> model, std::span<const double> z0, double k,
                        const PdeConfig& config)
{
    config.validate();
    problem.validate();
    const PdeGrid& grid = op.grid;
    require(model != nullptr && model->n() == grid.n, ErrorKind::argument, "model does not match the grid");
    const std::size_t size = grid.size();
    const std::size_t slices = grid.n_time + 1;

    ValueSurface surface;
    surface.grid = grid;
    surface.z0.assign(z0.begin(), z0.end());
    surface.strike = problem.strike;
    surface.maturity = problem.maturity;
    surface.tol_gap = 1e-6 * problem.strike;
    surface.model = model;
    surface.payoff = MollifiedPayoff(problem.strike, k);
    surface.values.assign(slices * size, 0.0);
    surface.obstacle.assign(slices * size, 0.0);
    surface.exercise.assign(slices * size, 0);
    surface.steps.assign(slices, StepReport{});
    surface.boundary.assign(slices, std::numeric_limits<double>::quiet_NaN());
    surface.phi_integrals.assign(slices * grid.n, 0.0);
    for (std::size_t m = 0; m < slices; ++m) {
        for (std::size_t i = 0; i < grid.n; ++i) {
            surface.phi_integrals[m * grid.n + i] = model->basis()[i].integral(problem.maturity - grid.time(m));
        }
        fill_obstacle(surface, m, std::span<double>(surface.obstacle.data() + m * size, size));
    }

    auto value_slice = [&](std::size_t m) { return std::span<double>(surface.values.data() + m * size, size); };
    const auto terminal = surface.obstacle_slice(grid.n_time);
    std::copy(terminal.begin(), terminal.end(), value_slice(grid.n_time).begin());

    const double dt = grid.dt();
    const bool constrained = !config.european;
    for (std::size_t m = grid.n_time; m-- > 0;) {
        const auto psi = surface.obstacle_slice(m);
        auto v = value_slice(m);
        const auto next = surface.slice(m + 1);
        StepReport report;
        if (config.rannacher && m + 1 == grid.n_time) {
            // two implicit Euler half steps; the midpoint obstacle is approximated by psi(t_m)
            std::vector<double> half(size);
            const auto first = theta_step(op, next, psi, constrained, 0.5 * dt, 1.0, config, half, grid.time(m) + 0.5 * dt);
            report = theta_step(op, half, psi, constrained, 0.5 * dt, 1.0, config, v, grid.time(m));
            report.iterations += first.iterations;
            report.complementarity = std::max(report.complementarity, first.complementarity);
        } else {
            report = theta_step(op, next, psi, constrained, dt, 0.5, config, v, grid.time(m));
        }
        if (!constrained) {
            // boundary rows still carry the obstacle; inside no constraint applies
            report.complementarity = 0.0;
        }
        surface.steps[m] = report;
    }

    // exercise region and boundary trace
    const std::size_t row = grid.n == 2
        ? static_cast<std::size_t>(std::clamp(std::round((z0[1] - grid.lower[1]) / grid.spacing[1]), 0.0,
                                              static_cast<double>(grid.count[1] - 1)))
        : 0;
    for (std::size_t m = 0; m < slices; ++m) {
        const auto v = surface.slice(m);
        const auto psi = surface.obstacle_slice(m);
        for (std::size_t p = 0; p < size; ++p) {
            const bool stop = (constrained || m == grid.n_time) && v[p] - psi[p] <= surface.tol_gap && psi[p] > 0.0;
            surface.exercise[m * size + p] = stop ? 1 : 0;
        }
        for (std::size_t i = 0; i < grid.count[0]; ++i) {
            if (surface.exercise[m * size + grid.index(i, row)]) {
                surface.boundary[m] = grid.coordinate(0, i);
                break;
            }
        }
    }
    return surface;
}

double ValueSurface::price() const { return value(grid.t0, z0); }

double ValueSurface::value(double t, std::span<const double> z) const
{
    return interpolate_surface(*this, t, z, [this](std::size_t m) { return slice(m); });
}

double ValueSurface::gap(double t, std::span<const double> z) const
{
    return value(t, z) - interpolate_surface(*this, t, z, [this](std::size_t m) { return obstacle_slice(m); });
}

double ValueSurface::obstacle_at(double t, std::span<const double> z) const
{
    require(z.size() == grid.n, ErrorKind::argument, "coordinates have the wrong dimension");
    return payoff.from_bond(coordinate_bond(*model, maturity - t, z));
}

std::size_t ValueSurface::total_iterations() const
{
    std::size_t total = 0;
    for (const auto& s : steps) {
        total += s.iterations;
    }
    return total;
}

double ValueSurface::max_complementarity() const
{
    double worst = 0.0;
    for (const auto& s : steps) {
        worst = std::max(worst, s.complementarity);
    }
    return worst;
}

ValueSurface solve_pde(const PricingProblem& problem, const VolatilityModel& volatility,
                       std::shared_ptr<const BasisSet> basis, const ChainConfig& chain, const PdeConfig& config)
{
    problem.validate();
    chain.validate();
    config.validate();
    require(basis != nullptr, ErrorKind::argument, "missing basis");
    require(basis->grid_ptr()->same_as(problem.initial.grid()), ErrorKind::argument,
            "initial curve and basis live on different grids");
    volatility.validate(problem.initial.grid());
    if (chain.n > 2) {
        fail(ErrorKind::unsupported_dimension,
             "the obstacle solver supports n <= 2, got n = " + std::to_string(chain.n));
    }
    auto model = std::make_shared<const GalerkinModel>(chain.n, chain.alpha, chain.epsilon(), volatility, basis);
    const auto coefficients = effective_coefficients(model);
    const auto z0 = basis->coordinates(problem.initial, chain.n);
    const auto grid = make_pde_grid(coefficients, z0, problem.t0, problem.exercise_end(), config);
    const auto op = build_operator(coefficients, grid);
    return psor_solve(op, problem, model, z0, chain.k, config);
}

double boundary_layer_indicator(const PricingProblem& problem, const VolatilityModel& volatility,
                                std::shared_ptr<const BasisSet> basis, const ChainConfig& chain,
                                const PdeConfig& config)
{
    const double base = solve_pde(problem, volatility, basis, chain, config).price();
    // about 1.25 times wider with the same spacing and z0 still on a node, so
    // only the truncation changes
    PdeConfig wide = config;
    const auto intervals = static_cast<double>(config.n_state - 1);
    const double wide_intervals = 2.0 * std::round(0.625 * intervals);
    wide.n_state = static_cast<std::size_t>(wide_intervals) + 1;
    wide.width_scale *= wide_intervals / intervals;
    return std::abs(solve_pde(problem, volatility, basis, chain, wide).price() - base);
}

double value_at(const ValueSurface& surface, double t, const ForwardCurve& h)
{
    const auto z = surface.model->basis().coordinates(h, surface.grid.n);
    return surface.value(t, z);
}

bool ExerciseRule::stop(double t, std::span<const double> z) const
{
    const PdeGrid& grid = m_surface->grid;
    if (t >= grid.t_end - 1e-12 || outside(z)) {
        return true;
    }
    return m_surface->gap(t, z) <= m_surface->tol_gap && m_surface->obstacle_at(t, z) > 0.0;
}

ExerciseRule exercise_rule(const ValueSurface& surface) { return ExerciseRule(surface); }

void write_surface_csv(const std::filesystem::path& path, const ValueSurface& surface, std::size_t time_stride)
{
    const PdeGrid& grid = surface.grid;
    if (time_stride == 0) {
        time_stride = std::max<std::size_t>(1, grid.n_time / 20);
    }
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    out << (grid.n == 2 ? "t,z1,z2,V,Psi,exercised\n" : "t,z1,V,Psi,exercised\n");
    out.precision(12);
    std::vector<std::size_t> slices;
    for (std::size_t m = 0; m < grid.n_time; m += time_stride) {
        slices.push_back(m);
    }
    slices.push_back(grid.n_time);
    for (std::size_t m : slices) {
        const auto v = surface.slice(m);
        const auto psi = surface.obstacle_slice(m);
        for (std::size_t j = 0; j < grid.count[1]; ++j) {
            for (std::size_t i = 0; i < grid.count[0]; ++i) {
                const std::size_t p = grid.index(i, j);
                out << grid.time(m) << ',' << grid.coordinate(0, i) << ',';
                if (grid.n == 2) {
                    out << grid.coordinate(1, j) << ',';
                }
                out << v[p] << ',' << psi[p] << ',' << int(surface.exercise[m * grid.size() + p]) << '\n';
            }
        }
    }
}

void write_boundary_csv(const std::filesystem::path& path, const ValueSurface& surface)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    out << "t,z1_boundary\n";
    out.precision(12);
    for (std::size_t m = 0; m <= surface.grid.n_time; ++m) {
        out << surface.grid.time(m) << ',';
        if (!std::isnan(surface.boundary[m])) {
            out << surface.boundary[m];
        }
        out << '\n';
    }
}

nlohmann::json surface_summary(const ValueSurface& surface)
{
    const PdeGrid& grid = surface.grid;
    nlohmann::json boundary = nlohmann::json::array();
    for (std::size_t m = 0; m <= grid.n_time; ++m) {
        boundary.push_back({{"t", grid.time(m)},
                            {"z1", std::isnan(surface.boundary[m]) ? nlohmann::json(nullptr)
                                                                   : nlohmann::json(surface.boundary[m])}});
    }
    nlohmann::json box = nlohmann::json::array();
    for (std::size_t a = 0; a < grid.n; ++a) {
        box.push_back({{"lower", grid.lower[a]}, {"upper", grid.upper(a)}, {"nodes", grid.count[a]}});
    }
    return {
        {"price", surface.price()},
        {"t0", grid.t0},
        {"z0", surface.z0},
        {"n", grid.n},
        {"n_time", grid.n_time},
        {"box", box},
        {"k", surface.payoff.k()},
        {"psor_iterations", surface.total_iterations()},
        {"max_complementarity", surface.max_complementarity()},
        {"boundary", boundary},
    };
}

} // namespace hjm
