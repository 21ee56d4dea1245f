#include <hjm/curve_space.hpp>
#include <hjm/error.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace hjm {

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::invalid_curve: return "invalid-curve";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::argument: return "argument";
    case ErrorKind::contract: return "contract";
    case ErrorKind::basis_construction: return "basis-construction";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::assembly: return "assembly";
    case ErrorKind::solver: return "solver";
    case ErrorKind::extrapolation: return "extrapolation";
    case ErrorKind::unsupported_dimension: return "unsupported-dimension";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// SpaceConfig / Grid
// ---------------------------------------------------------------------------

std::vector<double> geometric_eigenvalues(std::size_t count)
{
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = std::ldexp(1.0, -static_cast<int>(i + 1));
    }
    return out;
}

void SpaceConfig::validate() const
{
    require(std::isfinite(w_exponent) && w_exponent > 3.0, ErrorKind::configuration,
            "w_exponent must exceed 3 so that w^{-1/3} is integrable");
    require(std::isfinite(x_max) && x_max > 0.0, ErrorKind::configuration, "x_max must be positive");
    require(n_x >= 2, ErrorKind::configuration, "n_x must be at least 2");
    require(basis_size >= 1, ErrorKind::configuration, "basis_size must be at least 1");
    if (!q_eigenvalues.empty()) {
        require(q_eigenvalues.size() >= basis_size, ErrorKind::configuration,
                "need one covariance eigenvalue per basis function");
        double previous = q_eigenvalues.front();
        for (double lambda : q_eigenvalues) {
            require(std::isfinite(lambda) && lambda > 0.0, ErrorKind::configuration,
                    "covariance eigenvalues must be strictly positive");
            require(lambda <= previous, ErrorKind::configuration, "covariance eigenvalues must be non-increasing");
            previous = lambda;
        }
    }
}

void SpaceConfig::validate_horizon(double maturity) const
{
    require(x_max >= maturity + 1.0, ErrorKind::configuration,
            "x_max must be at least T + 1 so shifted curves stay on the grid");
}

double SpaceConfig::eigenvalue(std::size_t index) const
{
    if (index < q_eigenvalues.size()) {
        return q_eigenvalues[index];
    }
    return std::ldexp(1.0, -static_cast<int>(index + 1));
}

Grid::Grid(SpaceConfig config)
    : m_config(std::move(config))
{
    m_config.validate();
    m_dx = m_config.x_max / static_cast<double>(m_config.n_x - 1);
    m_nodes.resize(m_config.n_x);
    m_weights.resize(m_config.n_x);
    for (std::size_t j = 0; j < m_config.n_x; ++j) {
        m_nodes[j] = m_dx * static_cast<double>(j);
        m_weights[j] = weight(m_nodes[j]);
    }
    m_nodes.back() = m_config.x_max;
}

std::shared_ptr<const Grid> Grid::make(SpaceConfig config)
{
    return std::make_shared<const Grid>(std::move(config));
}

double Grid::weight(double x) const { return std::pow(1.0 + x, m_config.w_exponent); }

bool Grid::same_as(const Grid& other) const
{
    return this == &other
        || (m_config.n_x == other.m_config.n_x && m_config.x_max == other.m_config.x_max
            && m_config.w_exponent == other.m_config.w_exponent);
}

// ---------------------------------------------------------------------------
// ForwardCurve
// ---------------------------------------------------------------------------

ForwardCurve::ForwardCurve(GridPtr grid, std::vector<double> values)
    : m_grid(std::move(grid)), m_values(std::move(values))
{
    require(m_grid != nullptr, ErrorKind::argument, "curve requires a grid");
    require(m_values.size() == m_grid->size(), ErrorKind::invalid_curve, "curve length does not match grid");
    for (double v : m_values) {
        require(std::isfinite(v), ErrorKind::invalid_curve, "curve has a non-finite node value");
    }
}

ForwardCurve ForwardCurve::constant(GridPtr grid, double level)
{
    const std::size_t n = grid->size();
    return ForwardCurve(std::move(grid), std::vector<double>(n, level));
}

ForwardCurve ForwardCurve::from_function(GridPtr grid, const std::function<double(double)>& f)
{
    std::vector<double> values(grid->size());
    for (std::size_t j = 0; j < values.size(); ++j) {
        values[j] = f(grid->node(j));
    }
    return ForwardCurve(std::move(grid), std::move(values));
}

double ForwardCurve::at(double x) const
{
    const double dx = m_grid->spacing();
    const std::size_t last = m_values.size() - 1;
    if (x <= 0.0) {
        return m_values.front();
    }
    if (x >= m_grid->x_max()) {
        return m_values.back();
    }
    const double pos = x / dx;
    double cell = std::floor(pos);
    double frac = pos - cell;
    // snap to nodes so that grid-aligned shifts are exact
    if (frac > 1.0 - 1e-9) {
        cell += 1.0;
        frac = 0.0;
    } else if (frac < 1e-9) {
        frac = 0.0;
    }
    const auto j = std::min(static_cast<std::size_t>(cell), last);
    if (frac == 0.0 || j == last) {
        return m_values[j];
    }
    return m_values[j] + frac * (m_values[j + 1] - m_values[j]);
}

double ForwardCurve::integral(double upper) const
{
    if (upper <= 0.0) {
        return 0.0;
    }
    const double dx = m_grid->spacing();
    const std::size_t last = m_values.size() - 1;
    double sum = 0.0;
    std::size_t j = 0;
    double x = 0.0;
    while (j < last && m_grid->node(j + 1) <= upper + 1e-12 * dx) {
        sum += 0.5 * dx * (m_values[j] + m_values[j + 1]);
        ++j;
        x = m_grid->node(j);
    }
    if (upper > x) {
        const double end_value = at(upper);
        const double start_value = m_values[j];
        if (j < last) {
            sum += 0.5 * (upper - x) * (start_value + end_value);
        } else {
            sum += (upper - x) * m_values.back();
        }
    }
    return sum;
}

void ForwardCurve::check_compatible(const ForwardCurve& other) const
{
    require(m_grid->same_as(*other.m_grid), ErrorKind::argument, "curves live on different grids");
}

ForwardCurve& ForwardCurve::operator+=(const ForwardCurve& other)
{
    check_compatible(other);
    for (std::size_t j = 0; j < m_values.size(); ++j) {
        m_values[j] += other.m_values[j];
    }
    return *this;
}

ForwardCurve& ForwardCurve::operator-=(const ForwardCurve& other)
{
    check_compatible(other);
    for (std::size_t j = 0; j < m_values.size(); ++j) {
        m_values[j] -= other.m_values[j];
    }
    return *this;
}

ForwardCurve& ForwardCurve::operator*=(double factor)
{
    for (double& v : m_values) {
        v *= factor;
    }
    return *this;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

namespace {

void differentiate(std::span<const double> h, double dx, std::span<double> out)
{
    const std::size_t n = h.size();
    if (n == 2) {
        out[0] = out[1] = (h[1] - h[0]) / dx;
        return;
    }
    const double inv = 0.5 / dx;
    out[0] = (-3.0 * h[0] + 4.0 * h[1] - h[2]) * inv;
    for (std::size_t j = 1; j + 1 < n; ++j) {
        out[j] = (h[j + 1] - h[j - 1]) * inv;
    }
    out[n - 1] = (3.0 * h[n - 1] - 4.0 * h[n - 2] + h[n - 3]) * inv;
}

// Trapezoid weights times w(x_j).
std::vector<double> weighted_trapezoid(const Grid& grid)
{
    std::vector<double> tw(grid.size());
    const auto w = grid.weights();
    for (std::size_t j = 0; j < tw.size(); ++j) {
        const double end_factor = (j == 0 || j + 1 == tw.size()) ? 0.5 : 1.0;
        tw[j] = end_factor * grid.spacing() * w[j];
    }
    return tw;
}

} // namespace

ForwardCurve derivative(const ForwardCurve& h)
{
    std::vector<double> out(h.size());
    differentiate(h.values(), h.grid().spacing(), out);
    return ForwardCurve(h.grid_ptr(), std::move(out));
}

double inner_w(const ForwardCurve& f, const ForwardCurve& g)
{
    require(f.grid().same_as(g.grid()), ErrorKind::argument, "curves live on different grids");
    const std::size_t n = f.size();
    std::vector<double> df(n), dg(n);
    differentiate(f.values(), f.grid().spacing(), df);
    differentiate(g.values(), g.grid().spacing(), dg);
    const auto w = f.grid().weights();
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double end_factor = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
        sum += end_factor * df[j] * dg[j] * w[j];
    }
    return f[0] * g[0] + f.grid().spacing() * sum;
}

double norm_w(const ForwardCurve& h) { return std::sqrt(std::max(0.0, inner_w(h, h))); }

double sup_bound_constant(const SpaceConfig& config)
{
    require(config.w_exponent > 3.0, ErrorKind::configuration,
            "sup-norm injection needs w_exponent > 3");
    // int_0^inf (1+x)^{-p} dx = 1/(p-1)
    return std::sqrt(1.0 + 1.0 / (config.w_exponent - 1.0));
}

// ---------------------------------------------------------------------------
// Semigroup and resolvent
// ---------------------------------------------------------------------------

ForwardCurve shift(const ForwardCurve& h, double dt)
{
    require(dt >= 0.0 && std::isfinite(dt), ErrorKind::argument, "shift requires dt >= 0");
    if (dt == 0.0) {
        return h;
    }
    const Grid& grid = h.grid();
    std::vector<double> out(h.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = h.at(grid.node(j) + dt);
    }
    return ForwardCurve(h.grid_ptr(), std::move(out));
}

namespace {

// m_p(u) = int_0^1 t^p e^{-u t} dt for p = 0, 1, 2.
struct ExpMoments {
    double m0, m1, m2;
};

ExpMoments exp_moments(double u)
{
    if (u < 0.5) {
        ExpMoments m{0.0, 0.0, 0.0};
        double term = 1.0; // (-u)^k / k!
        for (int k = 0; k < 30; ++k) {
            m.m0 += term / (k + 1);
            m.m1 += term / (k + 2);
            m.m2 += term / (k + 3);
            term *= -u / (k + 1);
            if (std::abs(term) < 1e-18) {
                break;
            }
        }
        return m;
    }
    const double e = std::exp(-u);
    return {(1.0 - e) / u, (1.0 - e * (1.0 + u)) / (u * u), (2.0 - e * (2.0 + 2.0 * u + u * u)) / (u * u * u)};
}

} // namespace

ForwardCurve resolvent(const ForwardCurve& h, double alpha)
{
    require(alpha > 0.0 && std::isfinite(alpha), ErrorKind::argument, "Yosida parameter must be positive");
    const auto v = h.values();
    const std::size_t n = v.size();
    const double d = h.grid().spacing();

    // Second-difference estimate for the curvature correction on each panel.
    std::vector<double> curvature(n, 0.0);
    if (n >= 3) {
        for (std::size_t j = 1; j + 1 < n; ++j) {
            curvature[j] = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (d * d);
        }
        curvature[0] = curvature[1];
        curvature[n - 1] = curvature[n - 2];
    }

    const ExpMoments m = exp_moments(alpha * d);
    const double M0 = d * m.m0;
    const double M1 = d * d * m.m1;
    const double M2 = d * d * d * m.m2;
    const double decay = std::exp(-alpha * d);

    // Product integration of the locally quadratic interpolant against the kernel;
    // the tail beyond x_max uses the constant extension exactly.
    std::vector<double> g(n);
    g[n - 1] = v[n - 1] / alpha;
    for (std::size_t jj = n - 1; jj-- > 0;) {
        const double c = 0.5 * (curvature[jj] + curvature[jj + 1]);
        const double panel = v[jj] * M0 + (v[jj + 1] - v[jj]) / d * M1 + 0.5 * c * (M2 - d * M1);
        g[jj] = panel + decay * g[jj + 1];
    }
    return ForwardCurve(h.grid_ptr(), std::move(g));
}

ForwardCurve yosida_apply(const ForwardCurve& h, double alpha)
{
    ForwardCurve g = resolvent(h, alpha);
    std::vector<double> out(h.size());
    const auto gv = g.values();
    const auto hv = h.values();
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = alpha * (alpha * gv[j] - hv[j]);
    }
    return ForwardCurve(h.grid_ptr(), std::move(out));
}

// ---------------------------------------------------------------------------
// Basis
// ---------------------------------------------------------------------------

BasisSet::BasisSet(GridPtr grid, std::vector<ForwardCurve> functions, double gram_residual)
    : m_grid(std::move(grid)), m_functions(std::move(functions)), m_gram_residual(gram_residual)
{
    // <h, phi>_w = h_0 phi(0) + sum_j tw_j (D h)_j (D phi)_j is linear in h; store
    // the functional as D^T (tw .* D phi) + phi(0) e_0.
    const std::size_t n = m_grid->size();
    const double dx = m_grid->spacing();
    const std::vector<double> tw = weighted_trapezoid(*m_grid);
    std::vector<double> dphi(n);
    for (const auto& phi : m_functions) {
        differentiate(phi.values(), dx, dphi);
        std::vector<double> a(n);
        for (std::size_t j = 0; j < n; ++j) {
            a[j] = tw[j] * dphi[j];
        }
        std::vector<double> ell(n, 0.0);
        if (n == 2) {
            const double s = (a[0] + a[1]) / dx;
            ell[0] -= s;
            ell[1] += s;
        } else {
            const double inv = 0.5 / dx;
            ell[0] += -3.0 * inv * a[0];
            ell[1] += 4.0 * inv * a[0];
            ell[2] += -1.0 * inv * a[0];
            for (std::size_t j = 1; j + 1 < n; ++j) {
                ell[j + 1] += inv * a[j];
                ell[j - 1] -= inv * a[j];
            }
            ell[n - 1] += 3.0 * inv * a[n - 1];
            ell[n - 2] += -4.0 * inv * a[n - 1];
            ell[n - 3] += 1.0 * inv * a[n - 1];
        }
        ell[0] += phi[0];
        m_functionals.push_back(std::move(ell));
    }
}

double BasisSet::coordinate(const ForwardCurve& h, std::size_t i) const
{
    require(i < m_functions.size(), ErrorKind::argument, "basis index out of range");
    require(h.grid().same_as(*m_grid), ErrorKind::argument, "curve and basis live on different grids");
    const auto& ell = m_functionals[i];
    const auto v = h.values();
    double sum = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        sum += ell[j] * v[j];
    }
    return sum;
}

std::vector<double> BasisSet::coordinates(const ForwardCurve& h, std::size_t n) const
{
    require(n <= m_functions.size(), ErrorKind::argument, "projection dimension exceeds basis size");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = coordinate(h, i);
    }
    return out;
}

ForwardCurve BasisSet::reconstruct(std::span<const double> coefficients) const
{
    require(coefficients.size() <= m_functions.size(), ErrorKind::argument,
            "more coefficients than basis functions");
    std::vector<double> out(m_grid->size(), 0.0);
    for (std::size_t i = 0; i < coefficients.size(); ++i) {
        const auto phi = m_functions[i].values();
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] += coefficients[i] * phi[j];
        }
    }
    return ForwardCurve(m_grid, std::move(out));
}

BasisSet build_basis(const GridPtr& grid)
{
    const std::size_t size = grid->config().basis_size;
    require(size >= 1, ErrorKind::argument, "basis_size must be at least 1");

    std::vector<ForwardCurve> generators;
    generators.push_back(ForwardCurve::constant(grid, 1.0));
    for (std::size_t k = 0; generators.size() < size; ++k) {
        const double power = static_cast<double>(k);
        generators.push_back(ForwardCurve::from_function(
            grid, [power](double x) { return std::pow(x, power) * std::exp(-x); }));
    }

    // Modified Gram-Schmidt, applied twice for numerical orthogonality.
    std::vector<ForwardCurve> basis;
    for (auto& g : generators) {
        const double original = norm_w(g);
        ForwardCurve v = g;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& phi : basis) {
                v -= inner_w(v, phi) * phi;
            }
        }
        const double remaining = norm_w(v);
        require(remaining > 1e-10 * original, ErrorKind::basis_construction,
                "basis generators are numerically dependent on this grid");
        v *= 1.0 / remaining;
        basis.push_back(std::move(v));
    }

    double residual = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double target = (i == j) ? 1.0 : 0.0;
            residual = std::max(residual, std::abs(inner_w(basis[i], basis[j]) - target));
        }
    }
    require(residual <= 1e-6, ErrorKind::basis_construction,
            "Gram residual " + std::to_string(residual) + " exceeds 1e-6");
    return BasisSet(grid, std::move(basis), residual);
}

ForwardCurve project(const ForwardCurve& h, std::size_t n, const BasisSet& basis)
{
    require(n <= basis.size(), ErrorKind::argument, "projection dimension exceeds basis size");
    const auto coefficients = basis.coordinates(h, n);
    return basis.reconstruct(coefficients);
}

std::vector<double> sample_gaussian_coordinates(std::size_t n, const SpaceConfig& config, Rng& rng)
{
    std::normal_distribution<double> normal;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = normal(rng) * std::sqrt(config.eigenvalue(i));
    }
    return out;
}

ForwardCurve sample_gaussian(std::size_t n, const BasisSet& basis, std::uint64_t seed)
{
    require(n <= basis.size(), ErrorKind::argument, "sample dimension exceeds basis size");
    Rng rng = make_rng(seed);
    const auto coefficients = sample_gaussian_coordinates(n, basis.grid_ptr()->config(), rng);
    return basis.reconstruct(coefficients);
}

double trace_condition(const BasisSet& basis)
{
    const SpaceConfig& config = basis.grid_ptr()->config();
    double sum = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const double n = norm_w(derivative(basis[i]));
        sum += config.eigenvalue(i) * n * n;
    }
    return sum;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

ForwardCurve read_curve_csv(const std::filesystem::path& path, const GridPtr& grid)
{
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "curve file not found: " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    require(line == "x,rate", ErrorKind::io, "curve file must start with header \"x,rate\"");

    std::vector<double> xs, rates;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        std::istringstream row(line);
        std::string xs_field, rate_field;
        if (!std::getline(row, xs_field, ',') || !std::getline(row, rate_field)) {
            fail(ErrorKind::io, "malformed curve row: " + line);
        }
        try {
            xs.push_back(std::stod(xs_field));
            rates.push_back(std::stod(rate_field));
        } catch (const std::exception&) {
            fail(ErrorKind::io, "malformed curve row: " + line);
        }
        if (xs.size() > 1) {
            require(xs.back() > xs[xs.size() - 2], ErrorKind::io, "curve maturities must increase");
        }
    }
    require(!xs.empty(), ErrorKind::io, "curve file has no rows");

    return ForwardCurve::from_function(grid, [&](double x) {
        if (x <= xs.front()) {
            return rates.front();
        }
        if (x >= xs.back()) {
            return rates.back();
        }
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
        const std::size_t lo = hi - 1;
        const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
        return rates[lo] + t * (rates[hi] - rates[lo]);
    });
}

void write_curve_csv(const std::filesystem::path& path, const ForwardCurve& h)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write curve file: " + path.string());
    out << "x,rate\n";
    out.precision(17);
    for (std::size_t j = 0; j < h.size(); ++j) {
        out << h.grid().node(j) << ',' << h[j] << '\n';
    }
}

} // namespace hjm
