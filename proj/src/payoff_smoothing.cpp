#include <hjm/error.hpp>
#include <hjm/payoff_smoothing.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>

namespace hjm {

namespace {

double raw_bump(double y)
{
    const double q = 1.0 - y * y;
    return q > 0.0 ? std::exp(-1.0 / q) : 0.0;
}

// Tabulated G(s) = int rho(u) (s - u)^+ du and G'(s) = int_{-1}^s rho on [-1, 1].
class KernelTable {
public:
    static constexpr std::size_t nodes = 4096;

    KernelTable() : m_value(nodes), m_slope(nodes)
    {
        using boost::math::quadrature::gauss_kronrod;
        const double c = bump_normalizer();
        m_h = 2.0 / static_cast<double>(nodes - 1);
        double mass = 0.0;
        double moment = 0.0;
        m_value[0] = 0.0;
        m_slope[0] = 0.0;
        for (std::size_t i = 1; i < nodes; ++i) {
            const double a = node(i - 1);
            const double b = node(i);
            mass += gauss_kronrod<double, 15>::integrate([c](double u) { return c * raw_bump(u); }, a, b, 0);
            moment += gauss_kronrod<double, 15>::integrate([c](double u) { return c * u * raw_bump(u); }, a, b, 0);
            m_slope[i] = mass;
            m_value[i] = b * mass - moment;
        }
        // pin the right end to the exact limits G(1) = 1, G'(1) = 1 (zero first moment)
        m_slope.back() = 1.0;
        m_value.back() = 1.0;
    }

    double node(std::size_t i) const { return -1.0 + m_h * static_cast<double>(i); }

    double value(double s) const
    {
        std::size_t i;
        double t;
        locate(s, i, t);
        const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
        const double h10 = t * (1 - t) * (1 - t);
        const double h01 = t * t * (3 - 2 * t);
        const double h11 = t * t * (t - 1);
        return h00 * m_value[i] + h10 * m_h * m_slope[i] + h01 * m_value[i + 1] + h11 * m_h * m_slope[i + 1];
    }

    double slope(double s) const
    {
        std::size_t i;
        double t;
        locate(s, i, t);
        const double d00 = 6 * t * (t - 1);
        const double d10 = (1 - t) * (1 - 3 * t);
        const double d11 = t * (3 * t - 2);
        return (d00 * (m_value[i] - m_value[i + 1])) / m_h + d10 * m_slope[i] + d11 * m_slope[i + 1];
    }

private:
    void locate(double s, std::size_t& i, double& t) const
    {
        const double u = (s + 1.0) / m_h;
        i = std::min(static_cast<std::size_t>(std::max(u, 0.0)), nodes - 2);
        t = u - static_cast<double>(i);
    }

    double m_h;
    std::vector<double> m_value;
    std::vector<double> m_slope;
};

const KernelTable& kernel_table()
{
    static const KernelTable table;
    return table;
}

// rho_k * [.]^+ and its derivative.
double smooth_positive_part(double z, double k)
{
    const double s = k * z;
    if (s <= -1.0) {
        return 0.0;
    }
    if (s >= 1.0) {
        return z;
    }
    return kernel_table().value(s) / k;
}

double smooth_step(double z, double k)
{
    const double s = k * z;
    if (s <= -1.0) {
        return 0.0;
    }
    if (s >= 1.0) {
        return 1.0;
    }
    return std::clamp(kernel_table().slope(s), 0.0, 1.0);
}

} // namespace

double bump_normalizer()
{
    static const double c = [] {
        boost::math::quadrature::tanh_sinh<double> integrator;
        return 1.0 / integrator.integrate(raw_bump, -1.0, 1.0, 1e-14);
    }();
    return c;
}

double unit_mollifier(double y) { return bump_normalizer() * raw_bump(y); }

MollifiedPayoff::MollifiedPayoff(double strike, double k) : m_strike(strike), m_k(k)
{
    require(std::isfinite(k) && k >= 1.0, ErrorKind::argument, "smoothing index k must be >= 1");
    validate_strike(strike);
    kernel_table();
}

double MollifiedPayoff::g(double z) const
{
    return std::clamp(smooth_positive_part(z, m_k) - smooth_positive_part(z - m_strike, m_k), 0.0, m_strike);
}

double MollifiedPayoff::dg(double z) const { return smooth_step(z, m_k) - smooth_step(z - m_strike, m_k); }

double MollifiedPayoff::operator()(const PathState& state, double maturity) const
{
    return from_bond(bond_price(state, maturity));
}

double MollifiedPayoff::time_derivative(const PathState& state, double maturity) const
{
    const double bond = bond_price(state, maturity);
    return dg(m_strike - bond) * (-bond * state.curve.at(maturity - state.t));
}

double mollified_payoff(const PathState& state, double strike, double maturity, double k)
{
    return MollifiedPayoff(strike, k)(state, maturity);
}

LpEstimate lp_mu_norm(const std::function<double(const ForwardCurve&)>& f, double p, std::size_t n,
                      const BasisSet& basis, std::size_t n_samples, std::uint64_t seed)
{
    require(std::isfinite(p) && p >= 1.0, ErrorKind::argument, "p must be >= 1");
    require(n <= basis.size(), ErrorKind::argument, "sample dimension exceeds basis size");
    require(n_samples >= 2, ErrorKind::argument, "need at least two samples");
    Rng rng = make_rng(seed);
    const SpaceConfig& config = basis.grid_ptr()->config();
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const auto coefficients = sample_gaussian_coordinates(n, config, rng);
        const double y = std::pow(std::abs(f(basis.reconstruct(coefficients))), p);
        sum += y;
        sum_sq += y * y;
    }
    const double count = static_cast<double>(n_samples);
    const double mean = sum / count;
    const double var = std::max(0.0, (sum_sq - count * mean * mean) / (count - 1.0));
    LpEstimate out;
    out.value = std::pow(mean, 1.0 / p);
    if (mean > 0.0) {
        out.std_error = out.value / (p * mean) * std::sqrt(var / count);
    }
    return out;
}

} // namespace hjm
