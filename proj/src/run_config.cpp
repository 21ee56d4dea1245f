#include <hjm/error.hpp>
#include <hjm/run_config.hpp>

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hjm {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void syntax(std::size_t line, const std::string& what)
{
    fail(ErrorKind::configuration, "config line " + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& text, std::size_t line)
{
    std::string digits;
    for (char c : text) {
        if (c != '_') {
            digits.push_back(c);
        }
    }
    if (!digits.empty() && digits.front() == '+') {
        digits.erase(0, 1);
    }
    double value = 0.0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || end != digits.data() + digits.size() || digits.empty()) {
        syntax(line, "cannot parse value '" + text + "'");
    }
    return value;
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line)
{
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') {
            quoted = !quoted;
        } else if (line[i] == '#' && !quoted) {
            return line.substr(0, i);
        }
    }
    return line;
}

TomlValue parse_value(const std::string& text, std::size_t line)
{
    if (text.empty()) {
        syntax(line, "missing value");
    }
    if (text.front() == '"') {
        if (text.size() < 2 || text.back() != '"') {
            syntax(line, "unterminated string");
        }
        return text.substr(1, text.size() - 2);
    }
    if (text == "true" || text == "false") {
        return text == "true";
    }
    if (text.front() == '[') {
        if (text.back() != ']') {
            syntax(line, "unterminated array");
        }
        std::vector<double> values;
        std::stringstream items(text.substr(1, text.size() - 2));
        for (std::string item; std::getline(items, item, ',');) {
            item = trim(item);
            if (!item.empty()) {
                values.push_back(parse_number(item, line));
            }
        }
        return values;
    }
    return parse_number(text, line);
}

// Typed, schema-checked access to one section.
class Section {
public:
    Section(const TomlTable& table, const std::string& name) : m_name(name)
    {
        const auto it = table.find(name);
        if (it != table.end()) {
            m_values = &it->second;
        }
    }

    ~Section() noexcept(false)
    {
        if (m_values == nullptr || std::uncaught_exceptions() > 0) {
            return;
        }
        for (const auto& [key, value] : *m_values) {
            if (!m_known.count(key)) {
                fail(ErrorKind::configuration, "unknown key '" + qualified(key) + "'");
            }
        }
    }

    void number(const std::string& key, double& out) { read(key, out, "a number"); }
    void flag(const std::string& key, bool& out) { read(key, out, "a boolean"); }
    void text(const std::string& key, std::string& out) { read(key, out, "a string"); }
    void list(const std::string& key, std::vector<double>& out) { read(key, out, "an array of numbers"); }

    void count(const std::string& key, std::size_t& out)
    {
        double value = static_cast<double>(out);
        number(key, value);
        require(value >= 0.0 && value == std::floor(value) && value < 1e15, ErrorKind::configuration,
                "'" + qualified(key) + "' must be a nonnegative integer");
        out = static_cast<std::size_t>(value);
    }

    void optional_number(const std::string& key, std::optional<double>& out)
    {
        if (has(key)) {
            double value = 0.0;
            number(key, value);
            out = value;
        } else {
            m_known.insert(key);
        }
    }

    bool has(const std::string& key) const { return m_values != nullptr && m_values->count(key) > 0; }

private:
    template <class T>
    void read(const std::string& key, T& out, const char* kind)
    {
        m_known.insert(key);
        if (!has(key)) {
            return;
        }
        const TomlValue& value = m_values->at(key);
        if (const T* typed = std::get_if<T>(&value)) {
            out = *typed;
            return;
        }
        fail(ErrorKind::configuration, "'" + qualified(key) + "' must be " + kind);
    }

    std::string qualified(const std::string& key) const { return m_name.empty() ? key : m_name + "." + key; }

    std::string m_name;
    const std::map<std::string, TomlValue>* m_values = nullptr;
    std::set<std::string> m_known;
};

const char* curve_kind_name(CurveSource::Kind kind)
{
    switch (kind) {
    case CurveSource::Kind::flat: return "flat";
    case CurveSource::Kind::csv: return "csv";
    case CurveSource::Kind::nelson_siegel: return "nelson_siegel";
    }
    return "flat";
}

} // namespace

TomlTable parse_toml(const std::string& text)
{
    TomlTable table;
    std::string section;
    table[section];
    std::istringstream in(text);
    std::size_t number = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++number;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                syntax(number, "malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (table.count(section) && !table[section].empty()) {
                syntax(number, "duplicate section [" + section + "]");
            }
            table[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            syntax(number, "expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            syntax(number, "empty key");
        }
        auto& entries = table[section];
        if (entries.count(key)) {
            syntax(number, "duplicate key '" + key + "'");
        }
        entries[key] = parse_value(trim(line.substr(eq + 1)), number);
    }
    return table;
}

SpaceConfig RunConfig::default_space()
{
    SpaceConfig space;
    space.x_max = 11.0;
    space.n_x = 4401; // dx = 0.0025
    space.basis_size = 8;
    return space;
}

void RunConfig::validate() const
{
    require(std::isfinite(strike) && strike > 0.0 && strike < 1.0, ErrorKind::configuration,
            "contract.strike must lie in (0, 1)");
    require(std::isfinite(t0) && t0 >= 0.0, ErrorKind::configuration, "contract.t0 must be >= 0");
    require(std::isfinite(maturity) && maturity > t0, ErrorKind::configuration, "contract.maturity must exceed t0");
    if (expiry) {
        require(*expiry > t0 && *expiry <= maturity, ErrorKind::configuration,
                "contract.expiry must lie in (t0, maturity]");
    }
    require(curve.kind != CurveSource::Kind::nelson_siegel || curve.tau > 0.0, ErrorKind::configuration,
            "curve.tau must be positive");
    require(std::isfinite(volatility.sigma0) && volatility.sigma0 >= 0.0 && volatility.kappa > 0.0,
            ErrorKind::configuration, "model.sigma0 must be >= 0 and model.kappa > 0");
    space.validate();
    space.validate_horizon(maturity);
    require(chain.n <= space.basis_size, ErrorKind::configuration, "chain.n exceeds space.basis_size");
    chain.validate();
    pde.validate();
    mc.validate();
    require(martingale.n_paths >= 2 && (!mc.antithetic || martingale.n_paths % 2 == 0), ErrorKind::configuration,
            "martingale.n_paths must be even and >= 2");
    require(martingale.n_checkpoints >= 2, ErrorKind::configuration, "martingale.n_checkpoints must be >= 2");
    require(martingale.dt >= 0.0, ErrorKind::configuration, "martingale.dt must be >= 0");
    const double path_dt = martingale.dt > 0.0 ? martingale.dt : (maturity - t0) / 400.0;
    const double dx = space.x_max / static_cast<double>(space.n_x - 1);
    const double ratio = path_dt / dx;
    require(std::abs(ratio - std::round(ratio)) < 1e-9 && std::round(ratio) >= 1.0, ErrorKind::configuration,
            "the martingale path step must be a multiple of the space grid spacing x_max / (n_x - 1)");
    for (const auto* axis : {&converge.k, &converge.alpha, &converge.n, &converge.grid}) {
        require(!axis->empty(), ErrorKind::configuration, "converge schedules must be non-empty");
    }
    require(proptest.payoff_samples >= 1 && proptest.lipschitz_pairs >= 1 && proptest.gaussian_samples >= 2
                && proptest.regularity_probes >= 1,
            ErrorKind::configuration, "proptest sample counts must be positive");
    require(proptest.regularity_l >= 0.0 && proptest.regularity_l_time >= 0.0 && proptest.regularity_beta >= 0.0,
            ErrorKind::configuration, "regularity constants must be nonnegative");
    require(simulate.n_paths >= 1 && (!mc.antithetic || simulate.n_paths % 2 == 0), ErrorKind::configuration,
            "simulate.n_paths must be positive (and even with antithetic sampling)");
}

nlohmann::json RunConfig::to_json() const
{
    nlohmann::json curve_json{{"source", curve_kind_name(curve.kind)}};
    switch (curve.kind) {
    case CurveSource::Kind::flat: curve_json["level"] = curve.level; break;
    case CurveSource::Kind::csv: curve_json["path"] = curve.path.string(); break;
    case CurveSource::Kind::nelson_siegel:
        curve_json["beta0"] = curve.beta0;
        curve_json["beta1"] = curve.beta1;
        curve_json["beta2"] = curve.beta2;
        curve_json["tau"] = curve.tau;
        break;
    }
    nlohmann::json lambda = nlohmann::json::array();
    for (double value : space.q_eigenvalues) {
        lambda.push_back(value);
    }
    return {
        {"contract", {{"strike", strike}, {"maturity", maturity}, {"t0", t0},
                      {"expiry", expiry ? nlohmann::json(*expiry) : nlohmann::json(nullptr)}}},
        {"curve", curve_json},
        {"model", {{"kind", to_string(volatility.kind)}, {"sigma0", volatility.sigma0}, {"kappa", volatility.kappa}}},
        {"space", {{"w_exponent", space.w_exponent}, {"x_max", space.x_max}, {"n_x", space.n_x},
                   {"basis_size", space.basis_size}, {"lambda", lambda}}},
        {"chain", {{"k", chain.k}, {"alpha", chain.alpha}, {"n", chain.n}, {"epsilon_scale", chain.epsilon_scale}}},
        {"pde", {{"n_state", pde.n_state}, {"n_time", pde.n_time}, {"width_sigmas", pde.width_sigmas},
                 {"min_half_width", pde.min_half_width}, {"omega", pde.omega}, {"tol", pde.tol},
                 {"max_iterations", pde.max_iterations}, {"rannacher", pde.rannacher}}},
        {"mc", {{"n_paths", mc.n_paths}, {"dt", mc.dt}, {"degree", mc.degree}, {"time_features", mc.time_features},
                {"antithetic", mc.antithetic}}},
        {"martingale", {{"n_paths", martingale.n_paths}, {"dt", martingale.dt},
                        {"n_checkpoints", martingale.n_checkpoints}, {"n_state", martingale.n_state},
                        {"n_time", martingale.n_time}}},
        {"converge", {{"k", converge.k}, {"alpha", converge.alpha}, {"n", converge.n}, {"grid", converge.grid}}},
        {"proptest", {{"payoff_samples", proptest.payoff_samples}, {"lipschitz_pairs", proptest.lipschitz_pairs},
                      {"gaussian_samples", proptest.gaussian_samples},
                      {"regularity_probes", proptest.regularity_probes},
                      {"regularity_l", proptest.regularity_l}, {"regularity_l_time", proptest.regularity_l_time},
                      {"regularity_beta", proptest.regularity_beta}}},
        {"simulate", {{"n_paths", simulate.n_paths}}},
        {"seed", seed},
    };
}

RunConfig run_config_from_toml(const TomlTable& table, const std::filesystem::path& base_dir)
{
    static const std::set<std::string> sections{"",   "contract", "curve", "model",    "space",    "chain",
                                                "pde", "mc",       "martingale", "converge", "proptest", "simulate", "out"};
    for (const auto& [name, entries] : table) {
        require(sections.count(name) > 0, ErrorKind::configuration, "unknown section [" + name + "]");
    }
    RunConfig c;
    {
        Section top(table, "");
        double seed = static_cast<double>(c.seed);
        top.number("seed", seed);
        require(seed >= 0.0 && seed == std::floor(seed) && seed < 9.0e15, ErrorKind::configuration,
                "seed must be a nonnegative integer");
        c.seed = static_cast<std::uint64_t>(seed);
    }
    {
        Section s(table, "contract");
        s.number("strike", c.strike);
        s.number("maturity", c.maturity);
        s.number("t0", c.t0);
        s.optional_number("expiry", c.expiry);
    }
    {
        Section s(table, "curve");
        std::string source = curve_kind_name(c.curve.kind);
        s.text("source", source);
        if (source == "flat") {
            c.curve.kind = CurveSource::Kind::flat;
        } else if (source == "csv") {
            c.curve.kind = CurveSource::Kind::csv;
        } else if (source == "nelson_siegel") {
            c.curve.kind = CurveSource::Kind::nelson_siegel;
        } else {
            fail(ErrorKind::configuration, "curve.source must be flat, csv or nelson_siegel");
        }
        s.number("level", c.curve.level);
        std::string path;
        s.text("path", path);
        if (c.curve.kind == CurveSource::Kind::csv) {
            require(!path.empty(), ErrorKind::configuration, "curve.path is required for a csv curve");
            std::filesystem::path p(path);
            c.curve.path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
        }
        s.number("beta0", c.curve.beta0);
        s.number("beta1", c.curve.beta1);
        s.number("beta2", c.curve.beta2);
        s.number("tau", c.curve.tau);
    }
    {
        Section s(table, "model");
        std::string kind = to_string(c.volatility.kind);
        s.text("kind", kind);
        c.volatility.kind = parse_volatility_kind(kind);
        s.number("sigma0", c.volatility.sigma0);
        s.number("kappa", c.volatility.kappa);
    }
    {
        Section s(table, "space");
        s.number("w_exponent", c.space.w_exponent);
        s.number("x_max", c.space.x_max);
        s.count("n_x", c.space.n_x);
        s.count("basis_size", c.space.basis_size);
        if (s.has("lambda")) {
            const auto& value = table.at("space").at("lambda");
            if (const auto* name = std::get_if<std::string>(&value)) {
                require(*name == "geometric", ErrorKind::configuration,
                        "space.lambda must be \"geometric\" or an array");
                std::string ignored;
                s.text("lambda", ignored);
            } else {
                s.list("lambda", c.space.q_eigenvalues);
            }
        } else {
            std::string ignored;
            s.text("lambda", ignored);
        }
    }
    {
        Section s(table, "chain");
        s.number("k", c.chain.k);
        s.number("alpha", c.chain.alpha);
        s.count("n", c.chain.n);
        s.number("epsilon_scale", c.chain.epsilon_scale);
    }
    {
        Section s(table, "pde");
        s.count("n_state", c.pde.n_state);
        s.count("n_time", c.pde.n_time);
        s.number("width_sigmas", c.pde.width_sigmas);
        s.number("min_half_width", c.pde.min_half_width);
        s.number("omega", c.pde.omega);
        s.number("tol", c.pde.tol);
        s.count("max_iterations", c.pde.max_iterations);
        s.flag("rannacher", c.pde.rannacher);
    }
    {
        Section s(table, "mc");
        s.count("n_paths", c.mc.n_paths);
        s.number("dt", c.mc.dt);
        s.count("degree", c.mc.degree);
        s.flag("time_features", c.mc.time_features);
        s.flag("antithetic", c.mc.antithetic);
    }
    {
        Section s(table, "martingale");
        s.count("n_paths", c.martingale.n_paths);
        s.number("dt", c.martingale.dt);
        s.count("n_checkpoints", c.martingale.n_checkpoints);
        s.count("n_state", c.martingale.n_state);
        s.count("n_time", c.martingale.n_time);
    }
    {
        Section s(table, "converge");
        s.list("k", c.converge.k);
        s.list("alpha", c.converge.alpha);
        s.list("n", c.converge.n);
        s.list("grid", c.converge.grid);
    }
    {
        Section s(table, "proptest");
        s.count("payoff_samples", c.proptest.payoff_samples);
        s.count("lipschitz_pairs", c.proptest.lipschitz_pairs);
        s.count("gaussian_samples", c.proptest.gaussian_samples);
        s.count("regularity_probes", c.proptest.regularity_probes);
        s.number("regularity_l", c.proptest.regularity_l);
        s.number("regularity_l_time", c.proptest.regularity_l_time);
        s.number("regularity_beta", c.proptest.regularity_beta);
    }
    {
        Section s(table, "simulate");
        s.count("n_paths", c.simulate.n_paths);
    }
    {
        Section s(table, "out");
        std::string dir = c.out_dir.string();
        s.text("dir", dir);
        c.out_dir = dir;
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "config file not found: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto config = run_config_from_toml(parse_toml(buffer.str()), path.parent_path());
    config.validate();
    if (config.curve.kind == CurveSource::Kind::csv) {
        require(std::filesystem::exists(config.curve.path), ErrorKind::io,
                "curve file not found: " + config.curve.path.string());
    }
    return config;
}

std::string config_hash(const RunConfig& config)
{
    const std::string text = config.to_json().dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    require(EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr) == 1, ErrorKind::io,
            "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

ForwardCurve build_initial_curve(const CurveSource& source, const GridPtr& grid)
{
    switch (source.kind) {
    case CurveSource::Kind::flat: return ForwardCurve::constant(grid, source.level);
    case CurveSource::Kind::csv:
        require(std::filesystem::exists(source.path), ErrorKind::io, "curve file not found: " + source.path.string());
        return read_curve_csv(source.path, grid);
    case CurveSource::Kind::nelson_siegel:
        return ForwardCurve::from_function(grid, [&](double x) {
            const double u = x / source.tau;
            return source.beta0 + source.beta1 * std::exp(-u) + source.beta2 * u * std::exp(-u);
        });
    }
    fail(ErrorKind::configuration, "unknown curve source");
}

RunContext make_context(const RunConfig& config)
{
    config.validate();
    auto grid = Grid::make(config.space);
    auto basis = std::make_shared<const BasisSet>(build_basis(grid));
    auto initial = build_initial_curve(config.curve, grid);
    RunContext ctx{config, grid, std::move(basis),
                   PricingProblem{config.strike, config.maturity, config.t0, std::move(initial), config.expiry}};
    ctx.config.mc.seed = config.seed;
    ctx.config.mc.threads = config.threads;
    ctx.problem.validate();
    config.volatility.validate(*ctx.grid);
    return ctx;
}

} // namespace hjm
