#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fftw3.h>

#include "nld/config.hpp"
#include "nld/dynamics.hpp"
#include "nld/equilibria.hpp"
#include "nld/error.hpp"
#include "nld/force.hpp"
#include "nld/grid.hpp"
#include "nld/io.hpp"
#include "nld/kernel.hpp"
#include "nld/operator.hpp"
#include "nld/spectrum.hpp"

namespace nld::app {

inline constexpr const char* kVersion = "1.0.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct RunOptions {
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

// ---------------------------------------------------------------- builders

inline std::uint64_t seed_of(const Config& c) { return static_cast<std::uint64_t>(c.integer("seed", 1)); }

inline int dim_of(const Config& c) {
    const auto d = c.integer("domain.dim", 1);
    if (d < 1 || d > kMaxDim) throw ConfigError("domain.dim must be 1 or 2");
    return static_cast<int>(d);
}

inline bool is_torus(const Config& c) {
    const std::string kind = c.text("domain.kind", "torus");
    if (kind != "torus" && kind != "box") throw ConfigError("domain.kind must be torus or box, got '" + kind + "'");
    return kind == "torus";
}

inline GridPtr build_grid(const Config& c) {
    const int dim = dim_of(c);
    if (is_torus(c)) return Grid::torus(dim, static_cast<std::size_t>(c.integer("domain.N", 256)));
    const auto box = c.numbers("domain.box", {-1.0, 1.0});
    if (box.size() != 2) throw ConfigError("domain.box expects 'lo, hi'");
    const double h = c.number("domain.h", 0.01);
    const std::string mask = c.text("domain.mask", "all");
    if (mask.size() > 4 && mask.substr(mask.size() - 4) == ".csv") {
        const auto raw = read_column_csv(c.path("domain.mask"));
        std::vector<bool> m(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) m[i] = raw[i] != 0.0;
        return Grid::box_from_mask(dim, box[0], box[1], h, m);
    }
    return Grid::box(dim, box[0], box[1], h, named_mask(mask, dim, box[0], box[1]));
}

inline BaseKernel build_base(const Config& c) {
    const int dim = dim_of(c);
    const std::string shape = c.text("kernel.shape", "tent");
    if (shape == "tent") return BaseKernel::tent(dim);
    if (shape == "gaussian") return BaseKernel::gaussian(dim);
    if (shape == "tabulated") return BaseKernel::from_csv(c.path("kernel.table"), dim);
    throw ConfigError("kernel.shape must be tent, gaussian or tabulated, got '" + shape + "'");
}

inline QuadratureOptions quadrature_of(const Config& c) {
    QuadratureOptions q;
    if (c.has("kernel.quadrature_points")) {
        const auto p = c.integer("kernel.quadrature_points", 0);
        if (p < 2) throw ConfigError("kernel.quadrature_points must be at least 2");
        q.points_1d = q.points_2d = static_cast<std::size_t>(p);
    }
    return q;
}

inline ScaledKernel build_kernel(const Config& c) {
    const std::string mode = c.text("kernel.mode", is_torus(c) ? "periodic" : "general");
    if (mode != "general" && mode != "periodic")
        throw ConfigError("kernel.mode must be general or periodic, got '" + mode + "'");
    const KernelMode km = mode == "general" ? KernelMode::general : KernelMode::periodic;
    const double eps = c.number("kernel.epsilon", 1.0);
    const double m = c.number("kernel.m", 0.0);
    const auto q = quadrature_of(c);
    auto base = build_base(c);
    if (c.has("kernel.norm_const"))
        return ScaledKernel::with_normalization(std::move(base), eps, m, km, c.number("kernel.norm_const"), q);
    return km == KernelMode::general ? ScaledKernel::general(std::move(base), eps, m, q)
                                     : ScaledKernel::periodic(std::move(base), eps, m, q);
}

inline OperatorOptions operator_options(const Config& c) {
    OperatorOptions o;
    if (c.has("kernel.subcells")) {
        const auto s = c.integer("kernel.subcells", 0);
        if (s < 1) throw ConfigError("kernel.subcells must be positive");
        o.subcells_1d = o.subcells_2d = static_cast<std::size_t>(s);
    }
    return o;
}

inline ForceTerm build_force(const Config& c) {
    const std::string shape = c.text("force.shape", "zero");
    if (shape == "zero") return ForceTerm::zero();
    if (shape == "logistic") return ForceTerm::logistic(c.number("force.r", 1.0));
    if (shape == "cubic") return ForceTerm::cubic(c.number("force.a", 1.0), c.number("force.b", 1.0));
    if (shape == "polynomial") return ForceTerm::polynomial(c.numbers("force.coeffs"), c.numbers("force.zeros"));
    if (shape == "table") {
        std::ifstream in(c.path("force.table"));
        if (!in) throw ConfigError("cannot open force table");
        std::vector<double> u, f;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream row(line);
            double a = 0.0, b = 0.0;
            if (!(row >> a >> b)) {
                if (u.empty()) continue;
                throw ConfigError("malformed force table row: " + line);
            }
            u.push_back(a);
            f.push_back(b);
        }
        return ForceTerm::table(std::move(u), std::move(f), c.numbers("force.zeros"));
    }
    throw ConfigError("force.shape must be zero, logistic, cubic, polynomial or table, got '" + shape + "'");
}

inline Field build_initial(const Config& c, const GridPtr& grid) {
    const std::string kind = c.text("ic.kind", "constant");
    if (kind == "constant") return Field::constant(grid, c.number("ic.value", 0.5));
    if (kind == "cosine") {
        const double mean = c.number("ic.mean", 0.5), amp = c.number("ic.amplitude", 0.3);
        const double k = static_cast<double>(c.integer("ic.k", 1));
        return Field::sample(grid, [&](const Point& x) { return mean + amp * std::cos(k * x[0]); });
    }
    if (kind == "random") {
        const auto range = c.numbers("ic.range", {0.0, 1.0});
        if (range.size() != 2 || !(range[0] <= range[1])) throw ConfigError("ic.range expects 'lo, hi'");
        std::mt19937_64 rng(seed_of(c));
        std::uniform_real_distribution<double> dist(range[0], range[1]);
        std::vector<double> v(grid->size());
        for (double& x : v) x = dist(rng);
        return Field(grid, std::move(v));
    }
    if (kind == "csv") return Field(grid, read_column_csv(c.path("ic.path")));
    throw ConfigError("ic.kind must be constant, cosine, random or csv, got '" + kind + "'");
}

inline Scheme scheme_of(const Config& c) {
    const std::string s = c.text("evolve.scheme", "rk4");
    if (s == "rk4") return Scheme::rk4;
    if (s == "euler") return Scheme::euler;
    throw ConfigError("evolve.scheme must be euler or rk4, got '" + s + "'");
}

inline Interval interval_of(const Config& c, const std::string& key, Interval fallback) {
    if (!c.has(key)) return fallback;
    const auto v = c.numbers(key);
    if (v.size() != 2) throw ConfigError(key + " expects 'lo, hi'");
    return {v[0], v[1]};
}

/// Gamma for the sigma criterion: evolve.gamma, else the two smallest zeros of f.
inline std::optional<Interval> gamma_of(const Config& c, const ForceTerm& f) {
    if (c.has("evolve.gamma")) return interval_of(c, "evolve.gamma", {});
    if (f.zeros().size() >= 2) return Interval{f.zeros()[0], f.zeros()[1]};
    return std::nullopt;
}

inline EvolveOptions evolve_options(const Config& c) {
    EvolveOptions o;
    o.dt = c.number("evolve.dt", 1e-2);
    o.T = c.number("evolve.T", 1.0);
    o.scheme = scheme_of(c);
    o.snapshot_times = c.numbers("evolve.snapshots");
    const auto every = c.integer("evolve.record_every", 1);
    if (every < 1) throw ConfigError("evolve.record_every must be positive");
    o.record_every = static_cast<std::size_t>(every);
    o.fast = c.flag("evolve.fast", true);
    return o;
}

inline JumpTemplate build_template(const Config& c, const Grid& grid) {
    return JumpTemplate::half_split(grid, c.number("steady.u1", -1.0), c.number("steady.u2", 1.0),
                                    c.number("steady.R", 0.14), static_cast<int>(c.integer("steady.axis", 0)));
}

inline std::string wavenumber_label(const Wavenumber& k, int dim) {
    return dim == 1 ? std::to_string(k[0]) : std::to_string(k[0]) + ":" + std::to_string(k[1]);
}

// --------------------------------------------------------------- scenarios

inline void kernel_scenario(const Config& c, const std::filesystem::path& out, Manifest& m) {
    const auto base = build_base(c);
    const auto props = check_kernel_properties(base, 4097, quadrature_of(c));
    m.add("result.kernel.nonnegative", props.nonnegative);
    m.add("result.kernel.positive_at_origin", props.positive_at_origin);
    m.add("result.kernel.symmetric", props.symmetric);
    m.add("result.kernel.second_moment", props.second_moment);
    if (!props.ok()) throw InvalidKernelError("kernel violates its structural assumptions");
    const auto k = build_kernel(c);
    m.add("result.norm_const", k.norm_const());
    m.add("result.sup_norm", k.sup_norm());
    m.add("result.support_fits_period", k.support_fits_period());
    const double half = k.mode() == KernelMode::periodic ? kPi : 2.0 * k.scaled_support();
    auto csv = open_output(out / "kernel.csv");
    csv << "z,value\n";
    const std::size_t samples = 1025;
    for (std::size_t i = 0; i < samples; ++i) {
        const double z = -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(samples - 1);
        csv << fmt(z) << ',' << fmt(k(Point{z, 0.0})) << '\n';
    }
    if (k.mode() == KernelMode::periodic) {
        for (int j = 0; j <= 4; ++j) m.add("result.fourier." + std::to_string(j), k.fourier_coefficient({j, 0}));
    } else {
        const int d = k.dim();
        m.add("result.half_second_moment", 0.5 * k.integrate_scaled([&](const Point& z) {
            const double r = norm(z, d);
            return r * r;
        }));
        m.add("result.expected_half_second_moment", std::pow(k.epsilon(), 2.0 - k.m()));
    }
}

inline void spectrum_scenario(const Config& c, const std::filesystem::path& out, Manifest& m) {
    const auto grid = build_grid(c);
    const DiscreteOperator op(build_kernel(c), grid, operator_options(c));
    const int k_max = static_cast<int>(c.integer("spectrum.k_max", 8));
    const auto rep = classify_spectrum(op, k_max, c.number("spectrum.delta", -1.0));
    auto csv = open_output(out / "spectrum.csv");
    csv << "k,beta_analytic,beta_numeric,abs_err,class\n";
    auto class_of = [&](double v) {
        const auto it = std::lower_bound(rep.numeric.begin(), rep.numeric.end(), v);
        const auto i = static_cast<std::size_t>(it - rep.numeric.begin());
        return to_string(rep.classes[std::min(i, rep.classes.size() - 1)]);
    };
    if (grid->is_torus()) {
        for (const auto& match : rep.matches)
            for (double v : match.numeric)
                csv << wavenumber_label(match.analytic.k, grid->dim()) << ',' << fmt(match.analytic.beta) << ','
                    << fmt(v) << ',' << fmt(std::abs(v - match.analytic.beta)) << ',' << class_of(v) << '\n';
        m.add("result.max_abs_err", rep.max_match_error());
        m.add("result.beta_infinity", rep.beta_infinity);
        m.add("result.rho", rep.rho);
    } else {
        for (std::size_t i = rep.numeric.size(); i-- > 0;)
            csv << (rep.numeric.size() - 1 - i) << ",nan," << fmt(rep.numeric[i]) << ",nan," << to_string(rep.classes[i])
                << '\n';
    }
    std::size_t isolated = 0;
    for (auto cl : rep.classes) isolated += cl == SpectralClass::isolated;
    m.add("result.beta_1", largest_nontrivial_eigenvalue(op));
    m.add("result.essential_lo", rep.essential.lo);
    m.add("result.essential_hi", rep.essential.hi);
    m.add("result.essential_width", rep.essential.width());
    m.add("result.delta_class", rep.delta_class);
    m.add("result.eigenvalues", rep.numeric.size());
    m.add("result.isolated", isolated);
    m.add("result.top_eigenvalue", rep.numeric.back());
    if (c.flag("output.matrix", false)) op.write_matrix_csv(out / "matrix.csv");
}

inline void asymptotics_scenario(const Config& c, const std::filesystem::path& out, Manifest& m) {
    const auto base = build_base(c);
    const Wavenumber k{static_cast<int>(c.integer("asymptotics.k", 1)), 0};
    const double mm = c.number("asymptotics.m", c.number("kernel.m", 2.0));
    const auto eps = c.numbers("asymptotics.epsilons", {0.2, 0.1, 0.05});
    const auto rows = asymptotic_scan(base, k, mm, eps, quadrature_of(c));
    auto csv = open_output(out / "asymptotics.csv");
    csv << "epsilon,k,beta,predicted,ratio\n";
    std::size_t warnings = 0;
    for (const auto& r : rows) {
        csv << fmt(r.epsilon) << ',' << wavenumber_label(r.k, base.dim()) << ',' << fmt(r.beta) << ','
            << fmt(r.predicted) << ',' << fmt(r.ratio) << '\n';
        if (!r.support_fits) {
            ++warnings;
            std::cerr << "warning: epsilon = " << r.epsilon << " scales the support beyond one period\n";
            m.add("result.warning.epsilon", r.epsilon);
        }
    }
    m.add("result.rows", rows.size());
    m.add("result.warnings", warnings);
    if (!rows.empty()) m.add("result.last_beta", rows.back().beta);
}

inline int evolve_scenario(const Config& c, const std::filesystem::path& out, Manifest& m) {
    const auto grid = build_grid(c);
    const DiscreteOperator op(build_kernel(c), grid, operator_options(c));
    const auto force = build_force(c);
    const auto u0 = build_initial(c, grid);
    const auto opt = evolve_options(c);
    const auto trace = evolve(op, force, u0, opt);
    {
        auto csv = open_output(out / "trace.csv");
        csv << "t,mu,nu,mean,deviation,dirichlet,energy\n";
        for (const auto& r : trace.records)
            csv << fmt(r.t) << ',' << fmt(r.mu) << ',' << fmt(r.nu) << ',' << fmt(r.mean) << ',' << fmt(r.deviation)
                << ',' << fmt(r.dirichlet) << ',' << fmt(r.energy) << '\n';
    }
    for (std::size_t j = 0; j < trace.snapshots.size(); ++j) {
        auto csv = open_output(out / ("snapshot_" + std::to_string(j) + ".csv"));
        csv << "# t = " << fmt(trace.snapshots[j].t) << '\n';
        write_field_csv(csv, *grid, trace.snapshots[j].values);
    }
    m.add("result.dt_bound", trace.dt_bound);
    m.add("result.records", trace.records.size());
    m.add("result.mass_drift", trace.mass_drift());
    m.add("result.energy_max_increase", energy_monotonicity(trace).max_increase);
    m.add("result.aborted", trace.aborted);
    m.add("result.last_valid_time", trace.last_valid_time);
    if (trace.aborted) {
        std::cerr << "error: solution blew up after t = " << trace.last_valid_time << '\n';
        return kExitNumerical;
    }
    m.add("result.final_mu", trace.records.back().mu);
    m.add("result.final_nu", trace.records.back().nu);
    if (const auto gamma = gamma_of(c, force)) {
        const auto s = sigma_criterion(op, force, *gamma, u0);
        m.add("result.beta_1", s.beta_1);
        m.add("result.sigma", s.sigma);
        m.add("result.a_1", s.a_1);
        m.add("result.a_2", s.a_2);
        m.add("result.invariant_violation", invariant_region_monitor(trace, force, *gamma).max_violation);
        if (s.sigma < 0.0) {
            m.add("result.deviation_bound_holds", deviation_decay_check(trace, s).holds);
            m.add("result.mean_mass_bound_holds", mean_mass_ode_residual(trace, force, s).holds);
            m.add("result.dirichlet_bound_holds", dirichlet_form_check(trace, s).holds);
        }
    }
    return kExitOk;
}

inline int steady_scenario(const Config& c, const std::filesystem::path& out, Manifest& m, bool force_override) {
    const auto grid = build_grid(c);
    const DiscreteOperator op(build_kernel(c), grid, operator_options(c));
    const auto force = build_force(c);
    const auto tmpl = build_template(c, *grid);
    SteadyOptions so;
    so.tol = c.number("steady.tol", 1e-12);
    so.max_iter = static_cast<std::size_t>(c.integer("steady.max_iter", 500));
    so.force_override = force_override;
    const auto res = solve_discontinuous(op, force, tmpl, so);
    const auto stab = linear_stability(op, force, res.U);
    auto csv = open_output(out / "steady.csv");
    csv << "# residual_inf=" << fmt(res.residual_inf) << " iterations=" << res.iterations << " gamma0=" << fmt(res.gamma0)
        << " cond1_margin=" << fmt(res.margins.cond1) << " cond2_margin=" << fmt(res.margins.cond2)
        << " observed_ratio=" << fmt(res.observed_ratio) << " converged=" << (res.converged ? "true" : "false") << '\n';
    write_field_csv(csv, *grid, res.U.values());
    m.add("result.operator_bound", res.margins.operator_bound);
    m.add("result.cond1_margin", res.margins.cond1);
    m.add("result.cond2_margin", res.margins.cond2);
    m.add("result.certified", res.certified);
    m.add("result.iterations", res.iterations);
    m.add("result.observed_ratio", res.observed_ratio);
    m.add("result.residual_inf", res.residual_inf);
    m.add("result.phi_sup", res.phi_sup);
    m.add("result.gamma0", res.gamma0);
    m.add("result.max_fprime", stab.max_fprime);
    m.add("result.converged", res.converged);
    if (!res.converged) {
        std::cerr << "error: fixed-point iteration did not converge: " << res.diagnostics << '\n';
        return kExitNumerical;
    }
    return kExitOk;
}

inline int bifurcate_scenario(const Config& c, const std::filesystem::path& out, Manifest& m) {
    const auto grid = build_grid(c);
    const DiscreteOperator op(build_kernel(c), grid, operator_options(c));
    const auto force = build_force(c);
    const double u_star = c.number("branch.u_star", 0.0);
    const auto window = interval_of(c, "branch.window", {-0.5, 0.5});
    const auto crit = bifurcation_scan(op, force, u_star, window);
    for (std::size_t i = 0; i < crit.size(); ++i) {
        m.add("result.critical." + std::to_string(i) + ".lambda", crit[i].lambda);
        m.add("result.critical." + std::to_string(i) + ".multiplicity", crit[i].multiplicity);
    }
    if (crit.empty()) {
        std::cerr << "error: no critical value in the scan window\n";
        return kExitNumerical;
    }
    const auto* pick = &crit.front();
    for (const auto& cv : crit)
        if (std::abs(cv.lambda) < std::abs(pick->lambda)) pick = &cv;
    ContinuationOptions co;
    co.steps = static_cast<std::size_t>(c.integer("branch.steps", 20));
    co.ds = c.number("branch.ds", 0.02);
    co.delta = c.number("branch.delta", 1e-2);
    co.inward = static_cast<std::size_t>(c.integer("branch.inward", 2));
    const auto br = continue_branch(op, force, u_star, pick->lambda, co);
    auto csv = open_output(out / "branch.csv");
    csv << "step,lambda,amplitude,residual\n";
    for (std::size_t i = 0; i < br.points.size(); ++i)
        csv << i << ',' << fmt(br.points[i].lambda) << ',' << fmt(br.points[i].amplitude) << ','
            << fmt(br.points[i].residual) << '\n';
    double worst = 0.0;
    for (const auto& p : br.points) worst = std::max(worst, p.residual);
    m.add("result.lambda_c", pick->lambda);
    m.add("result.points", br.points.size());
    m.add("result.max_residual", worst);
    m.add("result.r_squared", br.r_squared);
    m.add("result.truncated", br.truncated);
    if (br.truncated) std::cerr << "warning: branch truncated: " << br.diagnostics << '\n';
    return br.points.empty() ? kExitNumerical : kExitOk;
}

// ------------------------------------------------------------------ driver

inline const std::vector<std::string>& scenarios() {
    static const std::vector<std::string> names = {"kernel", "spectrum", "asymptotics", "evolve", "steady", "bifurcate"};
    return names;
}

inline Config apply_overrides(Config c, const RunOptions& o) {
    if (o.out) c.set("output.dir", o.out->string());
    if (o.seed) c.set("seed", std::to_string(*o.seed));
    return c;
}

/// Runs a scenario, writing its CSVs and `manifest` into the output directory.
/// Errors propagate as exceptions; see run_guarded for the exit-code mapping.
inline int run(const std::string& scenario, Config config, const RunOptions& opt) {
    const auto start = std::chrono::steady_clock::now();
    config = apply_overrides(std::move(config), opt);
    config.set("scenario", scenario);
    const std::filesystem::path out = config.text("output.dir", "out");
    std::filesystem::create_directories(out);

    Manifest m;
    int code = kExitOk;
    if (scenario == "kernel")
        kernel_scenario(config, out, m);
    else if (scenario == "spectrum")
        spectrum_scenario(config, out, m);
    else if (scenario == "asymptotics")
        asymptotics_scenario(config, out, m);
    else if (scenario == "evolve")
        code = evolve_scenario(config, out, m);
    else if (scenario == "steady")
        code = steady_scenario(config, out, m, opt.force);
    else if (scenario == "bifurcate")
        code = bifurcate_scenario(config, out, m);
    else
        throw ConfigError("unknown scenario '" + scenario + "'");

    auto file = open_output(out / "manifest");
    file << config.echo("config.");
    file << m.str();
    file << "version.nldisp = " << kVersion << '\n';
    file << "version.eigen = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
    file << "version.fftw = " << fftw_version << '\n';
    file << "exit_code = " << code << '\n';
    file << "wall_time_seconds = "
         << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) << '\n';
    return code;
}

/// Recovers the run configuration echoed into a manifest.
inline Config config_from_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw ConfigError("cannot open " + manifest.string());
    std::string line, text;
    const std::string prefix = "config.";
    while (std::getline(in, line))
        if (line.rfind(prefix, 0) == 0) text += line.substr(prefix.size()) + "\n";
    return Config::parse_text(text);
}

/// Dry run: checks the configuration and reports predicted quantities.
inline Manifest validate(Config config, const RunOptions& opt) {
    config = apply_overrides(std::move(config), opt);
    Manifest m;
    const std::string scenario = config.text("scenario", "");
    const auto base = build_base(config);
    const auto props = check_kernel_properties(base, 4097, quadrature_of(config));
    m.add("kernel.properties_ok", props.ok());
    if (!props.ok()) throw InvalidKernelError("kernel violates its structural assumptions");
    const auto force = build_force(config);
    m.add("force.zeros_ok", true);
    const auto grid = build_grid(config);
    const DiscreteOperator op(build_kernel(config), grid, operator_options(config));
    const auto range = essential_range(op);
    m.add("grid.nodes", grid->size());
    m.add("operator.C_L", op.operator_norm_bound());
    m.add("spectrum.essential_lo", range.lo);
    m.add("spectrum.essential_hi", range.hi);
    m.add("spectrum.essential_width", range.width());

    const auto u0 = build_initial(config, grid);
    const auto [lo, hi] = std::minmax_element(u0.values().begin(), u0.values().end());
    const double pad = std::max(0.1 * (*hi - *lo), 0.1);
    const double lip = force.identically_zero() ? 0.0 : force.derivative_bound(*lo - pad, *hi + pad);
    const Scheme scheme = scheme_of(config);
    const double bound = stable_dt(op, lip, scheme);
    m.add("evolve.dt_bound", bound);
    if (config.has("evolve.dt") && config.number("evolve.dt") > bound) {
        std::ostringstream msg;
        msg << "evolve.dt = " << config.number("evolve.dt") << " exceeds the " << to_string(scheme)
            << " stability bound " << bound;
        throw ConfigError(msg.str());
    }
    if (const auto gamma = gamma_of(config, force)) {
        const auto s = sigma_criterion(op, force, *gamma, u0);
        m.add("sigma.beta_1", s.beta_1);
        m.add("sigma.sigma", s.sigma);
        m.add("sigma.criterion_holds", s.sigma < 0.0);
    }
    if (scenario == "steady") {
        const auto tmpl = build_template(config, *grid);
        const auto c = contraction_conditions(op, force, tmpl);
        m.add("steady.cond1_margin", c.cond1);
        m.add("steady.cond2_margin", c.cond2);
        const bool cert = c.positive() && op.kernel().m() > 0.0;
        m.add("steady.certificate", cert ? "pass" : "fail");
    }
    return m;
}

/// Maps library errors to exit codes: 2 for configuration problems, 3 for
/// numerical failures. Messages go to `err`.
template <class Fn>
int run_guarded(Fn&& fn, std::ostream& err = std::cerr) {
    try {
        return fn();
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
}

}  // namespace nld::app
