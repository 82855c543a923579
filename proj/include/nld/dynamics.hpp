#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <span>
#include <vector>

#include "nld/error.hpp"
#include "nld/fast_operator.hpp"
#include "nld/force.hpp"
#include "nld/grid.hpp"
#include "nld/operator.hpp"
#include "nld/spectrum.hpp"

namespace nld {

enum class Scheme { euler, rk4 };

inline const char* to_string(Scheme s) { return s == Scheme::euler ? "euler" : "rk4"; }

/// RK4 stability region reaches about 2.785 on the negative real axis; 2.7
/// keeps a small margin over the forward Euler bound.
inline constexpr double kRk4StabilityGain = 2.7;

/// Largest admissible time step: 0.9 / (2 max|b| + L_f) for Euler, 2.7x that for RK4.
inline double stable_dt(const DiscreteOperator& op, double lipschitz, Scheme scheme) {
    const double base = 0.9 / (op.operator_norm_bound() + lipschitz);
    return scheme == Scheme::euler ? base : kRk4StabilityGain * base;
}

struct EvolveOptions {
    double dt = 1e-3;
    double T = 1.0;
    Scheme scheme = Scheme::rk4;
    std::vector<double> snapshot_times;
    std::size_t record_every = 1;
    bool fast = true;  // use the FFT path on torus grids
    /// Interval over which f' is bounded for the step-size rule; defaults to
    /// the range of u0 padded by max(10% of its width, 0.1).
    std::optional<Interval> force_interval;
};

struct TraceRecord {
    double t = 0.0;
    double mu = 0.0;
    double nu = 0.0;
    std::size_t argmax = 0;
    std::size_t argmin = 0;
    double mean = 0.0;
    double deviation = 0.0;
    double dirichlet = 0.0;
    double energy = 0.0;
};

struct Snapshot {
    double t = 0.0;
    std::vector<double> values;
};

struct EvolutionTrace {
    GridPtr grid;
    std::vector<TraceRecord> records;
    std::vector<Snapshot> snapshots;
    std::vector<double> final_state;
    double dt = 0.0;
    double dt_bound = 0.0;
    bool aborted = false;
    double last_valid_time = 0.0;

    double mass_drift() const {
        double d = 0.0;
        for (const auto& r : records) d = std::max(d, std::abs(r.mean - records.front().mean));
        return d;
    }
};

/// Lyapunov energy 1/4 sum_{i,j} h^n A_ij (u_j - u_i)^2 - sum_i h^n F(u_i).
inline double lyapunov_energy(const DiscreteOperator& op, const ForceTerm& force, std::span<const double> u) {
    double potential = 0.0;
    for (double v : u) potential += force.antiderivative(v);
    return -0.5 * dirichlet_form_pairwise(op, u) - potential * op.grid()->cell_volume();
}

inline double lyapunov_energy(const DiscreteOperator& op, const ForceTerm& force, const Field& u) {
    return lyapunov_energy(op, force, u.values());
}

namespace detail {

/// Dense or FFT evaluation of L u, chosen once per run.
class OperatorApplier {
public:
    OperatorApplier(const DiscreteOperator& op, bool fast) : op_(op) {
        if (fast && op.grid()->is_torus()) fast_ = std::make_unique<FastOperator>(op);
    }
    void operator()(std::span<const double> u, std::span<double> out) const {
        if (fast_)
            fast_->apply(u, out);
        else
            op_.apply(u, out);
    }

private:
    const DiscreteOperator& op_;
    std::unique_ptr<FastOperator> fast_;
};

inline TraceRecord diagnose(const Grid& grid, const OperatorApplier& apply, const ForceTerm& force, double t,
                            std::span<const double> u, std::vector<double>& scratch) {
    TraceRecord r;
    r.t = t;
    r.mu = u[0];
    r.nu = u[0];
    double sum = 0.0, potential = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] > r.mu) {
            r.mu = u[i];
            r.argmax = i;
        }
        if (u[i] < r.nu) {
            r.nu = u[i];
            r.argmin = i;
        }
        sum += u[i];
        potential += force.antiderivative(u[i]);
    }
    const double w = grid.cell_volume();
    r.mean = sum * w / grid.measure();
    double dev = 0.0;
    for (double v : u) dev += (v - r.mean) * (v - r.mean);
    r.deviation = std::sqrt(dev * w);
    apply(u, scratch);
    r.dirichlet = l2_inner(grid, scratch, u);
    r.energy = -0.5 * r.dirichlet - potential * w;
    return r;
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

/// Explicit integration of u_t = L u + f(u) on [0, T]. Steps have length dt
/// except a possibly shorter final step landing on T. A non-finite state stops
/// the run; the trace is returned with `aborted` set.
inline EvolutionTrace evolve(const DiscreteOperator& op, const ForceTerm& force, const Field& u0,
                             const EvolveOptions& opt) {
    if (!same_grid(u0.grid(), op.grid())) throw ShapeError("initial data and operator live on different grids");
    if (!(opt.dt > 0.0) || !(opt.T >= 0.0)) throw ConfigError("evolve needs dt > 0 and T >= 0");
    if (opt.record_every == 0) throw ConfigError("record_every must be positive");

    Interval span = opt.force_interval.value_or(Interval{});
    if (!opt.force_interval) {
        const auto [lo, hi] = std::minmax_element(u0.values().begin(), u0.values().end());
        const double pad = std::max(0.1 * (*hi - *lo), 0.1);
        span = {*lo - pad, *hi + pad};
    }
    const double lip = force.identically_zero() ? 0.0 : force.derivative_bound(span.lo, span.hi);

    EvolutionTrace trace;
    trace.grid = op.grid();
    trace.dt = opt.dt;
    trace.dt_bound = stable_dt(op, lip, opt.scheme);
    if (opt.dt > trace.dt_bound) {
        std::ostringstream msg;
        msg << "dt = " << opt.dt << " exceeds the " << to_string(opt.scheme) << " stability bound " << trace.dt_bound;
        throw ConfigError(msg.str());
    }

    const detail::OperatorApplier apply(op, opt.fast);
    const Grid& grid = *op.grid();
    const std::size_t n = u0.size();
    std::vector<double> u(u0.data()), scratch(n), k1(n), k2(n), k3(n), k4(n), tmp(n);
    auto rhs = [&](std::span<const double> x, std::span<double> out) {
        apply(x, out);
        if (!force.identically_zero())
            for (std::size_t i = 0; i < n; ++i) out[i] += force(x[i]);
    };

    std::vector<double> pending = opt.snapshot_times;
    std::sort(pending.begin(), pending.end());
    std::size_t next_snap = 0;
    auto take_snapshots = [&](double t, bool last) {
        while (next_snap < pending.size() && (pending[next_snap] <= t + 1e-12 * std::max(1.0, t) || last)) {
            if (pending[next_snap] > opt.T + 1e-12 * std::max(1.0, opt.T)) break;
            trace.snapshots.push_back({t, u});
            ++next_snap;
        }
    };

    std::size_t steps = static_cast<std::size_t>(std::ceil(opt.T / opt.dt - 1e-9));
    if (opt.T == 0.0) steps = 0;
    trace.records.push_back(detail::diagnose(grid, apply, force, 0.0, u, scratch));
    take_snapshots(0.0, steps == 0);

    for (std::size_t s = 1; s <= steps; ++s) {
        const double t0 = static_cast<double>(s - 1) * opt.dt;
        const double t1 = s == steps ? opt.T : static_cast<double>(s) * opt.dt;
        const double h = t1 - t0;
        if (opt.scheme == Scheme::euler) {
            rhs(u, k1);
            for (std::size_t i = 0; i < n; ++i) u[i] += h * k1[i];
        } else {
            rhs(u, k1);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
            rhs(tmp, k2);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
            rhs(tmp, k3);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + h * k3[i];
            rhs(tmp, k4);
            for (std::size_t i = 0; i < n; ++i) u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if (!detail::all_finite(u)) {
            trace.aborted = true;
            trace.last_valid_time = t0;
            return trace;
        }
        if (s % opt.record_every == 0 || s == steps) trace.records.push_back(detail::diagnose(grid, apply, force, t1, u, scratch));
        take_snapshots(t1, s == steps);
    }
    trace.last_valid_time = opt.T;
    trace.final_state = std::move(u);
    return trace;
}

/// exp(T (sqrt(2) sup J_eps |Omega|^{1/2} + L_f)) for a given bound L_f on |f'|.
inline double gronwall_constant(const DiscreteOperator& op, double force_bound, double T) {
    if (!std::isfinite(force_bound) || force_bound < 0.0) throw ConfigError("force derivative bound must be finite");
    const double rate = std::sqrt(2.0) * op.kernel().sup_norm() * std::sqrt(op.grid()->measure()) + force_bound;
    return std::exp(T * rate);
}

/// Same, with L_f the sampled (margined) bound of |f'| over `span`.
inline double gronwall_constant(const DiscreteOperator& op, const ForceTerm& force, const Interval& span, double T) {
    return gronwall_constant(op, force.identically_zero() ? 0.0 : force.derivative_bound(span.lo, span.hi), T);
}

struct ContinuousDependenceReport {
    double initial_distance = 0.0;
    double final_distance = 0.0;
    double gronwall = 0.0;
    double ratio = 0.0;  // final / initial (0 when both vanish)
    double slack = 0.0;  // bound / final distance (inf when the distance is zero)
    bool holds = false;
};

/// Integrates u0 and v0 side by side and compares ||u(T) - v(T)|| with C(T) ||u0 - v0||.
inline ContinuousDependenceReport continuous_dependence_check(const DiscreteOperator& op, const ForceTerm& force,
                                                              const Field& u0, const Field& v0,
                                                              const EvolveOptions& opt) {
    require_same_grid(u0, v0);
    EvolveOptions o = opt;
    if (!o.force_interval) {
        const auto [a0, a1] = std::minmax_element(u0.values().begin(), u0.values().end());
        const auto [b0, b1] = std::minmax_element(v0.values().begin(), v0.values().end());
        const double lo = std::min(*a0, *b0), hi = std::max(*a1, *b1);
        const double pad = std::max(0.1 * (hi - lo), 0.1);
        o.force_interval = Interval{lo - pad, hi + pad};
    }
    const auto tu = evolve(op, force, u0, o);
    const auto tv = evolve(op, force, v0, o);
    if (tu.aborted || tv.aborted) throw NumericalError("trajectory blew up during the continuous-dependence check");
    const Grid& g = *op.grid();
    std::vector<double> d0(u0.size()), d1(u0.size());
    for (std::size_t i = 0; i < d0.size(); ++i) {
        d0[i] = u0[i] - v0[i];
        d1[i] = tu.final_state[i] - tv.final_state[i];
    }
    ContinuousDependenceReport r;
    r.initial_distance = l2_norm(g, d0);
    r.final_distance = l2_norm(g, d1);
    r.gronwall = gronwall_constant(op, force, *o.force_interval, o.T);
    const double bound = r.gronwall * r.initial_distance;
    r.ratio = r.initial_distance > 0.0 ? r.final_distance / r.initial_distance : 0.0;
    r.slack = r.final_distance > 0.0 ? bound / r.final_distance : std::numeric_limits<double>::infinity();
    r.holds = r.final_distance <= bound;
    return r;
}

struct InvariantRegionReport {
    double max_violation = 0.0;
    double time_of_max = 0.0;
};

/// max over records of max(u1 - nu, mu - u2, 0); the endpoints must be zeros of f.
inline InvariantRegionReport invariant_region_monitor(const EvolutionTrace& trace, const ForceTerm& force,
                                                      const Interval& gamma) {
    if (!(gamma.lo < gamma.hi)) throw ConfigError("invariant region needs u1 < u2");
    for (double z : {gamma.lo, gamma.hi})
        if (!(std::abs(force(z)) <= kZeroTolerance)) {
            std::ostringstream msg;
            msg << "invariant region endpoint " << z << " is not a zero of f";
            throw ConfigError(msg.str());
        }
    InvariantRegionReport r;
    for (const auto& rec : trace.records) {
        const double v = std::max({gamma.lo - rec.nu, rec.mu - gamma.hi, 0.0});
        if (v > r.max_violation) {
            r.max_violation = v;
            r.time_of_max = rec.t;
        }
    }
    return r;
}

struct ComparisonReport {
    double max_violation = 0.0;  // worst of mu' - f(mu) and f(nu) - nu' over record pairs
};

/// Forward-difference check of mu' <= f(mu) and nu' >= f(nu). Each difference
/// quotient is compared with the extreme of f over the two endpoint values.
inline ComparisonReport comparison_check(const EvolutionTrace& trace, const ForceTerm& force) {
    ComparisonReport r;
    for (std::size_t i = 1; i < trace.records.size(); ++i) {
        const auto& a = trace.records[i - 1];
        const auto& b = trace.records[i];
        const double dt = b.t - a.t;
        if (!(dt > 0.0)) continue;
        const double dmu = (b.mu - a.mu) / dt;
        const double dnu = (b.nu - a.nu) / dt;
        r.max_violation = std::max(r.max_violation, dmu - std::max(force(a.mu), force(b.mu)));
        r.max_violation = std::max(r.max_violation, std::min(force(a.nu), force(b.nu)) - dnu);
    }
    return r;
}

struct SigmaReport {
    double beta_1 = 0.0;
    double force_bound = 0.0;
    double sigma = 0.0;
    double a_1 = 0.0;
    double a_2 = 0.0;
    double operator_bound = 0.0;
    double measure = 0.0;
};

/// Largest non-trivial eigenvalue. Torus: max over 0 < |k_i| <= k_max of the
/// analytic beta_k. Masked grids: top eigenvalue of A restricted to mean-zero
/// vectors (the constant direction is pushed below the spectrum).
inline double largest_nontrivial_eigenvalue(const DiscreteOperator& op, int k_max = -1) {
    if (op.grid()->is_torus()) {
        if (k_max < 0) k_max = op.grid()->dim() == 1 ? 16 : 4;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& e : analytic_eigenvalues(op.kernel(), k_max))
            if (e.multiplicity == 2) best = std::max(best, e.beta);
        return best;
    }
    const auto n = static_cast<Eigen::Index>(op.size());
    if (n < 2) throw DomainError("mean-zero subspace is empty on a one-node grid");
    const double shift = op.operator_norm_bound() + 1.0;
    RowMatrix b = op.matrix();
    b.array() -= shift / static_cast<double>(n);
    return numeric_eigenvalues(b).back();
}

/// sigma = 2 (beta_1 + max_Gamma |f'|), a_1 = ||u0 - mean(u0)||, a_2 = C(L) a_1^2.
inline SigmaReport sigma_criterion(const DiscreteOperator& op, const ForceTerm& force, const Interval& gamma,
                                   const Field& u0, int k_max = -1) {
    SigmaReport r;
    r.beta_1 = largest_nontrivial_eigenvalue(op, k_max);
    r.force_bound = force.identically_zero() ? 0.0 : force.max_abs_derivative(gamma.lo, gamma.hi);
    r.sigma = 2.0 * (r.beta_1 + r.force_bound);
    const double m = mean_mass(u0);
    std::vector<double> d(u0.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = u0[i] - m;
    r.a_1 = l2_norm(*u0.grid(), d);
    r.operator_bound = op.operator_norm_bound();
    r.a_2 = r.operator_bound * r.a_1 * r.a_1;
    r.measure = op.grid()->measure();
    return r;
}

/// Least-squares slope of log(y) against t over entries with y > floor.
inline double fitted_rate(const std::vector<double>& t, const std::vector<double>& y, double floor = 1e-12) {
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(y[i] > floor)) continue;
        const double ly = std::log(y[i]);
        st += t[i];
        sy += ly;
        stt += t[i] * t[i];
        sty += t[i] * ly;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double dn = static_cast<double>(n);
    const double den = dn * stt - st * st;
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (dn * sty - st * sy) / den;
}

/// Absolute floor below which trajectory diagnostics count as zero.
inline constexpr double kDiagnosticFloor = 1e-12;

struct DecayReport {
    bool holds = true;
    double worst_ratio = 0.0;  // max value / bound over records with a non-zero bound
    double fitted_rate = std::numeric_limits<double>::quiet_NaN();
    std::size_t failures = 0;
};

/// deviation(t) <= a_1 e^{sigma t} (1 + tol) at every record.
inline DecayReport deviation_decay_check(const EvolutionTrace& trace, const SigmaReport& s, double tol = 1e-6) {
    DecayReport r;
    std::vector<double> t, y;
    for (const auto& rec : trace.records) {
        const double bound = s.a_1 * std::exp(s.sigma * rec.t);
        if (rec.deviation > bound * (1.0 + tol) + kDiagnosticFloor) {
            r.holds = false;
            ++r.failures;
        }
        if (bound > 0.0) r.worst_ratio = std::max(r.worst_ratio, rec.deviation / bound);
        t.push_back(rec.t);
        y.push_back(rec.deviation);
    }
    r.fitted_rate = fitted_rate(t, y);
    return r;
}

struct MeanMassReport {
    bool holds = true;
    double k_theory = 0.0;   // max_Gamma |f'| a_1 / sqrt(|Omega|)
    double k_fitted = 0.0;   // max residual e^{-sigma t}
    double worst_ratio = 0.0;
    double max_residual = 0.0;
    double fitted_rate = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> times;
    std::vector<double> residuals;
};

/// |u_Omega'(t) - f(u_Omega(t))| along the trace, with u_Omega' from
/// five-point differences (records must be equally spaced; the end records
/// are skipped), compared with K e^{sigma t}, K = max|f'| a_1 / sqrt(|Omega|).
inline MeanMassReport mean_mass_ode_residual(const EvolutionTrace& trace, const ForceTerm& force, const SigmaReport& s,
                                             double tol = 1e-6) {
    MeanMassReport r;
    r.k_theory = s.force_bound * s.a_1 / std::sqrt(s.measure);
    const auto& rec = trace.records;
    for (std::size_t i = 2; i + 2 < rec.size(); ++i) {
        const double h = rec[i + 1].t - rec[i].t;
        if (std::abs((rec[i + 2].t - rec[i - 2].t) - 4.0 * h) > 1e-9 * h) continue;
        const double d = (-rec[i + 2].mean + 8.0 * rec[i + 1].mean - 8.0 * rec[i - 1].mean + rec[i - 2].mean) / (12.0 * h);
        const double res = std::abs(d - force(rec[i].mean));
        const double bound = r.k_theory * std::exp(s.sigma * rec[i].t);
        if (res > bound * (1.0 + tol) + 1e3 * kDiagnosticFloor) r.holds = false;
        if (bound > 0.0) r.worst_ratio = std::max(r.worst_ratio, res / bound);
        r.k_fitted = std::max(r.k_fitted, res * std::exp(-s.sigma * rec[i].t));
        r.max_residual = std::max(r.max_residual, res);
        r.times.push_back(rec[i].t);
        r.residuals.push_back(res);
    }
    r.fitted_rate = fitted_rate(r.times, r.residuals, 1e-9);
    return r;
}

/// |<L u, u>| <= a_2 e^{2 sigma t} (1 + tol) at every record.
inline DecayReport dirichlet_form_check(const EvolutionTrace& trace, const SigmaReport& s, double tol = 1e-6) {
    DecayReport r;
    std::vector<double> t, y;
    for (const auto& rec : trace.records) {
        const double bound = s.a_2 * std::exp(2.0 * s.sigma * rec.t);
        const double v = std::abs(rec.dirichlet);
        if (v > bound * (1.0 + tol) + kDiagnosticFloor) {
            r.holds = false;
            ++r.failures;
        }
        if (bound > 0.0) r.worst_ratio = std::max(r.worst_ratio, v / bound);
        t.push_back(rec.t);
        y.push_back(v);
    }
    r.fitted_rate = fitted_rate(t, y);
    return r;
}

struct EnergyMonotonicityReport {
    bool holds = true;
    double max_increase = 0.0;
};

inline EnergyMonotonicityReport energy_monotonicity(const EvolutionTrace& trace, double tol = 1e-10) {
    EnergyMonotonicityReport r;
    for (std::size_t i = 1; i < trace.records.size(); ++i) {
        const double inc = trace.records[i].energy - trace.records[i - 1].energy;
        r.max_increase = std::max(r.max_increase, inc);
        if (inc > tol) r.holds = false;
    }
    return r;
}

}  // namespace nld
