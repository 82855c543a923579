#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nld/dynamics.hpp"
#include "nld/error.hpp"
#include "nld/force.hpp"
#include "nld/grid.hpp"
#include "nld/operator.hpp"
#include "nld/spectrum.hpp"

namespace nld {

/// Piecewise-constant template taking the zero u1 on nodes labelled 0 and the
/// zero u2 on nodes labelled 1, with the admissible perturbation radius R.
struct JumpTemplate {
    std::vector<std::uint8_t> labels;
    double u1 = 0.0;
    double u2 = 0.0;
    double radius = 0.0;

    /// Label 0 where the coordinate along `axis` lies below the grid's midline.
    static JumpTemplate half_split(const Grid& grid, double u1, double u2, double radius, int axis = 0) {
        if (axis < 0 || axis >= grid.dim()) throw ConfigError("split axis out of range");
        const auto a = static_cast<std::size_t>(axis);
        const double mid = grid.origin()[a] + 0.5 * grid.spacing() * static_cast<double>(grid.cells()[a]);
        JumpTemplate t{{}, u1, u2, radius};
        t.labels.resize(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) t.labels[i] = grid.coord(i)[a] < mid ? 0 : 1;
        return t;
    }

    double value(std::size_t node) const { return labels[node] == 0 ? u1 : u2; }

    Field field(const GridPtr& grid) const {
        std::vector<double> v(labels.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = value(i);
        return Field(grid, std::move(v));
    }

    void validate(const Grid& grid, const ForceTerm& force) const {
        if (labels.size() != grid.size()) throw ShapeError("template labels do not cover the grid");
        const auto ones = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
        if (ones == 0 || ones == labels.size()) throw DomainError("both template parts must be non-empty");
        if (!(radius >= 0.0)) throw ConfigError("template radius must be non-negative");
        for (double z : {u1, u2}) {
            if (!(std::abs(force(z)) <= kZeroTolerance)) {
                std::ostringstream msg;
                msg << "template value " << z << " is not a zero of f";
                throw ConfigError(msg.str());
            }
            if (force.derivative(z) == 0.0) {
                std::ostringstream msg;
                msg << "f'(" << z << ") = 0: the fixed-point map divides by it";
                throw NumericalError(msg.str());
            }
        }
    }
};

struct ContractionMargins {
    double cond1 = 0.0;  // self-mapping of the ball of radius R
    double cond2 = 0.0;  // 1 - Lipschitz constant of the map
    double operator_bound = 0.0;
    double inverse_slope = 0.0;  // max 1/|f'(u_i)|
    double f1_bound = 0.0;
    double f2_bound = 0.0;

    double contraction_constant() const { return 1.0 - cond2; }
    bool positive() const { return cond1 > 0.0 && cond2 > 0.0; }
};

/// Margins of the two sufficient conditions, with f' and f'' bounded (10%
/// margin) on [min(u1,u2) - R, max(u1,u2) + R] and C(L) = 2 max|b|.
inline ContractionMargins contraction_conditions(const DiscreteOperator& op, const ForceTerm& force,
                                                 const JumpTemplate& tmpl) {
    tmpl.validate(*op.grid(), force);
    ContractionMargins c;
    const double lo = std::min(tmpl.u1, tmpl.u2) - tmpl.radius;
    const double hi = std::max(tmpl.u1, tmpl.u2) + tmpl.radius;
    c.operator_bound = op.operator_norm_bound();
    c.inverse_slope = std::max(1.0 / std::abs(force.derivative(tmpl.u1)), 1.0 / std::abs(force.derivative(tmpl.u2)));
    c.f1_bound = force.derivative_bound(lo, hi);
    c.f2_bound = force.second_derivative_bound(lo, hi);
    const double usup = std::max(std::abs(tmpl.u1), std::abs(tmpl.u2));
    const double r = tmpl.radius;
    c.cond1 = r - c.inverse_slope * (c.operator_bound * (usup + r) + c.f2_bound * r * r);
    c.cond2 = 1.0 - c.inverse_slope * (c.operator_bound + 2.0 * c.f1_bound * r);
    return c;
}

struct SteadyOptions {
    double tol = 1e-12;
    std::size_t max_iter = 500;
    bool force_override = false;  // iterate even without a positive certificate
};

struct StabilityReport {
    double gamma0 = 0.0;
    double max_fprime = 0.0;
    bool rayleigh_ok = false;
    std::vector<double> top_vector;  // unit weighted-L2 norm
};

struct SteadyStateResult {
    Field U;
    double residual_inf = 0.0;
    double phi_sup = 0.0;
    std::size_t iterations = 0;
    ContractionMargins margins;
    bool certified = false;
    double observed_ratio = 0.0;
    double gamma0 = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    std::string diagnostics;
};

/// ||L U + f(U) - lambda U||_inf.
inline double steady_residual(const DiscreteOperator& op, const ForceTerm& force, std::span<const double> u,
                              double lambda = 0.0) {
    std::vector<double> lu(u.size());
    op.apply(u, lu);
    double r = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) r = std::max(r, std::abs(lu[i] + force(u[i]) - lambda * u[i]));
    return r;
}

/// gamma0 = top eigenvalue of A + diag(f'(U)), with the Rayleigh check gamma0 <= max f'(U).
inline StabilityReport linear_stability(const DiscreteOperator& op, const ForceTerm& force, std::span<const double> u) {
    if (!detail::all_finite(u)) throw NumericalError("linearization point is not finite");
    const auto n = static_cast<Eigen::Index>(u.size());
    Eigen::MatrixXd m = op.matrix();
    StabilityReport r;
    r.max_fprime = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = force.derivative(u[static_cast<std::size_t>(i)]);
        m(i, i) += d;
        r.max_fprime = std::max(r.max_fprime, d);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) throw NumericalError("eigensolve of the linearization failed");
    r.gamma0 = solver.eigenvalues()(n - 1);
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    r.rayleigh_ok = r.gamma0 <= r.max_fprime + 1e-12 * scale;
    const Eigen::VectorXd v = solver.eigenvectors().col(n - 1) / std::sqrt(op.grid()->cell_volume());
    r.top_vector.assign(v.data(), v.data() + v.size());
    return r;
}

inline StabilityReport linear_stability(const DiscreteOperator& op, const ForceTerm& force, const Field& u) {
    return linear_stability(op, force, u.values());
}

/// Fixed-point iteration phi <- -(1/f'(T)) (L[T + phi] + f(T + phi) - f(T) - f'(T) phi)
/// from phi = 0, T the jump template. Stops when successive iterates differ by
/// at most tol in sup norm.
inline SteadyStateResult solve_discontinuous(const DiscreteOperator& op, const ForceTerm& force,
                                             const JumpTemplate& tmpl, const SteadyOptions& opt = {}) {
    SteadyStateResult res;
    res.margins = contraction_conditions(op, force, tmpl);
    res.certified = res.margins.positive() && op.kernel().m() > 0.0;
    if (!res.certified && !opt.force_override) {
        std::ostringstream msg;
        msg << "contraction certificate not positive (cond1 = " << res.margins.cond1 << ", cond2 = " << res.margins.cond2
            << ", m = " << op.kernel().m() << "); pass the override to iterate anyway";
        throw ConfigError(msg.str());
    }
    const std::size_t n = op.size();
    std::vector<double> base(n), slope(n), phi(n, 0.0), next(n), w(n), lw(n);
    for (std::size_t i = 0; i < n; ++i) {
        base[i] = tmpl.value(i);
        slope[i] = force.derivative(base[i]);
    }
    double prev_step = 0.0;
    for (std::size_t it = 0; it <= opt.max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) w[i] = base[i] + phi[i];
        if (it == 0 && steady_residual(op, force, w) <= opt.tol) {
            res.converged = true;
            break;
        }
        if (it == opt.max_iter) {
            res.diagnostics = "iteration limit reached";
            break;
        }
        op.apply(w, lw);
        double step = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = lw[i] + force(w[i]) - force(base[i]) - slope[i] * phi[i];
            next[i] = -g / slope[i];
            step = std::max(step, std::abs(next[i] - phi[i]));
        }
        if (!detail::all_finite(next)) {
            res.diagnostics = "iterate became non-finite";
            break;
        }
        if (it > 0 && prev_step > 1e3 * std::numeric_limits<double>::min() && step > 0.0 && prev_step > 1e-14)
            res.observed_ratio = std::max(res.observed_ratio, step / prev_step);
        phi.swap(next);
        res.iterations = it + 1;
        prev_step = step;
        if (step <= opt.tol) {
            res.converged = true;
            break;
        }
    }
    for (std::size_t i = 0; i < n; ++i) w[i] = base[i] + phi[i];
    res.phi_sup = sup_norm(phi);
    res.residual_inf = steady_residual(op, force, w);
    res.U = Field(op.grid(), w);
    res.gamma0 = linear_stability(op, force, w).gamma0;
    return res;
}

struct LinearizedDecayReport {
    double gamma0 = 0.0;
    bool bound_holds = true;
    double worst_ratio = 0.0;    // ||psi||^2 / (||psi0||^2 e^{gamma0 t})
    double fitted_rate = std::numeric_limits<double>::quiet_NaN();  // of ||psi||
    double return_distance = 0.0;  // ||u(T_nl) - U|| for the nonlinear flow from U + psi0
    double nonlinear_time = 0.0;
};

/// RK4 for psi' = (A + diag f'(U)) psi on [0, T], checking the energy bound at
/// every step, followed by the nonlinear flow from U + psi0 over 10/|gamma0|.
inline LinearizedDecayReport linearized_decay_test(const DiscreteOperator& op, const ForceTerm& force, const Field& U,
                                                   const Field& psi0, double T, double dt, double tol = 1e-6) {
    require_same_grid(U, psi0);
    LinearizedDecayReport r;
    const auto stab = linear_stability(op, force, U);
    r.gamma0 = stab.gamma0;
    const std::size_t n = U.size();
    const Grid& g = *op.grid();
    std::vector<double> fp(n);
    for (std::size_t i = 0; i < n; ++i) fp[i] = force.derivative(U[i]);
    auto rhs = [&](std::span<const double> x, std::span<double> out) {
        op.apply(x, out);
        for (std::size_t i = 0; i < n; ++i) out[i] += fp[i] * x[i];
    };
    std::vector<double> psi(psi0.data()), k1(n), k2(n), k3(n), k4(n), tmp(n);
    const double e0 = l2_norm(g, psi) * l2_norm(g, psi);
    const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    std::vector<double> times{0.0}, norms{std::sqrt(e0)};
    for (std::size_t s = 1; s <= steps; ++s) {
        const double t0 = static_cast<double>(s - 1) * dt;
        const double t1 = s == steps ? T : static_cast<double>(s) * dt;
        const double h = t1 - t0;
        rhs(psi, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = psi[i] + 0.5 * h * k1[i];
        rhs(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = psi[i] + 0.5 * h * k2[i];
        rhs(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = psi[i] + h * k3[i];
        rhs(tmp, k4);
        for (std::size_t i = 0; i < n; ++i) psi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        const double e = l2_norm(g, psi) * l2_norm(g, psi);
        const double bound = e0 * std::exp(r.gamma0 * t1);
        if (e > bound * (1.0 + tol) + kDiagnosticFloor) r.bound_holds = false;
        if (bound > 0.0) r.worst_ratio = std::max(r.worst_ratio, e / bound);
        times.push_back(t1);
        norms.push_back(std::sqrt(e));
    }
    r.fitted_rate = fitted_rate(times, norms);

    if (r.gamma0 < 0.0 && e0 > 0.0) {
        std::vector<double> start(n);
        for (std::size_t i = 0; i < n; ++i) start[i] = U[i] + psi0[i];
        EvolveOptions o;
        o.T = 10.0 / std::abs(r.gamma0);
        o.scheme = Scheme::rk4;
        const auto [lo, hi] = std::minmax_element(start.begin(), start.end());
        o.force_interval = Interval{*lo - 0.1, *hi + 0.1};
        const double lip = force.derivative_bound(o.force_interval->lo, o.force_interval->hi);
        o.dt = std::min(dt, 0.5 * stable_dt(op, lip, Scheme::rk4));
        o.record_every = std::numeric_limits<std::size_t>::max();
        const auto tr = evolve(op, force, Field(op.grid(), start), o);
        if (tr.aborted) throw NumericalError("nonlinear return flow blew up");
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = tr.final_state[i] - U[i];
        r.return_distance = l2_norm(g, d);
        r.nonlinear_time = o.T;
    }
    return r;
}

struct CriticalValue {
    double lambda = 0.0;
    double beta = 0.0;
    int multiplicity = 1;
};

/// lambda_c = beta + f'(u*) for numeric eigenvalues beta of A, keeping those in
/// [window.lo, window.hi]; eigenvalues within 1e-9 (relative to max|b|) are
/// merged and counted. Sorted by decreasing lambda.
inline std::vector<CriticalValue> bifurcation_scan(const DiscreteOperator& op, const ForceTerm& force, double u_star,
                                                   const Interval& window) {
    if (!(std::abs(force(u_star)) <= kZeroTolerance)) throw ConfigError("bifurcation scan needs f(u*) = 0");
    const double shift = force.derivative(u_star);
    auto ev = numeric_eigenvalues(op.matrix());
    std::reverse(ev.begin(), ev.end());
    const double merge = 1e-9 * std::max(1.0, op.operator_norm_bound());
    std::vector<CriticalValue> out;
    for (double b : ev) {
        const double lam = b + shift;
        if (lam < window.lo || lam > window.hi) continue;
        if (!out.empty() && std::abs(out.back().beta - b) <= merge) {
            ++out.back().multiplicity;
            continue;
        }
        out.push_back({lam, b, 1});
    }
    return out;
}

struct BranchPoint {
    double lambda = 0.0;
    std::vector<double> U;
    double amplitude = 0.0;  // ||U - u*||_2
    double residual = 0.0;   // ||L U + f(U) - f(u*) - lambda (U - u*)||_inf
};

struct ContinuationOptions {
    double delta = 1e-2;           // predictor amplitude along the critical eigenvector
    double ds = 0.02;              // outward arclength step
    std::size_t steps = 20;        // outward steps
    std::size_t inward = 2;        // extra points at delta/2, delta/4, ...
    double min_ds = 1e-5;
    double newton_tol = 1e-12;
    std::size_t newton_max = 25;
};

struct BranchResult {
    std::vector<BranchPoint> points;  // farthest point first, ordered toward onset
    bool truncated = false;
    std::string diagnostics;
    double lambda_c = 0.0;
    double r_squared = std::numeric_limits<double>::quiet_NaN();  // amplitude^2 vs lambda, amplitude <= 0.3
};

namespace detail {

/// Newton corrector for G(V, lambda) = L V + f(u* + V) - f(u*) - lambda V = 0
/// with one scalar constraint c . (V, lambda) = target, where the weighted
/// inner product uses h^n on the V part. Solved by complete orthogonal
/// decomposition so the neutral direction of a continuous symmetry (torus
/// translations) does not break the step.
struct BranchSolver {
    const DiscreteOperator& op;
    const ForceTerm& force;
    double u_star;
    double fstar;

    std::vector<double> residual(const std::vector<double>& v, double lambda) const {
        const std::size_t n = v.size();
        std::vector<double> lv(n), g(n);
        op.apply(v, lv);
        for (std::size_t i = 0; i < n; ++i) g[i] = lv[i] + force(u_star + v[i]) - fstar - lambda * v[i];
        return g;
    }

    bool correct(std::vector<double>& v, double& lambda, const std::vector<double>& cv, double cl, double target,
                 double tol, std::size_t max_it) const {
        const std::size_t n = v.size();
        const auto N = static_cast<Eigen::Index>(n);
        const double w = op.grid()->cell_volume();
        for (std::size_t it = 0; it < max_it; ++it) {
            const auto g = residual(v, lambda);
            double c = cl * lambda - target;
            for (std::size_t i = 0; i < n; ++i) c += w * cv[i] * v[i];
            double gmax = std::abs(c);
            for (double x : g) gmax = std::max(gmax, std::abs(x));
            if (!std::isfinite(gmax)) return false;
            if (gmax <= tol) return true;
            Eigen::MatrixXd jac(N + 1, N + 1);
            jac.topLeftCorner(N, N) = op.matrix();
            Eigen::VectorXd rhs(N + 1);
            for (Eigen::Index i = 0; i < N; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                jac(i, i) += force.derivative(u_star + v[ui]) - lambda;
                jac(i, N) = -v[ui];
                jac(N, i) = w * cv[ui];
                rhs(i) = -g[ui];
            }
            jac(N, N) = cl;
            rhs(N) = -c;
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
            cod.setThreshold(1e-11);
            cod.compute(jac);
            const Eigen::VectorXd dx = cod.solve(rhs);
            if (!dx.allFinite()) return false;
            for (std::size_t i = 0; i < n; ++i) v[i] += dx(static_cast<Eigen::Index>(i));
            lambda += dx(N);
        }
        const auto g = residual(v, lambda);
        double gmax = 0.0;
        for (double x : g) gmax = std::max(gmax, std::abs(x));
        return gmax <= tol;
    }
};

/// R^2 of the least-squares line y ~ a + b x.
inline double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    if (x.size() < 3) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy * sxy / (sxx * syy);
}

}  // namespace detail

/// Pseudo-arclength continuation of non-constant solutions of
/// L V + f(u* + V) - f(u*) = lambda V, U = u* + V, branching from lambda_c.
/// The first point fixes the projection of V on the critical eigenvector at
/// delta; outward points follow the secant predictor with step halving on
/// Newton failure; inward points fix the projection at delta/2, delta/4, ...
inline BranchResult continue_branch(const DiscreteOperator& op, const ForceTerm& force, double u_star, double lambda_c,
                                    const ContinuationOptions& opt = {}) {
    if (!(std::abs(force(u_star)) <= kZeroTolerance)) throw ConfigError("continuation needs f(u*) = 0");
    const std::size_t n = op.size();
    const Grid& g = *op.grid();
    const double w = g.cell_volume();
    BranchResult out;
    out.lambda_c = lambda_c;

    // critical eigenvector: eigenvalue of A closest to lambda_c - f'(u*)
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op.matrix());
    if (solver.info() != Eigen::Success) throw NumericalError("eigensolve for the critical mode failed");
    const double target_beta = lambda_c - force.derivative(u_star);
    Eigen::Index best = 0;
    (solver.eigenvalues().array() - target_beta).abs().minCoeff(&best);
    const Eigen::VectorXd ev = solver.eigenvectors().col(best) / std::sqrt(w);
    std::vector<double> phi(ev.data(), ev.data() + ev.size());

    const detail::BranchSolver bs{op, force, u_star, force(u_star)};
    auto make_point = [&](const std::vector<double>& v, double lambda) {
        BranchPoint p;
        p.lambda = lambda;
        p.U.resize(n);
        for (std::size_t i = 0; i < n; ++i) p.U[i] = u_star + v[i];
        p.amplitude = l2_norm(g, v);
        double r = 0.0;
        for (double x : bs.residual(v, lambda)) r = std::max(r, std::abs(x));
        p.residual = r;
        return p;
    };
    auto projected = [&](double delta, std::vector<double>& v, double& lambda) {
        v.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) v[i] = delta * phi[i];
        lambda = lambda_c;
        return bs.correct(v, lambda, phi, 0.0, delta, opt.newton_tol, opt.newton_max);
    };

    std::vector<double> v0, v1;
    double l0 = 0.0, l1 = 0.0;
    if (!projected(opt.delta, v0, l0) || !projected(2.0 * opt.delta, v1, l1)) {
        out.truncated = true;
        out.diagnostics = "Newton failed at the first branch points";
        return out;
    }
    std::vector<BranchPoint> outward{make_point(v0, l0), make_point(v1, l1)};

    double ds = opt.ds;
    for (std::size_t step = 0; step < opt.steps;) {
        // secant tangent in the weighted norm
        std::vector<double> tv(n);
        double tl = l1 - l0, norm2 = tl * tl;
        for (std::size_t i = 0; i < n; ++i) {
            tv[i] = v1[i] - v0[i];
            norm2 += w * tv[i] * tv[i];
        }
        const double tn = std::sqrt(norm2);
        for (double& x : tv) x /= tn;
        tl /= tn;
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = v1[i] + ds * tv[i];
        double lambda = l1 + ds * tl;
        double target = tl * lambda;
        for (std::size_t i = 0; i < n; ++i) target += w * tv[i] * v[i];
        if (bs.correct(v, lambda, tv, tl, target, opt.newton_tol, opt.newton_max)) {
            v0.swap(v1);
            l0 = l1;
            v1 = std::move(v);
            l1 = lambda;
            outward.push_back(make_point(v1, l1));
            ++step;
            continue;
        }
        ds *= 0.5;
        if (ds < opt.min_ds) {
            out.truncated = true;
            out.diagnostics = "Newton failed at minimum arclength step";
            break;
        }
    }

    out.points.assign(outward.rbegin(), outward.rend());
    double delta = opt.delta;
    for (std::size_t k = 0; k < opt.inward; ++k) {
        delta *= 0.5;
        std::vector<double> v;
        double lambda = 0.0;
        if (!projected(delta, v, lambda)) {
            out.truncated = true;
            out.diagnostics = "Newton failed on an inward point";
            break;
        }
        out.points.push_back(make_point(v, lambda));
    }

    std::vector<double> x, y;
    for (const auto& p : out.points)
        if (p.amplitude <= 0.3) {
            x.push_back(p.lambda);
            y.push_back(p.amplitude * p.amplitude);
        }
    out.r_squared = detail::r_squared(x, y);
    return out;
}

}  // namespace nld
