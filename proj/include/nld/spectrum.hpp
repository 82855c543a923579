#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nld/error.hpp"
#include "nld/grid.hpp"
#include "nld/kernel.hpp"
#include "nld/operator.hpp"

namespace nld {

/// beta_k = integral of J_eps(z) (cos(k.z) - 1) over the torus. Evaluated in
/// the rescaled variable as C eps^{-m} integral J_per(w) (-2 sin^2(eps k.w / 2)) dw,
/// which avoids cancellation for small eps |k|.
inline double analytic_eigenvalue(const ScaledKernel& kernel, const Wavenumber& k) {
    if (kernel.mode() != KernelMode::periodic) throw ModeError("analytic eigenvalues require a periodic-mode kernel");
    if (k[0] == 0 && (kernel.dim() == 1 || k[1] == 0)) return 0.0;
    if (kernel.norm_const() == 0.0) return 0.0;
    const int d = kernel.dim();
    const double eps = kernel.epsilon();
    const double integral = kernel.integrate_base([&](const Point& w) {
        double phase = 0.0;
        for (int i = 0; i < d; ++i) phase += k[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
        const double s = std::sin(0.5 * eps * phase);
        return -2.0 * s * s;
    });
    return kernel.norm_const() * std::pow(eps, -kernel.m()) * integral;
}

struct AnalyticEigenvalue {
    Wavenumber k{0, 0};
    double beta = 0.0;
    int multiplicity = 1;
};

/// beta_k for one representative of each pair {k, -k} with |k_i| <= k_max,
/// in increasing order of k (1D: k = 0..k_max).
inline std::vector<AnalyticEigenvalue> analytic_eigenvalues(const ScaledKernel& kernel, int k_max) {
    if (kernel.mode() != KernelMode::periodic) throw ModeError("analytic eigenvalues require a periodic-mode kernel");
    if (k_max < 0) throw ConfigError("k_max must be non-negative");
    std::vector<AnalyticEigenvalue> out;
    if (kernel.dim() == 1) {
        for (int k = 0; k <= k_max; ++k) out.push_back({{k, 0}, 0.0, k == 0 ? 1 : 2});
    } else {
        for (int a = 0; a <= k_max; ++a)
            for (int b = -k_max; b <= k_max; ++b) {
                if (a == 0 && b < 0) continue;
                out.push_back({{a, b}, 0.0, (a == 0 && b == 0) ? 1 : 2});
            }
    }
    for (auto& e : out) e.beta = analytic_eigenvalue(kernel, e.k);
    return out;
}

enum class EigenPhase { cosine, sine };

/// cos(k.x) or sin(k.x) sampled on a torus grid.
inline Field eigenfunction(const GridPtr& grid, const Wavenumber& k, EigenPhase phase) {
    if (!grid->is_torus()) throw ModeError("trigonometric eigenfunctions live on torus grids");
    const bool zero = k[0] == 0 && (grid->dim() == 1 || k[1] == 0);
    if (zero && phase == EigenPhase::sine) throw DomainError("sin(0.x) is the zero field, not an eigenfunction");
    const int d = grid->dim();
    return Field::sample(grid, [&](const Point& x) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += k[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        return phase == EigenPhase::cosine ? std::cos(s) : std::sin(s);
    });
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    double distance(double x) const { return x < lo ? lo - x : (x > hi ? x - hi : 0.0); }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// [min b_eps, max b_eps] over the grid nodes.
inline Interval essential_range(const DiscreteOperator& op) {
    const auto& b = op.deficit();
    const auto [lo, hi] = std::minmax_element(b.begin(), b.end());
    return {*lo, *hi};
}

enum class SpectralClass { near_essential, isolated };

inline const char* to_string(SpectralClass c) {
    return c == SpectralClass::isolated ? "isolated" : "near_essential";
}

/// An analytic eigenvalue paired with the numeric eigenvalues matched to it.
struct SpectralMatch {
    AnalyticEigenvalue analytic;
    std::vector<double> numeric;
    double abs_err = 0.0;  // worst |numeric - analytic| over the matched copies
};

struct SpectralReport {
    Interval essential;
    double delta_class = 0.0;
    std::vector<double> numeric;  // ascending
    std::vector<SpectralClass> classes;
    std::vector<SpectralMatch> matches;  // torus only
    double beta_infinity = std::numeric_limits<double>::quiet_NaN();
    double rho = std::numeric_limits<double>::quiet_NaN();

    double max_match_error() const {
        double e = 0.0;
        for (const auto& m : matches) e = std::max(e, m.abs_err);
        return e;
    }
};

/// Eigenvalues of the assembled matrix, ascending.
inline std::vector<double> numeric_eigenvalues(const RowMatrix& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        std::ostringstream msg;
        const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
        msg << "symmetric eigensolve failed: size " << a.rows() << ", max |entry| " << a.cwiseAbs().maxCoeff()
            << ", asymmetry " << asym << ", finite " << (a.allFinite() ? "yes" : "no");
        throw NumericalError(msg.str());
    }
    const auto& ev = solver.eigenvalues();
    return std::vector<double>(ev.data(), ev.data() + ev.size());
}

struct LimitEigenvalue {
    double beta_infinity = 0.0;
    double rho = 0.0;
    double identity_value = 0.0;  // -2 rho / eps^m
    double upper_bound = 0.0;     // -eps^{2-m} / pi^2
    double lower_bound = 0.0;     // -eps^{-m}, reported only
    bool upper_bound_holds = false;
    bool lower_bound_holds = false;
};

/// beta_inf = -J_eps^(0) together with rho = int J_per / int J_per |w|^2.
inline LimitEigenvalue limit_eigenvalue(const ScaledKernel& kernel) {
    if (kernel.mode() != KernelMode::periodic) throw ModeError("limit eigenvalue requires a periodic-mode kernel");
    LimitEigenvalue r;
    const auto mo = kernel.base_moments();
    const double eps = kernel.epsilon(), m = kernel.m();
    r.beta_infinity = -kernel.fourier_coefficient(Wavenumber{0, 0});
    r.rho = mo.mass / mo.second;
    r.identity_value = -2.0 * r.rho / std::pow(eps, m);
    r.upper_bound = -std::pow(eps, 2.0 - m) / (kPi * kPi);
    r.lower_bound = -std::pow(eps, -m);
    r.upper_bound_holds = r.beta_infinity <= r.upper_bound;
    r.lower_bound_holds = r.beta_infinity >= r.lower_bound;
    return r;
}

/// Numeric spectrum of the assembled operator, classified against the
/// essential range. On the torus each analytic beta_k (|k_i| <= k_max) is
/// matched greedily to its nearest unused numeric eigenvalues (two copies for
/// k != 0). A negative delta selects the default 10 h max|b|.
inline SpectralReport classify_spectrum(const DiscreteOperator& op, int k_max = 8, double delta = -1.0) {
    SpectralReport r;
    r.essential = essential_range(op);
    double bmax = std::max(std::abs(r.essential.lo), std::abs(r.essential.hi));
    r.delta_class = delta >= 0.0 ? delta : 10.0 * op.grid()->spacing() * bmax;
    r.numeric = numeric_eigenvalues(op.matrix());
    r.classes.reserve(r.numeric.size());
    for (double v : r.numeric)
        r.classes.push_back(r.essential.distance(v) <= r.delta_class ? SpectralClass::near_essential
                                                                      : SpectralClass::isolated);
    if (!op.grid()->is_torus()) return r;

    const auto lim = limit_eigenvalue(op.kernel());
    r.beta_infinity = lim.beta_infinity;
    r.rho = lim.rho;
    std::vector<bool> used(r.numeric.size(), false);
    for (const auto& a : analytic_eigenvalues(op.kernel(), k_max)) {
        SpectralMatch m{a, {}, 0.0};
        for (int copy = 0; copy < a.multiplicity; ++copy) {
            std::size_t best = r.numeric.size();
            double dist = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < r.numeric.size(); ++i) {
                if (used[i]) continue;
                const double d = std::abs(r.numeric[i] - a.beta);
                if (d < dist) {
                    dist = d;
                    best = i;
                }
            }
            if (best == r.numeric.size()) break;
            used[best] = true;
            m.numeric.push_back(r.numeric[best]);
            m.abs_err = std::max(m.abs_err, dist);
        }
        if (static_cast<int>(m.numeric.size()) < a.multiplicity) m.abs_err = std::numeric_limits<double>::infinity();
        r.matches.push_back(std::move(m));
    }
    return r;
}

struct AsymptoticRow {
    double epsilon = 0.0;
    Wavenumber k{0, 0};
    double beta = 0.0;
    double predicted = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN();  // previous error / this error
    bool support_fits = true;
};

/// Leading-order small-eps prediction -eps^{2-m} |k|^2 / n.
inline double predicted_eigenvalue(double epsilon, double m, const Wavenumber& k, int dim) {
    double k2 = 0.0;
    for (int i = 0; i < dim; ++i) k2 += static_cast<double>(k[static_cast<std::size_t>(i)]) * k[static_cast<std::size_t>(i)];
    return -std::pow(epsilon, 2.0 - m) * k2 / dim;
}

/// beta_k(eps) for each eps under periodic normalization. Rows keep the input
/// order; `ratio` is the quotient of successive errors |beta - predicted|.
/// Rows whose scaled support does not fit one period are flagged.
inline std::vector<AsymptoticRow> asymptotic_scan(const BaseKernel& base, const Wavenumber& k, double m,
                                                  const std::vector<double>& epsilons, QuadratureOptions q = {},
                                                  bool parallel = true) {
    auto one = [&](double eps) {
        const auto kernel = ScaledKernel::periodic(base, eps, m, q);
        AsymptoticRow row;
        row.epsilon = eps;
        row.k = k;
        row.beta = analytic_eigenvalue(kernel, k);
        row.predicted = predicted_eigenvalue(eps, m, k, base.dim());
        row.support_fits = kernel.support_fits_period();
        return row;
    };
    std::vector<AsymptoticRow> rows;
    if (parallel) {
        std::vector<std::future<AsymptoticRow>> jobs;
        for (double e : epsilons) jobs.push_back(std::async(std::launch::async, one, e));
        for (auto& j : jobs) rows.push_back(j.get());
    } else {
        for (double e : epsilons) rows.push_back(one(e));
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double prev = std::abs(rows[i - 1].beta - rows[i - 1].predicted);
        const double cur = std::abs(rows[i].beta - rows[i].predicted);
        rows[i].ratio = cur > 0.0 ? prev / cur : std::numeric_limits<double>::infinity();
    }
    return rows;
}

}  // namespace nld
