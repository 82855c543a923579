#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nld/error.hpp"

namespace nld {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Shipped grids and kernels are one- or two-dimensional.
inline constexpr int kMaxDim = 2;

/// Gaussian kernels are cut off at this many standard deviations; the
/// discarded tail mass is below 1e-14.
inline constexpr double kGaussianCutoff = 8.0;

/// A point of R^n (n <= 2); unused trailing coordinates are zero.
using Point = std::array<double, kMaxDim>;
using Wavenumber = std::array<int, kMaxDim>;

enum class KernelShape { tent, gaussian, tabulated };
enum class KernelMode { general, periodic };

inline const char* to_string(KernelShape s) {
    switch (s) {
        case KernelShape::tent: return "tent";
        case KernelShape::gaussian: return "gaussian";
        case KernelShape::tabulated: return "tabulated";
    }
    return "?";
}

inline const char* to_string(KernelMode m) {
    return m == KernelMode::general ? "general" : "periodic";
}

inline double norm(const Point& p, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += p[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(i)];
    return std::sqrt(s);
}

/// Resolution of the dedicated kernel quadrature (independent of any simulation grid).
struct QuadratureOptions {
    std::size_t points_1d = std::size_t{1} << 14;
    std::size_t points_2d = std::size_t{1} << 10;

    std::size_t points(int dim) const { return dim == 1 ? points_1d : points_2d; }
};

/// Composite midpoint rule over the cube [-half_width, half_width]^dim with
/// `m` nodes per axis. Nodes are visited in row-major order so the sum is
/// reproducible bit for bit.
template <class Integrand>
double midpoint_cube(int dim, double half_width, std::size_t m, Integrand&& g) {
    const double h = 2.0 * half_width / static_cast<double>(m);
    double sum = 0.0;
    if (dim == 1) {
        for (std::size_t i = 0; i < m; ++i) {
            const double x = -half_width + (static_cast<double>(i) + 0.5) * h;
            sum += g(Point{x, 0.0});
        }
        return sum * h;
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double x = -half_width + (static_cast<double>(i) + 0.5) * h;
        double row = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double y = -half_width + (static_cast<double>(j) + 0.5) * h;
            row += g(Point{x, y});
        }
        sum += row;
    }
    return sum * h * h;
}

/// Radially symmetric base kernel J on R^n.
class BaseKernel {
public:
    /// J(z) = max(0, 1 - |z|), scaled to unit mass in 2D.
    static BaseKernel tent(int dim) {
        check_dim(dim);
        BaseKernel k(KernelShape::tent, dim);
        k.support_ = 1.0;
        k.scale_ = dim == 1 ? 1.0 : 3.0 / kPi;
        return k;
    }

    /// Standard normal density in n dimensions, truncated at kGaussianCutoff.
    static BaseKernel gaussian(int dim) {
        check_dim(dim);
        BaseKernel k(KernelShape::gaussian, dim);
        k.support_ = kGaussianCutoff;
        k.scale_ = std::pow(kTwoPi, -0.5 * dim);
        return k;
    }

    /// Piecewise-linear profile through (z_i, J_i); zero outside the table.
    /// Symmetry is enforced by averaging J(z) and J(-z).
    static BaseKernel tabulated(std::vector<double> z, std::vector<double> values, int dim) {
        check_dim(dim);
        if (z.size() != values.size() || z.size() < 2)
            throw InvalidKernelError("tabulated kernel needs at least two (z, J) rows of equal length");
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (!std::isfinite(z[i]) || !std::isfinite(values[i]))
                throw InvalidKernelError("tabulated kernel has non-finite entries");
            if (values[i] < 0.0) throw InvalidKernelError("tabulated kernel has negative values");
            if (i > 0 && !(z[i] > z[i - 1]))
                throw InvalidKernelError("tabulated kernel abscissae must be strictly increasing");
        }
        BaseKernel k(KernelShape::tabulated, dim);
        k.support_ = std::max(std::abs(z.front()), std::abs(z.back()));
        k.table_z_ = std::move(z);
        k.table_j_ = std::move(values);
        if (!(k.profile(0.0) > 0.0)) throw InvalidKernelError("tabulated kernel must satisfy J(0) > 0");
        return k;
    }

    /// Two-column CSV (z, J(z)); a non-numeric first line is treated as a header.
    static BaseKernel from_csv(const std::filesystem::path& path, int dim) {
        std::ifstream in(path);
        if (!in) throw InvalidKernelError("cannot open kernel table " + path.string());
        std::vector<double> z, v;
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream row(line);
            double a = 0.0, b = 0.0;
            if (!(row >> a >> b)) {
                if (first) {
                    first = false;
                    continue;
                }
                throw InvalidKernelError("malformed kernel table row: " + line);
            }
            first = false;
            z.push_back(a);
            v.push_back(b);
        }
        return tabulated(std::move(z), std::move(v), dim);
    }

    KernelShape shape() const { return shape_; }
    int dim() const { return dim_; }

    /// Radius outside which J vanishes identically.
    double support_radius() const { return support_; }

    /// J as a function of r = |z| >= 0.
    double profile(double r) const {
        r = std::abs(r);
        if (r > support_) return 0.0;
        switch (shape_) {
            case KernelShape::tent: return scale_ * (1.0 - r);
            case KernelShape::gaussian: return scale_ * std::exp(-0.5 * r * r);
            case KernelShape::tabulated: return 0.5 * (interpolate(r) + interpolate(-r));
        }
        return 0.0;
    }

    double operator()(const Point& z) const { return profile(norm(z, dim_)); }

    /// sup J, attained at the origin for the analytic shapes.
    double peak() const {
        if (shape_ != KernelShape::tabulated) return profile(0.0);
        double best = 0.0;
        for (double z : table_z_) best = std::max(best, profile(z));
        return best;
    }

private:
    BaseKernel(KernelShape s, int dim) : shape_(s), dim_(dim) {}

    static void check_dim(int dim) {
        if (dim < 1 || dim > kMaxDim) throw InvalidKernelError("kernel dimension must be 1 or 2");
    }

    double interpolate(double z) const {
        if (z < table_z_.front() || z > table_z_.back()) return 0.0;
        const auto it = std::upper_bound(table_z_.begin(), table_z_.end(), z);
        if (it == table_z_.end()) return table_j_.back();
        const auto i = static_cast<std::size_t>(it - table_z_.begin());
        const double t = (z - table_z_[i - 1]) / (table_z_[i] - table_z_[i - 1]);
        return (1.0 - t) * table_j_[i - 1] + t * table_j_[i];
    }

    KernelShape shape_;
    int dim_;
    double support_ = 0.0;
    double scale_ = 1.0;
    std::vector<double> table_z_;
    std::vector<double> table_j_;
};

/// Sampled check of the structural kernel assumptions.
struct KernelPropertyReport {
    bool nonnegative = true;
    bool positive_at_origin = false;
    bool symmetric = true;
    double second_moment = 0.0;

    bool ok() const {
        return nonnegative && positive_at_origin && symmetric && std::isfinite(second_moment) &&
               second_moment > 0.0;
    }
};

inline KernelPropertyReport check_kernel_properties(const BaseKernel& j, std::size_t samples = 4097,
                                                    const QuadratureOptions& q = {}) {
    KernelPropertyReport r;
    const double reach = j.support_radius() + 1.0;
    r.positive_at_origin = j(Point{0.0, 0.0}) > 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double z = -reach + 2.0 * reach * static_cast<double>(i) / static_cast<double>(samples - 1);
        for (int axis = 0; axis < j.dim(); ++axis) {
            Point p{0.0, 0.0};
            p[static_cast<std::size_t>(axis)] = z;
            Point mp{-p[0], -p[1]};
            const double a = j(p), b = j(mp);
            if (a < 0.0) r.nonnegative = false;
            if (a != b) r.symmetric = false;
        }
    }
    r.second_moment = midpoint_cube(j.dim(), j.support_radius(), q.points(j.dim()), [&](const Point& z) {
        const double rr = norm(z, j.dim());
        return j(z) * rr * rr;
    });
    return r;
}

/// Scaled kernel J_eps(z) = C eps^{-(m+n)} J(z / eps) (general mode) or its
/// truncated, periodized analogue on the torus (-pi, pi)^n (periodic mode).
/// Immutable after construction.
class ScaledKernel {
public:
    static ScaledKernel general(BaseKernel base, double epsilon, double m, QuadratureOptions q = {}) {
        ScaledKernel k(std::move(base), epsilon, m, KernelMode::general, q);
        k.set_normalization(k.computed_normalization());
        return k;
    }

    static ScaledKernel periodic(BaseKernel base, double epsilon, double m, QuadratureOptions q = {}) {
        ScaledKernel k(std::move(base), epsilon, m, KernelMode::periodic, q);
        k.set_normalization(k.computed_normalization());
        return k;
    }

    /// Kernel with a prescribed normalization constant. A zero constant gives the
    /// decoupled (zero-mass) kernel.
    static ScaledKernel with_normalization(BaseKernel base, double epsilon, double m, KernelMode mode,
                                           double norm_const, QuadratureOptions q = {}) {
        if (!(norm_const >= 0.0) || !std::isfinite(norm_const))
            throw InvalidKernelError("normalization constant must be finite and non-negative");
        ScaledKernel k(std::move(base), epsilon, m, mode, q);
        k.set_normalization(norm_const);
        return k;
    }

    const BaseKernel& base() const { return base_; }
    int dim() const { return base_.dim(); }
    double epsilon() const { return epsilon_; }
    double m() const { return m_; }
    KernelMode mode() const { return mode_; }
    double norm_const() const { return norm_const_; }
    const QuadratureOptions& quadrature() const { return quad_; }

    /// Period of J_per in the rescaled variable w = z / eps.
    double window_period() const { return kTwoPi / epsilon_; }

    /// Support radius of J_eps before periodization.
    double scaled_support() const { return epsilon_ * base_.support_radius(); }

    /// True when the scaled support fits inside one period, so the
    /// periodization adds no overlapping images.
    bool support_fits_period() const { return base_.support_radius() <= 0.5 * window_period(); }

    /// Periodized base kernel J_per(w) = sum over lattice shifts of J(w + j P).
    /// Images are summed in symmetric pairs so that J_per(-w) == J_per(w) exactly.
    double periodized(const Point& w) const {
        const int layers = image_layers();
        if (layers == 0) return base_(w);
        const double p = window_period();
        const int d = dim();
        if (d == 1) {
            double s = base_(w);
            for (int j = 1; j <= layers; ++j)
                s += base_(Point{w[0] + j * p, 0.0}) + base_(Point{w[0] - j * p, 0.0});
            return s;
        }
        double s = base_(w);
        // half lattice: (j1 > 0, any j2) and (j1 == 0, j2 > 0); each paired with its negative
        for (int j1 = 0; j1 <= layers; ++j1) {
            for (int j2 = -layers; j2 <= layers; ++j2) {
                if (j1 == 0 && j2 <= 0) continue;
                const Point a{w[0] + j1 * p, w[1] + j2 * p};
                const Point b{w[0] - j1 * p, w[1] - j2 * p};
                s += base_(a) + base_(b);
            }
        }
        return s;
    }

    /// J_eps(z). Periodic mode first reduces every coordinate into [-pi, pi].
    double operator()(const Point& z) const {
        if (norm_const_ == 0.0) return 0.0;
        if (mode_ == KernelMode::general) {
            const Point w{z[0] / epsilon_, z[1] / epsilon_};
            return amplitude_ * base_(w);
        }
        const Point zr{wrap(z[0]), dim() > 1 ? wrap(z[1]) : 0.0};
        return amplitude_ * periodized(Point{zr[0] / epsilon_, zr[1] / epsilon_});
    }

    /// Integral of J_base(w) g(w) over the rescaled integration region: R^n
    /// (general) or one period window (periodic). When the support fits the
    /// period, the region shrinks to the support cube so kernel kinks at the
    /// support edge fall on quadrature cell boundaries.
    template <class G>
    double integrate_base(G&& g) const {
        const int d = dim();
        const std::size_t pts = quad_.points(d);
        if (mode_ == KernelMode::general || support_fits_period()) {
            return midpoint_cube(d, base_.support_radius(), pts,
                                 [&](const Point& w) { return base_(w) * g(w); });
        }
        return midpoint_cube(d, 0.5 * window_period(), pts,
                             [&](const Point& w) { return periodized(w) * g(w); });
    }

    /// Integral over the torus (or R^n in general mode) of J_eps(z) g(z), in the
    /// physical variable z and through operator().
    template <class G>
    double integrate_scaled(G&& g) const {
        const int d = dim();
        const std::size_t pts = quad_.points(d);
        const double half = (mode_ == KernelMode::general || support_fits_period()) ? scaled_support() : kPi;
        return midpoint_cube(d, half, pts, [&](const Point& z) { return (*this)(z) * g(z); });
    }

    struct Complex {
        double re = 0.0;
        double im = 0.0;
    };

    /// k-th Fourier coefficient over the torus, both parts.
    Complex fourier_coefficient_parts(const Wavenumber& k) const {
        require_periodic("fourier_coefficient");
        const int d = dim();
        auto phase = [&](const Point& z) {
            double s = 0.0;
            for (int i = 0; i < d; ++i) s += k[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
            return s;
        };
        Complex c;
        c.re = integrate_scaled([&](const Point& z) { return std::cos(phase(z)); });
        c.im = integrate_scaled([&](const Point& z) { return std::sin(phase(z)); });
        return c;
    }

    /// Real k-th Fourier coefficient; throws if the imaginary part is not
    /// negligible relative to the zeroth coefficient.
    double fourier_coefficient(const Wavenumber& k) const {
        const Complex c = fourier_coefficient_parts(k);
        const double mass = integrate_scaled([](const Point&) { return 1.0; });
        if (std::abs(c.im) > 1e-10 * std::max(1.0, mass))
            throw NumericalError("Fourier coefficient has a non-negligible imaginary part");
        return c.re;
    }

    /// Mass and second moment of the base kernel over the integration region.
    struct Moments {
        double mass = 0.0;
        double second = 0.0;
    };

    Moments base_moments() const {
        const int d = dim();
        Moments mo;
        mo.mass = integrate_base([](const Point&) { return 1.0; });
        mo.second = integrate_base([&](const Point& w) {
            const double r = norm(w, d);
            return r * r;
        });
        return mo;
    }

    /// sup |J_eps|, sampled along the first axis of the integration window.
    double sup_norm() const {
        if (norm_const_ == 0.0) return 0.0;
        double best = mode_ == KernelMode::general ? base_.peak() : periodized(Point{0.0, 0.0});
        if (mode_ == KernelMode::periodic && !support_fits_period()) {
            const std::size_t pts = quad_.points_1d;
            const double half = 0.5 * window_period();
            for (std::size_t i = 0; i < pts; ++i) {
                const double w = -half + (static_cast<double>(i) + 0.5) * 2.0 * half / static_cast<double>(pts);
                best = std::max(best, periodized(Point{w, 0.0}));
            }
        } else {
            best = std::max(best, base_.peak());
        }
        return amplitude_ * best;
    }

    /// Normalization implied by the kernel and mode:
    /// (1/2 * integral J |z|^2)^{-1} over R^n or over one period window.
    double computed_normalization() const {
        const Moments mo = base_moments();
        if (!(mo.second > 0.0) || !std::isfinite(mo.second))
            throw InvalidKernelError("kernel has zero or non-finite second moment");
        return 1.0 / (0.5 * mo.second);
    }

private:
    ScaledKernel(BaseKernel base, double epsilon, double m, KernelMode mode, QuadratureOptions q)
        : base_(std::move(base)), epsilon_(epsilon), m_(m), mode_(mode), quad_(q) {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidKernelError("epsilon must be positive");
        if (!(m >= 0.0 && m <= 2.0)) throw InvalidKernelError("m must lie in [0, 2]");
    }

    void set_normalization(double c) {
        norm_const_ = c;
        amplitude_ = c * std::pow(epsilon_, -(m_ + dim()));
    }

    int image_layers() const {
        const double p = window_period();
        const double r = base_.support_radius();
        if (r <= 0.5 * p) return 0;
        return static_cast<int>(std::ceil((r + 0.5 * p) / p));
    }

    static double wrap(double x) { return std::remainder(x, kTwoPi); }

    void require_periodic(const char* what) const {
        if (mode_ != KernelMode::periodic)
            throw ModeError(std::string(what) + " requires a periodic-mode kernel");
    }

    BaseKernel base_;
    double epsilon_;
    double m_;
    KernelMode mode_;
    QuadratureOptions quad_;
    double norm_const_ = 0.0;
    double amplitude_ = 0.0;
};

/// C_norm (general) or C_norm^eps (periodic) for the given base kernel.
inline double normalization_constant(const BaseKernel& base, KernelMode mode, double epsilon,
                                     QuadratureOptions q = {}) {
    return ScaledKernel::with_normalization(base, epsilon, 0.0, mode, 0.0, q).computed_normalization();
}

}  // namespace nld
