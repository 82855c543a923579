#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nld/error.hpp"

namespace nld {

/// Nodes used when sampling f', f'' over an interval.
inline constexpr std::size_t kBoundSamples = (std::size_t{1} << 12) + 1;

/// Safety factor applied to sampled derivative bounds used for step sizes and
/// contraction estimates.
inline constexpr double kBoundMargin = 1.1;

/// Tolerance for |f(z)| at a declared zero.
inline constexpr double kZeroTolerance = 1e-10;

/// Upper limit on Simpson panels in the antiderivative.
inline constexpr double kMaxPanels = 65536.0;

/// Reaction term f with its derivatives and declared zeros.
class ForceTerm {
public:
    using Fn = std::function<double(double)>;

    /// General constructor; zeros are sorted and checked.
    ForceTerm(std::string name, Fn f, Fn fp, Fn fpp, std::vector<double> zeros)
        : name_(std::move(name)), f_(std::move(f)), fp_(std::move(fp)), fpp_(std::move(fpp)), zeros_(std::move(zeros)) {
        if (!f_ || !fp_) throw ConfigError("force needs f and f'");
        std::sort(zeros_.begin(), zeros_.end());
        for (double z : zeros_) {
            if (!(std::abs(f_(z)) <= kZeroTolerance)) {
                std::ostringstream msg;
                msg << "declared zero " << z << " of force '" << name_ << "' has |f| = " << std::abs(f_(z));
                throw ConfigError(msg.str());
            }
        }
    }

    static ForceTerm zero() {
        ForceTerm t("zero", [](double) { return 0.0; }, [](double) { return 0.0; }, [](double) { return 0.0; }, {});
        t.identically_zero_ = true;
        return t;
    }

    /// f(u) = r u (1 - u).
    static ForceTerm logistic(double r = 1.0) {
        return ForceTerm(
            "logistic", [r](double u) { return r * u * (1.0 - u); }, [r](double u) { return r * (1.0 - 2.0 * u); },
            [r](double) { return -2.0 * r; }, {0.0, 1.0});
    }

    /// f(u) = a u - b u^3.
    static ForceTerm cubic(double a = 1.0, double b = 1.0) {
        std::vector<double> zeros{0.0};
        if (b != 0.0 && a / b > 0.0) {
            const double s = std::sqrt(a / b);
            zeros = {-s, 0.0, s};
        }
        return ForceTerm(
            "cubic", [a, b](double u) { return a * u - b * u * u * u; },
            [a, b](double u) { return a - 3.0 * b * u * u; }, [b](double u) { return -6.0 * b * u; },
            std::move(zeros));
    }

    /// f(u) = sum_i c_i u^i with user-declared zeros.
    static ForceTerm polynomial(std::vector<double> c, std::vector<double> zeros) {
        auto horner = [](const std::vector<double>& p, double u) {
            double s = 0.0;
            for (auto it = p.rbegin(); it != p.rend(); ++it) s = s * u + *it;
            return s;
        };
        std::vector<double> d1, d2;
        for (std::size_t i = 1; i < c.size(); ++i) d1.push_back(static_cast<double>(i) * c[i]);
        for (std::size_t i = 1; i < d1.size(); ++i) d2.push_back(static_cast<double>(i) * d1[i]);
        return ForceTerm(
            "polynomial", [=](double u) { return horner(c, u); }, [=](double u) { return horner(d1, u); },
            [=](double u) { return horner(d2, u); }, std::move(zeros));
    }

    /// Piecewise-linear f through (u_i, f_i); constant extension outside the
    /// table. f' is the slope of the containing segment; no f''.
    static ForceTerm table(std::vector<double> u, std::vector<double> f, std::vector<double> zeros) {
        if (u.size() != f.size() || u.size() < 2) throw ConfigError("force table needs at least two rows");
        for (std::size_t i = 1; i < u.size(); ++i)
            if (!(u[i] > u[i - 1])) throw ConfigError("force table abscissae must be strictly increasing");
        auto segment = [u](double x) {
            const auto it = std::upper_bound(u.begin(), u.end(), x);
            std::size_t i = static_cast<std::size_t>(it - u.begin());
            return std::clamp<std::size_t>(i, 1, u.size() - 1);
        };
        auto fn = [=](double x) {
            if (x <= u.front()) return f.front();
            if (x >= u.back()) return f.back();
            const std::size_t i = segment(x);
            const double t = (x - u[i - 1]) / (u[i] - u[i - 1]);
            return (1.0 - t) * f[i - 1] + t * f[i];
        };
        auto fp = [=](double x) {
            if (x < u.front() || x > u.back()) return 0.0;
            const std::size_t i = segment(x);
            return (f[i] - f[i - 1]) / (u[i] - u[i - 1]);
        };
        return ForceTerm("table", fn, fp, {}, std::move(zeros));
    }

    const std::string& name() const { return name_; }
    bool identically_zero() const { return identically_zero_; }
    const std::vector<double>& zeros() const { return zeros_; }
    bool has_second() const { return static_cast<bool>(fpp_); }

    double operator()(double u) const { return f_(u); }
    double derivative(double u) const { return fp_(u); }
    double second(double u) const {
        if (!fpp_) throw ConfigError("force '" + name_ + "' has no second derivative");
        return fpp_(u);
    }

    /// max |f'| over [lo, hi] by sampling kBoundSamples points (endpoints included), no margin.
    double max_abs_derivative(double lo, double hi) const { return sampled_max(lo, hi, [&](double u) { return std::abs(fp_(u)); }); }

    /// max f' (signed) over [lo, hi].
    double max_derivative(double lo, double hi) const { return sampled_max(lo, hi, fp_); }

    /// Sampled max |f'| times kBoundMargin.
    double derivative_bound(double lo, double hi) const { return kBoundMargin * max_abs_derivative(lo, hi); }

    /// Sampled max |f''| times kBoundMargin.
    double second_derivative_bound(double lo, double hi) const {
        if (!fpp_) throw ConfigError("force '" + name_ + "' has no second derivative");
        return kBoundMargin * sampled_max(lo, hi, [&](double u) { return std::abs(fpp_(u)); });
    }

    /// Point where F vanishes: the smallest declared zero, else 0.
    double antiderivative_anchor() const { return zeros_.empty() ? 0.0 : zeros_.front(); }

    /// F(u) = integral of f from the anchor to u, by composite Simpson with
    /// panels no wider than 1/64 (capped at kMaxPanels for far-out arguments).
    double antiderivative(double u) const {
        if (identically_zero_) return 0.0;
        const double a = antiderivative_anchor();
        if (u == a) return 0.0;
        if (!std::isfinite(u)) return std::numeric_limits<double>::quiet_NaN();
        std::size_t panels = static_cast<std::size_t>(std::min(std::ceil(std::abs(u - a) * 64.0), kMaxPanels));
        panels = std::max<std::size_t>(2, panels + (panels % 2));
        const double h = (u - a) / static_cast<double>(panels);
        double s = f_(a) + f_(u);
        for (std::size_t i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f_(a + static_cast<double>(i) * h);
        return s * h / 3.0;
    }

private:
    template <class G>
    static double sampled_max(double lo, double hi, G&& g) {
        if (!(hi >= lo)) throw ConfigError("derivative bound on an empty interval");
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < kBoundSamples; ++i) {
            const double u = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kBoundSamples - 1);
            best = std::max(best, g(u));
        }
        return best;
    }

    std::string name_;
    Fn f_, fp_, fpp_;
    std::vector<double> zeros_;
    bool identically_zero_ = false;
};

}  // namespace nld
