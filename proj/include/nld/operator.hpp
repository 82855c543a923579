#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nld/error.hpp"
#include "nld/grid.hpp"
#include "nld/kernel.hpp"

namespace nld {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Sub-cell resolution used to integrate the kernel against the interpolation
/// basis when forming coupling weights.
struct OperatorOptions {
    std::size_t subcells_1d = 64;
    std::size_t subcells_2d = 8;

    std::size_t subcells(int dim) const { return dim == 1 ? subcells_1d : subcells_2d; }
};

namespace detail {

/// Cardinal function of 4-point (cubic) Lagrange interpolation on a unit lattice.
inline double cubic_cardinal(double t) {
    const double a = std::abs(t);
    if (a <= 1.0) return 0.5 * (a + 1.0) * (a - 1.0) * (a - 2.0);
    if (a < 2.0) return -(a - 1.0) * (a - 2.0) * (a - 3.0) / 6.0;
    return 0.0;
}

/// Coupling weight for the lattice displacement s (in cells): the integral of
/// J_eps against the interpolation basis centred at s*h.
///
/// Torus: cubic Lagrange cardinal basis (fourth-order product integration).
/// Box: indicator of the cell (whole-cell approximation of the domain).
inline double coupling_weight(const ScaledKernel& k, double h, std::ptrdiff_t s0, std::ptrdiff_t s1, bool cubic,
                              std::size_t sub) {
    const int dim = k.dim();
    const double reach = cubic ? 2.0 : 0.5;
    const std::size_t nodes = static_cast<std::size_t>(2.0 * reach) * sub;
    const double dt = 1.0 / static_cast<double>(sub);
    std::vector<double> t(nodes), basis(nodes);
    for (std::size_t q = 0; q < nodes; ++q) {
        t[q] = -reach + (static_cast<double>(q) + 0.5) * dt;
        basis[q] = cubic ? cubic_cardinal(t[q]) : 1.0;
    }
    double sum = 0.0;
    if (dim == 1) {
        for (std::size_t q = 0; q < nodes; ++q)
            sum += k(Point{(static_cast<double>(s0) + t[q]) * h, 0.0}) * basis[q];
        return sum * h * dt;
    }
    for (std::size_t q = 0; q < nodes; ++q) {
        const double z0 = (static_cast<double>(s0) + t[q]) * h;
        double row = 0.0;
        for (std::size_t r = 0; r < nodes; ++r)
            row += k(Point{z0, (static_cast<double>(s1) + t[r]) * h}) * basis[r];
        sum += row * basis[q];
    }
    return sum * h * h * dt * dt;
}

}  // namespace detail

/// Discrete dispersion operator (L u)_i = sum_j A_ij u_j, where A_ij (i != j)
/// is the coupling weight between nodes i and j and A_ii = w_0 + b_i, with the
/// boundary deficit b_i = -sum_j w_ij. Rows sum to zero, so constants are
/// annihilated, and A is symmetric by construction.
///
/// Torus grids pair with periodic-mode kernels, box grids with general-mode
/// kernels.
class DiscreteOperator {
public:
    DiscreteOperator(ScaledKernel kernel, GridPtr grid, OperatorOptions opts = {})
        : kernel_(std::move(kernel)), grid_(std::move(grid)), opts_(opts) {
        if (!grid_) throw ShapeError("operator without a grid");
        if (grid_->dim() != kernel_.dim()) throw ShapeError("kernel and grid dimensions differ");
        if (grid_->is_torus() && kernel_.mode() != KernelMode::periodic)
            throw ModeError("torus grids need a periodic-mode kernel");
        if (!grid_->is_torus() && kernel_.mode() != KernelMode::general)
            throw ModeError("box grids need a general-mode kernel");
        assemble();
    }

    const ScaledKernel& kernel() const { return kernel_; }
    const GridPtr& grid() const { return grid_; }
    std::size_t size() const { return grid_->size(); }

    /// Dense symmetric matrix A.
    const RowMatrix& matrix() const { return a_; }

    /// b_eps at every node.
    const std::vector<double>& deficit() const { return b_; }

    Field boundary_deficit() const { return Field(grid_, b_); }

    /// Torus displacement weights indexed by the wrapped lattice offset
    /// (d0 * N1 + d1); empty on box grids.
    const std::vector<double>& displacement_weights() const { return circ_; }

    /// sum_j (u_j - u_i) A_ij. On the torus the sum runs over displacements in
    /// a fixed order, so the result commutes exactly with circular shifts.
    void apply(std::span<const double> u, std::span<double> out) const {
        const std::size_t n = size();
        if (u.size() != n || out.size() != n) throw ShapeError("operator applied to a vector of the wrong length");
        if (grid_->is_torus()) {
            const std::size_t n0 = grid_->cells()[0], n1 = grid_->cells()[1];
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t i0 = i / n1, i1 = i % n1;
                const double ui = u[i];
                double s = 0.0;
                for (std::size_t d0 = 0; d0 < n0; ++d0) {
                    const std::size_t row = ((i0 + d0) % n0) * n1;
                    const double* w = circ_.data() + d0 * n1;
                    for (std::size_t d1 = 0; d1 < n1; ++d1) s += w[d1] * (u[row + (i1 + d1) % n1] - ui);
                }
                out[i] = s;
            }
            return;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = a_.data() + i * n;
            const double ui = u[i];
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) s += row[j] * (u[j] - ui);
            out[i] = s;
        }
    }

    Field apply(const Field& u) const {
        if (!same_grid(u.grid(), grid_)) throw ShapeError("field and operator live on different grids");
        std::vector<double> out(size());
        apply(u.values(), out);
        return Field(grid_, std::move(out));
    }

    /// C(L_eps) = 2 max_i |b_i|, an upper bound on the induced sup-norm.
    double operator_norm_bound() const {
        double m = 0.0;
        for (double b : b_) m = std::max(m, std::abs(b));
        return 2.0 * m;
    }

    /// Induced sup-norm max_i sum_j |A_ij| of the assembled matrix.
    double induced_sup_norm() const {
        double best = 0.0;
        for (Eigen::Index i = 0; i < a_.rows(); ++i) best = std::max(best, a_.row(i).cwiseAbs().sum());
        return best;
    }

    /// Coordinate dump (row, col, value) of A.
    void write_matrix_csv(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw ConfigError("cannot write " + path.string());
        out << "row,col,value\n";
        char buf[64];
        for (Eigen::Index i = 0; i < a_.rows(); ++i)
            for (Eigen::Index j = 0; j < a_.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", a_(i, j));
                out << i << ',' << j << ',' << buf << '\n';
            }
    }

private:
    void assemble() {
        const std::size_t n = size();
        const bool torus = grid_->is_torus();
        const double h = grid_->spacing();
        const std::size_t sub = opts_.subcells(grid_->dim());
        const auto n0 = grid_->cells()[0], n1 = grid_->cells()[1];

        // Weights depend on |displacement| per axis only (radial kernel, symmetric basis).
        std::map<std::pair<std::size_t, std::size_t>, double> cache;
        auto weight = [&](std::ptrdiff_t s0, std::ptrdiff_t s1) {
            const auto key = std::make_pair(static_cast<std::size_t>(std::abs(s0)), static_cast<std::size_t>(std::abs(s1)));
            auto it = cache.find(key);
            if (it != cache.end()) return it->second;
            const double w = detail::coupling_weight(kernel_, h, static_cast<std::ptrdiff_t>(key.first),
                                                     static_cast<std::ptrdiff_t>(key.second), torus, sub);
            cache.emplace(key, w);
            return w;
        };
        const auto signed_offset = [](std::size_t d, std::size_t period) {
            return d <= period / 2 ? static_cast<std::ptrdiff_t>(d)
                                   : static_cast<std::ptrdiff_t>(d) - static_cast<std::ptrdiff_t>(period);
        };

        a_ = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        b_.assign(n, 0.0);

        if (torus) {
            circ_.assign(n0 * n1, 0.0);
            for (std::size_t d0 = 0; d0 < n0; ++d0)
                for (std::size_t d1 = 0; d1 < n1; ++d1)
                    circ_[d0 * n1 + d1] = weight(signed_offset(d0, n0), n1 > 1 ? signed_offset(d1, n1) : 0);
            double total = 0.0;
            for (double w : circ_) total += w;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t i0 = i / n1, i1 = i % n1;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t j0 = j / n1, j1 = j % n1;
                    const std::size_t d0 = (j0 + n0 - i0) % n0, d1 = (j1 + n1 - i1) % n1;
                    a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = circ_[d0 * n1 + d1];
                }
                b_[i] = -total;
                a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = circ_[0] - total;
            }
            return;
        }

        const double self = weight(0, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto li = grid_->lattice(i);
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const auto lj = grid_->lattice(j);
                const double w = weight(static_cast<std::ptrdiff_t>(lj[0]) - static_cast<std::ptrdiff_t>(li[0]),
                                        static_cast<std::ptrdiff_t>(lj[1]) - static_cast<std::ptrdiff_t>(li[1]));
                total += w;
                a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
            }
            b_[i] = -total;
            a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = self - total;
        }
    }

    ScaledKernel kernel_;
    GridPtr grid_;
    OperatorOptions opts_;
    RowMatrix a_;
    std::vector<double> b_;
    std::vector<double> circ_;
};

/// Dirichlet form <L u, u> in the weighted L2 inner product.
inline double dirichlet_form(const DiscreteOperator& op, std::span<const double> u) {
    std::vector<double> lu(u.size());
    op.apply(u, lu);
    return l2_inner(*op.grid(), lu, u);
}

/// -1/2 sum_{i,j} h^n A_ij (u_j - u_i)^2, the pairwise form of <L u, u>.
inline double dirichlet_form_pairwise(const DiscreteOperator& op, std::span<const double> u) {
    const auto& a = op.matrix();
    const std::size_t n = u.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = a.data() + i * n;
        double r = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = u[j] - u[i];
            r += row[j] * d * d;
        }
        s += r;
    }
    return -0.5 * s * op.grid()->cell_volume();
}

}  // namespace nld
