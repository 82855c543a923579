#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nld/error.hpp"
#include "nld/kernel.hpp"

namespace nld {

enum class GridKind { torus, box };

/// Uniform lattice of cell centres, either the periodic torus (-pi, pi)^n or a
/// masked sub-lattice of a bounding box approximating a bounded open set.
///
/// Included nodes are numbered in row-major lattice order (last axis fastest);
/// every matrix, field and CSV dump uses this numbering.
class Grid {
public:
    using Lattice = std::array<std::size_t, kMaxDim>;
    using Mask = std::function<bool(const Point&)>;

    static std::shared_ptr<const Grid> torus(int dim, std::size_t points_per_dim) {
        check_dim(dim);
        if (points_per_dim < 4) throw DomainError("torus grid needs at least 4 points per dimension");
        auto g = std::shared_ptr<Grid>(new Grid());
        g->kind_ = GridKind::torus;
        g->dim_ = dim;
        g->cells_ = {points_per_dim, dim > 1 ? points_per_dim : 1};
        g->h_ = kTwoPi / static_cast<double>(points_per_dim);
        g->lo_ = {-kPi, dim > 1 ? -kPi : 0.0};
        g->include_all();
        return g;
    }

    /// Box [lo, hi]^dim with spacing close to `h` (adjusted so cells tile the box)
    /// keeping nodes whose centre satisfies `inside`.
    static std::shared_ptr<const Grid> box(int dim, double lo, double hi, double h, const Mask& inside = {}) {
        auto g = box_lattice(dim, lo, hi, h);
        const std::size_t total = g->cells_[0] * g->cells_[1];
        for (std::size_t id = 0; id < total; ++id) {
            if (!inside || inside(g->lattice_coord(g->unflatten(id)))) g->ids_.push_back(id);
        }
        g->finish();
        return g;
    }

    /// Box with an explicit row-major inclusion mask over the full lattice.
    static std::shared_ptr<const Grid> box_from_mask(int dim, double lo, double hi, double h,
                                                     const std::vector<bool>& mask) {
        auto g = box_lattice(dim, lo, hi, h);
        if (mask.size() != g->cells_[0] * g->cells_[1])
            throw DomainError("mask has " + std::to_string(mask.size()) + " entries, lattice has " +
                              std::to_string(g->cells_[0] * g->cells_[1]));
        for (std::size_t id = 0; id < mask.size(); ++id)
            if (mask[id]) g->ids_.push_back(id);
        g->finish();
        return g;
    }

    GridKind kind() const { return kind_; }
    bool is_torus() const { return kind_ == GridKind::torus; }
    int dim() const { return dim_; }
    double spacing() const { return h_; }
    const Lattice& cells() const { return cells_; }
    const Point& origin() const { return lo_; }

    /// Number of included nodes.
    std::size_t size() const { return ids_.size(); }

    /// Quadrature weight h^n of every included node.
    double cell_volume() const { return dim_ == 1 ? h_ : h_ * h_; }

    /// |Omega| approximated by whole cells.
    double measure() const { return static_cast<double>(size()) * cell_volume(); }

    Lattice lattice(std::size_t node) const { return unflatten(ids_[node]); }
    Point coord(std::size_t node) const { return lattice_coord(lattice(node)); }

    /// Index of the included node at a lattice position, or size() if excluded.
    std::size_t node_at(const Lattice& l) const {
        const std::size_t id = l[0] * cells_[1] + l[1];
        if (id < lookup_.size() && lookup_[id] != kAbsent) return lookup_[id];
        return size();
    }

    /// Torus node reached from `node` by a lattice displacement (wrapping).
    std::size_t shifted(std::size_t node, std::ptrdiff_t d0, std::ptrdiff_t d1 = 0) const {
        const Lattice l = lattice(node);
        const auto wrap = [](std::size_t i, std::ptrdiff_t d, std::size_t n) {
            const auto nn = static_cast<std::ptrdiff_t>(n);
            std::ptrdiff_t r = (static_cast<std::ptrdiff_t>(i) + d) % nn;
            if (r < 0) r += nn;
            return static_cast<std::size_t>(r);
        };
        return node_at(Lattice{wrap(l[0], d0, cells_[0]), wrap(l[1], d1, cells_[1])});
    }

    bool operator==(const Grid& o) const {
        return kind_ == o.kind_ && dim_ == o.dim_ && cells_ == o.cells_ && h_ == o.h_ && lo_ == o.lo_ &&
               ids_ == o.ids_;
    }

private:
    static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

    Grid() = default;

    static void check_dim(int dim) {
        if (dim < 1 || dim > kMaxDim) throw DomainError("grid dimension must be 1 or 2");
    }

    static std::shared_ptr<Grid> box_lattice(int dim, double lo, double hi, double h) {
        check_dim(dim);
        if (!(hi > lo) || !(h > 0.0)) throw DomainError("box grid needs lo < hi and h > 0");
        const auto n = static_cast<std::size_t>(std::llround((hi - lo) / h));
        if (n < 1) throw DomainError("box grid spacing larger than the box");
        auto g = std::shared_ptr<Grid>(new Grid());
        g->kind_ = GridKind::box;
        g->dim_ = dim;
        g->cells_ = {n, dim > 1 ? n : 1};
        g->h_ = (hi - lo) / static_cast<double>(n);
        g->lo_ = {lo, dim > 1 ? lo : 0.0};
        return g;
    }

    void include_all() {
        ids_.resize(cells_[0] * cells_[1]);
        for (std::size_t i = 0; i < ids_.size(); ++i) ids_[i] = i;
        finish();
    }

    void finish() {
        if (ids_.empty()) throw DomainError("mask excludes every node");
        lookup_.assign(cells_[0] * cells_[1], kAbsent);
        for (std::size_t i = 0; i < ids_.size(); ++i) lookup_[ids_[i]] = i;
    }

    Lattice unflatten(std::size_t id) const { return {id / cells_[1], id % cells_[1]}; }

    Point lattice_coord(const Lattice& l) const {
        Point p{0.0, 0.0};
        for (int a = 0; a < dim_; ++a) {
            const auto ua = static_cast<std::size_t>(a);
            p[ua] = lo_[ua] + (static_cast<double>(l[ua]) + 0.5) * h_;
        }
        return p;
    }

    GridKind kind_ = GridKind::torus;
    int dim_ = 1;
    Lattice cells_{1, 1};
    double h_ = 1.0;
    Point lo_{0.0, 0.0};
    std::vector<std::size_t> ids_;
    std::vector<std::size_t> lookup_;
};

using GridPtr = std::shared_ptr<const Grid>;

inline bool same_grid(const GridPtr& a, const GridPtr& b) { return a == b || (a && b && *a == *b); }

/// Node samples of a real function on a grid.
class Field {
public:
    Field() = default;

    Field(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (!grid_) throw ShapeError("field without a grid");
        if (values_.size() != grid_->size())
            throw ShapeError("field has " + std::to_string(values_.size()) + " values for " +
                             std::to_string(grid_->size()) + " nodes");
        for (double v : values_)
            if (!std::isfinite(v)) throw NumericalError("field contains a non-finite value");
    }

    static Field constant(GridPtr grid, double c) {
        const std::size_t n = grid->size();
        return Field(std::move(grid), std::vector<double>(n, c));
    }

    template <class Fn>
    static Field sample(GridPtr grid, Fn&& fn) {
        std::vector<double> v(grid->size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(grid->coord(i));
        return Field(std::move(grid), std::move(v));
    }

    const GridPtr& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    const std::vector<double>& data() const { return values_; }

private:
    GridPtr grid_;
    std::vector<double> values_;
};

inline void require_same_grid(const Field& a, const Field& b) {
    if (!same_grid(a.grid(), b.grid())) throw ShapeError("fields live on different grids");
}

/// Midpoint quadrature: sum of values times h^n, summed in node order.
inline double integrate(const Field& u) {
    double s = 0.0;
    for (double v : u.values()) s += v;
    return s * u.grid()->cell_volume();
}

inline double mean_mass(const Field& u) {
    const double measure = u.grid()->measure();
    if (!(measure > 0.0)) throw DomainError("mean mass on an empty domain");
    return integrate(u) / measure;
}

inline double l2_inner(const Field& a, const Field& b) {
    require_same_grid(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s * a.grid()->cell_volume();
}

inline double l2_norm(const Field& u) { return std::sqrt(l2_inner(u, u)); }

inline double sup_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

inline double sup_norm(const Field& u) { return sup_norm(u.values()); }

/// Weighted L2 norm of a raw node vector on `grid`.
inline double l2_norm(const Grid& grid, std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s * grid.cell_volume());
}

inline double l2_inner(const Grid& grid, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s * grid.cell_volume();
}

/// Named inclusion predicates for box grids, relative to the box centre.
inline Grid::Mask named_mask(const std::string& name, int dim, double lo, double hi) {
    const double c = 0.5 * (lo + hi);
    const double r = 0.5 * (hi - lo);
    if (name == "all" || name.empty()) return {};
    if (name == "disk" || name == "ball") {
        return [=](const Point& p) {
            double s = 0.0;
            for (int a = 0; a < dim; ++a) s += (p[static_cast<std::size_t>(a)] - c) * (p[static_cast<std::size_t>(a)] - c);
            return s < r * r;
        };
    }
    if (name == "annulus") {
        return [=](const Point& p) {
            double s = 0.0;
            for (int a = 0; a < dim; ++a) s += (p[static_cast<std::size_t>(a)] - c) * (p[static_cast<std::size_t>(a)] - c);
            return s < r * r && s > 0.25 * r * r;
        };
    }
    throw ConfigError("unknown mask predicate '" + name + "'");
}

}  // namespace nld
