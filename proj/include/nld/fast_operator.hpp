#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <type_traits>
#include <vector>

#include <fftw3.h>

#include "nld/error.hpp"
#include "nld/grid.hpp"
#include "nld/operator.hpp"

namespace nld {

/// Torus-only evaluation of L_eps u as a circular convolution with the
/// displacement weights, minus (sum of weights) * u. O(N log N) per call.
///
/// Holds FFTW plans and scratch buffers, so a single instance must not be
/// applied from several threads at once.
class FastOperator {
public:
    explicit FastOperator(const DiscreteOperator& op) : grid_(op.grid()) {
        if (!grid_->is_torus()) throw ModeError("the fast path is only available on torus grids");
        n0_ = grid_->cells()[0];
        n1_ = grid_->cells()[1];
        real_size_ = n0_ * n1_;
        spec_size_ = n0_ * (n1_ / 2 + 1);
        if (grid_->dim() == 1) spec_size_ = n0_ / 2 + 1;

        real_ = Buffer<double>(fftw_alloc_real(real_size_));
        spec_ = Buffer<fftw_complex>(fftw_alloc_complex(spec_size_));
        const int dims[2] = {static_cast<int>(n0_), static_cast<int>(n1_)};
        const int rank = grid_->dim();
        forward_ = Plan(fftw_plan_dft_r2c(rank, dims, real_.get(), spec_.get(), FFTW_ESTIMATE));
        backward_ = Plan(fftw_plan_dft_c2r(rank, dims, spec_.get(), real_.get(), FFTW_ESTIMATE));
        if (!forward_ || !backward_) throw NumericalError("FFTW plan creation failed");

        const auto& w = op.displacement_weights();
        total_ = 0.0;
        for (double x : w) total_ += x;
        std::copy(w.begin(), w.end(), real_.get());
        fftw_execute(forward_.get());
        symbol_.resize(spec_size_);
        for (std::size_t i = 0; i < spec_size_; ++i) symbol_[i] = {spec_.get()[i][0], spec_.get()[i][1]};
    }

    const GridPtr& grid() const { return grid_; }
    std::size_t size() const { return real_size_; }

    void apply(std::span<const double> u, std::span<double> out) const {
        if (u.size() != real_size_ || out.size() != real_size_)
            throw ShapeError("operator applied to a vector of the wrong length");
        std::copy(u.begin(), u.end(), real_.get());
        fftw_execute(forward_.get());
        for (std::size_t i = 0; i < spec_size_; ++i) {
            const std::complex<double> v = std::complex<double>(spec_.get()[i][0], spec_.get()[i][1]) * symbol_[i];
            spec_.get()[i][0] = v.real();
            spec_.get()[i][1] = v.imag();
        }
        fftw_execute(backward_.get());
        const double scale = 1.0 / static_cast<double>(real_size_);
        for (std::size_t i = 0; i < real_size_; ++i) out[i] = real_.get()[i] * scale - total_ * u[i];
    }

    Field apply(const Field& u) const {
        if (!same_grid(u.grid(), grid_)) throw ShapeError("field and operator live on different grids");
        std::vector<double> out(real_size_);
        apply(u.values(), out);
        return Field(grid_, std::move(out));
    }

private:
    struct FreeBuffer {
        void operator()(void* p) const { fftw_free(p); }
    };
    struct DestroyPlan {
        void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
    };
    template <class T>
    using Buffer = std::unique_ptr<T, FreeBuffer>;
    using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, DestroyPlan>;

    GridPtr grid_;
    std::size_t n0_ = 0, n1_ = 0, real_size_ = 0, spec_size_ = 0;
    double total_ = 0.0;
    Buffer<double> real_;
    Buffer<fftw_complex> spec_;
    Plan forward_, backward_;
    std::vector<std::complex<double>> symbol_;
};

/// One-shot fast application; builds the plans on every call.
inline Field apply_fast(const DiscreteOperator& op, const Field& u) { return FastOperator(op).apply(u); }

}  // namespace nld
