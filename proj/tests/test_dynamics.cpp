#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nld/dynamics.hpp"
#include "nld/spectrum.hpp"
#include "oracles.hpp"

using namespace nld;

namespace {

DiscreteOperator torus_tent(std::size_t n) {
    return DiscreteOperator(ScaledKernel::periodic(BaseKernel::tent(1), 1.0, 0.0), Grid::torus(1, n));
}

Field cosine_bump(const GridPtr& g, double mean = 0.5, double amp = 0.3) {
    return Field::sample(g, [=](const Point& p) { return mean + amp * std::cos(p[0]); });
}

Field random_field(const GridPtr& g, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(g->size());
    for (auto& x : v) x = dist(rng);
    return Field(g, std::move(v));
}

EvolveOptions rk4(double dt, double T) {
    EvolveOptions o;
    o.dt = dt;
    o.T = T;
    o.scheme = Scheme::rk4;
    return o;
}

}  // namespace

TEST(ForceTermTest, FactoriesAndZeros) {
    const auto lg = ForceTerm::logistic(0.5);
    EXPECT_EQ(lg.zeros(), (std::vector<double>{0.0, 1.0}));
    EXPECT_DOUBLE_EQ(lg.derivative(0.0), 0.5);
    EXPECT_DOUBLE_EQ(lg.max_abs_derivative(0.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(lg.derivative_bound(0.0, 1.0), 0.55);
    const auto cu = ForceTerm::cubic();
    EXPECT_EQ(cu.zeros(), (std::vector<double>{-1.0, 0.0, 1.0}));
    EXPECT_DOUBLE_EQ(cu.max_derivative(-1.0, 1.0), 1.0);
    EXPECT_THROW(ForceTerm::polynomial({1.0, 1.0}, {0.0}), ConfigError);
    EXPECT_THROW(ForceTerm::table({0.0, 1.0}, {0.0, 1.0}, {}).second(0.5), ConfigError);
    EXPECT_TRUE(ForceTerm::zero().identically_zero());
}

TEST(ForceTermTest, AntiderivativeMatchesClosedForm) {
    const auto lg = ForceTerm::logistic(1.0);
    for (double u : {-0.7, 0.3, 1.0, 2.5}) EXPECT_NEAR(lg.antiderivative(u), u * u / 2 - u * u * u / 3, 1e-13);
    const auto cu = ForceTerm::cubic();
    // anchored at the smallest zero -1
    for (double u : {-1.0, 0.0, 0.5, 1.2})
        EXPECT_NEAR(cu.antiderivative(u), (u * u / 2 - u * u * u * u / 4) - (0.5 - 0.25), 1e-13);
}

TEST(Evolve, CosineDecaysAtFirstEigenvalue) {
    const auto op = torus_tent(256);
    const auto u0 = Field::sample(op.grid(), [](const Point& p) { return std::cos(p[0]); });
    for (bool fast : {false, true}) {
        auto opt = rk4(1e-3, 1.0);
        opt.fast = fast;
        const auto tr = evolve(op, ForceTerm::zero(), u0, opt);
        ASSERT_FALSE(tr.aborted);
        const double decay = std::exp(oracle::tent_beta(1));
        double err = 0.0;
        for (std::size_t i = 0; i < u0.size(); ++i) err = std::max(err, std::abs(tr.final_state[i] - decay * u0[i]));
        EXPECT_LE(err, 1e-4) << "fast " << fast;
        EXPECT_DOUBLE_EQ(tr.records.back().t, 1.0);
    }
}

TEST(Evolve, MassConservedWithoutForce) {
    std::mt19937_64 rng(41);
    const auto op = torus_tent(128);
    const auto u0 = random_field(op.grid(), rng, -1.0, 1.0);
    auto opt = rk4(0.05, 10.0);
    opt.record_every = 10;
    const auto tr = evolve(op, ForceTerm::zero(), u0, opt);
    EXPECT_LE(tr.mass_drift(), 1e-12);
    for (const auto& r : tr.records) {
        EXPECT_LE(r.nu, r.mean);
        EXPECT_LE(r.mean, r.mu);
    }
    for (std::size_t i = 1; i < tr.records.size(); ++i) EXPECT_GT(tr.records[i].t, tr.records[i - 1].t);
}

TEST(Evolve, UniformLogisticFollowsScalarOde) {
    const auto op = torus_tent(64);
    auto opt = rk4(0.01, 5.0);
    opt.fast = false;
    const auto tr = evolve(op, ForceTerm::logistic(1.0), Field::constant(op.grid(), 0.5), opt);
    const double expected = oracle::logistic_solution(0.5, 1.0, 5.0);
    for (double v : tr.final_state) EXPECT_NEAR(v, expected, 1e-8);
    EXPECT_EQ(tr.records.back().mu, tr.records.back().nu);
}

TEST(Evolve, StepBoundEnforced) {
    const auto op = torus_tent(64);
    const auto u0 = cosine_bump(op.grid());
    const double bound = stable_dt(op, ForceTerm::logistic(1.0).derivative_bound(0.1, 0.9), Scheme::euler);
    EXPECT_NEAR(bound, 0.9 / (24.0 + 0.88), 1e-6);
    auto opt = rk4(1.0, 1.0);
    try {
        evolve(op, ForceTerm::logistic(1.0), u0, opt);
        FAIL() << "expected a step-size rejection";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("stability bound"), std::string::npos);
    }
    opt.scheme = Scheme::euler;
    opt.dt = 0.03;
    EXPECT_NO_THROW(evolve(op, ForceTerm::logistic(1.0), u0, opt));
}

TEST(Evolve, BlowUpAbortsWithLastValidTime) {
    const auto op = torus_tent(32);
    // u' = u^2 from 2 blows up at t = 1/2
    const auto tr = evolve(op, ForceTerm::polynomial({0.0, 0.0, 1.0}, {0.0}), Field::constant(op.grid(), 2.0), rk4(0.01, 2.0));
    EXPECT_TRUE(tr.aborted);
    EXPECT_GT(tr.last_valid_time, 0.4);
    EXPECT_LT(tr.last_valid_time, 0.6);
    for (const auto& r : tr.records) EXPECT_TRUE(std::isfinite(r.mu));
}

TEST(Evolve, SnapshotsAtRequestedTimes) {
    const auto op = torus_tent(32);
    auto opt = rk4(0.05, 1.0);
    opt.snapshot_times = {0.0, 0.5, 1.0};
    const auto tr = evolve(op, ForceTerm::logistic(0.5), cosine_bump(op.grid()), opt);
    ASSERT_EQ(tr.snapshots.size(), 3u);
    EXPECT_NEAR(tr.snapshots[1].t, 0.5, 1e-12);
    EXPECT_EQ(tr.snapshots.back().values, tr.final_state);
}

TEST(Gronwall, Values) {
    const auto op = torus_tent(128);
    EXPECT_EQ(gronwall_constant(op, ForceTerm::zero(), {0.0, 1.0}, 0.0), 1.0);
    const double expected = std::exp(12.0 * std::sqrt(2.0) * std::sqrt(2.0 * oracle::pi) + 1.0);
    EXPECT_NEAR(gronwall_constant(op, 1.0, 1.0), expected, 1e-6 * expected);
    const double c1 = gronwall_constant(op, 0.3, 0.2), c2 = gronwall_constant(op, 0.3, 0.4);
    EXPECT_NEAR(c2, c1 * c1, 1e-12 * c2);
    EXPECT_THROW(gronwall_constant(op, std::numeric_limits<double>::infinity(), 1.0), ConfigError);
}

TEST(ContinuousDependence, Cases) {
    std::mt19937_64 rng(43);
    const auto op = torus_tent(128);
    const auto u0 = cosine_bump(op.grid());
    const auto opt = rk4(0.01, 1.0);
    const auto same = continuous_dependence_check(op, ForceTerm::logistic(1.0), u0, u0, opt);
    EXPECT_EQ(same.initial_distance, 0.0);
    EXPECT_EQ(same.final_distance, 0.0);
    EXPECT_TRUE(same.holds);

    std::normal_distribution<double> noise;
    std::vector<double> v(u0.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = u0[i] + 1e-3 * noise(rng);
    const Field v0(op.grid(), v);
    const auto lg = continuous_dependence_check(op, ForceTerm::logistic(1.0), u0, v0, opt);
    EXPECT_TRUE(lg.holds);
    EXPECT_GE(lg.slack, 10.0);
    const auto lin = continuous_dependence_check(op, ForceTerm::zero(), u0, v0, opt);
    EXPECT_LE(lin.ratio, 1.0);
}

TEST(InvariantRegion, Cases) {
    const auto op = torus_tent(128);
    const auto lg = ForceTerm::logistic(1.0);
    auto opt = rk4(0.05, 10.0);
    const auto tr = evolve(op, lg, cosine_bump(op.grid()), opt);
    EXPECT_LE(invariant_region_monitor(tr, lg, {0.0, 1.0}).max_violation, 1e-8);
    const auto top = evolve(op, lg, Field::constant(op.grid(), 1.0), opt);
    EXPECT_EQ(invariant_region_monitor(top, lg, {0.0, 1.0}).max_violation, 0.0);
    opt.T = 1.0;
    const auto out = evolve(op, lg, Field::constant(op.grid(), 1.5), opt);
    const auto rep = invariant_region_monitor(out, lg, {0.0, 1.0});
    EXPECT_DOUBLE_EQ(rep.max_violation, 0.5);
    EXPECT_EQ(rep.time_of_max, 0.0);
    EXPECT_THROW(invariant_region_monitor(tr, lg, {0.0, 0.5}), ConfigError);
    EXPECT_THROW(invariant_region_monitor(tr, lg, {1.0, 0.0}), ConfigError);
}

TEST(InvariantRegion, SeededRandomData) {
    const auto op = torus_tent(64);
    const auto lg = ForceTerm::logistic(1.0);
    for (unsigned seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        auto opt = rk4(0.05, 10.0);
        opt.record_every = 2;
        const auto tr = evolve(op, lg, random_field(op.grid(), rng, 0.0, 1.0), opt);
        EXPECT_LE(invariant_region_monitor(tr, lg, {0.0, 1.0}).max_violation, 1e-8);
        EXPECT_LE(comparison_check(tr, lg).max_violation, 1e-6);
    }
}

TEST(Sigma, Values) {
    const auto op = torus_tent(128);
    const auto u0 = cosine_bump(op.grid());
    const auto half = sigma_criterion(op, ForceTerm::logistic(0.5), {0.0, 1.0}, u0);
    EXPECT_NEAR(half.beta_1, oracle::tent_beta(1), 1e-7);
    EXPECT_NEAR(half.sigma, -0.93452, 1e-4);
    EXPECT_NEAR(half.a_1, 0.3 * std::sqrt(oracle::pi), 1e-12);
    EXPECT_NEAR(half.a_2, half.operator_bound * half.a_1 * half.a_1, 1e-14);
    EXPECT_NEAR(sigma_criterion(op, ForceTerm::logistic(1.0), {0.0, 1.0}, u0).sigma, 0.06548, 1e-4);
    const auto none = sigma_criterion(op, ForceTerm::zero(), {0.0, 1.0}, u0);
    EXPECT_DOUBLE_EQ(none.sigma, 2.0 * none.beta_1);
    EXPECT_LT(none.sigma, 0.0);
}

TEST(Sigma, MaskedUsesDeflatedSpectrum) {
    const DiscreteOperator op(ScaledKernel::general(BaseKernel::tent(1), 0.5, 0.0), Grid::box(1, -1.0, 1.0, 0.02));
    const auto ev = numeric_eigenvalues(op.matrix());
    EXPECT_NEAR(largest_nontrivial_eigenvalue(op), ev[ev.size() - 2], 1e-9);
    EXPECT_LT(largest_nontrivial_eigenvalue(op), 0.0);
}

TEST(DecayBounds, LogisticSetup) {
    const auto op = torus_tent(128);
    const auto lg = ForceTerm::logistic(0.5);
    const auto u0 = cosine_bump(op.grid());
    const auto tr = evolve(op, lg, u0, rk4(0.01, 10.0));
    const auto s = sigma_criterion(op, lg, {0.0, 1.0}, u0);
    const auto dev = deviation_decay_check(tr, s, 1e-6);
    EXPECT_TRUE(dev.holds);
    EXPECT_LE(dev.fitted_rate, s.sigma);
    const auto mm = mean_mass_ode_residual(tr, lg, s, 1e-6);
    EXPECT_TRUE(mm.holds);
    EXPECT_LE(mm.fitted_rate, s.sigma + 0.1 * std::abs(s.sigma));
    EXPECT_TRUE(dirichlet_form_check(tr, s, 1e-6).holds);
    EXPECT_TRUE(energy_monotonicity(tr).holds);
}

TEST(DecayBounds, ConstantData) {
    const auto op = torus_tent(64);
    const auto lg = ForceTerm::logistic(0.5);
    const auto u0 = Field::constant(op.grid(), 0.3);
    const auto tr = evolve(op, lg, u0, rk4(0.01, 2.0));
    const auto s = sigma_criterion(op, lg, {0.0, 1.0}, u0);
    EXPECT_LE(s.a_1, 1e-12);
    for (const auto& r : tr.records) {
        EXPECT_LE(r.deviation, 1e-12);
        EXPECT_LE(std::abs(r.dirichlet), 1e-12);
    }
    EXPECT_LE(mean_mass_ode_residual(tr, lg, s).max_residual, 1e-8);
}

// The deviation decays like e^{beta_1 t} = e^{sigma t / 2}: the energy argument
// bounds the squared norm, so a_1 e^{sigma t} is too strong for pure diffusion.
TEST(DecayBounds, PureDiffusionIsAnalytic) {
    const auto op = torus_tent(256);
    const auto u0 = Field::sample(op.grid(), [](const Point& p) { return std::cos(p[0]); });
    auto opt = rk4(1e-3, 1.0);
    opt.record_every = 100;
    const auto tr = evolve(op, ForceTerm::zero(), u0, opt);
    const auto s = sigma_criterion(op, ForceTerm::zero(), {0.0, 1.0}, u0);
    const double b1 = oracle::tent_beta(1);
    for (const auto& r : tr.records) {
        EXPECT_NEAR(r.deviation, std::exp(b1 * r.t) * std::sqrt(oracle::pi), 1e-4);
        EXPECT_NEAR(std::abs(r.dirichlet), std::abs(b1) * std::exp(2.0 * b1 * r.t) * oracle::pi, 1e-4);
    }
    for (const auto& r : tr.records) EXPECT_LE(r.deviation, s.a_1 * std::exp(0.5 * s.sigma * r.t) * (1.0 + 1e-6));
    EXPECT_FALSE(deviation_decay_check(tr, s).holds);
    EXPECT_NEAR(deviation_decay_check(tr, s).fitted_rate, b1, 1e-6);
    EXPECT_LE(mean_mass_ode_residual(tr, ForceTerm::zero(), s).max_residual, 1e-12);
}

TEST(Energy, Values) {
    const auto op = torus_tent(256);
    EXPECT_EQ(lyapunov_energy(op, ForceTerm::logistic(1.0), Field::constant(op.grid(), 0.0)), 0.0);
    const auto c = Field::sample(op.grid(), [](const Point& p) { return std::cos(p[0]); });
    EXPECT_NEAR(lyapunov_energy(op, ForceTerm::zero(), c), -0.5 * oracle::tent_beta(1) * oracle::pi, 1e-3);
}

TEST(Energy, FiniteDifferenceGradient) {
    std::mt19937_64 rng(47);
    const auto op = torus_tent(48);
    const double h = op.grid()->cell_volume();
    for (const auto& force : {ForceTerm::logistic(1.0), ForceTerm::cubic()}) {
        auto u = random_field(op.grid(), rng, -0.5, 1.5);
        const auto lu = op.apply(u);
        for (std::size_t i = 0; i < u.size(); i += 5) {
            const double keep = u[i];
            u[i] = keep + 1e-6;
            const double ep = lyapunov_energy(op, force, u);
            u[i] = keep - 1e-6;
            const double em = lyapunov_energy(op, force, u);
            u[i] = keep;
            const double grad = (ep - em) / 2e-6 / h;
            EXPECT_NEAR(grad, -(lu[i] + force(keep)), 1e-5) << force.name() << " node " << i;
        }
    }
}
