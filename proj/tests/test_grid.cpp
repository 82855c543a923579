#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nld/grid.hpp"
#include "oracles.hpp"

using namespace nld;

namespace {

Field random_field(const GridPtr& g, std::mt19937_64& rng) {
    std::normal_distribution<double> dist;
    std::vector<double> v(g->size());
    for (auto& x : v) x = dist(rng);
    return Field(g, std::move(v));
}

}  // namespace

TEST(GridTest, TorusLayout) {
    const auto g = Grid::torus(1, 64);
    EXPECT_EQ(g->size(), 64u);
    EXPECT_DOUBLE_EQ(g->spacing(), 2.0 * oracle::pi / 64.0);
    EXPECT_NEAR(g->measure(), 2.0 * oracle::pi, 1e-14);
    EXPECT_NEAR(g->coord(0)[0], -oracle::pi + 0.5 * g->spacing(), 1e-15);
    EXPECT_EQ(g->shifted(63, 1), 0u);
    EXPECT_EQ(g->shifted(0, -1), 63u);

    const auto g2 = Grid::torus(2, 8);
    EXPECT_EQ(g2->size(), 64u);
    // last axis fastest
    EXPECT_EQ(g2->lattice(1)[1], 1u);
    EXPECT_EQ(g2->lattice(8)[0], 1u);
    EXPECT_NEAR(g2->measure(), 4.0 * oracle::pi * oracle::pi, 1e-13);
}

TEST(GridTest, InvalidGridsRejected) {
    EXPECT_THROW(Grid::torus(1, 3), DomainError);
    EXPECT_THROW(Grid::torus(3, 16), DomainError);
    EXPECT_THROW(Grid::box(1, 1.0, -1.0, 0.1), DomainError);
    EXPECT_THROW(Grid::box(1, -1.0, 1.0, 0.1, [](const Point&) { return false; }), DomainError);
    EXPECT_THROW(Grid::box_from_mask(1, 0.0, 1.0, 0.25, {true, false}), DomainError);
}

TEST(GridTest, MaskedBoxAndNamedMasks) {
    const auto g = Grid::box(1, -1.0, 1.0, 1e-3);
    EXPECT_EQ(g->size(), 2000u);
    EXPECT_NEAR(g->measure(), 2.0, 1e-12);

    const auto disk = Grid::box(2, -1.0, 1.0, 0.02, named_mask("disk", 2, -1.0, 1.0));
    EXPECT_NEAR(disk->measure(), oracle::pi, 0.02);
    const auto ring = Grid::box(2, -1.0, 1.0, 0.02, named_mask("annulus", 2, -1.0, 1.0));
    EXPECT_NEAR(ring->measure(), 0.75 * oracle::pi, 0.03);
    EXPECT_THROW(named_mask("hexagon", 2, -1.0, 1.0), ConfigError);

    const auto explicit_mask = Grid::box_from_mask(1, 0.0, 1.0, 0.25, {true, false, true, true});
    EXPECT_EQ(explicit_mask->size(), 3u);
    EXPECT_EQ(explicit_mask->node_at({1, 0}), explicit_mask->size());
    EXPECT_NEAR(explicit_mask->coord(1)[0], 0.625, 1e-15);
}

TEST(GridTest, FieldValidation) {
    const auto g = Grid::torus(1, 8);
    EXPECT_THROW(Field(g, std::vector<double>(7, 0.0)), ShapeError);
    std::vector<double> bad(8, 0.0);
    bad[3] = std::nan("");
    EXPECT_THROW(Field(g, bad), NumericalError);
    const Field a = Field::constant(g, 1.0);
    const Field b = Field::constant(Grid::torus(1, 16), 1.0);
    EXPECT_THROW(l2_inner(a, b), ShapeError);
    // equal grids built separately are interchangeable
    EXPECT_NO_THROW(l2_inner(a, Field::constant(Grid::torus(1, 8), 2.0)));
}

TEST(Integrate, TorusValues) {
    const auto g = Grid::torus(1, 64);
    EXPECT_NEAR(integrate(Field::constant(g, 1.0)), 2.0 * oracle::pi, 1e-12);
    EXPECT_NEAR(integrate(Field::sample(g, [](const Point& p) { return std::cos(p[0]); })), 0.0, 1e-12);
    const auto g2 = Grid::torus(2, 32);
    EXPECT_NEAR(integrate(Field::sample(g2, [](const Point& p) { return std::cos(p[0]) * std::sin(2 * p[1]); })), 0.0,
                1e-12);
}

TEST(Integrate, MaskedQuadratic) {
    const auto g = Grid::box(1, -1.0, 1.0, 1e-3);
    EXPECT_NEAR(integrate(Field::sample(g, [](const Point& p) { return p[0] * p[0]; })), 2.0 / 3.0, 1e-6);
}

TEST(MeanMass, Values) {
    const auto g = Grid::torus(1, 128);
    EXPECT_NEAR(mean_mass(Field::constant(g, 0.37)), 0.37, 1e-15);
    EXPECT_NEAR(mean_mass(Field::sample(g, [](const Point& p) { return 0.5 + 0.3 * std::cos(p[0]); })), 0.5, 1e-14);
    const auto jump = Field::sample(g, [](const Point& p) { return p[0] < 0.0 ? 1.0 : -1.0; });
    EXPECT_NEAR(mean_mass(jump), 0.0, g->spacing());
}

TEST(Norms, Values) {
    const auto g = Grid::torus(1, 128);
    EXPECT_NEAR(l2_norm(Field::constant(g, 1.0)), std::sqrt(2.0 * oracle::pi), 1e-13);
    const auto c = Field::sample(g, [](const Point& p) { return std::cos(p[0]); });
    EXPECT_NEAR(l2_norm(c), std::sqrt(oracle::pi), 1e-13);
    EXPECT_NEAR(l2_inner(c, c), l2_norm(c) * l2_norm(c), 1e-13);
    EXPECT_NEAR(sup_norm(c), 1.0, 1e-3);
    EXPECT_DOUBLE_EQ(l2_norm(*g, c.values()), l2_norm(c));
}

TEST(Norms, LinearityAndCauchySchwarz) {
    std::mt19937_64 rng(3);
    for (const auto& g : {Grid::torus(1, 50), Grid::torus(2, 12), Grid::box(2, -1.0, 1.0, 0.1, named_mask("disk", 2, -1.0, 1.0))}) {
        for (int trial = 0; trial < 20; ++trial) {
            const Field a = random_field(g, rng), b = random_field(g, rng);
            std::vector<double> s(g->size());
            for (std::size_t i = 0; i < s.size(); ++i) s[i] = 2.5 * a[i] - 0.75 * b[i];
            const Field sum(g, s);
            const double scale = std::abs(integrate(a)) + std::abs(integrate(b)) + 1.0;
            EXPECT_NEAR(integrate(sum), 2.5 * integrate(a) - 0.75 * integrate(b), 1e-12 * scale);
            EXPECT_LE(std::abs(l2_inner(a, b)), l2_norm(a) * l2_norm(b) * (1.0 + 1e-14));
        }
    }
}
