#include <gtest/gtest.h>

#include "lpbf/metrics.hpp"

using namespace lpbf;

namespace {

StructuredGrid uniform_grid(bool symmetry) {
    DomainSpec d;
    d.length_x = 200e-6;
    d.width_y = 100e-6;
    d.substrate_depth = 60e-6;
    d.powder_thickness = 20e-6;
    d.laser_start_x = 50e-6;
    d.symmetry = symmetry;
    return build_grid(d, 10e-6, {10e-6, 10e-6, 10e-6}, whole_domain(d));
}

}  // namespace

TEST(RelativeL2, ScaledFieldGivesScaleMinusOne) {
    const auto g = uniform_grid(true);
    ThermalField ref = uniform_field(g, 293.0, 1e-5);
    for (std::size_t n = 0; n < ref.size(); ++n) ref.temperature[n] += static_cast<double>(n % 17);
    ThermalField pred = ref;
    for (auto& T : pred.temperature) T *= 1.1;
    EXPECT_NEAR(relative_l2(pred, ref), 0.1, 1e-14);
    EXPECT_EQ(relative_l2(ref, ref), 0.0);
}

TEST(RelativeL2, RejectsMismatchedInputs) {
    const auto g = uniform_grid(true);
    const ThermalField a = uniform_field(g, 300.0, 1e-5);
    EXPECT_THROW(relative_l2(a, uniform_field(g, 300.0, 2e-5)), InvalidInput);
    ThermalField b = a;
    b.temperature.pop_back();
    b.t_min.pop_back();
    EXPECT_THROW(relative_l2(b, a), InvalidInput);
    EXPECT_THROW(relative_l2(a, uniform_field(g, 0.0, 1e-5)), InvalidInput);
}

TEST(MeltPool, EmptyWhenEverythingIsCold) {
    const auto g = uniform_grid(true);
    const auto d = melt_pool_dims(uniform_field(g, 1000.0), g, 1723.0);
    EXPECT_TRUE(d.empty);
    EXPECT_EQ(d.length, 0.0);
    EXPECT_EQ(d.volume, 0.0);
}

TEST(MeltPool, SingleHotNodeOnSymmetryPlaneAndSurface) {
    const auto g = uniform_grid(true);
    ThermalField f = uniform_field(g, 1000.0);
    const std::size_t i = 10, j = 0, k = g.nz() - 1;
    const std::size_t n = g.index(i, j, k);
    f.temperature[n] = 2000.0;
    const auto d = melt_pool_dims(f, g, 1723.0);
    const double s = (2000.0 - 1723.0) / (2000.0 - 1000.0);
    ASSERT_FALSE(d.empty);
    EXPECT_NEAR(d.length, 2 * s * 10e-6, 1e-15);
    EXPECT_NEAR(d.width, 2 * s * 10e-6, 1e-15);  // half model mirrored
    EXPECT_NEAR(d.depth, s * 10e-6, 1e-15);
    EXPECT_NEAR(d.volume, 2 * g.volume(n), 1e-25);
}

TEST(MeltPool, LinearRampAlongX) {
    const auto g = uniform_grid(false);
    ThermalField f = uniform_field(g, 293.0);
    // T falls linearly from 2500 K at x = 0 with slope 1e7 K/m; the isotherm sits at x = 77.7 um.
    for (std::size_t n = 0; n < g.node_count(); ++n) f.temperature[n] = 2500.0 - 1e7 * g.node(n).x;
    const auto d = melt_pool_dims(f, g, 1723.0);
    EXPECT_NEAR(d.length, 77.7e-6, 1e-12);
    EXPECT_NEAR(d.width, 100e-6, 1e-12);
    EXPECT_NEAR(d.depth, 80e-6, 1e-12);
}

TEST(MeltPool, NodeExactlyAtLiquidusHasZeroExtent) {
    const auto g = uniform_grid(false);
    ThermalField f = uniform_field(g, 1000.0);
    const std::size_t n = g.index(7, 4, 3);
    f.temperature[n] = 1723.0;
    const auto d = melt_pool_dims(f, g, 1723.0);
    EXPECT_FALSE(d.empty);
    EXPECT_EQ(d.length, 0.0);
    EXPECT_EQ(d.width, 0.0);
    EXPECT_EQ(d.depth, 0.0);
    EXPECT_DOUBLE_EQ(d.volume, g.volume(n));
}

TEST(RelativeL2, InvariantUnderCommonScaling) {
    const auto g = uniform_grid(false);
    ThermalField ref = uniform_field(g, 400.0, 1e-5);
    ThermalField pred = ref;
    for (std::size_t n = 0; n < ref.size(); ++n) pred.temperature[n] += std::sin(0.37 * static_cast<double>(n));
    const double e = relative_l2(pred, ref);
    for (double s : {1e-3, 0.5, 8.0, 1e4}) {
        ThermalField a = pred, b = ref;
        for (auto& T : a.temperature) T *= s;
        for (auto& T : b.temperature) T *= s;
        EXPECT_NEAR(relative_l2(a, b), e, 1e-13 * e);
    }
}
