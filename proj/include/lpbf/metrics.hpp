#pragma once

// Field comparison and melt-pool geometry.

#include "lpbf/field.hpp"
#include "lpbf/grid.hpp"

namespace lpbf {

/// ||T_pred - T_ref||_2 / ||T_ref||_2 over all nodes.
inline double relative_l2(const ThermalField& pred, const ThermalField& ref) {
    require(pred.size() == ref.size(), "relative_l2: fields have different node counts");
    require(std::abs(pred.time - ref.time) <= 1e-9 * std::max(1.0, std::abs(ref.time)) + 1e-15,
            "relative_l2: fields are at different times");
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < ref.size(); ++n) {
        const double d = pred.temperature[n] - ref.temperature[n];
        num += d * d;
        den += ref.temperature[n] * ref.temperature[n];
    }
    require(den > 0.0, "relative_l2: reference field is identically zero");
    return std::sqrt(num / den);
}

struct MeltPoolDims {
    double length = 0.0;  // m, along x
    double width = 0.0;   // m, along y (full width when the grid is a half model)
    double depth = 0.0;   // m, along z
    double volume = 0.0;  // m^3
    bool empty = true;
};

/// Axis-aligned extent of the region T >= liquidus, with the isotherm
/// crossing located by linear interpolation between each hot node and its
/// cold neighbours.
inline MeltPoolDims melt_pool_dims(const ThermalField& f, const StructuredGrid& g, double liquidus) {
    require(f.size() == g.node_count(), "melt_pool_dims: field does not match grid");
    MeltPoolDims out;
    std::array<double, 3> lo{kNever, kNever, kNever}, hi{-kNever, -kNever, -kNever};
    const std::array<const std::vector<double>*, 3> axes{&g.xs(), &g.ys(), &g.zs()};
    for (std::size_t n = 0; n < g.node_count(); ++n) {
        const double T = f.temperature[n];
        if (!(T >= liquidus)) continue;
        out.empty = false;
        out.volume += g.volume(n);
        const auto ijk = g.ijk(n);
        for (int a = 0; a < 3; ++a) {
            const auto& c = *axes[static_cast<std::size_t>(a)];
            const std::size_t i = ijk[static_cast<std::size_t>(a)];
            lo[static_cast<std::size_t>(a)] = std::min(lo[static_cast<std::size_t>(a)], c[i]);
            hi[static_cast<std::size_t>(a)] = std::max(hi[static_cast<std::size_t>(a)], c[i]);
            for (int dir : {-1, 1}) {
                if ((dir < 0 && i == 0) || (dir > 0 && i + 1 == c.size())) continue;
                auto nb = ijk;
                nb[static_cast<std::size_t>(a)] = dir < 0 ? i - 1 : i + 1;
                const double Tn = f.temperature[g.index(nb[0], nb[1], nb[2])];
                if (Tn >= liquidus) continue;
                const double s = (T - liquidus) / (T - Tn);
                const double x = c[i] + s * (c[nb[static_cast<std::size_t>(a)]] - c[i]);
                lo[static_cast<std::size_t>(a)] = std::min(lo[static_cast<std::size_t>(a)], x);
                hi[static_cast<std::size_t>(a)] = std::max(hi[static_cast<std::size_t>(a)], x);
            }
        }
    }
    if (out.empty) return out;
    const double factor = g.spec().symmetry ? 2.0 : 1.0;
    out.length = hi[0] - lo[0];
    out.width = factor * (hi[1] - lo[1]);
    out.depth = hi[2] - lo[2];
    out.volume *= factor;
    return out;
}

}  // namespace lpbf
