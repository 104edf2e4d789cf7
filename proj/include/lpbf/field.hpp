#pragma once

#include <cstdint>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/grid.hpp"

namespace lpbf {

/// Nodal temperature and melt history at one instant.
struct ThermalField {
    double time = 0.0;
    std::vector<double> temperature;  // K, grid order
    std::vector<double> t_min;        // first-melt time, kNever if not melted

    ThermalField() = default;
    ThermalField(std::size_t nodes, double T, double t = 0.0) : time(t), temperature(nodes, T), t_min(nodes, kNever) {}

    std::size_t size() const { return temperature.size(); }

    PhaseState state(std::size_t n) const { return t_min[n] <= time ? PhaseState::Melted : PhaseState::Unmelted; }

    std::size_t melted_count() const {
        std::size_t c = 0;
        for (std::size_t n = 0; n < size(); ++n) c += state(n) == PhaseState::Melted;
        return c;
    }
};

inline ThermalField uniform_field(const StructuredGrid& grid, double T, double t = 0.0) {
    return ThermalField(grid.node_count(), T, t);
}

/// Trilinear interpolation of the nodal temperature at arbitrary points.
/// Exact at nodes and for fields linear in each coordinate.
inline std::vector<double> interpolate_to_points(const ThermalField& field, const StructuredGrid& grid,
                                                 const std::vector<Point3>& points) {
    require(field.size() == grid.node_count(), "interpolate: field does not match grid");
    std::vector<double> out;
    out.reserve(points.size());
    for (std::size_t p = 0; p < points.size(); ++p) {
        const double q[3] = {points[p].x, points[p].y, points[p].z};
        std::size_t lo[3];
        double w[3];
        for (int a = 0; a < 3; ++a) {
            const auto& c = grid.axis(a);
            const double tol = 1e-12 * (c.back() - c.front());
            if (!(q[a] >= c.front() - tol && q[a] <= c.back() + tol)) {
                throw InvalidInput("interpolate: point " + std::to_string(p) + " lies outside the grid");
            }
            auto it = std::upper_bound(c.begin(), c.end(), q[a]);
            std::size_t i = it == c.begin() ? 0 : static_cast<std::size_t>(it - c.begin()) - 1;
            if (i >= c.size() - 1) i = c.size() - 2;
            lo[a] = i;
            w[a] = std::clamp((q[a] - c[i]) / (c[i + 1] - c[i]), 0.0, 1.0);
        }
        double acc = 0.0;
        for (int corner = 0; corner < 8; ++corner) {
            const int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
            const double weight = (bx ? w[0] : 1.0 - w[0]) * (by ? w[1] : 1.0 - w[1]) * (bz ? w[2] : 1.0 - w[2]);
            if (weight == 0.0) continue;
            acc += weight * field.temperature[grid.index(lo[0] + bx, lo[1] + by, lo[2] + bz)];
        }
        out.push_back(acc);
    }
    return out;
}

}  // namespace lpbf
