#pragma once

// Half-symmetry box domain and its structured, non-uniform grid.
//
// Coordinates: x along the scan direction, y across the track (y = 0 is the
// symmetry plane of the half model), z vertical with the substrate bottom at
// z = 0 and the powder-layer top at z = substrate_depth + powder_thickness.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/material.hpp"

namespace lpbf {

struct DomainSpec {
    double length_x = 800e-6;
    double width_y = 200e-6;
    double substrate_depth = 90e-6;
    double powder_thickness = 30e-6;
    bool symmetry = true;
    double laser_start_x = 160e-6;

    double height() const { return substrate_depth + powder_thickness; }
    double y_min() const { return symmetry ? 0.0 : -0.5 * width_y; }
    double y_max() const { return 0.5 * width_y; }

    void validate() const {
        require(length_x > 0 && width_y > 0 && substrate_depth > 0 && powder_thickness > 0,
                "domain: all dimensions must be positive");
        require(laser_start_x >= 0 && laser_start_x <= length_x, "domain: laser start must lie inside the domain");
    }

    Region region_at(double z) const {
        return z > substrate_depth * (1.0 + 1e-12) ? Region::PowderLayer : Region::Substrate;
    }

    bool contains(const Point3& p, double tol = 1e-12) const {
        const double e = tol * std::max({length_x, width_y, height()});
        return p.x >= -e && p.x <= length_x + e && p.y >= y_min() - e && p.y <= y_max() + e && p.z >= -e &&
               p.z <= height() + e;
    }

    bool operator==(const DomainSpec&) const = default;
};

/// Axis-aligned box, meters.
struct Box {
    double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0, z_lo = 0, z_hi = 0;

    bool contains(const Point3& p) const {
        return p.x >= x_lo && p.x <= x_hi && p.y >= y_lo && p.y <= y_hi && p.z >= z_lo && p.z <= z_hi;
    }
    bool operator==(const Box&) const = default;
};

inline Box whole_domain(const DomainSpec& d) { return {0.0, d.length_x, d.y_min(), d.y_max(), 0.0, d.height()}; }

/// Scan track +- 100 um in x, y in [0, 80 um] (or +-80 um without symmetry),
/// top 60 um in z; clipped to the domain.
inline Box track_refine_box(const DomainSpec& d, double track_length) {
    return {std::max(0.0, d.laser_start_x - 100e-6), std::min(d.length_x, d.laser_start_x + track_length + 100e-6),
            std::max(d.y_min(), -80e-6), std::min(d.y_max(), 80e-6), std::max(0.0, d.height() - 60e-6), d.height()};
}

namespace detail {

// Spacings for an outer zone of length `length`, growing away from the fine
// zone geometrically with ratio q in [1, max_ratio] and capped at `coarse`.
// Returns an empty vector when the zone cannot be covered without cells
// finer than `fine` (the caller then shrinks the fine zone by one cell).
inline std::vector<double> graded_spacings(double length, double fine, double coarse, double max_ratio,
                                           bool allow_uniform_fallback) {
    std::vector<double> out;
    if (length <= 1e-9 * fine) return out;
    auto coverage = [&](std::size_t n, double q) {
        double s = fine, sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s = std::min(s * q, coarse);
            sum += s;
        }
        return sum;
    };
    std::size_t n = 1;
    while (coverage(n, max_ratio) < length) ++n;
    if (length < n * fine * (1.0 - 1e-12)) {
        if (!allow_uniform_fallback) return out;
        out.assign(n, length / static_cast<double>(n));
        return out;
    }
    double lo = 1.0, hi = max_ratio;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (coverage(n, mid) < length ? lo : hi) = mid;
    }
    double s = fine;
    for (std::size_t i = 0; i < n; ++i) {
        s = std::min(s * hi, coarse);
        out.push_back(s);
    }
    const double scale = length / coverage(n, hi);
    for (double& v : out) v *= scale;
    return out;
}

}  // namespace detail

/// Builds one graded axis on [lo, hi] with uniform `fine` spacing inside
/// [box_lo, box_hi]. Adjacent spacings differ by at most `max_ratio`.
inline std::vector<double> build_axis(double lo, double hi, double box_lo, double box_hi, double fine,
                                      double coarse, double max_ratio = 1.5) {
    require(hi > lo && fine > 0 && coarse >= fine, "axis: need hi > lo and coarse >= fine > 0");
    const double eps = 1e-9 * (hi - lo);
    require(box_lo >= lo - eps && box_hi <= hi + eps && box_hi > box_lo, "refinement box outside domain");
    box_lo = std::max(box_lo, lo);
    box_hi = std::min(box_hi, hi);
    // Snap the fine zone to an integer number of fine cells, anchored at the
    // nearer domain edge when the box touches it.
    auto cells = static_cast<long>(std::ceil((box_hi - box_lo) / fine - 1e-9));
    cells = std::max(cells, 1L);
    if (cells * fine > hi - lo) cells = static_cast<long>(std::floor((hi - lo) / fine + 1e-9));
    if (cells < 1) return {lo, hi};
    const double center = 0.5 * (box_lo + box_hi);
    double f_lo = center - 0.5 * cells * fine;
    if (box_lo - lo <= eps) f_lo = lo;
    else if (hi - box_hi <= eps) f_lo = hi - cells * fine;
    f_lo = std::clamp(f_lo, lo, hi - cells * fine);

    std::vector<double> left, right;
    for (;;) {
        double f_hi = f_lo + cells * fine;
        const bool last_chance = cells <= 1;
        left = detail::graded_spacings(f_lo - lo, fine, coarse, max_ratio, last_chance);
        right = detail::graded_spacings(hi - f_hi, fine, coarse, max_ratio, last_chance);
        const bool left_ok = !left.empty() || f_lo - lo <= 1e-9 * fine;
        const bool right_ok = !right.empty() || hi - f_hi <= 1e-9 * fine;
        if (left_ok && right_ok) break;
        // Give up one fine cell on the side that could not be graded.
        --cells;
        if (!left_ok) f_lo += fine;
    }
    std::vector<double> axis;
    axis.push_back(lo);
    double x = lo;
    for (auto it = left.rbegin(); it != left.rend(); ++it) axis.push_back(x += *it);
    if (!left.empty()) axis.back() = f_lo;
    for (long i = 0; i < cells; ++i) axis.push_back(f_lo + static_cast<double>(i + 1) * fine);
    x = axis.back();
    for (double s : right) axis.push_back(x += s);
    axis.back() = hi;
    // Drop a degenerate sliver that rounding may leave at the far end.
    if (axis.size() > 2 && axis[axis.size() - 1] - axis[axis.size() - 2] < 1e-9 * fine) {
        axis.erase(axis.end() - 2);
    }
    return axis;
}

class StructuredGrid {
public:
    StructuredGrid() = default;

    StructuredGrid(DomainSpec spec, std::vector<double> xs, std::vector<double> ys, std::vector<double> zs, Box refine)
        : spec_(spec), axes_{std::move(xs), std::move(ys), std::move(zs)}, refine_(refine) {
        for (const auto& a : axes_) {
            require(a.size() >= 2, "grid: each axis needs at least two nodes");
            for (std::size_t i = 1; i < a.size(); ++i) require(a[i] > a[i - 1], "grid: axis must be strictly increasing");
        }
        compute_volumes();
    }

    const DomainSpec& spec() const { return spec_; }
    const Box& refine_box() const { return refine_; }
    const std::vector<double>& axis(int a) const { return axes_[static_cast<std::size_t>(a)]; }
    const std::vector<double>& xs() const { return axes_[0]; }
    const std::vector<double>& ys() const { return axes_[1]; }
    const std::vector<double>& zs() const { return axes_[2]; }
    std::size_t nx() const { return axes_[0].size(); }
    std::size_t ny() const { return axes_[1].size(); }
    std::size_t nz() const { return axes_[2].size(); }
    std::size_t node_count() const { return nx() * ny() * nz(); }
    std::size_t cell_count() const { return (nx() - 1) * (ny() - 1) * (nz() - 1); }

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + nx() * (j + ny() * k); }
    std::array<std::size_t, 3> ijk(std::size_t n) const { return {n % nx(), (n / nx()) % ny(), n / (nx() * ny())}; }
    Point3 node(std::size_t n) const {
        auto [i, j, k] = ijk(n);
        return {axes_[0][i], axes_[1][j], axes_[2][k]};
    }
    Region region(std::size_t n) const { return spec_.region_at(node(n).z); }

    /// Control-volume extent of node i along axis a (half cells at the ends).
    double dual_width(int a, std::size_t i) const {
        const auto& c = axes_[static_cast<std::size_t>(a)];
        const double left = i > 0 ? 0.5 * (c[i] - c[i - 1]) : 0.0;
        const double right = i + 1 < c.size() ? 0.5 * (c[i + 1] - c[i]) : 0.0;
        return left + right;
    }
    double volume(std::size_t n) const { return volumes_[n]; }
    const std::vector<double>& volumes() const { return volumes_; }

    double min_spacing(int a) const {
        const auto& c = axes_[static_cast<std::size_t>(a)];
        double m = c.back() - c.front();
        for (std::size_t i = 1; i < c.size(); ++i) m = std::min(m, c[i] - c[i - 1]);
        return m;
    }

    /// Largest ratio between adjacent spacings on axis a.
    double max_grading(int a) const {
        const auto& c = axes_[static_cast<std::size_t>(a)];
        double r = 1.0;
        for (std::size_t i = 2; i < c.size(); ++i) {
            const double s0 = c[i - 1] - c[i - 2], s1 = c[i] - c[i - 1];
            r = std::max(r, std::max(s0 / s1, s1 / s0));
        }
        return r;
    }

    std::size_t nearest_node(const Point3& p) const {
        std::array<std::size_t, 3> idx{};
        const double q[3] = {p.x, p.y, p.z};
        for (std::size_t a = 0; a < 3; ++a) {
            const auto& c = axes_[a];
            auto it = std::lower_bound(c.begin(), c.end(), q[a]);
            std::size_t i = static_cast<std::size_t>(it - c.begin());
            if (i == c.size()) i = c.size() - 1;
            else if (i > 0 && q[a] - c[i - 1] < c[i] - q[a]) --i;
            idx[a] = i;
        }
        return index(idx[0], idx[1], idx[2]);
    }

    bool same_layout(const StructuredGrid& o) const { return axes_ == o.axes_; }

private:
    void compute_volumes() {
        volumes_.resize(node_count());
        for (std::size_t k = 0; k < nz(); ++k)
            for (std::size_t j = 0; j < ny(); ++j)
                for (std::size_t i = 0; i < nx(); ++i)
                    volumes_[index(i, j, k)] = dual_width(0, i) * dual_width(1, j) * dual_width(2, k);
    }

    DomainSpec spec_{};
    std::array<std::vector<double>, 3> axes_{};
    Box refine_{};
    std::vector<double> volumes_;
};

/// Graded grid with `fine` spacing per axis inside `refine` and spacing
/// growing by at most 1.5x per cell up to `coarse` elsewhere.
inline StructuredGrid build_grid(const DomainSpec& spec, double coarse, std::array<double, 3> fine, const Box& refine) {
    spec.validate();
    const Box dom = whole_domain(spec);
    const double tol = 1e-9 * std::max({spec.length_x, spec.width_y, spec.height()});
    require(refine.x_lo >= dom.x_lo - tol && refine.x_hi <= dom.x_hi + tol && refine.y_lo >= dom.y_lo - tol &&
                refine.y_hi <= dom.y_hi + tol && refine.z_lo >= dom.z_lo - tol && refine.z_hi <= dom.z_hi + tol,
            "refinement box lies outside the domain");
    require(fine[0] > 0 && fine[1] > 0 && fine[2] > 0, "fine spacing must be positive");
    require(coarse >= std::max({fine[0], fine[1], fine[2]}), "coarse spacing must not be finer than the fine spacing");
    auto xs = build_axis(dom.x_lo, dom.x_hi, refine.x_lo, refine.x_hi, fine[0], coarse);
    auto ys = build_axis(dom.y_lo, dom.y_hi, refine.y_lo, refine.y_hi, fine[1], coarse);
    auto zs = build_axis(dom.z_lo, dom.z_hi, refine.z_lo, refine.z_hi, fine[2], coarse);
    return StructuredGrid(spec, std::move(xs), std::move(ys), std::move(zs), refine);
}

}  // namespace lpbf
