#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "lpbf/field.hpp"
#include "lpbf/grid.hpp"

namespace lpbf {

enum class BoundaryFace : std::uint8_t { Top = 0, Bottom = 1, Symmetry = 2, Lateral = 3 };

inline const char* to_string(BoundaryFace f) {
    switch (f) {
        case BoundaryFace::Top: return "top";
        case BoundaryFace::Bottom: return "bottom";
        case BoundaryFace::Symmetry: return "symmetry";
        case BoundaryFace::Lateral: return "lateral";
    }
    return "?";
}

struct LabeledPoint {
    Point4 p;
    double temperature = std::numeric_limits<double>::quiet_NaN();
    std::size_t node = 0;  // grid node the label was taken from
};

struct BoundaryPoint {
    Point4 p;
    std::array<double, 3> normal{};  // outward, unit length
    BoundaryFace face = BoundaryFace::Top;
};

struct CollocationCounts {
    std::size_t labeled_per_snapshot = 21000;
    std::size_t interior = 40000;
    std::size_t boundary = 8000;
    std::size_t initial = 4000;
};

/// Sample points for the four loss terms (data, PDE, boundary, initial).
struct CollocationSet {
    std::vector<LabeledPoint> labeled;
    std::vector<Point4> interior;
    std::vector<BoundaryPoint> boundary;
    std::vector<Point4> initial;

    std::size_t M() const { return labeled.size(); }
    std::size_t N() const { return interior.size(); }
    std::size_t P() const { return boundary.size(); }
    std::size_t Q() const { return initial.size(); }
};

struct TimeWindow {
    double begin = 0.0;
    double end = 0.0;
};

namespace detail {

struct Rect2 {
    double a_lo, a_hi, b_lo, b_hi;
    double area() const { return (a_hi - a_lo) * (b_hi - b_lo); }
};

// One planar face of the box domain: a fixed coordinate on `axis` and the
// remaining two coordinates spanning `full` (and `refined` when the
// refinement box touches the face).
struct FaceDesc {
    BoundaryFace kind;
    int axis;
    double coordinate;
    std::array<double, 3> normal;
    Rect2 full;
    bool has_refined;
    Rect2 refined;
};

inline std::vector<FaceDesc> domain_faces(const StructuredGrid& grid) {
    const DomainSpec& d = grid.spec();
    const Box dom = whole_domain(d);
    const Box& r = grid.refine_box();
    const double tol = 1e-9 * std::max({d.length_x, d.width_y, d.height()});
    auto touches = [&](double box_side, double plane) { return std::abs(box_side - plane) <= tol; };
    std::vector<FaceDesc> faces;
    // z faces span (x, y); x faces span (y, z); y faces span (x, z).
    const Rect2 xy{dom.x_lo, dom.x_hi, dom.y_lo, dom.y_hi}, yz{dom.y_lo, dom.y_hi, dom.z_lo, dom.z_hi},
        xz{dom.x_lo, dom.x_hi, dom.z_lo, dom.z_hi};
    const Rect2 rxy{r.x_lo, r.x_hi, r.y_lo, r.y_hi}, ryz{r.y_lo, r.y_hi, r.z_lo, r.z_hi}, rxz{r.x_lo, r.x_hi, r.z_lo, r.z_hi};
    faces.push_back({BoundaryFace::Top, 2, dom.z_hi, {0, 0, 1}, xy, touches(r.z_hi, dom.z_hi), rxy});
    faces.push_back({BoundaryFace::Bottom, 2, dom.z_lo, {0, 0, -1}, xy, touches(r.z_lo, dom.z_lo), rxy});
    faces.push_back({d.symmetry ? BoundaryFace::Symmetry : BoundaryFace::Lateral, 1, dom.y_lo, {0, -1, 0}, xz,
                     touches(r.y_lo, dom.y_lo), rxz});
    faces.push_back({BoundaryFace::Lateral, 1, dom.y_hi, {0, 1, 0}, xz, touches(r.y_hi, dom.y_hi), rxz});
    faces.push_back({BoundaryFace::Lateral, 0, dom.x_lo, {-1, 0, 0}, yz, touches(r.x_lo, dom.x_lo), ryz});
    faces.push_back({BoundaryFace::Lateral, 0, dom.x_hi, {1, 0, 0}, yz, touches(r.x_hi, dom.x_hi), ryz});
    return faces;
}

}  // namespace detail

/// Samples labeled, interior, boundary and initial points.
///
/// A fraction `density_ratio` of the interior and initial points (and of the
/// boundary points on faces the refinement box touches) is drawn inside the
/// refinement box; the rest is uniform over the domain. Half of the boundary
/// points go to the top surface, the rest is split over the other faces by
/// area. Labeled points are grid nodes at each snapshot time (temperatures
/// are filled in later from solver snapshots). Deterministic in `seed`.
inline CollocationSet sample_collocation(const StructuredGrid& grid, const CollocationCounts& counts,
                                         const std::vector<double>& snapshot_times, TimeWindow window,
                                         double horizon, double density_ratio, std::uint64_t seed) {
    require(density_ratio >= 0.0 && density_ratio <= 1.0, "collocation: density ratio must lie in [0, 1]");
    require(window.begin >= 0.0 && window.end >= window.begin && window.end <= horizon * (1 + 1e-12),
            "collocation: time window must lie inside [0, horizon]");
    for (double t : snapshot_times) {
        require(t >= 0.0 && t <= horizon * (1 + 1e-12), "collocation: snapshot time outside the horizon");
    }
    const DomainSpec& d = grid.spec();
    const Box dom = whole_domain(d);
    const Box& rb = grid.refine_box();

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    auto time_sample = [&] { return window.end > window.begin ? uniform(window.begin, window.end) : window.begin; };
    auto split = [&](std::size_t n) { return static_cast<std::size_t>(std::llround(density_ratio * static_cast<double>(n))); };

    CollocationSet set;

    // Labeled nodes: all refinement-box nodes first, topped up with a uniform
    // subsample of the remaining nodes.
    {
        std::vector<std::size_t> inside, outside;
        for (std::size_t n = 0; n < grid.node_count(); ++n) (rb.contains(grid.node(n)) ? inside : outside).push_back(n);
        std::vector<std::size_t> chosen;
        const std::size_t want = counts.labeled_per_snapshot;
        if (inside.size() >= want) {
            std::shuffle(inside.begin(), inside.end(), rng);
            chosen.assign(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(want));
        } else {
            chosen = inside;
            std::shuffle(outside.begin(), outside.end(), rng);
            const std::size_t extra = std::min(want - inside.size(), outside.size());
            chosen.insert(chosen.end(), outside.begin(), outside.begin() + static_cast<std::ptrdiff_t>(extra));
        }
        std::sort(chosen.begin(), chosen.end());
        for (double t : snapshot_times) {
            for (std::size_t n : chosen) {
                Point3 p = grid.node(n);
                set.labeled.push_back({{p.x, p.y, p.z, t}, std::numeric_limits<double>::quiet_NaN(), n});
            }
        }
    }

    auto volume_point = [&](bool refined) -> Point3 {
        const Box& b = refined ? rb : dom;
        return {uniform(b.x_lo, b.x_hi), uniform(b.y_lo, b.y_hi), uniform(b.z_lo, b.z_hi)};
    };

    {
        const std::size_t n_ref = split(counts.interior);
        set.interior.reserve(counts.interior);
        for (std::size_t i = 0; i < counts.interior; ++i) {
            Point3 p = volume_point(i < n_ref);
            set.interior.push_back({p.x, p.y, p.z, time_sample()});
        }
    }

    {
        auto faces = detail::domain_faces(grid);
        double other_area = 0.0;
        for (std::size_t f = 1; f < faces.size(); ++f) other_area += faces[f].full.area();
        std::vector<std::size_t> per_face(faces.size(), 0);
        per_face[0] = counts.boundary / 2;
        std::size_t assigned = per_face[0];
        for (std::size_t f = 1; f < faces.size(); ++f) {
            per_face[f] = static_cast<std::size_t>(std::floor(static_cast<double>(counts.boundary - per_face[0]) *
                                                              faces[f].full.area() / other_area));
            assigned += per_face[f];
        }
        per_face[0] += counts.boundary - assigned;
        set.boundary.reserve(counts.boundary);
        for (std::size_t f = 0; f < faces.size(); ++f) {
            const auto& face = faces[f];
            const std::size_t n_ref = face.has_refined ? split(per_face[f]) : 0;
            for (std::size_t i = 0; i < per_face[f]; ++i) {
                const detail::Rect2& r = i < n_ref ? face.refined : face.full;
                const double a = uniform(r.a_lo, r.a_hi), b = uniform(r.b_lo, r.b_hi);
                Point4 p;
                if (face.axis == 2) p = {a, b, face.coordinate, 0.0};
                else if (face.axis == 1) p = {a, face.coordinate, b, 0.0};
                else p = {face.coordinate, a, b, 0.0};
                p.t = time_sample();
                set.boundary.push_back({p, face.normal, face.kind});
            }
        }
    }

    {
        const std::size_t n_ref = split(counts.initial);
        set.initial.reserve(counts.initial);
        for (std::size_t i = 0; i < counts.initial; ++i) {
            Point3 p = volume_point(i < n_ref);
            set.initial.push_back({p.x, p.y, p.z, 0.0});
        }
    }
    return set;
}

/// Copies solver snapshot temperatures into the labeled points at matching times.
inline void fill_labels(CollocationSet& set, const std::vector<ThermalField>& snapshots, double time_tol = 1e-12) {
    for (auto& lp : set.labeled) {
        bool found = false;
        for (const auto& s : snapshots) {
            if (std::abs(s.time - lp.p.t) <= time_tol * std::max(1.0, std::abs(s.time)) + 1e-15) {
                lp.temperature = s.temperature.at(lp.node);
                found = true;
                break;
            }
        }
        require(found, "fill_labels: no snapshot at labeled time " + std::to_string(lp.p.t));
    }
}

}  // namespace lpbf
