#pragma once

// Physics-informed training of the temperature surrogate.
//
// Four mean-square loss terms, all in scaled (dimensionless) units:
//   data  ((T - T_label) / dT_ref)^2 at labeled snapshot points
//   PDE   (d(rho c_p T)/dt - k lap T)^2 / (rho_ref c_ref dT_ref / t_ref)^2
//   BC    flux balance / q_peak on flux faces, (T - T_0) / dT_ref at the bottom
//   IC    ((T - T_0) / dT_ref)^2 at t = 0
// with dT_ref = T_ref_max - T_0 and t_ref the horizon. Properties follow the
// melt-history rules through a per-point first-melt-time table that is
// re-estimated from the network every few hundred epochs.

#include <algorithm>
#include <array>
#include <functional>
#include <numeric>
#include <optional>
#include <random>

#include "lpbf/collocation.hpp"
#include "lpbf/field.hpp"
#include "lpbf/grid.hpp"
#include "lpbf/material.hpp"
#include "lpbf/network.hpp"
#include "lpbf/solver.hpp"

namespace lpbf {

struct LossWeights {
    double data = 1.0;
    double pde = 1.0;
    double bc = 1.0;
    double ic = 1e-4;

    void validate() const {
        require(data >= 0 && pde >= 0 && bc >= 0 && ic >= 0, "loss weights must be non-negative");
    }
    bool operator==(const LossWeights&) const = default;
};

struct LossReport {
    std::size_t epoch = 0;
    double data = 0.0;
    double pde = 0.0;
    double bc = 0.0;
    double ic = 0.0;
    double total = 0.0;
};

inline double weighted_total(const LossReport& r, const LossWeights& w) {
    return w.data * r.data + w.pde * r.pde + w.bc * r.bc + w.ic * r.ic;
}

/// Form of the energy-equation residual.
enum class ResidualForm : unsigned char {
    /// d(rho c_p T)/dt - k lap T, expanded through the property laws.
    Literal,
    /// rho c_p dT/dt - div(k grad T), the form the heat solver discretises.
    Enthalpy,
};

/// Physical setting and reference scales shared by the loss terms.
struct PinnProblem {
    DomainSpec domain;
    MaterialLibrary material = MaterialLibrary::ss316l();
    ProcessParams process;
    double horizon = 600e-6;    // s, also t_ref
    double t_ref_max = 4000.0;  // K
    double rho_ref = 7000.0;    // kg/m^3
    double cp_ref = 600.0;      // J/(kg K)
    ResidualForm form = ResidualForm::Literal;
    /// Divide the PDE residual by its dT/dt coefficient relative to rho_ref c_ref.
    bool local_capacity_scaling = false;
    /// Property laws are evaluated at T clamped to this range.
    double property_t_min = 200.0;
    double property_t_max = 1.0e4;

    double ambient() const { return process.ambient; }
    double delta_t_ref() const { return t_ref_max - process.ambient; }
    double pde_scale() const { return rho_ref * cp_ref * delta_t_ref() / horizon; }
    double flux_scale() const { return process.peak_flux(); }

    void validate() const {
        domain.validate();
        material.validate();
        process.validate();
        require(horizon > 0.0, "pinn: horizon must be positive");
        require(t_ref_max > process.ambient, "pinn: reference temperature must exceed ambient");
        require(rho_ref > 0 && cp_ref > 0, "pinn: reference scales must be positive");
        require(property_t_min < property_t_max, "pinn: empty property clamp range");
    }

    /// Network scaling consistent with the reference scales.
    void configure(SurrogateModel& m) const {
        m.set_scaling(0.0, domain.length_x, domain.y_min(), domain.y_max(), 0.0, domain.height(), horizon, ambient(),
                      t_ref_max);
    }
};

/// First-melt times for a fixed list of spatial points.
class StateTable {
public:
    StateTable() = default;
    explicit StateTable(std::vector<Point3> points, double dt_state = 10e-6)
        : points_(std::move(points)), t_min_(points_.size(), kNever), dt_state_(dt_state) {
        require(dt_state > 0.0, "state table: dt_state must be positive");
    }

    std::size_t size() const { return points_.size(); }
    const Point3& point(std::size_t i) const { return points_[i]; }
    double t_min(std::size_t i) const { return t_min_[i]; }
    const std::vector<double>& t_min() const { return t_min_; }
    double dt_state() const { return dt_state_; }

    PhaseState state(std::size_t i, double t) const { return t >= t_min_[i] ? PhaseState::Melted : PhaseState::Unmelted; }

    std::size_t melted_count() const {
        return static_cast<std::size_t>(std::count_if(t_min_.begin(), t_min_.end(), [](double v) { return v != kNever; }));
    }

    /// Lowers the first-melt time of point i to t if earlier; returns true if it changed.
    bool merge(std::size_t i, double t) {
        if (t < t_min_[i]) {
            t_min_[i] = t;
            return true;
        }
        return false;
    }

    /// Merges first-melt times of a solver field through each point's nearest grid node.
    std::size_t merge_field(const ThermalField& f, const StructuredGrid& grid) {
        require(f.size() == grid.node_count(), "state table: field does not match grid");
        std::size_t changed = 0;
        for (std::size_t i = 0; i < size(); ++i) changed += merge(i, f.t_min[grid.nearest_node(points_[i])]);
        return changed;
    }

    /// Scans the network on the time grid 0, dt_state, ... <= horizon and
    /// records the earliest time with T above the liquidus. Never un-melts.
    /// Returns the number of entries that changed.
    std::size_t refresh(const SurrogateModel& model, double horizon, double liquidus, std::size_t chunk = 4096) {
        require(horizon >= 0.0, "state table: horizon must be non-negative");
        const auto steps = static_cast<std::size_t>(std::floor(horizon / dt_state_ + 1e-9));
        std::vector<Point4> batch;
        std::size_t changed = 0;
        for (std::size_t s = 0; s < size(); s += chunk) {
            const std::size_t n = std::min(chunk, size() - s);
            std::vector<double> found(n, kNever);
            for (std::size_t k = 0; k <= steps; ++k) {
                const double t = static_cast<double>(k) * dt_state_;
                batch.clear();
                for (std::size_t i = 0; i < n; ++i) {
                    const auto& p = points_[s + i];
                    batch.push_back({p.x, p.y, p.z, t});
                }
                auto T = forward_batch(model, batch);
                for (std::size_t i = 0; i < n; ++i)
                    if (found[i] == kNever && T[i] > liquidus) found[i] = t;
            }
            for (std::size_t i = 0; i < n; ++i) changed += merge(s + i, found[i]);
        }
        return changed;
    }

private:
    std::vector<Point3> points_;
    std::vector<double> t_min_;
    double dt_state_ = 10e-6;
};

/// Table over the interior points followed by the boundary points of a collocation set.
inline StateTable make_state_table(const CollocationSet& set, double dt_state = 10e-6) {
    std::vector<Point3> pts;
    pts.reserve(set.N() + set.P());
    for (const auto& p : set.interior) pts.push_back(p.spatial());
    for (const auto& b : set.boundary) pts.push_back(b.p.spatial());
    return StateTable(std::move(pts), dt_state);
}

/// Table over the nodes of a grid.
inline StateTable make_node_table(const StructuredGrid& grid, double dt_state = 10e-6) {
    std::vector<Point3> pts(grid.node_count());
    for (std::size_t n = 0; n < grid.node_count(); ++n) pts[n] = grid.node(n);
    return StateTable(std::move(pts), dt_state);
}

namespace detail {

inline Eigen::Matrix4Xd pack(const Point4* p, std::size_t n) {
    Eigen::Matrix4Xd m(4, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) m.col(static_cast<Eigen::Index>(i)) << p[i].x, p[i].y, p[i].z, p[i].t;
    return m;
}

// Runs `body(first_index, tape_result, adjoints)` over chunks; accumulates the
// parameter gradient when `grad` is non-null. Returns the summed body value.
template <class Body>
double chunked(const SurrogateModel& model, const std::vector<Point4>& pts, const ChannelSpec& spec, std::size_t chunk,
               Eigen::VectorXd* grad, Body&& body) {
    double acc = 0.0;
    TaylorTape tape;
    BatchAdjoints adj;
    for (std::size_t s = 0; s < pts.size(); s += chunk) {
        const std::size_t n = std::min(chunk, pts.size() - s);
        tape.forward(model, pack(pts.data() + s, n), spec);
        adj.resize(spec, static_cast<Eigen::Index>(n));
        acc += body(s, tape.result(), adj);
        if (grad) tape.backward(model, adj, *grad);
    }
    return acc;
}

inline void ensure_grad(const SurrogateModel& model, Eigen::VectorXd* grad) {
    if (grad && grad->size() != static_cast<Eigen::Index>(model.parameter_count()))
        *grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
}

}  // namespace detail

/// Mean squared scaled error against labels. Adds weight * gradient to `grad`.
inline double data_loss(const SurrogateModel& model, const std::vector<LabeledPoint>& labeled, const PinnProblem& pb,
                        Eigen::VectorXd* grad = nullptr, double weight = 1.0, std::size_t chunk = 512) {
    require(!labeled.empty(), "data loss: no labeled points");
    detail::ensure_grad(model, grad);
    std::vector<Point4> pts(labeled.size());
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        require(std::isfinite(labeled[i].temperature), "data loss: labeled point without a temperature");
        pts[i] = labeled[i].p;
    }
    const double inv = 1.0 / pb.delta_t_ref(), n = static_cast<double>(pts.size());
    const double sum = detail::chunked(model, pts, ChannelSpec::value_only(), chunk, grad,
                                       [&](std::size_t s, const BatchDerivatives& d, BatchAdjoints& adj) {
                                           double acc = 0.0;
                                           for (Eigen::Index i = 0; i < d.value.size(); ++i) {
                                               const double r = (d.value(i) - labeled[s + static_cast<std::size_t>(i)].temperature) * inv;
                                               acc += r * r;
                                               adj.value(i) = weight * 2.0 * r * inv / n;
                                           }
                                           return acc;
                                       });
    return sum / n;
}

/// Mean squared scaled deviation from ambient at t = 0.
inline double ic_loss(const SurrogateModel& model, const std::vector<Point4>& initial, const PinnProblem& pb,
                      Eigen::VectorXd* grad = nullptr, double weight = 1.0, std::size_t chunk = 512) {
    require(!initial.empty(), "initial-condition loss: no points");
    detail::ensure_grad(model, grad);
    const double inv = 1.0 / pb.delta_t_ref(), n = static_cast<double>(initial.size()), T0 = pb.ambient();
    const double sum = detail::chunked(model, initial, ChannelSpec::value_only(), chunk, grad,
                                       [&](std::size_t, const BatchDerivatives& d, BatchAdjoints& adj) {
                                           double acc = 0.0;
                                           for (Eigen::Index i = 0; i < d.value.size(); ++i) {
                                               const double r = (d.value(i) - T0) * inv;
                                               acc += r * r;
                                               adj.value(i) = weight * 2.0 * r * inv / n;
                                           }
                                           return acc;
                                       });
    return sum / n;
}

/// Scaled energy-equation residual at one point and its partial derivatives
/// with respect to T, dT/dt, grad T and the second partials.
struct PdeResidual {
    double r = 0.0;
    double dT = 0.0;
    double dTt = 0.0;
    std::array<double, 3> dgrad{};
    double dlap = 0.0;  // same for each pure second partial
};

inline PdeResidual pde_residual(const PinnProblem& pb, double T, double Tt, const std::array<double, 3>& g, double lap,
                                PhaseState state, Region region) {
    using DD = Dual<Dual<double>>;
    const double Te = std::clamp(T, pb.property_t_min, pb.property_t_max);
    const double inside = (T > pb.property_t_min && T < pb.property_t_max) ? 1.0 : 0.0;
    const DD Td{Dual<double>{Te, 1.0}, Dual<double>{1.0, 0.0}};
    const auto props = pb.material.effective_props(Td, state, region);
    const DD C = props.rho * props.cp_apparent;
    const double k = props.k.v.v, k1 = props.k.d.v, k2 = props.k.d.d;
    const double inv = 1.0 / pb.pde_scale();
    PdeResidual out;
    double cap = 0.0, cap1 = 0.0;  // coefficient of dT/dt and its T-derivative
    if (pb.form == ResidualForm::Literal) {
        const DD G = C * Td;
        const double G1 = G.d.v, G2 = G.d.d;
        cap = G1;
        cap1 = G2;
        out.r = (G1 * Tt - k * lap) * inv;
        out.dT = (G2 * Tt - k1 * lap) * inside * inv;
        out.dTt = G1 * inv;
        out.dlap = -k * inv;
    } else {
        const double c0 = C.v.v, c1 = C.d.v;
        cap = c0;
        cap1 = c1;
        const double g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        out.r = (c0 * Tt - k * lap - k1 * g2) * inv;
        out.dT = (c1 * Tt - k1 * lap - k2 * g2) * inside * inv;
        out.dTt = c0 * inv;
        out.dlap = -k * inv;
        for (int a = 0; a < 3; ++a) out.dgrad[static_cast<std::size_t>(a)] = -2.0 * k1 * g[static_cast<std::size_t>(a)] * inv;
    }
    if (pb.local_capacity_scaling) {
        const double f = pb.rho_ref * pb.cp_ref / cap;
        out.dT = out.dT * f - out.r * f * cap1 * inside / cap;
        out.r *= f;
        out.dTt *= f;
        out.dlap *= f;
        for (auto& v : out.dgrad) v *= f;
    }
    return out;
}

/// Mean squared scaled PDE residual. `states` holds the interior points at
/// indices [offset, offset + N).
inline double pde_residual_loss(const SurrogateModel& model, const std::vector<Point4>& interior, const PinnProblem& pb,
                                const StateTable& states, std::size_t offset = 0, Eigen::VectorXd* grad = nullptr,
                                double weight = 1.0, std::size_t chunk = 256) {
    require(!interior.empty(), "PDE loss: no interior points");
    require(states.size() >= offset + interior.size(), "PDE loss: state table does not cover the interior points");
    detail::ensure_grad(model, grad);
    const double n = static_cast<double>(interior.size());
    const double sum = detail::chunked(
        model, interior, ChannelSpec::heat_equation(), chunk, grad,
        [&](std::size_t s, const BatchDerivatives& d, BatchAdjoints& adj) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < d.value.size(); ++i) {
                const std::size_t idx = s + static_cast<std::size_t>(i);
                const Point4& p = interior[idx];
                const std::array<double, 3> g{d.first(0, i), d.first(1, i), d.first(2, i)};
                const double lap = d.second(0, i) + d.second(1, i) + d.second(2, i);
                const auto res = pde_residual(pb, d.value(i), d.first(3, i), g, lap, states.state(offset + idx, p.t),
                                              pb.domain.region_at(p.z));
                acc += res.r * res.r;
                const double f = weight * 2.0 * res.r / n;
                adj.value(i) = f * res.dT;
                for (int a = 0; a < 3; ++a) adj.first(a, i) = f * res.dgrad[static_cast<std::size_t>(a)];
                adj.first(3, i) = f * res.dTt;
                for (int a = 0; a < 3; ++a) adj.second(a, i) = f * res.dlap;
            }
            return acc;
        });
    return sum / n;
}

/// Scaled boundary residual at one point: value, d/dT and d/d(grad T).
struct BcResidual {
    double r = 0.0;
    double dT = 0.0;
    std::array<double, 3> dgrad{};
};

inline BcResidual bc_residual(const PinnProblem& pb, const BoundaryPoint& b, double T, const std::array<double, 3>& g,
                              PhaseState state) {
    BcResidual out;
    if (b.face == BoundaryFace::Bottom) {
        out.r = (T - pb.ambient()) / pb.delta_t_ref();
        out.dT = 1.0 / pb.delta_t_ref();
        return out;
    }
    const double Te = std::clamp(T, pb.property_t_min, pb.property_t_max);
    const double inside = (T > pb.property_t_min && T < pb.property_t_max) ? 1.0 : 0.0;
    const auto kd = pb.material.effective_props(make_variable(Te), state, pb.domain.region_at(b.p.z)).k;
    const double dn = g[0] * b.normal[0] + g[1] * b.normal[1] + g[2] * b.normal[2];
    const double inv = 1.0 / pb.flux_scale();
    double r = kd.v * dn, dT = kd.d * dn * inside;
    for (int a = 0; a < 3; ++a) out.dgrad[static_cast<std::size_t>(a)] = kd.v * b.normal[static_cast<std::size_t>(a)] * inv;
    switch (b.face) {
        case BoundaryFace::Top:
            r -= laser_flux(b.p.x, b.p.y, b.p.t, pb.process);
            [[fallthrough]];
        case BoundaryFace::Lateral: {
            const auto& pp = pb.process;
            const double T0 = pp.ambient;
            r += pp.h_conv * (T - T0) + pp.emissivity * pp.sigma * (T * T * T * T - T0 * T0 * T0 * T0);
            dT += pp.h_conv + 4.0 * pp.emissivity * pp.sigma * T * T * T;
            break;
        }
        case BoundaryFace::Symmetry: break;
        default: throw InvalidInput("boundary loss: unknown face type");
    }
    out.r = r * inv;
    out.dT = dT * inv;
    return out;
}

/// Mean squared scaled boundary residual. `states` holds the boundary points
/// at indices [offset, offset + P).
inline double bc_loss(const SurrogateModel& model, const std::vector<BoundaryPoint>& boundary, const PinnProblem& pb,
                      const StateTable& states, std::size_t offset, Eigen::VectorXd* grad = nullptr, double weight = 1.0,
                      std::size_t chunk = 512) {
    require(!boundary.empty(), "boundary loss: no boundary points");
    require(states.size() >= offset + boundary.size(), "boundary loss: state table does not cover the boundary points");
    detail::ensure_grad(model, grad);
    std::vector<Point4> pts(boundary.size());
    for (std::size_t i = 0; i < boundary.size(); ++i) pts[i] = boundary[i].p;
    const double n = static_cast<double>(pts.size());
    const double sum = detail::chunked(model, pts, ChannelSpec::spatial_gradient(), chunk, grad,
                                       [&](std::size_t s, const BatchDerivatives& d, BatchAdjoints& adj) {
                                           double acc = 0.0;
                                           for (Eigen::Index i = 0; i < d.value.size(); ++i) {
                                               const std::size_t idx = s + static_cast<std::size_t>(i);
                                               const auto& b = boundary[idx];
                                               const std::array<double, 3> g{d.first(0, i), d.first(1, i), d.first(2, i)};
                                               const auto res = bc_residual(pb, b, d.value(i), g, states.state(offset + idx, b.p.t));
                                               acc += res.r * res.r;
                                               const double f = weight * 2.0 * res.r / n;
                                               adj.value(i) = f * res.dT;
                                               for (int a = 0; a < 3; ++a) adj.first(a, i) = f * res.dgrad[static_cast<std::size_t>(a)];
                                           }
                                           return acc;
                                       });
    return sum / n;
}

/// All four terms and the weighted total; accumulates the gradient of the
/// total into `grad` when given. `states` must come from make_state_table.
inline LossReport evaluate_losses(const SurrogateModel& model, const PinnProblem& pb, const CollocationSet& set,
                                  const StateTable& states, const LossWeights& w, Eigen::VectorXd* grad = nullptr) {
    require(states.size() == set.N() + set.P(), "losses: state table does not match the collocation set");
    LossReport r;
    detail::ensure_grad(model, grad);
    r.data = set.labeled.empty() ? 0.0 : data_loss(model, set.labeled, pb, w.data > 0 ? grad : nullptr, w.data);
    r.pde = set.interior.empty() ? 0.0 : pde_residual_loss(model, set.interior, pb, states, 0, w.pde > 0 ? grad : nullptr, w.pde);
    r.bc = set.boundary.empty() ? 0.0 : bc_loss(model, set.boundary, pb, states, set.N(), w.bc > 0 ? grad : nullptr, w.bc);
    r.ic = set.initial.empty() ? 0.0 : ic_loss(model, set.initial, pb, w.ic > 0 ? grad : nullptr, w.ic);
    r.total = weighted_total(r, w);
    return r;
}

namespace detail {

/// Random partition of 0..n-1 into k nearly equal slices.
inline std::vector<std::vector<std::size_t>> partition(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<std::size_t>> out(k);
    for (std::size_t j = 0; j < k; ++j)
        out[j].assign(idx.begin() + static_cast<std::ptrdiff_t>(j * n / k),
                      idx.begin() + static_cast<std::ptrdiff_t>((j + 1) * n / k));
    return out;
}

/// Sub-set of `set` with a matching state table.
inline std::pair<CollocationSet, StateTable> select(const CollocationSet& set, const StateTable& states,
                                                    const std::array<std::vector<std::size_t>, 4>& pick) {
    CollocationSet s;
    for (auto i : pick[0]) s.labeled.push_back(set.labeled[i]);
    std::vector<Point3> pts;
    std::vector<double> tm;
    for (auto i : pick[1]) {
        s.interior.push_back(set.interior[i]);
        pts.push_back(states.point(i));
        tm.push_back(states.t_min(i));
    }
    for (auto i : pick[2]) {
        s.boundary.push_back(set.boundary[i]);
        pts.push_back(states.point(set.N() + i));
        tm.push_back(states.t_min(set.N() + i));
    }
    for (auto i : pick[3]) s.initial.push_back(set.initial[i]);
    StateTable st(std::move(pts), states.dt_state());
    for (std::size_t i = 0; i < tm.size(); ++i) st.merge(i, tm[i]);
    return {std::move(s), std::move(st)};
}

}  // namespace detail

struct TrainOptions {
    std::size_t epochs = 30000;
    std::size_t refresh_every = 500;
    /// Time range scanned when refreshing the state table.
    double state_horizon = 0.0;
    /// Adam steps per epoch, each on a disjoint random slice of every
    /// point set (reshuffled every epoch). 1 = full batch.
    std::size_t batches = 1;
    std::uint64_t seed = 0;
    /// Rescales the gradient to this Euclidean norm when larger; 0 = off.
    double clip_norm = 0.0;
    /// Stops after the first epoch whose total loss is at or below this; 0 = off.
    double stop_below = 0.0;
    /// Called after every epoch with that epoch's report.
    std::function<void(const LossReport&)> on_epoch;
};

struct TrainSummary {
    std::vector<LossReport> history;
    /// Melted-point count of the state table after each refresh (first entry: before training).
    std::vector<std::size_t> melted_after_refresh;
    bool state_monotone = true;
    double wall_seconds = 0.0;
};

/// Adam training loop. Epoch numbering continues from `first_epoch`. On a
/// non-finite loss the model is restored to the last good parameters and
/// NumericalError is thrown.
inline TrainSummary train(SurrogateModel& model, AdamState& adam, const PinnProblem& pb, const CollocationSet& set,
                          StateTable& states, const LossWeights& w, const TrainOptions& opt, std::size_t first_epoch = 0) {
    pb.validate();
    w.validate();
    require(states.size() == set.N() + set.P(), "train: state table does not match the collocation set");
    for (const auto& lp : set.labeled) require(std::isfinite(lp.temperature), "train: labeled point without a temperature");
    require(opt.batches >= 1, "train: batches per epoch must be at least 1");
    const std::size_t k = opt.batches;
    if (adam.m.size() != static_cast<Eigen::Index>(model.parameter_count()))
        adam = AdamState(model.parameter_count(), adam.lr);

    TrainSummary out;
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(opt.seed);
    const double scan = opt.state_horizon > 0 ? opt.state_horizon : pb.horizon;
    out.melted_after_refresh.push_back(states.melted_count());
    auto snapshot = states.t_min();

    Eigen::VectorXd grad(static_cast<Eigen::Index>(model.parameter_count()));
    Eigen::VectorXd last_good = model.parameters();
    const std::array<std::size_t, 4> sizes{set.M(), set.N(), set.P(), set.Q()};
    auto step = [&](const CollocationSet& s, const StateTable& st, std::size_t epoch) {
        grad.setZero();
        LossReport rep = evaluate_losses(model, pb, s, st, w, &grad);
        rep.epoch = epoch;
        if (!std::isfinite(rep.total) || !grad.allFinite()) {
            model.parameters() = last_good;
            throw NumericalError("train: non-finite loss at epoch " + std::to_string(rep.epoch) +
                                 "; model restored to the last good parameters");
        }
        last_good = model.parameters();
        if (opt.clip_norm > 0.0) {
            const double gn = grad.norm();
            if (gn > opt.clip_norm) grad *= opt.clip_norm / gn;
        }
        adam_step(model, adam, grad);
        return rep;
    };
    for (std::size_t e = 0; e < opt.epochs; ++e) {
        if (opt.refresh_every > 0 && e > 0 && e % opt.refresh_every == 0) {
            states.refresh(model, scan, pb.material.liquidus);
            for (std::size_t i = 0; i < states.size(); ++i)
                if (states.t_min(i) > snapshot[i]) out.state_monotone = false;
            snapshot = states.t_min();
            out.melted_after_refresh.push_back(states.melted_count());
        }
        LossReport rep;
        if (k == 1) {
            rep = step(set, states, first_epoch + e);
        } else {
            std::array<std::vector<std::vector<std::size_t>>, 4> parts;
            for (std::size_t t = 0; t < 4; ++t) parts[t] = detail::partition(sizes[t], k, rng);
            // Epoch report: point-weighted mean of the slice losses.
            const auto n = [](std::size_t part, std::size_t whole) {
                return whole ? static_cast<double>(part) / static_cast<double>(whole) : 0.0;
            };
            for (std::size_t j = 0; j < k; ++j) {
                const auto [s, st] = detail::select(set, states, {parts[0][j], parts[1][j], parts[2][j], parts[3][j]});
                const auto r = step(s, st, first_epoch + e);
                rep.data += n(s.M(), set.M()) * r.data;
                rep.pde += n(s.N(), set.N()) * r.pde;
                rep.bc += n(s.P(), set.P()) * r.bc;
                rep.ic += n(s.Q(), set.Q()) * r.ic;
            }
            rep.epoch = first_epoch + e;
            rep.total = weighted_total(rep, w);
        }
        out.history.push_back(rep);
        if (opt.on_epoch) opt.on_epoch(rep);
        if (opt.stop_below > 0.0 && rep.total <= opt.stop_below) break;
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// Network temperatures on all grid nodes at `time`, with melt flags from a
/// node state table (see make_node_table).
inline ThermalField predict_field(const SurrogateModel& model, const StateTable& node_states, const StructuredGrid& grid,
                                  double time) {
    require(node_states.size() == grid.node_count(), "predict_field: node state table does not match grid");
    std::vector<Point4> pts(grid.node_count());
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        const Point3 p = grid.node(n);
        pts[n] = {p.x, p.y, p.z, time};
    }
    ThermalField f;
    f.time = time;
    f.temperature = forward_batch(model, pts);
    f.t_min = node_states.t_min();
    return f;
}

}  // namespace lpbf
