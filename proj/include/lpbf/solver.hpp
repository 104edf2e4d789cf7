#pragma once

// Reference transient conduction solver on the structured grid.
//
// Vertex-centred finite volumes: every node owns the box between the
// mid-points to its neighbours. Time integration is backward Euler written in
// enthalpy form, V (H(T^{n+1}) - H(T^n)) / dt = sum of face fluxes, and the
// nonlinearity in H, k and the radiative loss is resolved by Picard/Newton
// sweeps. Each sweep solves a symmetric positive definite 7-point system with
// Jacobi-preconditioned conjugate gradients.

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <optional>
#include <vector>

#include "lpbf/field.hpp"
#include "lpbf/grid.hpp"
#include "lpbf/material.hpp"

namespace lpbf {

enum class LaserProfile : unsigned char { Line, Radial };

struct ProcessParams {
    double power = 100.0;          // W
    double absorptivity = 0.4;     // eta
    double beam_radius = 40e-6;    // m
    double speed = 0.8;            // m/s
    double h_conv = 40.0;          // W/(m^2 K)
    double emissivity = 0.26;
    double ambient = 293.0;        // K
    double sigma = kStefanBoltzmann;
    LaserProfile profile = LaserProfile::Radial;
    double laser_start_x = 160e-6;  // m, beam centre at t = 0

    void validate() const {
        require(power >= 0.0, "process: laser power must be non-negative");
        require(beam_radius > 0.0 && speed > 0.0, "process: beam radius and scan speed must be positive");
        require(absorptivity > 0.0 && absorptivity <= 1.0, "process: absorption coefficient must lie in (0, 1]");
        require(emissivity >= 0.0 && emissivity <= 1.0, "process: emissivity must lie in [0, 1]");
        require(ambient > 0.0 && h_conv >= 0.0, "process: ambient temperature must be positive");
    }

    double peak_flux() const { return 2.0 * absorptivity * power / (kPi * beam_radius * beam_radius); }

    bool operator==(const ProcessParams&) const = default;
};

/// Absorbed laser flux into the top surface, W/m^2 (non-negative).
inline double laser_flux(double x, double y, double t, const ProcessParams& p) {
    const double dx = x - p.laser_start_x - p.speed * t;
    double d2 = dx * dx;
    if (p.profile == LaserProfile::Radial) d2 += y * y;
    return p.peak_flux() * std::exp(-2.0 * d2 / (p.beam_radius * p.beam_radius));
}

enum class TimeScheme : unsigned char { BackwardEuler, Explicit };

struct SolverSettings {
    double dt = 0.5e-6;
    TimeScheme scheme = TimeScheme::BackwardEuler;
    int picard_max_iters = 20;
    double picard_rel_tol = 1e-6;
    double linear_tol = 1e-10;
    int linear_max_iters = 10000;
    /// k outside the Laplacian (k_i * lap T) instead of div(k grad T).
    bool nonconservative = false;
    bool warn_on_nonconvergence = true;

    void validate() const {
        require(dt > 0.0, "solver: dt must be positive");
        require(picard_rel_tol > 0.0 && linear_tol > 0.0, "solver: tolerances must be positive");
        require(picard_max_iters >= 1 && linear_max_iters >= 1, "solver: iteration limits must be positive");
    }

    bool operator==(const SolverSettings&) const = default;
};

/// Optional overrides used by verification problems.
struct SolverHooks {
    /// Volumetric heat source, W/m^3.
    std::function<double(const Point3&, double t)> source;
    /// Replaces the laser + convection + radiation balance on the top face.
    std::function<double(double x, double y, double t)> top_flux;
    /// Zero flux instead of the fixed temperature at z = 0.
    bool insulated_bottom = false;
    /// When set, every boundary except the bottom is adiabatic.
    bool adiabatic_sides = false;
};

struct StepReport {
    int picard_iterations = 0;
    bool converged = true;
    double picard_change = 0.0;
    int linear_iterations = 0;
    double delta_enthalpy = 0.0;    // J
    double boundary_inflow = 0.0;   // J over the step (boundary + source)
};

struct RunStats {
    std::size_t steps = 0;
    std::size_t picard_iterations = 0;
    std::size_t unconverged_steps = 0;
    double max_unconverged_change = 0.0;
    double wall_seconds = 0.0;
};

/// Volumetric enthalpy H(T) for one (state, region) combination with the
/// solid branch cached below the lower mushy breakpoint.
class EnthalpyCurve {
public:
    EnthalpyCurve() = default;
    EnthalpyCurve(const MaterialLibrary& m, PhaseState s, Region r)
        : mat_(&m), state_(s), region_(r), low_(m.breakpoints()[0]), h_low_(m.enthalpy_density(low_, s, r)) {}

    double operator()(double T) const {
        if (T <= low_) return h_low_ - mat_->heat_content(T, low_, state_, region_);
        return mat_->enthalpy_density(T, state_, region_);
    }
    double slope(double T) const { return mat_->volumetric_heat_capacity(T, state_, region_); }

    /// Inverse by safeguarded Newton; H is strictly increasing.
    double invert(double target, double guess) const {
        double lo = 1.0, hi = 2.0e4, T = std::clamp(guess, lo, hi);
        for (int it = 0; it < 200; ++it) {
            const double r = (*this)(T) - target;
            if (std::abs(r) <= 1e-12 * std::max(1.0, std::abs(target))) return T;
            (r > 0 ? hi : lo) = T;
            double next = T - r / slope(T);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - T) <= 1e-13 * T) return next;
            T = next;
        }
        return T;
    }

private:
    const MaterialLibrary* mat_ = nullptr;
    PhaseState state_{};
    Region region_{};
    double low_ = 0.0;
    double h_low_ = 0.0;
};

class HeatSolver {
public:
    HeatSolver(const StructuredGrid& grid, MaterialLibrary material, ProcessParams params, SolverSettings settings,
               SolverHooks hooks = {})
        : grid_(&grid), mat_(std::move(material)), params_(params), settings_(settings), hooks_(std::move(hooks)) {
        mat_.validate();
        params_.validate();
        settings_.validate();
        for (int s = 0; s < 2; ++s)
            for (int r = 0; r < 2; ++r)
                curves_[s][r] = EnthalpyCurve(mat_, static_cast<PhaseState>(s), static_cast<Region>(r));
        regions_.resize(grid.node_count());
        for (std::size_t n = 0; n < grid.node_count(); ++n) regions_[n] = grid.region(n);
        build_boundary_tables();
    }

    HeatSolver(const HeatSolver&) = delete;
    HeatSolver& operator=(const HeatSolver&) = delete;

    const StructuredGrid& grid() const { return *grid_; }
    const MaterialLibrary& material() const { return mat_; }
    const ProcessParams& params() const { return params_; }
    const SolverSettings& settings() const { return settings_; }

    double node_enthalpy(std::size_t n, double T, PhaseState s) const { return curve(n, s)(T); }

    /// Total enthalpy of the field, J.
    double enthalpy(const ThermalField& f) const {
        double H = 0.0;
        for (std::size_t n = 0; n < f.size(); ++n) H += grid_->volume(n) * curve(n, f.state(n))(f.temperature[n]);
        return H;
    }

    ThermalField step(const ThermalField& field, double dt, StepReport* report = nullptr) const;

    std::vector<ThermalField> run(const ThermalField& initial, double t_end, std::vector<double> snapshot_times,
                                  RunStats* stats = nullptr) const;

private:
    const EnthalpyCurve& curve(std::size_t n, PhaseState s) const {
        return curves_[static_cast<int>(s)][static_cast<int>(regions_[n])];
    }

    struct BoundaryFaceArea {
        double top = 0, lateral = 0, symmetry = 0;
    };

    void build_boundary_tables() {
        const auto& g = *grid_;
        boundary_.assign(g.node_count(), {});
        fixed_.assign(g.node_count(), 0);
        for (std::size_t k = 0; k < g.nz(); ++k)
            for (std::size_t j = 0; j < g.ny(); ++j)
                for (std::size_t i = 0; i < g.nx(); ++i) {
                    const std::size_t n = g.index(i, j, k);
                    const double ax = g.dual_width(1, j) * g.dual_width(2, k);
                    const double ay = g.dual_width(0, i) * g.dual_width(2, k);
                    const double az = g.dual_width(0, i) * g.dual_width(1, j);
                    auto& b = boundary_[n];
                    if (k == g.nz() - 1) b.top += az;
                    if (i == 0) b.lateral += ax;
                    if (i == g.nx() - 1) b.lateral += ax;
                    if (j == g.ny() - 1) b.lateral += ay;
                    if (j == 0) (g.spec().symmetry ? b.symmetry : b.lateral) += ay;
                    if (k == 0 && !hooks_.insulated_bottom) fixed_[n] = 1;
                }
    }

    // Net heat flux into the domain through the top / lateral faces and its
    // derivative with respect to the local temperature.
    std::pair<double, double> surface_loss(double T) const {
        const double T0 = params_.ambient;
        const double q = -params_.h_conv * (T - T0) - params_.emissivity * params_.sigma * (T * T * T * T - T0 * T0 * T0 * T0);
        const double dq = -params_.h_conv - 4.0 * params_.emissivity * params_.sigma * T * T * T;
        return {q, dq};
    }

    // Linearised boundary + source inflow for node n at temperature T: value, d/dT.
    std::pair<double, double> boundary_inflow(std::size_t n, double T, double t) const {
        const auto& b = boundary_[n];
        double q = 0.0, dq = 0.0;
        if (hooks_.adiabatic_sides) {
            if (b.top > 0 && hooks_.top_flux) {
                const Point3 p = grid_->node(n);
                q += b.top * hooks_.top_flux(p.x, p.y, t);
            }
            return {q, dq};
        }
        if (b.top > 0) {
            const Point3 p = grid_->node(n);
            if (hooks_.top_flux) {
                q += b.top * hooks_.top_flux(p.x, p.y, t);
            } else {
                auto [ql, dql] = surface_loss(T);
                q += b.top * (laser_flux(p.x, p.y, t, params_) + ql);
                dq += b.top * dql;
            }
        }
        if (b.lateral > 0) {
            auto [ql, dql] = surface_loss(T);
            q += b.lateral * ql;
            dq += b.lateral * dql;
        }
        return {q, dq};
    }

    struct Stencil {
        std::vector<double> diag, cx, cy, cz, rhs;
    };

    int solve_cg(const Stencil& A, std::vector<double>& x) const;
    void apply(const Stencil& A, const std::vector<double>& x, std::vector<double>& y) const;

    ThermalField explicit_step(const ThermalField& field, double dt, StepReport* report) const;

    const StructuredGrid* grid_;
    MaterialLibrary mat_;
    ProcessParams params_;
    SolverSettings settings_;
    SolverHooks hooks_;
    EnthalpyCurve curves_[2][2];
    std::vector<Region> regions_;
    std::vector<BoundaryFaceArea> boundary_;
    std::vector<unsigned char> fixed_;
};

inline void HeatSolver::apply(const Stencil& A, const std::vector<double>& x, std::vector<double>& y) const {
    const auto& g = *grid_;
    const std::size_t nx = g.nx(), nxy = g.nx() * g.ny(), N = g.node_count();
    for (std::size_t n = 0; n < N; ++n) y[n] = A.diag[n] * x[n];
    for (std::size_t n = 0; n < N; ++n) {
        if (A.cx[n] != 0.0) {
            y[n] -= A.cx[n] * x[n + 1];
            y[n + 1] -= A.cx[n] * x[n];
        }
        if (A.cy[n] != 0.0) {
            y[n] -= A.cy[n] * x[n + nx];
            y[n + nx] -= A.cy[n] * x[n];
        }
        if (A.cz[n] != 0.0) {
            y[n] -= A.cz[n] * x[n + nxy];
            y[n + nxy] -= A.cz[n] * x[n];
        }
    }
}

// Convergence is measured on the Jacobi-scaled residual D^-1 r, which is in
// kelvin and unaffected by the row scaling of the nonconservative form.
inline int HeatSolver::solve_cg(const Stencil& A, std::vector<double>& x) const {
    const std::size_t N = x.size();
    std::vector<double> r(N), z(N), p(N), q(N);
    apply(A, x, q);
    double bnorm = 0.0, rz = 0.0, znorm = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        r[n] = A.rhs[n] - q[n];
        const double bs = A.rhs[n] / A.diag[n];
        bnorm += bs * bs;
        z[n] = r[n] / A.diag[n];
        p[n] = z[n];
        rz += r[n] * z[n];
        znorm += z[n] * z[n];
    }
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) bnorm = 1.0;
    for (int it = 0; it < settings_.linear_max_iters; ++it) {
        const double rnorm = std::sqrt(znorm);
        if (!std::isfinite(rnorm)) throw NumericalError("heat solver: linear solve produced non-finite residual");
        if (rnorm <= settings_.linear_tol * bnorm) return it;
        apply(A, p, q);
        double pq = 0.0;
        for (std::size_t n = 0; n < N; ++n) pq += p[n] * q[n];
        if (!(pq > 0.0)) throw NumericalError("heat solver: system matrix is not positive definite");
        const double alpha = rz / pq;
        double rz_new = 0.0;
        znorm = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            x[n] += alpha * p[n];
            r[n] -= alpha * q[n];
            z[n] = r[n] / A.diag[n];
            rz_new += r[n] * z[n];
            znorm += z[n] * z[n];
        }
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t n = 0; n < N; ++n) p[n] = z[n] + beta * p[n];
    }
    throw NumericalError("heat solver: conjugate gradients did not converge");
}

inline ThermalField HeatSolver::step(const ThermalField& field, double dt, StepReport* report) const {
    const auto& g = *grid_;
    require(field.size() == g.node_count(), "heat solver: field does not match grid");
    require(dt > 0.0, "heat solver: dt must be positive");
    if (settings_.scheme == TimeScheme::Explicit) return explicit_step(field, dt, report);

    const std::size_t N = g.node_count(), nx = g.nx(), ny = g.ny(), nz = g.nz(), nxy = nx * ny;
    const double t_new = field.time + dt;
    const bool nonconservative = settings_.nonconservative;

    std::vector<PhaseState> state(N);
    std::vector<double> H_old(N);
    for (std::size_t n = 0; n < N; ++n) {
        state[n] = field.state(n);
        H_old[n] = curve(n, state[n])(field.temperature[n]);
    }

    Stencil A;
    A.diag.assign(N, 0.0);
    A.cx.assign(N, 0.0);
    A.cy.assign(N, 0.0);
    A.cz.assign(N, 0.0);
    A.rhs.assign(N, 0.0);
    std::vector<double> Tk = field.temperature, Tnew, kval(N), src(N, 0.0);
    if (hooks_.source) {
        for (std::size_t n = 0; n < N; ++n) src[n] = hooks_.source(g.node(n), t_new);
    }

    std::vector<double> kinks;
    for (double bp : mat_.breakpoints())
        if (kinks.empty() || bp != kinks.back()) kinks.push_back(bp);

    StepReport rep;
    for (int it = 1; it <= settings_.picard_max_iters; ++it) {
        for (std::size_t n = 0; n < N; ++n)
            kval[n] = mat_.effective_props(Tk[n], state[n], regions_[n]).k;
        std::fill(A.diag.begin(), A.diag.end(), 0.0);
        std::fill(A.rhs.begin(), A.rhs.end(), 0.0);

        // Face couplings between unknown nodes (Dirichlet neighbours go to the rhs).
        auto couple = [&](std::size_t a, std::size_t b, double area_over_d, double& slot) {
            const double kf = nonconservative ? 1.0 : 0.5 * (kval[a] + kval[b]);
            const double G = kf * area_over_d;
            slot = 0.0;
            if (fixed_[a] && fixed_[b]) return;
            if (fixed_[a]) {
                A.diag[b] += G;
                A.rhs[b] += G * field.temperature[a];
            } else if (fixed_[b]) {
                A.diag[a] += G;
                A.rhs[a] += G * field.temperature[b];
            } else {
                A.diag[a] += G;
                A.diag[b] += G;
                slot = G;
            }
        };
        for (std::size_t k = 0; k < nz; ++k)
            for (std::size_t j = 0; j < ny; ++j)
                for (std::size_t i = 0; i < nx; ++i) {
                    const std::size_t n = g.index(i, j, k);
                    if (i + 1 < nx)
                        couple(n, n + 1, g.dual_width(1, j) * g.dual_width(2, k) / (g.xs()[i + 1] - g.xs()[i]), A.cx[n]);
                    if (j + 1 < ny)
                        couple(n, n + nx, g.dual_width(0, i) * g.dual_width(2, k) / (g.ys()[j + 1] - g.ys()[j]), A.cy[n]);
                    if (k + 1 < nz)
                        couple(n, n + nxy, g.dual_width(0, i) * g.dual_width(1, j) / (g.zs()[k + 1] - g.zs()[k]), A.cz[n]);
                }
        for (std::size_t n = 0; n < N; ++n) {
            if (fixed_[n]) {
                A.diag[n] = 1.0;
                A.rhs[n] = field.temperature[n];
                continue;
            }
            const double scale = nonconservative ? 1.0 / kval[n] : 1.0;
            const auto& cv = curve(n, state[n]);
            const double C = cv.slope(Tk[n]);
            const double Hk = cv(Tk[n]);
            const double V = g.volume(n);
            auto [qb, dqb] = boundary_inflow(n, Tk[n], t_new);
            A.diag[n] += scale * (V * C / dt - dqb);
            A.rhs[n] += scale * (V * (C * Tk[n] - Hk + H_old[n]) / dt + qb - dqb * Tk[n] + V * src[n]);
        }
        Tnew = Tk;
        rep.linear_iterations += solve_cg(A, Tnew);
        // Stop at the first kink of H(T) crossed in this sweep so the next
        // linearisation uses the heat capacity on the far side of it.
        for (std::size_t n = 0; n < N; ++n) {
            if (fixed_[n]) continue;
            const double a = Tk[n], b = Tnew[n];
            for (double bp : kinks) {
                const double gap = 1e-9 * bp;
                if (a < bp - gap && b > bp + gap) {
                    Tnew[n] = bp + gap;
                    break;
                }
                if (a > bp + gap && b < bp - gap) {
                    Tnew[n] = bp - gap;
                    break;
                }
            }
        }
        double dmax = 0.0, tmax = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            dmax = std::max(dmax, std::abs(Tnew[n] - Tk[n]));
            tmax = std::max(tmax, std::abs(Tnew[n]));
        }
        rep.picard_iterations = it;
        rep.picard_change = dmax / std::max(tmax, 1e-300);
        // Energy bookkeeping with the linearisation that produced Tnew.
        double inflow = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            if (fixed_[n]) continue;
            auto [qb, dqb] = boundary_inflow(n, Tk[n], t_new);
            inflow += qb + dqb * (Tnew[n] - Tk[n]) + g.volume(n) * src[n];
        }
        // Conduction into the domain across faces shared with fixed nodes.
        for (std::size_t n = 0; n < N; ++n) {
            if (!fixed_[n]) continue;
            const auto [i, j, k] = g.ijk(n);
            // Only the node above a fixed bottom node is unknown.
            auto across = [&](std::size_t m, double area_over_d) {
                if (fixed_[m]) return;
                const double kf = nonconservative ? 1.0 : 0.5 * (kval[n] + kval[m]);
                inflow += kf * area_over_d * (field.temperature[n] - Tnew[m]);
            };
            if (k + 1 < nz) across(n + nxy, g.dual_width(0, i) * g.dual_width(1, j) / (g.zs()[k + 1] - g.zs()[k]));
        }
        rep.boundary_inflow = inflow * dt;
        Tk.swap(Tnew);
        if (rep.picard_change < settings_.picard_rel_tol) break;
    }
    rep.converged = rep.picard_change < settings_.picard_rel_tol;
    if (!rep.converged && settings_.warn_on_nonconvergence) {
        std::clog << "heat solver: Picard iteration stopped at t = " << t_new << " s with relative change "
                  << rep.picard_change << "\n";
    }

    ThermalField out;
    out.time = t_new;
    out.temperature = std::move(Tk);
    out.t_min = field.t_min;
    double dH = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        dH += g.volume(n) * (curve(n, state[n])(out.temperature[n]) - H_old[n]);
        if (!std::isfinite(out.temperature[n])) throw NumericalError("heat solver: non-finite temperature");
        if (out.t_min[n] == kNever && out.temperature[n] > mat_.liquidus) out.t_min[n] = t_new;
    }
    rep.delta_enthalpy = dH;
    if (report) *report = rep;
    return out;
}

inline ThermalField HeatSolver::explicit_step(const ThermalField& field, double dt, StepReport* report) const {
    const auto& g = *grid_;
    const std::size_t N = g.node_count(), nx = g.nx(), ny = g.ny(), nz = g.nz(), nxy = nx * ny;
    const double t0 = field.time;
    std::vector<double> flux(N, 0.0), kval(N);
    for (std::size_t n = 0; n < N; ++n)
        kval[n] = mat_.effective_props(field.temperature[n], field.state(n), regions_[n]).k;
    const auto& T = field.temperature;
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t n = g.index(i, j, k);
                auto face = [&](std::size_t m, double area_over_d) {
                    const double ka = settings_.nonconservative ? kval[n] : 0.5 * (kval[n] + kval[m]);
                    const double kb = settings_.nonconservative ? kval[m] : ka;
                    flux[n] += ka * area_over_d * (T[m] - T[n]);
                    flux[m] += kb * area_over_d * (T[n] - T[m]);
                };
                if (i + 1 < nx) face(n + 1, g.dual_width(1, j) * g.dual_width(2, k) / (g.xs()[i + 1] - g.xs()[i]));
                if (j + 1 < ny) face(n + nx, g.dual_width(0, i) * g.dual_width(2, k) / (g.ys()[j + 1] - g.ys()[j]));
                if (k + 1 < nz) face(n + nxy, g.dual_width(0, i) * g.dual_width(1, j) / (g.zs()[k + 1] - g.zs()[k]));
            }
    ThermalField out = field;
    out.time = t0 + dt;
    StepReport rep;
    double dH = 0.0, inflow = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        if (fixed_[n]) continue;
        const auto& cv = curve(n, field.state(n));
        double q = boundary_inflow(n, T[n], t0).first + (hooks_.source ? g.volume(n) * hooks_.source(g.node(n), t0) : 0.0);
        inflow += q;
        const double H0 = cv(T[n]);
        const double H1 = H0 + dt * (flux[n] + q) / g.volume(n);
        out.temperature[n] = cv.invert(H1, T[n]);
        dH += g.volume(n) * (H1 - H0);
    }
    for (std::size_t n = 0; n < N; ++n)
        if (out.t_min[n] == kNever && out.temperature[n] > mat_.liquidus) out.t_min[n] = out.time;
    rep.picard_iterations = 1;
    rep.delta_enthalpy = dH;
    rep.boundary_inflow = inflow * dt;
    if (report) *report = rep;
    return out;
}

inline std::vector<ThermalField> HeatSolver::run(const ThermalField& initial, double t_end,
                                                 std::vector<double> snapshot_times, RunStats* stats) const {
    require(t_end >= initial.time, "heat solver: t_end precedes the initial time");
    const double tol = 1e-9 * std::max(settings_.dt, 1e-12);
    for (double t : snapshot_times) {
        require(t >= initial.time - tol && t <= t_end + tol, "heat solver: snapshot time outside [t0, t_end]");
    }
    std::sort(snapshot_times.begin(), snapshot_times.end());
    snapshot_times.erase(std::unique(snapshot_times.begin(), snapshot_times.end(),
                                     [&](double a, double b) { return std::abs(a - b) <= tol; }),
                         snapshot_times.end());
    if (snapshot_times.empty() || std::abs(snapshot_times.back() - t_end) > tol) snapshot_times.push_back(t_end);

    const auto start = std::chrono::steady_clock::now();
    RunStats st;
    std::vector<ThermalField> out;
    ThermalField cur = initial;
    for (double target : snapshot_times) {
        const double span = target - cur.time;
        if (span > tol) {
            const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(span / settings_.dt - 1e-9)));
            const double dt = span / static_cast<double>(steps);
            for (std::size_t s = 0; s < steps; ++s) {
                StepReport rep;
                cur = step(cur, dt, &rep);
                ++st.steps;
                st.picard_iterations += static_cast<std::size_t>(rep.picard_iterations);
                if (!rep.converged) {
                    ++st.unconverged_steps;
                    st.max_unconverged_change = std::max(st.max_unconverged_change, rep.picard_change);
                }
            }
        }
        cur.time = target;
        out.push_back(cur);
    }
    st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (stats) *stats = st;
    return out;
}

/// One backward-Euler step with the default hooks.
inline ThermalField step(const ThermalField& field, double dt, const ProcessParams& params,
                         const MaterialLibrary& material, const StructuredGrid& grid,
                         const SolverSettings& settings = {}, StepReport* report = nullptr) {
    HeatSolver solver(grid, material, params, settings);
    return solver.step(field, dt, report);
}

inline std::vector<ThermalField> run(const ThermalField& initial, double t_end, const std::vector<double>& snapshot_times,
                                     const ProcessParams& params, const MaterialLibrary& material,
                                     const StructuredGrid& grid, const SolverSettings& settings,
                                     RunStats* stats = nullptr) {
    HeatSolver solver(grid, material, params, settings);
    return solver.run(initial, t_end, snapshot_times, stats);
}

inline double enthalpy(const ThermalField& field, const MaterialLibrary& material, const StructuredGrid& grid) {
    HeatSolver solver(grid, material, ProcessParams{}, SolverSettings{});
    return solver.enthalpy(field);
}

}  // namespace lpbf
