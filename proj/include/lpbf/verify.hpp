#pragma once

// Built-in verification checks: material values, solver order and energy
// audit, derivative checks and the melt-history property table.

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lpbf/network.hpp"
#include "lpbf/solver.hpp"

namespace lpbf {

struct CheckResult {
    std::string name;
    double value = 0.0;
    double limit = 0.0;
    bool pass = false;
    std::string detail;
};

inline CheckResult check_at_most(std::string name, double value, double limit, std::string detail = {}) {
    return {std::move(name), value, limit, std::isfinite(value) && value <= limit, std::move(detail)};
}

inline CheckResult check_at_least(std::string name, double value, double limit, std::string detail = {}) {
    return {std::move(name), value, limit, std::isfinite(value) && value >= limit, std::move(detail)};
}

// ---- material --------------------------------------------------------------

/// Property values derived from the SS316L laws (40-digit reference
/// evaluations) and the latent-heat quadrature invariant. Each check reports
/// its error divided by its tolerance.
inline std::vector<CheckResult> material_checks(const MaterialLibrary& m = MaterialLibrary::ss316l()) {
    std::vector<CheckResult> out;
    auto near = [&](const std::string& name, double got, double want, double tol) {
        out.push_back(check_at_most(name, std::abs(got - want) / tol, 1.0));
    };
    near("rho(0)", m.solid_props(0.0).rho, 8084.0, 1e-12);
    const auto s = m.solid_props(293.0);
    near("rho(293)", s.rho, 7957.33333994, 0.01);
    near("cp(293)", s.cp, 501.262, 1e-9);
    near("k(293)", s.k, 13.85103, 1e-3);
    near("rho(1658)", m.solid_props(1658.0).rho, 7279.10314184, 1e-6);
    const auto p = m.powder_props(293.0, 0.35);
    near("rho_powder(293)", p.rho, 5172.266670961, 0.01);
    near("k_powder(293)", p.k, 3.8352159744408946, 1e-3);
    for (double T : {300.0, 900.0, 1500.0})
        near("k_powder/k_solid(" + std::to_string(static_cast<int>(T)) + ")", m.powder_props(T, 0.35).k / m.solid_props(T).k,
             0.27689030883919063, 1e-5);
    near("f_L(1658)", m.liquid_fraction(1658.0), 0.0, 1e-15);
    near("f_L(1723)", m.liquid_fraction(1723.0), 1.0, 1e-15);
    near("f_L(1690.5)", m.liquid_fraction(1690.5), 0.5, 1e-12);
    near("alpha(0)", m.mass_fraction(0.0, 1658.0), -0.5, 1e-15);
    near("alpha(1)", m.mass_fraction(1.0, 1723.0), 0.5, 1e-15);
    near("alpha(0.5, 1690.5)", m.mass_fraction(0.5, 1690.5), -0.013732173619204523, 1e-4);
    for (auto st : {PhaseState::Unmelted, PhaseState::Melted}) {
        const auto l = m.effective_props(2000.0, st, Region::PowderLayer);
        near("liquid rho", l.rho, 6873.0, 1e-12);
        near("liquid k", l.k, 22.5, 1e-12);
        near("liquid cp", l.cp_apparent, 775.0, 1e-12);
    }
    for (auto st : {PhaseState::Unmelted, PhaseState::Melted}) {
        const int n = 2000;
        const double a = m.solidus, b = m.liquidus, h = (b - a) / n;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double w = (i == 0 || i == n) ? 0.5 : 1.0;
            acc += w * m.latent_heat * m.mass_fraction_derivative(a + i * h, st, Region::PowderLayer);
        }
        out.push_back(check_at_most(std::string("latent integral / L - 1 (") +
                                        (st == PhaseState::Melted ? "melted" : "unmelted") + ")",
                                    std::abs(acc * h / m.latent_heat - 1.0), 1e-3));
    }
    return out;
}

// ---- melt-history property rules -------------------------------------------

/// Point-wise check of the property assignment on random (T, state, region)
/// samples against a table of the rules with the SS316L coefficients
/// written out independently of MaterialLibrary. Returns the worst relative
/// mismatch and the number of samples.
inline CheckResult property_table_check(std::size_t samples = 1000, std::uint64_t seed = 11) {
    const MaterialLibrary m = MaterialLibrary::ss316l();
    constexpr double TS = 1658.0, TL = 1723.0, phi = 0.35;
    auto rho_s = [](double T) { return 8084.0 - 0.4209 * T - 3.894e-5 * T * T; };
    auto k_s = [](double T) { return 9.248 + 0.01571 * T; };
    auto cp_s = [](double T) { return 462.0 + 0.134 * T; };
    struct Rule {
        double rho, k, cp;
        PhaseKind kind;
    };
    // Columns: band (solid, mushy, liquid) x powder-or-bulk.
    auto oracle = [&](double T, PhaseState s, Region r) -> Rule {
        const bool powder = r == Region::PowderLayer && s == PhaseState::Unmelted;
        const double rs = powder ? (1 - phi) * rho_s(T) : rho_s(T);
        const double ks = powder ? k_s(T) * (1 - phi) / (1 + 11 * phi * phi) : k_s(T);
        if (T >= TL) return {6873.0, 22.5, 775.0, PhaseKind::Liquid};
        if (T < TS) return {rs, ks, cp_s(T), powder ? PhaseKind::Powder : PhaseKind::BulkSolid};
        const double f = (T - TS) / (TL - TS);
        const double rho = (1 - f) * rs + f * 6873.0;
        return {rho, (1 - f) * ks + f * 22.5, ((1 - f) * rs * cp_s(T) + f * 6873.0 * 775.0) / rho, PhaseKind::Mushy};
    };
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> band(0.0, 1.0), Tlo(293.0, TS), Tmid(TS, TL), Thi(TL, 5000.0);
    std::bernoulli_distribution coin(0.5);
    double worst = 0.0;
    std::size_t kind_mismatch = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double b = band(rng);
        const double T = b < 0.4 ? Tlo(rng) : b < 0.7 ? Tmid(rng) : Thi(rng);
        const PhaseState s = coin(rng) ? PhaseState::Melted : PhaseState::Unmelted;
        const Region r = coin(rng) ? Region::PowderLayer : Region::Substrate;
        const Rule want = oracle(T, s, r);
        const auto got = m.effective_props(T, s, r);
        const double sensible = got.cp_apparent - m.latent_heat * m.mass_fraction_derivative(T, s, r);
        worst = std::max({worst, std::abs(got.rho - want.rho) / want.rho, std::abs(got.k - want.k) / want.k,
                          std::abs(sensible - want.cp) / want.cp});
        if (m.phase_kind(T, s, r) != want.kind) ++kind_mismatch;
    }
    CheckResult c = check_at_most("property rules, worst relative mismatch", worst, 1e-12,
                                  std::to_string(samples) + " samples, " + std::to_string(kind_mismatch) + " phase mismatches");
    c.pass = c.pass && kind_mismatch == 0;
    return c;
}

// ---- solver ----------------------------------------------------------------

namespace detail {

inline std::vector<double> uniform_axis(double lo, double hi, std::size_t cells) {
    std::vector<double> a(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i) a[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cells);
    a.back() = hi;
    return a;
}

inline StructuredGrid column_grid(double height, std::size_t nz) {
    DomainSpec d;
    d.length_x = 10e-6;
    d.width_y = 20e-6;
    d.substrate_depth = height - 30e-6;
    d.powder_thickness = 30e-6;
    d.laser_start_x = 0.0;
    return StructuredGrid(d, uniform_axis(0, d.length_x, 1), uniform_axis(0, d.y_max(), 1), uniform_axis(0, height, nz),
                          whole_domain(d));
}

inline double ierfc(double x) { return std::exp(-x * x) / std::sqrt(kPi) - x * std::erfc(x); }

// Max-norm error of a manufactured solution on a column with nz cells.
inline double mms_error(std::size_t nz) {
    const double Lz = 120e-6, A = 500.0, tau = 1e-3, T0 = 293.0, t_end = 1e-3;
    auto g = column_grid(Lz, nz);
    MaterialLibrary mat;
    mat.porosity = 0.0;
    auto exact = [&](double z, double t) { return T0 + A * std::sin(kPi * z / (2 * Lz)) * std::exp(-t / tau); };
    SolverHooks hooks;
    hooks.adiabatic_sides = true;
    hooks.source = [&](const Point3& p, double t) {
        const double w = kPi / (2 * Lz), s = std::sin(w * p.z), c = std::cos(w * p.z), e = std::exp(-t / tau);
        const double T = T0 + A * s * e;
        auto k = mat.effective_props(make_variable(T), PhaseState::Melted, Region::Substrate).k;
        return mat.volumetric_heat_capacity(T, PhaseState::Melted, Region::Substrate) * (-A * s * e / tau) -
               k.d * (A * w * c * e) * (A * w * c * e) + k.v * A * w * w * s * e;
    };
    SolverSettings st;
    const double h = Lz / static_cast<double>(nz);
    st.dt = 2e4 * h * h;
    st.picard_rel_tol = 1e-13;
    st.linear_tol = 1e-14;
    HeatSolver solver(g, mat, ProcessParams{}, st, hooks);
    ThermalField f = uniform_field(g, T0);
    for (std::size_t n = 0; n < g.node_count(); ++n) f.temperature[n] = exact(g.node(n).z, 0.0);
    const auto out = solver.run(f, t_end, {}).back();
    double err = 0.0;
    for (std::size_t n = 0; n < g.node_count(); ++n) err = std::max(err, std::abs(out.temperature[n] - exact(g.node(n).z, t_end)));
    return err;
}

}  // namespace detail

/// Observed spatial order of a manufactured solution between the two finest of three columns.
inline CheckResult mms_order_check(std::size_t coarse_cells = 10) {
    const double e1 = detail::mms_error(coarse_cells), e2 = detail::mms_error(2 * coarse_cells),
                 e3 = detail::mms_error(4 * coarse_cells);
    const double p = std::log2(e2 / e3);
    std::ostringstream d;
    d << "max errors " << e1 << ", " << e2 << ", " << e3 << " K; orders " << std::log2(e1 / e2) << ", " << p;
    return check_at_least("manufactured solution spatial order", p, 1.9, d.str());
}

/// Relative L2 of the temperature rise against the semi-infinite solution
/// for a constant surface flux on an insulated-sided column.
inline CheckResult surface_flux_check() {
    const double H = 300e-6, q = 1e9, T0 = 293.0, t_end = 100e-6, k = 20.0, rho = 8000.0, cp = 500.0;
    auto g = detail::column_grid(H, 300);
    MaterialLibrary mat;
    mat.porosity = 0.0;
    mat.rho_solid = Polynomial{rho};
    mat.cp_solid = Polynomial{cp};
    mat.k_solid = Polynomial{k};
    SolverHooks hooks;
    hooks.adiabatic_sides = true;
    hooks.top_flux = [&](double, double, double) { return q; };
    SolverSettings st;
    st.dt = 0.1e-6;
    HeatSolver solver(g, mat, ProcessParams{}, st, hooks);
    const auto out = solver.run(uniform_field(g, T0), t_end, {}).back();
    const double s = std::sqrt(k / (rho * cp) * t_end);
    double num = 0.0, den = 0.0;
    for (std::size_t kk = 0; kk < g.nz(); ++kk) {
        const double exact = 2 * q * s / k * detail::ierfc((H - g.zs()[kk]) / (2 * s));
        const double d = out.temperature[g.index(0, 0, kk)] - T0 - exact;
        num += d * d;
        den += exact * exact;
    }
    return check_at_most("surface flux vs erfc solution, rel L2", std::sqrt(num / den), 0.02);
}

/// Worst per-step mismatch between the enthalpy change and the boundary
/// heat input on a laser run with an insulated bottom, relative to the input.
inline CheckResult energy_audit_check(int steps = 40) {
    DomainSpec d;
    d.length_x = 200e-6;
    d.width_y = 120e-6;
    d.substrate_depth = 40e-6;
    d.powder_thickness = 30e-6;
    d.laser_start_x = 60e-6;
    auto g = build_grid(d, 10e-6, {5e-6, 5e-6, 5e-6}, {30e-6, 150e-6, 0, 40e-6, 40e-6, 70e-6});
    ProcessParams pp;
    pp.laser_start_x = d.laser_start_x;
    SolverSettings st;
    st.picard_rel_tol = 1e-12;
    st.picard_max_iters = 60;
    st.linear_tol = 1e-13;
    st.warn_on_nonconvergence = false;
    SolverHooks hooks;
    hooks.insulated_bottom = true;
    HeatSolver solver(g, MaterialLibrary::ss316l(), pp, st, hooks);
    ThermalField f = uniform_field(g, pp.ambient);
    double worst = 0.0;
    for (int s = 0; s < steps; ++s) {
        StepReport rep;
        f = solver.step(f, 0.5e-6, &rep);
        worst = std::max(worst, std::abs(rep.delta_enthalpy - rep.boundary_inflow) / std::abs(rep.boundary_inflow));
    }
    return check_at_most("energy audit, worst relative per-step mismatch", worst, 1e-6,
                         std::to_string(f.melted_count()) + " melted nodes after " + std::to_string(steps) + " steps");
}

// ---- network derivatives -----------------------------------------------------

namespace detail {

inline SurrogateModel random_network(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> depth(1, 3), width(2, 9);
    std::vector<int> sizes{4};
    const int nd = depth(rng);
    for (int i = 0; i < nd; ++i) sizes.push_back(width(rng));
    sizes.push_back(1);
    auto m = glorot_init(sizes, rng());
    std::uniform_real_distribution<double> u(-0.5, 0.5), s(0.5, 2.0);
    for (std::size_t l = 0; l < m.layer_count(); ++l)
        for (Eigen::Index i = 0; i < m.bias(l).size(); ++i) m.bias(l)(i) = u(rng);
    for (auto& map : m.input_maps) map = {s(rng), u(rng)};
    m.output_map = {s(rng) * 100.0, 300.0};
    return m;
}

template <class F>
double richardson_first(F&& f, double h) {
    auto d = [&](double s) { return (f(s) - f(-s)) / (2 * s); };
    return (4 * d(h / 2) - d(h)) / 3;
}

template <class F>
double richardson_second(F&& f, double h) {
    const double f0 = f(0.0);
    auto d = [&](double s) { return (f(s) - 2 * f0 + f(-s)) / (s * s); };
    return (4 * d(h / 2) - d(h)) / 3;
}

inline double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Loss touching the value, first and second channels.
inline double probe_loss(const BatchDerivatives& d, BatchAdjoints& adj) {
    constexpr double scale = 1e-4;
    double L = 0.0;
    for (Eigen::Index i = 0; i < d.value.size(); ++i) {
        const double T = d.value(i);
        L += (T - 310.0) * (T - 310.0);
        adj.value(i) += scale * 2 * (T - 310.0);
        for (Eigen::Index k = 0; k < d.first.rows(); ++k) {
            const double c = 0.3 + 0.1 * static_cast<double>(k);
            L += c * d.first(k, i) * d.first(k, i);
            adj.first(k, i) += scale * 2 * c * d.first(k, i);
        }
        for (Eigen::Index k = 0; k < d.second.rows(); ++k) {
            const double e = 0.2 - 0.05 * static_cast<double>(k);
            L += e * d.second(k, i) * T;
            adj.second(k, i) += scale * e * T;
            adj.value(i) += scale * e * d.second(k, i);
        }
    }
    return scale * L;
}

}  // namespace detail

/// Input derivatives (first in x, y, z, t; second in x, y, z) and parameter
/// gradients of random networks against Richardson-extrapolated central
/// differences. Reports the worst relative error.
inline std::vector<CheckResult> autodiff_checks(int networks = 100, std::uint64_t seed = 2024) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    auto point = [&] { return Point4{u(rng), u(rng), u(rng), u(rng)}; };
    auto shifted = [](Point4 p, int a, double h) {
        (a == 0 ? p.x : a == 1 ? p.y : a == 2 ? p.z : p.t) += h;
        return p;
    };
    double worst_first = 0.0, worst_second = 0.0, worst_param = 0.0;
    std::size_t n_first = 0, n_second = 0, n_param = 0;
    const ChannelSpec specs[] = {ChannelSpec::value_only(), ChannelSpec::spatial_gradient(), ChannelSpec::heat_equation()};
    for (int net = 0; net < networks; ++net) {
        const SurrogateModel m = detail::random_network(rng);
        const double floor = 1e-2 * m.output_map.scale;
        for (int k = 0; k < 3; ++k) {
            const Point4 p = point();
            const auto d = input_derivatives(m, p);
            for (int a = 0; a < 4; ++a) {
                auto f = [&](double h) { return forward(m, shifted(p, a, h)); };
                worst_first = std::max(worst_first, detail::relative_error(d.gradient[static_cast<std::size_t>(a)],
                                                                           detail::richardson_first(f, 1e-3), floor));
                ++n_first;
                if (a < 3) {
                    worst_second = std::max(worst_second, detail::relative_error(d.second[static_cast<std::size_t>(a)],
                                                                                 detail::richardson_second(f, 2e-2), floor));
                    ++n_second;
                }
            }
        }
        std::vector<Point4> pts;
        for (int i = 0; i < 10; ++i) pts.push_back(point());
        const auto& spec = specs[net % 3];
        auto loss_at = [&](const SurrogateModel& q) {
            Eigen::VectorXd g;
            return param_gradient(q, pts, spec, detail::probe_loss, g);
        };
        Eigen::VectorXd g;
        const double L0 = param_gradient(m, pts, spec, detail::probe_loss, g);
        std::uniform_int_distribution<std::size_t> pick(0, m.parameter_count() - 1);
        for (int k = 0; k < 12; ++k) {
            const std::size_t j = pick(rng);
            auto f = [&](double h) {
                SurrogateModel q = m;
                q.parameters()(static_cast<Eigen::Index>(j)) += h;
                return loss_at(q);
            };
            worst_param = std::max(worst_param, detail::relative_error(g(static_cast<Eigen::Index>(j)),
                                                                       detail::richardson_first(f, 1e-4),
                                                                       1e-6 * std::abs(L0) + 1e-9));
            ++n_param;
        }
    }
    return {check_at_most("first input derivatives, worst rel err", worst_first, 1e-5, std::to_string(n_first) + " checks"),
            check_at_most("second input derivatives, worst rel err", worst_second, 1e-5, std::to_string(n_second) + " checks"),
            check_at_most("parameter gradients, worst rel err", worst_param, 1e-5, std::to_string(n_param) + " checks")};
}

}  // namespace lpbf
