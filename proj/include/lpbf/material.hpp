#pragma once

// Temperature- and phase-dependent properties of the powder bed alloy.
//
// Phase bookkeeping follows the melt-history rule: a point that has never
// exceeded the liquidus and lies in the powder layer behaves as powder below
// the solidus; once melted it behaves as bulk solid when it cools back down.
// Between solidus and liquidus the solid and liquid phases are mixed by the
// liquid fraction and the latent heat enters through the apparent heat
// capacity L * d(alpha_m)/dT.

#include <array>
#include <initializer_list>
#include <span>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/dual.hpp"

namespace lpbf {

/// Polynomial with coefficients stored lowest order first.
struct Polynomial {
    std::vector<double> coeffs;

    Polynomial() = default;
    Polynomial(std::initializer_list<double> c) : coeffs(c) {}
    explicit Polynomial(std::vector<double> c) : coeffs(std::move(c)) {}

    template <class S>
    S operator()(const S& x) const {
        S acc(0.0);
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
        return acc;
    }

    bool operator==(const Polynomial&) const = default;
};

/// 0 = never melted, 1 = melted at or before the current time.
enum class PhaseState : unsigned char { Unmelted = 0, Melted = 1 };

enum class Region : unsigned char { PowderLayer, Substrate };

/// Which property rule applies at a (T, state, region) triple.
enum class PhaseKind : unsigned char { Powder, BulkSolid, Mushy, Liquid };

inline const char* to_string(PhaseKind k) {
    switch (k) {
        case PhaseKind::Powder: return "powder";
        case PhaseKind::BulkSolid: return "bulk-solid";
        case PhaseKind::Mushy: return "mushy";
        case PhaseKind::Liquid: return "liquid";
    }
    return "?";
}

template <class S>
struct EffectiveProps {
    S rho;          // kg/m^3
    S k;            // W/(m K)
    S cp_apparent;  // J/(kg K), latent term included
};

struct SolidProps {
    double rho, cp, k;
};

struct PowderProps {
    double rho, k;
};

struct MaterialLibrary {
    double solidus = 1658.0;   // K
    double liquidus = 1723.0;  // K
    Polynomial rho_solid{8084.0, -0.4209, -3.894e-5};
    Polynomial cp_solid{462.0, 0.134};
    Polynomial k_solid{9.248, 0.01571};
    double rho_liquid = 6873.0;
    double cp_liquid = 775.0;
    double k_liquid = 22.5;
    double latent_heat = 2.70e5;  // J/kg
    double porosity = 0.35;
    /// Half-width of the C1 rounding applied to the liquid-fraction corners, K.
    double mushy_smoothing = 0.0;

    /// SS 316L with the latent heat given in J/g, as tabulated for the alloy.
    static MaterialLibrary ss316l(double latent_heat_j_per_g = 270.0) {
        MaterialLibrary m;
        m.latent_heat = latent_heat_j_per_g * 1.0e3;
        m.validate();
        return m;
    }

    void validate() const {
        require(std::isfinite(solidus) && std::isfinite(liquidus) && solidus < liquidus,
                "material: solidus must be below liquidus");
        require(porosity >= 0.0 && porosity < 1.0, "material: porosity must lie in [0, 1)");
        require(latent_heat >= 0.0, "material: latent heat must be non-negative");
        require(mushy_smoothing >= 0.0 && mushy_smoothing <= 0.5 * (liquidus - solidus),
                "material: mushy smoothing half-width must lie in [0, (T_L - T_S)/2]");
        require(!rho_solid.coeffs.empty() && !cp_solid.coeffs.empty() && !k_solid.coeffs.empty(),
                "material: solid property polynomials need at least one coefficient");
        require(rho_liquid > 0 && cp_liquid > 0 && k_liquid > 0, "material: liquid constants must be positive");
        for (double T = 293.0; T <= 5000.0; T += 1.0) {
            auto s = solid_props(T);
            require(s.rho > 0 && s.cp > 0 && s.k > 0,
                    "material: solid properties must stay positive on [293 K, 5000 K]");
        }
    }

    bool operator==(const MaterialLibrary&) const = default;

    // ---- pure-phase laws -------------------------------------------------

    SolidProps solid_props(double T) const {
        require_finite(T, "temperature");
        return {rho_solid(T), cp_solid(T), k_solid(T)};
    }

    PowderProps powder_props(double T, double phi) const {
        require_finite(T, "temperature");
        require(phi >= 0.0 && phi < 1.0, "porosity must lie in [0, 1)");
        return {(1.0 - phi) * rho_solid(T), k_solid(T) * powder_conductivity_ratio(phi)};
    }

    static double powder_conductivity_ratio(double phi) { return (1.0 - phi) / (1.0 + 11.0 * phi * phi); }

    // ---- phase fractions -------------------------------------------------

    template <class S>
    S liquid_fraction(const S& T) const {
        const double t = value_of(T);
        const double span = liquidus - solidus;
        const double w = mushy_smoothing;
        if (w == 0.0) {
            if (t < solidus) return S(0.0);
            if (t >= liquidus) return S(1.0);
            return (T - solidus) / span;
        }
        if (t <= solidus - w) return S(0.0);
        if (t >= liquidus + w) return S(1.0);
        if (t < solidus + w) {
            S u = T - (solidus - w);
            return u * u / (4.0 * w * span);
        }
        if (t > liquidus - w) {
            S u = (liquidus + w) - T;
            return 1.0 - u * u / (4.0 * w * span);
        }
        return (T - solidus) / span;
    }

    /// Mass fraction for a given liquid fraction and solid-side density.
    template <class S>
    static S mass_fraction_with(const S& f_liquid, const S& rho_s, double rho_l) {
        S liquid = f_liquid * rho_l;
        S solid = (1.0 - f_liquid) * rho_s;
        return (liquid - solid) / (2.0 * (solid + liquid));
    }

    double mass_fraction(double f_liquid, double T) const {
        require(f_liquid >= 0.0 && f_liquid <= 1.0, "liquid fraction must lie in [0, 1]");
        return mass_fraction_with(f_liquid, rho_solid(T), rho_liquid);
    }

    // ---- effective properties --------------------------------------------

    static bool uses_powder(PhaseState state, Region region) {
        return region == Region::PowderLayer && state == PhaseState::Unmelted;
    }

    PhaseKind phase_kind(double T, PhaseState state, Region region) const {
        if (T >= liquidus) return PhaseKind::Liquid;
        if (T >= solidus) return PhaseKind::Mushy;
        return uses_powder(state, region) ? PhaseKind::Powder : PhaseKind::BulkSolid;
    }

    /// Solid-side density, conductivity and heat capacity for the point's
    /// melt history (powder or bulk).
    template <class S>
    std::array<S, 3> solid_side(const S& T, PhaseState state, Region region) const {
        S rho = rho_solid(T);
        S k = k_solid(T);
        S cp = cp_solid(T);
        if (uses_powder(state, region)) {
            rho = rho * (1.0 - porosity);
            k = k * powder_conductivity_ratio(porosity);
        }
        return {rho, k, cp};
    }

    /// Derivative of the mass fraction with respect to temperature, carried
    /// through both the liquid fraction and the solid density.
    template <class S>
    S mass_fraction_derivative(const S& T, PhaseState state, Region region) const {
        Dual<S> Td = make_variable(T);
        Dual<S> f = liquid_fraction(Td);
        if (value_of(f) == 0.0 || value_of(f) == 1.0) {
            if (value_of(f.d) == 0.0) return S(0.0);
        }
        auto solid = solid_side(Td, state, region);
        return mass_fraction_with(f, solid[0], rho_liquid).d;
    }

    template <class S>
    EffectiveProps<S> effective_props(const S& T, PhaseState state, Region region) const {
        const S f = liquid_fraction(T);
        const double fv = value_of(f);
        if (fv >= 1.0) return {S(rho_liquid), S(k_liquid), S(cp_liquid)};
        auto [rho_s, k_s, cp_s] = solid_side(T, state, region);
        if (fv <= 0.0 && mushy_smoothing == 0.0) return {rho_s, k_s, cp_s};
        S one_minus = 1.0 - f;
        S rho = one_minus * rho_s + f * rho_liquid;
        S k = one_minus * k_s + f * k_liquid;
        S sensible = (one_minus * rho_s * cp_s + f * (rho_liquid * cp_liquid)) / rho;
        S latent = latent_heat * mass_fraction_derivative(T, state, region);
        return {rho, k, sensible + latent};
    }

    /// rho * c_p,apparent in J/(m^3 K).
    double volumetric_heat_capacity(double T, PhaseState state, Region region) const {
        auto p = effective_props(T, state, region);
        return p.rho * p.cp_apparent;
    }

    /// Temperatures where the heat capacity is non-smooth.
    std::array<double, 4> breakpoints() const {
        const double w = mushy_smoothing;
        return {solidus - w, solidus + w, liquidus - w, liquidus + w};
    }

    /// Integral of rho * c_p,apparent from `a` to `b` (J/m^3); piecewise
    /// Gauss-Legendre between the non-smooth points.
    double heat_content(double a, double b, PhaseState state, Region region) const;

    /// Volumetric enthalpy anchored in the liquid so it is independent of
    /// the melt state for T above the liquidus.
    double enthalpy_density(double T, PhaseState state, Region region) const {
        return heat_content(liquidus + mushy_smoothing, T, state, region);
    }
};

namespace detail {

// 16-point Gauss-Legendre nodes/weights on [-1, 1] (positive half).
inline constexpr std::array<double, 8> kGaussNodes{
    0.0950125098376374401853193, 0.2816035507792589132304605, 0.4580167776572273863424194,
    0.6178762444026437484466718, 0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
inline constexpr std::array<double, 8> kGaussWeights{
    0.1894506104550684962853967, 0.1826034150449235888667637, 0.1691565193950025381893121,
    0.1495959888165767320815017, 0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};

template <class F>
double gauss16(F&& f, double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < kGaussNodes.size(); ++i) {
        const double dx = half * kGaussNodes[i];
        acc += kGaussWeights[i] * (f(mid - dx) + f(mid + dx));
    }
    return acc * half;
}

}  // namespace detail

inline double MaterialLibrary::heat_content(double a, double b, PhaseState state, Region region) const {
    if (a == b) return 0.0;
    const double sign = a < b ? 1.0 : -1.0;
    const double lo = std::min(a, b), hi = std::max(a, b);
    auto integrand = [&](double T) { return volumetric_heat_capacity(T, state, region); };
    double acc = 0.0, start = lo;
    for (double bp : breakpoints()) {
        if (bp > start && bp < hi) {
            acc += detail::gauss16(integrand, start, bp);
            start = bp;
        }
    }
    acc += detail::gauss16(integrand, start, hi);
    return sign * acc;
}

}  // namespace lpbf
