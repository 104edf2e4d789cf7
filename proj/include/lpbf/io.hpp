#pragma once

// Run configuration, network checkpoints, field export/import and report files.

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lpbf/hybrid.hpp"

namespace lpbf {

// ---- configuration ---------------------------------------------------------

struct GridSettings {
    double coarse = 20e-6;                             // m
    std::array<double, 3> fine{7.6e-6, 10e-6, 12e-6};  // m
    Box refine = track_refine_box(DomainSpec{}, 480e-6);

    bool operator==(const GridSettings&) const = default;
};

struct OutputSettings {
    std::string directory = "out";
    std::vector<double> times;  // s
    bool csv = true;
    bool vtk = false;

    bool operator==(const OutputSettings&) const = default;
};

struct RunConfig {
    DomainSpec geometry;
    GridSettings grid;
    MaterialLibrary material = MaterialLibrary::ss316l();
    ProcessParams process;
    SolverSettings solver;
    SurrogateSettings surrogate;
    HybridSchedule schedule;
    std::size_t transfer_epochs = 3500;
    OutputSettings output;

    StructuredGrid build() const { return build_grid(geometry, grid.coarse, grid.fine, grid.refine); }

    HybridSetup setup() const {
        HybridSetup s{build(), material, process, solver, surrogate, schedule};
        s.process.laser_start_x = geometry.laser_start_x;
        return s;
    }

    void validate() const {
        geometry.validate();
        material.validate();
        process.validate();
        solver.validate();
        surrogate.validate();
        schedule.validate();
        require(process.laser_start_x == geometry.laser_start_x, "config: laser start differs between geometry and process");
        require(geometry.laser_start_x + process.speed * schedule.horizon <= geometry.length_x * (1 + 1e-12),
                "config: the laser path leaves the domain before the horizon");
        for (double t : output.times) require(t >= 0.0 && t <= schedule.horizon * (1 + 1e-12), "config: output time beyond the horizon");
    }

    bool operator==(const RunConfig& o) const {
        return geometry.length_x == o.geometry.length_x && geometry.width_y == o.geometry.width_y &&
               geometry.substrate_depth == o.geometry.substrate_depth &&
               geometry.powder_thickness == o.geometry.powder_thickness && geometry.symmetry == o.geometry.symmetry &&
               geometry.laser_start_x == o.geometry.laser_start_x && grid == o.grid && material == o.material &&
               process == o.process && solver == o.solver && surrogate.layers == o.surrogate.layers &&
               surrogate.init_seed == o.surrogate.init_seed && surrogate.sample_seed == o.surrogate.sample_seed &&
               surrogate.zero_output_layer == o.surrogate.zero_output_layer &&
               surrogate.learning_rate == o.surrogate.learning_rate &&
               surrogate.counts.labeled_per_snapshot == o.surrogate.counts.labeled_per_snapshot &&
               surrogate.counts.interior == o.surrogate.counts.interior &&
               surrogate.counts.boundary == o.surrogate.counts.boundary &&
               surrogate.counts.initial == o.surrogate.counts.initial &&
               surrogate.density_ratio == o.surrogate.density_ratio && surrogate.weights == o.surrogate.weights &&
               surrogate.refresh_every == o.surrogate.refresh_every && surrogate.dt_state == o.surrogate.dt_state &&
               surrogate.batches == o.surrogate.batches && surrogate.t_ref_max == o.surrogate.t_ref_max &&
               surrogate.form == o.surrogate.form && surrogate.extend_collocation == o.surrogate.extend_collocation &&
               surrogate.clip_norm == o.surrogate.clip_norm &&
               surrogate.local_capacity_scaling == o.surrogate.local_capacity_scaling &&
               schedule.horizon == o.schedule.horizon && schedule.window_end == o.schedule.window_end &&
               schedule.snapshot_times == o.schedule.snapshot_times && schedule.corrections == o.schedule.corrections &&
               schedule.correction_duration == o.schedule.correction_duration &&
               schedule.initial_epochs == o.schedule.initial_epochs && schedule.retrain_epochs == o.schedule.retrain_epochs &&
               schedule.trigger == o.schedule.trigger && schedule.residual_threshold == o.schedule.residual_threshold &&
               schedule.monitor_step == o.schedule.monitor_step && schedule.probe_points == o.schedule.probe_points &&
               transfer_epochs == o.transfer_epochs && output == o.output;
    }
};

namespace detail {

using json = nlohmann::json;

// Multiplies by a power of ten through the shortest decimal form, so that
// 7.6 um reads as the literal 7.6e-6 and writes back as 7.6.
inline double shift_decimal(double v, double factor) {
    const int e10 = static_cast<int>(std::lround(std::log10(factor)));
    if (v == 0.0 || !std::isfinite(v)) return v;
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
    std::string text(buf, end);
    const auto epos = text.find('e');
    const int exp = std::stoi(text.substr(epos + 1)) + e10;
    text = text.substr(0, epos) + "e" + std::to_string(exp);
    double out = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), out);
    return out;
}

inline double to_si(double v, double factor) { return factor == 1.0 ? v : shift_decimal(v, factor); }

// Reads keys of one JSON object, converting units, and rejects leftovers.
class SectionReader {
public:
    SectionReader(const json& root, const std::string& name) : name_(name) {
        if (!root.contains(name)) throw FormatError("config: missing section '" + name + "'");
        obj_ = &root.at(name);
        if (!obj_->is_object()) throw FormatError("config: section '" + name + "' must be an object");
    }

    double number(const std::string& key, const std::string& unit, double factor = 1.0) {
        const json& v = get(key, unit);
        if (!v.is_number()) fail(key, "a number", unit);
        return to_si(v.get<double>(), factor);
    }
    std::size_t count(const std::string& key) {
        const json& v = get(key, "count");
        if (!v.is_number_unsigned()) fail(key, "a non-negative integer", "count");
        return v.get<std::size_t>();
    }
    std::uint64_t seed(const std::string& key) {
        const json& v = get(key, "integer");
        if (!v.is_number_unsigned()) fail(key, "a non-negative integer", "integer");
        return v.get<std::uint64_t>();
    }
    bool flag(const std::string& key) {
        const json& v = get(key, "true/false");
        if (!v.is_boolean()) fail(key, "a boolean", "true/false");
        return v.get<bool>();
    }
    std::string text(const std::string& key, const std::vector<std::string>& allowed = {}) {
        std::string hint;
        for (const auto& a : allowed) hint += (hint.empty() ? "" : "|") + a;
        const json& v = get(key, hint.empty() ? "string" : hint);
        if (!v.is_string()) fail(key, "a string", hint.empty() ? "string" : hint);
        std::string s = v.get<std::string>();
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end())
            fail(key, "one of " + hint, hint);
        return s;
    }
    std::vector<double> numbers(const std::string& key, const std::string& unit, double factor = 1.0) {
        const json& v = get(key, unit);
        if (!v.is_array()) fail(key, "an array of numbers", unit);
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(key, "an array of numbers", unit);
            out.push_back(to_si(e.get<double>(), factor));
        }
        return out;
    }
    std::vector<int> integers(const std::string& key) {
        const json& v = get(key, "count");
        if (!v.is_array()) fail(key, "an array of integers", "count");
        std::vector<int> out;
        for (const auto& e : v) {
            if (!e.is_number_integer()) fail(key, "an array of integers", "count");
            out.push_back(e.get<int>());
        }
        return out;
    }

    void finish() const {
        for (auto it = obj_->begin(); it != obj_->end(); ++it)
            if (!used_.count(it.key())) throw FormatError("config: unknown key '" + name_ + "." + it.key() + "'");
    }

private:
    const json& get(const std::string& key, const std::string& unit) {
        used_.insert(key);
        if (!obj_->contains(key))
            throw FormatError("config: missing key '" + name_ + "." + key + "' (" + unit + ")");
        return obj_->at(key);
    }
    [[noreturn]] void fail(const std::string& key, const std::string& what, const std::string& unit) const {
        throw FormatError("config: '" + name_ + "." + key + "' must be " + what + " (" + unit + ")");
    }

    std::string name_;
    const json* obj_ = nullptr;
    std::set<std::string> used_;
};

// Value in the file's unit that converts back to `si` exactly when one exists
// within a few ulps; otherwise the shifted decimal.
inline double to_file_unit(double si, double factor) {
    if (factor == 1.0) return si;
    const double u = shift_decimal(si, 1.0 / factor);
    if (to_si(u, factor) == si) return u;
    double up = u, dn = u;
    for (int i = 0; i < 16; ++i) {
        up = std::nextafter(up, kNever);
        dn = std::nextafter(dn, -kNever);
        if (to_si(up, factor) == si) return up;
        if (to_si(dn, factor) == si) return dn;
    }
    return u;
}

inline json scaled(const std::vector<double>& v, double factor) {
    json a = json::array();
    for (double x : v) a.push_back(to_file_unit(x, factor));
    return a;
}

inline const std::vector<std::string>& required_sections() {
    static const std::vector<std::string> s{"geometry", "grid", "material", "process", "solver",
                                            "network", "training", "hybrid", "output"};
    return s;
}

}  // namespace detail

/// Parses a configuration document. Every key is required; unknown keys are rejected.
inline RunConfig parse_config_text(const std::string& text) {
    using detail::json;
    std::string sections;
    for (const auto& s : detail::required_sections()) sections += (sections.empty() ? "" : ", ") + s;
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw FormatError("config: empty file; required sections: " + sections);
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config: not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw FormatError("config: top level must be an object with sections: " + sections);
    for (auto it = root.begin(); it != root.end(); ++it) {
        const auto& req = detail::required_sections();
        if (std::find(req.begin(), req.end(), it.key()) == req.end())
            throw FormatError("config: unknown section '" + it.key() + "'");
    }
    constexpr double um = 1e-6, us = 1e-6;
    RunConfig c;
    {
        detail::SectionReader r(root, "geometry");
        c.geometry.length_x = r.number("length_x_um", "um", um);
        c.geometry.width_y = r.number("width_y_um", "um, full width", um);
        c.geometry.substrate_depth = r.number("substrate_depth_um", "um", um);
        c.geometry.powder_thickness = r.number("powder_thickness_um", "um", um);
        c.geometry.laser_start_x = r.number("laser_start_x_um", "um", um);
        c.geometry.symmetry = r.flag("symmetry");
        r.finish();
    }
    {
        detail::SectionReader r(root, "grid");
        c.grid.coarse = r.number("coarse_spacing_um", "um", um);
        auto f = r.numbers("fine_spacing_um", "um, [x, y, z]", um);
        if (f.size() != 3) throw FormatError("config: 'grid.fine_spacing_um' must have 3 entries (um)");
        c.grid.fine = {f[0], f[1], f[2]};
        auto bx = r.numbers("refine_x_um", "um, [lo, hi]", um), by = r.numbers("refine_y_um", "um, [lo, hi]", um),
             bz = r.numbers("refine_z_um", "um, [lo, hi]", um);
        if (bx.size() != 2 || by.size() != 2 || bz.size() != 2)
            throw FormatError("config: refinement ranges need [lo, hi] (um)");
        c.grid.refine = {bx[0], bx[1], by[0], by[1], bz[0], bz[1]};
        r.finish();
    }
    {
        detail::SectionReader r(root, "material");
        auto& m = c.material;
        m.solidus = r.number("solidus_k", "K");
        m.liquidus = r.number("liquidus_k", "K");
        m.rho_solid = Polynomial(r.numbers("density_solid_coeffs", "kg/m^3, polynomial in T [K]"));
        m.cp_solid = Polynomial(r.numbers("heat_capacity_solid_coeffs", "J/(kg K), polynomial in T [K]"));
        m.k_solid = Polynomial(r.numbers("conductivity_solid_coeffs", "W/(m K), polynomial in T [K]"));
        m.rho_liquid = r.number("density_liquid_kg_per_m3", "kg/m^3");
        m.cp_liquid = r.number("heat_capacity_liquid_j_per_kg_k", "J/(kg K)");
        m.k_liquid = r.number("conductivity_liquid_w_per_m_k", "W/(m K)");
        m.latent_heat = r.number("latent_heat_j_per_g", "J/g", 1e3);
        m.porosity = r.number("porosity", "fraction");
        m.mushy_smoothing = r.number("mushy_smoothing_k", "K");
        r.finish();
    }
    {
        detail::SectionReader r(root, "process");
        auto& p = c.process;
        p.power = r.number("power_w", "W");
        p.absorptivity = r.number("absorptivity", "fraction");
        p.beam_radius = r.number("beam_radius_um", "um", um);
        p.speed = r.number("speed_mm_per_s", "mm/s", 1e-3);
        p.h_conv = r.number("convection_w_per_m2_k", "W/(m^2 K)");
        p.emissivity = r.number("emissivity", "fraction");
        p.ambient = r.number("ambient_k", "K");
        p.profile = r.text("laser_profile", {"radial", "line"}) == "line" ? LaserProfile::Line : LaserProfile::Radial;
        p.laser_start_x = c.geometry.laser_start_x;
        r.finish();
    }
    {
        detail::SectionReader r(root, "solver");
        auto& s = c.solver;
        s.dt = r.number("dt_us", "us", us);
        s.scheme = r.text("scheme", {"backward-euler", "explicit"}) == "explicit" ? TimeScheme::Explicit : TimeScheme::BackwardEuler;
        s.picard_max_iters = static_cast<int>(r.count("picard_max_iters"));
        s.picard_rel_tol = r.number("picard_rel_tol", "relative");
        s.linear_tol = r.number("linear_tol", "relative");
        s.linear_max_iters = static_cast<int>(r.count("linear_max_iters"));
        s.nonconservative = r.flag("nonconservative");
        r.finish();
    }
    {
        detail::SectionReader r(root, "network");
        auto& n = c.surrogate;
        n.layers = r.integers("layers");
        n.init_seed = r.seed("init_seed");
        n.zero_output_layer = r.flag("zero_output_layer");
        n.t_ref_max = r.number("t_ref_max_k", "K");
        n.learning_rate = r.number("learning_rate", "1");
        r.finish();
    }
    {
        detail::SectionReader r(root, "training");
        auto& n = c.surrogate;
        n.sample_seed = r.seed("sample_seed");
        n.weights.data = r.number("weight_data", "1");
        n.weights.pde = r.number("weight_pde", "1");
        n.weights.bc = r.number("weight_bc", "1");
        n.weights.ic = r.number("weight_ic", "1");
        n.counts.labeled_per_snapshot = r.count("labeled_per_snapshot");
        n.counts.interior = r.count("interior_points");
        n.counts.boundary = r.count("boundary_points");
        n.counts.initial = r.count("initial_points");
        n.density_ratio = r.number("refined_fraction", "fraction");
        n.refresh_every = r.count("refresh_every");
        n.dt_state = r.number("dt_state_us", "us", us);
        n.batches = r.count("batches");
        n.form = r.text("residual_form", {"literal", "enthalpy"}) == "enthalpy" ? ResidualForm::Enthalpy : ResidualForm::Literal;
        n.local_capacity_scaling = r.flag("local_capacity_scaling");
        n.clip_norm = r.number("clip_norm", "1");
        n.extend_collocation = r.flag("extend_collocation");
        r.finish();
    }
    {
        detail::SectionReader r(root, "hybrid");
        auto& h = c.schedule;
        h.horizon = r.number("horizon_us", "us", us);
        h.window_end = r.number("window_end_us", "us", us);
        h.snapshot_times = r.numbers("snapshot_times_us", "us", us);
        h.corrections = r.numbers("corrections_us", "us", us);
        h.correction_duration = r.number("correction_duration_us", "us", us);
        h.initial_epochs = r.count("initial_epochs");
        h.retrain_epochs = r.count("retrain_epochs");
        h.trigger = r.text("trigger", {"fixed", "residual"}) == "residual" ? TriggerMode::ResidualThreshold : TriggerMode::FixedSchedule;
        h.residual_threshold = r.number("residual_threshold", "ratio");
        h.monitor_step = r.number("monitor_step_us", "us", us);
        h.probe_points = r.count("probe_points");
        c.transfer_epochs = r.count("transfer_epochs");
        r.finish();
    }
    {
        detail::SectionReader r(root, "output");
        c.output.directory = r.text("directory");
        c.output.times = r.numbers("times_us", "us", us);
        c.output.csv = r.flag("csv");
        c.output.vtk = r.flag("vtk");
        r.finish();
    }
    c.validate();
    return c;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

inline std::string serialize_config(const RunConfig& c) {
    using detail::json;
    using detail::scaled;
    using detail::to_file_unit;
    constexpr double um = 1e-6, us = 1e-6;
    json j;
    j["geometry"] = {{"length_x_um", to_file_unit(c.geometry.length_x, um)},
                     {"width_y_um", to_file_unit(c.geometry.width_y, um)},
                     {"substrate_depth_um", to_file_unit(c.geometry.substrate_depth, um)},
                     {"powder_thickness_um", to_file_unit(c.geometry.powder_thickness, um)},
                     {"laser_start_x_um", to_file_unit(c.geometry.laser_start_x, um)},
                     {"symmetry", c.geometry.symmetry}};
    const Box& b = c.grid.refine;
    j["grid"] = {{"coarse_spacing_um", to_file_unit(c.grid.coarse, um)},
                 {"fine_spacing_um", scaled({c.grid.fine[0], c.grid.fine[1], c.grid.fine[2]}, um)},
                 {"refine_x_um", scaled({b.x_lo, b.x_hi}, um)},
                 {"refine_y_um", scaled({b.y_lo, b.y_hi}, um)},
                 {"refine_z_um", scaled({b.z_lo, b.z_hi}, um)}};
    const auto& m = c.material;
    j["material"] = {{"solidus_k", m.solidus},
                     {"liquidus_k", m.liquidus},
                     {"density_solid_coeffs", m.rho_solid.coeffs},
                     {"heat_capacity_solid_coeffs", m.cp_solid.coeffs},
                     {"conductivity_solid_coeffs", m.k_solid.coeffs},
                     {"density_liquid_kg_per_m3", m.rho_liquid},
                     {"heat_capacity_liquid_j_per_kg_k", m.cp_liquid},
                     {"conductivity_liquid_w_per_m_k", m.k_liquid},
                     {"latent_heat_j_per_g", to_file_unit(m.latent_heat, 1e3)},
                     {"porosity", m.porosity},
                     {"mushy_smoothing_k", m.mushy_smoothing}};
    const auto& p = c.process;
    j["process"] = {{"power_w", p.power},
                    {"absorptivity", p.absorptivity},
                    {"beam_radius_um", to_file_unit(p.beam_radius, um)},
                    {"speed_mm_per_s", to_file_unit(p.speed, 1e-3)},
                    {"convection_w_per_m2_k", p.h_conv},
                    {"emissivity", p.emissivity},
                    {"ambient_k", p.ambient},
                    {"laser_profile", p.profile == LaserProfile::Line ? "line" : "radial"}};
    const auto& s = c.solver;
    j["solver"] = {{"dt_us", to_file_unit(s.dt, us)},
                   {"scheme", s.scheme == TimeScheme::Explicit ? "explicit" : "backward-euler"},
                   {"picard_max_iters", s.picard_max_iters},
                   {"picard_rel_tol", s.picard_rel_tol},
                   {"linear_tol", s.linear_tol},
                   {"linear_max_iters", s.linear_max_iters},
                   {"nonconservative", s.nonconservative}};
    const auto& n = c.surrogate;
    j["network"] = {{"layers", n.layers},
                    {"init_seed", n.init_seed},
                    {"zero_output_layer", n.zero_output_layer},
                    {"t_ref_max_k", n.t_ref_max},
                    {"learning_rate", n.learning_rate}};
    j["training"] = {{"sample_seed", n.sample_seed},
                     {"weight_data", n.weights.data},
                     {"weight_pde", n.weights.pde},
                     {"weight_bc", n.weights.bc},
                     {"weight_ic", n.weights.ic},
                     {"labeled_per_snapshot", n.counts.labeled_per_snapshot},
                     {"interior_points", n.counts.interior},
                     {"boundary_points", n.counts.boundary},
                     {"initial_points", n.counts.initial},
                     {"refined_fraction", n.density_ratio},
                     {"refresh_every", n.refresh_every},
                     {"dt_state_us", to_file_unit(n.dt_state, us)},
                     {"batches", n.batches},
                     {"residual_form", n.form == ResidualForm::Enthalpy ? "enthalpy" : "literal"},
                     {"local_capacity_scaling", n.local_capacity_scaling},
                     {"clip_norm", n.clip_norm},
                     {"extend_collocation", n.extend_collocation}};
    const auto& h = c.schedule;
    j["hybrid"] = {{"horizon_us", to_file_unit(h.horizon, us)},
                   {"window_end_us", to_file_unit(h.window_end, us)},
                   {"snapshot_times_us", scaled(h.snapshot_times, us)},
                   {"corrections_us", scaled(h.corrections, us)},
                   {"correction_duration_us", to_file_unit(h.correction_duration, us)},
                   {"initial_epochs", h.initial_epochs},
                   {"retrain_epochs", h.retrain_epochs},
                   {"trigger", h.trigger == TriggerMode::ResidualThreshold ? "residual" : "fixed"},
                   {"residual_threshold", h.residual_threshold},
                   {"monitor_step_us", to_file_unit(h.monitor_step, us)},
                   {"probe_points", h.probe_points},
                   {"transfer_epochs", c.transfer_epochs}};
    j["output"] = {{"directory", c.output.directory},
                   {"times_us", scaled(c.output.times, us)},
                   {"csv", c.output.csv},
                   {"vtk", c.output.vtk}};
    return j.dump(2) + "\n";
}

// ---- checkpoints -----------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& o, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& o, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f64(std::ostream& o, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(o, u);
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}
    void bytes(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("checkpoint: file is truncated or corrupt");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }

private:
    std::istream& in_;
};

}  // namespace detail

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
    SurrogateModel model;
    std::optional<AdamState> adam;
};

/// Binary checkpoint: "MSPN", version byte, layer-size count and sizes (u32),
/// per layer row-major weights then biases (f64), input and output scalings,
/// then a presence byte and the optional optimizer state. Little-endian.
inline void write_checkpoint(std::ostream& o, const SurrogateModel& m, const AdamState* adam = nullptr) {
    o.write("MSPN", 4);
    o.put(static_cast<char>(kCheckpointVersion));
    const auto& sizes = m.sizes();
    detail::put_u32(o, static_cast<std::uint32_t>(sizes.size()));
    for (int s : sizes) detail::put_u32(o, static_cast<std::uint32_t>(s));
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        const auto W = m.weight(l);
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) detail::put_f64(o, W(r, c));
        const auto b = m.bias(l);
        for (Eigen::Index r = 0; r < b.size(); ++r) detail::put_f64(o, b(r));
    }
    for (const auto& a : m.input_maps) {
        detail::put_f64(o, a.scale);
        detail::put_f64(o, a.offset);
    }
    detail::put_f64(o, m.output_map.scale);
    detail::put_f64(o, m.output_map.offset);
    o.put(adam ? 1 : 0);
    if (adam) {
        require(adam->m.size() == static_cast<Eigen::Index>(m.parameter_count()), "checkpoint: optimizer state does not match the model");
        detail::put_u64(o, adam->step);
        detail::put_f64(o, adam->lr);
        detail::put_f64(o, adam->beta1);
        detail::put_f64(o, adam->beta2);
        detail::put_f64(o, adam->eps);
        for (Eigen::Index i = 0; i < adam->m.size(); ++i) detail::put_f64(o, adam->m(i));
        for (Eigen::Index i = 0; i < adam->v.size(); ++i) detail::put_f64(o, adam->v(i));
    }
    if (!o) throw FormatError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
    detail::Reader r(in);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "MSPN", 4) != 0) throw FormatError("checkpoint: bad magic bytes");
    const std::uint8_t version = r.u8();
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
    const std::uint32_t n = r.u32();
    if (n < 2 || n > 64) throw FormatError("checkpoint: implausible layer count");
    std::vector<int> sizes(n);
    for (auto& s : sizes) {
        const std::uint32_t v = r.u32();
        if (v == 0 || v > 1u << 16) throw FormatError("checkpoint: implausible layer size");
        s = static_cast<int>(v);
    }
    if (sizes.front() != 4 || sizes.back() != 1) throw FormatError("checkpoint: network must map 4 inputs to 1 output");
    Checkpoint cp{SurrogateModel(sizes), std::nullopt};
    auto& m = cp.model;
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        auto W = m.weight(l);
        for (Eigen::Index i = 0; i < W.rows(); ++i)
            for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = r.f64();
        auto b = m.bias(l);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = r.f64();
    }
    for (auto& a : m.input_maps) {
        a.scale = r.f64();
        a.offset = r.f64();
    }
    m.output_map.scale = r.f64();
    m.output_map.offset = r.f64();
    const std::uint8_t has_adam = r.u8();
    if (has_adam > 1) throw FormatError("checkpoint: bad optimizer presence flag");
    if (has_adam) {
        AdamState a(m.parameter_count());
        a.step = r.u64();
        a.lr = r.f64();
        a.beta1 = r.f64();
        a.beta2 = r.f64();
        a.eps = r.f64();
        for (Eigen::Index i = 0; i < a.m.size(); ++i) a.m(i) = r.f64();
        for (Eigen::Index i = 0; i < a.v.size(); ++i) a.v(i) = r.f64();
        cp.adam = std::move(a);
    }
    return cp;
}

inline void save_checkpoint(const std::string& path, const SurrogateModel& m, const AdamState* adam = nullptr) {
    std::ofstream o(path, std::ios::binary);
    if (!o) throw FormatError("checkpoint: cannot write '" + path + "'");
    write_checkpoint(o, m, adam);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
    return read_checkpoint(in);
}

// ---- fields ----------------------------------------------------------------

/// CSV with columns x,y,z,t,T,state (SI units, 17 significant digits).
inline void write_field_csv(std::ostream& o, const ThermalField& f, const StructuredGrid& g) {
    require(f.size() == g.node_count(), "export: field does not match grid");
    o << "x,y,z,t,T,state\n";
    o << std::setprecision(17);
    for (std::size_t n = 0; n < g.node_count(); ++n) {
        const Point3 p = g.node(n);
        o << p.x << ',' << p.y << ',' << p.z << ',' << f.time << ',' << f.temperature[n] << ','
          << (f.state(n) == PhaseState::Melted ? 1 : 0) << '\n';
    }
}

/// Reads a CSV written by write_field_csv. Melted nodes get t_min = t.
inline ThermalField read_field_csv(std::istream& in, const StructuredGrid& g) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,y,z,t,T,state", 0) != 0) throw FormatError("field csv: missing header");
    ThermalField f(g.node_count(), 0.0);
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (n >= g.node_count()) throw FormatError("field csv: more rows than grid nodes");
        std::array<double, 6> v{};
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t c = 0; c < 6; ++c) {
            if (!std::getline(ss, cell, ',')) throw FormatError("field csv: short row " + std::to_string(n + 2));
            try {
                v[c] = std::stod(cell);
            } catch (const std::exception&) {
                throw FormatError("field csv: bad number in row " + std::to_string(n + 2));
            }
        }
        const Point3 p = g.node(n);
        const double tol = 1e-9 * std::max({g.spec().length_x, g.spec().width_y, g.spec().height()});
        if (std::abs(v[0] - p.x) > tol || std::abs(v[1] - p.y) > tol || std::abs(v[2] - p.z) > tol)
            throw FormatError("field csv: row " + std::to_string(n + 2) + " does not match the grid node");
        if (n == 0) f.time = v[3];
        f.temperature[n] = v[4];
        f.t_min[n] = v[5] != 0.0 ? v[3] : kNever;
        ++n;
    }
    if (n != g.node_count()) throw FormatError("field csv: row count does not match grid node count");
    return f;
}

/// Legacy ASCII VTK rectilinear grid with point scalars T and state.
inline void write_field_vtk(std::ostream& o, const ThermalField& f, const StructuredGrid& g) {
    require(f.size() == g.node_count(), "export: field does not match grid");
    o << "# vtk DataFile Version 3.0\n";
    o << "temperature t=" << std::setprecision(17) << f.time << "\n";
    o << "ASCII\nDATASET RECTILINEAR_GRID\n";
    o << "DIMENSIONS " << g.nx() << ' ' << g.ny() << ' ' << g.nz() << '\n';
    auto coords = [&](const char* name, const std::vector<double>& c) {
        o << name << ' ' << c.size() << " double\n";
        for (std::size_t i = 0; i < c.size(); ++i) o << c[i] << (i + 1 == c.size() ? '\n' : ' ');
    };
    coords("X_COORDINATES", g.xs());
    coords("Y_COORDINATES", g.ys());
    coords("Z_COORDINATES", g.zs());
    o << "POINT_DATA " << g.node_count() << '\n';
    o << "SCALARS T double 1\nLOOKUP_TABLE default\n";
    for (std::size_t n = 0; n < g.node_count(); ++n) o << f.temperature[n] << '\n';
    o << "SCALARS state int 1\nLOOKUP_TABLE default\n";
    for (std::size_t n = 0; n < g.node_count(); ++n) o << (f.state(n) == PhaseState::Melted ? 1 : 0) << '\n';
}

enum class FieldFormat : unsigned char { Csv, Vtk };

inline void export_field(const ThermalField& f, const StructuredGrid& g, FieldFormat fmt, const std::string& path) {
    std::ofstream o(path);
    if (!o) throw FormatError("export: cannot write '" + path + "'");
    if (fmt == FieldFormat::Csv) write_field_csv(o, f, g);
    else write_field_vtk(o, f, g);
    if (!o) throw FormatError("export: write to '" + path + "' failed");
}

inline ThermalField import_field_csv(const std::string& path, const StructuredGrid& g) {
    std::ifstream in(path);
    if (!in) throw FormatError("import: cannot open '" + path + "'");
    return read_field_csv(in, g);
}

// ---- reports ---------------------------------------------------------------

inline void write_loss_history(std::ostream& o, const std::vector<LossReport>& h) {
    o << "epoch,L_data,L_PDE,L_BC,L_IC,L_total\n" << std::setprecision(17);
    for (const auto& r : h) o << r.epoch << ',' << r.data << ',' << r.pde << ',' << r.bc << ',' << r.ic << ',' << r.total << '\n';
}

inline void save_text(const std::string& path, const std::string& text) {
    std::ofstream o(path);
    if (!o) throw FormatError("cannot write '" + path + "'");
    o << text;
}

inline void save_loss_history(const std::string& path, const std::vector<LossReport>& h) {
    std::ofstream o(path);
    if (!o) throw FormatError("cannot write '" + path + "'");
    write_loss_history(o, h);
}

inline void write_ledger_csv(std::ostream& o, const RunLedger& l) {
    o << "phase,t_begin_us,t_end_us,wall_s,rel_l2,final_loss\n" << std::setprecision(10);
    for (const auto& r : l.records())
        o << to_string(r.kind) << ',' << r.t_begin * 1e6 << ',' << r.t_end * 1e6 << ',' << r.wall_seconds << ','
          << r.rel_l2 << ',' << r.final_loss << '\n';
}

/// Text table with one row per stage plus totals.
inline std::string ledger_table(const RunLedger& l, double reference_solver_wall = -1.0) {
    std::ostringstream o;
    o << std::fixed;
    o << std::left << std::setw(28) << "stage" << std::right << std::setw(18) << "interval [us]" << std::setw(12)
      << "wall [s]" << std::setw(12) << "rel L2" << '\n';
    auto row = [&](const std::string& name, double a, double b, double w, double e) {
        std::ostringstream iv;
        iv << std::fixed << std::setprecision(1) << a * 1e6 << "-" << b * 1e6;
        o << std::left << std::setw(28) << name << std::right << std::setw(18) << iv.str() << std::setw(12)
          << std::setprecision(2) << w << std::setw(12);
        if (std::isfinite(e)) o << std::setprecision(4) << e;
        else o << "-";
        o << '\n';
    };
    std::size_t nc = 0, nr = 0;
    for (const auto& r : l.records()) {
        std::string name;
        switch (r.kind) {
            case StageKind::DataGeneration: name = "data generation (solver)"; break;
            case StageKind::Training: name = "training"; break;
            case StageKind::Inference: name = "inference"; break;
            case StageKind::Correction: name = "correction " + std::to_string(++nc) + " (solver)"; break;
            case StageKind::Retraining: name = "retraining " + std::to_string(++nr); break;
        }
        row(name, r.t_begin, r.t_end, r.wall_seconds, r.rel_l2);
    }
    o << std::setprecision(2);
    o << "solver wall total [s]      " << l.solver_wall() << '\n';
    o << "surrogate wall total [s]   " << l.total_wall() - l.solver_wall() << '\n';
    o << "hybrid wall total [s]      " << l.total_wall() << '\n';
    if (reference_solver_wall >= 0.0) o << "full solver run [s]        " << reference_solver_wall << '\n';
    return o.str();
}

}  // namespace lpbf
