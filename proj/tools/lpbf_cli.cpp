// Command-line front end: oracle runs, training, inference, hybrid runs,
// transfer, comparison and self-checks.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "lpbf/io.hpp"
#include "lpbf/verify.hpp"

namespace fs = std::filesystem;
using namespace lpbf;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::string checkpoint;
    std::vector<double> times_us;
    std::optional<std::uint64_t> seed;
    std::optional<double> power;
    std::optional<double> speed_mm_s;
    bool quiet = false;
};

void log(const Common& c, const std::string& m) {
    if (!c.quiet) std::cerr << "[lpbf] " << m << std::endl;
}

RunConfig load(const Common& c) {
    RunConfig cfg = parse_config(c.config);
    if (!c.out.empty()) cfg.output.directory = c.out;
    if (!c.times_us.empty()) {
        cfg.output.times.clear();
        for (double t : c.times_us) cfg.output.times.push_back(detail::to_si(t, 1e-6));
    }
    if (c.seed) {
        cfg.surrogate.init_seed = *c.seed;
        cfg.surrogate.sample_seed = *c.seed;
    }
    if (c.power) cfg.process.power = *c.power;
    if (c.speed_mm_s) cfg.process.speed = detail::to_si(*c.speed_mm_s, 1e-3);
    cfg.validate();
    fs::create_directories(cfg.output.directory);
    return cfg;
}

std::string path_in(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.output.directory) / name).string(); }

std::string field_name(double t, const std::string& ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "field_t%gus.%s", t * 1e6, ext.c_str());
    return buf;
}

void export_all(const RunConfig& cfg, const StructuredGrid& g, const std::vector<ThermalField>& fields, const std::string& prefix = {}) {
    for (const auto& f : fields) {
        if (cfg.output.csv) export_field(f, g, FieldFormat::Csv, path_in(cfg, prefix + field_name(f.time, "csv")));
        if (cfg.output.vtk) export_field(f, g, FieldFormat::Vtk, path_in(cfg, prefix + field_name(f.time, "vtk")));
    }
}

std::string pool_row(const MeltPoolDims& d) {
    char buf[128];
    if (d.empty) return "   (no melt pool)";
    std::snprintf(buf, sizeof buf, " L %7.1f  W %7.1f  D %6.1f um", d.length * 1e6, d.width * 1e6, d.depth * 1e6);
    return buf;
}

std::vector<double> output_times_or_horizon(const RunConfig& cfg) {
    if (!cfg.output.times.empty()) return cfg.output.times;
    return {cfg.schedule.horizon};
}

// ---- subcommands -------------------------------------------------------------

int cmd_grid(const Common& c, bool dump) {
    const RunConfig cfg = load(c);
    const auto g = cfg.build();
    std::cout << "nodes " << g.nx() << " x " << g.ny() << " x " << g.nz() << " = " << g.node_count() << ", cells "
              << g.cell_count() << "\n";
    const char* axis = "xyz";
    for (int a = 0; a < 3; ++a)
        std::cout << axis[a] << ": min spacing " << g.min_spacing(a) * 1e6 << " um, max grading " << g.max_grading(a) << "\n";
    if (dump) {
        std::ofstream o(path_in(cfg, "grid_axes.csv"));
        o << "axis,index,coordinate_m\n" << std::setprecision(17);
        const std::array<const std::vector<double>*, 3> ax{&g.xs(), &g.ys(), &g.zs()};
        for (int a = 0; a < 3; ++a)
            for (std::size_t i = 0; i < ax[static_cast<std::size_t>(a)]->size(); ++i)
                o << axis[a] << ',' << i << ',' << (*ax[static_cast<std::size_t>(a)])[i] << '\n';
        log(c, "wrote " + path_in(cfg, "grid_axes.csv"));
    }
    return 0;
}

int cmd_fea(const Common& c) {
    const RunConfig cfg = load(c);
    const auto g = cfg.build();
    const auto times = output_times_or_horizon(cfg);
    const double t_end = *std::max_element(times.begin(), times.end());
    log(c, "oracle run to " + std::to_string(t_end * 1e6) + " us on " + std::to_string(g.node_count()) + " nodes");
    HeatSolver solver(g, cfg.material, cfg.setup().process, cfg.solver);
    RunStats stats;
    auto fields = solver.run(uniform_field(g, cfg.process.ambient), t_end, times, &stats);
    std::vector<ThermalField> keep;
    for (const auto& f : fields)
        for (double t : times)
            if (std::abs(f.time - t) <= 1e-15 + 1e-9 * t) keep.push_back(f);
    export_all(cfg, g, keep);
    std::ostringstream s;
    s << "wall_seconds " << stats.wall_seconds << "\nsteps " << stats.steps << "\nunconverged_steps " << stats.unconverged_steps
      << "\n";
    save_text(path_in(cfg, "fea_summary.txt"), s.str());
    for (const auto& f : keep)
        std::cout << "t " << f.time * 1e6 << " us  Tmax " << *std::max_element(f.temperature.begin(), f.temperature.end())
                  << " K " << pool_row(melt_pool_dims(f, g, cfg.material.liquidus)) << "\n";
    std::cout << "solver wall " << stats.wall_seconds << " s\n";
    return 0;
}

int cmd_train(const Common& c) {
    const RunConfig cfg = load(c);
    const HybridSetup s = cfg.setup();
    log(c, "oracle data over [0, " + std::to_string(cfg.schedule.window_end * 1e6) + "] us");
    TrainingData data = generate_training_data(s);
    StateTable states = make_state_table(data.set, s.surrogate.dt_state);
    states.merge_field(data.end_field, s.grid);
    SurrogateModel m = s.initial_model();
    AdamState adam(m.parameter_count(), s.surrogate.learning_rate);
    log(c, "training " + std::to_string(cfg.schedule.initial_epochs) + " epochs");
    auto summary = retrain(m, adam, data.set, states, s, cfg.schedule.initial_epochs, cfg.schedule.window_end);
    const std::string ck = c.checkpoint.empty() ? path_in(cfg, "model.mspn") : c.checkpoint;
    save_checkpoint(ck, m, &adam);
    save_loss_history(path_in(cfg, "loss_history.csv"), summary.history);
    StateTable nodes = make_node_table(s.grid, s.surrogate.dt_state);
    for (const auto& f : data.snapshots) {
        StateTable tmp = nodes;
        std::cout << "t " << f.time * 1e6 << " us  rel L2 "
                  << relative_l2(surrogate_field(m, tmp, s.grid, f.time, s.material.liquidus), f) << "\n";
    }
    std::cout << "training wall " << summary.wall_seconds << " s, checkpoint " << ck << "\n";
    return 0;
}

int cmd_infer(const Common& c) {
    if (c.checkpoint.empty()) throw InvalidInput("infer: --checkpoint is required");
    const RunConfig cfg = load(c);
    const HybridSetup s = cfg.setup();
    SurrogateModel m = load_checkpoint(c.checkpoint).model;
    StateTable nodes = make_node_table(s.grid, s.surrogate.dt_state);
    auto times = output_times_or_horizon(cfg);
    std::sort(times.begin(), times.end());
    std::vector<ThermalField> fields;
    for (double t : times) fields.push_back(surrogate_field(m, nodes, s.grid, t, s.material.liquidus));
    export_all(cfg, s.grid, fields);
    for (const auto& f : fields) std::cout << "t " << f.time * 1e6 << " us " << pool_row(melt_pool_dims(f, s.grid, s.material.liquidus)) << "\n";
    return 0;
}

int cmd_hybrid(const Common& c, bool with_reference) {
    const RunConfig cfg = load(c);
    const HybridSetup s = cfg.setup();
    const auto times = output_times_or_horizon(cfg);
    std::vector<ThermalField> ref;
    double ref_wall = -1.0;
    if (with_reference) {
        std::vector<double> rt = times;
        for (double t : s.schedule.corrections) rt.push_back(t + s.schedule.correction_duration);
        for (double t = s.schedule.window_end + s.schedule.monitor_step; t < s.schedule.horizon; t += s.schedule.monitor_step)
            rt.push_back(t);
        std::sort(rt.begin(), rt.end());
        log(c, "reference solver run over the full horizon");
        HeatSolver solver(s.grid, s.material, s.process, s.solver);
        RunStats stats;
        ref = solver.run(uniform_field(s.grid, s.process.ambient), s.schedule.horizon, rt, &stats);
        ref_wall = stats.wall_seconds;
    }
    auto res = run_hybrid(s, times, with_reference ? &ref : nullptr, [&](const std::string& m) { log(c, m); });
    export_all(cfg, s.grid, res.outputs);
    save_checkpoint(c.checkpoint.empty() ? path_in(cfg, "model.mspn") : c.checkpoint, res.model, &res.adam);
    save_loss_history(path_in(cfg, "loss_history.csv"), res.history);
    {
        std::ofstream o(path_in(cfg, "ledger.csv"));
        write_ledger_csv(o, res.ledger);
    }
    const std::string table = ledger_table(res.ledger, ref_wall);
    save_text(path_in(cfg, "ledger.txt"), table);
    std::cout << table;
    for (const auto& cm : res.corrections)
        std::cout << "correction at " << cm.t_c * 1e6 << " us: rel L2 corrected " << cm.corrected_rel_l2 << ", uncorrected "
                  << cm.uncorrected_rel_l2 << ", surrogate only " << cm.surrogate_only_rel_l2 << "\n";
    if (with_reference)
        for (const auto& f : res.outputs) {
            const ThermalField* r = detail::find_time(ref, f.time);
            if (r) std::cout << "t " << f.time * 1e6 << " us  hybrid rel L2 " << relative_l2(f, *r) << "\n";
        }
    return 0;
}

int cmd_transfer(const Common& c) {
    if (c.checkpoint.empty()) throw InvalidInput("transfer: --checkpoint is required");
    const RunConfig cfg = load(c);
    const HybridSetup s = cfg.setup();
    const Checkpoint cp = load_checkpoint(c.checkpoint);
    log(c, "fine-tuning for " + std::to_string(cfg.transfer_epochs) + " epochs at P = " + std::to_string(s.process.power) +
               " W, v = " + std::to_string(s.process.speed * 1e3) + " mm/s");
    auto r = transfer(cp.model, s, cfg.transfer_epochs);
    save_checkpoint(path_in(cfg, "transfer.mspn"), r.model);
    save_loss_history(path_in(cfg, "transfer_loss_history.csv"), r.summary.history);
    for (std::size_t i = 0; i < r.data.snapshots.size(); ++i)
        std::cout << "t " << r.data.snapshots[i].time * 1e6 << " us  rel L2 before " << r.rel_l2_before[i] << ", after "
                  << r.rel_l2_after[i] << "\n";
    return 0;
}

int cmd_compare(const Common& c, const std::vector<std::string>& files) {
    if (files.size() % 2 != 0 || files.empty()) throw InvalidInput("compare: give pairs of field CSV files (or two directories)");
    const RunConfig cfg = load(c);
    const auto g = cfg.build();
    std::vector<std::pair<std::string, std::string>> pairs;
    if (files.size() == 2 && fs::is_directory(files[0]) && fs::is_directory(files[1])) {
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(files[0]))
            if (e.path().extension() == ".csv" && e.path().filename().string().rfind("field_", 0) == 0 &&
                fs::exists(fs::path(files[1]) / e.path().filename()))
                names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        for (const auto& n : names) pairs.emplace_back((fs::path(files[0]) / n).string(), (fs::path(files[1]) / n).string());
        if (pairs.empty()) throw InvalidInput("compare: no common field files in the two directories");
    } else {
        for (std::size_t i = 0; i < files.size(); i += 2) pairs.emplace_back(files[i], files[i + 1]);
    }
    std::cout << "t [us]      rel L2       melt pool A / B\n";
    for (const auto& [a, b] : pairs) {
        const ThermalField fa = import_field_csv(a, g), fb = import_field_csv(b, g);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-10g  %-11.4e ", fa.time * 1e6, relative_l2(fa, fb));
        std::cout << buf << pool_row(melt_pool_dims(fa, g, cfg.material.liquidus)) << "\n" << std::string(24, ' ')
                  << pool_row(melt_pool_dims(fb, g, cfg.material.liquidus)) << "\n";
    }
    return 0;
}

int cmd_verify() {
    std::vector<CheckResult> all = material_checks();
    all.push_back(property_table_check());
    for (auto& r : autodiff_checks()) all.push_back(r);
    all.push_back(mms_order_check());
    all.push_back(surface_flux_check());
    all.push_back(energy_audit_check());
    int failed = 0;
    for (const auto& r : all) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.value << " (limit " << r.limit << ")";
        if (!r.detail.empty()) std::cout << " " << r.detail;
        std::cout << "\n";
        failed += r.pass ? 0 : 1;
    }
    std::cout << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << "\n";
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LPBF thermal simulation: finite-volume solver, physics-informed surrogate and hybrid runs"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* opt = sub->add_option("--config", c.config, "run configuration (JSON)")->check(CLI::ExistingFile);
        if (needs_config) opt->required();
        sub->add_option("--out", c.out, "output directory (overrides the configuration)");
        sub->add_option("--times", c.times_us, "output times in us, comma separated")->delimiter(',');
        sub->add_option("--seed", c.seed, "seed for network initialization and sampling");
        sub->add_option("--power", c.power, "laser power in W");
        sub->add_option("--speed", c.speed_mm_s, "scan speed in mm/s");
        sub->add_option("--checkpoint", c.checkpoint, "network checkpoint path");
        sub->add_flag("--quiet", c.quiet, "suppress progress messages");
    };
    auto* grid = app.add_subcommand("grid", "print grid statistics");
    bool dump = false;
    grid->add_flag("--dump", dump, "write axis coordinates to grid_axes.csv");
    add_common(grid);
    auto* fea = app.add_subcommand("fea", "oracle solver run with snapshots at the output times");
    add_common(fea);
    auto* train = app.add_subcommand("train", "oracle data over the training window and surrogate training");
    add_common(train);
    auto* infer = app.add_subcommand("infer", "surrogate fields at the output times from a checkpoint");
    add_common(infer);
    auto* hybrid = app.add_subcommand("hybrid", "staged hybrid run");
    bool reference = false;
    hybrid->add_flag("--reference", reference, "also run the solver over the full horizon and report errors");
    add_common(hybrid);
    auto* xfer = app.add_subcommand("transfer", "fine-tune a checkpoint for new process parameters");
    add_common(xfer);
    auto* compare = app.add_subcommand("compare", "relative L2 and melt-pool table between field CSVs");
    std::vector<std::string> files;
    compare->add_option("files", files, "pairs of field CSV files, or two directories")->required();
    add_common(compare);
    auto* verify = app.add_subcommand("verify", "built-in material, solver and derivative checks");
    auto* cfgcmd = app.add_subcommand("config", "print the default configuration");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*grid) return cmd_grid(c, dump);
        if (*fea) return cmd_fea(c);
        if (*train) return cmd_train(c);
        if (*infer) return cmd_infer(c);
        if (*hybrid) return cmd_hybrid(c, reference);
        if (*xfer) return cmd_transfer(c);
        if (*compare) return cmd_compare(c, files);
        if (*verify) return cmd_verify();
        if (*cfgcmd) {
            std::cout << serialize_config(RunConfig{});
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 1;
}
