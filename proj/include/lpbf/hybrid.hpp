#pragma once

// Staged solver/surrogate loop: oracle data for a short window, surrogate
// training, inference forward in time, short solver correction windows seeded
// by the surrogate, and retraining on the corrected snapshots.

#include <chrono>
#include <map>

#include "lpbf/metrics.hpp"
#include "lpbf/pinn.hpp"

namespace lpbf {

enum class TriggerMode : unsigned char { FixedSchedule, ResidualThreshold };

struct HybridSchedule {
    double horizon = 600e-6;
    double window_end = 120e-6;
    std::vector<double> snapshot_times{40e-6, 80e-6, 120e-6};
    std::vector<double> corrections{280e-6, 440e-6, 580e-6};
    double correction_duration = 20e-6;
    std::size_t initial_epochs = 30000;
    std::size_t retrain_epochs = 2000;
    TriggerMode trigger = TriggerMode::FixedSchedule;
    /// Residual-threshold mode: fire when the probe residual exceeds this
    /// multiple of its value at the end of the training window.
    double residual_threshold = 10.0;
    double monitor_step = 10e-6;
    std::size_t probe_points = 2000;

    void validate() const {
        require(horizon > 0.0, "schedule: horizon must be positive");
        require(window_end >= 0.0 && window_end <= horizon, "schedule: training window must lie inside the horizon");
        for (double t : snapshot_times)
            require(t > 0.0 && t <= window_end * (1 + 1e-12), "schedule: snapshot times must lie in (0, window end]");
        require(std::is_sorted(snapshot_times.begin(), snapshot_times.end()), "schedule: snapshot times must be sorted");
        require(correction_duration > 0.0, "schedule: correction duration must be positive");
        require(monitor_step > 0.0, "schedule: monitor step must be positive");
        require(residual_threshold > 0.0, "schedule: residual threshold must be positive");
        double prev_end = window_end;
        for (std::size_t i = 0; i < corrections.size(); ++i) {
            const double c = corrections[i];
            require(i == 0 || c > corrections[i - 1], "schedule: correction instants must be strictly increasing");
            require(c >= prev_end - 1e-15, "schedule: correction windows overlap or precede the training window");
            require(c + correction_duration <= horizon * (1 + 1e-12), "schedule: correction window exceeds the horizon");
            prev_end = c + correction_duration;
        }
    }
};

enum class StageKind : unsigned char { DataGeneration, Training, Inference, Correction, Retraining };

inline const char* to_string(StageKind k) {
    switch (k) {
        case StageKind::DataGeneration: return "data-gen";
        case StageKind::Training: return "train";
        case StageKind::Inference: return "infer";
        case StageKind::Correction: return "correct";
        case StageKind::Retraining: return "retrain";
    }
    return "?";
}

struct StageRecord {
    StageKind kind = StageKind::Inference;
    double t_begin = 0.0;
    double t_end = 0.0;
    double wall_seconds = 0.0;
    /// Relative L2 against the reference at t_end, NaN if not measured.
    double rel_l2 = std::numeric_limits<double>::quiet_NaN();
    double final_loss = std::numeric_limits<double>::quiet_NaN();
};

class RunLedger {
public:
    void add(StageRecord r) {
        require(r.wall_seconds >= 0.0, "ledger: negative wall-clock");
        require(r.t_end >= r.t_begin, "ledger: interval end before begin");
        records_.push_back(r);
    }
    const std::vector<StageRecord>& records() const { return records_; }
    std::size_t count(StageKind k) const {
        return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [&](const auto& r) { return r.kind == k; }));
    }
    double wall(StageKind k) const {
        double s = 0.0;
        for (const auto& r : records_)
            if (r.kind == k) s += r.wall_seconds;
        return s;
    }
    double solver_wall() const { return wall(StageKind::DataGeneration) + wall(StageKind::Correction); }
    double total_wall() const {
        double s = 0.0;
        for (const auto& r : records_) s += r.wall_seconds;
        return s;
    }

    /// True if the union of all recorded intervals is exactly [0, horizon].
    bool covers(double horizon, double tol = 1e-12) const {
        std::vector<std::pair<double, double>> iv;
        for (const auto& r : records_) iv.emplace_back(r.t_begin, r.t_end);
        std::sort(iv.begin(), iv.end());
        double reach = 0.0;
        if (iv.empty() || iv.front().first > tol) return false;
        for (const auto& [a, b] : iv) {
            if (a > reach + tol) return false;
            reach = std::max(reach, b);
        }
        return std::abs(reach - horizon) <= tol;
    }

    /// True if inference and correction intervals tile [begin, end]: sorted,
    /// contiguous and non-overlapping.
    bool tiles(double begin, double end, double tol = 1e-12) const {
        std::vector<std::pair<double, double>> iv;
        for (const auto& r : records_)
            if ((r.kind == StageKind::Inference || r.kind == StageKind::Correction) && r.t_end > r.t_begin)
                iv.emplace_back(r.t_begin, r.t_end);
        std::sort(iv.begin(), iv.end());
        double at = begin;
        for (const auto& [a, b] : iv) {
            if (std::abs(a - at) > tol) return false;
            at = b;
        }
        return std::abs(at - end) <= tol;
    }

private:
    std::vector<StageRecord> records_;
};

/// Surrogate and training settings shared by every phase.
struct SurrogateSettings {
    std::vector<int> layers = default_layer_sizes();
    std::uint64_t init_seed = 1234;
    std::uint64_t sample_seed = 42;
    /// Start from a network whose output layer is zero (T = T_0 everywhere).
    bool zero_output_layer = true;
    double learning_rate = 1e-3;
    CollocationCounts counts;
    double density_ratio = 0.7;
    LossWeights weights;
    std::size_t refresh_every = 500;
    double dt_state = 10e-6;
    std::size_t batches = 1;  // Adam steps per epoch
    double t_ref_max = 4000.0;
    ResidualForm form = ResidualForm::Literal;
    /// Divide the interior residual by the local heat capacity.
    bool local_capacity_scaling = false;
    double clip_norm = 0.0;  // 0 disables gradient clipping
    /// Interior and boundary points added per correction window, as a
    /// fraction of the initial counts scaled by window length.
    bool extend_collocation = true;

    void validate() const {
        require(layers.size() >= 2 && layers.front() == 4 && layers.back() == 1, "surrogate: layers must run 4 -> ... -> 1");
        require(learning_rate > 0.0, "surrogate: learning rate must be positive");
        require(dt_state > 0.0, "surrogate: dt_state must be positive");
        require(density_ratio >= 0.0 && density_ratio <= 1.0, "surrogate: density ratio must lie in [0, 1]");
        require(clip_norm >= 0.0, "surrogate: clip norm must be non-negative");
        require(batches >= 1, "surrogate: batches per epoch must be at least 1");
        weights.validate();
    }
};

/// Everything a hybrid run needs besides the reference data.
struct HybridSetup {
    StructuredGrid grid;
    MaterialLibrary material = MaterialLibrary::ss316l();
    ProcessParams process;
    SolverSettings solver;
    SurrogateSettings surrogate;
    HybridSchedule schedule;

    PinnProblem problem() const {
        PinnProblem pb;
        pb.domain = grid.spec();
        pb.material = material;
        pb.process = process;
        pb.horizon = schedule.horizon;
        pb.t_ref_max = surrogate.t_ref_max;
        pb.form = surrogate.form;
        pb.local_capacity_scaling = surrogate.local_capacity_scaling;
        return pb;
    }

    SurrogateModel initial_model() const {
        SurrogateModel m = glorot_init(surrogate.layers, surrogate.init_seed);
        if (surrogate.zero_output_layer) {
            m.weight(m.layer_count() - 1).setZero();
            m.bias(m.layer_count() - 1).setZero();
        }
        problem().configure(m);
        return m;
    }

    void validate() const {
        material.validate();
        process.validate();
        solver.validate();
        surrogate.validate();
        schedule.validate();
    }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline const ThermalField* find_time(const std::vector<ThermalField>& fields, double t) {
    for (const auto& f : fields)
        if (std::abs(f.time - t) <= 1e-9 * std::max(1.0, std::abs(t)) + 1e-15) return &f;
    return nullptr;
}

}  // namespace detail

struct TrainingData {
    CollocationSet set;
    std::vector<ThermalField> snapshots;
    ThermalField end_field;
    double wall_seconds = 0.0;
};

/// Oracle run over the training window; labeled points at the snapshot times.
inline TrainingData generate_training_data(const HybridSetup& s) {
    s.validate();
    TrainingData out;
    const auto t0 = std::chrono::steady_clock::now();
    const ThermalField init = uniform_field(s.grid, s.process.ambient, 0.0);
    if (s.schedule.window_end <= 0.0) {
        out.end_field = init;
        return out;
    }
    HeatSolver solver(s.grid, s.material, s.process, s.solver);
    auto fields = solver.run(init, s.schedule.window_end, s.schedule.snapshot_times);
    out.end_field = fields.back();
    for (double t : s.schedule.snapshot_times) out.snapshots.push_back(*detail::find_time(fields, t));
    out.wall_seconds = detail::seconds_since(t0);
    out.set = sample_collocation(s.grid, s.surrogate.counts, s.schedule.snapshot_times, {0.0, s.schedule.window_end},
                                 s.schedule.horizon, s.surrogate.density_ratio, s.surrogate.sample_seed);
    fill_labels(out.set, out.snapshots);
    return out;
}

/// Node temperatures of the surrogate at `t` with melt history from the
/// surrogate (scanned up to `t`) and from any merged solver history.
inline ThermalField surrogate_field(const SurrogateModel& model, StateTable& node_states, const StructuredGrid& grid,
                                    double t, double liquidus) {
    node_states.refresh(model, t, liquidus);
    ThermalField f = predict_field(model, node_states, grid, t);
    for (auto& v : f.t_min)
        if (v > t) v = kNever;
    return f;
}

struct CorrectionResult {
    ThermalField initial;    // surrogate field used as the initial condition
    ThermalField corrected;  // solver field at the end of the window
    std::vector<ThermalField> intermediate;  // extra requested solver snapshots
    double wall_seconds = 0.0;
    std::size_t state_changes = 0;
};

/// Solver window [t_c, t_c + duration] seeded by the surrogate. The seed is
/// clipped from below at ambient. Solver melt history is merged into both
/// state tables.
inline CorrectionResult correct(const SurrogateModel& model, StateTable& colloc_states, StateTable& node_states,
                                double t_c, double duration, const HybridSetup& s,
                                const std::vector<double>& extra_times = {}) {
    require(duration > 0.0, "correct: duration must be positive");
    require(t_c + duration <= s.schedule.horizon * (1 + 1e-12), "correct: window exceeds the horizon");
    CorrectionResult out;
    out.initial = surrogate_field(model, node_states, s.grid, t_c, s.material.liquidus);
    for (auto& T : out.initial.temperature) T = std::max(T, s.process.ambient);
    for (std::size_t n = 0; n < out.initial.size(); ++n)
        if (out.initial.state(n) == PhaseState::Unmelted && out.initial.temperature[n] > s.material.liquidus)
            out.initial.t_min[n] = t_c;
    const auto t0 = std::chrono::steady_clock::now();
    HeatSolver solver(s.grid, s.material, s.process, s.solver);
    std::vector<double> snaps;
    for (double t : extra_times)
        if (t > t_c + 1e-15 && t < t_c + duration - 1e-15) snaps.push_back(t);
    auto fields = solver.run(out.initial, t_c + duration, snaps);
    out.wall_seconds = detail::seconds_since(t0);
    out.corrected = fields.back();
    fields.pop_back();
    out.intermediate = std::move(fields);
    for (double T : out.corrected.temperature)
        if (T < s.process.ambient - 1e-6)
            throw NumericalError("correct: corrected snapshot is colder than ambient");
    for (std::size_t n = 0; n < node_states.size(); ++n) out.state_changes += node_states.merge(n, out.corrected.t_min[n]);
    out.state_changes += colloc_states.merge_field(out.corrected, s.grid);
    return out;
}

/// Adds labeled points for a new snapshot and, optionally, interior and
/// boundary points over [t_begin, snapshot time]. The state table is
/// rebuilt with the old first-melt times carried over and the new entries
/// taken from the snapshot's melt history.
inline void augment_collocation(CollocationSet& set, StateTable& states, const ThermalField& snapshot, double t_begin,
                                const HybridSetup& s, std::uint64_t seed) {
    const auto& sg = s.surrogate;
    const double t = snapshot.time;
    const double frac = s.schedule.window_end > 0 ? (t - t_begin) / s.schedule.window_end : 0.0;
    CollocationCounts c{sg.counts.labeled_per_snapshot, 0, 0, 0};
    if (sg.extend_collocation) {
        c.interior = static_cast<std::size_t>(std::llround(frac * static_cast<double>(sg.counts.interior)));
        c.boundary = static_cast<std::size_t>(std::llround(frac * static_cast<double>(sg.counts.boundary)));
    }
    auto add = sample_collocation(s.grid, c, {t}, {t_begin, t}, s.schedule.horizon, sg.density_ratio, seed);
    fill_labels(add, {snapshot});

    const std::size_t N0 = set.N(), P0 = set.P();
    std::vector<double> old = states.t_min();
    set.labeled.insert(set.labeled.end(), add.labeled.begin(), add.labeled.end());
    set.interior.insert(set.interior.end(), add.interior.begin(), add.interior.end());
    set.boundary.insert(set.boundary.end(), add.boundary.begin(), add.boundary.end());
    StateTable next = make_state_table(set, states.dt_state());
    for (std::size_t i = 0; i < N0; ++i) next.merge(i, old[i]);
    for (std::size_t j = 0; j < P0; ++j) next.merge(set.N() + j, old[N0 + j]);
    next.merge_field(snapshot, s.grid);
    states = std::move(next);
}

/// Continues training from the current parameters and optimizer state.
inline TrainSummary retrain(SurrogateModel& model, AdamState& adam, const CollocationSet& set, StateTable& states,
                            const HybridSetup& s, std::size_t epochs, double state_horizon, std::size_t first_epoch = 0,
                            double stop_below = 0.0) {
    TrainOptions opt;
    opt.stop_below = stop_below;
    opt.epochs = epochs;
    opt.refresh_every = s.surrogate.refresh_every;
    opt.state_horizon = state_horizon;
    opt.batches = s.surrogate.batches;
    opt.seed = s.surrogate.sample_seed + first_epoch;
    opt.clip_norm = s.surrogate.clip_norm;
    return train(model, adam, s.problem(), set, states, s.surrogate.weights, opt, first_epoch);
}

/// Mean squared scaled PDE residual of the surrogate on fixed probe points at time t.
inline double probe_residual(const SurrogateModel& model, const std::vector<Point3>& probe, const StateTable& probe_states,
                             const PinnProblem& pb, double t) {
    std::vector<Point4> pts(probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i) pts[i] = {probe[i].x, probe[i].y, probe[i].z, t};
    return pde_residual_loss(model, pts, pb, probe_states);
}

struct CorrectionMetrics {
    double t_c = 0.0;
    double t_end = 0.0;
    double corrected_rel_l2 = std::numeric_limits<double>::quiet_NaN();
    /// Surrogate that seeded this correction, evaluated at t_end.
    double uncorrected_rel_l2 = std::numeric_limits<double>::quiet_NaN();
    /// Surrogate trained only on the initial window, evaluated at t_end.
    double surrogate_only_rel_l2 = std::numeric_limits<double>::quiet_NaN();
    double label_loss_before = std::numeric_limits<double>::quiet_NaN();
    double label_loss_after = std::numeric_limits<double>::quiet_NaN();
};

struct HybridResult {
    RunLedger ledger;
    /// Hybrid fields at the requested output times.
    std::vector<ThermalField> outputs;
    SurrogateModel model;
    SurrogateModel initial_model;  // after the initial training, before any correction
    AdamState adam;
    std::vector<LossReport> history;
    std::vector<CorrectionMetrics> corrections;
    std::vector<std::size_t> melted_counts;  // collocation state table after every refresh or merge
    bool state_monotone = true;
    CollocationSet set;
    StateTable states;
};

/// Progress messages; may be empty.
using HybridLog = std::function<void(const std::string&)>;

/// Full staged run. `reference` (optional) holds oracle fields used for the
/// metrics; output fields inside a correction window come from the solver,
/// all others from the current surrogate.
inline HybridResult run_hybrid(const HybridSetup& s, const std::vector<double>& output_times,
                               const std::vector<ThermalField>* reference = nullptr, const HybridLog& log = {}) {
    s.validate();
    const auto& sch = s.schedule;
    for (double t : output_times) require(t >= 0.0 && t <= sch.horizon * (1 + 1e-12), "hybrid: output time outside the horizon");
    auto say = [&](const std::string& m) {
        if (log) log(m);
    };
    auto rel_to_ref = [&](const ThermalField& f) {
        if (!reference) return std::numeric_limits<double>::quiet_NaN();
        const ThermalField* r = detail::find_time(*reference, f.time);
        return r ? relative_l2(f, *r) : std::numeric_limits<double>::quiet_NaN();
    };

    HybridResult res;
    std::map<double, ThermalField> outputs;
    auto emit = [&](const ThermalField& f) {
        for (double t : output_times)
            if (std::abs(t - f.time) <= 1e-9 * std::max(1.0, t) + 1e-15) outputs[t] = f;
    };

    // Data generation.
    say("data generation over [0, " + std::to_string(sch.window_end * 1e6) + "] us");
    TrainingData data = generate_training_data(s);
    res.ledger.add({StageKind::DataGeneration, 0.0, sch.window_end, data.wall_seconds});
    for (const auto& f : data.snapshots) emit(f);
    emit(data.end_field);
    res.set = std::move(data.set);
    res.states = make_state_table(res.set, s.surrogate.dt_state);
    res.states.merge_field(data.end_field, s.grid);
    auto check_monotone = [&](const std::vector<double>& before) {
        for (std::size_t i = 0; i < before.size() && i < res.states.size(); ++i)
            if (res.states.t_min(i) > before[i]) res.state_monotone = false;
        res.melted_counts.push_back(res.states.melted_count());
    };
    res.melted_counts.push_back(res.states.melted_count());

    // Initial training.
    res.model = s.initial_model();
    res.adam = AdamState(res.model.parameter_count(), s.surrogate.learning_rate);
    std::size_t epoch = 0;
    {
        const auto t0 = std::chrono::steady_clock::now();
        TrainSummary ts;
        if (!res.set.labeled.empty() || !res.set.interior.empty()) {
            say("training for " + std::to_string(sch.initial_epochs) + " epochs");
            ts = retrain(res.model, res.adam, res.set, res.states, s, sch.initial_epochs, sch.window_end, epoch);
        }
        epoch += sch.initial_epochs;
        res.history.insert(res.history.end(), ts.history.begin(), ts.history.end());
        res.state_monotone = res.state_monotone && ts.state_monotone;
        res.melted_counts.insert(res.melted_counts.end(), ts.melted_after_refresh.begin() + (ts.melted_after_refresh.empty() ? 0 : 1),
                                 ts.melted_after_refresh.end());
        StageRecord r{StageKind::Training, 0.0, sch.window_end, detail::seconds_since(t0)};
        if (!ts.history.empty()) r.final_loss = ts.history.back().total;
        res.ledger.add(r);
    }
    res.initial_model = res.model;

    StateTable node_states = make_node_table(s.grid, s.surrogate.dt_state);
    for (std::size_t n = 0; n < node_states.size(); ++n) node_states.merge(n, data.end_field.t_min[n]);
    StateTable node_states_initial = node_states;

    // Probe set for the residual trigger.
    std::vector<Point3> probe;
    for (std::size_t i = 0; i < res.set.N() && probe.size() < sch.probe_points; ++i) probe.push_back(res.set.interior[i].spatial());
    const PinnProblem pb = s.problem();

    auto infer = [&](double a, double b) {
        const auto t0 = std::chrono::steady_clock::now();
        StageRecord r{StageKind::Inference, a, b, 0.0};
        for (double t : output_times)
            if (t > a + 1e-9 * std::max(1.0, a) + 1e-15 && t <= b)
                emit(surrogate_field(res.model, node_states, s.grid, t, s.material.liquidus));
        r.wall_seconds = detail::seconds_since(t0);
        if (reference && detail::find_time(*reference, b)) {
            r.rel_l2 = rel_to_ref(surrogate_field(res.model, node_states, s.grid, b, s.material.liquidus));
        }
        res.ledger.add(r);
    };

    auto do_correction = [&](double t_c, double dur) {
        const double t_end = t_c + dur;
        CorrectionMetrics cm;
        cm.t_c = t_c;
        cm.t_end = t_end;
        say("correction over [" + std::to_string(t_c * 1e6) + ", " + std::to_string(t_end * 1e6) + "] us");
        const std::vector<double> before = res.states.t_min();
        CorrectionResult c = correct(res.model, res.states, node_states, t_c, dur, s, output_times);
        check_monotone(before);
        StageRecord rc{StageKind::Correction, t_c, t_end, c.wall_seconds};
        if (reference) {
            cm.corrected_rel_l2 = rel_to_ref(c.corrected);
            StateTable tmp = node_states;
            cm.uncorrected_rel_l2 = rel_to_ref(surrogate_field(res.model, tmp, s.grid, t_end, s.material.liquidus));
            cm.surrogate_only_rel_l2 =
                rel_to_ref(surrogate_field(res.initial_model, node_states_initial, s.grid, t_end, s.material.liquidus));
            rc.rel_l2 = cm.corrected_rel_l2;
        }
        res.ledger.add(rc);
        for (const auto& f : c.intermediate) emit(f);
        emit(c.corrected);

        // Retraining on the augmented label set.
        const std::size_t first_new = res.set.M();
        augment_collocation(res.set, res.states, c.corrected, t_c, s, s.surrogate.sample_seed + 1 + res.corrections.size());
        res.melted_counts.push_back(res.states.melted_count());
        std::vector<LabeledPoint> fresh(res.set.labeled.begin() + static_cast<std::ptrdiff_t>(first_new), res.set.labeled.end());
        cm.label_loss_before = data_loss(res.model, fresh, pb);
        const auto t0 = std::chrono::steady_clock::now();
        TrainSummary ts = retrain(res.model, res.adam, res.set, res.states, s, sch.retrain_epochs, t_end, epoch);
        epoch += sch.retrain_epochs;
        res.history.insert(res.history.end(), ts.history.begin(), ts.history.end());
        res.state_monotone = res.state_monotone && ts.state_monotone;
        if (ts.melted_after_refresh.size() > 1)
            res.melted_counts.insert(res.melted_counts.end(), ts.melted_after_refresh.begin() + 1, ts.melted_after_refresh.end());
        cm.label_loss_after = data_loss(res.model, fresh, pb);
        StageRecord rr{StageKind::Retraining, t_end, t_end, detail::seconds_since(t0)};
        if (!ts.history.empty()) rr.final_loss = ts.history.back().total;
        res.ledger.add(rr);
        res.corrections.push_back(cm);
    };

    double at = sch.window_end;
    if (sch.trigger == TriggerMode::FixedSchedule) {
        for (double t_c : sch.corrections) {
            if (t_c > at) infer(at, t_c);
            do_correction(t_c, sch.correction_duration);
            at = t_c + sch.correction_duration;
        }
    } else if (at < sch.horizon) {
        StateTable probe_states(probe, s.surrogate.dt_state);
        probe_states.refresh(res.model, sch.window_end, s.material.liquidus);
        const double base = probe.empty() ? 0.0 : probe_residual(res.model, probe, probe_states, pb, sch.window_end);
        double t = at;
        while (t < sch.horizon * (1 - 1e-12)) {
            const double next = std::min(t + sch.monitor_step, sch.horizon);
            double r = 0.0;
            if (!probe.empty()) {
                probe_states.refresh(res.model, next, s.material.liquidus);
                r = probe_residual(res.model, probe, probe_states, pb, next);
            }
            if (!probe.empty() && r > sch.residual_threshold * base && next < sch.horizon) {
                const double dur = std::min(sch.correction_duration, sch.horizon - next);
                infer(at, next);
                do_correction(next, dur);
                at = next + dur;
                t = at;
                probe_states.refresh(res.model, at, s.material.liquidus);
                continue;
            }
            t = next;
        }
    }
    if (at < sch.horizon * (1 - 1e-12)) infer(at, sch.horizon);

    for (auto& [t, f] : outputs) res.outputs.push_back(std::move(f));
    return res;
}

/// Number of epochs until the total loss first reaches `threshold`
/// (1-based), or npos if it never does.
inline std::size_t epochs_to_threshold(const std::vector<LossReport>& history, double threshold) {
    for (std::size_t i = 0; i < history.size(); ++i)
        if (history[i].total <= threshold) return i + 1;
    return static_cast<std::size_t>(-1);
}

struct TransferResult {
    SurrogateModel model;
    TrainSummary summary;
    TrainingData data;
    /// Relative L2 against the oracle snapshots of the new case, before and after fine-tuning.
    std::vector<double> rel_l2_before;
    std::vector<double> rel_l2_after;
};

/// Fine-tunes a pretrained model on oracle data regenerated for new process
/// parameters. `s.process` holds the new parameters. Training stops early
/// once the total loss reaches `stop_below` (when positive).
inline TransferResult transfer(const SurrogateModel& pretrained, const HybridSetup& s, std::size_t epochs,
                               const AdamState* optimizer = nullptr, double stop_below = 0.0) {
    s.validate();
    TransferResult out;
    out.data = generate_training_data(s);
    out.model = pretrained;
    require(out.model.parameter_count() == s.initial_model().parameter_count(), "transfer: pretrained network has a different shape");
    s.problem().configure(out.model);
    AdamState adam = optimizer ? *optimizer : AdamState(out.model.parameter_count(), s.surrogate.learning_rate);
    StateTable states = make_state_table(out.data.set, s.surrogate.dt_state);
    states.merge_field(out.data.end_field, s.grid);
    StateTable nodes = make_node_table(s.grid, s.surrogate.dt_state);
    auto measure = [&](std::vector<double>& dst) {
        for (const auto& f : out.data.snapshots) {
            StateTable tmp = nodes;
            dst.push_back(relative_l2(surrogate_field(out.model, tmp, s.grid, f.time, s.material.liquidus), f));
        }
    };
    measure(out.rel_l2_before);
    out.summary = retrain(out.model, adam, out.data.set, states, s, epochs, s.schedule.window_end, 0, stop_below);
    measure(out.rel_l2_after);
    return out;
}

}  // namespace lpbf
