#include <gtest/gtest.h>

#include "lpbf/hybrid.hpp"

using namespace lpbf;

namespace {

HybridSetup tiny_setup() {
    DomainSpec d;
    d.length_x = 200e-6;
    d.width_y = 60e-6;
    d.substrate_depth = 40e-6;
    d.powder_thickness = 20e-6;
    d.laser_start_x = 50e-6;
    HybridSetup s{build_grid(d, 20e-6, {10e-6, 10e-6, 10e-6}, {40e-6, 120e-6, 0.0, 30e-6, 30e-6, 60e-6}), MaterialLibrary::ss316l(), {}, {}, {}, {}};
    s.process.laser_start_x = d.laser_start_x;
    s.solver.dt = 1e-6;
    s.surrogate.layers = {4, 12, 12, 1};
    s.surrogate.counts = {150, 300, 120, 80};
    s.surrogate.refresh_every = 10;
    s.surrogate.local_capacity_scaling = true;
    auto& h = s.schedule;
    h.horizon = 60e-6;
    h.window_end = 20e-6;
    h.snapshot_times = {10e-6, 20e-6};
    h.corrections = {35e-6};
    h.correction_duration = 10e-6;
    h.initial_epochs = 25;
    h.retrain_epochs = 10;
    h.monitor_step = 10e-6;
    h.probe_points = 100;
    return s;
}

std::vector<ThermalField> reference_run(const HybridSetup& s, const std::vector<double>& times) {
    HeatSolver solver(s.grid, s.material, s.process, s.solver);
    return solver.run(uniform_field(s.grid, s.process.ambient), s.schedule.horizon, times);
}

}  // namespace

TEST(Schedule, Validation) {
    HybridSchedule h;
    EXPECT_NO_THROW(h.validate());
    auto bad = h;
    bad.corrections = {280e-6, 290e-6};
    EXPECT_THROW(bad.validate(), InvalidInput);
    bad = h;
    bad.corrections = {100e-6};
    EXPECT_THROW(bad.validate(), InvalidInput);
    bad = h;
    bad.corrections = {590e-6};
    EXPECT_THROW(bad.validate(), InvalidInput);
    bad = h;
    bad.snapshot_times = {40e-6, 130e-6};
    EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(Ledger, CoverageAndTiling) {
    RunLedger l;
    l.add({StageKind::DataGeneration, 0, 120e-6, 1.0});
    l.add({StageKind::Training, 0, 120e-6, 1.0});
    l.add({StageKind::Inference, 120e-6, 280e-6, 0.1});
    l.add({StageKind::Correction, 280e-6, 300e-6, 0.2});
    l.add({StageKind::Retraining, 300e-6, 300e-6, 0.3});
    EXPECT_FALSE(l.covers(600e-6));
    EXPECT_TRUE(l.tiles(120e-6, 300e-6));
    l.add({StageKind::Inference, 300e-6, 600e-6, 0.1});
    EXPECT_TRUE(l.covers(600e-6));
    EXPECT_TRUE(l.tiles(120e-6, 600e-6));
    EXPECT_DOUBLE_EQ(l.solver_wall(), 1.2);
    EXPECT_DOUBLE_EQ(l.total_wall(), 2.7);
    EXPECT_EQ(l.count(StageKind::Inference), 2u);
    l.add({StageKind::Inference, 290e-6, 310e-6, 0.1});
    EXPECT_FALSE(l.tiles(120e-6, 600e-6));
    EXPECT_THROW(l.add({StageKind::Inference, 2e-6, 1e-6, 0.0}), InvalidInput);
}

TEST(Ledger, EpochsToThreshold) {
    std::vector<LossReport> h(5);
    for (std::size_t i = 0; i < h.size(); ++i) h[i].total = 1.0 / static_cast<double>(i + 1);
    EXPECT_EQ(epochs_to_threshold(h, 0.3), 4u);
    EXPECT_EQ(epochs_to_threshold(h, 1.0), 1u);
    EXPECT_EQ(epochs_to_threshold(h, 0.1), static_cast<std::size_t>(-1));
}

TEST(Correction, AmbientSurrogateMatchesColdStartSolverRun) {
    const HybridSetup s = tiny_setup();
    SurrogateModel m = s.initial_model();  // zero output layer: T = ambient
    CollocationSet set = sample_collocation(s.grid, s.surrogate.counts, {}, {0, 20e-6}, s.schedule.horizon, 0.7, 3);
    StateTable colloc = make_state_table(set);
    StateTable nodes = make_node_table(s.grid);
    const auto c = correct(m, colloc, nodes, 30e-6, 10e-6, s);
    HeatSolver solver(s.grid, s.material, s.process, s.solver);
    const auto direct = solver.run(uniform_field(s.grid, s.process.ambient, 30e-6), 40e-6, {}).back();
    ASSERT_EQ(c.corrected.size(), direct.size());
    for (std::size_t n = 0; n < direct.size(); ++n) EXPECT_EQ(c.corrected.temperature[n], direct.temperature[n]);
    EXPECT_GT(direct.melted_count(), 0u);
    EXPECT_EQ(nodes.melted_count(), direct.melted_count());
}

TEST(Hybrid, FixedScheduleRun) {
    const HybridSetup s = tiny_setup();
    const std::vector<double> times{10e-6, 30e-6, 40e-6, 45e-6, 60e-6};
    const auto ref = reference_run(s, times);
    const auto r = run_hybrid(s, times, &ref);

    EXPECT_TRUE(r.ledger.covers(s.schedule.horizon));
    EXPECT_TRUE(r.ledger.tiles(s.schedule.window_end, s.schedule.horizon));
    EXPECT_EQ(r.ledger.count(StageKind::Correction), 1u);
    EXPECT_EQ(r.ledger.count(StageKind::Retraining), 1u);
    EXPECT_EQ(r.ledger.count(StageKind::Inference), 2u);
    EXPECT_EQ(r.history.size(), 35u);
    EXPECT_TRUE(r.state_monotone);
    ASSERT_EQ(r.corrections.size(), 1u);
    EXPECT_TRUE(std::isfinite(r.corrections[0].corrected_rel_l2));
    EXPECT_TRUE(std::isfinite(r.corrections[0].surrogate_only_rel_l2));
    EXPECT_EQ(r.set.M(), 3 * s.surrogate.counts.labeled_per_snapshot);

    ASSERT_EQ(r.outputs.size(), times.size());
    for (std::size_t i = 0; i < times.size(); ++i) EXPECT_NEAR(r.outputs[i].time, times[i], 1e-15);
    // Inside the training window and at the end of the correction window the solver field is returned.
    EXPECT_EQ(r.outputs[0].temperature, ref[0].temperature);
    EXPECT_NEAR(relative_l2(r.outputs[3], ref[3]), r.corrections[0].corrected_rel_l2, 1e-15);
    for (std::size_t i = 1; i < r.melted_counts.size(); ++i) EXPECT_GE(r.melted_counts[i], r.melted_counts[i - 1]);

    const auto again = run_hybrid(s, times, &ref);
    EXPECT_TRUE(again.model == r.model);
}

TEST(Hybrid, NoCorrectionsAndResidualTrigger) {
    HybridSetup s = tiny_setup();
    s.schedule.corrections.clear();
    const auto plain = run_hybrid(s, {60e-6});
    EXPECT_EQ(plain.ledger.count(StageKind::Correction), 0u);
    EXPECT_TRUE(plain.ledger.tiles(20e-6, 60e-6));
    EXPECT_TRUE(plain.model == plain.initial_model);

    s.schedule.trigger = TriggerMode::ResidualThreshold;
    s.schedule.residual_threshold = 1e-12;  // fires at the first check
    const auto fired = run_hybrid(s, {60e-6});
    EXPECT_GE(fired.ledger.count(StageKind::Correction), 1u);
    EXPECT_TRUE(fired.ledger.covers(60e-6));
    EXPECT_TRUE(fired.ledger.tiles(20e-6, 60e-6));
    EXPECT_NEAR(fired.corrections.front().t_c, 30e-6, 1e-15);

    s.schedule.residual_threshold = 1e12;
    const auto quiet = run_hybrid(s, {60e-6});
    EXPECT_EQ(quiet.ledger.count(StageKind::Correction), 0u);
}

TEST(Transfer, FineTuningStartsFromPretrainedWeights) {
    HybridSetup s = tiny_setup();
    s.schedule.corrections.clear();
    const auto base = run_hybrid(s, {});
    HybridSetup t = s;
    t.process.power = 80.0;
    t.process.speed = 0.6;
    const auto zero = transfer(base.model, t, 0);
    EXPECT_TRUE(zero.model == base.model);
    const auto tuned = transfer(base.model, t, 20);
    ASSERT_EQ(tuned.rel_l2_before.size(), 2u);
    EXPECT_EQ(tuned.rel_l2_before, zero.rel_l2_before);
    EXPECT_EQ(tuned.summary.history.size(), 20u);
    EXPECT_LT(tuned.summary.history.back().total, tuned.summary.history.front().total);
    EXPECT_THROW(transfer(SurrogateModel({4, 3, 1}), t, 1), InvalidInput);
}
