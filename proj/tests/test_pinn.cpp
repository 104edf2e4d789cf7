#include <gtest/gtest.h>

#include "lpbf/pinn.hpp"

using namespace lpbf;

namespace {

DomainSpec small_domain() {
    DomainSpec d;
    d.length_x = 200e-6;
    d.width_y = 60e-6;
    d.substrate_depth = 40e-6;
    d.powder_thickness = 20e-6;
    d.laser_start_x = 50e-6;
    return d;
}

StructuredGrid small_grid() {
    const DomainSpec d = small_domain();
    return build_grid(d, 20e-6, {10e-6, 10e-6, 10e-6}, {40e-6, 120e-6, 0.0, 30e-6, 30e-6, 60e-6});
}

PinnProblem small_problem(ResidualForm form = ResidualForm::Literal) {
    PinnProblem pb;
    pb.domain = small_domain();
    pb.process.laser_start_x = 50e-6;
    pb.horizon = 50e-6;
    pb.form = form;
    return pb;
}

SurrogateModel random_model(std::vector<int> sizes, std::uint64_t seed, const PinnProblem& pb) {
    SurrogateModel m = glorot_init(sizes, seed);
    std::mt19937_64 rng(seed + 1000);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (std::size_t l = 0; l < m.layer_count(); ++l)
        for (Eigen::Index i = 0; i < m.bias(l).size(); ++i) m.bias(l)(i) = nd(rng);
    pb.configure(m);
    return m;
}

SurrogateModel ambient_model(const PinnProblem& pb) {
    SurrogateModel m({4, 8, 1});
    m.parameters().setZero();
    pb.configure(m);
    return m;
}

// Single hidden tanh unit, output bias chosen so that T(p) = target.
SurrogateModel tanh_unit(const PinnProblem& pb, const Point4& p, double target) {
    SurrogateModel m({4, 1, 1});
    pb.configure(m);
    m.weight(0) << 0.3, -0.2, 0.5, 0.7;
    m.bias(0)(0) = 0.1;
    m.weight(1)(0, 0) = 0.4;
    m.bias(1)(0) = 0.0;
    const double base = forward(m, p);
    m.bias(1)(0) = (target - base) / m.output_map.scale;
    return m;
}

// Finite-difference oracle for T, dT/dt, grad T and the Laplacian.
struct FdOperators {
    double T, Tt, lap;
    std::array<double, 3> g;
};

FdOperators fd_operators(const SurrogateModel& m, const Point4& p) {
    auto at = [&](int a, double h) {
        Point4 q = p;
        (a == 0 ? q.x : a == 1 ? q.y : a == 2 ? q.z : q.t) += h;
        return forward(m, q);
    };
    FdOperators o{};
    o.T = forward(m, p);
    const double hx = 2e-8, ht = 1e-11;
    o.Tt = (at(3, ht) - at(3, -ht)) / (2 * ht);
    o.lap = 0.0;
    for (int a = 0; a < 3; ++a) {
        o.g[static_cast<std::size_t>(a)] = (at(a, hx) - at(a, -hx)) / (2 * hx);
        const double H = 2e-7;
        o.lap += (at(a, H) - 2 * o.T + at(a, -H)) / (H * H);
    }
    return o;
}

double oracle_residual(const PinnProblem& pb, const FdOperators& o, PhaseState s, Region r) {
    const auto& mat = pb.material;
    const double h = 1e-3;
    const double k = mat.effective_props(o.T, s, r).k;
    if (pb.form == ResidualForm::Literal) {
        auto G = [&](double T) { return mat.volumetric_heat_capacity(T, s, r) * T; };
        const double G1 = (G(o.T + h) - G(o.T - h)) / (2 * h);
        return (G1 * o.Tt - k * o.lap) / pb.pde_scale();
    }
    const double k1 = (mat.effective_props(o.T + h, s, r).k - mat.effective_props(o.T - h, s, r).k) / (2 * h);
    const double g2 = o.g[0] * o.g[0] + o.g[1] * o.g[1] + o.g[2] * o.g[2];
    return (mat.volumetric_heat_capacity(o.T, s, r) * o.Tt - k * o.lap - k1 * g2) / pb.pde_scale();
}

// Central-difference check of an accumulated parameter gradient.
template <class Loss>
void check_param_gradient(SurrogateModel& m, Loss&& loss, std::size_t samples, std::uint64_t seed) {
    Eigen::VectorXd grad;
    const double L0 = loss(m, &grad);
    ASSERT_TRUE(std::isfinite(L0));
    ASSERT_EQ(grad.size(), static_cast<Eigen::Index>(m.parameter_count()));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, grad.size() - 1);
    const double scale = grad.cwiseAbs().maxCoeff();
    for (std::size_t s = 0; s < samples; ++s) {
        const Eigen::Index i = pick(rng);
        const double w = m.parameters()(i), h = 1e-6 * std::max(1.0, std::abs(w));
        m.parameters()(i) = w + h;
        const double up = loss(m, nullptr);
        m.parameters()(i) = w - h;
        const double dn = loss(m, nullptr);
        m.parameters()(i) = w;
        EXPECT_NEAR(grad(i), (up - dn) / (2 * h), 1e-5 * scale + 1e-9) << "parameter " << i;
    }
}

CollocationSet small_set(std::uint64_t seed) {
    auto g = small_grid();
    CollocationCounts c{60, 150, 80, 40};
    auto s = sample_collocation(g, c, {25e-6, 50e-6}, {0.0, 50e-6}, 50e-6, 0.5, seed);
    ThermalField a = uniform_field(g, 293.0, 25e-6), b = uniform_field(g, 293.0, 50e-6);
    for (std::size_t n = 0; n < g.node_count(); ++n) {
        const Point3 p = g.node(n);
        a.temperature[n] = 293.0 + 1500.0 * std::exp(-std::pow((p.x - 70e-6) / 30e-6, 2)) * p.z / 60e-6;
        b.temperature[n] = 293.0 + 1500.0 * std::exp(-std::pow((p.x - 90e-6) / 30e-6, 2)) * p.z / 60e-6;
    }
    fill_labels(s, {a, b});
    return s;
}

}  // namespace

TEST(Losses, AmbientNetworkHasZeroInteriorAndInitialLoss) {
    const auto pb = small_problem();
    auto m = ambient_model(pb);
    auto set = small_set(3);
    StateTable st = make_state_table(set);
    EXPECT_NEAR(ic_loss(m, set.initial, pb), 0.0, 1e-12);
    EXPECT_NEAR(pde_residual_loss(m, set.interior, pb, st), 0.0, 1e-12);
}

TEST(Losses, BoundaryExamplesOnAmbientNetwork) {
    const auto pb = small_problem();
    auto m = ambient_model(pb);
    const double t = 20e-6, xc = pb.process.laser_start_x + pb.process.speed * t, H = pb.domain.height();
    std::vector<BoundaryPoint> top{{{xc, 0.0, H, t}, {0, 0, 1}, BoundaryFace::Top}};
    std::vector<BoundaryPoint> far{{{190e-6, 55e-6, H, t}, {0, 0, 1}, BoundaryFace::Top}};
    std::vector<BoundaryPoint> bottom{{{xc, 10e-6, 0.0, t}, {0, 0, -1}, BoundaryFace::Bottom}};
    std::vector<BoundaryPoint> sym{{{xc, 0.0, 30e-6, t}, {0, -1, 0}, BoundaryFace::Symmetry}};
    StateTable st(std::vector<Point3>(1), 10e-6);
    EXPECT_NEAR(bc_loss(m, top, pb, st, 0), 1.0, 1e-12);
    EXPECT_LT(bc_loss(m, far, pb, st, 0), 1e-12);
    EXPECT_NEAR(bc_loss(m, bottom, pb, st, 0), 0.0, 1e-24);
    EXPECT_NEAR(bc_loss(m, sym, pb, st, 0), 0.0, 1e-24);
}

TEST(Losses, LateralFluxBalanceOnLinearNetwork) {
    auto pb = small_problem();
    SurrogateModel m({4, 1});
    pb.configure(m);
    m.weight(0) << 0.2, 0.0, 0.0, 0.0;
    m.bias(0)(0) = 0.1;
    const Point4 p{pb.domain.length_x, 20e-6, 20e-6, 10e-6};
    const double T = forward(m, p);
    const double dTdx = 0.2 * m.output_map.scale * m.input_maps[0].scale;
    const double k = pb.material.effective_props(T, PhaseState::Unmelted, Region::Substrate).k;
    const auto& pp = pb.process;
    const double r = (k * dTdx + pp.h_conv * (T - pp.ambient) +
                      pp.emissivity * kStefanBoltzmann * (std::pow(T, 4) - std::pow(pp.ambient, 4))) /
                     pb.flux_scale();
    StateTable st(std::vector<Point3>(1), 10e-6);
    std::vector<BoundaryPoint> b{{p, {1, 0, 0}, BoundaryFace::Lateral}};
    EXPECT_NEAR(bc_loss(m, b, pb, st, 0), r * r, 1e-12 * r * r);
}

TEST(Losses, DataLossIsScaledSquaredError) {
    const auto pb = small_problem();
    auto m = ambient_model(pb);
    std::vector<LabeledPoint> l{{{1e-6, 1e-6, 1e-6, 0.0}, 293.0 + 370.7, 0}, {{2e-6, 1e-6, 1e-6, 0.0}, 293.0, 0}};
    EXPECT_NEAR(data_loss(m, l, pb), 0.5 * 0.01, 1e-15);
    l[1].temperature = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(data_loss(m, l, pb), InvalidInput);
}

TEST(PdeResidual, MatchesFiniteDifferenceOracle) {
    struct Case {
        ResidualForm form;
        double target;
        PhaseState state;
        Point4 p;
    };
    const std::vector<Case> cases{
        {ResidualForm::Literal, 1000.0, PhaseState::Unmelted, {80e-6, 20e-6, 50e-6, 20e-6}},
        {ResidualForm::Literal, 1000.0, PhaseState::Melted, {80e-6, 20e-6, 50e-6, 20e-6}},
        {ResidualForm::Literal, 1690.0, PhaseState::Melted, {100e-6, 10e-6, 20e-6, 30e-6}},
        {ResidualForm::Literal, 2500.0, PhaseState::Melted, {100e-6, 10e-6, 55e-6, 30e-6}},
        {ResidualForm::Enthalpy, 1000.0, PhaseState::Unmelted, {80e-6, 20e-6, 50e-6, 20e-6}},
        {ResidualForm::Enthalpy, 1690.0, PhaseState::Melted, {100e-6, 10e-6, 20e-6, 30e-6}},
        {ResidualForm::Enthalpy, 900.0, PhaseState::Melted, {60e-6, 40e-6, 10e-6, 5e-6}},
    };
    for (const auto& c : cases) {
        const auto pb = small_problem(c.form);
        auto m = tanh_unit(pb, c.p, c.target);
        const auto o = fd_operators(m, c.p);
        ASSERT_NEAR(o.T, c.target, 1e-9);
        const double r = oracle_residual(pb, o, c.state, pb.domain.region_at(c.p.z));
        StateTable st({c.p.spatial()}, 10e-6);
        if (c.state == PhaseState::Melted) st.merge(0, 0.0);
        const double L = pde_residual_loss(m, {c.p}, pb, st);
        EXPECT_NEAR(std::sqrt(L), std::abs(r), 2e-5 * std::abs(r) + 1e-9) << c.target;
    }
}

TEST(PdeResidual, PartialsMatchFiniteDifferences) {
    for (int variant = 0; variant < 3; ++variant) {
        auto pb = small_problem(variant == 1 ? ResidualForm::Enthalpy : ResidualForm::Literal);
        pb.local_capacity_scaling = variant == 2;
        const std::array<double, 3> g{2e6, -1e6, 3e6};
        for (double T : {600.0, 1500.0, 1690.0, 2000.0}) {
            for (auto s : {PhaseState::Unmelted, PhaseState::Melted}) {
                const double Tt = 5e7, lap = -4e11;
                const auto r = pde_residual(pb, T, Tt, g, lap, s, Region::PowderLayer);
                auto R = [&](double T_, double Tt_, std::array<double, 3> g_, double lap_) {
                    return pde_residual(pb, T_, Tt_, g_, lap_, s, Region::PowderLayer).r;
                };
                const double h = 1e-3;
                EXPECT_NEAR(r.dT, (R(T + h, Tt, g, lap) - R(T - h, Tt, g, lap)) / (2 * h), 1e-5 * std::abs(r.dT) + 1e-12);
                EXPECT_NEAR(r.dTt, (R(T, Tt + 1e3, g, lap) - R(T, Tt - 1e3, g, lap)) / 2e3, 1e-7 * std::abs(r.dTt) + 1e-13 * std::abs(r.r) / 1e3);
                EXPECT_NEAR(r.dlap, (R(T, Tt, g, lap + 1e6) - R(T, Tt, g, lap - 1e6)) / 2e6, 1e-7 * std::abs(r.dlap) + 1e-13 * std::abs(r.r) / 1e6);
                for (std::size_t a = 0; a < 3; ++a) {
                    auto gp = g, gm = g;
                    gp[a] += 1e2;
                    gm[a] -= 1e2;
                    EXPECT_NEAR(r.dgrad[a], (R(T, Tt, gp, lap) - R(T, Tt, gm, lap)) / 2e2, 1e-6 * std::abs(r.dgrad[a]) + 1e-13 * std::abs(r.r) / 1e2);
                }
            }
        }
    }
}

TEST(PdeResidual, CapacityScalingDividesByTimeDerivativeCoefficient) {
    auto pb = small_problem();
    auto scaled = pb;
    scaled.local_capacity_scaling = true;
    const std::array<double, 3> g{1e6, 0, -2e6};
    for (double T : {500.0, 1690.0, 2500.0}) {
        const auto s = PhaseState::Melted;
        const auto a = pde_residual(pb, T, 3e7, g, -1e11, s, Region::Substrate);
        const auto b = pde_residual(scaled, T, 3e7, g, -1e11, s, Region::Substrate);
        const double cap = a.dTt * pb.pde_scale();
        EXPECT_NEAR(b.r, a.r * pb.rho_ref * pb.cp_ref / cap, 1e-12 * std::abs(b.r));
        EXPECT_NEAR(b.dTt * pb.pde_scale(), pb.rho_ref * pb.cp_ref, 1e-9);
    }
}

TEST(PdeResidual, PropertiesAreClamped) {
    const auto pb = small_problem();
    const auto lo = pde_residual(pb, -500.0, 1e6, {0, 0, 0}, 1e9, PhaseState::Unmelted, Region::Substrate);
    const auto at = pde_residual(pb, pb.property_t_min, 1e6, {0, 0, 0}, 1e9, PhaseState::Unmelted, Region::Substrate);
    EXPECT_DOUBLE_EQ(lo.r, at.r);
    EXPECT_EQ(lo.dT, 0.0);
}

TEST(LossGradient, MatchesFiniteDifferences) {
    for (auto form : {ResidualForm::Literal, ResidualForm::Enthalpy}) {
        const auto pb = small_problem(form);
        auto set = small_set(5);
        StateTable st = make_state_table(set);
        for (std::size_t i = 0; i < st.size(); i += 3) st.merge(i, 10e-6);
        auto m = random_model({4, 8, 8, 1}, 17, pb);
        const LossWeights w{1.0, 0.7, 1.3, 0.5};
        check_param_gradient(
            m,
            [&](const SurrogateModel& mm, Eigen::VectorXd* g) {
                if (g) g->resize(0);
                return evaluate_losses(mm, pb, set, st, w, g).total;
            },
            40, 99);
    }
}

TEST(LossGradient, EachTermMatchesFiniteDifferences) {
    const auto pb = small_problem();
    auto set = small_set(6);
    StateTable st = make_state_table(set);
    auto m = random_model({4, 6, 1}, 23, pb);
    check_param_gradient(m, [&](const SurrogateModel& mm, Eigen::VectorXd* g) { return data_loss(mm, set.labeled, pb, g); }, 15, 1);
    check_param_gradient(m, [&](const SurrogateModel& mm, Eigen::VectorXd* g) { return ic_loss(mm, set.initial, pb, g); }, 15, 2);
    check_param_gradient(
        m, [&](const SurrogateModel& mm, Eigen::VectorXd* g) { return pde_residual_loss(mm, set.interior, pb, st, 0, g); }, 15, 3);
    check_param_gradient(
        m, [&](const SurrogateModel& mm, Eigen::VectorXd* g) { return bc_loss(mm, set.boundary, pb, st, set.N(), g); }, 15, 4);
}

TEST(StateTable, RefreshFindsFirstGridTimeAboveLiquidus) {
    auto pb = small_problem();
    pb.horizon = 300e-6;
    SurrogateModel m({4, 1});
    pb.configure(m);
    // T rises linearly in t and crosses the liquidus at 195 us.
    m.weight(0) << 0.0, 0.0, 0.0, 0.5;
    const double TL = pb.material.liquidus, ut = m.input_maps[3].apply(195e-6);
    m.bias(0)(0) = (TL - pb.ambient()) / m.output_map.scale - 0.5 * ut;
    StateTable st({{10e-6, 10e-6, 10e-6}, {50e-6, 20e-6, 30e-6}}, 10e-6);
    EXPECT_EQ(st.refresh(m, 300e-6, TL), 2u);
    EXPECT_NEAR(st.t_min(0), 200e-6, 1e-15);
    EXPECT_NEAR(st.t_min(1), 200e-6, 1e-15);
    EXPECT_EQ(st.refresh(m, 300e-6, TL), 0u);
    EXPECT_EQ(st.state(0, 199e-6), PhaseState::Unmelted);
    EXPECT_EQ(st.state(0, 200e-6), PhaseState::Melted);

    // Short scan horizon: nothing yet.
    StateTable early({{10e-6, 10e-6, 10e-6}}, 10e-6);
    EXPECT_EQ(early.refresh(m, 190e-6, TL), 0u);
    EXPECT_EQ(early.melted_count(), 0u);

    // A cold network never un-melts.
    auto cold = ambient_model(pb);
    EXPECT_EQ(st.refresh(cold, 300e-6, TL), 0u);
    EXPECT_EQ(st.melted_count(), 2u);
}

TEST(StateTable, MergeFieldUsesNearestNode) {
    auto g = small_grid();
    ThermalField f = uniform_field(g, 293.0, 30e-6);
    const std::size_t n = g.nearest_node({80e-6, 10e-6, 60e-6});
    f.t_min[n] = 12e-6;
    StateTable st({g.node(n), {0.0, 0.0, 0.0}}, 10e-6);
    st.merge(0, 20e-6);
    EXPECT_EQ(st.merge_field(f, g), 1u);
    EXPECT_EQ(st.t_min(0), 12e-6);
    EXPECT_EQ(st.t_min(1), kNever);
    f.t_min[n] = 15e-6;
    EXPECT_EQ(st.merge_field(f, g), 0u);
    EXPECT_EQ(st.t_min(0), 12e-6);
}

TEST(StateTable, TableMustMatchCollocationSet) {
    const auto pb = small_problem();
    auto set = small_set(4);
    auto m = ambient_model(pb);
    StateTable st(std::vector<Point3>(set.N()), 10e-6);
    EXPECT_THROW(evaluate_losses(m, pb, set, st, {}), InvalidInput);
    EXPECT_THROW(pde_residual_loss(m, set.interior, pb, st, 1), InvalidInput);
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
    const auto pb = small_problem();
    auto set = small_set(7);
    StateTable st = make_state_table(set);
    auto m = random_model({4, 8, 1}, 3, pb);
    const auto before = m;
    AdamState adam(m.parameter_count());
    TrainOptions opt;
    opt.epochs = 0;
    auto sum = train(m, adam, pb, set, st, {}, opt);
    EXPECT_TRUE(sum.history.empty());
    EXPECT_TRUE(m == before);
}

TEST(Train, ReducesLossAndIsDeterministic) {
    const auto pb = small_problem();
    auto set = small_set(8);
    auto run = [&](std::size_t batch) {
        StateTable st = make_state_table(set);
        auto m = random_model({4, 8, 8, 1}, 11, pb);
        AdamState adam(m.parameter_count(), 3e-3);
        TrainOptions opt;
        opt.epochs = 150;
        opt.refresh_every = 50;
        opt.batches = batch;
        opt.seed = 4;
        auto s = train(m, adam, pb, set, st, {}, opt, 10);
        return std::make_tuple(m, s, st);
    };
    auto [m1, s1, st1] = run(1);
    auto [m2, s2, st2] = run(1);
    EXPECT_TRUE(m1 == m2);
    ASSERT_EQ(s1.history.size(), 150u);
    EXPECT_EQ(s1.history.front().epoch, 10u);
    EXPECT_EQ(s1.history.back().epoch, 159u);
    EXPECT_LT(s1.history.back().total, 0.5 * s1.history.front().total);
    EXPECT_EQ(s1.melted_after_refresh.size(), 3u);
    EXPECT_TRUE(s1.state_monotone);
    EXPECT_EQ(st1.t_min(), st2.t_min());
    for (const auto& r : s1.history) EXPECT_NEAR(r.total, weighted_total(r, {}), 1e-15 * r.total);

    auto [m3, s3, st3] = run(4);
    auto [m4, s4, st4] = run(4);
    EXPECT_TRUE(m3 == m4);
    ASSERT_EQ(s3.history.size(), 150u);
    EXPECT_LT(s3.history.back().total, 0.5 * s3.history.front().total);
    EXPECT_FALSE(m3 == m1);
}

TEST(Train, BatchesPartitionEveryPointSet) {
    std::mt19937_64 rng(3);
    for (std::size_t n : {0u, 5u, 17u, 64u}) {
        const auto parts = detail::partition(n, 4, rng);
        ASSERT_EQ(parts.size(), 4u);
        std::vector<int> hits(n, 0);
        for (const auto& p : parts) {
            EXPECT_LE(p.size(), n / 4 + 1);
            for (auto i : p) ++hits[i];
        }
        for (int h : hits) EXPECT_EQ(h, 1);
    }
    auto set = small_set(12);
    StateTable st = make_state_table(set);
    for (std::size_t i = 0; i < st.size(); ++i) st.merge(i, 1e-6 * static_cast<double>(i));
    const auto [s, sub] = detail::select(set, st, {std::vector<std::size_t>{0}, {2, 1}, {0}, {}});
    ASSERT_EQ(sub.size(), 3u);
    EXPECT_EQ(s.interior[0].t, set.interior[2].t);
    EXPECT_EQ(sub.t_min(0), st.t_min(2));
    EXPECT_EQ(sub.t_min(1), st.t_min(1));
    EXPECT_EQ(sub.t_min(2), st.t_min(set.N()));
    EXPECT_TRUE(s.initial.empty());
}

TEST(Train, StopsOnceLossReachesTarget) {
    const auto pb = small_problem();
    auto set = small_set(8);
    auto run = [&](double stop) {
        StateTable st = make_state_table(set);
        auto m = random_model({4, 8, 8, 1}, 11, pb);
        AdamState adam(m.parameter_count(), 3e-3);
        TrainOptions opt;
        opt.epochs = 150;
        opt.refresh_every = 50;
        opt.seed = 4;
        opt.stop_below = stop;
        return train(m, adam, pb, set, st, {}, opt).history;
    };
    const auto full = run(0.0);
    const double target = full[60].total;
    const auto cut = run(target);
    ASSERT_LT(cut.size(), full.size());
    EXPECT_LE(cut.back().total, target);
    for (std::size_t i = 0; i + 1 < cut.size(); ++i) EXPECT_GT(cut[i].total, target);
    std::size_t first = 0;
    while (full[first].total > target) ++first;
    EXPECT_EQ(cut.size(), first + 1);
}

TEST(Train, NonFiniteLossRestoresLastGoodModel) {
    const auto pb = small_problem();
    auto set = small_set(9);
    for (auto& l : set.labeled) l.temperature = 1e300;
    StateTable st = make_state_table(set);
    auto m = random_model({4, 8, 1}, 5, pb);
    const auto before = m;
    AdamState adam(m.parameter_count());
    TrainOptions opt;
    opt.epochs = 3;
    EXPECT_THROW(train(m, adam, pb, set, st, {}, opt), NumericalError);
    EXPECT_TRUE(m == before);
}

TEST(Predict, FieldOnGridNodes) {
    const auto pb = small_problem();
    auto g = small_grid();
    auto m = random_model({4, 8, 1}, 2, pb);
    StateTable nodes = make_node_table(g);
    nodes.merge(3, 1e-6);
    auto f = predict_field(m, nodes, g, 20e-6);
    ASSERT_EQ(f.size(), g.node_count());
    EXPECT_EQ(f.time, 20e-6);
    for (std::size_t n = 0; n < g.node_count(); n += 11) {
        const Point3 p = g.node(n);
        EXPECT_NEAR(f.temperature[n], forward(m, Point4{p.x, p.y, p.z, 20e-6}), 1e-9);
    }
    EXPECT_EQ(f.state(3), PhaseState::Melted);
    EXPECT_THROW(predict_field(m, StateTable(std::vector<Point3>(2)), g, 0.0), InvalidInput);
}
