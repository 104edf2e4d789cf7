#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "lpbf/network.hpp"

using namespace lpbf;

namespace {

// Random network with unit-ish input maps so finite differences are well scaled.
SurrogateModel random_model(std::mt19937_64& rng, bool with_bias = true) {
    std::uniform_int_distribution<int> depth(1, 3), width(2, 9);
    std::vector<int> sizes{4};
    const int d = depth(rng);
    for (int i = 0; i < d; ++i) sizes.push_back(width(rng));
    sizes.push_back(1);
    auto m = glorot_init(sizes, rng());
    std::uniform_real_distribution<double> u(-0.5, 0.5), s(0.5, 2.0);
    if (with_bias)
        for (std::size_t l = 0; l < m.layer_count(); ++l)
            for (Eigen::Index i = 0; i < m.bias(l).size(); ++i) m.bias(l)(i) = u(rng);
    for (auto& map : m.input_maps) map = {s(rng), u(rng)};
    m.output_map = {s(rng) * 100.0, 300.0};
    return m;
}

Point4 random_point(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    return {u(rng), u(rng), u(rng), u(rng)};
}

Point4 shifted(Point4 p, int a, double h) {
    (a == 0 ? p.x : a == 1 ? p.y : a == 2 ? p.z : p.t) += h;
    return p;
}

// Richardson-extrapolated central differences.
template <class F>
double fd_first(F&& f, double h) {
    auto d = [&](double s) { return (f(s) - f(-s)) / (2 * s); };
    return (4 * d(h / 2) - d(h)) / 3;
}
template <class F>
double fd_second(F&& f, double h) {
    const double f0 = f(0.0);
    auto d = [&](double s) { return (f(s) - 2 * f0 + f(-s)) / (s * s); };
    return (4 * d(h / 2) - d(h)) / 3;
}

double rel_err(double a, double b, double floor) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor}); }

}  // namespace

TEST(Glorot, VarianceBiasAndDeterminism) {
    double var_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto m = glorot_init({4, 64, 64, 1}, seed);
        const auto W = m.weight(1);
        var_sum += W.array().square().mean();
        for (std::size_t l = 0; l < m.layer_count(); ++l) EXPECT_TRUE((m.bias(l).array() == 0.0).all());
    }
    EXPECT_NEAR(var_sum / 10 / (2.0 / 128.0), 1.0, 0.1);
    EXPECT_EQ(glorot_init(default_layer_sizes(), 5), glorot_init(default_layer_sizes(), 5));
    EXPECT_FALSE(glorot_init(default_layer_sizes(), 5) == glorot_init(default_layer_sizes(), 6));
    EXPECT_EQ(glorot_init(default_layer_sizes(), 1).parameter_count(), 16865u);
    EXPECT_THROW(SurrogateModel({4, 0, 1}), InvalidInput);
    EXPECT_THROW(SurrogateModel({3, 8, 1}), InvalidInput);
}

TEST(Forward, ZeroNetworkGivesOutputOffset) {
    SurrogateModel m(default_layer_sizes());
    m.output_map = {3707.0, 293.0};
    EXPECT_EQ(forward(m, {1, 2, 3, 4}), 293.0);
}

TEST(Forward, SingleTanhUnit) {
    SurrogateModel m({4, 1, 1});
    m.weight(0)(0, 0) = 1.0;
    m.weight(1)(0, 0) = 1.0;
    m.input_maps[0] = {2.0, -0.5};
    m.output_map = {10.0, 1.0};
    for (double x : {-0.7, 0.0, 0.3, 1.1}) {
        const double xi = 2.0 * x - 0.5, t = std::tanh(xi);
        auto d = input_derivatives(m, {x, 0.4, -0.2, 0.9});
        EXPECT_NEAR(d.value, 1.0 + 10.0 * t, 1e-12);
        EXPECT_NEAR(d.gradient[0], 10.0 * (1 - t * t) * 2.0, 1e-12);
        EXPECT_NEAR(d.second[0], 10.0 * -2 * t * (1 - t * t) * 4.0, 1e-10);
        EXPECT_EQ(d.gradient[1], 0.0);
        EXPECT_EQ(d.second[2], 0.0);
    }
}

TEST(Forward, LinearNetwork) {
    SurrogateModel m({4, 1});
    m.weight(0) << 1.0, -2.0, 0.5, 3.0;
    m.bias(0)(0) = 0.25;
    for (int a = 0; a < 4; ++a) m.input_maps[static_cast<std::size_t>(a)] = {1.0 + a, 0.1};
    m.output_map = {2.0, 5.0};
    auto d = input_derivatives(m, {0.1, 0.2, 0.3, 0.4});
    const double w[4] = {1.0, -2.0, 0.5, 3.0};
    for (int a = 0; a < 4; ++a) EXPECT_DOUBLE_EQ(d.gradient[static_cast<std::size_t>(a)], 2.0 * w[a] * (1.0 + a));
    for (double s : d.second) EXPECT_EQ(s, 0.0);
}

TEST(Forward, BatchMatchesPointwise) {
    std::mt19937_64 rng(3);
    auto m = glorot_init(default_layer_sizes(), 11);
    std::vector<Point4> pts;
    for (int i = 0; i < 2500; ++i) pts.push_back(random_point(rng));
    auto batch = forward_batch(m, pts, 700);
    for (std::size_t i = 0; i < pts.size(); i += 97) EXPECT_NEAR(batch[i], forward(m, pts[i]), 1e-12);
}

TEST(InputDerivatives, MatchFiniteDifferencesOnRandomNetworks) {
    std::mt19937_64 rng(2024);
    int checked = 0;
    for (int net = 0; net < 120; ++net) {
        auto m = random_model(rng);
        for (int k = 0; k < 3; ++k) {
            const Point4 p = random_point(rng);
            auto d = input_derivatives(m, p);
            for (int a = 0; a < 4; ++a) {
                auto f = [&](double h) { return forward(m, shifted(p, a, h)); };
                const double fd = fd_first(f, 1e-3);
                EXPECT_LT(rel_err(d.gradient[static_cast<std::size_t>(a)], fd, 1e-2 * m.output_map.scale), 1e-5)
                    << "net " << net << " axis " << a;
                if (a < 3) {
                    const double fd2 = fd_second(f, 2e-2);
                    EXPECT_LT(rel_err(d.second[static_cast<std::size_t>(a)], fd2, 1e-2 * m.output_map.scale), 1e-5)
                        << "net " << net << " axis " << a;
                }
                ++checked;
            }
        }
    }
    EXPECT_GE(checked, 400);
}

TEST(InputDerivatives, OutputScalingScalesCurvature) {
    std::mt19937_64 rng(8);
    auto m = random_model(rng);
    const Point4 p = random_point(rng);
    auto a = input_derivatives(m, p);
    m.output_map.scale *= 3.5;
    auto b = input_derivatives(m, p);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(b.second[static_cast<std::size_t>(k)], 3.5 * a.second[static_cast<std::size_t>(k)], 1e-9);
}

namespace {

// A loss touching every channel: sum_i [ (T-a)^2 + sum_k c_k g_k^2 + sum_k e_k h_k * T ].
double channel_loss(const BatchDerivatives& d, BatchAdjoints& adj) {
    const double a = 310.0;
    double L = 0.0;
    for (Eigen::Index i = 0; i < d.value.size(); ++i) {
        const double T = d.value(i);
        L += (T - a) * (T - a);
        adj.value(i) += 2 * (T - a);
        for (Eigen::Index k = 0; k < d.first.rows(); ++k) {
            const double ck = 0.3 + 0.1 * static_cast<double>(k);
            L += ck * d.first(k, i) * d.first(k, i);
            adj.first(k, i) += 2 * ck * d.first(k, i);
        }
        for (Eigen::Index k = 0; k < d.second.rows(); ++k) {
            const double ek = 0.2 - 0.05 * static_cast<double>(k);
            L += ek * d.second(k, i) * T;
            adj.second(k, i) += ek * T;
            adj.value(i) += ek * d.second(k, i);
        }
    }
    return L * 1e-4;
}

double scaled_channel_loss(const BatchDerivatives& d, BatchAdjoints& adj) {
    const double L = channel_loss(d, adj);
    adj.value *= 1e-4;
    adj.first *= 1e-4;
    adj.second *= 1e-4;
    return L;
}

double loss_only(const SurrogateModel& m, const std::vector<Point4>& pts, const ChannelSpec& spec) {
    Eigen::VectorXd g;
    return param_gradient(m, pts, spec, scaled_channel_loss, g);
}

}  // namespace

TEST(ParamGradient, MatchesFiniteDifferencesOnRandomNetworks) {
    std::mt19937_64 rng(77);
    const ChannelSpec specs[] = {ChannelSpec::value_only(), ChannelSpec::spatial_gradient(), ChannelSpec::heat_equation()};
    int checked = 0;
    for (int net = 0; net < 100; ++net) {
        auto m = random_model(rng);
        std::vector<Point4> pts;
        for (int i = 0; i < 10; ++i) pts.push_back(random_point(rng));
        const auto& spec = specs[net % 3];
        Eigen::VectorXd g;
        param_gradient(m, pts, spec, scaled_channel_loss, g);
        std::uniform_int_distribution<std::size_t> pick(0, m.parameter_count() - 1);
        for (int k = 0; k < 12; ++k) {
            const std::size_t j = pick(rng);
            auto f = [&](double h) {
                SurrogateModel q = m;
                q.parameters()(static_cast<Eigen::Index>(j)) += h;
                return loss_only(q, pts, spec);
            };
            const double fd = fd_first(f, 1e-4);
            EXPECT_LT(rel_err(g(static_cast<Eigen::Index>(j)), fd, 1e-6 * std::abs(loss_only(m, pts, spec)) + 1e-9), 1e-5)
                << "net " << net << " param " << j;
            ++checked;
        }
    }
    EXPECT_GE(checked, 1200);
}

TEST(ParamGradient, EveryParameterOfTwoLayerNetwork) {
    std::mt19937_64 rng(5);
    auto m = glorot_init({4, 6, 5, 1}, 9);
    for (auto& map : m.input_maps) map = {1.3, 0.1};
    m.output_map = {50.0, 300.0};
    std::vector<Point4> pts;
    for (int i = 0; i < 10; ++i) pts.push_back(random_point(rng));
    const auto spec = ChannelSpec::heat_equation();
    Eigen::VectorXd g;
    param_gradient(m, pts, spec, scaled_channel_loss, g);
    for (std::size_t j = 0; j < m.parameter_count(); ++j) {
        auto f = [&](double h) {
            SurrogateModel q = m;
            q.parameters()(static_cast<Eigen::Index>(j)) += h;
            return loss_only(q, pts, spec);
        };
        EXPECT_LT(rel_err(g(static_cast<Eigen::Index>(j)), fd_first(f, 1e-4), 1e-8), 1e-5) << "param " << j;
    }
}

TEST(ParamGradient, SquaredOutputOfLinearNetwork) {
    SurrogateModel m({4, 1});
    m.weight(0) << 0.5, 0, 0, 0;
    const Point4 p{2.0, 0, 0, 0};
    Eigen::VectorXd g;
    param_gradient(m, {p}, ChannelSpec::value_only(),
                   [](const BatchDerivatives& d, BatchAdjoints& adj) {
                       adj.value(0) = 2 * d.value(0);
                       return d.value(0) * d.value(0);
                   },
                   g);
    // T = w x + b, d(T^2)/dw = 2 T x, d(T^2)/db = 2 T.
    EXPECT_DOUBLE_EQ(g(0), 2 * 1.0 * 2.0);
    EXPECT_DOUBLE_EQ(g(4), 2 * 1.0);
}

TEST(ParamGradient, DuplicatedPointDoublesItsShare) {
    std::mt19937_64 rng(12);
    auto m = random_model(rng);
    const Point4 p = random_point(rng);
    Eigen::VectorXd g1, g2;
    param_gradient(m, {p}, ChannelSpec::heat_equation(), scaled_channel_loss, g1);
    param_gradient(m, {p, p}, ChannelSpec::heat_equation(), scaled_channel_loss, g2);
    EXPECT_LT((g2 - 2 * g1).norm(), 1e-12 * g1.norm());
}

TEST(ParamGradient, NonFiniteLossIsAnError) {
    auto m = glorot_init({4, 3, 1}, 1);
    Eigen::VectorXd g;
    EXPECT_THROW(param_gradient(m, {Point4{}}, ChannelSpec::value_only(),
                                [](const BatchDerivatives&, BatchAdjoints&) { return std::nan(""); }, g),
                 NumericalError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    auto m = glorot_init({4, 8, 1}, 3);
    const auto before = m.parameters();
    AdamState s(m.parameter_count());
    for (int i = 0; i < 10; ++i) adam_step(m, s, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.parameter_count())));
    EXPECT_EQ(m.parameters(), before);
    EXPECT_EQ(s.step, 10u);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
    double w = 1.0;
    AdamState s(1, 1e-3);
    for (int i = 0; i < 5000; ++i) {
        const double g = 2 * (w - 3.0);
        adam_update({&w, 1}, s, {&g, 1});
    }
    EXPECT_LT(std::abs(w - 3.0), 1e-3);
}

TEST(Adam, ShapeMismatchIsAnError) {
    auto m = glorot_init({4, 8, 1}, 3);
    AdamState s(m.parameter_count());
    EXPECT_THROW(adam_step(m, s, Eigen::VectorXd::Zero(3)), InvalidInput);
    AdamState wrong(5);
    EXPECT_THROW(adam_step(m, wrong, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.parameter_count()))),
                 InvalidInput);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
    auto run = [] {
        std::mt19937_64 rng(4);
        auto m = glorot_init({4, 16, 16, 1}, 21);
        std::vector<Point4> pts;
        for (int i = 0; i < 64; ++i) pts.push_back(random_point(rng));
        AdamState s(m.parameter_count());
        for (int e = 0; e < 20; ++e) {
            Eigen::VectorXd g;
            param_gradient(m, pts, ChannelSpec::heat_equation(), scaled_channel_loss, g);
            adam_step(m, s, g);
        }
        return m;
    };
    EXPECT_EQ(run(), run());
}

TEST(Performance, HeatEquationPassOnDefaultNetwork) {
    auto m = glorot_init(default_layer_sizes(), 1);
    std::mt19937_64 rng(1);
    std::vector<Point4> pts;
    for (int i = 0; i < 1024; ++i) pts.push_back(random_point(rng));
    Eigen::VectorXd g;
    const auto t0 = std::chrono::steady_clock::now();
    const int reps = 5;
    for (int r = 0; r < reps; ++r) param_gradient(m, pts, ChannelSpec::heat_equation(), scaled_channel_loss, g);
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
    std::cout << "forward+backward, 8 channels, 1024 points: " << sec * 1e3 << " ms\n";
    EXPECT_LT(sec, 2.0);
}
