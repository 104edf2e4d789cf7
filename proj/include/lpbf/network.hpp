#pragma once

// Fully connected tanh network with exact input derivatives and parameter
// gradients.
//
// Input derivatives are carried forward as extra "channels" next to the value:
// for every requested axis k the first derivative d/dx_k, and optionally the
// pure second derivative d2/dx_k2. All channels of a batch are stacked side
// by side, so each layer is one matrix product. Parameter gradients of any
// scalar built from these channels come from a hand-written reverse sweep
// over the same stacked matrices.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lpbf/common.hpp"

namespace lpbf {

/// y = scale * x + offset.
struct AffineMap {
    double scale = 1.0;
    double offset = 0.0;

    double apply(double x) const { return scale * x + offset; }
    double invert(double y) const { return (y - offset) / scale; }

    /// Maps [lo, hi] onto [-1, 1].
    static AffineMap to_unit(double lo, double hi) {
        require(hi > lo, "affine map: empty interval");
        const double s = 2.0 / (hi - lo);
        return {s, -1.0 - s * lo};
    }

    bool operator==(const AffineMap&) const = default;
};

inline const std::vector<int>& default_layer_sizes() {
    static const std::vector<int> sizes{4, 32, 64, 64, 64, 64, 32, 1};
    return sizes;
}

class SurrogateModel {
public:
    using Matrix = Eigen::MatrixXd;
    using MatMap = Eigen::Map<Matrix>;
    using ConstMatMap = Eigen::Map<const Matrix>;
    using VecMap = Eigen::Map<Eigen::VectorXd>;
    using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

    SurrogateModel() = default;

    explicit SurrogateModel(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        require(sizes_.size() >= 2, "network: need at least input and output layers");
        for (int s : sizes_) require(s >= 1, "network: layer sizes must be positive");
        require(sizes_.front() == 4, "network: input layer must have 4 units (x, y, z, t)");
        require(sizes_.back() == 1, "network: output layer must have 1 unit");
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            w_offset_.push_back(off);
            off += static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]);
            b_offset_.push_back(off);
            off += static_cast<std::size_t>(sizes_[l + 1]);
        }
        theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(off));
    }

    const std::vector<int>& sizes() const { return sizes_; }
    std::size_t layer_count() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(theta_.size()); }

    /// Weight matrix of layer l (out x in), column-major view into the parameters.
    MatMap weight(std::size_t l) { return {theta_.data() + w_offset_[l], sizes_[l + 1], sizes_[l]}; }
    ConstMatMap weight(std::size_t l) const { return {theta_.data() + w_offset_[l], sizes_[l + 1], sizes_[l]}; }
    VecMap bias(std::size_t l) { return {theta_.data() + b_offset_[l], sizes_[l + 1]}; }
    ConstVecMap bias(std::size_t l) const { return {theta_.data() + b_offset_[l], sizes_[l + 1]}; }

    std::size_t weight_offset(std::size_t l) const { return w_offset_[l]; }
    std::size_t bias_offset(std::size_t l) const { return b_offset_[l]; }

    Eigen::VectorXd& parameters() { return theta_; }
    const Eigen::VectorXd& parameters() const { return theta_; }

    std::array<AffineMap, 4> input_maps{};
    AffineMap output_map{};

    /// Inputs scaled to [-1, 1] over the box and [0, horizon]; output
    /// T = ambient + theta * (t_ref_max - ambient).
    void set_scaling(double x_lo, double x_hi, double y_lo, double y_hi, double z_lo, double z_hi, double horizon,
                     double ambient, double t_ref_max) {
        require(horizon > 0.0, "network: horizon must be positive");
        require(t_ref_max > ambient, "network: reference temperature must exceed ambient");
        input_maps = {AffineMap::to_unit(x_lo, x_hi), AffineMap::to_unit(y_lo, y_hi), AffineMap::to_unit(z_lo, z_hi),
                      AffineMap::to_unit(0.0, horizon)};
        output_map = {t_ref_max - ambient, ambient};
    }

    bool operator==(const SurrogateModel& o) const {
        return sizes_ == o.sizes_ && theta_.size() == o.theta_.size() && theta_ == o.theta_ &&
               input_maps == o.input_maps && output_map == o.output_map;
    }

private:
    std::vector<int> sizes_;
    std::vector<std::size_t> w_offset_, b_offset_;
    Eigen::VectorXd theta_;
};

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
inline SurrogateModel glorot_init(const std::vector<int>& sizes, std::uint64_t seed) {
    SurrogateModel m(sizes);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        const double a = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
        std::uniform_real_distribution<double> u(-a, a);
        auto W = m.weight(l);
        // Row-major fill order so the draw sequence matches the checkpoint layout.
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = u(rng);
        m.bias(l).setZero();
    }
    return m;
}

/// Which input derivatives a batch pass carries. Axes: 0 = x, 1 = y, 2 = z, 3 = t.
struct ChannelSpec {
    std::vector<int> first;   // first-derivative axes
    std::vector<int> second;  // pure second-derivative axes (each must also be in `first`)

    static ChannelSpec value_only() { return {}; }
    static ChannelSpec spatial_gradient() { return {{0, 1, 2}, {}}; }
    static ChannelSpec heat_equation() { return {{0, 1, 2, 3}, {0, 1, 2}}; }

    std::size_t channels() const { return 1 + first.size() + second.size(); }
};

/// Per-point results of a batch pass in physical units (kelvin, metres, seconds).
struct BatchDerivatives {
    Eigen::ArrayXd value;   // T
    Eigen::ArrayXXd first;  // row r: dT/dx_{spec.first[r]}
    Eigen::ArrayXXd second; // row r: d2T/dx_{spec.second[r]}^2
};

/// Adjoints of a scalar loss with respect to the quantities in BatchDerivatives.
struct BatchAdjoints {
    Eigen::ArrayXd value;
    Eigen::ArrayXXd first;
    Eigen::ArrayXXd second;

    void resize(const ChannelSpec& spec, Eigen::Index n) {
        value = Eigen::ArrayXd::Zero(n);
        first = Eigen::ArrayXXd::Zero(static_cast<Eigen::Index>(spec.first.size()), n);
        second = Eigen::ArrayXXd::Zero(static_cast<Eigen::Index>(spec.second.size()), n);
    }
};

namespace detail {

// tanh through the vectorised exp; absolute error stays at rounding level.
inline Eigen::ArrayXXd tanh_array(const Eigen::ArrayXXd& z) {
    const Eigen::ArrayXXd e = (-2.0 * z.abs()).exp();
    return ((1.0 - e) / (1.0 + e)) * z.sign();
}

}  // namespace detail

/// Forward pass over one batch that keeps what the reverse sweep needs.
class TaylorTape {
public:
    /// `points` is 4 x B in physical units.
    void forward(const SurrogateModel& model, const Eigen::Ref<const Eigen::Matrix4Xd>& points, const ChannelSpec& spec);

    const BatchDerivatives& result() const { return out_; }

    /// Accumulates d(loss)/d(parameters) into `grad` given the loss adjoints.
    void backward(const SurrogateModel& model, const BatchAdjoints& adj, Eigen::VectorXd& grad);

private:
    ChannelSpec spec_;
    Eigen::Index batch_ = 0;
    std::vector<int> second_slot_;  // for each second axis, its index in spec_.first
    Eigen::Matrix4Xd xi_;           // scaled inputs
    std::vector<Eigen::MatrixXd> acts_;  // stacked layer inputs: [value | first... | second...]
    std::vector<Eigen::MatrixXd> pre_;   // pre-activation, stacked
    BatchDerivatives out_;
};

inline void TaylorTape::forward(const SurrogateModel& model, const Eigen::Ref<const Eigen::Matrix4Xd>& points,
                                const ChannelSpec& spec) {
    spec_ = spec;
    const Eigen::Index B = points.cols();
    batch_ = B;
    const std::size_t nf = spec.first.size(), ns = spec.second.size();
    const Eigen::Index C = static_cast<Eigen::Index>(spec.channels());
    second_slot_.clear();
    for (int a : spec.second) {
        auto it = std::find(spec.first.begin(), spec.first.end(), a);
        require(it != spec.first.end(), "network: second-derivative axis must also be a first-derivative axis");
        second_slot_.push_back(static_cast<int>(it - spec.first.begin()));
    }
    for (int a : spec.first) require(a >= 0 && a < 4, "network: derivative axis out of range");

    xi_.resize(4, B);
    for (int a = 0; a < 4; ++a) {
        const auto& m = model.input_maps[static_cast<std::size_t>(a)];
        xi_.row(a) = (points.row(a).array() * m.scale + m.offset).matrix();
    }
    const std::size_t L = model.layer_count();
    acts_.resize(L);
    pre_.resize(L);

    // Layer 0: derivative channels of the scaled inputs are constant.
    {
        auto W = model.weight(0);
        auto& Z = pre_[0];
        Z.resize(W.rows(), C * B);
        Z.leftCols(B).noalias() = W * xi_;
        Z.leftCols(B).colwise() += model.bias(0);
        for (std::size_t r = 0; r < nf; ++r) {
            const int a = spec.first[r];
            const Eigen::VectorXd col = W.col(a) * model.input_maps[static_cast<std::size_t>(a)].scale;
            Z.middleCols(static_cast<Eigen::Index>(1 + r) * B, B).colwise() = col;
        }
        if (ns) Z.rightCols(static_cast<Eigen::Index>(ns) * B).setZero();
    }

    for (std::size_t l = 0; l < L; ++l) {
        const auto& Z = pre_[l];
        if (l + 1 == L) break;
        // tanh and its derivatives on the value channel.
        const auto zv = Z.leftCols(B).array();
        Eigen::ArrayXXd t = detail::tanh_array(zv);
        Eigen::ArrayXXd s1 = 1.0 - t.square();
        auto& X = acts_[l + 1];
        X.resize(Z.rows(), C * B);
        X.leftCols(B) = t.matrix();
        for (std::size_t r = 0; r < nf; ++r) {
            const Eigen::Index c = static_cast<Eigen::Index>(1 + r) * B;
            X.middleCols(c, B) = (s1 * Z.middleCols(c, B).array()).matrix();
        }
        if (ns) {
            Eigen::ArrayXXd s2 = -2.0 * t * s1;
            for (std::size_t r = 0; r < ns; ++r) {
                const Eigen::Index c = static_cast<Eigen::Index>(1 + nf + r) * B;
                const Eigen::Index g = static_cast<Eigen::Index>(1 + second_slot_[r]) * B;
                X.middleCols(c, B) =
                    (s1 * Z.middleCols(c, B).array() + s2 * Z.middleCols(g, B).array().square()).matrix();
            }
        }
        auto W = model.weight(l + 1);
        auto& Zn = pre_[l + 1];
        Zn.resize(W.rows(), C * B);
        Zn.noalias() = W * X;
        Zn.leftCols(B).colwise() += model.bias(l + 1);
    }

    const auto& Zout = pre_[L - 1];
    const double c = model.output_map.scale;
    out_.value = Zout.leftCols(B).row(0).transpose().array() * c + model.output_map.offset;
    out_.first.resize(static_cast<Eigen::Index>(nf), B);
    for (std::size_t r = 0; r < nf; ++r)
        out_.first.row(static_cast<Eigen::Index>(r)) = Zout.middleCols(static_cast<Eigen::Index>(1 + r) * B, B).row(0).array() * c;
    out_.second.resize(static_cast<Eigen::Index>(ns), B);
    for (std::size_t r = 0; r < ns; ++r)
        out_.second.row(static_cast<Eigen::Index>(r)) =
            Zout.middleCols(static_cast<Eigen::Index>(1 + nf + r) * B, B).row(0).array() * c;
}

inline void TaylorTape::backward(const SurrogateModel& model, const BatchAdjoints& adj, Eigen::VectorXd& grad) {
    const Eigen::Index B = batch_;
    const std::size_t nf = spec_.first.size(), ns = spec_.second.size();
    const Eigen::Index C = static_cast<Eigen::Index>(spec_.channels());
    require(adj.value.size() == B && adj.first.rows() == static_cast<Eigen::Index>(nf) &&
                adj.second.rows() == static_cast<Eigen::Index>(ns),
            "network: adjoint shape does not match the forward pass");
    require(grad.size() == static_cast<Eigen::Index>(model.parameter_count()), "network: gradient size mismatch");
    const std::size_t L = model.layer_count();
    const double c = model.output_map.scale;

    Eigen::MatrixXd Zbar(1, C * B);
    Zbar.leftCols(B) = (adj.value * c).matrix().transpose();
    for (std::size_t r = 0; r < nf; ++r)
        Zbar.middleCols(static_cast<Eigen::Index>(1 + r) * B, B) = (adj.first.row(static_cast<Eigen::Index>(r)) * c).matrix();
    for (std::size_t r = 0; r < ns; ++r)
        Zbar.middleCols(static_cast<Eigen::Index>(1 + nf + r) * B, B) =
            (adj.second.row(static_cast<Eigen::Index>(r)) * c).matrix();

    for (std::size_t l = L; l-- > 0;) {
        const auto W = model.weight(l);
        Eigen::Map<Eigen::MatrixXd> gW(grad.data() + model.weight_offset(l), W.rows(), W.cols());
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + model.bias_offset(l), W.rows());
        gb += Zbar.leftCols(B).rowwise().sum();
        if (l == 0) {
            gW.noalias() += Zbar.leftCols(B) * xi_.transpose();
            for (std::size_t r = 0; r < nf; ++r) {
                const int a = spec_.first[r];
                gW.col(a) += Zbar.middleCols(static_cast<Eigen::Index>(1 + r) * B, B).rowwise().sum() *
                             model.input_maps[static_cast<std::size_t>(a)].scale;
            }
            break;
        }
        const auto& X = acts_[l];
        gW.noalias() += Zbar * X.transpose();
        Eigen::MatrixXd Xbar = W.transpose() * Zbar;

        // Back through tanh of layer l-1.
        const auto& Z = pre_[l - 1];
        const Eigen::ArrayXXd t = X.leftCols(B).array();
        const Eigen::ArrayXXd s1 = 1.0 - t.square();
        Eigen::MatrixXd Zb(Z.rows(), C * B);
        Eigen::ArrayXXd zv_bar = Xbar.leftCols(B).array() * s1;
        Eigen::ArrayXXd s2;
        if (nf) s2 = -2.0 * t * s1;
        for (std::size_t r = 0; r < nf; ++r) {
            const Eigen::Index cc = static_cast<Eigen::Index>(1 + r) * B;
            const auto gbar = Xbar.middleCols(cc, B).array();
            Zb.middleCols(cc, B) = (gbar * s1).matrix();
            zv_bar += gbar * s2 * Z.middleCols(cc, B).array();
        }
        if (ns) {
            const Eigen::ArrayXXd s3 = -2.0 * s1 * (1.0 - 3.0 * t.square());
            for (std::size_t r = 0; r < ns; ++r) {
                const Eigen::Index cc = static_cast<Eigen::Index>(1 + nf + r) * B;
                const Eigen::Index g = static_cast<Eigen::Index>(1 + second_slot_[r]) * B;
                const auto hbar = Xbar.middleCols(cc, B).array();
                const auto zg = Z.middleCols(g, B).array();
                Zb.middleCols(cc, B) = (hbar * s1).matrix();
                Zb.middleCols(g, B).array() += 2.0 * hbar * s2 * zg;
                zv_bar += hbar * (s3 * zg.square() + s2 * Z.middleCols(cc, B).array());
            }
        }
        Zb.leftCols(B) = zv_bar.matrix();
        Zbar.swap(Zb);
    }
}

/// Temperature at one point, kelvin.
inline double forward(const SurrogateModel& model, const Point4& p) {
    Eigen::Matrix4Xd pts(4, 1);
    pts << p.x, p.y, p.z, p.t;
    TaylorTape tape;
    tape.forward(model, pts, ChannelSpec::value_only());
    return tape.result().value(0);
}

/// Temperatures at many points (chunked).
inline std::vector<double> forward_batch(const SurrogateModel& model, const std::vector<Point4>& points,
                                         std::size_t chunk = 1024) {
    std::vector<double> out(points.size());
    TaylorTape tape;
    for (std::size_t s = 0; s < points.size(); s += chunk) {
        const std::size_t n = std::min(chunk, points.size() - s);
        Eigen::Matrix4Xd pts(4, static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = points[s + i];
            pts.col(static_cast<Eigen::Index>(i)) << p.x, p.y, p.z, p.t;
        }
        tape.forward(model, pts, ChannelSpec::value_only());
        for (std::size_t i = 0; i < n; ++i) out[s + i] = tape.result().value(static_cast<Eigen::Index>(i));
    }
    return out;
}

struct InputDerivatives {
    double value = 0.0;
    std::array<double, 4> gradient{};  // dT/d{x, y, z, t}
    std::array<double, 3> second{};    // d2T/d{x2, y2, z2}
};

inline InputDerivatives input_derivatives(const SurrogateModel& model, const Point4& p) {
    Eigen::Matrix4Xd pts(4, 1);
    pts << p.x, p.y, p.z, p.t;
    TaylorTape tape;
    tape.forward(model, pts, ChannelSpec::heat_equation());
    const auto& r = tape.result();
    InputDerivatives d;
    d.value = r.value(0);
    for (int a = 0; a < 4; ++a) d.gradient[static_cast<std::size_t>(a)] = r.first(a, 0);
    for (int a = 0; a < 3; ++a) d.second[static_cast<std::size_t>(a)] = r.second(a, 0);
    return d;
}

/// Gradient of a scalar loss over a batch. `loss` receives the batch
/// derivatives and fills the adjoints; it returns the loss value.
template <class LossFn>
double param_gradient(const SurrogateModel& model, const std::vector<Point4>& points, const ChannelSpec& spec,
                      LossFn&& loss, Eigen::VectorXd& grad) {
    Eigen::Matrix4Xd pts(4, static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        pts.col(static_cast<Eigen::Index>(i)) << p.x, p.y, p.z, p.t;
    }
    TaylorTape tape;
    tape.forward(model, pts, spec);
    BatchAdjoints adj;
    adj.resize(spec, pts.cols());
    const double L = loss(tape.result(), adj);
    if (!std::isfinite(L)) throw NumericalError("param_gradient: loss is not finite");
    if (grad.size() != static_cast<Eigen::Index>(model.parameter_count()))
        grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
    tape.backward(model, adj, grad);
    return L;
}

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::uint64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(std::size_t n, double learning_rate = 1e-3)
        : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
          v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
          lr(learning_rate) {}

    bool operator==(const AdamState& o) const {
        return m.size() == o.m.size() && v.size() == o.v.size() && m == o.m && v == o.v && step == o.step &&
               lr == o.lr && beta1 == o.beta1 && beta2 == o.beta2 && eps == o.eps;
    }
};

/// Adam with bias correction on a flat parameter vector.
inline void adam_update(std::span<double> params, AdamState& s, std::span<const double> grad) {
    require(params.size() == grad.size() && static_cast<Eigen::Index>(params.size()) == s.m.size() &&
                s.m.size() == s.v.size(),
            "adam: parameter, gradient and moment shapes differ");
    ++s.step;
    const double t = static_cast<double>(s.step);
    const double c1 = 1.0 - std::pow(s.beta1, t), c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        double& m = s.m[static_cast<Eigen::Index>(i)];
        double& v = s.v[static_cast<Eigen::Index>(i)];
        m = s.beta1 * m + (1.0 - s.beta1) * g;
        v = s.beta2 * v + (1.0 - s.beta2) * g * g;
        params[i] -= s.lr * (m / c1) / (std::sqrt(v / c2) + s.eps);
    }
}

inline void adam_step(SurrogateModel& model, AdamState& state, const Eigen::VectorXd& grad) {
    auto& p = model.parameters();
    require(grad.size() == p.size(), "adam: gradient does not match the model");
    adam_update({p.data(), static_cast<std::size_t>(p.size())}, state,
                {grad.data(), static_cast<std::size_t>(grad.size())});
}

}  // namespace lpbf
