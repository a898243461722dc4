#include "pbp/dmp.hpp"

#include "pbp/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace pbp {
namespace {

constexpr double kActivationEpsilon = 1e-10;
constexpr double kAmplitudeFloor = 1e-3;

// Phase reached after `t` seconds of Euler steps of size dt, without floor.
double discrete_phase(double t, const DmpParams& params) {
    const double ratio = 1.0 - params.dt * params.phase_decay / params.tau;
    return std::pow(ratio, t / params.dt);
}

double floored_amplitude(double span) {
    if (std::fabs(span) >= kAmplitudeFloor) {
        return span;
    }
    return span < 0.0 ? -kAmplitudeFloor : kAmplitudeFloor;
}

}  // namespace

DmpParams DmpParams::critically_damped(double kp, double tau) {
    DmpParams p;
    p.kp = kp;
    p.kd = 2.0 * std::sqrt(kp);
    p.tau = tau;
    return p;
}

void DmpParams::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(tau) || !positive(kp) || !positive(kd)) {
        throw InvalidParams("tau, kp and kd must be positive");
    }
    if (!positive(phase_decay) || !positive(dt)) {
        throw InvalidParams("phase_decay and dt must be positive");
    }
    if (dt * phase_decay / tau >= 1.0) {
        throw InvalidParams("dt * phase_decay / tau must be < 1 for a decaying phase");
    }
    if (!(v_max > 0.0)) {
        throw InvalidParams("v_max must be positive");
    }
}

double canonical_step(double phase, const DmpParams& params) {
    return canonical_step(phase, params, params.dt);
}

double canonical_step(double phase, const DmpParams& params, double dt) {
    const double next = phase + dt * (-params.phase_decay * phase / params.tau);
    return std::max(next, kPhaseFloor);
}

ForcingFunction ForcingFunction::with_bases(std::size_t n, const DmpParams& params,
                                            double span_seconds) {
    ForcingFunction f;
    f.centers.resize(n);
    f.widths.resize(n);
    f.weights.assign(n, Vec2::Zero());
    for (std::size_t i = 0; i < n; ++i) {
        const double frac = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
        f.centers[i] = discrete_phase(frac * span_seconds, params);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double gap = 0.0;
        if (i + 1 < n) {
            gap = f.centers[i] - f.centers[i + 1];
        } else if (n > 1) {
            gap = f.centers[i - 1] - f.centers[i];
        }
        // Neighbouring bases cross at exp(-1).
        f.widths[i] = gap > 0.0 ? 1.0 / (gap * gap) : 1.0;
    }
    return f;
}

void ForcingFunction::normalized_activations(double phase, std::span<double> out) const {
    double total = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const double d = phase - centers[i];
        out[i] = std::exp(-widths[i] * d * d);
        total += out[i];
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
        out[i] /= total + kActivationEpsilon;
    }
}

Vec2 forcing_value(const ForcingFunction& forcing, double phase) {
    if (forcing.size() == 0) {
        return Vec2::Zero();
    }
    Vec2 weighted = Vec2::Zero();
    double total = 0.0;
    for (std::size_t i = 0; i < forcing.size(); ++i) {
        const double d = phase - forcing.centers[i];
        const double psi = std::exp(-forcing.widths[i] * d * d);
        weighted += psi * forcing.weights[i];
        total += psi;
    }
    return phase * forcing.amplitude_scale.cwiseProduct(weighted) / (total + kActivationEpsilon);
}

Dmp::Dmp(const DmpParams& params, ForcingFunction forcing, const Vec2& y0, const Vec2& goal)
    : params_(params), forcing_(std::move(forcing)), y0_(y0), goal_(goal), last_measured_(y0) {
    params_.validate();
    if (!all_finite(y0) || !all_finite(goal)) {
        throw InvalidParams("start and goal must be finite");
    }
    if (forcing_.widths.size() != forcing_.size() || forcing_.weights.size() != forcing_.size()) {
        throw InvalidParams("forcing function arrays differ in length");
    }
    state_.y = y0;
}

void Dmp::set_goal(const Vec2& goal) {
    if (!all_finite(goal)) {
        throw InvalidParams("goal must be finite");
    }
    goal_ = goal;
}

void Dmp::reset(const Vec2& y) {
    state_ = DmpState{};
    state_.y = y;
    last_measured_ = y;
}

Vec2 Dmp::step(const Vec2& measured_y, double dt) {
    if (measured_y != state_.y) {
        state_.dy = clamp_norm((measured_y - last_measured_) / dt, params_.v_max);
    }
    last_measured_ = measured_y;
    state_.y = measured_y;

    const Vec2 f = forcing_value(forcing_, state_.phase);
    state_.ddy = (params_.kp * (goal_ - state_.y) - params_.kd * state_.dy + f) / params_.tau;
    state_.dy = clamp_norm(state_.dy + state_.ddy * dt, params_.v_max);
    state_.y = state_.y + state_.dy * dt;
    state_.phase = canonical_step(state_.phase, params_, dt);
    return state_.y;
}

void Dmp::observe(const Vec2& measured_y) {
    last_measured_ = measured_y;
}

std::vector<Vec2> Dmp::rollout(std::size_t steps) const {
    Dmp copy = *this;
    std::vector<Vec2> out;
    out.reserve(steps);
    Vec2 y = copy.state_.y;
    for (std::size_t i = 0; i < steps; ++i) {
        y = copy.step(y);
        out.push_back(y);
    }
    return out;
}

Dmp straight_line_primitive(const Vec2& y0, const Vec2& goal, const DmpParams& params) {
    DmpParams p = params;
    p.n_basis = 0;
    return Dmp(p, ForcingFunction{}, y0, goal);
}

Dmp fit_from_demonstration(std::span<const DemoSample> demo, const DmpParams& params) {
    params.validate();
    const std::size_t n = demo.size();
    if (n < 3) {
        throw DegenerateDemo("demonstration needs at least 3 samples, got " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!all_finite(demo[i].y) || !std::isfinite(demo[i].t)) {
            throw DegenerateDemo("demonstration contains non-finite values");
        }
        if (i > 0 && !(demo[i].t > demo[i - 1].t)) {
            throw DegenerateDemo("demonstration times must be strictly increasing");
        }
    }
    const double t0 = demo.front().t;
    const double duration = demo.back().t - t0;
    if (!(duration > 0.0)) {
        throw DegenerateDemo("demonstration spans zero duration");
    }

    // Differences that match the integrator: the velocity is the backward
    // difference the step produces, the acceleration the forward difference
    // of that velocity. The primitive starts at rest.
    std::vector<Vec2> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = demo[i].y;
    }
    std::vector<Vec2> dy(n, Vec2::Zero());
    for (std::size_t i = 1; i < n; ++i) {
        dy[i] = (y[i] - y[i - 1]) / (demo[i].t - demo[i - 1].t);
    }
    std::vector<Vec2> ddy(n, Vec2::Zero());
    for (std::size_t i = 0; i + 1 < n; ++i) {
        ddy[i] = (dy[i + 1] - dy[i]) / (demo[i + 1].t - demo[i].t);
    }
    ddy[n - 1] = ddy[n - 2];

    const Vec2 y0 = y.front();
    const Vec2 goal = y.back();
    ForcingFunction forcing = ForcingFunction::with_bases(params.n_basis, params, duration);
    forcing.amplitude_scale = Vec2(floored_amplitude(goal.x() - y0.x()),
                                   floored_amplitude(goal.y() - y0.y()));

    const std::size_t m = params.n_basis;
    if (m > 0) {
        Eigen::MatrixXd design(n, m);
        Eigen::MatrixXd target(n, 2);
        std::vector<double> act(m);
        for (std::size_t j = 0; j < n; ++j) {
            const double phase = std::max(discrete_phase(demo[j].t - t0, params), kPhaseFloor);
            forcing.normalized_activations(phase, act);
            for (std::size_t i = 0; i < m; ++i) {
                design(j, i) = phase * act[i];
            }
            const Vec2 f = params.tau * ddy[j] - params.kp * (goal - y[j]) + params.kd * dy[j];
            target(j, 0) = f.x() / forcing.amplitude_scale.x();
            target(j, 1) = f.y() / forcing.amplitude_scale.y();
        }
        Eigen::MatrixXd gram = design.transpose() * design;
        const double trace = gram.trace();
        if (!(trace > 0.0) || !std::isfinite(trace)) {
            throw FitFailure("basis activations vanish over the demonstration");
        }
        gram.diagonal().array() += 1e-8 * trace / static_cast<double>(m);
        const Eigen::MatrixXd rhs = design.transpose() * target;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        if (ldlt.info() != Eigen::Success) {
            throw FitFailure("regression system could not be factorized");
        }
        const Eigen::MatrixXd weights = ldlt.solve(rhs);
        if (!weights.allFinite() || (gram * weights - rhs).norm() > 1e-6 * (rhs.norm() + 1e-12)) {
            throw FitFailure("regression system is singular");
        }
        for (std::size_t i = 0; i < m; ++i) {
            forcing.weights[i] = Vec2(weights(i, 0), weights(i, 1));
        }
    }
    return Dmp(params, std::move(forcing), y0, goal);
}

}  // namespace pbp
