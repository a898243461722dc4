#pragma once

#include "pbp/types.hpp"

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace pbp {

/// Gains and timing of a second-order goal attractor
///
///     tau * ddy = kp * (g - y) - kd * dy + f(phase)
///
/// driven by the first-order canonical system
///
///     dphase = -phase_decay * phase / tau.
struct DmpParams {
    double tau = 1.5;
    double kp = 25.0;
    double kd = 10.0;
    std::size_t n_basis = 0;
    double phase_decay = 1.0;
    double dt = kControlDt;
    /// Bound on the velocity estimate and on the integrated velocity.
    double v_max = 0.8;

    /// kd = 2 * sqrt(kp).
    static DmpParams critically_damped(double kp, double tau = 1.5);

    /// Throws InvalidParams.
    void validate() const;
};

inline constexpr double kPhaseFloor = 1e-6;

/// One explicit Euler step of the canonical system, floored at kPhaseFloor.
double canonical_step(double phase, const DmpParams& params);
double canonical_step(double phase, const DmpParams& params, double dt);

/// Normalized radial-basis forcing term, gated by the phase:
///
///     f(x) = x * s .* (sum_i psi_i(x) w_i) / (sum_i psi_i(x) + 1e-10),
///     psi_i(x) = exp(-h_i (x - c_i)^2).
struct ForcingFunction {
    std::vector<double> centers;
    std::vector<double> widths;
    std::vector<Vec2> weights;
    Vec2 amplitude_scale = Vec2::Ones();

    /// n zero-weight bases with centers at the phase values reached at
    /// evenly spaced times over [0, span_seconds].
    static ForcingFunction with_bases(std::size_t n, const DmpParams& params,
                                      double span_seconds);

    std::size_t size() const { return centers.size(); }

    /// Basis activations normalized to sum to one (zero when all vanish).
    void normalized_activations(double phase, std::span<double> out) const;
};

Vec2 forcing_value(const ForcingFunction& forcing, double phase);

struct DmpState {
    Vec2 y = Vec2::Zero();
    Vec2 dy = Vec2::Zero();
    /// Acceleration computed by the most recent step.
    Vec2 ddy = Vec2::Zero();
    double phase = 1.0;
};

/// A discrete movement primitive in the plane. Stepping couples the
/// primitive to the measured robot position, so user-induced deviations
/// become initial conditions the attractor recovers from.
class Dmp {
public:
    Dmp(const DmpParams& params, ForcingFunction forcing, const Vec2& y0, const Vec2& goal);

    const DmpParams& params() const { return params_; }
    const ForcingFunction& forcing() const { return forcing_; }
    const Vec2& start() const { return y0_; }
    const Vec2& goal() const { return goal_; }
    const DmpState& state() const { return state_; }

    void set_goal(const Vec2& goal);

    /// Restarts at y with zero velocity and phase 1.
    void reset(const Vec2& y);

    /// Integrates one step from the measured position and returns the new
    /// position as the tracking reference. When `measured_y` differs from the
    /// last reference, the velocity is re-estimated from the measured motion.
    Vec2 step(const Vec2& measured_y, double dt);
    Vec2 step(const Vec2& measured_y) { return step(measured_y, params_.dt); }

    /// Records a position without integrating or advancing the phase
    /// (used while the primitive is phase-locked).
    void observe(const Vec2& measured_y);

    /// Autonomous rollout of a copy: the reference is fed back as the
    /// measurement. Returns the positions after each step.
    std::vector<Vec2> rollout(std::size_t steps) const;

private:
    DmpParams params_;
    ForcingFunction forcing_;
    Vec2 y0_;
    Vec2 goal_;
    DmpState state_;
    Vec2 last_measured_;
};

/// Zero-forcing primitive from y0 to g.
Dmp straight_line_primitive(const Vec2& y0, const Vec2& goal, const DmpParams& params);

struct DemoSample {
    double t = 0.0;
    Vec2 y = Vec2::Zero();
};

/// Learns the forcing weights that reproduce a demonstration. The first and
/// last samples become the start and goal. Throws DegenerateDemo, FitFailure.
Dmp fit_from_demonstration(std::span<const DemoSample> demo, const DmpParams& params);

}  // namespace pbp
