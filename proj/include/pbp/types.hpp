#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>

namespace pbp {

using Vec2 = Eigen::Vector2d;

/// Period of the shared-control loop (30 Hz).
inline constexpr double kControlDt = 1.0 / 30.0;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * kPi);
    if (a <= -kPi) {
        a += 2.0 * kPi;
    }
    return a;
}

inline bool all_finite(const Vec2& v) {
    return std::isfinite(v.x()) && std::isfinite(v.y());
}

/// Scales v so that |v| <= limit, preserving direction.
inline Vec2 clamp_norm(const Vec2& v, double limit) {
    const double n = v.norm();
    if (n > limit && n > 0.0) {
        return v * (limit / n);
    }
    return v;
}

}  // namespace pbp
