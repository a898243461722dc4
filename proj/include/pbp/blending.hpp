#pragma once

#include "pbp/dmp.hpp"
#include "pbp/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pbp {

/// Per-axis command magnitude below which the operator counts as idle.
inline constexpr double kCommandDeadzone = 1e-3;

/// Planar operator input: `u` is a displacement of the reference per tick,
/// `rot` a heading rate.
struct OperatorCommand {
    Vec2 u = Vec2::Zero();
    double rot = 0.0;

    bool active() const {
        return std::max({std::fabs(u.x()), std::fabs(u.y()), std::fabs(rot)}) > kCommandDeadzone;
    }

    static OperatorCommand zero() { return {}; }
};

enum class BlendKind { Teleop, ExplicitBlend, PbpContinuous, PbpAlternated, PbpNoUser };

struct BlendMode {
    BlendKind kind = BlendKind::PbpAlternated;
    double alpha = 0.0;  // ExplicitBlend only

    static BlendMode teleop() { return {BlendKind::Teleop, 0.0}; }
    static BlendMode explicit_blend(double alpha);
    static BlendMode continuous() { return {BlendKind::PbpContinuous, 0.0}; }
    static BlendMode alternated() { return {BlendKind::PbpAlternated, 0.0}; }
    static BlendMode no_user() { return {BlendKind::PbpNoUser, 0.0}; }

    bool is_pbp() const {
        return kind == BlendKind::PbpContinuous || kind == BlendKind::PbpAlternated ||
               kind == BlendKind::PbpNoUser;
    }

    /// "teleop", "cont", "alt", "nouser" or "explicit:<alpha>". Throws InvalidMode.
    static BlendMode parse(std::string_view text);
    std::string to_string() const;

    friend bool operator==(const BlendMode&, const BlendMode&) = default;
};

/// (1 - alpha) * u + alpha * p. Throws AlphaOutOfRange.
Vec2 explicit_blend(const Vec2& u, const Vec2& p, double alpha);

/// Steps the primitive from the robot state and offsets the result by the
/// user displacement. The phase always advances.
Vec2 continuous_step(Dmp& dmp, const Vec2& robot_y, const OperatorCommand& cmd, double dt);

/// While the operator is active the primitive is phase-locked and the robot
/// follows the user; otherwise the primitive resumes from the robot state.
Vec2 alternated_step(Dmp& dmp, const Vec2& robot_y, const OperatorCommand& cmd, double dt);

inline constexpr double kDefaultHysteresis = 5.0 * kPi / 180.0;

/// One primitive per candidate goal, all stepped from the same measured
/// robot state.
struct GoalBank {
    std::vector<Dmp> dmps;
    std::vector<Vec2> goals;
    std::size_t active_index = 0;
    double hysteresis_margin = kDefaultHysteresis;

    /// Straight-line primitives from `robot_y` to every goal. Throws EmptyBank.
    static GoalBank straight_lines(const Vec2& robot_y, const std::vector<Vec2>& goals,
                                   const DmpParams& params,
                                   double hysteresis_margin = kDefaultHysteresis);

    std::size_t size() const { return goals.size(); }
    const Dmp& active() const { return dmps.at(active_index); }
};

/// |wrap(bearing(goal) - heading)|.
double alignment_angle(const Vec2& robot_y, double heading, const Vec2& goal);

/// Goal with the smallest alignment angle; the current estimate is kept
/// unless a challenger beats it by more than the hysteresis margin.
std::size_t estimate_goal(const Vec2& robot_y, double heading, const GoalBank& bank);

struct MultiGoalResult {
    Vec2 reference = Vec2::Zero();
    std::size_t active_index = 0;
};

/// Steps every primitive of the bank, updates the goal estimate and blends
/// the active primitive with the command according to `mode`. Throws EmptyBank,
/// InvalidMode.
MultiGoalResult multi_goal_step(GoalBank& bank, const Vec2& robot_y, double heading,
                                const OperatorCommand& cmd, double dt, const BlendMode& mode);

}  // namespace pbp
