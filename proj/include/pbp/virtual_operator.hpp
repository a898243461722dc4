#pragma once

#include "pbp/blending.hpp"
#include "pbp/world.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pbp {

struct VirtualOperatorParams {
    /// Clearance below which the avoidance policy reacts (m).
    double trigger_distance = 0.2;
    double magnitude = 1.0;
    /// Reference displacement per tick for a unit command (m).
    double command_gain = 0.02;
    /// Goal seeking: proportional heading gain (1/s) and rate limit (rad/s).
    double heading_gain = 6.0;
    double max_turn_rate = 3.0;
};

/// Unit sign command directly away from the nearest obstacle whose clearance
/// is below the trigger distance; zero otherwise.
OperatorCommand avoidance_command(const RobotState& robot, std::span<const Obstacle> obstacles,
                                  const VirtualOperatorParams& params = {});

/// Turns the heading toward `desired_goal` until the estimator selects it.
/// Never commands translation. Throws ConfigInvalid if the goal is not in
/// the bank.
OperatorCommand goal_seek_command(const RobotState& robot, const Vec2& desired_goal,
                                  std::size_t current_estimate, const GoalBank& bank,
                                  const VirtualOperatorParams& params = {});

OperatorPolicy make_avoidance_policy(const VirtualOperatorParams& params = {});
OperatorPolicy make_goal_seek_policy(const VirtualOperatorParams& params = {});
OperatorPolicy make_idle_policy();
/// Plays back `commands` in order, then idles.
OperatorPolicy make_replay_policy(std::vector<OperatorCommand> commands);

/// "avoidance", "goal-seek" or "none". Throws ConfigInvalid.
OperatorPolicy make_named_policy(std::string_view name, const VirtualOperatorParams& params = {});

}  // namespace pbp
