#include "pbp/virtual_operator.hpp"

#include "pbp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace pbp {
namespace {

double sign(double v) {
    return static_cast<double>((v > 0.0) - (v < 0.0));
}

}  // namespace

OperatorCommand avoidance_command(const RobotState& robot, std::span<const Obstacle> obstacles,
                                  const VirtualOperatorParams& params) {
    const Obstacle* nearest = nullptr;
    double clearance = std::numeric_limits<double>::infinity();
    for (const Obstacle& ob : obstacles) {
        const double d = (robot.y - ob.pos).norm() - (robot.radius + ob.radius);
        if (d < clearance) {
            clearance = d;
            nearest = &ob;
        }
    }
    OperatorCommand cmd;
    if (nearest != nullptr && clearance < params.trigger_distance) {
        const Vec2 away = robot.y - nearest->pos;
        const double step = params.magnitude * params.command_gain;
        cmd.u = Vec2(sign(away.x()) * step, sign(away.y()) * step);
    }
    return cmd;
}

OperatorCommand goal_seek_command(const RobotState& robot, const Vec2& desired_goal,
                                  std::size_t current_estimate, const GoalBank& bank,
                                  const VirtualOperatorParams& params) {
    const auto it = std::find(bank.goals.begin(), bank.goals.end(), desired_goal);
    if (it == bank.goals.end()) {
        throw ConfigInvalid("desired goal is not part of the goal bank");
    }
    const auto desired = static_cast<std::size_t>(it - bank.goals.begin());
    OperatorCommand cmd;
    if (desired == current_estimate) {
        return cmd;
    }
    const Vec2 d = desired_goal - robot.y;
    const double error = wrap_angle(std::atan2(d.y(), d.x()) - robot.heading);
    cmd.rot = std::clamp(params.heading_gain * error, -params.max_turn_rate, params.max_turn_rate);
    return cmd;
}

OperatorPolicy make_avoidance_policy(const VirtualOperatorParams& params) {
    return [params](const Observation& obs) {
        return avoidance_command(obs.robot, obs.obstacles, params);
    };
}

OperatorPolicy make_goal_seek_policy(const VirtualOperatorParams& params) {
    return [params](const Observation& obs) {
        return goal_seek_command(obs.robot, obs.scene.goals.at(obs.target_index),
                                 obs.bank.active_index, obs.bank, params);
    };
}

OperatorPolicy make_idle_policy() {
    return [](const Observation&) { return OperatorCommand{}; };
}

OperatorPolicy make_replay_policy(std::vector<OperatorCommand> commands) {
    auto cmds = std::make_shared<const std::vector<OperatorCommand>>(std::move(commands));
    return [cmds](const Observation& obs) {
        return obs.tick < cmds->size() ? (*cmds)[obs.tick] : OperatorCommand{};
    };
}

OperatorPolicy make_named_policy(std::string_view name, const VirtualOperatorParams& params) {
    if (name == "avoidance") {
        return make_avoidance_policy(params);
    }
    if (name == "goal-seek") {
        return make_goal_seek_policy(params);
    }
    if (name == "none") {
        return make_idle_policy();
    }
    throw ConfigInvalid("unknown operator '" + std::string(name) + "'");
}

}  // namespace pbp
