#include "pbp/blending.hpp"

#include "pbp/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

namespace pbp {

BlendMode BlendMode::explicit_blend(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw AlphaOutOfRange("alpha must lie in [0, 1]");
    }
    return {BlendKind::ExplicitBlend, alpha};
}

BlendMode BlendMode::parse(std::string_view text) {
    if (text == "teleop") {
        return teleop();
    }
    if (text == "cont") {
        return continuous();
    }
    if (text == "alt") {
        return alternated();
    }
    if (text == "nouser") {
        return no_user();
    }
    constexpr std::string_view prefix = "explicit:";
    if (text.starts_with(prefix)) {
        const std::string number(text.substr(prefix.size()));
        char* end = nullptr;
        const double alpha = std::strtod(number.c_str(), &end);
        if (number.empty() || end != number.c_str() + number.size()) {
            throw InvalidMode("bad alpha in mode '" + std::string(text) + "'");
        }
        if (!(alpha >= 0.0 && alpha <= 1.0)) {
            throw InvalidMode("alpha out of [0, 1] in mode '" + std::string(text) + "'");
        }
        return {BlendKind::ExplicitBlend, alpha};
    }
    throw InvalidMode("unknown mode '" + std::string(text) + "'");
}

std::string BlendMode::to_string() const {
    switch (kind) {
        case BlendKind::Teleop:
            return "teleop";
        case BlendKind::PbpContinuous:
            return "cont";
        case BlendKind::PbpAlternated:
            return "alt";
        case BlendKind::PbpNoUser:
            return "nouser";
        case BlendKind::ExplicitBlend: {
            char buf[64];
            const auto res = std::to_chars(buf, buf + sizeof(buf), alpha);
            return "explicit:" + std::string(buf, res.ptr);
        }
    }
    return "unknown";
}

Vec2 explicit_blend(const Vec2& u, const Vec2& p, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw AlphaOutOfRange("alpha must lie in [0, 1]");
    }
    return u + alpha * (p - u);
}

Vec2 continuous_step(Dmp& dmp, const Vec2& robot_y, const OperatorCommand& cmd, double dt) {
    return dmp.step(robot_y, dt) + cmd.u;
}

Vec2 alternated_step(Dmp& dmp, const Vec2& robot_y, const OperatorCommand& cmd, double dt) {
    if (cmd.active()) {
        dmp.observe(robot_y);
        return robot_y + cmd.u;
    }
    return dmp.step(robot_y, dt);
}

GoalBank GoalBank::straight_lines(const Vec2& robot_y, const std::vector<Vec2>& goals,
                                  const DmpParams& params, double hysteresis_margin) {
    if (goals.empty()) {
        throw EmptyBank("goal bank needs at least one goal");
    }
    GoalBank bank;
    bank.goals = goals;
    bank.hysteresis_margin = hysteresis_margin;
    bank.dmps.reserve(goals.size());
    for (const Vec2& g : goals) {
        bank.dmps.push_back(straight_line_primitive(robot_y, g, params));
    }
    return bank;
}

double alignment_angle(const Vec2& robot_y, double heading, const Vec2& goal) {
    const Vec2 d = goal - robot_y;
    return std::fabs(wrap_angle(std::atan2(d.y(), d.x()) - heading));
}

std::size_t estimate_goal(const Vec2& robot_y, double heading, const GoalBank& bank) {
    if (bank.goals.empty()) {
        throw EmptyBank("goal bank is empty");
    }
    std::size_t best = 0;
    double best_angle = alignment_angle(robot_y, heading, bank.goals[0]);
    for (std::size_t k = 1; k < bank.goals.size(); ++k) {
        const double a = alignment_angle(robot_y, heading, bank.goals[k]);
        if (a < best_angle) {
            best = k;
            best_angle = a;
        }
    }
    const std::size_t current = bank.active_index < bank.goals.size() ? bank.active_index : 0;
    if (best == current) {
        return current;
    }
    const double current_angle = alignment_angle(robot_y, heading, bank.goals[current]);
    return best_angle < current_angle - bank.hysteresis_margin ? best : current;
}

MultiGoalResult multi_goal_step(GoalBank& bank, const Vec2& robot_y, double heading,
                                const OperatorCommand& cmd, double dt, const BlendMode& mode) {
    if (bank.dmps.empty() || bank.dmps.size() != bank.goals.size()) {
        throw EmptyBank("goal bank is empty or inconsistent");
    }
    if (!mode.is_pbp()) {
        throw InvalidMode("multi-goal stepping needs a PBP mode, got " + mode.to_string());
    }
    const OperatorCommand effective =
        mode.kind == BlendKind::PbpNoUser ? OperatorCommand::zero() : cmd;
    const bool locked = mode.kind == BlendKind::PbpAlternated && effective.active();

    // Every hypothesis integrates from the same measured state, so switching
    // the active one never jumps the reference.
    for (Dmp& dmp : bank.dmps) {
        if (locked) {
            dmp.observe(robot_y);
        } else {
            dmp.step(robot_y, dt);
        }
    }
    bank.active_index = estimate_goal(robot_y, heading, bank);

    MultiGoalResult result;
    result.active_index = bank.active_index;
    if (locked) {
        result.reference = robot_y + effective.u;
    } else {
        result.reference = bank.dmps[bank.active_index].state().y + effective.u;
    }
    return result;
}

}  // namespace pbp
