#pragma once

#include "pbp/blending.hpp"
#include "pbp/dmp.hpp"
#include "pbp/types.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pbp {

enum class Task { Reach, ObstacleAvoidance };

std::string to_string(Task task);
/// "reach" or "obstacle". Throws ConfigInvalid.
Task parse_task(std::string_view text);

struct Pose {
    Vec2 position = Vec2::Zero();
    double heading = 0.0;

    friend bool operator==(const Pose&, const Pose&) = default;
};

struct RobotState {
    Vec2 y = Vec2::Zero();
    Vec2 dy = Vec2::Zero();
    double heading = 0.0;
    double radius = 0.25;
};

struct Obstacle {
    Vec2 pos = Vec2::Zero();
    double radius = 0.15;
    double speed = 0.35;
    bool activated = false;
    double activation_progress = 0.0;

    friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

/// Low-level servo standing in for the robot's position controller. It runs
/// `substeps` integration steps per control tick.
struct TrackerParams {
    double omega_n = 60.0;
    double v_max = 0.8;
    int substeps = 10;
};

struct WorldConfig {
    double dt = kControlDt;
    double robot_radius = 0.25;
    double obstacle_radius = 0.15;
    double obstacle_speed = 0.35;
    double success_radius = 0.05;
    double safety_box = 10.0;
    double min_goal_separation = 0.3;
    double hysteresis_margin = kDefaultHysteresis;
    std::size_t max_ticks = 3600;
    TrackerParams tracker;
    DmpParams dmp;
};

struct Scene {
    std::uint64_t seed = 0;
    Task task = Task::Reach;
    std::vector<Vec2> goals;
    std::size_t target_index = 0;
    std::vector<double> switch_schedule;
    /// Target assigned when the matching schedule entry fires; entry 0 is
    /// the initial target.
    std::vector<std::size_t> target_sequence;
    std::vector<Obstacle> obstacles;
    Pose start;
    double success_radius = 0.05;

    friend bool operator==(const Scene&, const Scene&) = default;
};

/// Critically damped tracking of `reference` with a velocity clamp:
/// ddy = omega_n^2 (reference - y) - 2 omega_n dy. The heading integrates
/// `rot_cmd`.
RobotState track_step(const RobotState& robot, const Vec2& reference, double rot_cmd, double dt,
                      const TrackerParams& params = {});

/// Deterministic in `seed`. Throws SceneGenerationFailure.
Scene generate_scene(std::uint64_t seed, Task task, const WorldConfig& config = {});

/// Activates once `progress` crosses the threshold, then heads for the
/// midpoint between the robot and the goal.
Obstacle obstacle_step(const Obstacle& ob, const RobotState& robot, const Vec2& goal,
                       double progress, double dt);

bool check_collision(const RobotState& robot, std::span<const Obstacle> obstacles);

/// Projection of the robot onto start->goal, clamped to [0, 1].
/// Throws DegenerateSegment.
double progress(const RobotState& robot, const Vec2& start, const Vec2& goal);

enum class Outcome { Running, Success, Timeout, Aborted };

std::string to_string(Outcome outcome);
Outcome parse_outcome(std::string_view text);

struct TickRecord {
    std::size_t tick = 0;
    RobotState robot;  // after the tick's tracking step
    OperatorCommand cmd;
    Vec2 reference = Vec2::Zero();
    std::size_t active_goal = 0;
    std::size_t target_index = 0;
    std::size_t schedule_index = 0;  // schedule entries consumed so far
    double progress = 0.0;
    double phase = 1.0;
    bool colliding = false;
    BlendMode mode;
    std::vector<Obstacle> obstacles;
};

inline constexpr int kLogVersion = 1;

struct TrialLog {
    int version = kLogVersion;
    Scene scene;
    BlendMode mode;
    WorldConfig config;
    std::string operator_name;
    std::vector<TickRecord> ticks;
    Outcome outcome = Outcome::Running;
};

/// What an operator policy sees before each tick.
struct Observation {
    std::size_t tick;
    const RobotState& robot;
    const Scene& scene;
    std::size_t target_index;
    std::span<const Obstacle> obstacles;
    const GoalBank& bank;
    BlendMode mode;
};

using OperatorPolicy = std::function<OperatorCommand(const Observation&)>;

/// One trial stepped a tick at a time. Both the batch runner and the live
/// session drive this class, so their logs share one format and replay path.
class TrialRunner {
public:
    TrialRunner(Scene scene, BlendMode mode, const WorldConfig& config,
                std::string operator_name = "custom");

    Observation observation() const;

    /// Advances one tick with `cmd` and returns the appended record.
    const TickRecord& tick(const OperatorCommand& cmd);

    void set_mode(const BlendMode& mode);
    const BlendMode& mode() const { return mode_; }

    bool finished() const { return log_.outcome != Outcome::Running; }
    Outcome outcome() const { return log_.outcome; }
    std::size_t ticks() const { return log_.ticks.size(); }

    const Scene& scene() const { return log_.scene; }
    const RobotState& robot() const { return robot_; }
    const GoalBank& bank() const { return bank_; }
    const std::vector<Obstacle>& obstacles() const { return obstacles_; }
    std::size_t target_index() const { return target_index_; }
    const WorldConfig& config() const { return log_.config; }

    const TrialLog& log() const { return log_; }

private:
    TrialLog log_;
    BlendMode mode_;
    RobotState robot_;
    GoalBank bank_;
    std::vector<Obstacle> obstacles_;
    std::size_t target_index_ = 0;
    std::size_t schedule_index_ = 0;
};

TrialLog run_trial(const Scene& scene, const BlendMode& mode, const OperatorPolicy& policy,
                   std::size_t max_ticks, const WorldConfig& config = {},
                   std::string operator_name = "custom");

/// Feeds the recorded commands (and per-tick modes) of `log` back through a
/// fresh runner built from the log header.
TrialLog replay_log(const TrialLog& log);

}  // namespace pbp
