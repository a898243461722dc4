#include "pbp/world.hpp"

#include "pbp/errors.hpp"
#include "pbp/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace pbp {
namespace {

constexpr int kMaxSceneAttempts = 1000;

constexpr double kGoalXMin = 1.25;
constexpr double kGoalXMax = 2.5;
constexpr double kGoalYMin = -1.05;
constexpr double kGoalYMax = 1.05;

constexpr double kObstacleXMin = 0.5;
constexpr double kObstacleXMax = 2.5;
constexpr double kObstacleYMin = -1.5;
constexpr double kObstacleYMax = 1.5;

constexpr std::array<double, 3> kActivationLevels = {0.2, 0.4, 0.6};

// Draws points until `accept` holds, sharing one attempt budget per scene.
template <typename Accept>
Vec2 sample_point(SplitMix64& rng, int& attempts, double x0, double x1, double y0, double y1,
                  Accept accept) {
    while (attempts < kMaxSceneAttempts) {
        ++attempts;
        const double x = rng.uniform(x0, x1);
        const double y = rng.uniform(y0, y1);
        const Vec2 p(x, y);
        if (accept(p)) {
            return p;
        }
    }
    throw SceneGenerationFailure("no valid layout after " + std::to_string(kMaxSceneAttempts) +
                                 " attempts");
}

std::vector<std::size_t> draw_target_sequence(std::uint64_t seed, std::size_t goal_count,
                                              std::size_t entries) {
    SplitMix64 rng = substream(seed, Stream::TargetSwitch);
    std::vector<std::size_t> seq;
    seq.reserve(entries);
    for (std::size_t i = 0; i < entries; ++i) {
        if (i == 0 || goal_count < 2) {
            seq.push_back(i == 0 ? rng.below(goal_count) : seq.back());
            continue;
        }
        // Uniform among the goals other than the current target.
        std::size_t r = rng.below(goal_count - 1);
        if (r >= seq.back()) {
            ++r;
        }
        seq.push_back(r);
    }
    return seq;
}

}  // namespace

std::string to_string(Task task) {
    return task == Task::Reach ? "reach" : "obstacle";
}

Task parse_task(std::string_view text) {
    if (text == "reach") {
        return Task::Reach;
    }
    if (text == "obstacle") {
        return Task::ObstacleAvoidance;
    }
    throw ConfigInvalid("unknown task '" + std::string(text) + "'");
}

std::string to_string(Outcome outcome) {
    switch (outcome) {
        case Outcome::Running:
            return "running";
        case Outcome::Success:
            return "success";
        case Outcome::Timeout:
            return "timeout";
        case Outcome::Aborted:
            return "aborted";
    }
    return "unknown";
}

Outcome parse_outcome(std::string_view text) {
    if (text == "running") {
        return Outcome::Running;
    }
    if (text == "success") {
        return Outcome::Success;
    }
    if (text == "timeout") {
        return Outcome::Timeout;
    }
    if (text == "aborted") {
        return Outcome::Aborted;
    }
    throw LogFormatError("unknown outcome '" + std::string(text) + "'");
}

RobotState track_step(const RobotState& robot, const Vec2& reference, double rot_cmd, double dt,
                      const TrackerParams& params) {
    RobotState next = robot;
    const int n = std::max(1, params.substeps);
    const double h = dt / n;
    const double w = params.omega_n;
    for (int i = 0; i < n; ++i) {
        const Vec2 acc = w * w * (reference - next.y) - 2.0 * w * next.dy;
        next.dy = clamp_norm(next.dy + acc * h, params.v_max);
        next.y += next.dy * h;
    }
    next.heading = wrap_angle(robot.heading + rot_cmd * dt);
    return next;
}

Scene generate_scene(std::uint64_t seed, Task task, const WorldConfig& config) {
    Scene scene;
    scene.seed = seed;
    scene.task = task;
    scene.success_radius = config.success_radius;
    scene.start = Pose{Vec2::Zero(), 0.0};

    SplitMix64 layout = substream(seed, Stream::SceneLayout);
    int attempts = 0;

    if (task == Task::Reach) {
        const std::size_t count = 2 + layout.below(3);
        for (std::size_t k = 0; k < count; ++k) {
            scene.goals.push_back(sample_point(
                layout, attempts, kGoalXMin, kGoalXMax, kGoalYMin, kGoalYMax, [&](const Vec2& p) {
                    return std::all_of(scene.goals.begin(), scene.goals.end(), [&](const Vec2& g) {
                        return (g - p).norm() >= config.min_goal_separation;
                    });
                }));
        }
        scene.switch_schedule = {0.0, 0.30, 0.60};
    } else {
        scene.goals.push_back(sample_point(layout, attempts, kGoalXMin, kGoalXMax, kGoalYMin,
                                           kGoalYMax, [](const Vec2&) { return true; }));
        scene.switch_schedule = {0.0};

        SplitMix64 activation = substream(seed, Stream::ObstacleActivation);
        const double contact = config.robot_radius + config.obstacle_radius;
        for (int k = 0; k < 3; ++k) {
            Obstacle ob;
            ob.radius = config.obstacle_radius;
            ob.speed = config.obstacle_speed;
            ob.pos = sample_point(
                layout, attempts, kObstacleXMin, kObstacleXMax, kObstacleYMin, kObstacleYMax,
                [&](const Vec2& p) {
                    if ((p - scene.start.position).norm() < contact + 0.1) {
                        return false;
                    }
                    if ((p - scene.goals[0]).norm() < contact + 0.05) {
                        return false;
                    }
                    return std::all_of(
                        scene.obstacles.begin(), scene.obstacles.end(), [&](const Obstacle& o) {
                            return (o.pos - p).norm() >= 2.0 * config.obstacle_radius + 0.05;
                        });
                });
            ob.activation_progress = kActivationLevels[activation.below(kActivationLevels.size())];
            scene.obstacles.push_back(ob);
        }
    }
    scene.target_sequence =
        draw_target_sequence(seed, scene.goals.size(), scene.switch_schedule.size());
    scene.target_index = scene.target_sequence.front();
    return scene;
}

Obstacle obstacle_step(const Obstacle& ob, const RobotState& robot, const Vec2& goal,
                       double progress, double dt) {
    Obstacle next = ob;
    if (!next.activated && progress >= next.activation_progress) {
        next.activated = true;
    }
    if (next.activated) {
        const Vec2 midpoint = 0.5 * (robot.y + goal);
        const Vec2 d = midpoint - next.pos;
        const double dist = d.norm();
        const double reach = next.speed * dt;
        if (dist <= reach) {
            next.pos = midpoint;
        } else {
            next.pos += d * (reach / dist);
        }
    }
    return next;
}

bool check_collision(const RobotState& robot, std::span<const Obstacle> obstacles) {
    return std::any_of(obstacles.begin(), obstacles.end(), [&](const Obstacle& ob) {
        return (robot.y - ob.pos).norm() < robot.radius + ob.radius;
    });
}

double progress(const RobotState& robot, const Vec2& start, const Vec2& goal) {
    const Vec2 seg = goal - start;
    const double len2 = seg.squaredNorm();
    if (!(len2 > 0.0)) {
        throw DegenerateSegment("progress needs distinct start and goal");
    }
    return std::clamp((robot.y - start).dot(seg) / len2, 0.0, 1.0);
}

TrialRunner::TrialRunner(Scene scene, BlendMode mode, const WorldConfig& config,
                         std::string operator_name)
    : mode_(mode) {
    log_.scene = std::move(scene);
    log_.mode = mode;
    log_.config = config;
    log_.operator_name = std::move(operator_name);

    const Scene& s = log_.scene;
    if (s.goals.empty() || s.target_sequence.size() != s.switch_schedule.size()) {
        throw ConfigInvalid("scene needs goals and one target per schedule entry");
    }
    robot_.y = s.start.position;
    robot_.heading = s.start.heading;
    robot_.radius = config.robot_radius;
    bank_ = GoalBank::straight_lines(robot_.y, s.goals, config.dmp, 0.0);
    bank_.active_index = estimate_goal(robot_.y, robot_.heading, bank_);
    bank_.hysteresis_margin = config.hysteresis_margin;
    obstacles_ = s.obstacles;
    target_index_ = s.target_index;
}

Observation TrialRunner::observation() const {
    return Observation{log_.ticks.size(), robot_, log_.scene, target_index_, obstacles_, bank_,
                       mode_};
}

void TrialRunner::set_mode(const BlendMode& mode) {
    mode_ = mode;
}

const TickRecord& TrialRunner::tick(const OperatorCommand& cmd) {
    if (finished()) {
        throw std::logic_error("trial already finished");
    }
    const WorldConfig& cfg = log_.config;
    const Scene& scene = log_.scene;
    const double dt = cfg.dt;
    const OperatorCommand effective =
        mode_.kind == BlendKind::PbpNoUser ? OperatorCommand::zero() : cmd;

    Vec2 reference;
    switch (mode_.kind) {
        case BlendKind::Teleop:
            for (Dmp& dmp : bank_.dmps) {
                dmp.observe(robot_.y);
            }
            bank_.active_index = estimate_goal(robot_.y, robot_.heading, bank_);
            reference = robot_.y + effective.u;
            break;
        case BlendKind::ExplicitBlend: {
            const MultiGoalResult r = multi_goal_step(bank_, robot_.y, robot_.heading,
                                                      OperatorCommand::zero(), dt,
                                                      BlendMode::continuous());
            reference = effective.active()
                            ? explicit_blend(robot_.y + effective.u, r.reference, mode_.alpha)
                            : r.reference;
            break;
        }
        default:
            reference =
                multi_goal_step(bank_, robot_.y, robot_.heading, effective, dt, mode_).reference;
            break;
    }

    robot_ = track_step(robot_, reference, effective.rot, dt, cfg.tracker);

    const Vec2& target = scene.goals[target_index_];
    const double p = progress(robot_, scene.start.position, target);
    for (Obstacle& ob : obstacles_) {
        ob = obstacle_step(ob, robot_, target, p, dt);
    }
    const bool colliding = check_collision(robot_, obstacles_);

    if (schedule_index_ < scene.switch_schedule.size() &&
        p >= scene.switch_schedule[schedule_index_]) {
        target_index_ = scene.target_sequence[schedule_index_];
        ++schedule_index_;
    }

    TickRecord rec;
    rec.tick = log_.ticks.size();
    rec.robot = robot_;
    rec.cmd = effective;
    rec.reference = reference;
    rec.active_goal = bank_.active_index;
    rec.target_index = target_index_;
    rec.schedule_index = schedule_index_;
    rec.progress = p;
    rec.phase = bank_.active().state().phase;
    rec.colliding = colliding;
    rec.mode = mode_;
    rec.obstacles = obstacles_;
    log_.ticks.push_back(std::move(rec));

    const bool in_box = all_finite(robot_.y) && robot_.y.cwiseAbs().maxCoeff() <= cfg.safety_box;
    if (!in_box) {
        log_.outcome = Outcome::Aborted;
    } else if ((robot_.y - scene.goals[target_index_]).norm() < scene.success_radius) {
        log_.outcome = Outcome::Success;
    } else if (log_.ticks.size() >= cfg.max_ticks) {
        log_.outcome = Outcome::Timeout;
    }
    return log_.ticks.back();
}

TrialLog run_trial(const Scene& scene, const BlendMode& mode, const OperatorPolicy& policy,
                   std::size_t max_ticks, const WorldConfig& config, std::string operator_name) {
    WorldConfig cfg = config;
    cfg.max_ticks = max_ticks;
    TrialRunner runner(scene, mode, cfg, std::move(operator_name));
    while (!runner.finished()) {
        const OperatorCommand cmd = policy ? policy(runner.observation()) : OperatorCommand{};
        runner.tick(cmd);
    }
    return runner.log();
}

TrialLog replay_log(const TrialLog& log) {
    TrialRunner runner(log.scene, log.mode, log.config, log.operator_name);
    for (const TickRecord& rec : log.ticks) {
        if (runner.finished()) {
            break;
        }
        runner.set_mode(rec.mode);
        runner.tick(rec.cmd);
    }
    return runner.log();
}

}  // namespace pbp
