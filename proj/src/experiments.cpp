#include "pbp/experiments.hpp"

#include "pbp/blending.hpp"
#include "pbp/errors.hpp"
#include "pbp/rng.hpp"
#include "pbp/trial_log.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <thread>

namespace pbp {
namespace {

constexpr double kToyArrival = 0.01;

double min_jerk(double s) {
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

bool colliding(const Vec2& y, double radius, const Obstacle& ob) {
    return (y - ob.pos).norm() < radius + ob.radius;
}

RobotState toy_robot(const ToyScenario& sc) {
    RobotState r;
    r.y = sc.start;
    r.radius = sc.robot_radius;
    return r;
}

Vec2 jittered_start(const ToyScenario& sc, std::size_t trial) {
    if (trial == 0) {
        return sc.start;
    }
    SplitMix64 rng = substream(trial, Stream::Jitter);
    return sc.start + Vec2(rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01));
}

// Time-indexed replay of the demonstration through the tracker. With an
// operator, the reference is the explicit blend of the operator's target and
// the demonstrated state whenever the operator acts.
SweepRow run_replay(const ToyScenario& sc, const SweepConfig& cfg, std::optional<double> alpha,
                    std::size_t trial) {
    const std::vector<DemoSample>& demo = sc.demo;
    const std::size_t steps = demo.size() + cfg.settle_ticks;
    const std::array<Obstacle, 1> obstacles = {sc.displaced};
    RobotState robot = toy_robot(sc);
    robot.y = jittered_start(sc, trial);
    robot.dy.setZero();

    SweepRow row;
    row.policy = alpha ? "explicit" : "autonomy";
    row.alpha = alpha;
    std::size_t hits = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        const Vec2 p = demo[std::min(t + 1, demo.size() - 1)].y;
        Vec2 reference = p;
        if (alpha) {
            const OperatorCommand cmd = avoidance_command(robot, obstacles, cfg.op);
            if (cmd.active()) {
                reference = explicit_blend(robot.y + cmd.u, p, *alpha);
            }
        }
        robot = track_step(robot, reference, 0.0, kControlDt, cfg.tracker);
        hits += colliding(robot.y, robot.radius, sc.displaced) ? 1 : 0;
        if (trial == 0) {
            row.path.push_back(robot.y);
        }
    }
    row.ticks = steps;
    row.collision_ratio = static_cast<double>(hits) / static_cast<double>(steps);
    row.final_error = (robot.y - sc.goal).norm();
    return row;
}

SweepRow run_pbp(const ToyScenario& sc, const SweepConfig& cfg, const Dmp& fitted,
                 BlendKind kind, std::size_t trial) {
    const std::array<Obstacle, 1> obstacles = {sc.displaced};
    Dmp dmp = fitted;
    RobotState robot = toy_robot(sc);
    robot.y = jittered_start(sc, trial);
    dmp.reset(robot.y);

    SweepRow row;
    row.policy = kind == BlendKind::PbpContinuous ? "pbp-cont" : "pbp-alt";
    std::size_t hits = 0;
    std::size_t t = 0;
    for (; t < cfg.max_pbp_ticks; ++t) {
        const OperatorCommand cmd = avoidance_command(robot, obstacles, cfg.op);
        const Vec2 reference = kind == BlendKind::PbpContinuous
                                   ? continuous_step(dmp, robot.y, cmd, kControlDt)
                                   : alternated_step(dmp, robot.y, cmd, kControlDt);
        robot = track_step(robot, reference, 0.0, kControlDt, cfg.tracker);
        hits += colliding(robot.y, robot.radius, sc.displaced) ? 1 : 0;
        if (trial == 0) {
            row.path.push_back(robot.y);
        }
        if ((robot.y - sc.goal).norm() < kToyArrival) {
            ++t;
            break;
        }
    }
    row.ticks = t;
    row.collision_ratio = static_cast<double>(hits) / static_cast<double>(t);
    row.final_error = (robot.y - sc.goal).norm();
    return row;
}

// Averages the collision ratio over trials; keeps the path of trial 0.
template <typename Run>
SweepRow averaged(std::size_t trials, Run run) {
    SweepRow first = run(0);
    double total = first.collision_ratio;
    for (std::size_t k = 1; k < trials; ++k) {
        total += run(k).collision_ratio;
    }
    first.collision_ratio = total / static_cast<double>(trials);
    return first;
}

void write_ms(std::ostream& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    out << buf;
}

}  // namespace

ToyScenario make_toy_scenario(int id, const ToyGeometry& g) {
    ToyScenario sc;
    sc.id = id;
    if (id == 1) {
        sc.displacement = 0.15;
    } else if (id == 2) {
        sc.displacement = 0.45;
    } else {
        throw ConfigInvalid("toy scenario must be 1 or 2");
    }
    if (!(g.duration > 0.0) || !(g.obstacle_radius > 0.0) || !(g.robot_radius > 0.0)) {
        throw ConfigInvalid("toy geometry needs positive duration and radii");
    }
    sc.robot_radius = g.robot_radius;
    auto path = [&](double s) {
        return Vec2(2.0 * s, g.amplitude * std::sin(2.0 * kPi * s));
    };
    const auto n = static_cast<std::size_t>(std::lround(g.duration / kControlDt));
    for (std::size_t i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) * kControlDt;
        sc.demo.push_back({t, path(min_jerk(static_cast<double>(i) / static_cast<double>(n)))});
    }
    // The demonstration bends over the obstacle; displacing it moves it
    // toward the path.
    sc.original.radius = g.obstacle_radius;
    sc.original.speed = 0.0;
    sc.original.pos = path(g.obstacle_s) -
                      Vec2(0.0, g.obstacle_radius + g.robot_radius + g.clearance);
    sc.displaced = sc.original;
    sc.displaced.pos.y() += sc.displacement;
    return sc;
}

SweepConfig::SweepConfig() {
    for (int i = 0; i <= 10; ++i) {
        alphas.push_back(i / 10.0);
    }
    dmp.n_basis = 40;
    dmp.v_max = tracker.v_max;
}

void SweepConfig::validate() const {
    if (alphas.empty()) {
        throw ConfigInvalid("sweep needs at least one alpha");
    }
    for (double a : alphas) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw ConfigInvalid("alpha values must lie in [0, 1]");
        }
    }
    if (scenario != 1 && scenario != 2) {
        throw ConfigInvalid("scenario must be 1 or 2");
    }
    if (trials_per_alpha == 0) {
        throw ConfigInvalid("trials_per_alpha must be positive");
    }
}

SweepRow autonomy_replay(const ToyScenario& scenario, const SweepConfig& config) {
    return run_replay(scenario, config, std::nullopt, 0);
}

std::vector<SweepRow> arbitration_sweep(const SweepConfig& config) {
    config.validate();
    const ToyScenario sc = make_toy_scenario(config.scenario, config.geometry);
    std::vector<SweepRow> rows;
    for (double alpha : config.alphas) {
        rows.push_back(averaged(config.trials_per_alpha,
                                [&](std::size_t k) { return run_replay(sc, config, alpha, k); }));
    }
    const Dmp fitted = fit_from_demonstration(sc.demo, config.dmp);
    for (BlendKind kind : {BlendKind::PbpContinuous, BlendKind::PbpAlternated}) {
        rows.push_back(averaged(config.trials_per_alpha, [&](std::size_t k) {
            return run_pbp(sc, config, fitted, kind, k);
        }));
    }
    return rows;
}

std::optional<double> largest_collision_free_alpha(const std::vector<SweepRow>& rows) {
    std::optional<double> best;
    for (const SweepRow& r : rows) {
        if (r.policy == "explicit" && r.alpha && r.collision_ratio == 0.0) {
            if (!best || *r.alpha > *best) {
                best = r.alpha;
            }
        }
    }
    return best;
}

std::vector<double> parse_alpha_list(const std::string& text) {
    std::vector<double> out;
    auto number = [&](const std::string& s) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size()) {
            throw ConfigInvalid("bad number '" + s + "' in alpha list");
        }
        return v;
    };
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ':')) {
            parts.push_back(item);
        }
        if (parts.size() != 3) {
            throw ConfigInvalid("alpha range must be lo:hi:step");
        }
        const double lo = number(parts[0]);
        const double hi = number(parts[1]);
        const double step = number(parts[2]);
        if (!(step > 0.0) || hi < lo) {
            throw ConfigInvalid("alpha range needs step > 0 and hi >= lo");
        }
        const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
        for (long i = 0; i <= n; ++i) {
            // Round to 12 decimals so 0:1:0.1 yields 0.3 rather than 0.30000000000000004.
            const double v = lo + static_cast<double>(i) * step;
            out.push_back(std::round(v * 1e12) / 1e12);
        }
    } else {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(number(item));
        }
    }
    if (out.empty()) {
        throw ConfigInvalid("empty alpha list");
    }
    for (double a : out) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw ConfigInvalid("alpha values must lie in [0, 1]");
        }
    }
    return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "policy,alpha,collision_ratio,ticks,final_error\n";
    for (const SweepRow& r : rows) {
        out << r.policy << ',';
        if (r.alpha) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.2f", *r.alpha);
            out << buf;
        } else {
            out << "n/a";
        }
        out << ',';
        write_ms(out, r.collision_ratio);
        out << ',' << r.ticks << ',';
        write_ms(out, r.final_error);
        out << '\n';
    }
}

std::vector<BenchRow> scalability_bench(const std::vector<std::size_t>& goal_counts,
                                        std::size_t ticks, std::uint64_t seed) {
    if (goal_counts.empty()) {
        throw ConfigInvalid("bench needs at least one goal count");
    }
    using clock = std::chrono::steady_clock;
    std::vector<BenchRow> rows;
    const WorldConfig world;
    for (std::size_t k : goal_counts) {
        if (k == 0) {
            throw ConfigInvalid("goal counts must be positive");
        }
        SplitMix64 rng = substream(seed + k, Stream::Benchmark);
        std::vector<Vec2> goals;
        for (std::size_t i = 0; i < k; ++i) {
            goals.emplace_back(rng.uniform(1.25, 2.5), rng.uniform(-1.05, 1.05));
        }
        RobotState robot;
        GoalBank bank = GoalBank::straight_lines(robot.y, goals, world.dmp);
        std::vector<double> samples;
        samples.reserve(ticks);
        for (std::size_t t = 0; t < ticks; ++t) {
            // Sweeping heading keeps the estimator switching between goals.
            OperatorCommand cmd;
            cmd.rot = 1.5 * std::sin(0.05 * static_cast<double>(t));
            const auto begin = clock::now();
            const MultiGoalResult r = multi_goal_step(bank, robot.y, robot.heading, cmd,
                                                      kControlDt, BlendMode::continuous());
            robot = track_step(robot, r.reference, cmd.rot, kControlDt, world.tracker);
            const auto end = clock::now();
            samples.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
            if ((robot.y - bank.goals[r.active_index]).norm() < world.success_radius) {
                // Restart so every tick keeps integrating a live motion.
                robot = RobotState{};
                for (std::size_t i = 0; i < bank.size(); ++i) {
                    bank.dmps[i].reset(robot.y);
                }
            }
        }
        BenchRow row;
        row.goals = k;
        row.ticks = ticks;
        if (!samples.empty()) {
            double sum = 0.0;
            for (double s : samples) {
                sum += s;
            }
            row.mean_ms = sum / static_cast<double>(samples.size());
            std::vector<double> sorted = samples;
            std::sort(sorted.begin(), sorted.end());
            const auto rank = static_cast<std::size_t>(
                std::ceil(0.99 * static_cast<double>(sorted.size())));
            row.p99_ms = sorted[std::max<std::size_t>(rank, 1) - 1];
            row.max_ms = sorted.back();
        }
        rows.push_back(row);
    }
    return rows;
}

double growth_exponent(const std::vector<BenchRow>& rows) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (const BenchRow& r : rows) {
        if (r.goals == 0 || !(r.mean_ms > 0.0)) {
            continue;
        }
        const double x = std::log(static_cast<double>(r.goals));
        const double y = std::log(r.mean_ms);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    if (n < 2 || denom <= 0.0) {
        return 0.0;
    }
    return (static_cast<double>(n) * sxy - sx * sy) / denom;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "goals,ticks,mean_ms,p99_ms,max_ms\n";
    for (const BenchRow& r : rows) {
        out << r.goals << ',' << r.ticks << ',';
        write_ms(out, r.mean_ms);
        out << ',';
        write_ms(out, r.p99_ms);
        out << ',';
        write_ms(out, r.max_ms);
        out << '\n';
    }
}

std::filesystem::path trial_log_path(const std::filesystem::path& dir, std::uint64_t seed) {
    return dir / ("trial-" + std::to_string(seed) + ".jsonl");
}

BatchResult batch_trials(const BatchConfig& config) {
    OperatorPolicy policy;
    std::string op_name = config.operator_name;
    constexpr std::string_view replay_prefix = "replay:";
    std::vector<OperatorCommand> replay;
    const bool is_replay = std::string_view(op_name).starts_with(replay_prefix);
    if (is_replay) {
        const TrialLog source = read_log(op_name.substr(replay_prefix.size()));
        for (const TickRecord& r : source.ticks) {
            replay.push_back(r.cmd);
        }
    } else {
        policy = make_named_policy(op_name, config.op);
    }
    if (config.log_dir) {
        std::filesystem::create_directories(*config.log_dir);
    }

    BatchResult result;
    result.rows.resize(config.seeds.size());
    result.logs.resize(config.seeds.size());

    auto run_one = [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        MetricsRow& row = result.rows[i];
        row.metrics.seed = seed;
        row.metrics.mode = config.mode.to_string();
        row.metrics.task = to_string(config.task);
        try {
            const Scene scene = generate_scene(seed, config.task, config.world);
            const OperatorPolicy p = is_replay ? make_replay_policy(replay) : policy;
            TrialLog log = run_trial(scene, config.mode, p, config.world.max_ticks, config.world,
                                     op_name);
            row.metrics = compute_metrics(log);
            if (config.log_dir) {
                write_log(log, trial_log_path(*config.log_dir, seed));
            }
            result.logs[i] = std::move(log);
        } catch (const Error& e) {
            row.error = e.kind();
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, config.seeds.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < config.seeds.size(); ++i) {
            run_one(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
                    run_one(i);
                }
            });
        }
        for (std::thread& t : workers) {
            t.join();
        }
    }
    return result;
}

}  // namespace pbp
