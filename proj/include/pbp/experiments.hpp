#pragma once

#include "pbp/dmp.hpp"
#include "pbp/metrics.hpp"
#include "pbp/virtual_operator.hpp"
#include "pbp/world.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pbp {

// ---------------------------------------------------------------------------
// Arbitration sweep on the toy obstacle scenario.

/// S-shaped demonstration from (0,0) to (2,0) that clears an obstacle, plus a
/// test-time copy of that obstacle pushed into the demonstrated path.
struct ToyScenario {
    int id = 1;
    std::vector<DemoSample> demo;
    Obstacle original;
    Obstacle displaced;
    double displacement = 0.0;
    double robot_radius = 0.1;
    Vec2 start = Vec2::Zero();
    Vec2 goal = Vec2(2.0, 0.0);
};

/// Shape of the toy scene. The demonstration is y = amplitude * sin(2 pi s),
/// x = 2 s, with s following a minimum-jerk profile over `duration`; the
/// obstacle sits under the first hump, `clearance` short of contact.
struct ToyGeometry {
    double amplitude = 0.6;
    double duration = 6.0;
    double obstacle_radius = 0.2;
    double robot_radius = 0.1;
    double clearance = 0.1;
    double obstacle_s = 0.25;
};

/// Scenario 1 pushes the obstacle 0.15 m into the path, scenario 2 0.45 m.
/// Throws ConfigInvalid for other ids.
ToyScenario make_toy_scenario(int id, const ToyGeometry& geometry = {});

struct SweepConfig {
    std::vector<double> alphas;
    int scenario = 1;
    ToyGeometry geometry;
    std::size_t trials_per_alpha = 1;
    VirtualOperatorParams op;
    TrackerParams tracker;
    DmpParams dmp;
    /// Extra ticks after the demonstration ends for the replayed rows.
    std::size_t settle_ticks = 90;
    std::size_t max_pbp_ticks = 900;

    SweepConfig();
    /// Throws ConfigInvalid.
    void validate() const;
};

struct SweepRow {
    std::string policy;  // "explicit", "pbp-cont", "pbp-alt", "autonomy"
    std::optional<double> alpha;
    double collision_ratio = 0.0;
    std::size_t ticks = 0;
    double final_error = 0.0;
    std::vector<Vec2> path;  // robot positions of the first trial
};

/// Explicit blending for every alpha, then both PBP variants.
std::vector<SweepRow> arbitration_sweep(const SweepConfig& config);

/// Replays the demonstration with no operator.
SweepRow autonomy_replay(const ToyScenario& scenario, const SweepConfig& config);

/// Highest alpha whose explicit row is collision-free, if any.
std::optional<double> largest_collision_free_alpha(const std::vector<SweepRow>& rows);

/// "lo:hi:step" or a comma list. Throws ConfigInvalid.
std::vector<double> parse_alpha_list(const std::string& text);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Per-tick cost of stepping many primitives.

struct BenchRow {
    std::size_t goals = 0;
    std::size_t ticks = 0;
    double mean_ms = 0.0;
    double p99_ms = 0.0;
    double max_ms = 0.0;
};

/// Times multi_goal_step + track_step per tick with a steady_clock.
std::vector<BenchRow> scalability_bench(const std::vector<std::size_t>& goal_counts,
                                        std::size_t ticks, std::uint64_t seed = 7);

/// Log-log slope of mean tick time against goal count.
double growth_exponent(const std::vector<BenchRow>& rows);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

// ---------------------------------------------------------------------------
// Seeded batches of world trials.

struct BatchConfig {
    Task task = Task::Reach;
    BlendMode mode = BlendMode::alternated();
    std::vector<std::uint64_t> seeds;
    /// "avoidance", "goal-seek", "none" or "replay:<file>".
    std::string operator_name = "none";
    WorldConfig world;
    VirtualOperatorParams op;
    std::size_t jobs = 1;
    /// When set, each trial log is written as trial-<seed>.jsonl.
    std::optional<std::filesystem::path> log_dir;
};

struct BatchResult {
    std::vector<MetricsRow> rows;  // ordered by seed position in the config
    std::vector<TrialLog> logs;    // empty log for rows that errored
};

BatchResult batch_trials(const BatchConfig& config);

std::filesystem::path trial_log_path(const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace pbp
