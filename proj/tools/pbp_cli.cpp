// Headless experiment runner: arbitration sweep, scalability bench, seeded
// batches and log replay.

#include "pbp/errors.hpp"
#include "pbp/experiments.hpp"
#include "pbp/metrics.hpp"
#include "pbp/trial_log.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAssert = 3;
constexpr double kTickBudgetMs = 1000.0 / 30.0;
constexpr double kMaxGrowthExponent = 1.3;

// Writes to `path`, or stdout when it is empty or "-".
template <typename Write>
void emit(const std::string& path, Write write) {
    if (path.empty() || path == "-") {
        write(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out) {
        throw pbp::ConfigInvalid("cannot open '" + path + "' for writing");
    }
    write(out);
}

std::vector<std::size_t> parse_counts(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || v <= 0) {
            throw pbp::ConfigInvalid("goal counts must be positive integers, got '" + item + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) {
        throw pbp::ConfigInvalid("empty goal count list");
    }
    return out;
}

int run_sweep(const std::vector<double>& alphas, pbp::SweepConfig config, const std::string& out,
              bool check) {
    config.alphas = alphas;
    const std::vector<pbp::SweepRow> rows = pbp::arbitration_sweep(config);
    emit(out, [&](std::ostream& os) { pbp::write_sweep_csv(os, rows); });

    const auto best = pbp::largest_collision_free_alpha(rows);
    std::fprintf(stderr, "scenario %d: largest collision-free alpha = %s\n", config.scenario,
                 best ? std::to_string(*best).c_str() : "none");
    if (!check) {
        return 0;
    }
    bool ok = true;
    double prev = -1.0;
    for (const pbp::SweepRow& r : rows) {
        if (r.policy == "explicit") {
            if (r.collision_ratio < prev) {
                std::fprintf(stderr, "FAIL: collision ratio decreases at alpha %.2f\n", *r.alpha);
                ok = false;
            }
            prev = r.collision_ratio;
            if (*r.alpha == 0.0 && r.collision_ratio != 0.0) {
                std::fprintf(stderr, "FAIL: alpha 0 collides\n");
                ok = false;
            }
            if (*r.alpha == 1.0 && !(r.collision_ratio > 0.0)) {
                std::fprintf(stderr, "FAIL: alpha 1 is collision-free\n");
                ok = false;
            }
        } else if (r.collision_ratio != 0.0) {
            std::fprintf(stderr, "FAIL: %s collides\n", r.policy.c_str());
            ok = false;
        }
    }
    return ok ? 0 : kExitAssert;
}

int run_bench(const std::string& goals, std::size_t ticks, const std::string& out, bool check) {
    const std::vector<pbp::BenchRow> rows = pbp::scalability_bench(parse_counts(goals), ticks);
    emit(out, [&](std::ostream& os) { pbp::write_bench_csv(os, rows); });
    const double slope = pbp::growth_exponent(rows);
    std::fprintf(stderr, "growth exponent %.3f\n", slope);
    if (!check) {
        return 0;
    }
    bool ok = true;
    for (const pbp::BenchRow& r : rows) {
        if (!(r.p99_ms < kTickBudgetMs)) {
            std::fprintf(stderr, "FAIL: p99 %.3f ms at %zu goals\n", r.p99_ms, r.goals);
            ok = false;
        }
    }
    if (rows.size() >= 2 && slope > kMaxGrowthExponent) {
        std::fprintf(stderr, "FAIL: growth exponent %.3f above %.1f\n", slope, kMaxGrowthExponent);
        ok = false;
    }
    return ok ? 0 : kExitAssert;
}

struct BatchThresholds {
    double min_success = -1.0;
    double max_intervention = -1.0;
    double max_collision = -1.0;
};

int run_batch(pbp::BatchConfig config, std::size_t seed_count, std::uint64_t first_seed,
              const std::string& out_dir, const BatchThresholds& t) {
    for (std::size_t i = 0; i < seed_count; ++i) {
        config.seeds.push_back(first_seed + i);
    }
    if (!out_dir.empty()) {
        config.log_dir = out_dir;
    }
    const pbp::BatchResult result = pbp::batch_trials(config);

    auto write = [&](std::ostream& os) { pbp::write_metrics_csv(os, result.rows); };
    if (out_dir.empty()) {
        write(std::cout);
    } else {
        emit((std::filesystem::path(out_dir) / "metrics.csv").string(), write);
    }

    std::vector<pbp::TrialMetrics> ok_rows;
    for (const pbp::MetricsRow& r : result.rows) {
        if (r.error.empty()) {
            ok_rows.push_back(r.metrics);
        }
    }
    if (ok_rows.empty()) {
        std::fprintf(stderr, "every trial failed\n");
        return kExitConfig;
    }
    const pbp::BatchSummary s = pbp::summarize(ok_rows);
    const double success_rate = static_cast<double>(s.success) / static_cast<double>(seed_count);
    std::fprintf(stderr,
                 "%zu trials: success %.3f, intervention %.4f, collision %.4f, task time %.2f s, "
                 "errors %zu\n",
                 seed_count, success_rate, s.intervention_ratio.mean, s.collision_ratio.mean,
                 s.task_time.mean, result.rows.size() - ok_rows.size());

    bool ok = true;
    if (t.min_success >= 0.0 && success_rate < t.min_success) {
        std::fprintf(stderr, "FAIL: success rate %.3f below %.3f\n", success_rate, t.min_success);
        ok = false;
    }
    if (t.max_intervention >= 0.0 && !(s.intervention_ratio.mean < t.max_intervention)) {
        std::fprintf(stderr, "FAIL: mean intervention %.4f not below %.4f\n",
                     s.intervention_ratio.mean, t.max_intervention);
        ok = false;
    }
    if (t.max_collision >= 0.0 && !(s.collision_ratio.mean < t.max_collision)) {
        std::fprintf(stderr, "FAIL: mean collision %.4f not below %.4f\n", s.collision_ratio.mean,
                     t.max_collision);
        ok = false;
    }
    return ok ? 0 : kExitAssert;
}

int run_replay(const std::string& path) {
    const pbp::TrialLog log = pbp::read_log(path);
    const pbp::TrialLog again = pbp::replay_log(log);
    const bool same = pbp::serialize_log(again) == pbp::serialize_log(log);
    const pbp::TrialMetrics m = pbp::compute_metrics(again);
    std::printf("%s: %zu ticks, outcome %s, intervention %.4f, collision %.4f -> %s\n",
                path.c_str(), again.ticks.size(), pbp::to_string(again.outcome).c_str(),
                m.intervention_ratio, m.collision_ratio, same ? "identical" : "MISMATCH");
    return same ? 0 : kExitAssert;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shared-control experiments with movement primitives"};
    app.require_subcommand(1);

    std::string sweep_alphas = "0:1:0.1";
    std::string sweep_out;
    bool sweep_assert = false;
    pbp::SweepConfig sweep_config;
    std::size_t sweep_trials = 1;
    auto* sweep = app.add_subcommand("sweep", "Collision ratio of explicit blending over alpha");
    sweep->add_option("--alphas", sweep_alphas, "lo:hi:step or comma list")->capture_default_str();
    sweep->add_option("--scenario", sweep_config.scenario, "Toy scenario (1 or 2)")
        ->capture_default_str();
    sweep->add_option("--trials", sweep_trials, "Trials per alpha")->capture_default_str();
    sweep->add_option("--out", sweep_out, "CSV path (stdout by default)");
    sweep->add_flag("--assert", sweep_assert, "Exit 3 unless the sweep shape holds");

    std::string bench_goals = "1,10,50,100";
    std::size_t bench_ticks = 1000;
    std::string bench_out;
    bool bench_assert = false;
    auto* bench = app.add_subcommand("bench", "Per-tick time of many primitives");
    bench->add_option("--goals", bench_goals, "Comma list of goal counts")->capture_default_str();
    bench->add_option("--ticks", bench_ticks, "Ticks per goal count")->capture_default_str();
    bench->add_option("--out", bench_out, "CSV path (stdout by default)");
    bench->add_flag("--assert", bench_assert, "Exit 3 unless every p99 fits a 30 Hz tick");

    std::string batch_task = "reach";
    std::string batch_mode = "alt";
    std::string batch_op = "none";
    std::size_t batch_seeds = 50;
    std::uint64_t batch_first = 0;
    std::size_t batch_jobs = 1;
    std::string batch_out;
    BatchThresholds thresholds;
    auto* batch = app.add_subcommand("batch", "Seeded world trials with a scripted operator");
    batch->add_option("--task", batch_task, "reach or obstacle")->capture_default_str();
    batch->add_option("--mode", batch_mode, "teleop, alt, cont, nouser or explicit:<alpha>")
        ->capture_default_str();
    batch->add_option("--operator", batch_op, "avoidance, goal-seek, none or replay:<file>")
        ->capture_default_str();
    batch->add_option("--seeds", batch_seeds, "Number of seeds")->capture_default_str();
    batch->add_option("--first-seed", batch_first, "First seed")->capture_default_str();
    batch->add_option("--jobs", batch_jobs, "Worker threads")->capture_default_str();
    batch->add_option("--out", batch_out, "Directory for metrics.csv and trial logs");
    batch->add_option("--min-success", thresholds.min_success, "Exit 3 below this success rate");
    batch->add_option("--max-intervention", thresholds.max_intervention,
                      "Exit 3 unless mean intervention is below this");
    batch->add_option("--max-collision", thresholds.max_collision,
                      "Exit 3 unless mean collision ratio is below this");

    std::string replay_path;
    auto* replay = app.add_subcommand("replay", "Re-run a trial log and compare");
    replay->add_option("--log", replay_path, "Trial log (JSON Lines)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*sweep) {
            sweep_config.trials_per_alpha = sweep_trials;
            return run_sweep(pbp::parse_alpha_list(sweep_alphas), sweep_config, sweep_out,
                             sweep_assert);
        }
        if (*bench) {
            return run_bench(bench_goals, bench_ticks, bench_out, bench_assert);
        }
        if (*batch) {
            pbp::BatchConfig config;
            config.task = pbp::parse_task(batch_task);
            config.mode = pbp::BlendMode::parse(batch_mode);
            config.operator_name = batch_op;
            config.jobs = batch_jobs;
            if (batch_seeds == 0) {
                throw pbp::ConfigInvalid("--seeds must be positive");
            }
            return run_batch(config, batch_seeds, batch_first, batch_out, thresholds);
        }
        if (*replay) {
            return run_replay(replay_path);
        }
    } catch (const pbp::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return 0;
}
