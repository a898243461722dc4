#include "pbp/errors.hpp"
#include "pbp/experiments.hpp"
#include "pbp/trial_log.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>

using namespace pbp;

namespace {

double min_distance(const std::vector<DemoSample>& demo, const Vec2& p) {
    double best = std::numeric_limits<double>::infinity();
    for (const DemoSample& s : demo) {
        best = std::min(best, (s.y - p).norm());
    }
    return best;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("alpha lists") {
    const auto grid = parse_alpha_list("0:1:0.1");
    REQUIRE(grid.size() == 11);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(grid[i] == doctest::Approx(i / 10.0).epsilon(1e-12));
    }
    CHECK(grid.back() == 1.0);
    CHECK(parse_alpha_list("0.2,0.5,1") == std::vector<double>{0.2, 0.5, 1.0});
    CHECK(parse_alpha_list("0.5") == std::vector<double>{0.5});
    CHECK(parse_alpha_list("0:0.5:0.25").size() == 3);
    CHECK_THROWS_AS(parse_alpha_list(""), ConfigInvalid);
    CHECK_THROWS_AS(parse_alpha_list("0:1"), ConfigInvalid);
    CHECK_THROWS_AS(parse_alpha_list("0:1:0"), ConfigInvalid);
    CHECK_THROWS_AS(parse_alpha_list("1:0:0.1"), ConfigInvalid);
    CHECK_THROWS_AS(parse_alpha_list("0.1,x"), ConfigInvalid);
    CHECK_THROWS_AS(parse_alpha_list("0,1.5"), ConfigInvalid);
}

TEST_CASE("sweep config validation") {
    SweepConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.alphas.size() == 11);
    cfg.alphas.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigInvalid);
    cfg = SweepConfig{};
    cfg.alphas = {0.5, -0.1};
    CHECK_THROWS_AS(cfg.validate(), ConfigInvalid);
    cfg = SweepConfig{};
    cfg.scenario = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigInvalid);
    cfg = SweepConfig{};
    cfg.trials_per_alpha = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigInvalid);
    CHECK_THROWS_AS(make_toy_scenario(0), ConfigInvalid);
    ToyGeometry bad;
    bad.duration = 0.0;
    CHECK_THROWS_AS(make_toy_scenario(1, bad), ConfigInvalid);
}

TEST_CASE("toy scenarios") {
    const ToyScenario s1 = make_toy_scenario(1);
    const ToyScenario s2 = make_toy_scenario(2);
    for (const ToyScenario* s : {&s1, &s2}) {
        CHECK(s->demo.front().y == s->start);
        CHECK((s->demo.back().y - s->goal).norm() < 1e-12);
        const double contact = s->original.radius + s->robot_radius;
        // The demonstration clears the obstacle it was recorded around...
        CHECK(min_distance(s->demo, s->original.pos) >= contact);
        // ...and the displaced copy blocks it.
        CHECK(min_distance(s->demo, s->displaced.pos) < contact);
        CHECK(s->displaced.pos.x() == s->original.pos.x());
        CHECK(s->displaced.speed == 0.0);
        for (std::size_t i = 1; i < s->demo.size(); ++i) {
            CHECK(s->demo[i].t > s->demo[i - 1].t);
        }
    }
    CHECK(s1.displacement == 0.15);
    CHECK(s2.displacement == 0.45);
    CHECK(min_distance(s2.demo, s2.displaced.pos) < min_distance(s1.demo, s1.displaced.pos));
}

TEST_CASE("sweep end points") {
    for (int id : {1, 2}) {
        SweepConfig cfg;
        cfg.scenario = id;
        cfg.alphas = {0.0, 1.0};
        const auto rows = arbitration_sweep(cfg);
        REQUIRE(rows.size() == 4);
        CHECK(rows[0].policy == "explicit");
        CHECK(rows[0].alpha == 0.0);
        CHECK(rows[0].collision_ratio == 0.0);
        CHECK(rows[1].alpha == 1.0);
        CHECK(rows[1].collision_ratio > 0.0);
        CHECK(rows[2].policy == "pbp-cont");
        CHECK(rows[3].policy == "pbp-alt");
        CHECK_FALSE(rows[2].alpha.has_value());

        // Full arbitration to the policy ignores the operator entirely.
        const SweepRow autonomy = autonomy_replay(make_toy_scenario(id), cfg);
        CHECK(autonomy.policy == "autonomy");
        CHECK(rows[1].collision_ratio == autonomy.collision_ratio);
        REQUIRE(rows[1].path.size() == autonomy.path.size());
        for (std::size_t i = 0; i < autonomy.path.size(); ++i) {
            CHECK(rows[1].path[i] == autonomy.path[i]);
        }
        CHECK(largest_collision_free_alpha(rows) == 0.0);
    }
}

TEST_CASE("sweep csv") {
    std::vector<SweepRow> rows(2);
    rows[0].policy = "explicit";
    rows[0].alpha = 0.3;
    rows[0].collision_ratio = 0.125;
    rows[0].ticks = 270;
    rows[0].final_error = 0.5;
    rows[1].policy = "pbp-alt";
    rows[1].ticks = 300;
    std::ostringstream out;
    write_sweep_csv(out, rows);
    CHECK(out.str() ==
          "policy,alpha,collision_ratio,ticks,final_error\n"
          "explicit,0.30,0.125000,270,0.500000\n"
          "pbp-alt,n/a,0.000000,300,0.000000\n");
    CHECK_FALSE(largest_collision_free_alpha({rows[1]}).has_value());
}

TEST_CASE("growth exponent") {
    std::vector<BenchRow> rows;
    for (std::size_t k : {1, 10, 50, 100}) {
        BenchRow r;
        r.goals = k;
        r.mean_ms = 0.003 * std::pow(static_cast<double>(k), 0.8);
        rows.push_back(r);
    }
    CHECK(growth_exponent(rows) == doctest::Approx(0.8).epsilon(1e-9));
    for (BenchRow& r : rows) {
        r.mean_ms = 0.01;
    }
    CHECK(std::fabs(growth_exponent(rows)) < 1e-9);
}

TEST_CASE("bench smoke") {
    const auto rows = scalability_bench({1, 20}, 200);
    REQUIRE(rows.size() == 2);
    for (const BenchRow& r : rows) {
        CHECK(r.ticks == 200);
        CHECK(r.mean_ms > 0.0);
        CHECK(r.p99_ms > 0.0);
        CHECK(r.max_ms >= r.p99_ms);
    }
    CHECK(rows[0].goals == 1);
    CHECK(rows[1].goals == 20);
    CHECK_THROWS_AS(scalability_bench({}, 10), ConfigInvalid);
    CHECK_THROWS_AS(scalability_bench({0}, 10), ConfigInvalid);
}

TEST_CASE("batches") {
    BatchConfig cfg;
    cfg.task = Task::ObstacleAvoidance;
    cfg.mode = BlendMode::alternated();
    cfg.operator_name = "avoidance";
    cfg.world.max_ticks = 900;
    cfg.seeds = {5, 1, 9, 3};

    SUBCASE("rows follow the seed order and parallel runs match") {
        const BatchResult serial = batch_trials(cfg);
        cfg.jobs = 3;
        const BatchResult parallel = batch_trials(cfg);
        REQUIRE(serial.rows.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(serial.rows[i].metrics.seed == cfg.seeds[i]);
            CHECK(serial.rows[i].error.empty());
            CHECK(serialize_log(serial.logs[i]) == serialize_log(parallel.logs[i]));
        }
        std::ostringstream a;
        std::ostringstream b;
        write_metrics_csv(a, serial.rows);
        write_metrics_csv(b, parallel.rows);
        CHECK(a.str() == b.str());
    }

    SUBCASE("csv rows re-derive from the written logs") {
        const auto dir = scratch_dir("pbp_batch_logs");
        cfg.log_dir = dir;
        const BatchResult res = batch_trials(cfg);
        for (const MetricsRow& row : res.rows) {
            const TrialLog log = read_log(trial_log_path(dir, row.metrics.seed));
            const TrialMetrics m = compute_metrics(log);
            CHECK(m.intervention_ratio == row.metrics.intervention_ratio);
            CHECK(m.collision_ratio == row.metrics.collision_ratio);
            CHECK(m.task_time == row.metrics.task_time);
            CHECK(m.outcome == row.metrics.outcome);
            CHECK(log.operator_name == "avoidance");
        }
        std::filesystem::remove_all(dir);
    }

    SUBCASE("replayed operators reproduce the source trial") {
        const auto dir = scratch_dir("pbp_batch_replay");
        cfg.seeds = {4};
        cfg.log_dir = dir;
        const BatchResult source = batch_trials(cfg);
        BatchConfig again = cfg;
        again.operator_name = "replay:" + trial_log_path(dir, 4).string();
        again.log_dir.reset();
        const BatchResult replayed = batch_trials(again);
        const TrialLog& a = source.logs[0];
        const TrialLog& b = replayed.logs[0];
        REQUIRE(a.ticks.size() == b.ticks.size());
        for (std::size_t i = 0; i < a.ticks.size(); ++i) {
            CHECK(a.ticks[i].robot.y == b.ticks[i].robot.y);
        }
        std::filesystem::remove_all(dir);
    }

    SUBCASE("trial errors stay in their row") {
        cfg.task = Task::Reach;
        cfg.operator_name = "goal-seek";
        cfg.world.min_goal_separation = 100.0;
        cfg.seeds = {1, 2};
        const BatchResult res = batch_trials(cfg);
        REQUIRE(res.rows.size() == 2);
        for (const MetricsRow& row : res.rows) {
            CHECK(row.error == "SceneGenerationFailure");
        }
        std::ostringstream out;
        write_metrics_csv(out, res.rows);
        CHECK(out.str().find("error:SceneGenerationFailure") != std::string::npos);
    }

    SUBCASE("unknown operators are a config error") {
        cfg.operator_name = "wander";
        CHECK_THROWS_AS(batch_trials(cfg), ConfigInvalid);
        cfg.operator_name = "replay:/nonexistent.jsonl";
        CHECK_THROWS_AS(batch_trials(cfg), LogFormatError);
    }
}
