#pragma once

#include "pbp/world.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pbp {

struct TrialMetrics {
    std::uint64_t seed = 0;
    std::string mode;
    std::string task;
    double intervention_ratio = 0.0;
    double task_time = 0.0;
    double collision_ratio = 0.0;
    Outcome outcome = Outcome::Running;
};

/// Fraction of ticks with an active operator command. Throws EmptyLog.
double intervention_ratio(const TrialLog& log);

/// Fraction of ticks in collision. Throws EmptyLog.
double collision_ratio(const TrialLog& log);

TrialMetrics compute_metrics(const TrialLog& log);

/// Trial counts per collision-ratio bin [k w, (k+1) w); the last bin is
/// closed at 1. Throws ConfigInvalid unless bin_width is in (0, 1].
std::vector<std::size_t> collision_histogram(std::span<const TrialMetrics> metrics,
                                             double bin_width);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

struct BatchSummary {
    std::size_t trials = 0;
    MeanStd intervention_ratio;
    MeanStd task_time;
    MeanStd collision_ratio;
    std::size_t success = 0;
    std::size_t timeout = 0;
    std::size_t aborted = 0;
    std::size_t errors = 0;
};

/// Throws EmptyBatch.
BatchSummary summarize(std::span<const TrialMetrics> batch);

/// Welford mean and population deviation.
MeanStd mean_std(std::span<const double> values);

/// One row per trial, then a `# summary` row with mean/std per metric.
/// Rows with an error carry the error kind in the outcome column.
struct MetricsRow {
    TrialMetrics metrics;
    std::string error;  // empty when the trial ran
};

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

}  // namespace pbp
