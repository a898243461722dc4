#include "pbp/metrics.hpp"

#include "pbp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace pbp {
namespace {

template <typename Pred>
double tick_fraction(const TrialLog& log, Pred pred) {
    if (log.ticks.empty()) {
        throw EmptyLog("trial log has no ticks");
    }
    const auto n = std::count_if(log.ticks.begin(), log.ticks.end(), pred);
    return static_cast<double>(n) / static_cast<double>(log.ticks.size());
}

void write_number(std::ostream& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    out << buf;
}

}  // namespace

double intervention_ratio(const TrialLog& log) {
    return tick_fraction(log, [](const TickRecord& r) { return r.cmd.active(); });
}

double collision_ratio(const TrialLog& log) {
    return tick_fraction(log, [](const TickRecord& r) { return r.colliding; });
}

TrialMetrics compute_metrics(const TrialLog& log) {
    TrialMetrics m;
    m.seed = log.scene.seed;
    m.mode = log.mode.to_string();
    m.task = to_string(log.scene.task);
    m.intervention_ratio = intervention_ratio(log);
    m.collision_ratio = collision_ratio(log);
    m.task_time = static_cast<double>(log.ticks.size()) * log.config.dt;
    m.outcome = log.outcome;
    return m;
}

std::vector<std::size_t> collision_histogram(std::span<const TrialMetrics> metrics,
                                             double bin_width) {
    if (!(bin_width > 0.0 && bin_width <= 1.0)) {
        throw ConfigInvalid("bin width must lie in (0, 1]");
    }
    // Tolerate round-off in 1 / bin_width so that e.g. 0.2 gives 5 bins.
    const auto bins = static_cast<std::size_t>(std::ceil(1.0 / bin_width - 1e-9));
    std::vector<std::size_t> counts(bins, 0);
    for (const TrialMetrics& m : metrics) {
        const double r = std::clamp(m.collision_ratio, 0.0, 1.0);
        auto k = static_cast<std::size_t>(std::floor(r / bin_width + 1e-9));
        counts[std::min(k, bins - 1)] += 1;
    }
    return counts;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    double m2 = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        ++n;
        const double delta = v - out.mean;
        out.mean += delta / static_cast<double>(n);
        m2 += delta * (v - out.mean);
    }
    out.stddev = n > 0 ? std::sqrt(std::max(m2, 0.0) / static_cast<double>(n)) : 0.0;
    return out;
}

BatchSummary summarize(std::span<const TrialMetrics> batch) {
    if (batch.empty()) {
        throw EmptyBatch("nothing to summarize");
    }
    BatchSummary s;
    s.trials = batch.size();
    std::vector<double> inter, time, coll;
    for (const TrialMetrics& m : batch) {
        inter.push_back(m.intervention_ratio);
        time.push_back(m.task_time);
        coll.push_back(m.collision_ratio);
        switch (m.outcome) {
            case Outcome::Success:
                ++s.success;
                break;
            case Outcome::Timeout:
                ++s.timeout;
                break;
            case Outcome::Aborted:
                ++s.aborted;
                break;
            case Outcome::Running:
                break;
        }
    }
    s.intervention_ratio = mean_std(inter);
    s.task_time = mean_std(time);
    s.collision_ratio = mean_std(coll);
    return s;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
    out << "seed,mode,task,intervention_ratio,task_time,collision_ratio,outcome\n";
    std::vector<TrialMetrics> ok;
    std::size_t errors = 0;
    for (const MetricsRow& row : rows) {
        const TrialMetrics& m = row.metrics;
        out << m.seed << ',' << m.mode << ',' << m.task << ',';
        if (!row.error.empty()) {
            out << ",,," << "error:" << row.error << '\n';
            ++errors;
            continue;
        }
        write_number(out, m.intervention_ratio);
        out << ',';
        write_number(out, m.task_time);
        out << ',';
        write_number(out, m.collision_ratio);
        out << ',' << to_string(m.outcome) << '\n';
        ok.push_back(m);
    }
    if (ok.empty()) {
        out << "# summary,trials=0,errors=" << errors << '\n';
        return;
    }
    const BatchSummary s = summarize(ok);
    out << "# summary,mean/std,,";
    write_number(out, s.intervention_ratio.mean);
    out << '/';
    write_number(out, s.intervention_ratio.stddev);
    out << ',';
    write_number(out, s.task_time.mean);
    out << '/';
    write_number(out, s.task_time.stddev);
    out << ',';
    write_number(out, s.collision_ratio.mean);
    out << '/';
    write_number(out, s.collision_ratio.stddev);
    out << ",success=" << s.success << ";timeout=" << s.timeout << ";aborted=" << s.aborted
        << ";errors=" << errors << '\n';
}

}  // namespace pbp
