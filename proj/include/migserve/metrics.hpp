#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <numeric>
#include <string>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "paris.hpp"
#include "profile.hpp"
#include "sched.hpp"
#include "workload.hpp"

namespace migserve {

// Nearest-rank percentile: the value at 1-based index ceil(p * n) of the
// sorted samples. Not interpolated, so results reproduce bit-for-bit.
inline double tail_latency(std::vector<double> samples, double p = 0.95) {
    if (samples.empty()) throw ParamError("tail_latency: no samples");
    if (!(p > 0.0) || !(p < 1.0)) throw ParamError("tail_latency: percentile must be in (0,1)");
    std::sort(samples.begin(), samples.end());
    size_t rank = static_cast<size_t>(std::ceil(p * static_cast<double>(samples.size())));
    if (rank < 1) rank = 1;
    return samples[rank - 1];
}

// SLA target: multiplier x the profiled latency of the largest partition at
// the maximum batch size, i.e. the budget the beefiest device needs for the
// heaviest query.
inline double derive_sla_target(const ProfileTable& table, int b_max, double multiplier) {
    if (!(multiplier > 0.0)) throw ParamError("derive_sla_target: multiplier must be > 0");
    return multiplier * table.latency_ms(table.max_size(), b_max);
}

struct LbtOptions {
    double duration_ms = 20000.0;
    std::vector<uint64_t> seeds = {1, 2, 3};
    double rel_tol = 0.01;       // relative resolution of the rate search
    double tail_p = 0.95;
    double lambda_min = 1.0;     // q/s; "minimal load" feasibility probe
    double warmup_fraction = 0.1;
    int max_doublings = 24;
};

struct LbtResult {
    double qps = 0.0;
    bool infeasible_at_min = false;  // even minimal load violates the SLA
    int sims_run = 0;
};

namespace detail {
// Mean across seeds of the per-seed tail latency at a fixed arrival rate.
inline double mean_tail_at_rate(const PartitionPlan& plan, SchedulerKind scheduler,
                                const ProfileTable& table, const SlaConfig& cfg,
                                const BatchDistribution& dist, double rate_qps,
                                const LbtOptions& opt, int& sims) {
    double sum = 0.0;
    int used = 0;
    for (uint64_t seed : opt.seeds) {
        QueryTrace trace = sample_trace(dist, rate_qps, opt.duration_ms, seed);
        EngineOptions eng;
        eng.warmup_fraction = opt.warmup_fraction;
        SimReport rep = run(plan, scheduler, trace, table, cfg, eng);
        ++sims;
        std::vector<double> samples = rep.latency_samples();
        if (samples.empty()) continue;
        sum += tail_latency(std::move(samples), opt.tail_p);
        ++used;
    }
    return used == 0 ? 0.0 : sum / static_cast<double>(used);
}
}  // namespace detail

// Largest sustainable arrival rate whose tail latency stays within the SLA:
// bracket by doubling from lambda_min, then bisect to rel_tol. Seeds are
// shared across all probed rates so the search is deterministic.
inline LbtResult latency_bounded_throughput(const PartitionPlan& plan, SchedulerKind scheduler,
                                            const ProfileTable& table, const SlaConfig& cfg,
                                            const BatchDistribution& dist,
                                            const LbtOptions& opt = {}) {
    if (!(cfg.sla_target_ms > 0.0)) throw ParamError("latency_bounded_throughput: sla must be > 0");
    if (opt.seeds.empty()) throw ParamError("latency_bounded_throughput: need at least one seed");
    LbtResult result;
    auto tail_at = [&](double rate) {
        return detail::mean_tail_at_rate(plan, scheduler, table, cfg, dist, rate, opt,
                                         result.sims_run);
    };
    if (tail_at(opt.lambda_min) > cfg.sla_target_ms) {
        result.infeasible_at_min = true;
        return result;
    }
    double lo = opt.lambda_min;
    double hi = opt.lambda_min;
    bool bracketed = false;
    for (int i = 0; i < opt.max_doublings; ++i) {
        hi *= 2.0;
        if (tail_at(hi) > cfg.sla_target_ms) {
            bracketed = true;
            break;
        }
        lo = hi;
    }
    if (!bracketed) {  // effectively unbounded within the probe range
        result.qps = lo;
        return result;
    }
    while ((hi - lo) / lo > opt.rel_tol) {
        double mid = 0.5 * (lo + hi);
        if (tail_at(mid) <= cfg.sla_target_ms)
            lo = mid;
        else
            hi = mid;
    }
    result.qps = lo;
    return result;
}

// One evaluated configuration: a plan under a scheduler, with its search and
// pinned-load measurements. `label` uniquely identifies (plan, scheduler).
struct DesignPoint {
    std::string label;
    SchedulerKind scheduler = SchedulerKind::Fifs;
    PartitionPlan plan;
    std::vector<uint64_t> seeds;
    LbtResult lbt;
    double tail_ms_at_rate = 0.0;  // mean per-seed p95 at the common pinned rate
    double rate_qps = 0.0;         // the common rate the tail was measured at
};

struct ComparisonRow {
    std::string label;
    double lbt_qps = 0.0;
    double tail_ms = 0.0;
    double norm_lbt = 0.0;   // relative to gpu(7)+fifs
    double norm_tail = 0.0;  // relative to gpu(7)+fifs
};

inline constexpr const char* kBaselineLabel = "gpu(7)+fifs";

// Absolute and baseline-normalized throughput and tail latency per design.
// All designs must have been evaluated with identical workload seeds.
inline std::vector<ComparisonRow> compare(const std::vector<DesignPoint>& designs) {
    if (designs.empty()) throw ParamError("compare: no designs");
    for (const DesignPoint& d : designs)
        if (d.seeds != designs.front().seeds)
            throw ValidationError("compare: designs ran different workload seeds");
    const DesignPoint* baseline = nullptr;
    for (const DesignPoint& d : designs)
        if (d.label == kBaselineLabel) {
            baseline = &d;
            break;
        }
    if (!baseline)
        throw ValidationError("compare: normalization baseline " + std::string(kBaselineLabel) +
                              " absent");
    std::vector<ComparisonRow> rows;
    for (const DesignPoint& d : designs) {
        ComparisonRow row;
        row.label = d.label;
        row.lbt_qps = d.lbt.qps;
        row.tail_ms = d.tail_ms_at_rate;
        row.norm_lbt = baseline->lbt.qps > 0.0 ? d.lbt.qps / baseline->lbt.qps : 0.0;
        row.norm_tail = baseline->tail_ms_at_rate > 0.0
                            ? d.tail_ms_at_rate / baseline->tail_ms_at_rate
                            : 0.0;
        rows.push_back(row);
    }
    return rows;
}

// GPU(max): the best-performing homogeneous partitioning, found by running
// the rate search for every candidate size and keeping the winner.
struct BestHomogeneous {
    int k = 0;
    PartitionPlan plan;
    LbtResult lbt;
};

inline BestHomogeneous best_homogeneous(const ProfileTable& table, const BatchDistribution& dist,
                                        const SlaConfig& cfg, int total_gpcs, int num_gpus,
                                        int gpcs_per_gpu, const LbtOptions& opt = {}) {
    BestHomogeneous best;
    std::vector<std::pair<int, std::future<std::pair<PartitionPlan, LbtResult>>>> jobs;
    for (int k : table.sizes()) {
        if (k > gpcs_per_gpu || k > total_gpcs) continue;
        jobs.emplace_back(k, std::async(std::launch::async, [&, k] {
                              PartitionPlan plan = homogeneous_plan(k, total_gpcs, num_gpus, gpcs_per_gpu);
                              LbtResult lbt = plan.total_instances() > 0
                                                  ? latency_bounded_throughput(
                                                        plan, SchedulerKind::Fifs, table, cfg, dist, opt)
                                                  : LbtResult{};
                              return std::make_pair(std::move(plan), lbt);
                          }));
    }
    if (jobs.empty()) throw InfeasibleError("best_homogeneous: no size fits the server");
    for (auto& [k, fut] : jobs) {
        auto [plan, lbt] = fut.get();
        if (best.k == 0 || lbt.qps > best.lbt.qps) {
            best.k = k;
            best.plan = std::move(plan);
            best.lbt = lbt;
        }
    }
    return best;
}

}  // namespace migserve
