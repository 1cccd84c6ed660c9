#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "profile.hpp"
#include "workload.hpp"

namespace migserve {

struct QueuedQuery {
    int64_t query_id = 0;
    int batch = 1;
    double est_ms = 0.0;  // profiled execution time on this partition
};

struct RunningQuery {
    int64_t query_id = 0;
    int batch = 1;
    double est_ms = 0.0;
    double start_ms = 0.0;
};

// Live state of one partition: the query executing now plus its FIFO queue.
struct PartitionState {
    int id = 0;
    PartitionSize k;
    std::deque<QueuedQuery> queued;
    std::optional<RunningQuery> current;
    bool busy() const { return current.has_value(); }
};

struct SlaConfig {
    double sla_target_ms = 0.0;
    double alpha = 1.0;
    double beta = 1.0;

    void validate() const {
        if (!(sla_target_ms > 0.0)) throw ParamError("sla: target must be > 0");
        if (alpha < 0.0 || beta < 0.0) throw ParamError("sla: alpha/beta must be >= 0");
    }
};

enum class DispatchKind {
    SlackSatisfying,  // smallest partition predicted to meet the SLA
    FastestFallback,  // none can; minimize time in the server
    IdleLargest,      // FIFS: an idle partition was available
    ShortestQueue,    // FIFS: all busy, shortest queue chosen
};

inline const char* to_string(DispatchKind kind) {
    switch (kind) {
        case DispatchKind::SlackSatisfying: return "slack-satisfying";
        case DispatchKind::FastestFallback: return "fastest-fallback";
        case DispatchKind::IdleLargest: return "idle-largest";
        case DispatchKind::ShortestQueue: return "shortest-queue";
    }
    return "?";
}

struct Dispatch {
    int64_t query_id = 0;
    int partition_id = 0;
    DispatchKind kind = DispatchKind::SlackSatisfying;
};

// Predicted time a new query would wait on this partition before starting:
// the estimated time of everything queued plus what remains of the query
// executing now. Estimates come from the profile table; the remaining time
// of the current query is its estimate minus elapsed time, clamped at zero.
inline double t_wait(const PartitionState& state, const ProfileTable& table, double now_ms) {
    double wait = 0.0;
    for (const QueuedQuery& q : state.queued) wait += table.latency_ms(state.k, q.batch);
    if (state.current) {
        double elapsed = now_ms - state.current->start_ms;
        wait += std::max(0.0, state.current->est_ms - elapsed);
    }
    return wait;
}

// SLA slack = target - alpha * (wait + beta * estimated execution time).
// Negative slack predicts a violation.
inline double sla_slack(const SlaConfig& cfg, double t_wait_ms, double t_est_new_ms) {
    return cfg.sla_target_ms - cfg.alpha * (t_wait_ms + cfg.beta * t_est_new_ms);
}

namespace detail {
// Candidate indices in ascending (size, id) order, the scan order both ELSA
// steps use.
inline std::vector<size_t> by_ascending_size(const std::vector<const PartitionState*>& partitions) {
    std::vector<size_t> order(partitions.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (partitions[a]->k != partitions[b]->k) return partitions[a]->k < partitions[b]->k;
        return partitions[a]->id < partitions[b]->id;
    });
    return order;
}

inline std::vector<const PartitionState*> as_pointers(const std::vector<PartitionState>& partitions) {
    std::vector<const PartitionState*> out;
    out.reserve(partitions.size());
    for (const PartitionState& p : partitions) out.push_back(&p);
    return out;
}
}  // namespace detail

// Two-step dispatch. Step A walks partitions from smallest to largest and
// takes the first whose predicted slack is strictly positive; a smaller
// partition that can meet the SLA always wins on utilization. Step B, when
// no partition qualifies, picks the one that finishes the query soonest to
// limit the damage to queries behind it.
inline Dispatch elsa_dispatch(const Query& query,
                              const std::vector<const PartitionState*>& partitions,
                              const ProfileTable& table, const SlaConfig& cfg, double now_ms) {
    if (partitions.empty()) throw ParamError("elsa_dispatch: no partitions");
    const std::vector<size_t> order = detail::by_ascending_size(partitions);

    for (size_t i : order) {
        const PartitionState& p = *partitions[i];
        double est = table.latency_ms(p.k, query.batch);
        if (cfg.sla_target_ms > cfg.alpha * (t_wait(p, table, now_ms) + cfg.beta * est))
            return Dispatch{query.id, p.id, DispatchKind::SlackSatisfying};
    }

    double best_time = std::numeric_limits<double>::infinity();
    size_t best = order.front();
    for (size_t i : order) {
        const PartitionState& p = *partitions[i];
        double finish = t_wait(p, table, now_ms) + table.latency_ms(p.k, query.batch);
        if (finish < best_time) {
            best_time = finish;
            best = i;
        }
    }
    return Dispatch{query.id, partitions[best]->id, DispatchKind::FastestFallback};
}

inline Dispatch elsa_dispatch(const Query& query, const std::vector<PartitionState>& partitions,
                              const ProfileTable& table, const SlaConfig& cfg, double now_ms) {
    return elsa_dispatch(query, detail::as_pointers(partitions), table, cfg, now_ms);
}

// First-idle first-serve baseline. Deliberately heterogeneity-unaware: an
// idle partition is taken no matter its size (largest first so the baseline
// gets its best case); when everything is busy, the shortest queue by count
// wins. Ties break toward the lowest id.
inline Dispatch fifs_dispatch(const Query& query,
                              const std::vector<const PartitionState*>& partitions) {
    if (partitions.empty()) throw ParamError("fifs_dispatch: no partitions");
    const PartitionState* idle = nullptr;
    for (const PartitionState* p : partitions) {
        if (p->busy()) continue;
        if (!idle || p->k > idle->k || (p->k == idle->k && p->id < idle->id)) idle = p;
    }
    if (idle) return Dispatch{query.id, idle->id, DispatchKind::IdleLargest};

    const PartitionState* best = partitions.front();
    for (const PartitionState* p : partitions)
        if (p->queued.size() < best->queued.size() ||
            (p->queued.size() == best->queued.size() && p->id < best->id))
            best = p;
    return Dispatch{query.id, best->id, DispatchKind::ShortestQueue};
}

inline Dispatch fifs_dispatch(const Query& query, const std::vector<PartitionState>& partitions) {
    return fifs_dispatch(query, detail::as_pointers(partitions));
}

}  // namespace migserve
