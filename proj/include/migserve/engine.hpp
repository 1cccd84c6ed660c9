#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "paris.hpp"
#include "profile.hpp"
#include "sched.hpp"
#include "workload.hpp"

namespace migserve {

enum class SchedulerKind { Fifs, Elsa };

inline const char* to_string(SchedulerKind s) {
    return s == SchedulerKind::Fifs ? "fifs" : "elsa";
}

inline SchedulerKind scheduler_from_string(const std::string& name) {
    if (name == "fifs") return SchedulerKind::Fifs;
    if (name == "elsa") return SchedulerKind::Elsa;
    throw ValidationError("unknown scheduler '" + name + "' (expected fifs or elsa)");
}

struct EngineOptions {
    double warmup_fraction = 0.1;   // head of the run excluded from metrics
    double noise_sigma = 0.0;       // lognormal multiplicative execution noise, 0 = exact
    uint64_t noise_seed = 1;
    bool check_wait_consistency = false;  // cross-check Eq-style wait estimates per dispatch
    // Optional hard routing of batches to their planning segment's size.
    bool segment_routing = false;
    std::vector<BatchSegment> routing_segments;
};

struct QueryRecord {
    int64_t id = 0;
    double arrival_ms = 0.0;
    int batch = 1;
    int partition_id = -1;
    double start_ms = 0.0;
    double finish_ms = 0.0;
    double latency_ms = 0.0;
    bool sla_met = true;
    DispatchKind kind = DispatchKind::SlackSatisfying;
};

struct PartitionUsage {
    int id = 0;
    int k = 0;
    double busy_ms = 0.0;           // wall-clock time executing
    double weighted_busy_ms = 0.0;  // execution time scaled by profiled utilization
    int64_t queries = 0;
};

struct SimReport {
    std::vector<QueryRecord> queries;      // in query id order
    std::vector<PartitionUsage> partitions;
    double duration_ms = 0.0;
    double horizon_ms = 0.0;  // max(duration, last completion)
    double warmup_ms = 0.0;
    SlaConfig sla;
    SchedulerKind scheduler = SchedulerKind::Fifs;
    uint64_t trace_seed = 0;
    double noise_sigma = 0.0;
    int64_t total_queries = 0;
    int64_t violations = 0;
    int64_t measured_queries = 0;    // arrivals past warmup
    int64_t measured_violations = 0;
    double max_wait_estimate_diff = 0.0;  // only filled by the consistency check

    // Latencies of queries arriving after warmup, in arrival order.
    std::vector<double> latency_samples() const {
        std::vector<double> out;
        out.reserve(queries.size());
        for (const QueryRecord& q : queries)
            if (q.arrival_ms >= warmup_ms) out.push_back(q.latency_ms);
        return out;
    }
};

namespace detail {

struct Event {
    double time_ms = 0.0;
    int type = 0;  // 0 completion, 1 arrival: frees capacity before dispatch at ties
    uint64_t seq = 0;
    int partition_id = -1;
    int64_t query_index = -1;
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time_ms != b.time_ms) return a.time_ms > b.time_ms;
        if (a.type != b.type) return a.type > b.type;
        return a.seq > b.seq;
    }
};

}  // namespace detail

// Deterministic discrete-event simulation of one (plan, scheduler, trace)
// run. Arrivals dispatch immediately and irrevocably; partitions execute
// run-to-completion with the profiled latency (optionally noised); a
// completion starts the next queued query at the same instant.
inline SimReport run(const PartitionPlan& plan, SchedulerKind scheduler, const QueryTrace& trace,
                     const ProfileTable& table, const SlaConfig& cfg,
                     const EngineOptions& options = {}) {
    plan.validate();
    cfg.validate();
    if (plan.total_instances() == 0) throw ParamError("run: plan has no partition instances");
    if (options.warmup_fraction < 0.0 || options.warmup_fraction >= 1.0)
        throw ParamError("run: warmup_fraction must be in [0,1)");
    if (options.segment_routing && options.routing_segments.empty())
        throw ParamError("run: segment_routing enabled without segments");

    std::vector<PartitionState> states;
    {
        int id = 0;
        for (PartitionSize k : plan.flatten()) states.push_back(PartitionState{id++, k, {}, {}});
    }
    std::vector<PartitionUsage> usage;
    for (const PartitionState& s : states) usage.push_back({s.id, s.k.gpcs, 0.0, 0.0, 0});

    std::priority_queue<detail::Event, std::vector<detail::Event>, detail::EventAfter> events;
    uint64_t seq = 0;
    for (size_t i = 0; i < trace.queries.size(); ++i)
        events.push({trace.queries[i].arrival_ms, 1, seq++, -1, static_cast<int64_t>(i)});

    std::vector<QueryRecord> records(trace.queries.size());
    Rng noise_rng(options.noise_seed);
    auto exec_time = [&](double est) {
        if (options.noise_sigma <= 0.0) return est;
        double z = noise_rng.normal();
        return est * std::exp(options.noise_sigma * z - 0.5 * options.noise_sigma * options.noise_sigma);
    };

    // Engine-side completion timestamps, for the wait-estimate cross-check.
    std::vector<double> completion_at(states.size(), 0.0);
    double max_wait_diff = 0.0;

    auto start_query = [&](PartitionState& p, const QueuedQuery& q, double now) {
        double actual = exec_time(q.est_ms);
        p.current = RunningQuery{q.query_id, q.batch, q.est_ms, now};
        completion_at[static_cast<size_t>(p.id)] = now + actual;
        records[static_cast<size_t>(q.query_id)].start_ms = now;
        events.push({now + actual, 0, seq++, p.id, q.query_id});
    };

    std::vector<const PartitionState*> candidates;
    double last_finish = 0.0;

    while (!events.empty()) {
        detail::Event ev = events.top();
        events.pop();
        const double now = ev.time_ms;

        if (ev.type == 0) {  // completion
            PartitionState& p = states[static_cast<size_t>(ev.partition_id)];
            const RunningQuery& cur = *p.current;
            QueryRecord& rec = records[static_cast<size_t>(cur.query_id)];
            rec.finish_ms = now;
            rec.latency_ms = now - rec.arrival_ms;
            rec.sla_met = rec.latency_ms <= cfg.sla_target_ms;
            double ran = now - cur.start_ms;
            usage[static_cast<size_t>(p.id)].busy_ms += ran;
            usage[static_cast<size_t>(p.id)].weighted_busy_ms +=
                ran * table.utilization(p.k, cur.batch);
            usage[static_cast<size_t>(p.id)].queries += 1;
            last_finish = std::max(last_finish, now);
            p.current.reset();
            if (!p.queued.empty()) {
                QueuedQuery next = p.queued.front();
                p.queued.pop_front();
                start_query(p, next, now);
            }
            continue;
        }

        // arrival
        const Query& q = trace.queries[static_cast<size_t>(ev.query_index)];
        QueryRecord& rec = records[static_cast<size_t>(ev.query_index)];
        rec.id = q.id;
        rec.arrival_ms = q.arrival_ms;
        rec.batch = q.batch;

        candidates.clear();
        if (options.segment_routing) {
            for (const PartitionState& p : states)
                for (const BatchSegment& seg : options.routing_segments)
                    if (seg.k == p.k && seg.covers(q.batch)) {
                        candidates.push_back(&p);
                        break;
                    }
        }
        if (candidates.empty())
            for (const PartitionState& p : states) candidates.push_back(&p);

        if (options.check_wait_consistency && options.noise_sigma <= 0.0) {
            for (const PartitionState* p : candidates) {
                double ground_truth = 0.0;
                for (const QueuedQuery& e : p->queued) ground_truth += e.est_ms;
                if (p->current)
                    ground_truth += std::max(0.0, completion_at[static_cast<size_t>(p->id)] - now);
                double estimated = t_wait(*p, table, now);
                max_wait_diff = std::max(max_wait_diff, std::abs(ground_truth - estimated));
            }
        }

        Dispatch d = scheduler == SchedulerKind::Elsa
                         ? elsa_dispatch(q, candidates, table, cfg, now)
                         : fifs_dispatch(q, candidates);
        rec.partition_id = d.partition_id;
        rec.kind = d.kind;

        PartitionState& p = states[static_cast<size_t>(d.partition_id)];
        QueuedQuery entry{q.id, q.batch, table.latency_ms(p.k, q.batch)};
        if (p.busy())
            p.queued.push_back(entry);
        else
            start_query(p, entry, now);
    }

    SimReport report;
    report.queries = std::move(records);
    report.partitions = std::move(usage);
    report.duration_ms = trace.duration_ms;
    report.horizon_ms = std::max(trace.duration_ms, last_finish);
    report.warmup_ms = options.warmup_fraction * trace.duration_ms;
    report.sla = cfg;
    report.scheduler = scheduler;
    report.trace_seed = trace.seed;
    report.noise_sigma = options.noise_sigma;
    report.total_queries = static_cast<int64_t>(report.queries.size());
    report.max_wait_estimate_diff = max_wait_diff;
    for (const QueryRecord& r : report.queries) {
        if (!r.sla_met) ++report.violations;
        if (r.arrival_ms >= report.warmup_ms) {
            ++report.measured_queries;
            if (!r.sla_met) ++report.measured_violations;
        }
    }
    return report;
}

// Profile-weighted utilization of one partition over the whole run: the sum
// of (execution time x profiled utilization) divided by the sim horizon.
inline double busy_fraction(const SimReport& report, int partition_id) {
    for (const PartitionUsage& u : report.partitions)
        if (u.id == partition_id)
            return report.horizon_ms > 0.0 ? u.weighted_busy_ms / report.horizon_ms : 0.0;
    throw LookupError("busy_fraction: unknown partition " + std::to_string(partition_id));
}

// Plain fraction of wall-clock time spent executing (unweighted analogue).
inline double busy_time_fraction(const SimReport& report, int partition_id) {
    for (const PartitionUsage& u : report.partitions)
        if (u.id == partition_id)
            return report.horizon_ms > 0.0 ? u.busy_ms / report.horizon_ms : 0.0;
    throw LookupError("busy_time_fraction: unknown partition " + std::to_string(partition_id));
}

// Shortest round-trip decimal form; keeps emitted CSVs byte-stable.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_query_csv(const SimReport& report, std::ostream& out) {
    out << "id,arrival_ms,partition,start_ms,finish_ms,latency_ms,sla_met\n";
    for (const QueryRecord& q : report.queries) {
        out << q.id << ',' << format_double(q.arrival_ms) << ',' << q.partition_id << ','
            << format_double(q.start_ms) << ',' << format_double(q.finish_ms) << ','
            << format_double(q.latency_ms) << ',' << (q.sla_met ? 1 : 0) << '\n';
    }
}

inline nlohmann::json report_to_json(const SimReport& report) {
    nlohmann::json parts = nlohmann::json::array();
    for (const PartitionUsage& u : report.partitions) {
        double horizon = report.horizon_ms;
        parts.push_back({{"id", u.id},
                         {"k", u.k},
                         {"queries", u.queries},
                         {"busy_time_fraction", horizon > 0.0 ? u.busy_ms / horizon : 0.0},
                         {"weighted_utilization", horizon > 0.0 ? u.weighted_busy_ms / horizon : 0.0}});
    }
    return nlohmann::json{
        {"scheduler", to_string(report.scheduler)},
        {"seed", report.trace_seed},
        {"duration_ms", report.duration_ms},
        {"horizon_ms", report.horizon_ms},
        {"warmup_ms", report.warmup_ms},
        {"noise_sigma", report.noise_sigma},
        {"sla", {{"target_ms", report.sla.sla_target_ms},
                 {"alpha", report.sla.alpha},
                 {"beta", report.sla.beta}}},
        {"totals", {{"queries", report.total_queries},
                    {"violations", report.violations},
                    {"measured_queries", report.measured_queries},
                    {"measured_violations", report.measured_violations}}},
        {"partitions", parts}};
}

}  // namespace migserve
