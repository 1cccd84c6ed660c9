#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "profile.hpp"
#include "rng.hpp"
#include "workload.hpp"

namespace migserve {

// Contiguous batch range (first..last, inclusive) owned by partition size k
// for fleet sizing. first > last marks a retained-but-empty segment.
struct BatchSegment {
    PartitionSize k;
    int first = 1;
    int last = 0;
    bool empty() const { return first > last; }
    bool covers(int batch) const { return batch >= first && batch <= last; }
};

// Split 1..b_max into non-overlapping segments at the knee batch sizes: the
// n-th smallest segment goes to the n-th smallest partition size, and the
// last segment is extended to b_max.
inline std::vector<BatchSegment> segment_batches(const std::map<int, int>& knees, int b_max) {
    if (knees.empty()) throw ParamError("segment_batches: no knees");
    if (b_max < 1) throw ParamError("segment_batches: b_max must be >= 1");
    std::vector<BatchSegment> segments;
    int prev = 0;
    for (auto [k, knee_b] : knees) {
        if (knee_b < 1 || knee_b > b_max)
            throw ValidationError("segment_batches: knee for k=" + std::to_string(k) +
                                  " outside 1..b_max");
        if (knee_b < prev)
            throw ValidationError("segment_batches: knees must be nondecreasing in k");
        segments.push_back(BatchSegment{PartitionSize{k}, prev + 1, knee_b});
        prev = knee_b;
    }
    segments.back().last = b_max;  // largest size absorbs the remaining range
    return segments;
}

struct RatioEntry {
    PartitionSize k;
    double ratio = 0.0;         // expected partition-seconds per query
    double segment_mass = 0.0;  // probability mass of the segment
};

struct RatioVector {
    std::vector<RatioEntry> entries;  // ascending k
};

// Relative instance requirements: for each size, sum the per-batch load
// Dist(b) / Throughput(k, b) over its segment.
inline RatioVector instance_ratios(const BatchDistribution& dist, const ProfileTable& table,
                                   const std::vector<BatchSegment>& segments) {
    if (segments.empty()) throw ParamError("instance_ratios: no segments");
    RatioVector out;
    for (const BatchSegment& seg : segments) {
        RatioEntry e;
        e.k = seg.k;
        for (int b = seg.first; b <= seg.last && b <= dist.b_max(); ++b) {
            double thr = table.throughput_qps(seg.k, b);
            if (!(thr > 0.0))
                throw ValidationError("instance_ratios: nonpositive throughput at (k=" +
                                      std::to_string(seg.k.gpcs) + ", b=" + std::to_string(b) + ")");
            e.ratio += dist.p(b) / thr;
            e.segment_mass += dist.p(b);
        }
        out.entries.push_back(e);
    }
    return out;
}

struct InstanceCounts {
    std::vector<std::pair<PartitionSize, double>> counts;  // real-valued, pre-rounding
    double weighted_sum = 0.0;  // sum of k * R_k
    double normalizer = 0.0;    // C = total_gpcs / weighted_sum
};

// Scale the ratios so the plan consumes exactly total_gpcs:
//   C = total_gpcs / sum(k * R_k),   N_k = C * R_k.
inline InstanceCounts instance_counts(const RatioVector& ratios, int total_gpcs) {
    if (total_gpcs < 1) throw ParamError("instance_counts: total_gpcs must be >= 1");
    InstanceCounts out;
    for (const RatioEntry& e : ratios.entries) {
        if (e.ratio < 0.0) throw ValidationError("instance_counts: negative ratio");
        out.weighted_sum += static_cast<double>(e.k.gpcs) * e.ratio;
    }
    if (!(out.weighted_sum > 0.0))
        throw ParamError("instance_counts: all ratios are zero");
    out.normalizer = static_cast<double>(total_gpcs) / out.weighted_sum;
    for (const RatioEntry& e : ratios.entries)
        out.counts.emplace_back(e.k, out.normalizer * e.ratio);
    return out;
}

// Concrete placement of partition instances on physical GPUs.
struct PartitionPlan {
    int num_gpus = 0;
    int gpcs_per_gpu = 7;
    std::vector<std::vector<int>> gpus;  // partition sizes placed on each GPU

    int used_gpcs() const {
        int total = 0;
        for (const auto& g : gpus) total += std::accumulate(g.begin(), g.end(), 0);
        return total;
    }

    // (k, N_k) ascending by k, zero-count sizes dropped.
    std::vector<std::pair<int, int>> instance_counts() const {
        std::map<int, int> counts;
        for (const auto& g : gpus)
            for (int k : g) ++counts[k];
        return {counts.begin(), counts.end()};
    }

    int total_instances() const {
        int n = 0;
        for (const auto& g : gpus) n += static_cast<int>(g.size());
        return n;
    }

    // Partition ids are assigned GPU-major in placement order.
    std::vector<PartitionSize> flatten() const {
        std::vector<PartitionSize> out;
        for (const auto& g : gpus)
            for (int k : g) out.push_back(PartitionSize{k});
        return out;
    }

    void validate() const {
        if (num_gpus < 1) throw ValidationError("plan: num_gpus must be >= 1");
        if (gpcs_per_gpu < 1) throw ValidationError("plan: gpcs_per_gpu must be >= 1");
        if (static_cast<int>(gpus.size()) != num_gpus)
            throw ValidationError("plan: gpu list size mismatch");
        for (const auto& g : gpus) {
            int used = 0;
            for (int k : g) {
                if (k < 1) throw ValidationError("plan: partition size must be positive");
                used += k;
            }
            if (used > gpcs_per_gpu)
                throw ValidationError("plan: GPU over capacity (" + std::to_string(used) + " > " +
                                      std::to_string(gpcs_per_gpu) + ")");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json instances = nlohmann::json::array();
        for (auto [k, n] : instance_counts())
            instances.push_back({{"k", k}, {"count", n}});
        return nlohmann::json{
            {"gpus", gpus}, {"instances", instances}, {"gpcs_per_gpu", gpcs_per_gpu}};
    }

    static PartitionPlan from_json(const nlohmann::json& j) {
        PartitionPlan plan;
        plan.gpus = j.at("gpus").get<std::vector<std::vector<int>>>();
        plan.gpcs_per_gpu = j.value("gpcs_per_gpu", 7);
        plan.num_gpus = static_cast<int>(plan.gpus.size());
        plan.validate();
        return plan;
    }
};

namespace detail {

// First fit onto the GPU with room; `remaining` tracks free GPCs per GPU.
inline bool place_instance(int k, std::vector<int>& remaining, std::vector<std::vector<int>>& gpus) {
    for (size_t g = 0; g < remaining.size(); ++g) {
        if (remaining[g] >= k) {
            remaining[g] -= k;
            gpus[g].push_back(k);
            return true;
        }
    }
    return false;
}

}  // namespace detail

// Integerize real-valued instance counts and place them on GPUs.
// Rounding: floor everything, then spend the leftover GPC budget on the
// largest fractional remainders (each size gains at most one instance), then
// fill any GPCs still in budget greedily, preferring the size with the
// largest fill weight (segment probability mass when coming from the
// planning pipeline) and breaking ties toward smaller sizes.
inline PartitionPlan pack_plan(const std::map<int, double>& real_counts, int num_gpus,
                               int gpcs_per_gpu, const std::map<int, double>& fill_weights = {}) {
    if (num_gpus < 1) throw ParamError("pack_plan: num_gpus must be >= 1");
    if (gpcs_per_gpu < 1) throw ParamError("pack_plan: gpcs_per_gpu must be >= 1");
    double budget_real = 0.0;
    for (auto [k, n] : real_counts) {
        if (k < 1) throw ParamError("pack_plan: partition size must be positive");
        if (n < 0.0) throw ParamError("pack_plan: negative instance count");
        if (n > 0.0 && k > gpcs_per_gpu)
            throw InfeasibleError("pack_plan: instance of size " + std::to_string(k) +
                                  " exceeds gpcs_per_gpu=" + std::to_string(gpcs_per_gpu));
        budget_real += static_cast<double>(k) * n;
    }
    int budget = static_cast<int>(std::llround(budget_real));
    budget = std::min(budget, num_gpus * gpcs_per_gpu);

    PartitionPlan plan;
    plan.num_gpus = num_gpus;
    plan.gpcs_per_gpu = gpcs_per_gpu;
    plan.gpus.assign(static_cast<size_t>(num_gpus), {});
    std::vector<int> remaining(static_cast<size_t>(num_gpus), gpcs_per_gpu);

    // Base: floors, largest size first so the bins fill cleanly. An instance
    // that no GPU can hold (bin fragmentation) is skipped; its budget stays
    // available for the remainder and fill stages.
    std::vector<std::pair<int, double>> fractional;  // (k, remainder)
    std::vector<int> base;
    for (auto [k, n] : real_counts) {
        int whole = static_cast<int>(std::floor(n + 1e-9));
        double frac = n - static_cast<double>(whole);
        if (frac > 1e-9) fractional.emplace_back(k, frac);
        for (int i = 0; i < whole; ++i) base.push_back(k);
    }
    std::sort(base.begin(), base.end(), std::greater<int>());
    for (int k : base) {
        if (k > budget) continue;  // real counts exceeded the physical budget
        if (detail::place_instance(k, remaining, plan.gpus)) budget -= k;
    }

    // Remainders: at most one extra instance per size.
    std::sort(fractional.begin(), fractional.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (auto [k, frac] : fractional) {
        if (k > budget) continue;
        if (detail::place_instance(k, remaining, plan.gpus)) budget -= k;
    }

    // Greedy fill of whatever budget is left.
    auto weight_of = [&](int k) {
        auto it = fill_weights.find(k);
        return it == fill_weights.end() ? 0.0 : it->second;
    };
    while (budget > 0) {
        int best = 0;
        for (auto [k, n] : real_counts) {
            (void)n;
            if (k > budget) continue;
            bool fits = std::any_of(remaining.begin(), remaining.end(),
                                    [k = k](int r) { return r >= k; });
            if (!fits) continue;
            if (best == 0 || weight_of(k) > weight_of(best) ||
                (weight_of(k) == weight_of(best) && k < best))
                best = k;
        }
        if (best == 0) break;
        detail::place_instance(best, remaining, plan.gpus);
        budget -= best;
    }

    plan.validate();
    return plan;
}

// Uniform fleet of size-k partitions: floor(gpcs_per_gpu / k) instances per
// GPU, capped by the GPC budget, spread round-robin across GPUs.
inline PartitionPlan homogeneous_plan(int k, int total_gpcs, int num_gpus, int gpcs_per_gpu) {
    if (k < 1) throw ParamError("homogeneous_plan: k must be >= 1");
    if (num_gpus < 1) throw ParamError("homogeneous_plan: num_gpus must be >= 1");
    if (k > gpcs_per_gpu)
        throw InfeasibleError("homogeneous_plan: k exceeds gpcs_per_gpu");
    int per_gpu = gpcs_per_gpu / k;
    int instances = std::min(num_gpus * per_gpu, total_gpcs / k);
    PartitionPlan plan;
    plan.num_gpus = num_gpus;
    plan.gpcs_per_gpu = gpcs_per_gpu;
    plan.gpus.assign(static_cast<size_t>(num_gpus), {});
    for (int i = 0; i < instances; ++i)
        plan.gpus[static_cast<size_t>(i % num_gpus)].push_back(k);
    plan.validate();
    return plan;
}

// Heterogeneous baseline: per GPU, keep drawing uniformly among the allowed
// sizes that still fit until none does.
inline PartitionPlan random_plan(int num_gpus, int gpcs_per_gpu, uint64_t seed,
                                 const std::vector<int>& allowed_sizes = default_partition_sizes()) {
    if (num_gpus < 1) throw ParamError("random_plan: num_gpus must be >= 1");
    if (allowed_sizes.empty()) throw ParamError("random_plan: empty size set");
    PartitionPlan plan;
    plan.num_gpus = num_gpus;
    plan.gpcs_per_gpu = gpcs_per_gpu;
    plan.gpus.assign(static_cast<size_t>(num_gpus), {});
    Rng rng(seed);
    for (auto& gpu : plan.gpus) {
        int remaining = gpcs_per_gpu;
        for (;;) {
            std::vector<int> fits;
            for (int k : allowed_sizes)
                if (k <= remaining) fits.push_back(k);
            if (fits.empty()) break;
            int k = fits[rng.index(fits.size())];
            gpu.push_back(k);
            remaining -= k;
        }
        std::sort(gpu.begin(), gpu.end(), std::greater<int>());
    }
    plan.validate();
    return plan;
}

// End-to-end planning pipeline: knees -> segments -> ratios -> counts -> packing.
struct ParisResult {
    std::map<int, int> knees;
    std::vector<BatchSegment> segments;
    RatioVector ratios;
    InstanceCounts counts;
    PartitionPlan plan;
};

inline ParisResult paris_plan(const ProfileTable& table, const BatchDistribution& dist,
                              int total_gpcs, int num_gpus, int gpcs_per_gpu,
                              double knee_threshold = 0.8) {
    if (dist.b_max() != table.b_max())
        throw ValidationError("paris_plan: distribution support must match profile b_max");
    ParisResult r;
    for (int k : table.sizes()) r.knees[k] = knee(table, PartitionSize{k}, knee_threshold);
    r.segments = segment_batches(r.knees, table.b_max());
    r.ratios = instance_ratios(dist, table, r.segments);
    r.counts = instance_counts(r.ratios, total_gpcs);
    std::map<int, double> real_counts;
    std::map<int, double> masses;
    for (const auto& [k, n] : r.counts.counts) real_counts[k.gpcs] = n;
    for (const RatioEntry& e : r.ratios.entries) masses[e.k.gpcs] = e.segment_mass;
    r.plan = pack_plan(real_counts, num_gpus, gpcs_per_gpu, masses);
    return r;
}

}  // namespace migserve
