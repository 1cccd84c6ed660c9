#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>

#include <migserve/paris.hpp>
#include <migserve/profile.hpp>
#include <migserve/workload.hpp>

#include "test_tables.hpp"

using namespace migserve;

namespace {

// Literal reimplementation of the planning arithmetic (steps B and C) used
// as the oracle for the pipeline tests.
std::map<int, double> brute_force_counts(const ProfileTable& table, const std::vector<double>& pmf,
                                         const std::map<int, int>& knees, int total_gpcs) {
    std::map<int, double> ratio;
    int prev = 0;
    for (auto [k, knee_b] : knees) {
        int last = (k == knees.rbegin()->first) ? static_cast<int>(pmf.size()) : knee_b;
        double r = 0.0;
        for (int b = prev + 1; b <= last; ++b)
            r += pmf[static_cast<size_t>(b - 1)] / table.throughput_qps(k, b);
        ratio[k] = r;
        prev = knee_b;
    }
    double weighted = 0.0;
    for (auto [k, r] : ratio) weighted += k * r;
    std::map<int, double> counts;
    for (auto [k, r] : ratio) counts[k] = total_gpcs / weighted * r;
    return counts;
}

}  // namespace

TEST_CASE("segment_batches") {
    SECTION("two sizes split at their knees") {
        auto segs = segment_batches({{1, 2}, {2, 4}}, 4);
        REQUIRE(segs.size() == 2);
        REQUIRE(segs[0].k.gpcs == 1);
        REQUIRE(segs[0].first == 1);
        REQUIRE(segs[0].last == 2);
        REQUIRE(segs[1].first == 3);
        REQUIRE(segs[1].last == 4);
    }
    SECTION("single size owns the whole range") {
        auto segs = segment_batches({{3, 8}}, 8);
        REQUIRE(segs.size() == 1);
        REQUIRE(segs[0].first == 1);
        REQUIRE(segs[0].last == 8);
    }
    SECTION("tied knees leave an empty segment; last segment extends to b_max") {
        auto segs = segment_batches({{1, 2}, {2, 2}, {3, 6}}, 8);
        REQUIRE(segs.size() == 3);
        REQUIRE(segs[0].first == 1);
        REQUIRE(segs[0].last == 2);
        REQUIRE(segs[1].empty());
        REQUIRE(segs[2].first == 3);
        REQUIRE(segs[2].last == 8);
    }
    SECTION("segments jointly cover 1..b_max without overlap") {
        auto segs = segment_batches({{1, 3}, {2, 5}, {4, 9}}, 12);
        std::vector<int> covered(13, 0);
        for (const auto& s : segs)
            for (int b = s.first; b <= s.last; ++b) ++covered[static_cast<size_t>(b)];
        for (int b = 1; b <= 12; ++b) REQUIRE(covered[static_cast<size_t>(b)] == 1);
    }
    SECTION("decreasing knees rejected") {
        REQUIRE_THROWS_AS(segment_batches({{1, 4}, {2, 2}}, 8), ValidationError);
    }
}

TEST_CASE("instance_ratios reproduces the worked example") {
    ProfileTable table = make_toy_two_size_table();
    BatchDistribution dist({0.2, 0.2, 0.4, 0.2});
    auto segs = segment_batches({{1, 2}, {2, 4}}, 4);
    RatioVector rv = instance_ratios(dist, table, segs);

    REQUIRE(rv.entries.size() == 2);
    // 0.2/40 + 0.2/20 = 0.015 -> 1.5 small GPUs per 100 queries.
    REQUIRE(rv.entries[0].ratio * 100.0 == Catch::Approx(1.5).margin(1e-9));
    // 0.4/40 + 0.2/(1000/65) = 0.023 -> 2.3 large GPUs per 100 queries.
    REQUIRE(rv.entries[1].ratio * 100.0 == Catch::Approx(2.3).margin(1e-9));
    REQUIRE(rv.entries[0].segment_mass == Catch::Approx(0.4).margin(1e-12));
    REQUIRE(rv.entries[1].segment_mass == Catch::Approx(0.6).margin(1e-12));

    SECTION("empty segment contributes zero ratio") {
        auto segs3 = segment_batches({{1, 2}, {2, 2}}, 4);
        BatchDistribution d2({0.5, 0.5, 0.0, 0.0});
        RatioVector rv3 = instance_ratios(d2, table, segs3);
        REQUIRE(rv3.entries[1].ratio == 0.0);
    }
}

TEST_CASE("instance_counts") {
    SECTION("worked example: ratios 1.5/2.3 on 61 GPCs gives C=10, N=15/23") {
        RatioVector rv;
        rv.entries = {{PartitionSize{1}, 1.5, 0.4}, {PartitionSize{2}, 2.3, 0.6}};
        InstanceCounts c = instance_counts(rv, 61);
        REQUIRE(c.normalizer == Catch::Approx(10.0).margin(1e-9));
        REQUIRE(c.counts[0].second == Catch::Approx(15.0).margin(1e-9));
        REQUIRE(c.counts[1].second == Catch::Approx(23.0).margin(1e-9));
    }
    SECTION("single size takes all GPCs") {
        RatioVector rv;
        rv.entries = {{PartitionSize{1}, 0.5, 1.0}};
        InstanceCounts c = instance_counts(rv, 7);
        REQUIRE(c.counts[0].second == Catch::Approx(7.0).margin(1e-12));
    }
    SECTION("scale invariance: counts(c*R) == counts(R)") {
        RatioVector a, b;
        a.entries = {{PartitionSize{1}, 0.015, 0.4}, {PartitionSize{2}, 0.023, 0.6}};
        b.entries = {{PartitionSize{1}, 0.015 * 3.7, 0.4}, {PartitionSize{2}, 0.023 * 3.7, 0.6}};
        InstanceCounts ca = instance_counts(a, 61);
        InstanceCounts cb = instance_counts(b, 61);
        for (size_t i = 0; i < ca.counts.size(); ++i)
            REQUIRE(ca.counts[i].second == Catch::Approx(cb.counts[i].second).epsilon(1e-9));
    }
    SECTION("GPC conservation holds pre-rounding") {
        std::mt19937 gen(7);
        std::uniform_real_distribution<double> r(0.0, 2.0);
        for (int trial = 0; trial < 100; ++trial) {
            RatioVector rv;
            for (int k : {1, 2, 3, 4, 7}) rv.entries.push_back({PartitionSize{k}, r(gen), 0.0});
            rv.entries[static_cast<size_t>(trial) % rv.entries.size()].ratio += 0.01;
            InstanceCounts c = instance_counts(rv, 56);
            double total = 0.0;
            for (auto& [k, n] : c.counts) total += k.gpcs * n;
            REQUIRE(total == Catch::Approx(56.0).epsilon(1e-9));
        }
    }
    SECTION("all-zero ratios rejected") {
        RatioVector rv;
        rv.entries = {{PartitionSize{1}, 0.0, 0.0}};
        REQUIRE_THROWS_AS(instance_counts(rv, 7), ParamError);
    }
}

TEST_CASE("pack_plan") {
    SECTION("24-GPC mix packs onto 4 GPUs") {
        PartitionPlan plan = pack_plan({{1, 6.0}, {2, 4.0}, {3, 2.0}, {4, 1.0}}, 4, 7);
        plan.validate();
        auto counts = plan.instance_counts();
        REQUIRE(counts == std::vector<std::pair<int, int>>{{1, 6}, {2, 4}, {3, 2}, {4, 1}});
        REQUIRE(plan.used_gpcs() == 24);
    }
    SECTION("42-GPC mix packs onto 6 GPUs") {
        PartitionPlan plan = pack_plan({{3, 2.0}, {4, 2.0}, {7, 4.0}}, 6, 7);
        plan.validate();
        auto counts = plan.instance_counts();
        REQUIRE(counts == std::vector<std::pair<int, int>>{{3, 2}, {4, 2}, {7, 4}});
        REQUIRE(plan.used_gpcs() == 42);
    }
    SECTION("single full-GPU instance") {
        PartitionPlan plan = pack_plan({{7, 1.0}}, 1, 7);
        REQUIRE(plan.used_gpcs() == 7);
        REQUIRE(plan.gpus[0] == std::vector<int>{7});
    }
    SECTION("oversized instance is infeasible") {
        REQUIRE_THROWS_AS(pack_plan({{8, 1.0}}, 2, 7), InfeasibleError);
    }
    SECTION("fractional counts round by largest remainder within the GPC budget") {
        // budget = round(2.4*1 + 1.3*2) = 5; floors give {1:2, 2:1} = 4 GPCs,
        // the leftover GPC goes to size 1 (remainder .4 > .3).
        PartitionPlan plan = pack_plan({{1, 2.4}, {2, 1.3}}, 1, 7);
        auto counts = plan.instance_counts();
        REQUIRE(counts == std::vector<std::pair<int, int>>{{1, 3}, {2, 1}});
        REQUIRE(plan.used_gpcs() == 5);
    }
    SECTION("zero-count sizes are dropped") {
        PartitionPlan plan = pack_plan({{1, 3.0}, {2, 0.0}}, 1, 7);
        auto counts = plan.instance_counts();
        REQUIRE(counts == std::vector<std::pair<int, int>>{{1, 3}});
    }
    SECTION("remainder instances must fit within the GPC budget") {
        // budget = round(2.5*2) = 5; floors place two instances (4 GPCs) and
        // the 0.5 remainder would need 2 more GPCs, exceeding the budget.
        PartitionPlan plan = pack_plan({{2, 2.5}}, 1, 7);
        REQUIRE(plan.instance_counts() == std::vector<std::pair<int, int>>{{2, 2}});
        REQUIRE(plan.used_gpcs() == 4);
    }
    SECTION("fragmented floors are skipped rather than fatal") {
        // {3:5, 2:3} sums to 21 GPCs but no packing of 3 GPUs x7 exists;
        // one size-2 instance is dropped and nothing else fits afterwards.
        PartitionPlan plan = pack_plan({{3, 5.0}, {2, 3.0}}, 3, 7);
        plan.validate();
        REQUIRE(plan.instance_counts() == std::vector<std::pair<int, int>>{{2, 2}, {3, 5}});
        REQUIRE(plan.used_gpcs() == 19);
    }
    SECTION("random real counts: floors preserved, budget respected, plan valid") {
        std::mt19937 gen(11);
        std::uniform_real_distribution<double> r(0.0, 3.0);
        for (int trial = 0; trial < 200; ++trial) {
            std::map<int, double> counts;
            double budget = 0.0;
            for (int k : {1, 2, 3, 4, 7}) {
                counts[k] = r(gen);
                budget += k * counts[k];
            }
            int num_gpus = 5;
            PartitionPlan plan = pack_plan(counts, num_gpus, 7);
            plan.validate();
            std::map<int, int> placed;
            for (auto [k, n] : plan.instance_counts()) placed[k] = n;
            for (auto [k, n] : counts)
                REQUIRE(placed[k] >= static_cast<int>(std::floor(n + 1e-9)));
            REQUIRE(plan.used_gpcs() <=
                    std::min<int>(static_cast<int>(std::llround(budget)), num_gpus * 7));
        }
    }
}

TEST_CASE("homogeneous_plan") {
    SECTION("k=3 on 8 GPUs x7 uses 16 instances and 48 GPCs") {
        PartitionPlan plan = homogeneous_plan(3, 56, 8, 7);
        REQUIRE(plan.total_instances() == 16);
        REQUIRE(plan.used_gpcs() == 48);
    }
    SECTION("k=7 on 8 GPUs gives 8 instances") {
        PartitionPlan plan = homogeneous_plan(7, 56, 8, 7);
        REQUIRE(plan.total_instances() == 8);
        REQUIRE(plan.used_gpcs() == 56);
    }
    SECTION("GPC budget caps the fleet: k=1 with 24 GPCs on 4 GPUs") {
        PartitionPlan plan = homogeneous_plan(1, 24, 4, 7);
        REQUIRE(plan.total_instances() == 24);
        REQUIRE(plan.used_gpcs() == 24);
        for (const auto& gpu : plan.gpus) REQUIRE(gpu.size() == 6);  // spread evenly
    }
    SECTION("k larger than a GPU is infeasible") {
        REQUIRE_THROWS_AS(homogeneous_plan(8, 56, 8, 7), InfeasibleError);
    }
}

TEST_CASE("random_plan") {
    SECTION("same seed reproduces the plan") {
        PartitionPlan a = random_plan(4, 7, 123);
        PartitionPlan b = random_plan(4, 7, 123);
        REQUIRE(a.gpus == b.gpus);
    }
    SECTION("different seeds usually differ") {
        PartitionPlan a = random_plan(4, 7, 1);
        PartitionPlan b = random_plan(4, 7, 2);
        REQUIRE(a.gpus != b.gpus);
    }
    SECTION("every GPU is filled until no allowed size fits") {
        PartitionPlan plan = random_plan(6, 7, 99, {2, 3});
        plan.validate();
        for (const auto& gpu : plan.gpus) {
            int used = 0;
            for (int k : gpu) {
                used += k;
                REQUIRE((k == 2 || k == 3));
            }
            REQUIRE(7 - used < 2);  // nothing of the smallest size fits anymore
        }
    }
}

TEST_CASE("end-to-end pipeline reproduces the 1.5 : 2.3 ratio exactly") {
    ProfileTable table = make_toy_two_size_table();
    BatchDistribution dist({0.2, 0.2, 0.4, 0.2});
    ParisResult r = paris_plan(table, dist, 61, 9, 7);

    REQUIRE(r.knees == std::map<int, int>{{1, 2}, {2, 4}});
    REQUIRE(r.ratios.entries[0].ratio * 100.0 == Catch::Approx(1.5).margin(1e-9));
    REQUIRE(r.ratios.entries[1].ratio * 100.0 == Catch::Approx(2.3).margin(1e-9));
    REQUIRE(r.counts.normalizer == Catch::Approx(1000.0).margin(1e-6));
    REQUIRE(r.counts.counts[0].second == Catch::Approx(15.0).margin(1e-9));
    REQUIRE(r.counts.counts[1].second == Catch::Approx(23.0).margin(1e-9));
    REQUIRE(r.plan.instance_counts() == std::vector<std::pair<int, int>>{{1, 15}, {2, 23}});
    REQUIRE(r.plan.used_gpcs() == 61);
}

TEST_CASE("pipeline equals brute-force recomputation on random inputs") {
    SyntheticProfileParams params{10.0, 5.0, 0.4, 0.95};
    ProfileTable table = synth_profile(params, {1, 2, 3}, 8);
    std::mt19937 gen(31337);
    std::uniform_real_distribution<double> u(0.01, 1.0);

    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> weights(8);
        for (auto& w : weights) w = u(gen);
        BatchDistribution dist(weights);

        ParisResult r = paris_plan(table, dist, 21, 3, 7);
        auto brute = brute_force_counts(table, dist.pmf(), r.knees, 21);
        for (const auto& [k, n] : r.counts.counts)
            REQUIRE(n == Catch::Approx(brute[k.gpcs]).epsilon(1e-12));

        double total = 0.0;
        for (const auto& [k, n] : r.counts.counts) total += k.gpcs * n;
        REQUIRE(total == Catch::Approx(21.0).epsilon(1e-9));
    }
}

TEST_CASE("shifting batch mass into a later segment never grows the smallest fleet") {
    SyntheticProfileParams params{10.0, 5.0, 0.4, 0.95};
    ProfileTable table = synth_profile(params, {1, 2, 3}, 8);
    // Knees: 2 / 4 / 6 -> segments 1..2, 3..4, 5..8.
    std::mt19937 gen(555);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::uniform_int_distribution<int> lo_pick(1, 2), hi_pick(3, 8);

    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> weights(8);
        for (auto& w : weights) w = u(gen);
        BatchDistribution base(weights);

        int b_lo = lo_pick(gen), b_hi = hi_pick(gen);
        double delta = 0.5 * base.p(b_lo);
        std::vector<double> shifted = base.pmf();
        shifted[static_cast<size_t>(b_lo - 1)] -= delta;
        shifted[static_cast<size_t>(b_hi - 1)] += delta;

        ParisResult before = paris_plan(table, base, 21, 3, 7);
        ParisResult after = paris_plan(table, BatchDistribution(shifted), 21, 3, 7);
        REQUIRE(after.counts.counts[0].second <= before.counts.counts[0].second + 1e-9);
    }
}

TEST_CASE("plan json round trip") {
    PartitionPlan plan = pack_plan({{1, 6.0}, {2, 4.0}, {3, 2.0}, {4, 1.0}}, 4, 7);
    nlohmann::json j = plan.to_json();
    REQUIRE(j.contains("gpus"));
    REQUIRE(j.contains("instances"));
    PartitionPlan back = PartitionPlan::from_json(j);
    REQUIRE(back.gpus == plan.gpus);
    REQUIRE(back.gpcs_per_gpu == plan.gpcs_per_gpu);
}
