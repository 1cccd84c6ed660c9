#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"

namespace migserve {

// Discrete probability mass over batch sizes 1..b_max.
class BatchDistribution {
public:
    // Weights are renormalized; they need not sum to 1.
    explicit BatchDistribution(std::vector<double> weights) : pmf_(std::move(weights)) {
        if (pmf_.empty()) throw ParamError("batch distribution: empty support");
        double total = 0.0;
        for (double w : pmf_) {
            if (w < 0.0 || !std::isfinite(w))
                throw ParamError("batch distribution: weights must be finite and >= 0");
            total += w;
        }
        if (!(total > 0.0)) throw ParamError("batch distribution: all weights are zero");
        for (double& w : pmf_) w /= total;
        cdf_.resize(pmf_.size());
        std::partial_sum(pmf_.begin(), pmf_.end(), cdf_.begin());
        cdf_.back() = 1.0;
    }

    int b_max() const { return static_cast<int>(pmf_.size()); }
    double p(int batch) const {
        if (batch < 1 || batch > b_max())
            throw LookupError("batch distribution: batch " + std::to_string(batch) + " out of range");
        return pmf_[static_cast<size_t>(batch - 1)];
    }
    const std::vector<double>& pmf() const { return pmf_; }

    int sample(Rng& rng) const {
        double u = rng.uniform();
        auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return static_cast<int>(it - cdf_.begin()) + 1;
    }

private:
    std::vector<double> pmf_;
    std::vector<double> cdf_;
};

struct Query {
    int64_t id = 0;
    double arrival_ms = 0.0;
    int batch = 1;
};

struct QueryTrace {
    std::vector<Query> queries;
    double duration_ms = 0.0;
    uint64_t seed = 0;
};

namespace detail {
inline double lognormal_cdf(double x, double mu, double sigma) {
    if (x <= 0.0) return 0.0;
    return 0.5 * std::erfc(-(std::log(x) - mu) / (sigma * 1.4142135623730950488));
}
}  // namespace detail

// Integer-bin discretization of a log-normal: mass of bin b is the CDF
// difference over [b-0.5, b+0.5], truncated to [1, b_max] and renormalized.
inline BatchDistribution lognormal_batch_pdf(double mu, double sigma, int b_max) {
    if (!(sigma > 0.0)) throw ParamError("lognormal_batch_pdf: sigma must be > 0");
    if (b_max < 1) throw ParamError("lognormal_batch_pdf: b_max must be >= 1");
    if (b_max == 1) return BatchDistribution({1.0});
    std::vector<double> w(static_cast<size_t>(b_max));
    for (int b = 1; b <= b_max; ++b)
        w[static_cast<size_t>(b - 1)] =
            detail::lognormal_cdf(b + 0.5, mu, sigma) - detail::lognormal_cdf(b - 0.5, mu, sigma);
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0))
        throw ParamError("lognormal_batch_pdf: distribution mass vanishes on [1,b_max]");
    return BatchDistribution(std::move(w));
}

// Poisson arrivals at `rate_qps` with i.i.d. batch sizes from `dist`.
// Identical (params, seed) produce a bit-identical trace.
inline QueryTrace sample_trace(const BatchDistribution& dist, double rate_qps,
                               double duration_ms, uint64_t seed) {
    if (!(rate_qps > 0.0)) throw ParamError("sample_trace: rate must be > 0");
    if (duration_ms < 0.0) throw ParamError("sample_trace: duration must be >= 0");
    QueryTrace trace;
    trace.duration_ms = duration_ms;
    trace.seed = seed;
    Rng rng(seed);
    const double rate_per_ms = rate_qps / 1000.0;
    double t = rng.exponential(rate_per_ms);
    int64_t id = 0;
    while (t < duration_ms) {
        trace.queries.push_back(Query{id++, t, dist.sample(rng)});
        t += rng.exponential(rate_per_ms);
    }
    return trace;
}

// Observed batch-size frequencies of a trace, as used for fleet planning.
inline BatchDistribution empirical_pdf(const QueryTrace& trace, int b_max) {
    if (trace.queries.empty()) throw ParamError("empirical_pdf: empty trace");
    std::vector<double> counts(static_cast<size_t>(b_max), 0.0);
    for (const Query& q : trace.queries) {
        if (q.batch < 1 || q.batch > b_max)
            throw ValidationError("empirical_pdf: batch " + std::to_string(q.batch) +
                                  " outside 1.." + std::to_string(b_max));
        counts[static_cast<size_t>(q.batch - 1)] += 1.0;
    }
    return BatchDistribution(std::move(counts));
}

// Trace JSONL: one object per line, {"id":..,"arrival_ms":..,"batch":..},
// sorted by arrival_ms. Used to replay identical workloads across schedulers.
inline void write_trace_jsonl(const QueryTrace& trace, std::ostream& out) {
    for (const Query& q : trace.queries) {
        nlohmann::json j{{"id", q.id}, {"arrival_ms", q.arrival_ms}, {"batch", q.batch}};
        out << j.dump() << '\n';
    }
}

inline QueryTrace read_trace_jsonl(std::istream& in) {
    QueryTrace trace;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            Query q;
            q.id = j.at("id").get<int64_t>();
            q.arrival_ms = j.at("arrival_ms").get<double>();
            q.batch = j.at("batch").get<int>();
            trace.queries.push_back(q);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("trace jsonl: line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (size_t i = 1; i < trace.queries.size(); ++i)
        if (trace.queries[i].arrival_ms < trace.queries[i - 1].arrival_ms)
            throw ValidationError("trace jsonl: arrivals must be sorted by arrival_ms");
    trace.duration_ms = trace.queries.empty() ? 0.0 : trace.queries.back().arrival_ms;
    return trace;
}

inline QueryTrace read_trace_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("trace jsonl: cannot open " + path);
    return read_trace_jsonl(in);
}

}  // namespace migserve
