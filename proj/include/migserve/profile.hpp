#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace migserve {

// A virtual GPU built from `gpcs` compute clusters. A physical GPU holds 7.
struct PartitionSize {
    int gpcs = 0;
    constexpr PartitionSize() = default;
    constexpr PartitionSize(int g) : gpcs(g) {}
    auto operator<=>(const PartitionSize&) const = default;
};

inline const std::vector<int>& default_partition_sizes() {
    static const std::vector<int> sizes = {1, 2, 3, 4, 7};
    return sizes;
}

struct ProfilePoint {
    PartitionSize k;
    int batch = 0;
    double latency_ms = 0.0;
    double utilization = 0.0;
    double throughput_qps = 0.0;  // 1000 / latency_ms; one query = one batched request
};

// Parametric stand-in for measured per-model profiles. Produces curves with
// monotonically rising utilization and latency in batch size, and a knee
// that moves right as the partition grows.
struct SyntheticProfileParams {
    double work_per_sample = 10.0;        // ms·GPC per batched sample
    double fixed_overhead = 5.0;          // ms added to every execution
    double parallelism_per_sample = 0.15; // GPC-equivalents one sample can occupy
    double util_cap = 0.95;               // utilization plateau
};

// Dense (partition size, batch) -> {latency, utilization} grid.
// Immutable after construction; cheap to share across concurrent simulations.
class ProfileTable {
public:
    ProfileTable(std::string model, std::vector<int> sizes, int b_max,
                 std::vector<double> latency_ms, std::vector<double> utilization)
        : model_(std::move(model)),
          sizes_(std::move(sizes)),
          b_max_(b_max),
          latency_(std::move(latency_ms)),
          util_(std::move(utilization)) {
        validate();
    }

    static ProfileTable from_points(std::string model, const std::vector<ProfilePoint>& points) {
        if (points.empty()) throw ParamError("profile: no points");
        std::vector<int> sizes;
        int b_max = 0;
        for (const auto& p : points) {
            sizes.push_back(p.k.gpcs);
            b_max = std::max(b_max, p.batch);
        }
        std::sort(sizes.begin(), sizes.end());
        sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
        std::vector<double> lat(sizes.size() * static_cast<size_t>(b_max), -1.0);
        std::vector<double> util(lat.size(), -1.0);
        ProfileTable skeleton;  // only for index math
        skeleton.sizes_ = sizes;
        skeleton.b_max_ = b_max;
        for (const auto& p : points) {
            size_t c = skeleton.cell(p.k, p.batch);
            if (lat[c] >= 0.0)
                throw FormatError("profile: duplicate point (k=" + std::to_string(p.k.gpcs) +
                                  ", batch=" + std::to_string(p.batch) + ")");
            lat[c] = p.latency_ms;
            util[c] = p.utilization;
        }
        for (size_t i = 0; i < sizes.size(); ++i)
            for (int b = 1; b <= b_max; ++b)
                if (lat[i * static_cast<size_t>(b_max) + static_cast<size_t>(b - 1)] < 0.0)
                    throw FormatError("profile: missing grid cell (k=" + std::to_string(sizes[i]) +
                                      ", batch=" + std::to_string(b) + ")");
        return ProfileTable(std::move(model), std::move(sizes), b_max, std::move(lat), std::move(util));
    }

    const std::string& model_name() const { return model_; }
    const std::vector<int>& sizes() const { return sizes_; }
    int b_max() const { return b_max_; }
    PartitionSize max_size() const { return PartitionSize{sizes_.back()}; }

    bool contains(PartitionSize k, int batch) const {
        return batch >= 1 && batch <= b_max_ &&
               std::binary_search(sizes_.begin(), sizes_.end(), k.gpcs);
    }

    // Exact lookups; the grid is complete by construction, so no interpolation.
    double latency_ms(PartitionSize k, int batch) const { return latency_[cell(k, batch)]; }
    double utilization(PartitionSize k, int batch) const { return util_[cell(k, batch)]; }
    double throughput_qps(PartitionSize k, int batch) const { return 1000.0 / latency_ms(k, batch); }

    std::vector<ProfilePoint> points() const {
        std::vector<ProfilePoint> out;
        out.reserve(latency_.size());
        for (int k : sizes_)
            for (int b = 1; b <= b_max_; ++b)
                out.push_back({PartitionSize{k}, b, latency_ms(k, b), utilization(k, b),
                               throughput_qps(k, b)});
        return out;
    }

private:
    ProfileTable() = default;

    size_t cell(PartitionSize k, int batch) const {
        auto it = std::lower_bound(sizes_.begin(), sizes_.end(), k.gpcs);
        if (it == sizes_.end() || *it != k.gpcs)
            throw LookupError("profile: unknown partition size k=" + std::to_string(k.gpcs));
        if (batch < 1 || batch > b_max_)
            throw LookupError("profile: batch " + std::to_string(batch) + " outside grid 1.." +
                              std::to_string(b_max_));
        return static_cast<size_t>(it - sizes_.begin()) * static_cast<size_t>(b_max_) +
               static_cast<size_t>(batch - 1);
    }

    void validate() const {
        if (sizes_.empty()) throw ParamError("profile: empty size set");
        if (b_max_ < 1) throw ParamError("profile: b_max must be >= 1");
        if (!std::is_sorted(sizes_.begin(), sizes_.end()) ||
            std::adjacent_find(sizes_.begin(), sizes_.end()) != sizes_.end())
            throw ValidationError("profile: sizes must be strictly ascending");
        if (sizes_.front() < 1) throw ValidationError("profile: partition sizes must be positive");
        const size_t expect = sizes_.size() * static_cast<size_t>(b_max_);
        if (latency_.size() != expect || util_.size() != expect)
            throw FormatError("profile: incomplete grid");
        for (size_t i = 0; i < expect; ++i) {
            if (!(latency_[i] > 0.0))
                throw ValidationError("profile: latency must be positive");
            if (util_[i] < 0.0 || util_[i] > 1.0)
                throw ValidationError("profile: utilization outside [0,1]");
        }
        // Monotonicity, with headroom for round-off in synthesized flat regions.
        const double tol = 1e-9;
        for (size_t i = 0; i < sizes_.size(); ++i) {
            for (int b = 2; b <= b_max_; ++b) {
                size_t c = i * static_cast<size_t>(b_max_) + static_cast<size_t>(b - 1);
                if (util_[c] < util_[c - 1] - tol)
                    throw ValidationError("profile: utilization must be nondecreasing in batch");
                if (latency_[c] < latency_[c - 1] * (1.0 - tol))
                    throw ValidationError("profile: latency must be nondecreasing in batch");
            }
        }
        for (size_t i = 1; i < sizes_.size(); ++i) {
            for (int b = 1; b <= b_max_; ++b) {
                size_t c = i * static_cast<size_t>(b_max_) + static_cast<size_t>(b - 1);
                size_t prev = c - static_cast<size_t>(b_max_);
                if (latency_[c] > latency_[prev] * (1.0 + tol))
                    throw ValidationError("profile: latency must be nonincreasing in partition size");
            }
        }
    }

    std::string model_;
    std::vector<int> sizes_;
    int b_max_ = 0;
    std::vector<double> latency_;
    std::vector<double> util_;
};

// Build a complete grid from the parametric model:
//   utilization(k,b) = min(util_cap, parallelism·b / k)
//   latency(k,b)     = overhead + work·b / (k · utilization)
// Below the plateau this collapses to a flat latency of overhead + work/parallelism,
// so small partitions serve small batches as fast as large ones do.
inline ProfileTable synth_profile(const SyntheticProfileParams& params,
                                  const std::vector<int>& sizes, int b_max,
                                  std::string model = "synthetic") {
    if (!(params.work_per_sample > 0.0)) throw ParamError("synth_profile: work_per_sample must be > 0");
    if (params.fixed_overhead < 0.0) throw ParamError("synth_profile: fixed_overhead must be >= 0");
    if (!(params.parallelism_per_sample > 0.0))
        throw ParamError("synth_profile: parallelism_per_sample must be > 0");
    if (!(params.util_cap > 0.0) || params.util_cap > 1.0)
        throw ParamError("synth_profile: util_cap must be in (0,1]");
    if (sizes.empty()) throw ParamError("synth_profile: empty size set");
    if (b_max < 1) throw ParamError("synth_profile: b_max must be >= 1");

    std::vector<int> sorted = sizes;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    std::vector<double> lat, util;
    lat.reserve(sorted.size() * static_cast<size_t>(b_max));
    util.reserve(lat.capacity());
    for (int k : sorted) {
        for (int b = 1; b <= b_max; ++b) {
            double u = std::min(params.util_cap,
                                params.parallelism_per_sample * static_cast<double>(b) /
                                    static_cast<double>(k));
            double l = params.fixed_overhead +
                       params.work_per_sample * static_cast<double>(b) /
                           (static_cast<double>(k) * u);
            util.push_back(u);
            lat.push_back(l);
        }
    }
    return ProfileTable(std::move(model), std::move(sorted), b_max, std::move(lat), std::move(util));
}

// CSV schema: header `model,k,batch,latency_ms,utilization`, one row per grid
// cell, throughput derived as 1000/latency_ms. A file may carry several models;
// pass `model` to select one, otherwise the file must contain exactly one.
inline ProfileTable load_profile_csv(std::istream& in,
                                     std::optional<std::string> model = std::nullopt) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("profile csv: empty input");
    auto strip = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        size_t b = s.find_last_not_of(" \t\r\n");
        return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    if (strip(line) != "model,k,batch,latency_ms,utilization")
        throw FormatError("profile csv: expected header model,k,batch,latency_ms,utilization");

    std::map<std::string, std::vector<ProfilePoint>> by_model;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (strip(line).empty()) continue;
        std::stringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(strip(field));
        if (fields.size() != 5)
            throw FormatError("profile csv: line " + std::to_string(lineno) + ": expected 5 fields");
        try {
            ProfilePoint p;
            p.k = PartitionSize{std::stoi(fields[1])};
            p.batch = std::stoi(fields[2]);
            p.latency_ms = std::stod(fields[3]);
            p.utilization = std::stod(fields[4]);
            by_model[fields[0]].push_back(p);
        } catch (const std::logic_error&) {
            throw FormatError("profile csv: line " + std::to_string(lineno) + ": bad numeric field");
        }
    }
    if (by_model.empty()) throw FormatError("profile csv: no data rows");
    if (model) {
        auto it = by_model.find(*model);
        if (it == by_model.end()) throw FormatError("profile csv: model '" + *model + "' not found");
        return ProfileTable::from_points(it->first, it->second);
    }
    if (by_model.size() > 1)
        throw FormatError("profile csv: multiple models present; select one");
    return ProfileTable::from_points(by_model.begin()->first, by_model.begin()->second);
}

inline ProfileTable load_profile_csv_file(const std::string& path,
                                          std::optional<std::string> model = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw FormatError("profile csv: cannot open " + path);
    return load_profile_csv(in, std::move(model));
}

// Smallest batch at which partition k reaches the utilization threshold: the
// knee of its latency curve. Falls back to b_max when the threshold is never
// reached, so every size still owns a batch segment.
inline int knee(const ProfileTable& table, PartitionSize k, double threshold = 0.8) {
    if (!(threshold > 0.0) || threshold > 1.0) throw ParamError("knee: threshold must be in (0,1]");
    for (int b = 1; b <= table.b_max(); ++b)
        if (table.utilization(k, b) >= threshold) return b;
    return table.b_max();
}

}  // namespace migserve
