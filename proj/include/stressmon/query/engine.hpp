#pragma once

// Per-subject EMA query engine.
//
// Initial phase: the first N samples are only observed; their feature
// statistics fix the normaliser. Query phase: each new sample is asked for a
// label with probability clamp(n / C, p_min, 1), where n counts previously
// stored unlabeled samples inside a Euclidean ball in normalised space. Once a
// lattice region has collected L_max labels it stops asking altogether.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "stressmon/error.hpp"
#include "stressmon/hrv/features.hpp"
#include "stressmon/labels.hpp"
#include "stressmon/util/binary_io.hpp"
#include "stressmon/util/numeric.hpp"

namespace stressmon::query {

using hrv::FeatureArray;
using hrv::kFeatureCount;
using RegionId = std::array<std::int64_t, kFeatureCount>;

struct QueryConfig {
    std::size_t initial_count = 100;
    double p_min = 0.1;
    double density_divisor = 50.0;
    double neighborhood_radius = 1.0;
    double region_cell_size = 1.0;
    std::size_t saturation_threshold = 10;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (!(p_min > 0.0 && p_min <= 1.0))
            fail(ErrorKind::InvalidArgument, "query_p_min", "p_min must lie in (0, 1]");
        if (!(density_divisor > 0.0) || !(neighborhood_radius > 0.0) || !(region_cell_size > 0.0))
            fail(ErrorKind::InvalidArgument, "query_positive", "density divisor, radius and cell size must be positive");
        if (saturation_threshold < 1)
            fail(ErrorKind::InvalidArgument, "query_saturation", "saturation threshold must be at least 1");
    }

    bool operator==(const QueryConfig&) const = default;
};

/// Component-wise floor(x / g).
inline RegionId region_of(const FeatureArray& normalized, double cell_size) {
    RegionId id{};
    for (std::size_t k = 0; k < kFeatureCount; ++k)
        id[k] = static_cast<std::int64_t>(std::floor(normalized[k] / cell_size));
    return id;
}

inline std::string region_to_string(const RegionId& id) {
    std::string s;
    for (std::size_t k = 0; k < id.size(); ++k) {
        if (k) s += ':';
        s += std::to_string(id[k]);
    }
    return s;
}

struct SampleRecord {
    std::int64_t sample_id = 0;
    std::string subject_id;
    std::int64_t timestamp_ms = 0;
    hrv::FeatureVector raw_features;
    std::optional<FeatureArray> normalized_features;
    std::optional<StressLevel> label;
    std::optional<Activity> activity;
    bool queried = false;
    std::optional<RegionId> region_id;
};

struct RegionState {
    RegionId region_id{};
    std::size_t unlabeled_count = 0;
    std::size_t labeled_count = 0;
    bool saturated = false;

    bool operator==(const RegionState&) const = default;
};

/// Welford accumulator over raw features, frozen at the end of the initial
/// phase. Zero-variance dimensions divide by 1.
class Normalizer {
public:
    void update(const FeatureArray& x) {
        ++count_;
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            const double d = x[k] - mean_[k];
            mean_[k] += d / static_cast<double>(count_);
            m2_[k] += d * (x[k] - mean_[k]);
        }
    }

    void freeze() {
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            frozen_mean_[k] = count_ ? mean_[k] : 0.0;
            const double sd = count_ ? std::sqrt(m2_[k] / static_cast<double>(count_)) : 0.0;
            frozen_std_[k] = sd > 0.0 ? sd : 1.0;
        }
        frozen_ = true;
    }

    FeatureArray normalize(const FeatureArray& x) const {
        if (!frozen_) fail(ErrorKind::Protocol, "normalizer_unavailable", "normaliser not frozen yet");
        FeatureArray z{};
        for (std::size_t k = 0; k < kFeatureCount; ++k) z[k] = (x[k] - frozen_mean_[k]) / frozen_std_[k];
        return z;
    }

    bool frozen() const noexcept { return frozen_; }
    std::size_t count() const noexcept { return count_; }
    const FeatureArray& mean() const noexcept { return frozen_ ? frozen_mean_ : mean_; }
    const FeatureArray& stddev() const noexcept { return frozen_std_; }

    void write(util::ByteWriter& w) const {
        w.u64(count_);
        w.u8(frozen_ ? 1 : 0);
        for (const auto* arr : {&mean_, &m2_, &frozen_mean_, &frozen_std_})
            for (double v : *arr) w.f64(v);
    }
    static Normalizer read(util::ByteReader& r) {
        Normalizer n;
        n.count_ = r.u64();
        n.frozen_ = r.u8() != 0;
        for (auto* arr : {&n.mean_, &n.m2_, &n.frozen_mean_, &n.frozen_std_})
            for (double& v : *arr) v = r.f64();
        return n;
    }

    bool operator==(const Normalizer&) const = default;

private:
    std::size_t count_ = 0;
    bool frozen_ = false;
    FeatureArray mean_{}, m2_{}, frozen_mean_{}, frozen_std_{};
};

struct QueryDecision {
    bool trigger = false;
    double probability = 0.0;
    std::size_t neighbor_count = 0;
    RegionId region_id{};

    bool operator==(const QueryDecision&) const = default;
};

/// `sample_id,n,probability,trigger,region_id`
inline std::string audit_csv_line(std::int64_t sample_id, const QueryDecision& d) {
    return std::to_string(sample_id) + ',' + std::to_string(d.neighbor_count) + ',' + util::format_double(d.probability) +
           ',' + (d.trigger ? "1" : "0") + ',' + region_to_string(d.region_id);
}

struct ObserveResult {
    bool accepted = false;
    bool duplicate = false;
};

struct DecideResult {
    bool duplicate = false;
    QueryDecision decision;
};

/// Either an initial-phase observation or a query decision.
struct SubmitResult {
    bool duplicate = false;
    std::optional<QueryDecision> decision;
};

inline constexpr std::uint32_t kSnapshotVersion = 1;

class QueryEngine {
public:
    explicit QueryEngine(QueryConfig cfg = {}) : cfg_(cfg), rng_(cfg.rng_seed) {
        cfg_.validate();
        if (cfg_.initial_count == 0) normalizer_.freeze();
    }

    const QueryConfig& config() const noexcept { return cfg_; }
    bool in_initial_phase() const noexcept { return !normalizer_.frozen(); }
    std::size_t sample_count() const noexcept { return records_.size(); }
    const std::vector<SampleRecord>& records() const noexcept { return records_; }
    const std::map<RegionId, RegionState>& regions() const noexcept { return regions_; }
    const Normalizer& normalizer() const noexcept { return normalizer_; }

    const SampleRecord* find(std::int64_t sample_id) const {
        const auto it = index_.find(sample_id);
        return it == index_.end() ? nullptr : &records_[it->second];
    }

    /// Initial-phase intake. Never triggers. The N-th call freezes the
    /// normaliser and places every stored sample in its region.
    ObserveResult observe(SampleRecord sample) {
        if (index_.contains(sample.sample_id)) return {false, true};
        if (!in_initial_phase())
            fail(ErrorKind::Protocol, "initial_phase_over", "observe called after the initial phase");
        normalizer_.update(sample.raw_features.to_array());
        sample.queried = false;
        sample.label.reset();
        sample.activity.reset();
        sample.normalized_features.reset();
        sample.region_id.reset();
        store(std::move(sample));
        if (records_.size() >= cfg_.initial_count) {
            normalizer_.freeze();
            for (std::size_t i = 0; i < records_.size(); ++i) place(i);
        }
        return {true, false};
    }

    DecideResult decide_query(SampleRecord sample) {
        if (const auto* existing = find(sample.sample_id)) {
            DecideResult r{true, {}};
            r.decision.region_id = existing->region_id.value_or(RegionId{});
            return r;
        }
        if (in_initial_phase())
            fail(ErrorKind::Protocol, "normalizer_unavailable", "query decision requested during the initial phase");

        const auto z = normalizer_.normalize(sample.raw_features.to_array());
        QueryDecision d;
        d.region_id = region_of(z, cfg_.region_cell_size);
        d.neighbor_count = neighbor_count(z);
        const auto it = regions_.find(d.region_id);
        const bool saturated = it != regions_.end() && it->second.saturated;
        d.probability = probability_for(d.neighbor_count, saturated);
        d.trigger = bernoulli(d.probability);

        sample.normalized_features = z;
        sample.region_id = d.region_id;
        sample.queried = d.trigger;
        sample.label.reset();
        sample.activity.reset();
        const std::size_t i = store(std::move(sample));
        place(i);
        return {false, d};
    }

    SubmitResult submit(SampleRecord sample) {
        if (index_.contains(sample.sample_id)) return {true, std::nullopt};
        if (in_initial_phase()) {
            observe(std::move(sample));
            return {false, std::nullopt};
        }
        const auto r = decide_query(std::move(sample));
        return {r.duplicate, r.decision};
    }

    void record_label(std::int64_t sample_id, StressLevel level, Activity activity) {
        const auto it = index_.find(sample_id);
        if (it == index_.end()) fail(ErrorKind::NotFound, "unknown_sample", "no sample " + std::to_string(sample_id));
        if (!stress_level_from_int(static_cast<int>(level)))
            fail(ErrorKind::Validation, "invalid_label", "stress level outside the five EMA levels");
        auto& rec = records_[it->second];
        if (!rec.queried) fail(ErrorKind::Protocol, "not_queried", "sample " + std::to_string(sample_id) + " was never queried");
        if (rec.label) fail(ErrorKind::Conflict, "already_labeled", "sample " + std::to_string(sample_id) + " already labeled");
        rec.label = level;
        rec.activity = activity;
        unlabeled_[it->second] = 0;
        auto& reg = regions_.at(*rec.region_id);
        --reg.unlabeled_count;
        ++reg.labeled_count;
        reg.saturated = reg.labeled_count >= cfg_.saturation_threshold;
    }

    /// clamp(n / C, p_min, 1); saturated regions are silent.
    double probability_for(std::size_t neighbors, bool saturated) const {
        if (saturated) return 0.0;
        return std::clamp(static_cast<double>(neighbors) / cfg_.density_divisor, cfg_.p_min, 1.0);
    }

    /// Stored unlabeled samples within the neighbourhood radius (inclusive).
    std::size_t neighbor_count(const FeatureArray& z) const {
        const double r2 = cfg_.neighborhood_radius * cfg_.neighborhood_radius;
        std::size_t n = 0;
        for (std::size_t i = 0; i < unlabeled_.size(); ++i) {
            if (!unlabeled_[i] || !placed_[i]) continue;
            const double* p = &coords_[i * kFeatureCount];
            double d2 = 0.0;
            for (std::size_t k = 0; k < kFeatureCount; ++k) d2 += (p[k] - z[k]) * (p[k] - z[k]);
            if (d2 <= r2) ++n;
        }
        return n;
    }

    // -- persistence ---------------------------------------------------------

    std::string snapshot() const;
    static QueryEngine restore(std::string_view bytes);

    bool operator==(const QueryEngine& o) const {
        if (!(cfg_ == o.cfg_) || !(normalizer_ == o.normalizer_) || regions_ != o.regions_ ||
            records_.size() != o.records_.size())
            return false;
        std::ostringstream a, b;
        a << rng_;
        b << o.rng_;
        if (a.str() != b.str()) return false;
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const auto& x = records_[i];
            const auto& y = o.records_[i];
            if (x.sample_id != y.sample_id || x.subject_id != y.subject_id || x.timestamp_ms != y.timestamp_ms ||
                !(x.raw_features == y.raw_features) || x.normalized_features != y.normalized_features ||
                x.label != y.label || x.activity != y.activity || x.queried != y.queried || x.region_id != y.region_id)
                return false;
        }
        return true;
    }

private:
    bool bernoulli(double p) {
        // 53-bit uniform in [0, 1): p = 1 always fires, p = 0 never does.
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        return u < p;
    }

    std::size_t store(SampleRecord sample) {
        const std::size_t i = records_.size();
        index_.emplace(sample.sample_id, i);
        unlabeled_.push_back(sample.label ? 0 : 1);
        placed_.push_back(0);
        coords_.insert(coords_.end(), kFeatureCount, 0.0);
        records_.push_back(std::move(sample));
        return i;
    }

    void place(std::size_t i) {
        auto& rec = records_[i];
        if (!rec.normalized_features) rec.normalized_features = normalizer_.normalize(rec.raw_features.to_array());
        if (!rec.region_id) rec.region_id = region_of(*rec.normalized_features, cfg_.region_cell_size);
        std::copy(rec.normalized_features->begin(), rec.normalized_features->end(), coords_.begin() + static_cast<std::ptrdiff_t>(i * kFeatureCount));
        placed_[i] = 1;
        auto [it, inserted] = regions_.try_emplace(*rec.region_id);
        auto& reg = it->second;
        reg.region_id = *rec.region_id;
        if (rec.label) ++reg.labeled_count;
        else ++reg.unlabeled_count;
        reg.saturated = reg.labeled_count >= cfg_.saturation_threshold;
    }

    QueryConfig cfg_;
    std::mt19937_64 rng_;
    Normalizer normalizer_;
    std::vector<SampleRecord> records_;
    std::unordered_map<std::int64_t, std::size_t> index_;
    std::map<RegionId, RegionState> regions_;
    // Dense copies for the neighbour scan.
    std::vector<double> coords_;
    std::vector<char> unlabeled_;
    std::vector<char> placed_;
};

// ---------------------------------------------------------------------------
// Snapshot encoding. Layout is documented in docs/snapshot_format.md.
// ---------------------------------------------------------------------------

namespace detail {

enum SnapshotTag : std::uint8_t { kTagConfig = 1, kTagNormalizer = 2, kTagRng = 3, kTagSample = 4, kTagRegion = 5, kTagEnd = 0xFF };

inline constexpr std::string_view kSnapshotMagic = "SMQE";

inline void put_record(util::ByteWriter& out, std::uint8_t tag, const std::string& payload) {
    out.u8(tag);
    out.u32(static_cast<std::uint32_t>(payload.size()));
    out.raw(payload);
}

} // namespace detail

inline std::string QueryEngine::snapshot() const {
    using namespace detail;
    util::ByteWriter out;
    out.raw(kSnapshotMagic);
    out.u32(kSnapshotVersion);

    util::ByteWriter c;
    c.u64(cfg_.initial_count);
    c.f64(cfg_.p_min);
    c.f64(cfg_.density_divisor);
    c.f64(cfg_.neighborhood_radius);
    c.f64(cfg_.region_cell_size);
    c.u64(cfg_.saturation_threshold);
    c.u64(cfg_.rng_seed);
    put_record(out, kTagConfig, c.bytes());

    util::ByteWriter n;
    normalizer_.write(n);
    put_record(out, kTagNormalizer, n.bytes());

    std::ostringstream rs;
    rs << rng_;
    put_record(out, kTagRng, rs.str());

    for (const auto& rec : records_) {
        util::ByteWriter s;
        s.i64(rec.sample_id);
        s.str(rec.subject_id);
        s.i64(rec.timestamp_ms);
        for (double v : rec.raw_features.to_array()) s.f64(v);
        s.u32(rec.raw_features.flags);
        s.u8(rec.normalized_features ? 1 : 0);
        if (rec.normalized_features)
            for (double v : *rec.normalized_features) s.f64(v);
        s.u8(rec.queried ? 1 : 0);
        s.u8(rec.label ? static_cast<std::uint8_t>(*rec.label) : 0xFF);
        s.u8(rec.activity ? static_cast<std::uint8_t>(*rec.activity) : 0xFF);
        s.u8(rec.region_id ? 1 : 0);
        if (rec.region_id)
            for (auto v : *rec.region_id) s.i64(v);
        put_record(out, kTagSample, s.bytes());
    }
    for (const auto& [id, reg] : regions_) {
        util::ByteWriter s;
        for (auto v : id) s.i64(v);
        s.u64(reg.unlabeled_count);
        s.u64(reg.labeled_count);
        s.u8(reg.saturated ? 1 : 0);
        put_record(out, kTagRegion, s.bytes());
    }

    util::ByteWriter end;
    end.u64(records_.size());
    end.u64(regions_.size());
    end.u32(util::crc32(out.bytes()));
    put_record(out, kTagEnd, end.bytes());
    return out.take();
}

inline QueryEngine QueryEngine::restore(std::string_view bytes) {
    using namespace detail;
    util::ByteReader in(bytes);
    if (bytes.size() < 8 || in.take(4) != kSnapshotMagic)
        fail(ErrorKind::Corrupt, "snapshot_magic", "not a query-engine snapshot");
    const auto version = in.u32();
    if (version > kSnapshotVersion)
        fail(ErrorKind::Incompatible, "snapshot_version",
             "snapshot format version " + std::to_string(version) + " is newer than supported version " +
                 std::to_string(kSnapshotVersion));
    if (version == 0) fail(ErrorKind::Corrupt, "snapshot_version", "invalid snapshot version 0");

    std::optional<QueryConfig> cfg;
    std::optional<Normalizer> norm;
    std::string rng_state;
    std::vector<SampleRecord> samples;
    std::map<RegionId, RegionState> stored_regions;
    bool ended = false;
    while (!in.done()) {
        const std::size_t record_start = in.position();
        const auto tag = in.u8();
        const auto len = in.u32();
        util::ByteReader r(in.take(len));
        switch (tag) {
        case kTagConfig: {
            QueryConfig c;
            c.initial_count = r.u64();
            c.p_min = r.f64();
            c.density_divisor = r.f64();
            c.neighborhood_radius = r.f64();
            c.region_cell_size = r.f64();
            c.saturation_threshold = r.u64();
            c.rng_seed = r.u64();
            cfg = c;
            break;
        }
        case kTagNormalizer: norm = Normalizer::read(r); break;
        case kTagRng: rng_state = std::string(r.take(len)); break;
        case kTagSample: {
            SampleRecord s;
            s.sample_id = r.i64();
            s.subject_id = r.str();
            s.timestamp_ms = r.i64();
            FeatureArray raw{};
            for (double& v : raw) v = r.f64();
            const auto flags = r.u32();
            s.raw_features = hrv::FeatureVector::from_array(raw, flags);
            if (r.u8()) {
                FeatureArray z{};
                for (double& v : z) v = r.f64();
                s.normalized_features = z;
            }
            s.queried = r.u8() != 0;
            if (const auto l = r.u8(); l != 0xFF) {
                if (!stress_level_from_int(l)) fail(ErrorKind::Corrupt, "snapshot_label", "bad label in snapshot");
                s.label = static_cast<StressLevel>(l);
            }
            if (const auto a = r.u8(); a != 0xFF) {
                if (!activity_from_int(a)) fail(ErrorKind::Corrupt, "snapshot_activity", "bad activity in snapshot");
                s.activity = static_cast<Activity>(a);
            }
            if (r.u8()) {
                RegionId id{};
                for (auto& v : id) v = r.i64();
                s.region_id = id;
            }
            samples.push_back(std::move(s));
            break;
        }
        case kTagRegion: {
            RegionState reg;
            for (auto& v : reg.region_id) v = r.i64();
            reg.unlabeled_count = r.u64();
            reg.labeled_count = r.u64();
            reg.saturated = r.u8() != 0;
            stored_regions[reg.region_id] = reg;
            break;
        }
        case kTagEnd: {
            const auto nrec = r.u64();
            const auto nreg = r.u64();
            const auto crc = r.u32();
            if (crc != util::crc32(bytes.substr(0, record_start)))
                fail(ErrorKind::Corrupt, "snapshot_crc", "snapshot checksum mismatch");
            if (nrec != samples.size() || nreg != stored_regions.size())
                fail(ErrorKind::Corrupt, "snapshot_counts", "snapshot record counts disagree");
            ended = true;
            break;
        }
        default: fail(ErrorKind::Corrupt, "snapshot_tag", "unknown snapshot record tag " + std::to_string(tag));
        }
        if (ended) break;
    }
    if (!ended || !in.done()) fail(ErrorKind::Corrupt, "snapshot_truncated", "snapshot has no valid end record");
    if (!cfg || !norm || rng_state.empty()) fail(ErrorKind::Corrupt, "snapshot_incomplete", "snapshot lacks required records");

    QueryEngine e(*cfg);
    e.normalizer_ = *norm;
    std::istringstream rs(rng_state);
    rs >> e.rng_;
    if (!rs) fail(ErrorKind::Corrupt, "snapshot_rng", "unreadable generator state");
    for (auto& s : samples) {
        const bool placed = s.region_id.has_value();
        const std::size_t i = e.store(std::move(s));
        if (placed) e.place(i);
    }
    if (e.regions_ != stored_regions)
        fail(ErrorKind::Corrupt, "snapshot_regions", "region states inconsistent with stored samples");
    return e;
}

} // namespace stressmon::query
