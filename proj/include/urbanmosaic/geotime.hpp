#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urbanmosaic/core.hpp"
#include "urbanmosaic/lsh.hpp"
#include "urbanmosaic/store.hpp"

namespace urbanmosaic {

struct SpatioTemporalConstraint {
    std::optional<Polygon> polygon;
    std::optional<IntervalSet> intervals;

    bool empty() const noexcept { return !polygon && !intervals; }
};

/// Ids whose timestamp falls in the interval set. Each interval maps to a
/// contiguous, binary-searched range of the timestamp-sorted corpus.
IdSet select_time(const Corpus& corpus, const IntervalSet& intervals);

/// Ids located inside the polygon.
IdSet select_space(const Corpus& corpus, const Polygon& polygon, unsigned threads = 0);

/// Temporal ranges first, then a parallel spatial test over the survivors.
/// Throws ValidationError when the constraint is empty.
IdSet select(const Corpus& corpus, const SpatioTemporalConstraint& constraint, unsigned threads = 0);

// ---------------------------------------------------------------------------

/// Uniform grid over polygon bounding boxes; each cell lists the polygons
/// whose box touches it. Cell size defaults to the median box diagonal.
class PolygonGrid {
public:
    explicit PolygonGrid(const PartitionLayer& layer, double cell_size = 0.0);

    /// Candidate polygon indices for p (a superset of the containing ones).
    std::span<const std::uint32_t> candidates(const GeoPoint& p) const noexcept;
    double cell_size() const noexcept { return cell_; }

private:
    BoundingBox extent_{};
    double cell_ = 1.0;
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<std::uint32_t> offsets_;
    std::vector<std::uint32_t> entries_;
};

struct PolygonAggregate {
    std::string name;
    std::uint64_t count = 0;
    double sum = 0.0;

    double mean() const noexcept;
    bool operator==(const PolygonAggregate&) const = default;
};

struct AggregateResult {
    std::string layer;
    std::vector<PolygonAggregate> polygons;  // aligned with layer.features
    std::uint64_t total_points = 0;
    /// Points inside at least one polygon.
    std::uint64_t assigned_points = 0;
    std::vector<std::string> warnings;
};

/// Exact per-polygon counts and weight sums (weight 1 when `weights` is
/// empty). Overlaps found by a sampled check or by a point landing in two
/// polygons are reported in `warnings`.
AggregateResult aggregate_partition(std::span<const GeoPoint> points, const PartitionLayer& layer,
                                    std::span<const double> weights = {}, unsigned threads = 0);

struct GridAggregate {
    BoundingBox bbox;
    double cell_size = 0.0;
    std::size_t rows = 0;  // along latitude, from min_lat
    std::size_t cols = 0;  // along longitude, from min_lon
    std::vector<std::uint64_t> counts;  // row-major

    std::uint64_t at(std::size_t row, std::size_t col) const { return counts.at(row * cols + col); }
    std::uint64_t total() const noexcept;
};

/// Half-open cells [x, x + cell); only points in the half-open bbox count.
GridAggregate aggregate_grid(std::span<const GeoPoint> points, const BoundingBox& bbox, double cell_size_deg);

/// Counts per half-open bin [start + k*w, start + (k+1)*w) over the epoch.
TimeSeries temporal_histogram(std::span<const Timestamp> times, const TimeInterval& epoch, Timestamp bin_width);

enum class Comparison { Less, LessEqual, Greater, GreaterEqual };

/// Accepts "<", "<=", ">", ">=" and "lt", "le", "gt", "ge".
Comparison parse_comparison(const std::string& op);
std::string to_string(Comparison op);
bool compare(double value, Comparison op, double threshold) noexcept;

/// Sample i governs [t_i, t_{i+1}); the last sample extends by the median
/// sampling step (one second for a single-sample series). Adjacent
/// satisfying samples merge into maximal intervals.
IntervalSet intervals_where(const TimeSeries& series, Comparison op, double threshold);

}  // namespace urbanmosaic
