#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace urbanmosaic {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base of every error thrown by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value violated a documented precondition or invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A file or wire document did not match its format.
class FormatError : public Error {
public:
    using Error::Error;
};

/// An id was requested that does not exist.
class NotFoundError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Identity and time
// ---------------------------------------------------------------------------

using ImageId = std::uint64_t;

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(Timestamp t);

/// Accepts "YYYY-MM-DDTHH:MM:SS" with an optional trailing "Z" or "+00:00",
/// and a bare "YYYY-MM-DD". Throws FormatError otherwise.
Timestamp parse_iso8601(std::string_view text);

/// Half-open [start, end).
struct TimeInterval {
    Timestamp start = 0;
    Timestamp end = 0;

    bool contains(Timestamp t) const noexcept { return start <= t && t < end; }
    Timestamp length() const noexcept { return end - start; }

    bool operator==(const TimeInterval&) const = default;
};

/// Sorted, pairwise-disjoint intervals.
class IntervalSet {
public:
    IntervalSet() = default;

    /// Validates ordering and disjointness; throws ValidationError.
    explicit IntervalSet(std::vector<TimeInterval> intervals);

    /// Sorts and merges overlapping or touching intervals.
    static IntervalSet normalized(std::vector<TimeInterval> intervals);

    bool contains(Timestamp t) const noexcept;
    bool empty() const noexcept { return intervals_.empty(); }
    std::size_t size() const noexcept { return intervals_.size(); }
    const std::vector<TimeInterval>& intervals() const noexcept { return intervals_; }

    auto begin() const noexcept { return intervals_.begin(); }
    auto end() const noexcept { return intervals_.end(); }

    bool operator==(const IntervalSet&) const = default;

private:
    std::vector<TimeInterval> intervals_;
};

// ---------------------------------------------------------------------------
// Geometry (planar, lon/lat degrees)
// ---------------------------------------------------------------------------

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool operator==(const GeoPoint&) const = default;
};

bool is_valid(const GeoPoint& p) noexcept;

struct BoundingBox {
    double min_lat = 0.0;
    double min_lon = 0.0;
    double max_lat = 0.0;
    double max_lon = 0.0;

    bool contains(const GeoPoint& p) const noexcept {
        return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
    }
    bool intersects(const BoundingBox& o) const noexcept {
        return min_lat <= o.max_lat && o.min_lat <= max_lat && min_lon <= o.max_lon &&
               o.min_lon <= max_lon;
    }
    double diagonal() const noexcept;

    bool operator==(const BoundingBox&) const = default;
};

using Ring = std::vector<GeoPoint>;

/// A simple polygon with optional holes. Rings are stored closed
/// (first vertex repeated at the end).
class Polygon {
public:
    Polygon() = default;

    /// Closes open rings and validates: every ring needs at least three
    /// distinct vertices and finite coordinates. Throws ValidationError.
    explicit Polygon(Ring exterior, std::vector<Ring> holes = {});

    const Ring& exterior() const noexcept { return exterior_; }
    const std::vector<Ring>& holes() const noexcept { return holes_; }
    const BoundingBox& bbox() const noexcept { return bbox_; }

    /// Axis-aligned rectangle helper.
    static Polygon rectangle(const BoundingBox& box);

    bool operator==(const Polygon& o) const { return exterior_ == o.exterior_ && holes_ == o.holes_; }

private:
    Ring exterior_;
    std::vector<Ring> holes_;
    BoundingBox bbox_;
};

/// Crossing-number test with the half-open edge rule: an edge counts when
/// it straddles the horizontal line through p with one endpoint strictly
/// above, and the crossing lies strictly east of p. Points on a shared
/// edge of two adjacent polygons therefore belong to exactly one of them.
bool point_in_polygon(const GeoPoint& p, const Polygon& poly) noexcept;

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

struct ImageRecord {
    ImageId id = 0;
    Timestamp timestamp = 0;
    GeoPoint location;
    double heading = 0.0;
    std::uint16_t camera_id = 0;
    std::uint16_t vehicle_id = 0;
    std::string blob_ref;

    bool operator==(const ImageRecord&) const = default;
};

/// Throws ValidationError on out-of-range coordinates or heading.
void validate(const ImageRecord& record);

enum class Grid : std::uint8_t { G2x2 = 0, G4x4 = 1 };

/// One cell of the 2x2 or 4x4 image grid. Rows run top to bottom,
/// columns left to right.
struct RegionId {
    Grid grid = Grid::G2x2;
    std::uint8_t row = 0;
    std::uint8_t col = 0;

    static constexpr std::size_t kCount = 20;
    /// Provenance code used for coarse (whole-image) descriptors.
    static constexpr std::uint8_t kCoarseCode = 0xFF;

    /// 0..3 for G2x2 row-major, 4..19 for G4x4 row-major.
    std::uint8_t code() const noexcept;
    static RegionId from_code(std::uint8_t code);

    std::uint8_t side() const noexcept { return grid == Grid::G2x2 ? 2 : 4; }

    /// Cell extent in normalized image coordinates.
    struct Rect {
        double x0, y0, x1, y1;
    };
    Rect cell() const noexcept;

    std::string to_string() const;

    bool operator==(const RegionId&) const = default;
};

/// All 20 regions in storage order.
const std::array<RegionId, RegionId::kCount>& all_regions() noexcept;

}  // namespace urbanmosaic
