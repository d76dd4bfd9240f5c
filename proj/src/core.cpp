#include "urbanmosaic/core.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace urbanmosaic {

namespace {

template <typename Int>
bool parse_fixed(std::string_view text, std::size_t pos, std::size_t len, Int& out) {
    if (pos + len > text.size()) return false;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (text[i] < '0' || text[i] > '9') return false;
    }
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return ec == std::errc{} && ptr == text.data() + pos + len;
}

}  // namespace

std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    const sys_seconds tp{seconds{t}};
    const auto day_point = floor<days>(tp);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{tp - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

Timestamp parse_iso8601(std::string_view text) {
    using namespace std::chrono;
    auto fail = [&]() -> Timestamp {
        throw FormatError("invalid ISO-8601 timestamp: '" + std::string(text) + "'");
    };
    int y = 0;
    unsigned mo = 0, d = 0;
    int h = 0, mi = 0, s = 0;
    if (!parse_fixed(text, 0, 4, y) || text.size() < 10 || text[4] != '-' || text[7] != '-' ||
        !parse_fixed(text, 5, 2, mo) || !parse_fixed(text, 8, 2, d)) {
        return fail();
    }
    std::string_view rest = text.substr(10);
    if (!rest.empty()) {
        if ((rest[0] != 'T' && rest[0] != ' ') || rest.size() < 9 || rest[3] != ':' || rest[6] != ':' ||
            !parse_fixed(rest, 1, 2, h) || !parse_fixed(rest, 4, 2, mi) || !parse_fixed(rest, 7, 2, s)) {
            return fail();
        }
        rest = rest.substr(9);
        if (rest != "" && rest != "Z" && rest != "+00:00") return fail();
    }
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return fail();
    const sys_seconds tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
    return tp.time_since_epoch().count();
}

IntervalSet::IntervalSet(std::vector<TimeInterval> intervals) : intervals_(std::move(intervals)) {
    for (std::size_t i = 0; i < intervals_.size(); ++i) {
        if (intervals_[i].start >= intervals_[i].end) {
            throw ValidationError("interval " + std::to_string(i) + " has start >= end");
        }
        if (i > 0 && intervals_[i - 1].end > intervals_[i].start) {
            throw ValidationError("intervals must be sorted and disjoint (at index " +
                                  std::to_string(i) + ")");
        }
    }
}

IntervalSet IntervalSet::normalized(std::vector<TimeInterval> intervals) {
    std::erase_if(intervals, [](const TimeInterval& iv) { return iv.start >= iv.end; });
    std::sort(intervals.begin(), intervals.end(),
              [](const TimeInterval& a, const TimeInterval& b) { return a.start < b.start; });
    std::vector<TimeInterval> merged;
    for (const auto& iv : intervals) {
        if (!merged.empty() && iv.start <= merged.back().end) {
            merged.back().end = std::max(merged.back().end, iv.end);
        } else {
            merged.push_back(iv);
        }
    }
    IntervalSet out;
    out.intervals_ = std::move(merged);
    return out;
}

bool IntervalSet::contains(Timestamp t) const noexcept {
    // First interval with start > t; the candidate is the one before it.
    auto it = std::upper_bound(intervals_.begin(), intervals_.end(), t,
                               [](Timestamp v, const TimeInterval& iv) { return v < iv.start; });
    if (it == intervals_.begin()) return false;
    return t < std::prev(it)->end;
}

bool is_valid(const GeoPoint& p) noexcept {
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
           p.lon >= -180.0 && p.lon <= 180.0;
}

double BoundingBox::diagonal() const noexcept {
    return std::hypot(max_lat - min_lat, max_lon - min_lon);
}

namespace {

void close_and_check(Ring& ring, const char* what) {
    for (const auto& p : ring) {
        if (!std::isfinite(p.lat) || !std::isfinite(p.lon)) {
            throw ValidationError(std::string(what) + " ring has a non-finite coordinate");
        }
    }
    if (!ring.empty() && ring.front() != ring.back()) ring.push_back(ring.front());
    // Count distinct vertices ignoring the closing duplicate.
    std::vector<GeoPoint> distinct(ring.begin(), ring.empty() ? ring.end() : ring.end() - 1);
    std::sort(distinct.begin(), distinct.end(), [](const GeoPoint& a, const GeoPoint& b) {
        return a.lat != b.lat ? a.lat < b.lat : a.lon < b.lon;
    });
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) {
        throw ValidationError(std::string(what) + " ring needs at least 3 distinct vertices");
    }
}

bool ring_crossings_odd(const GeoPoint& p, const Ring& ring) noexcept {
    bool inside = false;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        const GeoPoint& a = ring[i];
        const GeoPoint& b = ring[j];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if (p.lon < x) inside = !inside;
        }
    }
    return inside;
}

}  // namespace

Polygon::Polygon(Ring exterior, std::vector<Ring> holes)
    : exterior_(std::move(exterior)), holes_(std::move(holes)) {
    close_and_check(exterior_, "exterior");
    for (auto& hole : holes_) close_and_check(hole, "interior");
    bbox_ = {exterior_[0].lat, exterior_[0].lon, exterior_[0].lat, exterior_[0].lon};
    for (const auto& p : exterior_) {
        bbox_.min_lat = std::min(bbox_.min_lat, p.lat);
        bbox_.max_lat = std::max(bbox_.max_lat, p.lat);
        bbox_.min_lon = std::min(bbox_.min_lon, p.lon);
        bbox_.max_lon = std::max(bbox_.max_lon, p.lon);
    }
}

Polygon Polygon::rectangle(const BoundingBox& box) {
    return Polygon({{box.min_lat, box.min_lon},
                    {box.min_lat, box.max_lon},
                    {box.max_lat, box.max_lon},
                    {box.max_lat, box.min_lon}});
}

bool point_in_polygon(const GeoPoint& p, const Polygon& poly) noexcept {
    if (poly.exterior().empty() || !poly.bbox().contains(p)) return false;
    if (!ring_crossings_odd(p, poly.exterior())) return false;
    for (const auto& hole : poly.holes()) {
        if (ring_crossings_odd(p, hole)) return false;
    }
    return true;
}

void validate(const ImageRecord& record) {
    if (!is_valid(record.location)) {
        throw ValidationError("image " + std::to_string(record.id) + " has an invalid location");
    }
    if (!std::isfinite(record.heading) || record.heading < 0.0 || record.heading >= 360.0) {
        throw ValidationError("image " + std::to_string(record.id) + " heading outside [0, 360)");
    }
}

std::uint8_t RegionId::code() const noexcept {
    return grid == Grid::G2x2 ? static_cast<std::uint8_t>(row * 2 + col)
                              : static_cast<std::uint8_t>(4 + row * 4 + col);
}

RegionId RegionId::from_code(std::uint8_t code) {
    if (code < 4) return {Grid::G2x2, static_cast<std::uint8_t>(code / 2), static_cast<std::uint8_t>(code % 2)};
    if (code < 20) {
        const std::uint8_t c = code - 4;
        return {Grid::G4x4, static_cast<std::uint8_t>(c / 4), static_cast<std::uint8_t>(c % 4)};
    }
    throw ValidationError("invalid region code " + std::to_string(code));
}

RegionId::Rect RegionId::cell() const noexcept {
    const double step = 1.0 / side();
    return {col * step, row * step, (col + 1) * step, (row + 1) * step};
}

std::string RegionId::to_string() const {
    return std::string(grid == Grid::G2x2 ? "2x2" : "4x4") + ":" + std::to_string(row) + "," +
           std::to_string(col);
}

const std::array<RegionId, RegionId::kCount>& all_regions() noexcept {
    static const auto regions = [] {
        std::array<RegionId, RegionId::kCount> out{};
        for (std::uint8_t c = 0; c < RegionId::kCount; ++c) out[c] = RegionId::from_code(c);
        return out;
    }();
    return regions;
}

}  // namespace urbanmosaic
