#include "urbanmosaic/geotime.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "urbanmosaic/parallel.hpp"

namespace urbanmosaic {

IdSet select_time(const Corpus& corpus, const IntervalSet& intervals) {
    const auto& records = corpus.records();
    auto by_time = [](const ImageRecord& r, Timestamp t) { return r.timestamp < t; };
    IdSet out;
    for (const auto& iv : intervals) {
        auto lo = std::lower_bound(records.begin(), records.end(), iv.start, by_time);
        auto hi = std::lower_bound(lo, records.end(), iv.end, by_time);
        for (auto it = lo; it != hi; ++it) out.push_back(it->id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

// Spatial test over candidate record indices, merged in chunk order.
IdSet filter_inside(const Corpus& corpus, const std::vector<std::size_t>& candidates, const Polygon& polygon,
                    unsigned threads) {
    if (threads == 0) threads = default_threads();
    std::vector<std::vector<ImageId>> parts(threads);
    parallel_chunks(candidates.size(), threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& r = corpus.records()[candidates[i]];
            if (point_in_polygon(r.location, polygon)) parts[chunk].push_back(r.id);
        }
    });
    IdSet out;
    for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

IdSet select_space(const Corpus& corpus, const Polygon& polygon, unsigned threads) {
    std::vector<std::size_t> all(corpus.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return filter_inside(corpus, all, polygon, threads);
}

IdSet select(const Corpus& corpus, const SpatioTemporalConstraint& constraint, unsigned threads) {
    if (constraint.empty()) throw ValidationError("spatio-temporal constraint needs a polygon or intervals");
    if (!constraint.intervals) return select_space(corpus, *constraint.polygon, threads);
    if (!constraint.polygon) return select_time(corpus, *constraint.intervals);

    const auto& records = corpus.records();
    auto by_time = [](const ImageRecord& r, Timestamp t) { return r.timestamp < t; };
    std::vector<std::size_t> candidates;
    for (const auto& iv : *constraint.intervals) {
        auto lo = std::lower_bound(records.begin(), records.end(), iv.start, by_time);
        auto hi = std::lower_bound(lo, records.end(), iv.end, by_time);
        for (auto it = lo; it != hi; ++it) candidates.push_back(static_cast<std::size_t>(it - records.begin()));
    }
    return filter_inside(corpus, candidates, *constraint.polygon, threads);
}

// ---------------------------------------------------------------------------

PolygonGrid::PolygonGrid(const PartitionLayer& layer, double cell_size) {
    if (layer.features.empty()) return;
    extent_ = layer.features[0].polygon.bbox();
    std::vector<double> diagonals;
    for (const auto& f : layer.features) {
        const auto& b = f.polygon.bbox();
        extent_.min_lat = std::min(extent_.min_lat, b.min_lat);
        extent_.min_lon = std::min(extent_.min_lon, b.min_lon);
        extent_.max_lat = std::max(extent_.max_lat, b.max_lat);
        extent_.max_lon = std::max(extent_.max_lon, b.max_lon);
        diagonals.push_back(b.diagonal());
    }
    if (cell_size <= 0.0) {
        std::nth_element(diagonals.begin(), diagonals.begin() + diagonals.size() / 2, diagonals.end());
        cell_size = diagonals[diagonals.size() / 2];
    }
    const double span = std::max(extent_.max_lat - extent_.min_lat, extent_.max_lon - extent_.min_lon);
    if (!(cell_size > 0.0)) cell_size = span > 0.0 ? span : 1.0;
    // Keep the directory bounded for layers with tiny polygons.
    constexpr double kMaxCells = 1 << 20;
    auto dims = [&](double cell) {
        return std::pair<std::size_t, std::size_t>{
            static_cast<std::size_t>((extent_.max_lat - extent_.min_lat) / cell) + 1,
            static_cast<std::size_t>((extent_.max_lon - extent_.min_lon) / cell) + 1};
    };
    while (static_cast<double>(dims(cell_size).first) * static_cast<double>(dims(cell_size).second) > kMaxCells) {
        cell_size *= 2.0;
    }
    cell_ = cell_size;
    std::tie(rows_, cols_) = dims(cell_);

    std::vector<std::vector<std::uint32_t>> cells(rows_ * cols_);
    auto row_of = [&](double lat) {
        return std::min(rows_ - 1, static_cast<std::size_t>(std::max(0.0, (lat - extent_.min_lat) / cell_)));
    };
    auto col_of = [&](double lon) {
        return std::min(cols_ - 1, static_cast<std::size_t>(std::max(0.0, (lon - extent_.min_lon) / cell_)));
    };
    for (std::uint32_t i = 0; i < layer.features.size(); ++i) {
        const auto& b = layer.features[i].polygon.bbox();
        for (std::size_t r = row_of(b.min_lat); r <= row_of(b.max_lat); ++r) {
            for (std::size_t c = col_of(b.min_lon); c <= col_of(b.max_lon); ++c) cells[r * cols_ + c].push_back(i);
        }
    }
    offsets_.reserve(cells.size() + 1);
    offsets_.push_back(0);
    for (const auto& c : cells) {
        entries_.insert(entries_.end(), c.begin(), c.end());
        offsets_.push_back(static_cast<std::uint32_t>(entries_.size()));
    }
}

std::span<const std::uint32_t> PolygonGrid::candidates(const GeoPoint& p) const noexcept {
    if (rows_ == 0 || !extent_.contains(p)) return {};
    const auto r = std::min(rows_ - 1, static_cast<std::size_t>((p.lat - extent_.min_lat) / cell_));
    const auto c = std::min(cols_ - 1, static_cast<std::size_t>((p.lon - extent_.min_lon) / cell_));
    const std::size_t cell = r * cols_ + c;
    return {entries_.data() + offsets_[cell], offsets_[cell + 1] - offsets_[cell]};
}

double PolygonAggregate::mean() const noexcept {
    return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

namespace {

// Probes a lattice of interior points of each polygon against its
// bounding-box neighbours.
std::vector<std::string> sampled_overlap_check(const PartitionLayer& layer, const PolygonGrid& grid) {
    constexpr int kSamples = 5;
    std::vector<std::string> warnings;
    for (std::size_t i = 0; i < layer.features.size(); ++i) {
        const auto& poly = layer.features[i].polygon;
        const auto& b = poly.bbox();
        bool reported = false;
        for (int sy = 1; sy <= kSamples && !reported; ++sy) {
            for (int sx = 1; sx <= kSamples && !reported; ++sx) {
                const GeoPoint p{b.min_lat + (b.max_lat - b.min_lat) * sy / (kSamples + 1),
                                 b.min_lon + (b.max_lon - b.min_lon) * sx / (kSamples + 1)};
                if (!point_in_polygon(p, poly)) continue;
                for (std::uint32_t j : grid.candidates(p)) {
                    if (j != i && point_in_polygon(p, layer.features[j].polygon)) {
                        warnings.push_back("polygons '" + layer.features[i].name + "' and '" + layer.features[j].name +
                                           "' overlap");
                        reported = true;
                        break;
                    }
                }
            }
        }
    }
    return warnings;
}

}  // namespace

AggregateResult aggregate_partition(std::span<const GeoPoint> points, const PartitionLayer& layer,
                                    std::span<const double> weights, unsigned threads) {
    if (!weights.empty() && weights.size() != points.size()) {
        throw ValidationError("weights must align with points");
    }
    const PolygonGrid grid(layer);
    AggregateResult result;
    result.layer = layer.name;
    result.total_points = points.size();
    result.warnings = sampled_overlap_check(layer, grid);

    // Parallel phase only decides ownership; weights are summed afterwards
    // in point order so results do not depend on the thread count.
    constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> owner(points.size(), kNone);
    if (threads == 0) threads = default_threads();
    std::vector<std::vector<std::pair<std::size_t, std::uint32_t>>> extra(threads);
    parallel_chunks(points.size(), threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (std::uint32_t j : grid.candidates(points[i])) {
                if (!point_in_polygon(points[i], layer.features[j].polygon)) continue;
                if (owner[i] == kNone) {
                    owner[i] = j;
                } else {
                    extra[chunk].emplace_back(i, j);
                }
            }
        }
    });
    result.polygons.resize(layer.size());
    for (std::size_t j = 0; j < layer.size(); ++j) result.polygons[j].name = layer.features[j].name;
    auto add = [&](std::size_t i, std::uint32_t j) {
        ++result.polygons[j].count;
        result.polygons[j].sum += weights.empty() ? 1.0 : weights[i];
    };
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (owner[i] == kNone) continue;
        ++result.assigned_points;
        add(i, owner[i]);
    }
    std::vector<std::pair<std::size_t, std::uint32_t>> extras;
    for (const auto& e : extra) extras.insert(extras.end(), e.begin(), e.end());
    std::sort(extras.begin(), extras.end());
    for (const auto& [i, j] : extras) add(i, j);
    std::size_t multi = 0;
    for (std::size_t k = 0; k < extras.size(); ++k) {
        if (k == 0 || extras[k].first != extras[k - 1].first) ++multi;
    }
    if (multi > 0) {
        result.warnings.push_back(std::to_string(multi) + " point(s) fell inside more than one polygon");
    }
    return result;
}

std::uint64_t GridAggregate::total() const noexcept {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

GridAggregate aggregate_grid(std::span<const GeoPoint> points, const BoundingBox& bbox, double cell_size_deg) {
    if (!(cell_size_deg > 0.0) || !std::isfinite(cell_size_deg)) throw ValidationError("cell size must be positive");
    if (!(bbox.min_lat < bbox.max_lat && bbox.min_lon < bbox.max_lon)) throw ValidationError("invalid bounding box");
    GridAggregate g;
    g.bbox = bbox;
    g.cell_size = cell_size_deg;
    const double rows = std::ceil((bbox.max_lat - bbox.min_lat) / cell_size_deg);
    const double cols = std::ceil((bbox.max_lon - bbox.min_lon) / cell_size_deg);
    if (rows * cols > 1e8) throw ValidationError("grid too fine: more than 1e8 cells");
    g.rows = static_cast<std::size_t>(rows);
    g.cols = static_cast<std::size_t>(cols);
    g.counts.assign(g.rows * g.cols, 0);
    for (const auto& p : points) {
        if (p.lat < bbox.min_lat || p.lat >= bbox.max_lat || p.lon < bbox.min_lon || p.lon >= bbox.max_lon) continue;
        // Clamp guards the division rounding up onto the excluded far edge.
        const auto r = std::min(g.rows - 1, static_cast<std::size_t>(std::floor((p.lat - bbox.min_lat) / cell_size_deg)));
        const auto c = std::min(g.cols - 1, static_cast<std::size_t>(std::floor((p.lon - bbox.min_lon) / cell_size_deg)));
        ++g.counts[r * g.cols + c];
    }
    return g;
}

TimeSeries temporal_histogram(std::span<const Timestamp> times, const TimeInterval& epoch, Timestamp bin_width) {
    if (bin_width <= 0) throw ValidationError("bin width must be positive");
    if (epoch.start >= epoch.end) throw ValidationError("epoch start must precede end");
    const Timestamp bins = (epoch.length() + bin_width - 1) / bin_width;
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    for (Timestamp t : times) {
        if (!epoch.contains(t)) continue;
        counts[static_cast<std::size_t>((t - epoch.start) / bin_width)] += 1.0;
    }
    TimeSeries out{"histogram", {}};
    out.samples.reserve(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        out.samples.push_back({epoch.start + static_cast<Timestamp>(k) * bin_width, counts[k]});
    }
    return out;
}

Comparison parse_comparison(const std::string& op) {
    if (op == "<" || op == "lt") return Comparison::Less;
    if (op == "<=" || op == "le") return Comparison::LessEqual;
    if (op == ">" || op == "gt") return Comparison::Greater;
    if (op == ">=" || op == "ge") return Comparison::GreaterEqual;
    throw ValidationError("unknown comparison '" + op + "'");
}

std::string to_string(Comparison op) {
    switch (op) {
        case Comparison::Less: return "<";
        case Comparison::LessEqual: return "<=";
        case Comparison::Greater: return ">";
        case Comparison::GreaterEqual: return ">=";
    }
    return "?";
}

bool compare(double value, Comparison op, double threshold) noexcept {
    switch (op) {
        case Comparison::Less: return value < threshold;
        case Comparison::LessEqual: return value <= threshold;
        case Comparison::Greater: return value > threshold;
        case Comparison::GreaterEqual: return value >= threshold;
    }
    return false;
}

IntervalSet intervals_where(const TimeSeries& series, Comparison op, double threshold) {
    if (series.samples.empty()) throw ValidationError("time series is empty");
    series.validate();
    const auto& s = series.samples;
    Timestamp last_step = 1;
    if (s.size() > 1) {
        std::vector<Timestamp> steps;
        for (std::size_t i = 1; i < s.size(); ++i) steps.push_back(s[i].t - s[i - 1].t);
        std::nth_element(steps.begin(), steps.begin() + (steps.size() - 1) / 2, steps.end());
        last_step = steps[(steps.size() - 1) / 2];
    }
    std::vector<TimeInterval> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!compare(s[i].value, op, threshold)) continue;
        const Timestamp end = i + 1 < s.size() ? s[i + 1].t : s[i].t + last_step;
        if (!out.empty() && out.back().end == s[i].t) {
            out.back().end = end;
        } else {
            out.push_back({s[i].t, end});
        }
    }
    return IntervalSet(std::move(out));
}

}  // namespace urbanmosaic
