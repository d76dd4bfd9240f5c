#include "urbanmosaic/json_io.hpp"

namespace urbanmosaic {

namespace {

const Json& field(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
    return *it;
}

template <typename T>
T number(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_number()) throw FormatError(std::string("field '") + key + "' must be a number");
    return v.get<T>();
}

Ring ring_from_json(const Json& j) {
    if (!j.is_array()) throw FormatError("polygon ring must be an array of [lon, lat] pairs");
    Ring ring;
    ring.reserve(j.size());
    for (const auto& pt : j) {
        if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number()) {
            throw FormatError("polygon vertex must be [lon, lat]");
        }
        ring.push_back({pt[1].get<double>(), pt[0].get<double>()});
    }
    return ring;
}

Json ring_to_json(const Ring& ring) {
    Json out = Json::array();
    for (const auto& p : ring) out.push_back({p.lon, p.lat});
    return out;
}

}  // namespace

Json to_json(const ImageRecord& r) {
    return Json{{"id", r.id},
                {"timestamp", format_iso8601(r.timestamp)},
                {"lat", r.location.lat},
                {"lon", r.location.lon},
                {"heading", r.heading},
                {"camera_id", r.camera_id},
                {"vehicle_id", r.vehicle_id},
                {"blob_ref", r.blob_ref}};
}

Timestamp timestamp_from_json(const Json& j) {
    if (j.is_string()) return parse_iso8601(j.get<std::string>());
    if (j.is_number_integer()) return j.get<Timestamp>();
    throw FormatError("timestamp must be an ISO-8601 string or integer seconds");
}

ImageRecord record_from_json(const Json& j) {
    if (!j.is_object()) throw FormatError("record must be a JSON object");
    ImageRecord r;
    const Json& id = field(j, "id");
    if (!id.is_number_unsigned() && !(id.is_number_integer() && id.get<std::int64_t>() >= 0)) {
        throw FormatError("field 'id' must be a non-negative integer");
    }
    r.id = id.get<ImageId>();
    r.timestamp = timestamp_from_json(field(j, "timestamp"));
    r.location = {number<double>(j, "lat"), number<double>(j, "lon")};
    r.heading = number<double>(j, "heading");
    r.camera_id = number<std::uint16_t>(j, "camera_id");
    r.vehicle_id = number<std::uint16_t>(j, "vehicle_id");
    const Json& blob = field(j, "blob_ref");
    if (!blob.is_string()) throw FormatError("field 'blob_ref' must be a string");
    r.blob_ref = blob.get<std::string>();
    return r;
}

Json to_json(const Polygon& polygon) {
    Json rings = Json::array();
    rings.push_back(ring_to_json(polygon.exterior()));
    for (const auto& hole : polygon.holes()) rings.push_back(ring_to_json(hole));
    return Json{{"type", "Polygon"}, {"coordinates", rings}};
}

Polygon polygon_from_json(const Json& j) {
    if (j.is_object()) {
        if (j.value("type", "") != "Polygon") throw FormatError("geometry type must be 'Polygon'");
        const Json& coords = field(j, "coordinates");
        if (!coords.is_array() || coords.empty()) throw FormatError("polygon has no rings");
        std::vector<Ring> holes;
        for (std::size_t i = 1; i < coords.size(); ++i) holes.push_back(ring_from_json(coords[i]));
        return Polygon(ring_from_json(coords[0]), std::move(holes));
    }
    return Polygon(ring_from_json(j));
}

Json to_json(const IntervalSet& set) {
    Json out = Json::array();
    for (const auto& iv : set) {
        out.push_back({{"start", format_iso8601(iv.start)}, {"end", format_iso8601(iv.end)}});
    }
    return out;
}

IntervalSet intervals_from_json(const Json& j) {
    if (!j.is_array()) throw FormatError("intervals must be an array");
    std::vector<TimeInterval> out;
    for (const auto& item : j) {
        TimeInterval iv;
        if (item.is_array() && item.size() == 2) {
            iv = {timestamp_from_json(item[0]), timestamp_from_json(item[1])};
        } else if (item.is_object()) {
            iv = {timestamp_from_json(field(item, "start")), timestamp_from_json(field(item, "end"))};
        } else {
            throw FormatError("interval must be {start, end} or [start, end]");
        }
        if (iv.start >= iv.end) throw ValidationError("interval start must precede end");
        out.push_back(iv);
    }
    return IntervalSet::normalized(std::move(out));
}

Json to_json(const AttributeValue& value) {
    return std::visit([](const auto& v) { return Json(v); }, value);
}

Json to_json(const Attributes& attributes) {
    Json out = Json::object();
    for (const auto& [k, v] : attributes) out[k] = to_json(v);
    return out;
}

Attributes attributes_from_json(const Json& j) {
    Attributes out;
    if (j.is_null()) return out;
    if (!j.is_object()) throw FormatError("attributes must be an object");
    for (const auto& [k, v] : j.items()) {
        if (v.is_number()) {
            out[k] = v.get<double>();
        } else if (v.is_string()) {
            out[k] = v.get<std::string>();
        } else if (v.is_boolean()) {
            out[k] = v.get<bool>() ? 1.0 : 0.0;
        }
        // Nested values and nulls carry no attribute.
    }
    return out;
}

}  // namespace urbanmosaic
