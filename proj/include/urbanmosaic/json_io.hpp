#pragma once

#include <json.hpp>

#include "urbanmosaic/core.hpp"
#include "urbanmosaic/store.hpp"

namespace urbanmosaic {

using Json = nlohmann::json;

Json to_json(const ImageRecord& record);
/// Throws FormatError naming the offending field.
ImageRecord record_from_json(const Json& j);

/// Accepts ISO-8601 strings or integer epoch seconds.
Timestamp timestamp_from_json(const Json& j);

/// GeoJSON Polygon geometry: {"type":"Polygon","coordinates":[[[lon,lat],...], ...]}.
Json to_json(const Polygon& polygon);
/// Accepts a GeoJSON Polygon geometry, or a bare exterior ring [[lon,lat],...].
Polygon polygon_from_json(const Json& j);

/// [{"start": iso, "end": iso}, ...]
Json to_json(const IntervalSet& set);
/// Accepts [{"start","end"}] or [[start, end]] pairs; unsorted input is normalized.
IntervalSet intervals_from_json(const Json& j);

Json to_json(const AttributeValue& value);
Json to_json(const Attributes& attributes);
Attributes attributes_from_json(const Json& j);

}  // namespace urbanmosaic
