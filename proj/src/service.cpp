#include "urbanmosaic/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <httplib.h>

namespace urbanmosaic {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Snapshot
// ---------------------------------------------------------------------------

std::shared_ptr<const Snapshot> load_snapshot(const fs::path& store_dir, const fs::path& index_dir,
                                              const fs::path& meta_path) {
    auto snap = std::make_shared<Snapshot>();
    snap->corpus = ingest_metadata(meta_path.empty() ? store_dir / "meta.jsonl" : meta_path);
    snap->index = SignatureIndex::load(index_dir);
    snap->blob_root = store_dir;
    for (ImageId id : snap->index.image_ids()) {
        if (!snap->corpus.contains(id)) {
            throw ValidationError("indexed image " + std::to_string(id) + " has no metadata record");
        }
    }
    if (fs::is_directory(store_dir / "layers")) {
        for (const auto& entry : fs::directory_iterator(store_dir / "layers")) {
            if (entry.path().extension() != ".geojson") continue;
            auto layer = read_geojson_layer(entry.path());
            layer.name = entry.path().stem().string();
            snap->layers.emplace(layer.name, std::move(layer));
        }
    }
    if (fs::is_directory(store_dir / "series")) {
        for (const auto& entry : fs::directory_iterator(store_dir / "series")) {
            if (entry.path().extension() != ".csv") continue;
            const auto name = entry.path().stem().string();
            snap->series.emplace(name, read_time_series(entry.path(), name));
        }
    }
    return snap;
}

// ---------------------------------------------------------------------------
// Wire parsing helpers
// ---------------------------------------------------------------------------

namespace {

ApiError bad_request(const std::string& message) { return ApiError(400, "invalid_request", message); }

double number_field(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number()) throw bad_request(std::string("'") + key + "' must be a number");
    return it->get<double>();
}

CropRect crop_from_json(const Json& j) {
    CropRect c;
    if (j.is_array() && j.size() == 4) {
        for (const auto& v : j) {
            if (!v.is_number()) throw bad_request("crop must hold four numbers");
        }
        c = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    } else if (j.is_object()) {
        c = {number_field(j, "x0"), number_field(j, "y0"), number_field(j, "x1"), number_field(j, "y1")};
    } else {
        throw bad_request("crop must be {x0,y0,x1,y1} or [x0,y0,x1,y1]");
    }
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw bad_request(e.what());
    }
    return c;
}

BoundingBox bbox_from_json(const Json& j) {
    if (j.is_array() && j.size() == 4) {
        // [min_lon, min_lat, max_lon, max_lat], GeoJSON bbox order.
        return {j[1].get<double>(), j[0].get<double>(), j[3].get<double>(), j[2].get<double>()};
    }
    if (!j.is_object()) throw bad_request("bbox must be an object or [min_lon, min_lat, max_lon, max_lat]");
    return {number_field(j, "min_lat"), number_field(j, "min_lon"), number_field(j, "max_lat"),
            number_field(j, "max_lon")};
}

Json bbox_to_json(const BoundingBox& b) {
    return {{"min_lat", b.min_lat}, {"min_lon", b.min_lon}, {"max_lat", b.max_lat}, {"max_lon", b.max_lon}};
}

// Parses {"temporal": ...} into intervals or a series predicate.
void parse_temporal(const Json& t, std::optional<IntervalSet>& intervals, std::optional<TemporalPredicate>& predicate) {
    if (t.is_null()) return;
    if (t.is_array()) {
        intervals = intervals_from_json(t);
    } else if (t.is_object() && t.contains("intervals")) {
        intervals = intervals_from_json(t["intervals"]);
    } else if (t.is_object() && t.contains("series")) {
        if (!t["series"].is_string()) throw bad_request("'series' must be a string");
        TemporalPredicate p;
        p.series = t["series"].get<std::string>();
        p.op = parse_comparison(t.value("op", std::string(">")));
        p.threshold = t.contains("threshold") ? number_field(t, "threshold") : 0.0;
        predicate = p;
    } else {
        throw bad_request("temporal must be an interval list or {series, op, threshold}");
    }
}

std::pair<std::size_t, std::size_t> page_params(const Json& body, std::size_t default_size) {
    std::size_t page = 0, size = default_size;
    if (body.contains("page")) {
        if (!body["page"].is_number_unsigned()) throw bad_request("'page' must be a non-negative integer");
        page = body["page"].get<std::size_t>();
    }
    if (body.contains("page_size")) {
        if (!body["page_size"].is_number_unsigned() || body["page_size"].get<std::size_t>() == 0) {
            throw bad_request("'page_size' must be a positive integer");
        }
        size = body["page_size"].get<std::size_t>();
    }
    return {page, size};
}

Json page_envelope(std::size_t total, std::size_t page, std::size_t size) {
    return {{"total", total}, {"page", page}, {"page_size", size}, {"pages", (total + size - 1) / size}};
}

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string attribute_text(const AttributeValue& v) {
    if (const double* d = std::get_if<double>(&v)) return shortest(*d);
    return std::get<std::string>(v);
}

Json hit_to_json(const Hit& h, const Corpus& corpus) {
    const auto& r = corpus.at(h.image);
    return {{"image_id", h.image},
            {"angle", h.angle},
            {"hamming", h.hamming},
            {"query_index", h.query_index},
            {"query_region", h.query_region ? Json(h.query_region->to_string()) : Json(nullptr)},
            {"corpus_region", h.corpus_region.to_string()},
            {"timestamp", format_iso8601(r.timestamp)},
            {"lat", r.location.lat},
            {"lon", r.location.lon},
            {"heading", r.heading},
            {"camera_id", r.camera_id},
            {"vehicle_id", r.vehicle_id},
            {"thumbnail", "/images/" + std::to_string(h.image)}};
}

}  // namespace

QuerySpec parse_query_spec(const Json& body, double default_tau) {
    if (!body.is_object()) throw bad_request("query spec must be a JSON object");
    QuerySpec spec;
    spec.tau = default_tau;
    auto cit = body.find("constraints");
    if (cit == body.end() || !cit->is_array()) throw bad_request("'constraints' must be an array");
    if (cit->empty()) throw ApiError(422, "empty_constraints", "query needs at least one constraint");
    for (const auto& c : *cit) {
        if (!c.is_object()) throw bad_request("constraint must be an object");
        QueryConstraint qc;
        if (c.contains("image_id")) {
            if (!c["image_id"].is_number_unsigned()) throw bad_request("'image_id' must be a non-negative integer");
            qc.image = c["image_id"].get<ImageId>();
            if (c.contains("crop")) qc.crop = crop_from_json(c["crop"]);
        } else if (c.contains("vector")) {
            const auto& v = c["vector"];
            if (!v.is_array() || v.size() != kRegionDim) throw bad_request("'vector' must hold 4096 numbers");
            qc.vector.reserve(kRegionDim);
            for (const auto& x : v) {
                if (!x.is_number()) throw bad_request("'vector' must hold 4096 numbers");
                qc.vector.push_back(x.get<float>());
            }
            try {
                validate_feature(qc.vector, kRegionDim);
            } catch (const ValidationError& e) {
                throw bad_request(e.what());
            }
        } else {
            throw bad_request("constraint needs 'image_id' or 'vector'");
        }
        spec.constraints.push_back(std::move(qc));
    }
    if (body.contains("tau")) spec.tau = number_field(body, "tau");
    if (!(spec.tau > 0.0 && spec.tau <= std::numbers::pi)) throw bad_request("'tau' must lie in (0, pi]");
    if (body.contains("k") && !body["k"].is_null()) {
        if (!body["k"].is_number_unsigned() || body["k"].get<std::size_t>() == 0) {
            throw bad_request("'k' must be a positive integer");
        }
        spec.k = body["k"].get<std::size_t>();
    }
    if (body.contains("spatial") && !body["spatial"].is_null()) spec.spatial = polygon_from_json(body["spatial"]);
    if (body.contains("temporal")) parse_temporal(body["temporal"], spec.intervals, spec.predicate);
    return spec;
}

std::optional<IntervalSet> resolve_intervals(const Snapshot& snapshot, const QuerySpec& spec) {
    if (spec.intervals) return spec.intervals;
    if (!spec.predicate) return std::nullopt;
    auto it = snapshot.series.find(spec.predicate->series);
    if (it == snapshot.series.end()) {
        throw ApiError(404, "not_found", "unknown time series '" + spec.predicate->series + "'");
    }
    return intervals_where(it->second, spec.predicate->op, spec.predicate->threshold);
}

std::vector<Hit> run_query(const Snapshot& snapshot, const QuerySpec& spec, unsigned threads) {
    std::vector<std::vector<Signature>> groups;
    for (const auto& c : spec.constraints) {
        if (c.image) {
            if (!snapshot.index.contains(*c.image)) {
                throw ApiError(404, "not_found", "unknown image id " + std::to_string(*c.image));
            }
            groups.push_back(crop_to_query(snapshot.index, *c.image, c.crop));
        } else {
            groups.push_back({hash_vector(snapshot.index.region_family(), c.vector)});
        }
    }
    SearchOptions options;
    options.tau = spec.tau;
    options.k = spec.k;
    options.threads = threads;
    SpatioTemporalConstraint st{spec.spatial, resolve_intervals(snapshot, spec)};
    if (!st.empty()) options.filter = select(snapshot.corpus, st, threads);
    return intersect_search(snapshot.index, groups, options);
}

// ---------------------------------------------------------------------------
// Workspace
// ---------------------------------------------------------------------------

namespace {

Json item_to_json(const WorkspaceItem& item) {
    return {{"image_id", item.image}, {"note", item.note}, {"attributes", to_json(item.attributes)}};
}

WorkspaceItem item_from_json(const Json& j) {
    WorkspaceItem item;
    item.image = j.at("image_id").get<ImageId>();
    item.note = j.value("note", std::string());
    if (j.contains("attributes")) item.attributes = attributes_from_json(j["attributes"]);
    return item;
}

std::vector<std::string> attribute_columns(const std::vector<WorkspaceItem>& items) {
    std::set<std::string> keys;
    for (const auto& item : items) {
        for (const auto& [k, v] : item.attributes) keys.insert(k);
    }
    return {keys.begin(), keys.end()};
}

}  // namespace

Workspace::Workspace(fs::path path) : path_(std::move(path)) {
    if (path_.empty() || !fs::exists(path_)) return;
    std::ifstream in(path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            items_.push_back(item_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw FormatError("workspace line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void Workspace::add(WorkspaceItem item) {
    std::lock_guard lock(mutex_);
    if (!path_.empty()) {
        std::ofstream out(path_, std::ios::app);
        if (!out) throw Error("cannot append to workspace file " + path_.string());
        out << item_to_json(item).dump() << '\n';
        if (!out) throw Error("failed writing workspace file");
    }
    items_.push_back(std::move(item));
}

std::vector<WorkspaceItem> Workspace::items() const {
    std::lock_guard lock(mutex_);
    return items_;
}

std::string Workspace::export_csv(const Corpus& corpus) const {
    const auto items = this->items();
    const auto columns = attribute_columns(items);
    std::string out = "image_id,timestamp,lat,lon,note";
    for (const auto& c : columns) out += "," + csv_field(c);
    out += "\n";
    for (const auto& item : items) {
        const auto& r = corpus.at(item.image);
        out += std::to_string(item.image) + "," + format_iso8601(r.timestamp) + "," + shortest(r.location.lat) + "," +
               shortest(r.location.lon) + "," + csv_field(item.note);
        for (const auto& c : columns) {
            out += ",";
            if (auto it = item.attributes.find(c); it != item.attributes.end()) out += csv_field(attribute_text(it->second));
        }
        out += "\n";
    }
    return out;
}

Json Workspace::export_json(const Corpus& corpus) const {
    const auto items = this->items();
    Json columns = {"image_id", "timestamp", "lat", "lon", "note"};
    for (const auto& c : attribute_columns(items)) columns.push_back(c);
    Json rows = Json::array();
    for (const auto& item : items) {
        const auto& r = corpus.at(item.image);
        rows.push_back({{"image_id", item.image},
                        {"timestamp", format_iso8601(r.timestamp)},
                        {"lat", r.location.lat},
                        {"lon", r.location.lon},
                        {"note", item.note},
                        {"attributes", to_json(item.attributes)}});
    }
    return {{"columns", columns}, {"items", rows}};
}

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

Service::Service(std::shared_ptr<const Snapshot> snapshot, fs::path workspace_path, ServiceConfig config)
    : snapshot_(std::move(snapshot)), workspace_(std::move(workspace_path)), config_(config) {
    if (!snapshot_) throw ValidationError("service needs a snapshot");
}

std::shared_ptr<const Snapshot> Service::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

void Service::swap_snapshot(std::shared_ptr<const Snapshot> next) {
    if (!next) throw ValidationError("cannot swap in an empty snapshot");
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
}

AttributeLookup Service::attribute_lookup(const Snapshot& snap, const std::string& name) const {
    const Corpus* corpus = &snap.corpus;
    if (name == "timestamp") {
        return [corpus](ImageId id) -> std::optional<double> { return static_cast<double>(corpus->at(id).timestamp); };
    }
    if (name == "vehicle_id") return [corpus](ImageId id) -> std::optional<double> { return corpus->at(id).vehicle_id; };
    if (name == "camera_id") return [corpus](ImageId id) -> std::optional<double> { return corpus->at(id).camera_id; };
    if (name == "heading") return [corpus](ImageId id) -> std::optional<double> { return corpus->at(id).heading; };
    const auto dot = name.find('.');
    if (dot != std::string::npos) {
        auto it = snap.layers.find(name.substr(0, dot));
        const std::string prop = name.substr(dot + 1);
        if (it != snap.layers.end() &&
            std::any_of(it->second.features.begin(), it->second.features.end(),
                        [&](const PartitionFeature& f) { return f.numeric(prop).has_value(); })) {
            const PartitionLayer* layer = &it->second;
            auto grid = std::make_shared<PolygonGrid>(*layer);
            return [corpus, layer, grid, prop](ImageId id) -> std::optional<double> {
                const auto& p = corpus->at(id).location;
                for (std::uint32_t j : grid->candidates(p)) {
                    if (point_in_polygon(p, layer->features[j].polygon)) return layer->features[j].numeric(prop);
                }
                return std::nullopt;
            };
        }
    }
    throw ApiError(400, "unknown_attribute", "unknown attribute '" + name + "'");
}

Attributes Service::location_attributes(const Snapshot& snap, const GeoPoint& p) const {
    Attributes out;
    for (const auto& [name, layer] : snap.layers) {
        for (const auto& f : layer.features) {
            if (!point_in_polygon(p, f.polygon)) continue;
            for (const auto& [k, v] : f.properties) out[name + "." + k] = v;
            break;
        }
    }
    return out;
}

Json Service::search(const Json& body) const {
    const auto snap = snapshot();
    const auto spec = parse_query_spec(body, config_.default_tau);
    const auto [page, size] = page_params(body, config_.hits_per_page);
    const auto hits = run_query(*snap, spec, config_.threads);
    Json out = page_envelope(hits.size(), page, size);
    Json items = Json::array();
    for (std::size_t i = page * size; i < hits.size() && i < (page + 1) * size; ++i) {
        items.push_back(hit_to_json(hits[i], snap->corpus));
    }
    out["hits"] = std::move(items);
    return out;
}

Json Service::clusters(const Json& body) const {
    const auto snap = snapshot();
    const auto spec = parse_query_spec(body, config_.default_tau);
    const auto [page, size] = page_params(body, config_.clusters_per_page);
    double theta = config_.default_theta;
    if (body.contains("theta")) theta = number_field(body, "theta");
    if (!(theta > 0.0 && theta < std::numbers::pi)) throw bad_request("'theta' must lie in (0, pi)");

    const auto hits = run_query(*snap, spec, config_.threads);
    auto clusters = cluster_results(hits, snap->index, theta);

    const Json sort = body.value("sort", Json::object());
    if (!sort.is_object()) throw bad_request("'sort' must be an object");
    const bool descending = sort.value("descending", false);
    const std::string cluster_key = sort.value("clusters", std::string("size"));
    if (cluster_key == "size") {
        sort_clusters(clusters, ClusterKey::Size);
    } else {
        sort_clusters(clusters, ClusterKey::Attribute, attribute_lookup(*snap, cluster_key), descending);
    }
    if (sort.contains("members")) {
        const std::string member_key = sort["members"].get<std::string>();
        const MemberKey key = parse_member_key(member_key);
        AttributeLookup lookup;
        if (key == MemberKey::Attribute) lookup = attribute_lookup(*snap, member_key);
        for (auto& c : clusters) sort_within(c, key, snap->corpus, lookup, descending);
    }

    constexpr std::size_t kPreviews = 8;
    Json out = page_envelope(clusters.size(), page, size);
    out["total_hits"] = hits.size();
    Json items = Json::array();
    for (std::size_t i = page * size; i < clusters.size() && i < (page + 1) * size; ++i) {
        const auto& c = clusters[i];
        Json previews = Json::array();
        double mean_t = 0.0;
        for (std::size_t m = 0; m < c.members.size(); ++m) {
            const auto& r = snap->corpus.at(c.members[m]);
            mean_t += static_cast<double>(r.timestamp);
            if (m < kPreviews) {
                previews.push_back({{"image_id", r.id},
                                    {"thumbnail", "/images/" + std::to_string(r.id)},
                                    {"lat", r.location.lat},
                                    {"lon", r.location.lon},
                                    {"timestamp", format_iso8601(r.timestamp)}});
            }
        }
        mean_t /= static_cast<double>(c.members.size());
        items.push_back({{"leader", c.leader},
                         {"size", c.size()},
                         {"representative", "/images/" + std::to_string(c.representative())},
                         {"members", c.members},
                         {"mean_timestamp", format_iso8601(static_cast<Timestamp>(std::llround(mean_t)))},
                         {"previews", previews}});
    }
    out["clusters"] = std::move(items);
    return out;
}

Json Service::aggregate(const Json& body) const {
    const auto snap = snapshot();
    if (!body.is_object()) throw bad_request("aggregate request must be a JSON object");

    SpatioTemporalConstraint constraint;
    if (body.contains("constraint") && !body["constraint"].is_null()) {
        const auto& c = body["constraint"];
        if (!c.is_object()) throw bad_request("'constraint' must be an object");
        if (c.contains("spatial") && !c["spatial"].is_null()) constraint.polygon = polygon_from_json(c["spatial"]);
        QuerySpec tmp;
        if (c.contains("temporal")) parse_temporal(c["temporal"], tmp.intervals, tmp.predicate);
        constraint.intervals = resolve_intervals(*snap, tmp);
    }

    const Json source = body.value("source", Json{{"type", "image_density"}});
    const std::string type = source.is_object() ? source.value("type", std::string("image_density")) : "";
    std::vector<GeoPoint> points;
    if (type == "image_density") {
        if (constraint.empty()) {
            for (const auto& r : snap->corpus.records()) points.push_back(r.location);
        } else {
            for (ImageId id : select(snap->corpus, constraint, config_.threads)) {
                points.push_back(snap->corpus.at(id).location);
            }
        }
    } else if (type == "hit_density") {
        if (!source.contains("query")) throw bad_request("hit_density source needs a 'query'");
        const auto spec = parse_query_spec(source["query"], config_.default_tau);
        auto hits = run_query(*snap, spec, config_.threads);
        std::optional<IdSet> allowed;
        if (!constraint.empty()) allowed = select(snap->corpus, constraint, config_.threads);
        std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.image < b.image; });
        for (const auto& h : hits) {
            if (allowed && !std::binary_search(allowed->begin(), allowed->end(), h.image)) continue;
            points.push_back(snap->corpus.at(h.image).location);
        }
    } else if (type != "attribute") {
        throw bad_request("source type must be image_density, hit_density or attribute");
    }

    if (body.contains("grid")) {
        if (type == "attribute") throw bad_request("attribute sources need a partition layer");
        const auto& g = body["grid"];
        if (!g.is_object() || !g.contains("bbox")) throw bad_request("'grid' needs 'bbox' and 'cell_size'");
        const auto grid = aggregate_grid(points, bbox_from_json(g["bbox"]), number_field(g, "cell_size"));
        return {{"source", type},
                {"total_points", points.size()},
                {"assigned_points", grid.total()},
                {"grid",
                 {{"rows", grid.rows},
                  {"cols", grid.cols},
                  {"cell_size", grid.cell_size},
                  {"bbox", bbox_to_json(grid.bbox)},
                  {"counts", grid.counts}}}};
    }

    PartitionLayer uploaded;
    const PartitionLayer* layer = nullptr;
    if (body.contains("layer_geojson")) {
        uploaded = parse_geojson_layer(body["layer_geojson"].dump(), "uploaded");
        layer = &uploaded;
    } else if (body.contains("layer") && body["layer"].is_string()) {
        auto it = snap->layers.find(body["layer"].get<std::string>());
        if (it == snap->layers.end()) {
            throw ApiError(404, "not_found", "unknown layer '" + body["layer"].get<std::string>() + "'");
        }
        layer = &it->second;
    } else {
        throw bad_request("aggregate needs 'layer', 'layer_geojson' or 'grid'");
    }

    Json polygons = Json::array();
    if (type == "attribute") {
        if (!source.contains("attribute") || !source["attribute"].is_string()) {
            throw bad_request("attribute source needs an 'attribute' name");
        }
        const std::string attr = source["attribute"].get<std::string>();
        bool any = false;
        for (const auto& f : layer->features) {
            auto v = f.numeric(attr);
            any = any || v.has_value();
            polygons.push_back({{"name", f.name}, {"value", v ? Json(*v) : Json(nullptr)}});
        }
        if (!any) throw ApiError(400, "unknown_attribute", "layer has no numeric attribute '" + attr + "'");
        return {{"layer", layer->name}, {"source", type}, {"attribute", attr}, {"polygons", polygons}};
    }

    const auto result = aggregate_partition(points, *layer, {}, config_.threads);
    for (const auto& p : result.polygons) polygons.push_back({{"name", p.name}, {"count", p.count}, {"sum", p.sum}});
    return {{"layer", result.layer},
            {"source", type},
            {"total_points", result.total_points},
            {"assigned_points", result.assigned_points},
            {"warnings", result.warnings},
            {"polygons", polygons}};
}

Json Service::image_meta(ImageId id) const {
    const auto snap = snapshot();
    return to_json(snap->corpus.at(id));
}

std::string Service::image_bytes(ImageId id, std::string* content_type) const {
    const auto snap = snapshot();
    const auto& record = snap->corpus.at(id);
    const fs::path path = snap->blob_root / record.blob_ref;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("image bytes missing for " + std::to_string(id));
    std::ostringstream buf;
    buf << in.rdbuf();
    if (content_type) {
        const auto ext = path.extension().string();
        *content_type = ext == ".ppm"                     ? "image/x-portable-pixmap"
                        : ext == ".png"                   ? "image/png"
                        : ext == ".jpg" || ext == ".jpeg" ? "image/jpeg"
                                                          : "application/octet-stream";
    }
    return buf.str();
}

Json Service::list_layers() const {
    const auto snap = snapshot();
    Json out = Json::array();
    for (const auto& [name, layer] : snap->layers) out.push_back({{"id", name}, {"polygons", layer.size()}});
    return {{"layers", out}};
}

Json Service::list_series() const {
    const auto snap = snapshot();
    Json out = Json::array();
    for (const auto& [name, s] : snap->series) out.push_back({{"id", name}, {"samples", s.samples.size()}});
    return {{"series", out}};
}

Json Service::time_series(const std::string& id) const {
    const auto snap = snapshot();
    auto it = snap->series.find(id);
    if (it == snap->series.end()) throw NotFoundError("unknown time series '" + id + "'");
    Json samples = Json::array();
    for (const auto& s : it->second.samples) samples.push_back({{"timestamp", format_iso8601(s.t)}, {"value", s.value}});
    return {{"id", id}, {"samples", samples}};
}

Json Service::series_intervals(const std::string& id, const Json& body) const {
    const auto snap = snapshot();
    auto it = snap->series.find(id);
    if (it == snap->series.end()) throw NotFoundError("unknown time series '" + id + "'");
    if (!body.is_object() || !body.contains("op") || !body["op"].is_string()) throw bad_request("'op' is required");
    const Comparison op = parse_comparison(body["op"].get<std::string>());
    const double threshold = number_field(body, "threshold");
    return {{"id", id},
            {"op", to_string(op)},
            {"threshold", threshold},
            {"intervals", to_json(intervals_where(it->second, op, threshold))}};
}

Json Service::workspace_add(const Json& body) {
    const auto snap = snapshot();
    if (!body.is_object() || !body.contains("image_id") || !body["image_id"].is_number_unsigned()) {
        throw bad_request("'image_id' is required");
    }
    WorkspaceItem item;
    item.image = body["image_id"].get<ImageId>();
    const auto& record = snap->corpus.at(item.image);
    if (body.contains("note")) {
        if (!body["note"].is_string()) throw bad_request("'note' must be a string");
        item.note = body["note"].get<std::string>();
    }
    item.attributes = location_attributes(*snap, record.location);
    if (body.contains("attributes")) {
        for (auto& [k, v] : attributes_from_json(body["attributes"])) item.attributes[k] = v;
    }
    workspace_.add(item);
    return item_to_json(item);
}

Json Service::workspace_list() const {
    Json items = Json::array();
    for (const auto& item : workspace_.items()) items.push_back(item_to_json(item));
    return {{"items", items}};
}

Response Service::workspace_export(const std::string& format) const {
    const auto snap = snapshot();
    if (format == "csv") return {200, workspace_.export_csv(snap->corpus), "text/csv"};
    if (format == "json" || format.empty()) return {200, workspace_.export_json(snap->corpus).dump(), "application/json"};
    throw bad_request("export format must be csv or json");
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path) {
        if (c == '/') {
            if (!cur.empty()) parts.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) parts.push_back(std::move(cur));
    return parts;
}

ImageId parse_id(const std::string& text) {
    ImageId id = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw bad_request("invalid image id '" + text + "'");
    return id;
}

Response json_response(int status, const Json& body) { return {status, body.dump(), "application/json"}; }

Response error_response(int status, const std::string& code, const std::string& message) {
    return json_response(status, {{"code", code}, {"message", message}});
}

}  // namespace

Response Service::handle(const std::string& method, const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& params) {
    const auto parts = split_path(path);
    auto parse_body = [&]() -> Json {
        if (body.empty()) return Json::object();
        try {
            return Json::parse(body);
        } catch (const Json::exception& e) {
            throw bad_request(std::string("body is not valid JSON: ") + e.what());
        }
    };
    auto expect = [&](const char* m) {
        if (method != m) throw ApiError(405, "method_not_allowed", method + " not allowed on " + path);
    };
    try {
        if (parts.size() == 2 && parts[0] == "query" && parts[1] == "search") {
            expect("POST");
            return json_response(200, search(parse_body()));
        }
        if (parts.size() == 2 && parts[0] == "query" && parts[1] == "clusters") {
            expect("POST");
            return json_response(200, clusters(parse_body()));
        }
        if (parts.size() == 1 && parts[0] == "aggregate") {
            expect("POST");
            return json_response(200, aggregate(parse_body()));
        }
        if (!parts.empty() && parts[0] == "images" && (parts.size() == 2 || (parts.size() == 3 && parts[2] == "meta"))) {
            expect("GET");
            const ImageId id = parse_id(parts[1]);
            if (parts.size() == 3) return json_response(200, image_meta(id));
            Response r;
            r.body = image_bytes(id, &r.content_type);
            return r;
        }
        if (parts.size() == 1 && parts[0] == "layers") {
            expect("GET");
            return json_response(200, list_layers());
        }
        if (parts.size() == 2 && parts[0] == "layers") {
            expect("GET");
            const auto snap = snapshot();
            auto it = snap->layers.find(parts[1]);
            if (it == snap->layers.end()) throw NotFoundError("unknown layer '" + parts[1] + "'");
            return {200, layer_to_geojson(it->second), "application/geo+json"};
        }
        if (!parts.empty() && parts[0] == "timeseries") {
            if (parts.size() == 1) {
                expect("GET");
                return json_response(200, list_series());
            }
            if (parts.size() == 2) {
                expect("GET");
                return json_response(200, time_series(parts[1]));
            }
            if (parts.size() == 3 && parts[2] == "intervals") {
                expect("POST");
                return json_response(200, series_intervals(parts[1], parse_body()));
            }
        }
        if (!parts.empty() && parts[0] == "workspace") {
            if (parts.size() == 1 && method == "POST") return json_response(201, workspace_add(parse_body()));
            if (parts.size() == 1) {
                expect("GET");
                return json_response(200, workspace_list());
            }
            if (parts.size() == 2 && parts[1] == "export") {
                expect("GET");
                auto it = params.find("format");
                return workspace_export(it == params.end() ? "json" : it->second);
            }
        }
        return error_response(404, "not_found", "no route for " + method + " " + path);
    } catch (const ApiError& e) {
        return error_response(e.status(), e.code(), e.what());
    } catch (const NotFoundError& e) {
        return error_response(404, "not_found", e.what());
    } catch (const Error& e) {
        return error_response(400, "invalid_request", e.what());
    } catch (const Json::exception& e) {
        return error_response(400, "invalid_request", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> params;
        for (const auto& [k, v] : req.params) params.emplace(k, v);
        const Response r = service_.handle(req.method, req.path, req.body, params);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server_->Get(".*", forward);
    server_->Post(".*", forward);
    server_->Put(".*", forward);
    server_->Delete(".*", forward);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
    } else if (!server_->bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void HttpServer::listen(const std::string& host, int port) {
    if (!server_->listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace urbanmosaic
