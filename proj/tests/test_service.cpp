#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>

#include "support.hpp"
#include "urbanmosaic/geotime.hpp"
#include "urbanmosaic/service.hpp"

using namespace urbanmosaic;
using namespace umtest;

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(field);
            field.clear();
        } else if (c == '\n') {
            row.push_back(field);
            rows.push_back(row);
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (any || !row.empty()) {
        row.push_back(field);
        rows.push_back(row);
    }
    return rows;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<ImageId> ids_of(const Json& hits) {
    std::vector<ImageId> out;
    for (const auto& h : hits) out.push_back(h["image_id"].get<ImageId>());
    return out;
}

class ServiceTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fx_ = new CorpusFixture(small_params(240, 6, 5));
        snapshot_ = load_snapshot(fx_->store(), fx_->index_dir());
    }
    static void TearDownTestSuite() {
        snapshot_.reset();
        delete fx_;
        fx_ = nullptr;
    }

    void SetUp() override { service_ = std::make_unique<Service>(snapshot_, workspace_dir_ / "ws.jsonl"); }

    Response post(const std::string& path, const Json& body) { return service_->handle("POST", path, body.dump()); }
    Response get(const std::string& path, const std::map<std::string, std::string>& params = {}) {
        return service_->handle("GET", path, {}, params);
    }

    // In-process composition of the module operations for a query spec.
    static std::vector<Hit> compose(const Json& body) {
        const auto& snap = *snapshot_;
        std::vector<std::vector<Signature>> groups;
        for (const auto& c : body["constraints"]) {
            CropRect crop;
            if (c.contains("crop")) crop = {c["crop"][0], c["crop"][1], c["crop"][2], c["crop"][3]};
            groups.push_back(crop_to_query(snap.index, c["image_id"].get<ImageId>(), crop));
        }
        SearchOptions opt;
        opt.tau = body.value("tau", kDefaultTau);
        SpatioTemporalConstraint st;
        if (body.contains("spatial")) st.polygon = polygon_from_json(body["spatial"]);
        if (body.contains("temporal")) {
            const auto& t = body["temporal"];
            if (t.is_array()) {
                st.intervals = intervals_from_json(t);
            } else {
                st.intervals = intervals_where(snap.series.at(t["series"]), parse_comparison(t["op"]), t["threshold"]);
            }
        }
        if (!st.empty()) opt.filter = select(snap.corpus, st);
        return intersect_search(snap.index, groups, opt);
    }

    static CorpusFixture* fx_;
    static std::shared_ptr<const Snapshot> snapshot_;
    TempDir workspace_dir_;
    std::unique_ptr<Service> service_;
};
CorpusFixture* ServiceTest::fx_ = nullptr;
std::shared_ptr<const Snapshot> ServiceTest::snapshot_;

}  // namespace

TEST_F(ServiceTest, SnapshotLoadsLayersAndSeries) {
    EXPECT_EQ(snapshot_->corpus.size(), 240u);
    EXPECT_EQ(snapshot_->index.image_count(), 240u);
    ASSERT_EQ(snapshot_->layers.count("tracts"), 1u);
    EXPECT_EQ(snapshot_->layers.at("tracts").size(), 200u);
    ASSERT_EQ(snapshot_->series.count("precipitation"), 1u);
}

TEST_F(ServiceTest, SelfQueryRanksFirst) {
    const auto r = post("/query/search", {{"constraints", {{{"image_id", 17}}}}, {"tau", 0.01}});
    ASSERT_EQ(r.status, 200) << r.body;
    const auto j = r.json();
    ASSERT_GE(j["total"].get<std::size_t>(), 1u);
    EXPECT_EQ(j["hits"][0]["image_id"], 17);
    EXPECT_EQ(j["hits"][0]["hamming"], 0);
    const auto& rec = snapshot_->corpus.at(17);
    EXPECT_EQ(j["hits"][0]["timestamp"], format_iso8601(rec.timestamp));
    EXPECT_EQ(j["hits"][0]["lat"], rec.location.lat);
    EXPECT_EQ(j["hits"][0]["lon"], rec.location.lon);
}

TEST_F(ServiceTest, PolygonExcludingEverythingGivesEmptyPage) {
    const Json spatial = Json::parse(R"({"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]})");
    const auto r = post("/query/search", {{"constraints", {{{"image_id", 3}}}}, {"spatial", spatial}});
    ASSERT_EQ(r.status, 200) << r.body;
    EXPECT_EQ(r.json()["total"], 0);
    EXPECT_TRUE(r.json()["hits"].empty());
}

TEST_F(ServiceTest, SearchEqualsInProcessComposition) {
    std::mt19937_64 rng(8);
    const auto& bbox = fx_->synthetic.params().bbox;
    for (int round = 0; round < 12; ++round) {
        Json body = {{"tau", 0.2 + 0.05 * (round % 5)}, {"page_size", 1000}};
        Json constraints = Json::array();
        const int n = 1 + round % 3;
        for (int i = 0; i < n; ++i) {
            Json c = {{"image_id", 1 + rng() % 240}};
            if ((round + i) % 2) c["crop"] = {0.0, 0.0, 0.4 + 0.1 * i, 0.6};
            constraints.push_back(c);
        }
        body["constraints"] = constraints;
        if (round % 4 == 1) {
            const double lat = bbox.min_lat + 0.3 * (bbox.max_lat - bbox.min_lat);
            const double lon = bbox.min_lon + 0.3 * (bbox.max_lon - bbox.min_lon);
            body["spatial"] = {{"type", "Polygon"},
                               {"coordinates", {{{lon, lat}, {bbox.max_lon, lat}, {bbox.max_lon, bbox.max_lat},
                                                 {lon, bbox.max_lat}, {lon, lat}}}}};
        }
        if (round % 4 == 2) body["temporal"] = {{"series", "precipitation"}, {"op", ">"}, {"threshold", 1.0}};
        if (round % 4 == 3) body["temporal"] = Json::array({{"2019-02-01T00:00:00Z", "2019-08-01T00:00:00Z"}});

        const auto r = post("/query/search", body);
        ASSERT_EQ(r.status, 200) << r.body;
        const auto expected = compose(body);
        const auto j = r.json();
        ASSERT_EQ(j["total"].get<std::size_t>(), expected.size()) << body.dump();
        for (std::size_t i = 0; i < expected.size(); ++i) {
            ASSERT_EQ(j["hits"][i]["image_id"].get<ImageId>(), expected[i].image);
            ASSERT_EQ(j["hits"][i]["hamming"].get<std::uint32_t>(), expected[i].hamming);
            ASSERT_DOUBLE_EQ(j["hits"][i]["angle"].get<double>(), expected[i].angle);
        }
    }
}

TEST_F(ServiceTest, RawVectorConstraint) {
    std::vector<float> regions(RegionId::kCount * kRegionDim);
    fx_->synthetic.region_vectors(41, regions);
    const std::vector<float> v(regions.begin() + 5 * kRegionDim, regions.begin() + 6 * kRegionDim);
    const auto r = post("/query/search", {{"constraints", {{{"vector", v}}}}, {"tau", 0.01}});
    ASSERT_EQ(r.status, 200) << r.body;
    const auto j = r.json();
    ASSERT_GE(j["hits"].size(), 1u);
    EXPECT_EQ(j["hits"][0]["image_id"], SyntheticCorpus::id_of(41));
    EXPECT_EQ(j["hits"][0]["hamming"], 0);
    EXPECT_TRUE(j["hits"][0]["query_region"].is_null());
    EXPECT_EQ(j["hits"][0]["corpus_region"], RegionId::from_code(5).to_string());
}

TEST_F(ServiceTest, PaginationIsLossless) {
    const Json base = {{"constraints", {{{"image_id", 9}}}}, {"tau", 0.4}};
    Json all = base;
    all["page_size"] = 100000;
    const auto full = ids_of(post("/query/search", all).json()["hits"]);
    ASSERT_GT(full.size(), 10u);
    for (std::size_t size : {1u, 7u, 50u}) {
        std::vector<ImageId> joined;
        const std::size_t pages = (full.size() + size - 1) / size;
        for (std::size_t p = 0; p <= pages; ++p) {  // one past the end is empty
            Json b = base;
            b["page"] = p;
            b["page_size"] = size;
            const auto j = post("/query/search", b).json();
            EXPECT_EQ(j["pages"], pages);
            const auto ids = ids_of(j["hits"]);
            if (p == pages) EXPECT_TRUE(ids.empty());
            joined.insert(joined.end(), ids.begin(), ids.end());
        }
        EXPECT_EQ(joined, full) << size;
    }
    // Default page size.
    EXPECT_EQ(post("/query/search", base).json()["hits"].size(), std::min<std::size_t>(50, full.size()));
}

TEST_F(ServiceTest, ErrorStatuses) {
    auto code = [](const Response& r) { return r.json()["code"].get<std::string>(); };
    auto r = post("/query/search", {{"constraints", Json::array()}});
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(code(r), "empty_constraints");
    EXPECT_FALSE(r.json()["message"].get<std::string>().empty());
    EXPECT_EQ(post("/query/search", {{"constraints", {{{"image_id", 999999}}}}}).status, 404);
    EXPECT_EQ(post("/query/search", {{"constraints", {{{"image_id", 1}}}}, {"tau", 0}}).status, 400);
    EXPECT_EQ(post("/query/search", {{"constraints", {{{"image_id", 1}}}}, {"tau", 3.5}}).status, 400);
    EXPECT_EQ(post("/query/search", {{"constraints", {{{"image_id", 1}, {"crop", {0.5, 0, 0.5, 1}}}}}}).status, 400);
    EXPECT_EQ(post("/query/search", {{"constraints", {{{"vector", {1, 2, 3}}}}}}).status, 400);
    EXPECT_EQ(post("/query/search", {{"nothing", 1}}).status, 400);
    EXPECT_EQ(service_->handle("POST", "/query/search", "{not json").status, 400);
    EXPECT_EQ(
        post("/query/search", {{"constraints", {{{"image_id", 1}}}}, {"temporal", {{"series", "nope"}, {"op", ">"}}}})
            .status,
        404);
    EXPECT_EQ(get("/query/search").status, 405);
    EXPECT_EQ(get("/nowhere").status, 404);
    EXPECT_EQ(get("/images/abc").status, 400);
}

TEST_F(ServiceTest, ClustersEqualInProcessComposition) {
    const Json body = {{"constraints", {{{"image_id", 30}}}}, {"tau", 1.2}, {"theta", 0.5}, {"page_size", 100}};
    const auto r = post("/query/clusters", body);
    ASSERT_EQ(r.status, 200) << r.body;
    const auto j = r.json();
    const auto hits = compose(body);
    const auto expected = cluster_results(hits, snapshot_->index, 0.5);
    EXPECT_EQ(j["total_hits"], hits.size());
    ASSERT_EQ(j["clusters"].size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(j["clusters"][i]["leader"], expected[i].leader);
        EXPECT_EQ(j["clusters"][i]["members"].get<std::vector<ImageId>>(), expected[i].members);
        EXPECT_EQ(j["clusters"][i]["representative"], "/images/" + std::to_string(expected[i].leader));
        EXPECT_LE(j["clusters"][i]["previews"].size(), 8u);
    }

    // Attribute sort and member sort at wire level.
    Json sorted = body;
    sorted["sort"] = {{"clusters", "tracts.median_income"}, {"members", "timestamp"}, {"descending", true}};
    const auto s = post("/query/clusters", sorted);
    ASSERT_EQ(s.status, 200) << s.body;
    const auto sorted_page = s.json();
    ASSERT_FALSE(sorted_page["clusters"].empty());
    for (const auto& c : sorted_page["clusters"]) {
        const auto members = c["members"].get<std::vector<ImageId>>();
        for (std::size_t k = 1; k < members.size(); ++k) {
            ASSERT_GE(snapshot_->corpus.at(members[k - 1]).timestamp, snapshot_->corpus.at(members[k]).timestamp);
        }
    }
    Json bad = body;
    bad["sort"] = {{"clusters", "tracts.unknown"}};
    EXPECT_EQ(post("/query/clusters", bad).status, 400);
    bad = body;
    bad["theta"] = 0;
    EXPECT_EQ(post("/query/clusters", bad).status, 400);
}

TEST_F(ServiceTest, ClusterPaginationIsLossless) {
    const Json base = {{"constraints", {{{"image_id", 30}}}}, {"tau", 1.4}, {"theta", 0.2}};
    Json all = base;
    all["page_size"] = 10000;
    const auto full = post("/query/clusters", all).json()["clusters"];
    ASSERT_GT(full.size(), 3u);
    Json joined = Json::array();
    for (std::size_t p = 0; p * 2 < full.size(); ++p) {
        Json b = base;
        b["page"] = p;
        b["page_size"] = 2;
        const auto page = post("/query/clusters", b).json();
        for (const auto& c : page["clusters"]) joined.push_back(c);
    }
    EXPECT_EQ(joined, full);
}

TEST_F(ServiceTest, AggregateEqualsGeotime) {
    const auto& layer = snapshot_->layers.at("tracts");
    std::vector<GeoPoint> all;
    for (const auto& r : snapshot_->corpus.records()) all.push_back(r.location);
    const auto expected = aggregate_partition(all, layer);
    const auto r = post("/aggregate", {{"layer", "tracts"}});
    ASSERT_EQ(r.status, 200) << r.body;
    const auto j = r.json();
    EXPECT_EQ(j["total_points"], all.size());
    EXPECT_EQ(j["assigned_points"], expected.assigned_points);
    ASSERT_EQ(j["polygons"].size(), layer.size());
    for (std::size_t i = 0; i < layer.size(); ++i) {
        EXPECT_EQ(j["polygons"][i]["name"], expected.polygons[i].name);
        EXPECT_EQ(j["polygons"][i]["count"], expected.polygons[i].count);
    }

    // Hit density under a temporal constraint.
    const Json query = {{"constraints", {{{"image_id", 12}}}}, {"tau", 0.4}};
    const Json temporal = Json::array({{"2019-03-01T00:00:00Z", "2019-10-01T00:00:00Z"}});
    const auto hr = post("/aggregate", {{"layer", "tracts"},
                                        {"source", {{"type", "hit_density"}, {"query", query}}},
                                        {"constraint", {{"temporal", temporal}}}});
    ASSERT_EQ(hr.status, 200) << hr.body;
    const auto allowed = select(snapshot_->corpus, {std::nullopt, intervals_from_json(temporal)});
    auto hits = compose(query);
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.image < b.image; });
    std::vector<GeoPoint> hit_points;
    for (const auto& h : hits) {
        if (std::binary_search(allowed.begin(), allowed.end(), h.image)) hit_points.push_back(snapshot_->corpus.at(h.image).location);
    }
    const auto hexp = aggregate_partition(hit_points, layer);
    EXPECT_EQ(hr.json()["total_points"], hit_points.size());
    for (std::size_t i = 0; i < layer.size(); ++i) EXPECT_EQ(hr.json()["polygons"][i]["count"], hexp.polygons[i].count);
}

TEST_F(ServiceTest, AggregateOnePolygonUploadAndEmptyRegion) {
    const auto& b = fx_->synthetic.params().bbox;
    const Json upload = {{"type", "FeatureCollection"},
                         {"features",
                          {{{"type", "Feature"},
                            {"properties", {{"name", "everything"}, {"score", 4.5}}},
                            {"geometry", to_json(Polygon::rectangle({b.min_lat - 1, b.min_lon - 1, b.max_lat + 1, b.max_lon + 1}))}}}}};
    auto r = post("/aggregate", {{"layer_geojson", upload}});
    ASSERT_EQ(r.status, 200) << r.body;
    EXPECT_EQ(r.json()["polygons"][0]["count"], 240);
    EXPECT_EQ(r.json()["polygons"][0]["name"], "everything");

    const Json nowhere = Json::parse(R"({"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]})");
    r = post("/aggregate", {{"layer_geojson", upload}, {"constraint", {{"spatial", nowhere}}}});
    ASSERT_EQ(r.status, 200) << r.body;
    EXPECT_EQ(r.json()["total_points"], 0);
    EXPECT_EQ(r.json()["polygons"][0]["count"], 0);

    r = post("/aggregate", {{"layer_geojson", upload}, {"source", {{"type", "attribute"}, {"attribute", "score"}}}});
    ASSERT_EQ(r.status, 200) << r.body;
    EXPECT_EQ(r.json()["polygons"][0]["value"], 4.5);

    EXPECT_EQ(post("/aggregate", {{"layer", "nope"}}).status, 404);
    EXPECT_EQ(post("/aggregate", Json::object()).status, 400);
    EXPECT_EQ(post("/aggregate", {{"layer", "tracts"}, {"source", {{"type", "magic"}}}}).status, 400);
}

TEST_F(ServiceTest, AggregateGrid) {
    const auto& b = fx_->synthetic.params().bbox;
    const auto r = post("/aggregate", {{"grid", {{"bbox", {b.min_lon, b.min_lat, b.max_lon, b.max_lat}}, {"cell_size", 0.01}}}});
    ASSERT_EQ(r.status, 200) << r.body;
    std::vector<GeoPoint> all;
    for (const auto& rec : snapshot_->corpus.records()) all.push_back(rec.location);
    const auto g = aggregate_grid(all, b, 0.01);
    EXPECT_EQ(r.json()["grid"]["counts"].get<std::vector<std::uint64_t>>(), g.counts);
    EXPECT_EQ(r.json()["grid"]["rows"], g.rows);
}

TEST_F(ServiceTest, ImagesAndMetadata) {
    const auto& rec = snapshot_->corpus.at(25);
    const auto bytes = get("/images/25");
    EXPECT_EQ(bytes.status, 200);
    EXPECT_EQ(bytes.content_type, "image/x-portable-pixmap");
    EXPECT_EQ(bytes.body, slurp(fx_->store() / rec.blob_ref));
    const auto meta = get("/images/25/meta");
    ASSERT_EQ(meta.status, 200);
    EXPECT_EQ(record_from_json(meta.json()), rec);
    EXPECT_EQ(get("/images/99999").status, 404);
    EXPECT_EQ(get("/images/99999/meta").status, 404);
}

TEST_F(ServiceTest, TimeSeriesEndpoints) {
    const auto list = get("/timeseries").json();
    ASSERT_EQ(list["series"].size(), 1u);
    EXPECT_EQ(list["series"][0]["id"], "precipitation");
    const auto& series = snapshot_->series.at("precipitation");
    const auto ts = get("/timeseries/precipitation").json();
    ASSERT_EQ(ts["samples"].size(), series.samples.size());
    EXPECT_EQ(ts["samples"][3]["value"], series.samples[3].value);

    for (const char* op : {">", "<=", ">="}) {
        const auto r = service_->handle("POST", "/timeseries/precipitation/intervals",
                                        Json{{"op", op}, {"threshold", 2.0}}.dump());
        ASSERT_EQ(r.status, 200) << r.body;
        EXPECT_EQ(intervals_from_json(r.json()["intervals"]), intervals_where(series, parse_comparison(op), 2.0));
    }
    EXPECT_EQ(service_->handle("POST", "/timeseries/precipitation/intervals", R"({"op":"~","threshold":1})").status, 400);
    EXPECT_EQ(get("/timeseries/unknown").status, 404);
    EXPECT_EQ(get("/layers").json()["layers"][0]["id"], "tracts");
    EXPECT_EQ(get("/layers/tracts").status, 200);
}

TEST_F(ServiceTest, WorkspaceRoundTripAndCsvExport) {
    auto csv = get("/workspace/export", {{"format", "csv"}});
    ASSERT_EQ(csv.status, 200);
    EXPECT_EQ(csv.body, "image_id,timestamp,lat,lon,note\n");

    const std::vector<std::pair<ImageId, std::string>> adds{
        {5, "curb ramp"}, {77, "needs \"review\", see photo"}, {5, "again\nsecond line"}};
    for (const auto& [id, note] : adds) {
        const auto r = post("/workspace", {{"image_id", id}, {"note", note}, {"attributes", {{"audit", 1}}}});
        ASSERT_EQ(r.status, 201) << r.body;
    }
    EXPECT_EQ(post("/workspace", {{"image_id", 123456}}).status, 404);
    EXPECT_EQ(post("/workspace", {{"note", "x"}}).status, 400);

    const auto list = get("/workspace").json()["items"];
    ASSERT_EQ(list.size(), 3u);
    EXPECT_EQ(list[1]["note"], adds[1].second);
    EXPECT_TRUE(list[0]["attributes"].contains("tracts.median_income"));

    csv = get("/workspace/export", {{"format", "csv"}});
    const auto rows = parse_csv(csv.body);
    ASSERT_EQ(rows.size(), 4u);
    const auto& header = rows[0];
    ASSERT_GE(header.size(), 5u);
    EXPECT_EQ(std::vector<std::string>(header.begin(), header.begin() + 5),
              (std::vector<std::string>{"image_id", "timestamp", "lat", "lon", "note"}));
    EXPECT_TRUE(std::is_sorted(header.begin() + 5, header.end()));
    const auto items = get("/workspace").json()["items"];
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& row = rows[i + 1];
        ASSERT_EQ(row.size(), header.size());
        const ImageId id = items[i]["image_id"];
        const auto& rec = snapshot_->corpus.at(id);
        EXPECT_EQ(std::stoull(row[0]), id);
        EXPECT_EQ(parse_iso8601(row[1]), rec.timestamp);
        EXPECT_EQ(std::stod(row[2]), rec.location.lat);
        EXPECT_EQ(std::stod(row[3]), rec.location.lon);
        EXPECT_EQ(row[4], items[i]["note"]);
        for (std::size_t c = 5; c < header.size(); ++c) {
            const auto& v = items[i]["attributes"][header[c]];
            if (v.is_number()) {
                EXPECT_EQ(std::stod(row[c]), v.get<double>()) << header[c];
            } else {
                EXPECT_EQ(row[c], v.get<std::string>()) << header[c];
            }
        }
    }

    const auto js = get("/workspace/export", {{"format", "json"}}).json();
    EXPECT_EQ(js["items"].size(), 3u);
    EXPECT_EQ(js["columns"].get<std::vector<std::string>>(), header);
    EXPECT_EQ(get("/workspace/export", {{"format", "xml"}}).status, 400);

    // Persisted as JSON lines: a new service sees the same items.
    Service reopened(snapshot_, workspace_dir_ / "ws.jsonl");
    EXPECT_EQ(reopened.workspace_list()["items"], items);
}

TEST_F(ServiceTest, SnapshotSwapIsVisibleToLaterRequests) {
    auto smaller = std::make_shared<Snapshot>(*snapshot_);
    smaller->layers.clear();
    service_->swap_snapshot(smaller);
    EXPECT_TRUE(get("/layers").json()["layers"].empty());
    service_->swap_snapshot(snapshot_);
    EXPECT_EQ(get("/layers").json()["layers"].size(), 1u);
    EXPECT_THROW(service_->swap_snapshot(nullptr), ValidationError);
}

TEST_F(ServiceTest, HttpResponsesMatchInProcessHandler) {
    HttpServer server(*service_);
    const int port = server.start("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    httplib::Client client("127.0.0.1", port);
    const Json body = {{"constraints", {{{"image_id", 40}}}}, {"tau", 0.4}, {"page_size", 5}};
    const auto res = client.Post("/query/search", body.dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body, post("/query/search", body).body);
    EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");

    const auto img = client.Get("/images/40");
    ASSERT_TRUE(img);
    EXPECT_EQ(img->body, slurp(fx_->store() / snapshot_->corpus.at(40).blob_ref));

    const auto bad = client.Post("/query/search", R"({"constraints":[]})", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 422);
    EXPECT_EQ(Json::parse(bad->body)["code"], "empty_constraints");

    const auto csv = client.Get("/workspace/export?format=csv");
    ASSERT_TRUE(csv);
    EXPECT_EQ(csv->body, "image_id,timestamp,lat,lon,note\n");
    server.stop();
}
