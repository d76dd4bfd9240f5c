#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "urbanmosaic/cluster.hpp"
#include "urbanmosaic/geotime.hpp"
#include "urbanmosaic/json_io.hpp"
#include "urbanmosaic/lsh.hpp"
#include "urbanmosaic/store.hpp"

namespace httplib {
class Server;
}

namespace urbanmosaic {

/// Error carrying an HTTP status and a short machine-readable code.
class ApiError : public Error {
public:
    ApiError(int status, std::string code, const std::string& message)
        : Error(message), status_(status), code_(std::move(code)) {}
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

/// Immutable corpus state served to clients.
struct Snapshot {
    Corpus corpus;
    SignatureIndex index;
    std::map<std::string, PartitionLayer> layers;
    std::map<std::string, TimeSeries> series;
    std::filesystem::path blob_root;
};

/// Reads metadata (`meta_path`, default `store_dir`/meta.jsonl),
/// layers/*.geojson and series/*.csv from `store_dir`, and the signature
/// index from `index_dir`. Every indexed image must have metadata.
std::shared_ptr<const Snapshot> load_snapshot(const std::filesystem::path& store_dir,
                                              const std::filesystem::path& index_dir,
                                              const std::filesystem::path& meta_path = {});

// ---------------------------------------------------------------------------
// Query requests (wire form)
// ---------------------------------------------------------------------------

struct QueryConstraint {
    std::optional<ImageId> image;
    CropRect crop;
    std::vector<float> vector;  // raw 4096-d query when no image is given
};

struct TemporalPredicate {
    std::string series;
    Comparison op = Comparison::Greater;
    double threshold = 0.0;
};

struct QuerySpec {
    std::vector<QueryConstraint> constraints;
    double tau = kDefaultTau;
    std::optional<std::size_t> k;
    std::optional<Polygon> spatial;
    std::optional<IntervalSet> intervals;
    std::optional<TemporalPredicate> predicate;
};

/// Throws ApiError: 422 for an empty constraint list, 400 otherwise.
QuerySpec parse_query_spec(const Json& body, double default_tau = kDefaultTau);

/// Resolves the temporal part of a spec (explicit intervals or a series
/// predicate) into an interval set; nullopt when the request has none.
std::optional<IntervalSet> resolve_intervals(const Snapshot& snapshot, const QuerySpec& spec);

/// Spatio-temporal selection, then an intersection search restricted to it.
std::vector<Hit> run_query(const Snapshot& snapshot, const QuerySpec& spec, unsigned threads = 0);

// ---------------------------------------------------------------------------
// Workspace
// ---------------------------------------------------------------------------

struct WorkspaceItem {
    ImageId image = 0;
    std::string note;
    Attributes attributes;

    bool operator==(const WorkspaceItem&) const = default;
};

/// Saved images, persisted as JSON-lines. Writes are serialized.
class Workspace {
public:
    /// Loads existing items when the file exists; an empty path keeps the
    /// workspace in memory only.
    explicit Workspace(std::filesystem::path path = {});

    void add(WorkspaceItem item);
    std::vector<WorkspaceItem> items() const;

    /// Columns: image_id,timestamp,lat,lon,note, then attribute keys sorted.
    std::string export_csv(const Corpus& corpus) const;
    Json export_json(const Corpus& corpus) const;

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::vector<WorkspaceItem> items_;
};

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

struct ServiceConfig {
    std::size_t hits_per_page = 50;
    std::size_t clusters_per_page = 12;
    double default_tau = kDefaultTau;
    double default_theta = kDefaultClusterTheta;
    unsigned threads = 0;
};

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";

    Json json() const { return Json::parse(body); }
};

/// Request handlers over a swappable snapshot. `handle` performs routing and
/// maps errors to {code, message} bodies; the typed methods throw.
class Service {
public:
    Service(std::shared_ptr<const Snapshot> snapshot, std::filesystem::path workspace_path = {},
            ServiceConfig config = {});

    std::shared_ptr<const Snapshot> snapshot() const;
    void swap_snapshot(std::shared_ptr<const Snapshot> next);
    const ServiceConfig& config() const noexcept { return config_; }

    Response handle(const std::string& method, const std::string& path, const std::string& body = {},
                    const std::map<std::string, std::string>& params = {});

    Json search(const Json& body) const;
    Json clusters(const Json& body) const;
    Json aggregate(const Json& body) const;
    Json image_meta(ImageId id) const;
    std::string image_bytes(ImageId id, std::string* content_type = nullptr) const;
    Json list_layers() const;
    Json list_series() const;
    Json time_series(const std::string& id) const;
    Json series_intervals(const std::string& id, const Json& body) const;
    Json workspace_add(const Json& body);
    Json workspace_list() const;
    Response workspace_export(const std::string& format) const;

private:
    AttributeLookup attribute_lookup(const Snapshot& snap, const std::string& name) const;
    Attributes location_attributes(const Snapshot& snap, const GeoPoint& p) const;

    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const Snapshot> snapshot_;
    Workspace workspace_;
    ServiceConfig config_;
};

/// cpp-httplib front end for a Service.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

private:
    Service& service_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace urbanmosaic
