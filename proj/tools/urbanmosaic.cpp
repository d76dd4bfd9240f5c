// urbanmosaic command-line tool: corpus generation, ingestion, indexing,
// offline queries, storage statistics, serving and printable map export.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "urbanmosaic/geotime.hpp"
#include "urbanmosaic/json_io.hpp"
#include "urbanmosaic/lsh.hpp"
#include "urbanmosaic/service.hpp"
#include "urbanmosaic/store.hpp"
#include "urbanmosaic/synthetic.hpp"

namespace fs = std::filesystem;
using namespace urbanmosaic;

namespace {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kMissing = 3,
    kFormat = 4,
    kInvalid = 5,
};

struct Options {
    std::uint64_t seed = 7;
    std::size_t images = 1000;
    std::size_t clusters = 10;
    double sigma = 0.15;
    fs::path out = "corpus";
    fs::path store;
    fs::path features;
    fs::path meta;
    fs::path index_dir = "index";
    std::size_t n_bits = kDefaultBits;
    double tau = kDefaultTau;
    double theta = kDefaultClusterTheta;
    std::string host = "127.0.0.1";
    int port = 8080;
    fs::path spec;
    fs::path workspace;
    std::string layer = "tracts";
    fs::path map_out = "map.svg";
    double projected_images = 7.7e6;
    unsigned threads = 0;
};

fs::path store_dir(const Options& o) {
    if (!o.store.empty()) return o.store;
    if (!o.meta.empty()) return o.meta.parent_path().empty() ? fs::path(".") : o.meta.parent_path();
    return o.out;
}

fs::path features_path(const Options& o) { return o.features.empty() ? store_dir(o) / "features.umfv" : o.features; }
fs::path meta_path(const Options& o) { return o.meta.empty() ? store_dir(o) / "meta.jsonl" : o.meta; }

Json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

Json read_spec(const Options& o) {
    if (o.spec.empty() || o.spec == "-") {
        try {
            return Json::parse(std::cin);
        } catch (const Json::exception& e) {
            throw FormatError(std::string("query spec: ") + e.what());
        }
    }
    return read_json_file(o.spec);
}

int cmd_gen(const Options& o) {
    SyntheticParams p;
    p.seed = o.seed;
    p.images = o.images;
    p.clusters = o.clusters;
    p.sigma = o.sigma;
    SyntheticCorpus corpus(p);
    corpus.write(o.out);
    std::cout << Json{{"out", o.out.string()}, {"images", corpus.size()}, {"clusters", p.clusters}}.dump() << '\n';
    return kOk;
}

int cmd_ingest(const Options& o) {
    if (o.meta.empty() || o.features.empty()) throw ValidationError("ingest needs --meta and --features");
    const Corpus corpus = ingest_metadata(o.meta);
    FeatureReader reader(o.features);
    for (std::uint64_t i = 0; i < reader.count(); ++i) {
        const ImageId id = reader.id_at(i);
        if (!corpus.contains(id)) throw ValidationError("feature block for image " + std::to_string(id) + " has no metadata");
    }
    // Full decode validates every vector.
    for (std::uint64_t i = 0; i < reader.count(); ++i) reader.read(i);

    const fs::path dest = o.out;
    fs::create_directories(dest / "blobs");
    write_metadata(corpus, dest / "meta.jsonl");
    if (fs::absolute(o.features) != fs::absolute(dest / "features.umfv")) {
        fs::copy_file(o.features, dest / "features.umfv", fs::copy_options::overwrite_existing);
    }
    const fs::path src_root = o.meta.parent_path().empty() ? fs::path(".") : o.meta.parent_path();
    std::size_t blobs = 0;
    for (const auto& r : corpus.records()) {
        const fs::path from = src_root / r.blob_ref, to = dest / r.blob_ref;
        if (r.blob_ref.empty() || !fs::exists(from) || fs::equivalent(src_root, dest)) continue;
        fs::create_directories(to.parent_path());
        fs::copy_file(from, to, fs::copy_options::overwrite_existing);
        ++blobs;
    }
    for (const char* sub : {"layers", "series"}) {
        if (fs::is_directory(src_root / sub) && !fs::equivalent(src_root, dest)) {
            fs::copy(src_root / sub, dest / sub, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
        }
    }
    std::cout << Json{{"store", dest.string()}, {"records", corpus.size()}, {"feature_blocks", reader.count()},
                      {"blobs_copied", blobs}}
                     .dump()
              << '\n';
    return kOk;
}

int cmd_build_index(const Options& o) {
    const auto index = build_index_dir(features_path(o), o.index_dir, o.n_bits, o.seed, o.threads);
    std::cout << Json{{"index_dir", o.index_dir.string()},
                      {"images", index.image_count()},
                      {"bits", o.n_bits},
                      {"region_family", index.region_family().digest()},
                      {"coarse_family", index.coarse_family().digest()}}
                     .dump()
              << '\n';
    return kOk;
}

std::shared_ptr<const Snapshot> open_snapshot(const Options& o) {
    return load_snapshot(store_dir(o), o.index_dir, meta_path(o));
}

ServiceConfig service_config(const Options& o) {
    ServiceConfig c;
    c.default_tau = o.tau;
    c.default_theta = o.theta;
    c.threads = o.threads;
    return c;
}

// Same handler as POST /query/search, so output matches the HTTP response.
int cmd_query(const Options& o) {
    Service service(open_snapshot(o), {}, service_config(o));
    const Response r = service.handle("POST", "/query/search", read_spec(o).dump());
    if (r.status != 200) {
        std::cerr << r.body << '\n';
        return r.status == 404 ? kMissing : kInvalid;
    }
    std::cout << r.body << '\n';
    return kOk;
}

int cmd_stats(const Options& o) {
    std::optional<SignatureIndex> index;
    if (fs::exists(o.index_dir / "manifest.json")) index = SignatureIndex::load(o.index_dir);
    const std::size_t bits = index ? index->regions().bits : o.n_bits;
    const std::size_t bytes_per_signature = bits / 8;
    const std::size_t hashed_per_image = kVectorsPerImage * bytes_per_signature;
    const double ratio = static_cast<double>(kRawBytesPerImage) / static_cast<double>(hashed_per_image);
    Json out = {
        {"bits", bits},
        {"bytes_per_signature", bytes_per_signature},
        {"signatures_per_image", kVectorsPerImage},
        {"hashed_bytes_per_image", hashed_per_image},
        {"raw_bytes_per_image", kRawBytesPerImage},
        {"compression_ratio", ratio},
        {"projection",
         {{"images", o.projected_images},
          {"raw_tb", o.projected_images * static_cast<double>(kRawBytesPerImage) / 1e12},
          {"hashed_gb", o.projected_images * static_cast<double>(hashed_per_image) / 1e9}}},
    };
    const fs::path features = features_path(o);
    if (fs::exists(features)) {
        FeatureReader reader(features);
        out["corpus"] = {{"images", reader.count()}, {"feature_file_bytes", fs::file_size(features)}};
    }
    if (index) {
        std::uintmax_t sig_bytes = 0;
        for (const char* f : {"regions.umsg", "coarse.umsg"}) sig_bytes += fs::file_size(o.index_dir / f);
        out["index"] = {{"images", index->image_count()},
                        {"region_signatures", index->regions().size()},
                        {"coarse_signatures", index->coarse().size()},
                        {"signature_payload_bytes", (index->regions().size() + index->coarse().size()) * bytes_per_signature},
                        {"signature_file_bytes", sig_bytes}};
    }
    std::cout << out.dump(2) << '\n';
    return kOk;
}

int cmd_serve(const Options& o) {
    Service service(open_snapshot(o), o.workspace.empty() ? store_dir(o) / "workspace.jsonl" : o.workspace,
                    service_config(o));
    HttpServer server(service);
    std::cerr << Json{{"listening", o.host + ":" + std::to_string(o.port)}}.dump() << '\n';
    server.listen(o.host, o.port);
    return kOk;
}

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Grayscale choropleth of point counts per polygon with the points drawn on
// top; prints legibly in black and white.
int cmd_export_map(const Options& o) {
    const auto snap = open_snapshot(o);
    auto lit = snap->layers.find(o.layer);
    if (lit == snap->layers.end()) throw NotFoundError("unknown layer '" + o.layer + "'");
    const PartitionLayer& layer = lit->second;

    std::vector<GeoPoint> points;
    std::string title;
    if (!o.spec.empty()) {
        const auto spec = parse_query_spec(read_spec(o), o.tau);
        auto hits = run_query(*snap, spec, o.threads);
        std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.image < b.image; });
        for (const auto& h : hits) points.push_back(snap->corpus.at(h.image).location);
        title = std::to_string(points.size()) + " matching images";
    } else {
        for (const auto& r : snap->corpus.records()) points.push_back(r.location);
        title = std::to_string(points.size()) + " images";
    }
    const auto agg = aggregate_partition(points, layer, {}, o.threads);

    BoundingBox box = layer.features.front().polygon.bbox();
    for (const auto& f : layer.features) {
        const auto& b = f.polygon.bbox();
        box = {std::min(box.min_lat, b.min_lat), std::min(box.min_lon, b.min_lon), std::max(box.max_lat, b.max_lat),
               std::max(box.max_lon, b.max_lon)};
    }
    for (const auto& p : points) {
        box = {std::min(box.min_lat, p.lat), std::min(box.min_lon, p.lon), std::max(box.max_lat, p.lat),
               std::max(box.max_lon, p.lon)};
    }
    const double kx = std::cos((box.min_lat + box.max_lat) * 0.5 * 3.14159265358979 / 180.0);
    const double width = 1000.0, margin = 20.0, header = 40.0;
    const double span_x = std::max((box.max_lon - box.min_lon) * kx, 1e-9);
    const double span_y = std::max(box.max_lat - box.min_lat, 1e-9);
    const double scale = (width - 2 * margin) / span_x;
    const double height = span_y * scale + 2 * margin + header;
    auto X = [&](double lon) { return margin + (lon - box.min_lon) * kx * scale; };
    auto Y = [&](double lat) { return header + margin + (box.max_lat - lat) * scale; };

    std::uint64_t max_count = 1;
    for (const auto& p : agg.polygons) max_count = std::max(max_count, p.count);

    std::ostringstream svg;
    svg.setf(std::ios::fixed);
    svg.precision(2);
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << margin << "\" y=\"26\" font-family=\"sans-serif\" font-size=\"18\">" << svg_escape(layer.name)
        << ": " << svg_escape(title) << " (max " << max_count << " per polygon)</text>\n";
    for (std::size_t i = 0; i < layer.features.size(); ++i) {
        const auto& poly = layer.features[i].polygon;
        const int shade = 255 - static_cast<int>(std::lround(160.0 * static_cast<double>(agg.polygons[i].count) /
                                                              static_cast<double>(max_count)));
        svg << "<path fill-rule=\"evenodd\" stroke=\"black\" stroke-width=\"0.6\" fill=\"rgb(" << shade << ','
            << shade << ',' << shade << ")\" d=\"";
        auto ring_path = [&](const Ring& ring) {
            for (std::size_t k = 0; k < ring.size(); ++k) {
                svg << (k == 0 ? 'M' : 'L') << X(ring[k].lon) << ',' << Y(ring[k].lat) << ' ';
            }
            svg << "Z ";
        };
        ring_path(poly.exterior());
        for (const auto& h : poly.holes()) ring_path(h);
        svg << "\"><title>" << svg_escape(layer.features[i].name) << ": " << agg.polygons[i].count
            << "</title></path>\n";
    }
    for (const auto& p : points) {
        svg << "<circle cx=\"" << X(p.lon) << "\" cy=\"" << Y(p.lat)
            << "\" r=\"2.5\" fill=\"black\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(o.map_out, std::ios::trunc);
    if (!out) throw Error("cannot write " + o.map_out.string());
    out << svg.str();
    std::cout << Json{{"out", o.map_out.string()}, {"points", points.size()}, {"polygons", layer.size()}}.dump()
              << '\n';
    return kOk;
}

int report(int code, const char* kind, const std::string& message) {
    std::cerr << Json{{"error", kind}, {"message", message}}.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Street-level image corpus explorer"};
    app.set_config("--config", "", "Read flags from a key = value file");
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--seed", o.seed, "Generator and hash family seed");
    app.add_option("--images", o.images, "Synthetic corpus size");
    app.add_option("--clusters", o.clusters, "Planted clusters in the synthetic corpus");
    app.add_option("--sigma", o.sigma, "Synthetic noise scale");
    app.add_option("--out", o.out, "Output directory (gen, ingest)");
    app.add_option("--store", o.store, "Corpus store directory");
    app.add_option("--features", o.features, "Feature file (UMFV)");
    app.add_option("--meta", o.meta, "Metadata file (JSON lines)");
    app.add_option("--index-dir", o.index_dir, "Signature index directory");
    app.add_option("--n-bits", o.n_bits, "Signature length in bits")->check(CLI::PositiveNumber);
    app.add_option("--tau", o.tau, "Default angular threshold (radians)");
    app.add_option("--theta", o.theta, "Default cluster threshold (radians)");
    app.add_option("--host", o.host, "Bind address");
    app.add_option("--port", o.port, "HTTP port")->check(CLI::Range(1, 65535));
    app.add_option("--spec", o.spec, "Query spec JSON file ('-' for stdin)");
    app.add_option("--workspace", o.workspace, "Workspace file (JSON lines)");
    app.add_option("--layer", o.layer, "Partition layer for export-map");
    app.add_option("--map-out", o.map_out, "SVG output for export-map");
    app.add_option("--projected-images", o.projected_images, "Corpus size for the storage projection");
    app.add_option("--threads", o.threads, "Worker threads (0 = hardware concurrency)");

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Options&);
    };
    const Command commands[] = {
        {"gen", "Write a seeded synthetic corpus", cmd_gen},
        {"ingest", "Validate metadata and features into a store directory", cmd_ingest},
        {"build-index", "Hash features into a signature index", cmd_build_index},
        {"query", "Run a query spec and print hits", cmd_query},
        {"stats", "Report storage sizes and compression", cmd_stats},
        {"serve", "Start the HTTP service", cmd_serve},
        {"export-map", "Write a printable SVG map", cmd_export_map},
    };
    for (const auto& c : commands) app.add_subcommand(c.name, c.help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return report(kUsage, "usage", e.what());
    }

    try {
        for (const auto& c : commands) {
            if (app.got_subcommand(c.name)) return c.run(o);
        }
        return report(kUsage, "usage", "no command given");
    } catch (const NotFoundError& e) {
        return report(kMissing, "not_found", e.what());
    } catch (const FormatError& e) {
        return report(kFormat, "format", e.what());
    } catch (const ValidationError& e) {
        return report(kInvalid, "invalid", e.what());
    } catch (const ApiError& e) {
        return report(e.status() == 404 ? kMissing : kInvalid, e.code().c_str(), e.what());
    } catch (const fs::filesystem_error& e) {
        return report(kMissing, "filesystem", e.what());
    } catch (const std::exception& e) {
        return report(kFailure, "error", e.what());
    }
}
