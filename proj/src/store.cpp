#include "urbanmosaic/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "urbanmosaic/json_io.hpp"

namespace urbanmosaic {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and must be little-endian");

namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[4] = {'U', 'M', 'F', 'V'};
constexpr std::uint16_t kFeatureVersion = 1;

template <typename T>
void put(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& value) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(&value), sizeof(T)));
}

void put_floats(std::ostream& out, std::span<const float> values) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
}

}  // namespace

// ---------------------------------------------------------------------------

void validate_feature(std::span<const float> values, std::size_t expected_dim) {
    if (values.size() != expected_dim) {
        throw ValidationError("feature dimension " + std::to_string(values.size()) + ", expected " +
                              std::to_string(expected_dim));
    }
    bool nonzero = false;
    for (float v : values) {
        if (!std::isfinite(v)) throw ValidationError("feature vector has a non-finite value");
        nonzero = nonzero || v != 0.0f;
    }
    if (!nonzero) throw ValidationError("feature vector is all-zero");
}

FeatureVector::FeatureVector(std::vector<float> values) : values_(std::move(values)) {
    if (values_.size() != kRegionDim && values_.size() != kCoarseDim) {
        throw ValidationError("feature dimension must be 512 or 4096, got " +
                              std::to_string(values_.size()));
    }
    validate_feature(values_, values_.size());
}

VectorSlot FeatureCatalog::locate(std::size_t global_index) const {
    if (global_index >= vector_count()) throw NotFoundError("vector index out of range");
    const auto& image = images[global_index / kVectorsPerImage];
    const std::size_t slot = global_index % kVectorsPerImage;
    if (slot == RegionId::kCount) return {image.id, std::nullopt};
    return {image.id, RegionId::from_code(static_cast<std::uint8_t>(slot))};
}

void FeatureCatalog::validate() const {
    std::vector<ImageId> ids;
    ids.reserve(images.size());
    for (const auto& image : images) {
        for (const auto& r : image.regions) validate_feature(r.values(), kRegionDim);
        validate_feature(image.coarse.values(), kCoarseDim);
        ids.push_back(image.id);
    }
    std::sort(ids.begin(), ids.end());
    if (auto it = std::adjacent_find(ids.begin(), ids.end()); it != ids.end()) {
        throw DuplicateIdError(*it);
    }
}

// ---------------------------------------------------------------------------

FeatureWriter::FeatureWriter(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot open feature file for writing: " + path.string());
    out_.write(kFeatureMagic, 4);
    put(out_, kFeatureVersion);
    put(out_, std::uint16_t{0});
}

void FeatureWriter::append(const ImageFeatures& image) {
    for (const auto& r : image.regions) validate_feature(r.values(), kRegionDim);
    validate_feature(image.coarse.values(), kCoarseDim);
    put(out_, static_cast<std::uint64_t>(image.id));
    for (const auto& r : image.regions) put_floats(out_, r.values());
    put_floats(out_, image.coarse.values());
    ++count_;
}

void FeatureWriter::append(ImageId id, std::span<const float> regions, std::span<const float> coarse) {
    if (regions.size() != RegionId::kCount * kRegionDim || coarse.size() != kCoarseDim) {
        throw ValidationError("feature block has wrong dimensions");
    }
    put(out_, static_cast<std::uint64_t>(id));
    put_floats(out_, regions);
    put_floats(out_, coarse);
    ++count_;
}

void FeatureWriter::close() {
    out_.flush();
    if (!out_) throw Error("failed writing feature file");
    out_.close();
}

FeatureReader::FeatureReader(const fs::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw NotFoundError("cannot open feature file: " + path.string());
    char magic[4];
    std::uint16_t version = 0, reserved = 0;
    if (!in_.read(magic, 4) || !get(in_, version) || !get(in_, reserved)) {
        throw FormatError("feature file truncated in header: " + path.string());
    }
    if (std::memcmp(magic, kFeatureMagic, 4) != 0) {
        throw FormatError("bad feature file magic (expected UMFV): " + path.string());
    }
    if (version != kFeatureVersion) {
        throw FormatError("unsupported feature file version " + std::to_string(version));
    }
    const auto size = fs::file_size(path);
    const auto body = size - kFeatureHeaderBytes;
    if (body % kFeatureBlockBytes != 0) {
        throw FormatError("feature file truncated or has a dimension mismatch: " + path.string());
    }
    count_ = body / kFeatureBlockBytes;
}

ImageId FeatureReader::id_at(std::uint64_t index) {
    if (index >= count_) throw NotFoundError("feature block out of range");
    in_.seekg(static_cast<std::streamoff>(kFeatureHeaderBytes + index * kFeatureBlockBytes));
    std::uint64_t id = 0;
    if (!get(in_, id)) throw FormatError("feature file truncated");
    return id;
}

ImageId FeatureReader::read_raw(std::uint64_t index, std::vector<float>& regions,
                                std::vector<float>& coarse) {
    const ImageId id = id_at(index);
    regions.resize(RegionId::kCount * kRegionDim);
    coarse.resize(kCoarseDim);
    if (!in_.read(reinterpret_cast<char*>(regions.data()),
                  static_cast<std::streamsize>(regions.size() * sizeof(float))) ||
        !in_.read(reinterpret_cast<char*>(coarse.data()),
                  static_cast<std::streamsize>(coarse.size() * sizeof(float)))) {
        throw FormatError("feature file truncated in block " + std::to_string(index));
    }
    return id;
}

ImageFeatures FeatureReader::read(std::uint64_t index) {
    std::vector<float> regions, coarse;
    ImageFeatures out;
    out.id = read_raw(index, regions, coarse);
    for (std::size_t r = 0; r < RegionId::kCount; ++r) {
        out.regions[r] = FeatureVector(std::vector<float>(regions.begin() + r * kRegionDim,
                                                          regions.begin() + (r + 1) * kRegionDim));
    }
    out.coarse = FeatureVector(std::move(coarse));
    return out;
}

void write_features(const FeatureCatalog& catalog, const fs::path& path) {
    catalog.validate();
    FeatureWriter writer(path);
    for (const auto& image : catalog.images) writer.append(image);
    writer.close();
}

FeatureCatalog read_features(const fs::path& path) {
    FeatureReader reader(path);
    FeatureCatalog catalog;
    catalog.images.reserve(reader.count());
    for (std::uint64_t i = 0; i < reader.count(); ++i) catalog.images.push_back(reader.read(i));
    catalog.validate();
    return catalog;
}

// ---------------------------------------------------------------------------

DuplicateIdError::DuplicateIdError(ImageId id)
    : ValidationError("duplicate image id " + std::to_string(id)), id_(id) {}

MetadataError::MetadataError(std::size_t line, const std::string& message)
    : FormatError("metadata line " + std::to_string(line) + ": " + message), line_(line) {}

Corpus::Corpus(std::vector<ImageRecord> records) : records_(std::move(records)) {
    for (const auto& r : records_) validate(r);
    std::sort(records_.begin(), records_.end(), [](const ImageRecord& a, const ImageRecord& b) {
        return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
    });
    by_id_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!by_id_.emplace(records_[i].id, i).second) throw DuplicateIdError(records_[i].id);
    }
}

const ImageRecord* Corpus::find(ImageId id) const noexcept {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

const ImageRecord& Corpus::at(ImageId id) const {
    if (const auto* r = find(id)) return *r;
    throw NotFoundError("unknown image id " + std::to_string(id));
}

Corpus parse_metadata(std::istream& in) {
    std::vector<ImageRecord> records;
    std::unordered_map<ImageId, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ImageRecord record;
        try {
            record = record_from_json(Json::parse(line));
            validate(record);
        } catch (const Json::exception& e) {
            throw MetadataError(line_no, e.what());
        } catch (const Error& e) {
            throw MetadataError(line_no, e.what());
        }
        if (!seen.emplace(record.id, line_no).second) throw DuplicateIdError(record.id);
        records.push_back(std::move(record));
    }
    return Corpus(std::move(records));
}

Corpus ingest_metadata(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open metadata file: " + path.string());
    return parse_metadata(in);
}

void write_metadata(const Corpus& corpus, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open metadata file for writing: " + path.string());
    for (const auto& r : corpus.records()) out << to_json(r).dump() << '\n';
    if (!out) throw Error("failed writing metadata file");
}

// ---------------------------------------------------------------------------

std::optional<double> PartitionFeature::numeric(const std::string& key) const {
    auto it = properties.find(key);
    if (it == properties.end()) return std::nullopt;
    if (const double* d = std::get_if<double>(&it->second)) return *d;
    return std::nullopt;
}

void TimeSeries::validate() const {
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].t <= samples[i - 1].t) {
            throw ValidationError("time series '" + name + "' timestamps must strictly increase (row " +
                                  std::to_string(i) + ")");
        }
    }
    for (const auto& s : samples) {
        if (!std::isfinite(s.value)) throw ValidationError("time series has a non-finite value");
    }
}

PartitionLayer parse_geojson_layer(const std::string& text, std::string name) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::exception& e) {
        throw FormatError(std::string("layer is not valid JSON: ") + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc["features"].is_array()) {
        throw FormatError("layer must be a GeoJSON FeatureCollection");
    }
    PartitionLayer layer;
    layer.name = doc.value("name", std::move(name));
    for (const auto& f : doc["features"]) {
        if (!f.contains("geometry")) throw FormatError("feature without geometry");
        PartitionFeature feature;
        feature.polygon = polygon_from_json(f["geometry"]);
        if (f.contains("properties")) feature.properties = attributes_from_json(f["properties"]);
        if (auto it = feature.properties.find("name");
            it != feature.properties.end() && std::holds_alternative<std::string>(it->second)) {
            feature.name = std::get<std::string>(it->second);
        } else {
            feature.name = "polygon-" + std::to_string(layer.features.size());
        }
        layer.features.push_back(std::move(feature));
    }
    return layer;
}

PartitionLayer read_geojson_layer(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open layer file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_geojson_layer(buf.str(), path.stem().string());
}

std::string layer_to_geojson(const PartitionLayer& layer) {
    Json features = Json::array();
    for (const auto& f : layer.features) {
        Json props = to_json(f.properties);
        props["name"] = f.name;
        features.push_back({{"type", "Feature"}, {"properties", props}, {"geometry", to_json(f.polygon)}});
    }
    return Json{{"type", "FeatureCollection"}, {"name", layer.name}, {"features", features}}.dump();
}

void write_geojson_layer(const PartitionLayer& layer, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open layer file for writing: " + path.string());
    out << layer_to_geojson(layer) << '\n';
}

TimeSeries read_time_series(const fs::path& path, std::string name) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open time series file: " + path.string());
    TimeSeries series{std::move(name), {}};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line == "timestamp,value") continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw FormatError("time series line " + std::to_string(line_no) + ": expected 'timestamp,value'");
        }
        TimeSample s;
        try {
            s.t = parse_iso8601(line.substr(0, comma));
            std::size_t used = 0;
            const std::string value = line.substr(comma + 1);
            s.value = std::stod(value, &used);
            if (used != value.size()) throw FormatError("trailing characters");
        } catch (const std::exception& e) {
            throw FormatError("time series line " + std::to_string(line_no) + ": " + e.what());
        }
        series.samples.push_back(s);
    }
    series.validate();
    return series;
}

void write_time_series(const TimeSeries& series, const fs::path& path) {
    series.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open time series file for writing: " + path.string());
    out << "timestamp,value\n";
    char buf[64];
    for (const auto& s : series.samples) {
        std::snprintf(buf, sizeof buf, "%.17g", s.value);
        out << format_iso8601(s.t) << ',' << buf << '\n';
    }
}

}  // namespace urbanmosaic
