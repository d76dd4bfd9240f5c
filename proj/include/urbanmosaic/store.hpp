#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "urbanmosaic/core.hpp"

namespace urbanmosaic {

inline constexpr std::size_t kRegionDim = 4096;
inline constexpr std::size_t kCoarseDim = 512;
inline constexpr std::size_t kVectorsPerImage = RegionId::kCount + 1;

/// Raw float storage for one image: 20 region vectors plus the coarse one.
inline constexpr std::uint64_t kRawBytesPerImage =
    (RegionId::kCount * kRegionDim + kCoarseDim) * sizeof(float);
static_assert(kRawBytesPerImage == 329'728);

inline constexpr std::uint64_t kFeatureHeaderBytes = 8;
inline constexpr std::uint64_t kFeatureBlockBytes = sizeof(std::uint64_t) + kRawBytesPerImage;

/// Exact size of a feature file holding `images` blocks.
constexpr std::uint64_t feature_file_size(std::uint64_t images) {
    return kFeatureHeaderBytes + images * kFeatureBlockBytes;
}

// ---------------------------------------------------------------------------
// Feature vectors
// ---------------------------------------------------------------------------

/// A finite, non-zero descriptor of dimension 512 or 4096.
class FeatureVector {
public:
    FeatureVector() = default;
    /// Throws ValidationError on a bad dimension, non-finite or all-zero data.
    explicit FeatureVector(std::vector<float> values);

    std::span<const float> values() const noexcept { return values_; }
    std::size_t dim() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    bool operator==(const FeatureVector&) const = default;

private:
    std::vector<float> values_;
};

/// Checks finiteness, non-zero norm and dimension of raw data.
void validate_feature(std::span<const float> values, std::size_t expected_dim);

struct ImageFeatures {
    ImageId id = 0;
    std::array<FeatureVector, RegionId::kCount> regions;
    FeatureVector coarse;

    const FeatureVector& region(const RegionId& r) const { return regions[r.code()]; }
    bool operator==(const ImageFeatures&) const = default;
};

/// Where a vector of the catalog comes from.
struct VectorSlot {
    ImageId image = 0;
    std::optional<RegionId> region;  // nullopt for the coarse vector

    bool operator==(const VectorSlot&) const = default;
};

struct FeatureCatalog {
    std::vector<ImageFeatures> images;

    std::size_t vector_count() const noexcept { return images.size() * kVectorsPerImage; }
    /// Global index = image position * 21 + slot, slot 20 being coarse.
    VectorSlot locate(std::size_t global_index) const;
    /// Throws ValidationError on wrong dimensions or duplicate ids.
    void validate() const;

    bool operator==(const FeatureCatalog&) const = default;
};

/// Streams UMFV blocks to disk. Layout: "UMFV", u16 version=1, u16 reserved,
/// then per image: u64 id, 20x4096 f32 regions in code order, 512 f32 coarse.
class FeatureWriter {
public:
    explicit FeatureWriter(const std::filesystem::path& path);

    void append(const ImageFeatures& image);
    /// `regions` holds 20*4096 floats in code order.
    void append(ImageId id, std::span<const float> regions, std::span<const float> coarse);
    void close();
    std::uint64_t count() const noexcept { return count_; }

private:
    std::ofstream out_;
    std::uint64_t count_ = 0;
};

/// Random-access reader over a UMFV file. Validates header and size on open.
class FeatureReader {
public:
    explicit FeatureReader(const std::filesystem::path& path);

    std::uint64_t count() const noexcept { return count_; }
    ImageId id_at(std::uint64_t index);
    /// Reads block `index` into raw buffers (20*4096 and 512 floats).
    ImageId read_raw(std::uint64_t index, std::vector<float>& regions, std::vector<float>& coarse);
    ImageFeatures read(std::uint64_t index);

private:
    std::ifstream in_;
    std::uint64_t count_ = 0;
    std::filesystem::path path_;
};

void write_features(const FeatureCatalog& catalog, const std::filesystem::path& path);
FeatureCatalog read_features(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------------

class DuplicateIdError : public ValidationError {
public:
    explicit DuplicateIdError(ImageId id);
    ImageId id() const noexcept { return id_; }

private:
    ImageId id_;
};

/// Malformed metadata line; `line()` is 1-based.
class MetadataError : public FormatError {
public:
    MetadataError(std::size_t line, const std::string& message);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Image records ordered by (timestamp, id) with id lookup.
class Corpus {
public:
    Corpus() = default;
    /// Sorts, validates records and rejects duplicate ids.
    explicit Corpus(std::vector<ImageRecord> records);

    const std::vector<ImageRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    const ImageRecord* find(ImageId id) const noexcept;
    /// Throws NotFoundError.
    const ImageRecord& at(ImageId id) const;
    bool contains(ImageId id) const noexcept { return by_id_.count(id) != 0; }

private:
    std::vector<ImageRecord> records_;
    std::unordered_map<ImageId, std::size_t> by_id_;
};

Corpus parse_metadata(std::istream& in);
Corpus ingest_metadata(const std::filesystem::path& path);
void write_metadata(const Corpus& corpus, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Urban data sets
// ---------------------------------------------------------------------------

using AttributeValue = std::variant<double, std::string>;
using Attributes = std::map<std::string, AttributeValue>;

struct PartitionFeature {
    std::string name;
    Polygon polygon;
    Attributes properties;

    std::optional<double> numeric(const std::string& key) const;
};

struct PartitionLayer {
    std::string name;
    std::vector<PartitionFeature> features;

    std::size_t size() const noexcept { return features.size(); }
};

struct TimeSample {
    Timestamp t = 0;
    double value = 0.0;
    bool operator==(const TimeSample&) const = default;
};

struct TimeSeries {
    std::string name;
    std::vector<TimeSample> samples;

    /// Throws ValidationError unless timestamps strictly increase.
    void validate() const;
    bool operator==(const TimeSeries&) const = default;
};

/// GeoJSON FeatureCollection of Polygon features; coordinates are [lon, lat].
PartitionLayer parse_geojson_layer(const std::string& text, std::string name);
PartitionLayer read_geojson_layer(const std::filesystem::path& path);
std::string layer_to_geojson(const PartitionLayer& layer);
void write_geojson_layer(const PartitionLayer& layer, const std::filesystem::path& path);

/// CSV with header "timestamp,value"; timestamps ISO-8601 UTC.
TimeSeries read_time_series(const std::filesystem::path& path, std::string name);
void write_time_series(const TimeSeries& series, const std::filesystem::path& path);

}  // namespace urbanmosaic
