#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "urbanmosaic/core.hpp"
#include "urbanmosaic/store.hpp"

namespace urbanmosaic {

struct SyntheticParams {
    std::uint64_t seed = 7;
    std::size_t images = 1000;
    std::size_t clusters = 10;
    BoundingBox bbox{40.70, -74.02, 40.80, -73.93};
    TimeInterval epoch{1546300800, 1577836800};  // calendar year 2019
    /// Expected norm of the noise added to a unit cluster center.
    double sigma = 0.15;
    std::size_t layer_rows = 10;
    std::size_t layer_cols = 20;
    std::size_t vehicles = 8;

    /// Throws ValidationError.
    void validate() const;
};

/// Deterministic corpus with planted cluster structure. Image i (0-based)
/// has id i + 1 and belongs to cluster label(i); the first `clusters`
/// images seed one cluster each and the rest draw a uniform label.
/// Every descriptor of a member is normalize(center + noise), noise having
/// i.i.d. N(0, sigma^2 / dim) coordinates. Vectors are regenerated on
/// demand from a per-image seed, so large corpora never live in memory.
class SyntheticCorpus {
public:
    explicit SyntheticCorpus(const SyntheticParams& params);

    const SyntheticParams& params() const noexcept { return params_; }
    std::size_t size() const noexcept { return records_.size(); }

    static ImageId id_of(std::size_t index) noexcept { return index + 1; }
    std::size_t label(std::size_t index) const { return labels_.at(index); }
    const std::vector<std::size_t>& labels() const noexcept { return labels_; }

    /// Records in generation order (not timestamp order).
    const std::vector<ImageRecord>& records() const noexcept { return records_; }
    Corpus corpus() const { return Corpus(records_); }

    std::span<const float> region_center(std::size_t cluster) const;
    std::span<const float> coarse_center(std::size_t cluster) const;

    /// Fills 20 * 4096 floats in region-code order.
    void region_vectors(std::size_t index, std::span<float> out) const;
    void coarse_vector(std::size_t index, std::span<float> out) const;
    ImageFeatures features(std::size_t index) const;

    const PartitionLayer& layer() const noexcept { return layer_; }
    const TimeSeries& precipitation() const noexcept { return precipitation_; }

    /// Writes meta.jsonl, features.umfv, labels.csv, blobs/<id>.ppm,
    /// layers/tracts.geojson and series/precipitation.csv under `dir`.
    void write(const std::filesystem::path& dir) const;

    /// 8x8 binary PPM filled with the cluster's color.
    static std::vector<std::uint8_t> placeholder_blob(std::size_t cluster);

private:
    SyntheticParams params_;
    std::vector<std::size_t> labels_;
    std::vector<ImageRecord> records_;
    std::vector<float> region_centers_;
    std::vector<float> coarse_centers_;
    PartitionLayer layer_;
    TimeSeries precipitation_;
};

}  // namespace urbanmosaic
