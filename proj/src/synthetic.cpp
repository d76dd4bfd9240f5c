#include "urbanmosaic/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace urbanmosaic {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent streams derived from the corpus seed.
enum Stream : std::uint64_t { kMeta = 1, kCenters = 2, kLayer = 3, kSeries = 4, kImage = 1000 };

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(which)));
}

void unit_gaussian(std::mt19937_64& rng, std::span<float> out) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> tmp(out.size());
    double norm = 0.0;
    for (auto& x : tmp) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(tmp[i] / norm);
}

void perturb(std::mt19937_64& rng, std::span<const float> center, double sigma, std::span<float> out) {
    std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(center.size())));
    std::vector<double> tmp(center.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < center.size(); ++i) {
        tmp[i] = center[i] + normal(rng);
        norm += tmp[i] * tmp[i];
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(tmp[i] / norm);
}

PartitionLayer make_layer(const SyntheticParams& p) {
    auto rng = stream(p.seed, kLayer);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    std::uniform_real_distribution<double> income(20000.0, 150000.0);
    std::uniform_int_distribution<int> historic(0, 40);
    const std::size_t rows = p.layer_rows, cols = p.layer_cols;
    const double dlat = (p.bbox.max_lat - p.bbox.min_lat) / static_cast<double>(rows);
    const double dlon = (p.bbox.max_lon - p.bbox.min_lon) / static_cast<double>(cols);
    // Shared jittered lattice: adjacent cells share edges exactly, so the
    // layer is a partition of the bounding box.
    std::vector<GeoPoint> lattice((rows + 1) * (cols + 1));
    for (std::size_t r = 0; r <= rows; ++r) {
        for (std::size_t c = 0; c <= cols; ++c) {
            double lat = p.bbox.min_lat + static_cast<double>(r) * dlat;
            double lon = p.bbox.min_lon + static_cast<double>(c) * dlon;
            const double jl = jitter(rng), jo = jitter(rng);
            if (r > 0 && r < rows) lat += jl * dlat;
            if (c > 0 && c < cols) lon += jo * dlon;
            lattice[r * (cols + 1) + c] = {lat, lon};
        }
    }
    PartitionLayer layer;
    layer.name = "tracts";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            auto at = [&](std::size_t rr, std::size_t cc) { return lattice[rr * (cols + 1) + cc]; };
            PartitionFeature f;
            f.name = "tract-" + std::to_string(r) + "-" + std::to_string(c);
            f.polygon = Polygon({at(r, c), at(r, c + 1), at(r + 1, c + 1), at(r + 1, c)});
            f.properties["median_income"] = std::round(income(rng));
            f.properties["historic_buildings"] = static_cast<double>(historic(rng));
            f.properties["name"] = f.name;
            layer.features.push_back(std::move(f));
        }
    }
    return layer;
}

TimeSeries make_precipitation(const SyntheticParams& p) {
    auto rng = stream(p.seed, kSeries);
    std::bernoulli_distribution wet(0.3);
    std::exponential_distribution<double> amount(1.0 / 5.0);
    TimeSeries series{"precipitation", {}};
    for (Timestamp t = p.epoch.start; t < p.epoch.end; t += 86400) {
        const bool rain = wet(rng);
        const double mm = amount(rng);
        series.samples.push_back({t, rain ? std::round(mm * 10.0) / 10.0 + 0.1 : 0.0});
    }
    return series;
}

}  // namespace

void SyntheticParams::validate() const {
    if (clusters > images) throw ValidationError("clusters must not exceed images");
    if (images > 0 && clusters == 0) throw ValidationError("a non-empty corpus needs at least one cluster");
    if (!(bbox.min_lat < bbox.max_lat && bbox.min_lon < bbox.max_lon) || !is_valid({bbox.min_lat, bbox.min_lon}) ||
        !is_valid({bbox.max_lat, bbox.max_lon})) {
        throw ValidationError("invalid bounding box");
    }
    if (epoch.start >= epoch.end) throw ValidationError("epoch start must precede end");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be finite and non-negative");
    if (layer_rows == 0 || layer_cols == 0 || vehicles == 0) throw ValidationError("layer shape and vehicles must be positive");
}

SyntheticCorpus::SyntheticCorpus(const SyntheticParams& params) : params_(params) {
    params_.validate();
    const auto& p = params_;

    auto centers = stream(p.seed, kCenters);
    region_centers_.resize(p.clusters * kRegionDim);
    coarse_centers_.resize(p.clusters * kCoarseDim);
    for (std::size_t c = 0; c < p.clusters; ++c) {
        unit_gaussian(centers, std::span(region_centers_).subspan(c * kRegionDim, kRegionDim));
        unit_gaussian(centers, std::span(coarse_centers_).subspan(c * kCoarseDim, kCoarseDim));
    }

    auto rng = stream(p.seed, kMeta);
    const double lat_span = p.bbox.max_lat - p.bbox.min_lat;
    const double lon_span = p.bbox.max_lon - p.bbox.min_lon;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<GeoPoint> blob_centers(p.clusters);
    for (auto& bc : blob_centers) {
        bc = {p.bbox.min_lat + (0.1 + 0.8 * u01(rng)) * lat_span, p.bbox.min_lon + (0.1 + 0.8 * u01(rng)) * lon_span};
    }
    std::uniform_int_distribution<std::size_t> pick_cluster(0, p.clusters == 0 ? 0 : p.clusters - 1);
    std::uniform_int_distribution<Timestamp> pick_time(p.epoch.start, p.epoch.end - 1);
    std::normal_distribution<double> spread(0.0, 0.05);
    std::uniform_int_distribution<int> camera(0, 4);
    std::uniform_int_distribution<std::size_t> vehicle(1, p.vehicles);

    labels_.resize(p.images);
    records_.resize(p.images);
    for (std::size_t i = 0; i < p.images; ++i) {
        const std::size_t label = i < p.clusters ? i : pick_cluster(rng);
        labels_[i] = label;
        ImageRecord& r = records_[i];
        r.id = id_of(i);
        r.timestamp = pick_time(rng);
        const double lat = blob_centers[label].lat + spread(rng) * lat_span;
        const double lon = blob_centers[label].lon + spread(rng) * lon_span;
        // Keep every point strictly inside the half-open bbox.
        r.location = {std::clamp(lat, p.bbox.min_lat, std::nextafter(p.bbox.max_lat, p.bbox.min_lat)),
                      std::clamp(lon, p.bbox.min_lon, std::nextafter(p.bbox.max_lon, p.bbox.min_lon))};
        r.heading = std::floor(u01(rng) * 3600.0) / 10.0;
        r.camera_id = static_cast<std::uint16_t>(camera(rng));
        r.vehicle_id = static_cast<std::uint16_t>(vehicle(rng));
        r.blob_ref = "blobs/" + std::to_string(r.id) + ".ppm";
    }

    layer_ = make_layer(p);
    precipitation_ = make_precipitation(p);
}

std::span<const float> SyntheticCorpus::region_center(std::size_t cluster) const {
    return std::span(region_centers_).subspan(cluster * kRegionDim, kRegionDim);
}

std::span<const float> SyntheticCorpus::coarse_center(std::size_t cluster) const {
    return std::span(coarse_centers_).subspan(cluster * kCoarseDim, kCoarseDim);
}

void SyntheticCorpus::region_vectors(std::size_t index, std::span<float> out) const {
    if (out.size() != RegionId::kCount * kRegionDim) throw ValidationError("region buffer has the wrong size");
    auto rng = stream(params_.seed, kImage + 2 * index);
    const auto center = region_center(labels_.at(index));
    for (std::size_t r = 0; r < RegionId::kCount; ++r) {
        perturb(rng, center, params_.sigma, out.subspan(r * kRegionDim, kRegionDim));
    }
}

void SyntheticCorpus::coarse_vector(std::size_t index, std::span<float> out) const {
    if (out.size() != kCoarseDim) throw ValidationError("coarse buffer has the wrong size");
    auto rng = stream(params_.seed, kImage + 2 * index + 1);
    perturb(rng, coarse_center(labels_.at(index)), params_.sigma, out);
}

ImageFeatures SyntheticCorpus::features(std::size_t index) const {
    std::vector<float> regions(RegionId::kCount * kRegionDim);
    std::vector<float> coarse(kCoarseDim);
    region_vectors(index, regions);
    coarse_vector(index, coarse);
    ImageFeatures out;
    out.id = id_of(index);
    for (std::size_t r = 0; r < RegionId::kCount; ++r) {
        out.regions[r] = FeatureVector(std::vector<float>(regions.begin() + r * kRegionDim,
                                                          regions.begin() + (r + 1) * kRegionDim));
    }
    out.coarse = FeatureVector(std::move(coarse));
    return out;
}

std::vector<std::uint8_t> SyntheticCorpus::placeholder_blob(std::size_t cluster) {
    const std::uint64_t h = splitmix64(cluster);
    const std::uint8_t rgb[3] = {static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
                                 static_cast<std::uint8_t>(h >> 16)};
    const std::string header = "P6\n8 8\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (int i = 0; i < 64; ++i) out.insert(out.end(), rgb, rgb + 3);
    return out;
}

void SyntheticCorpus::write(const fs::path& dir) const {
    fs::create_directories(dir / "blobs");
    fs::create_directories(dir / "layers");
    fs::create_directories(dir / "series");
    write_metadata(corpus(), dir / "meta.jsonl");
    {
        FeatureWriter writer(dir / "features.umfv");
        std::vector<float> regions(RegionId::kCount * kRegionDim), coarse(kCoarseDim);
        for (std::size_t i = 0; i < size(); ++i) {
            region_vectors(i, regions);
            coarse_vector(i, coarse);
            writer.append(id_of(i), regions, coarse);
        }
        writer.close();
    }
    {
        std::ofstream labels(dir / "labels.csv", std::ios::trunc);
        labels << "image_id,cluster\n";
        for (std::size_t i = 0; i < size(); ++i) labels << id_of(i) << ',' << labels_[i] << '\n';
    }
    for (std::size_t i = 0; i < size(); ++i) {
        const auto blob = placeholder_blob(labels_[i]);
        std::ofstream out(dir / records_[i].blob_ref, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    }
    write_geojson_layer(layer_, dir / "layers" / "tracts.geojson");
    write_time_series(precipitation_, dir / "series" / "precipitation.csv");
}

}  // namespace urbanmosaic
