#pragma once

// Shared fixtures and independent reference implementations for the tests.
// Oracles here deliberately avoid the library's fast paths: per-bit loops,
// double-precision dot products, winding numbers and linear scans.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "urbanmosaic/core.hpp"
#include "urbanmosaic/lsh.hpp"
#include "urbanmosaic/store.hpp"
#include "urbanmosaic/synthetic.hpp"

namespace umtest {

using namespace urbanmosaic;
namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        const auto base = fs::temp_directory_path();
        for (;;) {
            path_ = base / ("urbanmosaic-test-" + std::to_string(rd()) + std::to_string(rd()));
            if (fs::create_directory(path_)) break;
        }
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const noexcept { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::vector<float> random_gaussian(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> v(dim);
    for (auto& x : v) x = n(rng);
    return v;
}

inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
    auto v = random_gaussian(rng, dim);
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x = static_cast<float>(x / norm);
    return v;
}

/// Bits by double-precision dot product; `margin` receives min |r.v|.
inline std::vector<bool> reference_bits(const HashFamily& f, std::span<const float> v, double* margin = nullptr) {
    std::vector<bool> bits(f.bits());
    double m = INFINITY;
    for (std::size_t i = 0; i < f.bits(); ++i) {
        const auto row = f.row(i);
        double dot = 0.0;
        for (std::size_t k = 0; k < f.dim(); ++k) dot += static_cast<double>(row[k]) * v[k];
        bits[i] = dot >= 0.0;
        m = std::min(m, std::abs(dot));
    }
    if (margin) *margin = m;
    return bits;
}

inline std::uint32_t bitwise_hamming(const Signature& a, const Signature& b) {
    std::uint32_t d = 0;
    for (std::size_t i = 0; i < a.bits(); ++i) d += a.bit(i) != b.bit(i);
    return d;
}

inline std::uint32_t bitwise_hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    std::uint32_t d = 0;
    for (std::size_t i = 0; i < a.size() * 64; ++i) {
        d += ((a[i / 64] >> (i % 64)) & 1u) != ((b[i / 64] >> (i % 64)) & 1u);
    }
    return d;
}

/// Hash families shared across tests; generation dominates small fixtures.
inline const HashFamily& region_family(std::size_t bits = kDefaultBits) {
    static std::map<std::size_t, HashFamily> cache;
    auto it = cache.find(bits);
    if (it == cache.end()) it = cache.emplace(bits, HashFamily::generate(kRegionDim, bits, 11)).first;
    return it->second;
}

inline const HashFamily& coarse_family(std::size_t bits = kDefaultBits) {
    static std::map<std::size_t, HashFamily> cache;
    auto it = cache.find(bits);
    if (it == cache.end()) it = cache.emplace(bits, HashFamily::generate(kCoarseDim, bits, 12)).first;
    return it->second;
}

/// Index over uniformly random signatures for images 1..n (optionally
/// shuffled ids). Signatures in a real index are not uniform, but ranking
/// and filtering logic is indifferent to that.
inline SignatureIndex random_index(std::size_t images, std::uint64_t seed, std::size_t bits = kDefaultBits,
                                   std::vector<ImageId> ids = {}) {
    std::mt19937_64 rng(seed);
    if (ids.empty()) {
        for (std::size_t i = 0; i < images; ++i) ids.push_back(i + 1);
    }
    const std::size_t words = bits / 64;
    SignatureSet regions{bits, 0, {}, {}}, coarse{bits, 0, {}, {}};
    regions.words.resize(images * RegionId::kCount * words);
    coarse.words.resize(images * words);
    for (auto& w : regions.words) w = rng();
    for (auto& w : coarse.words) w = rng();
    for (std::size_t p = 0; p < images; ++p) {
        for (std::uint8_t r = 0; r < RegionId::kCount; ++r) regions.sources.push_back({ids[p], r});
        coarse.sources.push_back({ids[p], RegionId::kCoarseCode});
    }
    return SignatureIndex(region_family(bits), coarse_family(bits), std::move(regions), std::move(coarse));
}

/// Signature at a chosen Hamming distance from `base`, flipping random bits.
inline Signature flip_bits(const Signature& base, std::uint32_t distance, std::mt19937_64& rng,
                           std::uint64_t family = 0) {
    std::vector<std::uint64_t> words(base.words().begin(), base.words().end());
    std::vector<std::size_t> positions(base.bits());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    std::shuffle(positions.begin(), positions.end(), rng);
    for (std::uint32_t i = 0; i < distance; ++i) words[positions[i] / 64] ^= std::uint64_t{1} << (positions[i] % 64);
    return Signature(base.bits(), std::move(words), family);
}

/// Brute-force search: per-bit Hamming over every (query, region) pair,
/// minimum per image, threshold, then sort by (distance, id).
struct OracleHit {
    ImageId image;
    std::uint32_t hamming;
    bool operator==(const OracleHit&) const = default;
};

inline std::vector<OracleHit> oracle_search(const SignatureIndex& index, const std::vector<Signature>& query,
                                            double tau, const std::set<ImageId>* filter = nullptr) {
    const std::size_t bits = index.regions().bits;
    // Largest h with pi*h/bits <= tau, found by linear scan.
    std::uint32_t limit = 0;
    bool any = false;
    for (std::uint32_t h = 0; h <= bits; ++h) {
        if (std::numbers::pi * h / static_cast<double>(bits) <= tau) {
            limit = h;
            any = true;
        }
    }
    std::vector<OracleHit> out;
    if (!any) return out;
    for (ImageId id : index.image_ids()) {
        if (filter && !filter->count(id)) continue;
        std::uint32_t best = UINT32_MAX;
        for (const auto& region : all_regions()) {
            const auto sig = index.region_signature(id, region);
            for (const auto& q : query) best = std::min(best, bitwise_hamming(sig, q));
        }
        if (best <= limit) out.push_back({id, best});
    }
    std::sort(out.begin(), out.end(), [](const OracleHit& a, const OracleHit& b) {
        return a.hamming != b.hamming ? a.hamming < b.hamming : a.image < b.image;
    });
    return out;
}

inline std::vector<OracleHit> as_oracle(const std::vector<Hit>& hits) {
    std::vector<OracleHit> out;
    for (const auto& h : hits) out.push_back({h.image, h.hamming});
    return out;
}

/// Winding-number point-in-polygon, independent of the library's
/// crossing-number test. Agrees with it away from boundaries.
inline bool winding_inside(const GeoPoint& p, const Ring& ring) {
    int wn = 0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const auto& a = ring[i];
        const auto& b = ring[i + 1];
        const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat);
        if (a.lat <= p.lat) {
            if (b.lat > p.lat && cross > 0) ++wn;
        } else {
            if (b.lat <= p.lat && cross < 0) --wn;
        }
    }
    return wn != 0;
}

inline bool winding_inside(const GeoPoint& p, const Polygon& poly) {
    if (!winding_inside(p, poly.exterior())) return false;
    for (const auto& h : poly.holes()) {
        if (winding_inside(p, h)) return false;
    }
    return true;
}

/// Distance from p to the nearest polygon edge, in degrees.
inline double boundary_distance(const GeoPoint& p, const Polygon& poly) {
    double best = INFINITY;
    auto scan = [&](const Ring& ring) {
        for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
            const double ax = ring[i].lon, ay = ring[i].lat, bx = ring[i + 1].lon, by = ring[i + 1].lat;
            const double dx = bx - ax, dy = by - ay;
            const double len2 = dx * dx + dy * dy;
            double t = len2 > 0 ? ((p.lon - ax) * dx + (p.lat - ay) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            best = std::min(best, std::hypot(p.lon - (ax + t * dx), p.lat - (ay + t * dy)));
        }
    };
    scan(poly.exterior());
    for (const auto& h : poly.holes()) scan(h);
    return best;
}

/// Star-shaped random polygon around a center, optionally with a square hole.
inline Polygon random_polygon(std::mt19937_64& rng, GeoPoint center, double radius, bool hole = false) {
    std::uniform_int_distribution<int> nv(3, 12);
    std::uniform_real_distribution<double> u(0.3, 1.0);
    const int n = nv(rng);
    Ring ring;
    for (int i = 0; i < n; ++i) {
        const double a = 2 * std::numbers::pi * i / n;
        const double r = radius * u(rng);
        ring.push_back({center.lat + r * std::sin(a), center.lon + r * std::cos(a)});
    }
    std::vector<Ring> holes;
    if (hole) {
        const double h = radius * 0.1;
        holes.push_back({{center.lat - h, center.lon - h},
                         {center.lat - h, center.lon + h},
                         {center.lat + h, center.lon + h},
                         {center.lat + h, center.lon - h}});
    }
    return Polygon(std::move(ring), std::move(holes));
}

/// Small synthetic corpus written to disk plus its built index.
struct CorpusFixture {
    SyntheticCorpus synthetic;
    TempDir dir;
    SignatureIndex index;

    explicit CorpusFixture(const SyntheticParams& params, std::size_t bits = kDefaultBits)
        : synthetic(params) {
        synthetic.write(dir.path());
        FeatureReader reader(dir / "features.umfv");
        index = build_index(reader, region_family(bits), coarse_family(bits));
        index.save(dir / "index");
    }

    fs::path store() const { return dir.path(); }
    fs::path index_dir() const { return dir / "index"; }
};

inline SyntheticParams small_params(std::size_t images = 120, std::size_t clusters = 4, std::uint64_t seed = 7) {
    SyntheticParams p;
    p.images = images;
    p.clusters = clusters;
    p.seed = seed;
    return p;
}

}  // namespace umtest
