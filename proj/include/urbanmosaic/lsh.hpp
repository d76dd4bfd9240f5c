#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "urbanmosaic/core.hpp"
#include "urbanmosaic/store.hpp"

namespace urbanmosaic {

inline constexpr std::size_t kDefaultBits = 1024;
inline constexpr double kDefaultTau = 0.35;

/// Angle between two vectors in [0, pi]; computed in double precision with
/// the cosine clamped to [-1, 1]. Throws ValidationError on dimension
/// mismatch or a zero vector.
double exact_angle(std::span<const float> a, std::span<const float> b);

/// Sign-random-projection family: `bits` Gaussian directions in R^dim.
class HashFamily {
public:
    HashFamily() = default;
    /// Takes ownership of a row-major bits x dim matrix. Throws
    /// ValidationError unless bits is a positive multiple of 64 and the
    /// matrix has exactly bits*dim finite entries.
    HashFamily(std::size_t dim, std::size_t bits, std::uint64_t seed, std::vector<float> matrix);

    /// Draws i.i.d. standard normal coordinates from a seeded mt19937_64.
    static HashFamily generate(std::size_t dim, std::size_t bits, std::uint64_t seed);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t bits() const noexcept { return bits_; }
    std::size_t words() const noexcept { return bits_ / 64; }
    std::uint64_t seed() const noexcept { return seed_; }
    /// FNV-1a over shape, seed and matrix bytes; fixed at construction.
    std::uint64_t digest() const noexcept { return digest_; }
    std::span<const float> row(std::size_t i) const noexcept {
        return {matrix_.data() + i * dim_, dim_};
    }
    std::span<const float> matrix() const noexcept { return matrix_; }

    /// "UMHF", u32 dim, u32 bits, u64 seed, bits*dim f32.
    void save(const std::filesystem::path& path) const;
    static HashFamily load(const std::filesystem::path& path);

    bool operator==(const HashFamily& o) const {
        return dim_ == o.dim_ && bits_ == o.bits_ && seed_ == o.seed_ && matrix_ == o.matrix_;
    }

private:
    std::size_t dim_ = 0;
    std::size_t bits_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t digest_ = 0;
    std::vector<float> matrix_;
};

/// Provenance of a stored signature: image plus region code (0..19) or
/// RegionId::kCoarseCode.
struct SignatureSource {
    ImageId image = 0;
    std::uint8_t region_code = 0;

    bool operator==(const SignatureSource&) const = default;
};

/// n-bit packed hash; bit i lives in word i/64 at position i%64 (LSB first),
/// which is byte i/8, bit i%8 on disk.
class Signature {
public:
    Signature() = default;
    Signature(std::size_t bits, std::vector<std::uint64_t> words, std::uint64_t family = 0,
              std::optional<SignatureSource> source = std::nullopt);

    std::size_t bits() const noexcept { return bits_; }
    std::span<const std::uint64_t> words() const noexcept { return words_; }
    std::size_t byte_size() const noexcept { return bits_ / 8; }
    std::vector<std::uint8_t> bytes() const;
    bool bit(std::size_t i) const noexcept { return (words_[i / 64] >> (i % 64)) & 1u; }
    std::uint64_t family() const noexcept { return family_; }
    const std::optional<SignatureSource>& source() const noexcept { return source_; }

    bool operator==(const Signature& o) const { return bits_ == o.bits_ && words_ == o.words_; }

private:
    std::size_t bits_ = 0;
    std::vector<std::uint64_t> words_;
    std::uint64_t family_ = 0;
    std::optional<SignatureSource> source_;
};

/// Bit i = (row_i . v >= 0). Throws ValidationError on dimension mismatch.
Signature hash_vector(const HashFamily& family, std::span<const float> v,
                      std::optional<SignatureSource> source = std::nullopt);

/// Hashes `count` contiguous vectors into `out` (count * family.words()
/// words). Each bit is computed exactly as hash_vector would.
void hash_batch(const HashFamily& family, std::span<const float> vectors, std::size_t count,
                std::span<std::uint64_t> out, unsigned threads = 0);

std::uint32_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) noexcept;

/// pi * hamming / bits.
double angle_from_hamming(std::uint32_t hamming, std::size_t bits) noexcept;

/// Largest Hamming distance whose estimated angle is <= tau.
std::uint32_t max_hamming_within(double tau, std::size_t bits) noexcept;

/// pi * hamming(s1, s2) / n. Throws ValidationError if the signatures come
/// from different families.
double estimate_angle(const Signature& a, const Signature& b);

// ---------------------------------------------------------------------------
// Index
// ---------------------------------------------------------------------------

/// A flat array of packed signatures with aligned provenance.
struct SignatureSet {
    std::size_t bits = 0;
    std::uint64_t family = 0;
    std::vector<std::uint64_t> words;
    std::vector<SignatureSource> sources;

    std::size_t words_per_signature() const noexcept { return bits / 64; }
    std::size_t size() const noexcept { return sources.size(); }
    std::span<const std::uint64_t> at(std::size_t i) const noexcept {
        return {words.data() + i * words_per_signature(), words_per_signature()};
    }
    Signature signature(std::size_t i) const;

    /// "UMSG", u16 version=1, u32 n, u64 count, count*n/8 bytes, then
    /// count * (u64 image id, u8 region code).
    void save(const std::filesystem::path& path) const;
    static SignatureSet load(const std::filesystem::path& path);

    bool operator==(const SignatureSet& o) const {
        return bits == o.bits && words == o.words && sources == o.sources;
    }
};

/// Region and coarse signatures of a corpus. Region signatures are stored
/// image-major, 20 per image in region-code order; coarse signatures one
/// per image in the same image order.
class SignatureIndex {
public:
    SignatureIndex() = default;
    /// Validates alignment of the two sets; throws ValidationError.
    SignatureIndex(HashFamily region_family, HashFamily coarse_family, SignatureSet regions,
                   SignatureSet coarse);

    const HashFamily& region_family() const noexcept { return region_family_; }
    const HashFamily& coarse_family() const noexcept { return coarse_family_; }
    const SignatureSet& regions() const noexcept { return regions_; }
    const SignatureSet& coarse() const noexcept { return coarse_; }

    std::size_t image_count() const noexcept { return image_ids_.size(); }
    const std::vector<ImageId>& image_ids() const noexcept { return image_ids_; }
    std::optional<std::size_t> position(ImageId id) const noexcept;
    bool contains(ImageId id) const noexcept { return position(id).has_value(); }

    /// Throws NotFoundError for unknown ids.
    Signature region_signature(ImageId id, const RegionId& region) const;
    Signature coarse_signature(ImageId id) const;
    std::span<const std::uint64_t> coarse_words(std::size_t position) const noexcept {
        return coarse_.at(position);
    }

    /// Writes region.umhf, coarse.umhf, regions.umsg, coarse.umsg and manifest.json.
    void save(const std::filesystem::path& dir) const;
    /// Loads and checks family digests recorded in the manifest.
    static SignatureIndex load(const std::filesystem::path& dir);

private:
    HashFamily region_family_;
    HashFamily coarse_family_;
    SignatureSet regions_;
    SignatureSet coarse_;
    std::vector<ImageId> image_ids_;
    std::unordered_map<ImageId, std::size_t> positions_;
};

/// Hashes every block of a feature file.
SignatureIndex build_index(FeatureReader& features, const HashFamily& region_family,
                           const HashFamily& coarse_family, unsigned threads = 0);

/// Seed of the coarse family paired with a region family seed.
constexpr std::uint64_t coarse_family_seed(std::uint64_t seed) noexcept { return seed ^ 0x9E3779B97F4A7C15ull; }

/// Indexes a feature file into `index_dir`. Families already saved there
/// with the same shape are reused, so rebuilding keeps signatures
/// comparable; otherwise they are generated from `seed`.
SignatureIndex build_index_dir(const std::filesystem::path& features, const std::filesystem::path& index_dir,
                               std::size_t bits, std::uint64_t seed, unsigned threads = 0);

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

struct Hit {
    ImageId image = 0;
    double angle = 0.0;
    std::uint32_t hamming = 0;
    /// Position of the best-matching query signature in its group.
    std::size_t query_index = 0;
    std::optional<RegionId> query_region;
    RegionId corpus_region;

    bool operator==(const Hit&) const = default;
};

/// Sorted, duplicate-free image ids.
using IdSet = std::vector<ImageId>;
IdSet make_id_set(std::vector<ImageId> ids);

struct SearchOptions {
    double tau = kDefaultTau;
    std::optional<std::size_t> k;
    std::optional<IdSet> filter;
    unsigned threads = 0;
};

/// Images whose minimum estimated angle over (query x own region
/// signatures) is <= tau, ranked by that angle then by id.
std::vector<Hit> search(const SignatureIndex& index, std::span<const Signature> query,
                        const SearchOptions& options);

/// Images satisfying every group; ranked by the worst group's angle, then id.
std::vector<Hit> intersect_search(const SignatureIndex& index,
                                  std::span<const std::vector<Signature>> groups,
                                  const SearchOptions& options);

/// Normalized crop rectangle; x to the right, y downward, both in [0, 1].
struct CropRect {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

    /// Throws ValidationError unless inside [0,1]^2 with positive area.
    void validate() const;
};

/// Regions whose grid cell overlaps the crop with positive area, in code order.
std::vector<RegionId> regions_in_crop(const CropRect& crop);

/// Stored region signatures of `image` selected by the crop.
std::vector<Signature> crop_to_query(const SignatureIndex& index, ImageId image, const CropRect& crop);

}  // namespace urbanmosaic
