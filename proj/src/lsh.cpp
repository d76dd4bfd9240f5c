#include "urbanmosaic/lsh.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "urbanmosaic/json_io.hpp"
#include "urbanmosaic/parallel.hpp"

namespace urbanmosaic {

namespace fs = std::filesystem;

namespace {

template <typename T>
void put(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void get(std::istream& in, T& value, const char* what) {
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
        throw FormatError(std::string(what) + " truncated");
    }
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Projection kernel. Every (row, vector) dot product is accumulated in the
// same 16-lane order and reduced the same way whatever the tile shape, so a
// vector hashes to identical bits alone or inside any batch. This file is
// compiled with floating-point contraction disabled for the same reason.

constexpr std::size_t kLanes = 16;

inline float reduce_lanes(const float* acc) {
    float a[8], b[4];
    for (int i = 0; i < 8; ++i) a[i] = acc[i] + acc[i + 8];
    for (int i = 0; i < 4; ++i) b[i] = a[i] + a[i + 4];
    return (b[0] + b[2]) + (b[1] + b[3]);
}

template <int R, int V>
void dot_tile(const float* rows, const float* vecs, std::size_t dim, float (&out)[R][V]) {
    float acc[R][V][kLanes] = {};
    std::size_t k = 0;
    for (; k + kLanes <= dim; k += kLanes) {
        for (int r = 0; r < R; ++r) {
            const float* rp = rows + r * dim + k;
            for (int v = 0; v < V; ++v) {
                const float* vp = vecs + v * dim + k;
                for (std::size_t l = 0; l < kLanes; ++l) acc[r][v][l] += rp[l] * vp[l];
            }
        }
    }
    for (std::size_t l = 0; k + l < dim; ++l) {
        for (int r = 0; r < R; ++r) {
            for (int v = 0; v < V; ++v) acc[r][v][l] += rows[r * dim + k + l] * vecs[v * dim + k + l];
        }
    }
    for (int r = 0; r < R; ++r) {
        for (int v = 0; v < V; ++v) out[r][v] = reduce_lanes(acc[r][v]);
    }
}

constexpr int kTileRows = 2;
constexpr int kTileVecs = 4;
constexpr std::size_t kBlockVecs = 32;
constexpr std::size_t kBlockRows = 64;

template <int V>
void hash_rows(const HashFamily& family, const float* vecs, std::size_t row_begin, std::size_t row_end,
               std::uint64_t* out) {
    const std::size_t dim = family.dim();
    const std::size_t words = family.words();
    const float* matrix = family.matrix().data();
    for (std::size_t r = row_begin; r < row_end; r += kTileRows) {
        float dots[kTileRows][V];
        dot_tile<kTileRows, V>(matrix + r * dim, vecs, dim, dots);
        for (int rr = 0; rr < kTileRows; ++rr) {
            const std::size_t bit = r + rr;
            for (int v = 0; v < V; ++v) {
                if (dots[rr][v] >= 0.0f) out[v * words + bit / 64] |= std::uint64_t{1} << (bit % 64);
            }
        }
    }
}

void hash_range(const HashFamily& family, const float* vectors, std::size_t begin, std::size_t end,
                std::uint64_t* out) {
    const std::size_t dim = family.dim();
    const std::size_t words = family.words();
    std::fill(out + begin * words, out + end * words, std::uint64_t{0});
    for (std::size_t vb = begin; vb < end; vb += kBlockVecs) {
        const std::size_t ve = std::min(end, vb + kBlockVecs);
        for (std::size_t rb = 0; rb < family.bits(); rb += kBlockRows) {
            const std::size_t re = std::min(family.bits(), rb + kBlockRows);
            std::size_t v = vb;
            for (; v + kTileVecs <= ve; v += kTileVecs) {
                hash_rows<kTileVecs>(family, vectors + v * dim, rb, re, out + v * words);
            }
            for (; v < ve; ++v) hash_rows<1>(family, vectors + v * dim, rb, re, out + v * words);
        }
    }
}

}  // namespace

double exact_angle(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ValidationError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw ValidationError("angle undefined for a zero vector");
    const double c = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    return std::acos(c);
}

// ---------------------------------------------------------------------------

HashFamily::HashFamily(std::size_t dim, std::size_t bits, std::uint64_t seed, std::vector<float> matrix)
    : dim_(dim), bits_(bits), seed_(seed), matrix_(std::move(matrix)) {
    if (dim_ == 0) throw ValidationError("hash family dimension must be positive");
    if (bits_ == 0 || bits_ % 64 != 0) throw ValidationError("hash bits must be a positive multiple of 64");
    if (matrix_.size() != dim_ * bits_) throw ValidationError("projection matrix shape mismatch");
    for (float x : matrix_) {
        if (!std::isfinite(x)) throw ValidationError("projection matrix has a non-finite entry");
    }
    const std::uint32_t shape[2] = {static_cast<std::uint32_t>(dim_), static_cast<std::uint32_t>(bits_)};
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(h, shape, sizeof shape);
    h = fnv1a(h, &seed_, sizeof seed_);
    digest_ = fnv1a(h, matrix_.data(), matrix_.size() * sizeof(float));
}

HashFamily HashFamily::generate(std::size_t dim, std::size_t bits, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    std::vector<float> matrix(dim * bits);
    for (auto& x : matrix) x = normal(rng);
    return HashFamily(dim, bits, seed, std::move(matrix));
}

void HashFamily::save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open hash family file for writing: " + path.string());
    out.write("UMHF", 4);
    put(out, static_cast<std::uint32_t>(dim_));
    put(out, static_cast<std::uint32_t>(bits_));
    put(out, seed_);
    out.write(reinterpret_cast<const char*>(matrix_.data()),
              static_cast<std::streamsize>(matrix_.size() * sizeof(float)));
    if (!out) throw Error("failed writing hash family file");
}

HashFamily HashFamily::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open hash family file: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "UMHF", 4) != 0) throw FormatError("bad hash family magic (expected UMHF)");
    std::uint32_t dim = 0, bits = 0;
    std::uint64_t seed = 0;
    get(in, dim, "hash family header");
    get(in, bits, "hash family header");
    get(in, seed, "hash family header");
    const std::uint64_t expected = 20ULL + std::uint64_t{dim} * bits * sizeof(float);
    if (fs::file_size(path) != expected) throw FormatError("hash family file size does not match its shape");
    std::vector<float> matrix(std::size_t{dim} * bits);
    in.read(reinterpret_cast<char*>(matrix.data()), static_cast<std::streamsize>(matrix.size() * sizeof(float)));
    if (!in) throw FormatError("hash family matrix truncated");
    return HashFamily(dim, bits, seed, std::move(matrix));
}

// ---------------------------------------------------------------------------

Signature::Signature(std::size_t bits, std::vector<std::uint64_t> words, std::uint64_t family,
                     std::optional<SignatureSource> source)
    : bits_(bits), words_(std::move(words)), family_(family), source_(source) {
    if (bits_ == 0 || bits_ % 64 != 0 || words_.size() != bits_ / 64) {
        throw ValidationError("signature must hold n/64 words for n a multiple of 64");
    }
}

std::vector<std::uint8_t> Signature::bytes() const {
    std::vector<std::uint8_t> out(byte_size());
    std::memcpy(out.data(), words_.data(), out.size());
    return out;
}

void hash_batch(const HashFamily& family, std::span<const float> vectors, std::size_t count,
                std::span<std::uint64_t> out, unsigned threads) {
    if (vectors.size() != count * family.dim()) {
        throw ValidationError("vector batch does not match family dimension " + std::to_string(family.dim()));
    }
    if (out.size() != count * family.words()) throw ValidationError("output buffer has the wrong size");
    // Below a few tiles of work, threads cost more than they save.
    if (count < 64) threads = 1;
    parallel_chunks(count, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        hash_range(family, vectors.data(), begin, end, out.data());
    });
}

Signature hash_vector(const HashFamily& family, std::span<const float> v, std::optional<SignatureSource> source) {
    if (v.size() != family.dim()) {
        throw ValidationError("vector dimension " + std::to_string(v.size()) + " does not match family dimension " +
                              std::to_string(family.dim()));
    }
    std::vector<std::uint64_t> words(family.words());
    hash_batch(family, v, 1, words, 1);
    return Signature(family.bits(), std::move(words), family.digest(), source);
}

std::uint32_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) noexcept {
    std::uint32_t h = 0;
    for (std::size_t i = 0; i < a.size(); ++i) h += static_cast<std::uint32_t>(std::popcount(a[i] ^ b[i]));
    return h;
}

double angle_from_hamming(std::uint32_t hamming, std::size_t bits) noexcept {
    return std::numbers::pi * static_cast<double>(hamming) / static_cast<double>(bits);
}

std::uint32_t max_hamming_within(double tau, std::size_t bits) noexcept {
    // angle_from_hamming is monotone; walk from the analytic estimate.
    auto h = static_cast<std::int64_t>(std::floor(tau * static_cast<double>(bits) / std::numbers::pi));
    h = std::clamp<std::int64_t>(h, 0, static_cast<std::int64_t>(bits));
    while (h > 0 && angle_from_hamming(static_cast<std::uint32_t>(h), bits) > tau) --h;
    while (h < static_cast<std::int64_t>(bits) && angle_from_hamming(static_cast<std::uint32_t>(h + 1), bits) <= tau) ++h;
    return static_cast<std::uint32_t>(h);
}

double estimate_angle(const Signature& a, const Signature& b) {
    if (a.bits() != b.bits() || a.family() != b.family()) {
        throw ValidationError("signatures come from different hash families");
    }
    return angle_from_hamming(hamming(a.words(), b.words()), a.bits());
}

// ---------------------------------------------------------------------------

Signature SignatureSet::signature(std::size_t i) const {
    auto w = at(i);
    return Signature(bits, std::vector<std::uint64_t>(w.begin(), w.end()), family, sources[i]);
}

void SignatureSet::save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open signature file for writing: " + path.string());
    out.write("UMSG", 4);
    put(out, std::uint16_t{1});
    put(out, static_cast<std::uint32_t>(bits));
    put(out, static_cast<std::uint64_t>(size()));
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(size() * bits / 8));
    for (const auto& s : sources) {
        put(out, static_cast<std::uint64_t>(s.image));
        put(out, s.region_code);
    }
    if (!out) throw Error("failed writing signature file");
}

SignatureSet SignatureSet::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open signature file: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "UMSG", 4) != 0) throw FormatError("bad signature file magic (expected UMSG)");
    std::uint16_t version = 0;
    std::uint32_t bits = 0;
    std::uint64_t count = 0;
    get(in, version, "signature header");
    get(in, bits, "signature header");
    get(in, count, "signature header");
    if (version != 1) throw FormatError("unsupported signature file version " + std::to_string(version));
    if (bits == 0 || bits % 64 != 0) throw FormatError("signature width must be a multiple of 64");
    const std::uint64_t expected = 18 + count * (bits / 8 + 9);
    if (fs::file_size(path) != expected) throw FormatError("signature file size does not match its header");
    SignatureSet set;
    set.bits = bits;
    set.words.resize(count * (bits / 64));
    in.read(reinterpret_cast<char*>(set.words.data()), static_cast<std::streamsize>(count * bits / 8));
    set.sources.resize(count);
    for (auto& s : set.sources) {
        std::uint64_t image = 0;
        get(in, image, "signature provenance");
        get(in, s.region_code, "signature provenance");
        s.image = image;
    }
    return set;
}

// ---------------------------------------------------------------------------

SignatureIndex::SignatureIndex(HashFamily region_family, HashFamily coarse_family, SignatureSet regions,
                               SignatureSet coarse)
    : region_family_(std::move(region_family)),
      coarse_family_(std::move(coarse_family)),
      regions_(std::move(regions)),
      coarse_(std::move(coarse)) {
    regions_.family = region_family_.digest();
    coarse_.family = coarse_family_.digest();
    if (regions_.bits != region_family_.bits() || coarse_.bits != coarse_family_.bits()) {
        throw ValidationError("signature width does not match its hash family");
    }
    if (regions_.words.size() != regions_.size() * regions_.words_per_signature() ||
        coarse_.words.size() != coarse_.size() * coarse_.words_per_signature()) {
        throw ValidationError("signature array and provenance array are misaligned");
    }
    if (regions_.size() != RegionId::kCount * coarse_.size()) {
        throw ValidationError("region signature count must be 20 x image count");
    }
    image_ids_.reserve(coarse_.size());
    positions_.reserve(coarse_.size());
    for (std::size_t p = 0; p < coarse_.size(); ++p) {
        const ImageId id = coarse_.sources[p].image;
        if (coarse_.sources[p].region_code != RegionId::kCoarseCode) {
            throw ValidationError("coarse signature with a region provenance");
        }
        for (std::size_t r = 0; r < RegionId::kCount; ++r) {
            const auto& s = regions_.sources[p * RegionId::kCount + r];
            if (s.image != id || s.region_code != r) {
                throw ValidationError("region signatures must be image-major in region-code order");
            }
        }
        if (!positions_.emplace(id, p).second) throw DuplicateIdError(id);
        image_ids_.push_back(id);
    }
}

std::optional<std::size_t> SignatureIndex::position(ImageId id) const noexcept {
    auto it = positions_.find(id);
    if (it == positions_.end()) return std::nullopt;
    return it->second;
}

Signature SignatureIndex::region_signature(ImageId id, const RegionId& region) const {
    auto p = position(id);
    if (!p) throw NotFoundError("image " + std::to_string(id) + " is not indexed");
    return regions_.signature(*p * RegionId::kCount + region.code());
}

Signature SignatureIndex::coarse_signature(ImageId id) const {
    auto p = position(id);
    if (!p) throw NotFoundError("image " + std::to_string(id) + " is not indexed");
    return coarse_.signature(*p);
}

void SignatureIndex::save(const fs::path& dir) const {
    fs::create_directories(dir);
    region_family_.save(dir / "region.umhf");
    coarse_family_.save(dir / "coarse.umhf");
    regions_.save(dir / "regions.umsg");
    coarse_.save(dir / "coarse.umsg");
    const Json manifest{{"bits", regions_.bits},
                        {"images", image_count()},
                        {"region_family_digest", region_family_.digest()},
                        {"coarse_family_digest", coarse_family_.digest()}};
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw Error("failed writing index manifest");
}

SignatureIndex SignatureIndex::load(const fs::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw NotFoundError("index manifest not found in " + dir.string());
    Json manifest;
    try {
        manifest = Json::parse(mf);
    } catch (const Json::exception& e) {
        throw FormatError(std::string("index manifest: ") + e.what());
    }
    auto region_family = HashFamily::load(dir / "region.umhf");
    auto coarse_family = HashFamily::load(dir / "coarse.umhf");
    if (manifest.value("region_family_digest", std::uint64_t{0}) != region_family.digest() ||
        manifest.value("coarse_family_digest", std::uint64_t{0}) != coarse_family.digest()) {
        throw FormatError("hash family does not match the digest recorded at index creation");
    }
    return SignatureIndex(std::move(region_family), std::move(coarse_family),
                          SignatureSet::load(dir / "regions.umsg"), SignatureSet::load(dir / "coarse.umsg"));
}

SignatureIndex build_index(FeatureReader& features, const HashFamily& region_family,
                           const HashFamily& coarse_family, unsigned threads) {
    if (region_family.dim() != kRegionDim || coarse_family.dim() != kCoarseDim) {
        throw ValidationError("hash families must have dimensions 4096 (regions) and 512 (coarse)");
    }
    const std::uint64_t n = features.count();
    SignatureSet regions{region_family.bits(), region_family.digest(), {}, {}};
    SignatureSet coarse{coarse_family.bits(), coarse_family.digest(), {}, {}};
    regions.words.resize(n * RegionId::kCount * region_family.words());
    coarse.words.resize(n * coarse_family.words());
    regions.sources.reserve(n * RegionId::kCount);
    coarse.sources.reserve(n);

    // Hash in batches of images so region vectors are processed in large tiles.
    constexpr std::uint64_t kBatchImages = 64;
    std::vector<float> region_buf, coarse_buf, r, c;
    for (std::uint64_t b = 0; b < n; b += kBatchImages) {
        const std::uint64_t e = std::min(n, b + kBatchImages);
        region_buf.resize((e - b) * RegionId::kCount * kRegionDim);
        coarse_buf.resize((e - b) * kCoarseDim);
        for (std::uint64_t i = b; i < e; ++i) {
            const ImageId id = features.read_raw(i, r, c);
            for (std::size_t k = 0; k < RegionId::kCount; ++k) {
                validate_feature(std::span<const float>(r).subspan(k * kRegionDim, kRegionDim), kRegionDim);
            }
            validate_feature(c, kCoarseDim);
            std::copy(r.begin(), r.end(), region_buf.begin() + (i - b) * RegionId::kCount * kRegionDim);
            std::copy(c.begin(), c.end(), coarse_buf.begin() + (i - b) * kCoarseDim);
            for (std::uint8_t k = 0; k < RegionId::kCount; ++k) regions.sources.push_back({id, k});
            coarse.sources.push_back({id, RegionId::kCoarseCode});
        }
        const std::size_t nr = (e - b) * RegionId::kCount;
        hash_batch(region_family, region_buf, nr,
                   std::span(regions.words).subspan(b * RegionId::kCount * region_family.words(),
                                                    nr * region_family.words()),
                   threads);
        hash_batch(coarse_family, coarse_buf, e - b,
                   std::span(coarse.words).subspan(b * coarse_family.words(), (e - b) * coarse_family.words()),
                   threads);
    }
    return SignatureIndex(region_family, coarse_family, std::move(regions), std::move(coarse));
}

namespace {

HashFamily reuse_or_generate(const fs::path& path, std::size_t dim, std::size_t bits, std::uint64_t seed) {
    if (fs::exists(path)) {
        HashFamily f = HashFamily::load(path);
        if (f.dim() == dim && f.bits() == bits) return f;
    }
    return HashFamily::generate(dim, bits, seed);
}

}  // namespace

SignatureIndex build_index_dir(const fs::path& features, const fs::path& index_dir, std::size_t bits,
                               std::uint64_t seed, unsigned threads) {
    FeatureReader reader(features);
    const auto region = reuse_or_generate(index_dir / "region.umhf", kRegionDim, bits, seed);
    const auto coarse = reuse_or_generate(index_dir / "coarse.umhf", kCoarseDim, bits, coarse_family_seed(seed));
    auto index = build_index(reader, region, coarse, threads);
    index.save(index_dir);
    return index;
}

// ---------------------------------------------------------------------------

IdSet make_id_set(std::vector<ImageId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

namespace {

bool hit_order(const Hit& a, const Hit& b) {
    return a.hamming != b.hamming ? a.hamming < b.hamming : a.image < b.image;
}

void check_query(const SignatureIndex& index, std::span<const Signature> query, double tau) {
    if (query.empty()) throw ValidationError("query has no signatures");
    if (!(tau > 0.0 && tau <= std::numbers::pi)) throw ValidationError("tau must lie in (0, pi]");
    for (const auto& q : query) {
        if (q.bits() != index.regions().bits || (q.family() != 0 && q.family() != index.region_family().digest())) {
            throw ValidationError("query signature does not come from the region hash family");
        }
    }
}

}  // namespace

std::vector<Hit> search(const SignatureIndex& index, std::span<const Signature> query, const SearchOptions& options) {
    check_query(index, query, options.tau);
    const std::size_t n_images = index.image_count();
    std::vector<char> allowed;
    if (options.filter) {
        allowed.assign(n_images, 0);
        for (ImageId id : *options.filter) {
            if (auto p = index.position(id)) allowed[*p] = 1;
        }
    }
    const std::size_t bits = index.regions().bits;
    const std::size_t words = index.regions().words_per_signature();
    const std::uint32_t limit = max_hamming_within(options.tau, bits);
    const std::uint64_t* base = index.regions().words.data();

    std::vector<std::vector<Hit>> partial(std::max(1u, options.threads == 0 ? default_threads() : options.threads));
    parallel_chunks(n_images, static_cast<unsigned>(partial.size()), [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& out = partial[chunk];
        for (std::size_t p = begin; p < end; ++p) {
            if (!allowed.empty() && !allowed[p]) continue;
            std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
            std::size_t best_q = 0, best_r = 0;
            for (std::size_t r = 0; r < RegionId::kCount; ++r) {
                const std::span<const std::uint64_t> sig(base + (p * RegionId::kCount + r) * words, words);
                for (std::size_t q = 0; q < query.size(); ++q) {
                    const std::uint32_t h = hamming(sig, query[q].words());
                    // Ties keep the earliest (query, region) pair in query-major order.
                    if (h < best || (h == best && (q < best_q || (q == best_q && r < best_r)))) {
                        best = h;
                        best_q = q;
                        best_r = r;
                    }
                }
            }
            if (best <= limit) {
                Hit hit;
                hit.image = index.image_ids()[p];
                hit.hamming = best;
                hit.angle = angle_from_hamming(best, bits);
                hit.query_index = best_q;
                if (const auto& src = query[best_q].source(); src && src->region_code < RegionId::kCount) {
                    hit.query_region = RegionId::from_code(src->region_code);
                }
                hit.corpus_region = RegionId::from_code(static_cast<std::uint8_t>(best_r));
                out.push_back(hit);
            }
        }
    });
    std::vector<Hit> hits;
    for (auto& part : partial) hits.insert(hits.end(), part.begin(), part.end());
    std::sort(hits.begin(), hits.end(), hit_order);
    if (options.k && hits.size() > *options.k) hits.resize(*options.k);
    return hits;
}

std::vector<Hit> intersect_search(const SignatureIndex& index, std::span<const std::vector<Signature>> groups,
                                  const SearchOptions& options) {
    if (groups.empty()) throw ValidationError("intersection needs at least one query group");
    SearchOptions per_group = options;
    per_group.k.reset();
    std::vector<Hit> acc;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto hits = search(index, groups[g], per_group);
        std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.image < b.image; });
        if (g == 0) {
            acc = std::move(hits);
        } else {
            std::vector<Hit> merged;
            std::size_t i = 0, j = 0;
            while (i < acc.size() && j < hits.size()) {
                if (acc[i].image < hits[j].image) {
                    ++i;
                } else if (hits[j].image < acc[i].image) {
                    ++j;
                } else {
                    // Keep the worst constraint; earlier groups win ties.
                    merged.push_back(hits[j].hamming > acc[i].hamming ? hits[j] : acc[i]);
                    ++i;
                    ++j;
                }
            }
            acc = std::move(merged);
        }
        if (acc.empty()) break;
    }
    std::sort(acc.begin(), acc.end(), hit_order);
    if (options.k && acc.size() > *options.k) acc.resize(*options.k);
    return acc;
}

void CropRect::validate() const {
    const double v[4] = {x0, y0, x1, y1};
    for (double c : v) {
        if (!std::isfinite(c) || c < 0.0 || c > 1.0) throw ValidationError("crop coordinates must lie in [0, 1]");
    }
    if (!(x1 > x0 && y1 > y0)) throw ValidationError("crop must have positive area");
}

std::vector<RegionId> regions_in_crop(const CropRect& crop) {
    crop.validate();
    std::vector<RegionId> out;
    for (const auto& region : all_regions()) {
        const auto cell = region.cell();
        const double w = std::min(crop.x1, cell.x1) - std::max(crop.x0, cell.x0);
        const double h = std::min(crop.y1, cell.y1) - std::max(crop.y0, cell.y0);
        if (w > 0.0 && h > 0.0) out.push_back(region);
    }
    return out;
}

std::vector<Signature> crop_to_query(const SignatureIndex& index, ImageId image, const CropRect& crop) {
    if (!index.contains(image)) throw NotFoundError("unknown image id " + std::to_string(image));
    std::vector<Signature> out;
    for (const auto& region : regions_in_crop(crop)) out.push_back(index.region_signature(image, region));
    return out;
}

}  // namespace urbanmosaic
