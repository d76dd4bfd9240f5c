#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urbanmosaic/lsh.hpp"
#include "urbanmosaic/store.hpp"

namespace urbanmosaic {

inline constexpr double kDefaultClusterTheta = 0.5;

struct Cluster {
    ImageId leader = 0;
    /// Ascending id order until sort_within reorders them.
    std::vector<ImageId> members;

    std::size_t size() const noexcept { return members.size(); }
    /// The leader doubles as the representative thumbnail.
    ImageId representative() const noexcept { return leader; }

    bool operator==(const Cluster&) const = default;
};

/// Greedy leader clustering on coarse signatures. Hits are visited in
/// ascending id order; each joins the first cluster whose leader lies within
/// theta (estimated coarse angle), else it leads a new cluster. Output is
/// ordered by size descending, then leader id. Throws ValidationError unless
/// theta is in (0, pi), and NotFoundError for hits missing from the index.
std::vector<Cluster> cluster_results(std::span<const Hit> hits, const SignatureIndex& index, double theta);

/// Resolves a numeric attribute for an image; nullopt when unavailable.
using AttributeLookup = std::function<std::optional<double>(ImageId)>;

enum class ClusterKey { Size, Attribute };
enum class MemberKey { Timestamp, VehicleId, Attribute };

ClusterKey parse_cluster_key(const std::string& key);
MemberKey parse_member_key(const std::string& key);

/// Stable sort. Size sorts descending; attribute sorts by the mean member
/// value. `descending` applies to the attribute key. Ties fall back to
/// leader id ascending. Throws ValidationError if an attribute is missing.
void sort_clusters(std::vector<Cluster>& clusters, ClusterKey key, const AttributeLookup& attribute = {},
                   bool descending = false);

/// Stable sort of members; ties by image id ascending.
void sort_within(Cluster& cluster, MemberKey key, const Corpus& corpus, const AttributeLookup& attribute = {},
                 bool descending = false);

}  // namespace urbanmosaic
