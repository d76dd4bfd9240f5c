#include "urbanmosaic/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace urbanmosaic {

std::vector<Cluster> cluster_results(std::span<const Hit> hits, const SignatureIndex& index, double theta) {
    if (!(theta > 0.0 && theta < std::numbers::pi)) throw ValidationError("cluster theta must lie in (0, pi)");
    std::vector<std::pair<ImageId, std::size_t>> order;
    order.reserve(hits.size());
    for (const auto& h : hits) {
        auto p = index.position(h.image);
        if (!p) throw NotFoundError("image " + std::to_string(h.image) + " is not indexed");
        order.emplace_back(h.image, *p);
    }
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());

    const std::uint32_t limit = max_hamming_within(theta, index.coarse().bits);
    std::vector<Cluster> clusters;
    std::vector<std::size_t> leader_pos;
    for (const auto& [id, pos] : order) {
        const auto sig = index.coarse_words(pos);
        bool placed = false;
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            if (hamming(sig, index.coarse_words(leader_pos[c])) <= limit) {
                clusters[c].members.push_back(id);
                placed = true;
                break;
            }
        }
        if (!placed) {
            clusters.push_back({id, {id}});
            leader_pos.push_back(pos);
        }
    }
    std::stable_sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
        return a.size() != b.size() ? a.size() > b.size() : a.leader < b.leader;
    });
    return clusters;
}

ClusterKey parse_cluster_key(const std::string& key) {
    if (key == "size") return ClusterKey::Size;
    return ClusterKey::Attribute;
}

MemberKey parse_member_key(const std::string& key) {
    if (key == "timestamp") return MemberKey::Timestamp;
    if (key == "vehicle_id") return MemberKey::VehicleId;
    return MemberKey::Attribute;
}

namespace {

double require(const AttributeLookup& attribute, ImageId id) {
    if (!attribute) throw ValidationError("attribute sort requested without an attribute source");
    auto v = attribute(id);
    if (!v || !std::isfinite(*v)) throw ValidationError("attribute unavailable for image " + std::to_string(id));
    return *v;
}

}  // namespace

void sort_clusters(std::vector<Cluster>& clusters, ClusterKey key, const AttributeLookup& attribute, bool descending) {
    if (key == ClusterKey::Size) {
        std::stable_sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
            return a.size() != b.size() ? a.size() > b.size() : a.leader < b.leader;
        });
        return;
    }
    std::unordered_map<ImageId, double> mean;
    for (const auto& c : clusters) {
        double sum = 0.0;
        for (ImageId m : c.members) sum += require(attribute, m);
        mean[c.leader] = c.members.empty() ? 0.0 : sum / static_cast<double>(c.members.size());
    }
    std::stable_sort(clusters.begin(), clusters.end(), [&](const Cluster& a, const Cluster& b) {
        const double ka = mean[a.leader], kb = mean[b.leader];
        if (ka != kb) return descending ? ka > kb : ka < kb;
        return a.leader < b.leader;
    });
}

void sort_within(Cluster& cluster, MemberKey key, const Corpus& corpus, const AttributeLookup& attribute,
                 bool descending) {
    std::vector<std::pair<double, ImageId>> keyed;
    keyed.reserve(cluster.members.size());
    for (ImageId m : cluster.members) {
        double k = 0.0;
        switch (key) {
            case MemberKey::Timestamp: k = static_cast<double>(corpus.at(m).timestamp); break;
            case MemberKey::VehicleId: k = corpus.at(m).vehicle_id; break;
            case MemberKey::Attribute: k = require(attribute, m); break;
        }
        keyed.emplace_back(k, m);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return descending ? a.first > b.first : a.first < b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < keyed.size(); ++i) cluster.members[i] = keyed[i].second;
}

}  // namespace urbanmosaic
