#ifndef LEOTRACE_TOPOLOGY_HPP
#define LEOTRACE_TOPOLOGY_HPP

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "leotrace/geom.hpp"

namespace leotrace::topo {

enum class NodeKind : uint8_t { satellite = 0, ground_station = 1 };

struct NodeId {
    NodeKind kind = NodeKind::satellite;
    int32_t index = 0;

    friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

inline NodeId sat_node(int32_t index) { return {NodeKind::satellite, index}; }
inline NodeId gs_node(int32_t index) { return {NodeKind::ground_station, index}; }

enum class LinkKind : uint8_t { isl = 0, gsl = 1 };

struct LinkId {
    NodeId from;
    NodeId to;
    LinkKind kind = LinkKind::isl;

    friend auto operator<=>(const LinkId&, const LinkId&) = default;
};

// Dense next-hop tables for one routing epoch. Nodes are addressed by a
// flat index: satellites first (orbit-major), then ground stations.
struct ForwardingState {
    double epoch_s = 0.0;
    int num_satellites = 0;
    int num_stations = 0;
    std::vector<int32_t> next_flat; // n*n entries, -1 = unreachable

    int num_nodes() const { return num_satellites + num_stations; }

    int flat_index(NodeId n) const {
        return n.kind == NodeKind::satellite ? n.index : num_satellites + n.index;
    }
    NodeId node_at(int flat) const {
        return flat < num_satellites ? sat_node(flat) : gs_node(flat - num_satellites);
    }

    // Next-hop node on the path node -> dest, or nullopt when unreachable.
    std::optional<NodeId> next_hop(NodeId node, NodeId dest) const {
        const int32_t nh = next_flat[static_cast<size_t>(flat_index(node)) * num_nodes() +
                                     flat_index(dest)];
        if (nh < 0)
            return std::nullopt;
        return node_at(nh);
    }
};

struct PathRecord {
    std::vector<NodeId> nodes;
    std::vector<LinkId> links;
    uint64_t route_id = 0;
};

enum class HandoverKind { none, gsl_src, gsl_dst, both };

// +grid: each satellite links to its in-plane successor and to the same
// slot on the next plane. Requires at least 3 orbits and 3 slots so the
// four neighbours are distinct. Returned edges are undirected (from < to).
std::vector<LinkId> build_isl_grid(const geom::ConstellationSpec& spec);

// One GSL per (station, satellite) pair at or above the elevation mask.
std::vector<LinkId> visible_gsls(const geom::ConstellationSpec& spec,
                                 const std::vector<geom::GroundStation>& stations, double t_s);

// All-pairs shortest paths over the ISL grid plus visible GSLs, weighted
// by Euclidean distance at time t. Ties keep the lower intermediate node.
ForwardingState compute_forwarding_state(const geom::ConstellationSpec& spec,
                                         const std::vector<geom::GroundStation>& stations,
                                         double t_s);

std::vector<ForwardingState> forwarding_timeline(const geom::ConstellationSpec& spec,
                                                 const std::vector<geom::GroundStation>& stations,
                                                 double interval_s, double duration_s);

// Walks next-hop tables from src to dst. nullopt when unreachable; throws
// ValidationError when the tables loop.
std::optional<PathRecord> path_between(const ForwardingState& fs, NodeId src, NodeId dst);

// FNV-1a 64-bit over the little-endian (kind, index) encoding of the node
// sequence. Stable across platforms.
uint64_t route_id(std::span<const NodeId> nodes);

// Incremental form of route_id: fold one node into a running hash.
inline constexpr uint64_t kRouteHashInit = 14695981039346656037ull;
uint64_t route_hash_step(uint64_t hash, NodeId node);

HandoverKind detect_handover(const PathRecord& prev, const PathRecord& next);

// Generic Floyd-Warshall used by compute_forwarding_state and by tests:
// `weights` is n*n row-major, <=0 or +inf meaning no edge (diagonal 0).
// Returns distances and next-hop matrices.
struct ApspResult {
    std::vector<double> dist;     // n*n, +inf when unreachable
    std::vector<int32_t> next;    // n*n, -1 when unreachable
};
ApspResult floyd_warshall(int n, const std::vector<double>& weights);

// Diff encoding of a forwarding timeline:
// epoch_ms,node,destination,next_hop_node per changed entry. An empty
// next_hop_node column marks a removed entry.
void write_forwarding_diff_csv(std::ostream& out, std::span<const ForwardingState> timeline);

} // namespace leotrace::topo

#endif
