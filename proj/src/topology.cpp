#include "leotrace/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace leotrace::topo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string node_text(NodeId n) {
    return (n.kind == NodeKind::satellite ? "S" : "G") + std::to_string(n.index);
}

} // namespace

std::vector<LinkId> build_isl_grid(const geom::ConstellationSpec& spec) {
    if (spec.num_orbits < 3 || spec.sats_per_orbit < 3)
        throw ConfigError("isl grid needs at least 3 orbits and 3 satellites per orbit");

    const int orbits = spec.num_orbits;
    const int per_orbit = spec.sats_per_orbit;
    std::vector<LinkId> links;
    links.reserve(static_cast<size_t>(orbits) * per_orbit * 2);

    auto sat_index = [per_orbit](int orbit, int slot) { return orbit * per_orbit + slot; };

    for (int o = 0; o < orbits; ++o) {
        for (int s = 0; s < per_orbit; ++s) {
            const int self = sat_index(o, s);
            const int along = sat_index(o, (s + 1) % per_orbit);
            const int across = sat_index((o + 1) % orbits, s);
            links.push_back({sat_node(std::min(self, along)), sat_node(std::max(self, along)),
                             LinkKind::isl});
            links.push_back({sat_node(std::min(self, across)), sat_node(std::max(self, across)),
                             LinkKind::isl});
        }
    }
    return links;
}

std::vector<LinkId> visible_gsls(const geom::ConstellationSpec& spec,
                                 const std::vector<geom::GroundStation>& stations, double t_s) {
    std::vector<LinkId> links;
    const int sats = spec.num_satellites();
    std::vector<geom::Position3> sat_pos(sats);
    for (int o = 0; o < spec.num_orbits; ++o)
        for (int s = 0; s < spec.sats_per_orbit; ++s)
            sat_pos[o * spec.sats_per_orbit + s] = geom::satellite_position(spec, o, s, t_s);

    for (size_t g = 0; g < stations.size(); ++g) {
        const geom::Position3 gp = geom::ground_station_position(stations[g], t_s);
        for (int si = 0; si < sats; ++si) {
            if (geom::elevation_deg(gp, sat_pos[si]) >= spec.min_elevation_deg)
                links.push_back({gs_node(static_cast<int32_t>(g)), sat_node(si), LinkKind::gsl});
        }
    }
    return links;
}

ApspResult floyd_warshall(int n, const std::vector<double>& weights) {
    ApspResult r;
    r.dist.assign(static_cast<size_t>(n) * n, kInf);
    r.next.assign(static_cast<size_t>(n) * n, -1);

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double w = weights[static_cast<size_t>(i) * n + j];
            if (i != j && std::isfinite(w)) {
                r.dist[static_cast<size_t>(i) * n + j] = w;
                r.next[static_cast<size_t>(i) * n + j] = j;
            }
        }
        r.dist[static_cast<size_t>(i) * n + i] = 0.0;
    }

    // Intermediates in ascending flat order; relaxing only on strict
    // improvement keeps the lowest intermediate on ties.
    for (int k = 0; k < n; ++k) {
        const double* dk = &r.dist[static_cast<size_t>(k) * n];
        for (int i = 0; i < n; ++i) {
            double* di = &r.dist[static_cast<size_t>(i) * n];
            const double dik = di[k];
            if (!std::isfinite(dik))
                continue;
            int32_t* ni = &r.next[static_cast<size_t>(i) * n];
            const int32_t nik = ni[k];
            for (int j = 0; j < n; ++j) {
                const double cand = dik + dk[j];
                if (cand < di[j]) {
                    di[j] = cand;
                    ni[j] = nik;
                }
            }
        }
    }
    return r;
}

ForwardingState compute_forwarding_state(const geom::ConstellationSpec& spec,
                                         const std::vector<geom::GroundStation>& stations,
                                         double t_s) {
    const int sats = spec.num_satellites();
    const int n = sats + static_cast<int>(stations.size());

    std::vector<geom::Position3> pos(n);
    for (int o = 0; o < spec.num_orbits; ++o)
        for (int s = 0; s < spec.sats_per_orbit; ++s)
            pos[o * spec.sats_per_orbit + s] = geom::satellite_position(spec, o, s, t_s);
    for (size_t g = 0; g < stations.size(); ++g)
        pos[sats + g] = geom::ground_station_position(stations[g], t_s);

    std::vector<double> w(static_cast<size_t>(n) * n, kInf);
    auto add_edge = [&](int a, int b) {
        const double d = (pos[a] - pos[b]).norm();
        w[static_cast<size_t>(a) * n + b] = d;
        w[static_cast<size_t>(b) * n + a] = d;
    };

    for (const LinkId& l : build_isl_grid(spec))
        add_edge(l.from.index, l.to.index);
    for (const LinkId& l : visible_gsls(spec, stations, t_s))
        add_edge(sats + l.from.index, l.to.index);

    ApspResult apsp = floyd_warshall(n, w);

    ForwardingState fs;
    fs.epoch_s = t_s;
    fs.num_satellites = sats;
    fs.num_stations = static_cast<int>(stations.size());
    fs.next_flat = std::move(apsp.next);
    return fs;
}

std::vector<ForwardingState> forwarding_timeline(const geom::ConstellationSpec& spec,
                                                 const std::vector<geom::GroundStation>& stations,
                                                 double interval_s, double duration_s) {
    if (interval_s <= 0.0)
        throw ConfigError("forwarding timeline: interval must be positive");
    std::vector<ForwardingState> timeline;
    for (int k = 0;; ++k) {
        const double t = k * interval_s;
        if (t >= duration_s && k > 0)
            break;
        if (t >= duration_s && k == 0) {
            timeline.push_back(compute_forwarding_state(spec, stations, 0.0));
            break;
        }
        timeline.push_back(compute_forwarding_state(spec, stations, t));
    }
    return timeline;
}

uint64_t route_hash_step(uint64_t hash, NodeId node) {
    constexpr uint64_t kPrime = 1099511628211ull;
    hash ^= static_cast<uint64_t>(node.kind);
    hash *= kPrime;
    const auto idx = static_cast<uint32_t>(node.index);
    for (int shift = 0; shift < 32; shift += 8) {
        hash ^= (idx >> shift) & 0xffu;
        hash *= kPrime;
    }
    return hash;
}

uint64_t route_id(std::span<const NodeId> nodes) {
    if (nodes.empty())
        throw UsageError("route_id: empty node sequence");
    uint64_t h = kRouteHashInit;
    for (const NodeId& n : nodes)
        h = route_hash_step(h, n);
    return h;
}

std::optional<PathRecord> path_between(const ForwardingState& fs, NodeId src, NodeId dst) {
    PathRecord rec;
    rec.nodes.push_back(src);
    if (src == dst) {
        rec.route_id = route_id(rec.nodes);
        return rec;
    }
    NodeId cur = src;
    const int max_hops = fs.num_nodes();
    for (int hop = 0; hop < max_hops; ++hop) {
        const auto nh = fs.next_hop(cur, dst);
        if (!nh)
            return std::nullopt;
        const LinkKind kind = (cur.kind == NodeKind::satellite && nh->kind == NodeKind::satellite)
                                  ? LinkKind::isl
                                  : LinkKind::gsl;
        rec.links.push_back({cur, *nh, kind});
        rec.nodes.push_back(*nh);
        cur = *nh;
        if (cur == dst) {
            rec.route_id = route_id(rec.nodes);
            return rec;
        }
    }
    throw ValidationError("path_between: forwarding tables loop");
}

namespace {

std::optional<NodeId> first_satellite(const PathRecord& p) {
    if (p.nodes.size() >= 2 && p.nodes[1].kind == NodeKind::satellite)
        return p.nodes[1];
    return std::nullopt;
}

std::optional<NodeId> last_satellite(const PathRecord& p) {
    if (p.nodes.size() >= 2) {
        const NodeId n = p.nodes[p.nodes.size() - 2];
        if (n.kind == NodeKind::satellite)
            return n;
    }
    return std::nullopt;
}

} // namespace

HandoverKind detect_handover(const PathRecord& prev, const PathRecord& next) {
    if (prev.nodes.empty() || next.nodes.empty())
        throw UsageError("detect_handover: empty path");
    if (prev.nodes.front() != next.nodes.front() || prev.nodes.back() != next.nodes.back())
        throw UsageError("detect_handover: endpoint stations differ");

    const bool src_changed = first_satellite(prev) != first_satellite(next);
    const bool dst_changed = last_satellite(prev) != last_satellite(next);
    if (src_changed && dst_changed)
        return HandoverKind::both;
    if (src_changed)
        return HandoverKind::gsl_src;
    if (dst_changed)
        return HandoverKind::gsl_dst;
    return HandoverKind::none;
}

void write_forwarding_diff_csv(std::ostream& out, std::span<const ForwardingState> timeline) {
    out << "epoch_ms,node,destination,next_hop_node\n";
    if (timeline.empty())
        return;
    const int n = timeline.front().num_nodes();
    std::vector<int32_t> prev(static_cast<size_t>(n) * n, -1);
    for (const ForwardingState& fs : timeline) {
        const long long epoch_ms = std::llround(fs.epoch_s * 1000.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const int32_t cur = fs.next_flat[static_cast<size_t>(i) * n + j];
                const int32_t old = prev[static_cast<size_t>(i) * n + j];
                if (cur == old)
                    continue;
                out << epoch_ms << ',' << node_text(fs.node_at(i)) << ','
                    << node_text(fs.node_at(j)) << ',';
                if (cur >= 0)
                    out << node_text(fs.node_at(cur));
                out << '\n';
            }
        }
        prev = fs.next_flat;
    }
}

} // namespace leotrace::topo
