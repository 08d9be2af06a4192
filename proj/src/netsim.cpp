#include "leotrace/netsim.hpp"

#include <algorithm>
#include <cassert>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <tuple>

namespace leotrace::netsim {

namespace {

// Utilization measurement window; equals the trace aggregation resolution.
constexpr double kWindowS = 0.01;

struct SingleLinkEvent {
    double t;
    uint64_t seq;
    int idx; // offer index
    bool completion;

    friend bool operator>(const SingleLinkEvent& a, const SingleLinkEvent& b) {
        return std::tie(a.t, a.seq) > std::tie(b.t, b.seq);
    }
};

} // namespace

const char* to_string(PacketClass cls) {
    switch (cls) {
    case PacketClass::background: return "background";
    case PacketClass::probe: return "probe";
    case PacketClass::transport: return "transport";
    case PacketClass::trace_virtual: return "trace_virtual";
    }
    return "?";
}

const char* to_string(DropReason r) {
    switch (r) {
    case DropReason::none: return "";
    case DropReason::queue: return "queue";
    case DropReason::handover: return "handover";
    case DropReason::no_gsl: return "no_gsl";
    }
    return "?";
}

void SimConfig::validate() const {
    spec.validate();
    if (duration_s <= 0.0)
        throw ConfigError("sim: duration must be positive");
    if (fs_interval_s <= 0.0)
        throw ConfigError("sim: forwarding state interval must be positive");
    if (handover_loss_s < 0.0)
        throw ConfigError("sim: handover loss window must be >= 0");
    if (reconfig_interval_s < 0.0 || reconfig_duration_s < 0.0)
        throw ConfigError("sim: reconfiguration parameters must be >= 0");
    if (reconfig_interval_s > 0.0 &&
        (reconfig_duration_s <= 0.0 || reconfig_duration_s >= reconfig_interval_s))
        throw ConfigError("sim: reconfiguration duration must be in (0, interval)");
    for (const auto& [gs_id, bps] : gsl_reservation_bps) {
        if (bps < 0.0 || bps > spec.gsl_rate_bps)
            throw ConfigError("sim: reservation for station " + std::to_string(gs_id) +
                              " outside [0, gsl rate]");
    }
}

void DeliveryLog::write_csv(std::ostream& out) const {
    out << "packet_id,class,src,dst,created_ms,delivered_ms,drop_reason,route_id\n";
    char buf[64];
    auto node_text = [](topo::NodeId n) {
        return (n.kind == topo::NodeKind::satellite ? "S" : "G") + std::to_string(n.index);
    };
    for (const DeliveryRecord& r : records) {
        out << r.packet_id << ',' << to_string(r.cls) << ',' << node_text(r.src) << ','
            << node_text(r.dst) << ',';
        std::snprintf(buf, sizeof(buf), "%.3f", r.created_s * 1000.0);
        out << buf << ',';
        if (r.delivered_s) {
            std::snprintf(buf, sizeof(buf), "%.3f", *r.delivered_s * 1000.0);
            out << buf;
        }
        out << ',' << to_string(r.drop) << ',';
        std::snprintf(buf, sizeof(buf), "%" PRIx64, r.route_id);
        out << buf << '\n';
    }
}

struct Simulator::Event {
    double t = 0.0;
    uint64_t seq = 0;
    std::function<void()> fn;

    friend bool operator>(const Event& a, const Event& b) {
        return std::tie(a.t, a.seq) > std::tie(b.t, b.seq);
    }
};

struct Simulator::Interface {
    topo::LinkId link;
    int from_flat = -1;
    int to_flat = -1;
    bool is_gsl = false;
    double rate_bps = 0.0;
    int capacity_pkts = 0;
    double reservation_bps = 0.0;

    std::deque<Packet> q;
    int waiting_real = 0;
    bool transmitting = false;
    bool alive = true;
    double gate_drop_until = -1.0;

    // Completed transmissions inside the trailing utilization window,
    // split by class group. Byte sums stay exact (integer-valued doubles).
    std::deque<std::pair<double, int>> tx_bg;
    std::deque<std::pair<double, int>> tx_other;
    double tx_bg_bytes = 0.0;
    double tx_other_bytes = 0.0;
};

Simulator::Simulator(SimConfig cfg, std::vector<topo::ForwardingState> timeline)
    : cfg_(std::move(cfg)), timeline_(std::move(timeline)) {
    cfg_.validate();
    if (timeline_.empty())
        throw ConfigError("sim: forwarding timeline is empty");
    active_ = &timeline_.front();

    // Static ISL interfaces, one per direction of each grid edge.
    for (const topo::LinkId& l : topo::build_isl_grid(cfg_.spec)) {
        for (int dir = 0; dir < 2; ++dir) {
            Interface f;
            f.link = dir == 0 ? l : topo::LinkId{l.to, l.from, l.kind};
            f.from_flat = f.link.from.index;
            f.to_flat = f.link.to.index;
            f.is_gsl = false;
            f.rate_bps = cfg_.spec.isl_rate_bps;
            f.capacity_pkts = cfg_.spec.isl_queue_pkts;
            iface_index_[{f.from_flat, f.to_flat}] = ifaces_.size();
            ifaces_.push_back(std::move(f));
        }
    }

    // Topology epochs, then reconfiguration gates; both precede any
    // application event scheduled at the same timestamp.
    for (size_t k = 0; k < timeline_.size(); ++k)
        schedule_internal(timeline_[k].epoch_s, [this, k] { apply_epoch(k); });

    if (cfg_.reconfig_interval_s > 0.0) {
        for (int k = 1;; ++k) {
            const double pause_at = k * cfg_.reconfig_interval_s;
            if (pause_at >= cfg_.duration_s)
                break;
            schedule_internal(pause_at, [this] { reconfig_paused_ = true; });
            schedule_internal(pause_at + cfg_.reconfig_duration_s, [this] { resume_gsls(); });
        }
    }
}

Simulator::~Simulator() = default;

int Simulator::flat_of(topo::NodeId n) const {
    return n.kind == topo::NodeKind::satellite ? n.index
                                               : cfg_.spec.num_satellites() + n.index;
}

geom::Position3 Simulator::node_position(int flat, double t_s) const {
    const int sats = cfg_.spec.num_satellites();
    if (flat < sats)
        return geom::satellite_position(cfg_.spec, flat / cfg_.spec.sats_per_orbit,
                                        flat % cfg_.spec.sats_per_orbit, t_s);
    return geom::ground_station_position(cfg_.stations[flat - sats], t_s);
}

void Simulator::schedule_internal(double t_s, std::function<void()> fn) {
    events_.push(Event{t_s, next_event_seq_++, std::move(fn)});
}

void Simulator::schedule(double t_s, std::function<void()> fn) {
    if (t_s < now_)
        throw UsageError("schedule: time is in the past");
    schedule_internal(t_s, std::move(fn));
}

uint64_t Simulator::send_packet(topo::NodeId src, topo::NodeId dst, PacketClass cls,
                                int size_bytes, uint64_t tag) {
    if (cls == PacketClass::trace_virtual)
        throw UsageError("send_packet: use send_trace_packet for virtual packets");
    if (size_bytes <= 0)
        throw UsageError("send_packet: size must be positive");

    Packet p;
    p.id = next_packet_id_++;
    p.cls = cls;
    p.src = src;
    p.dst = dst;
    p.size_bytes = size_bytes;
    p.created_s = now_;
    p.tag = tag;

    DeliveryRecord rec;
    rec.packet_id = p.id;
    rec.cls = cls;
    rec.src = src;
    rec.dst = dst;
    rec.created_s = now_;
    log_.records.push_back(rec);

    const uint64_t id = p.id;
    arrive(std::move(p), flat_of(src));
    return id;
}

void Simulator::send_trace_packet(topo::NodeId src, topo::NodeId dst, int32_t sample) {
    Packet p;
    p.id = next_packet_id_++;
    p.cls = PacketClass::trace_virtual;
    p.src = src;
    p.dst = dst;
    p.size_bytes = 0;
    p.created_s = now_;
    p.trace_idx = sample;
    arrive(std::move(p), flat_of(src));
}

void Simulator::deliver(Packet& p) {
    if (p.cls == PacketClass::trace_virtual) {
        if (observer_)
            observer_->on_delivered(p.trace_idx, now_, p.route_hash);
        return;
    }
    DeliveryRecord& rec = log_.records[p.id];
    rec.delivered_s = now_;
    rec.route_id = p.route_hash;
    if (on_delivery_ && (p.cls == PacketClass::probe || p.cls == PacketClass::transport))
        on_delivery_(p, now_);
}

void Simulator::drop(Packet& p, DropReason reason) {
    if (p.cls == PacketClass::trace_virtual) {
        if (observer_)
            observer_->on_dropped(p.trace_idx, reason, now_);
        return;
    }
    DeliveryRecord& rec = log_.records[p.id];
    rec.drop = reason;
    rec.route_id = p.route_hash;
}

void Simulator::arrive(Packet p, int node_flat) {
    p.route_hash = topo::route_hash_step(p.route_hash, active_->node_at(node_flat));
    const int dst_flat = flat_of(p.dst);
    if (node_flat == dst_flat) {
        deliver(p);
        return;
    }

    const int n = active_->num_nodes();
    const int32_t nh = active_->next_flat[static_cast<size_t>(node_flat) * n + dst_flat];
    if (nh < 0) {
        drop(p, DropReason::no_gsl);
        return;
    }
    const auto it = iface_index_.find({node_flat, nh});
    if (it == iface_index_.end())
        throw ValidationError("netsim: forwarding state references an unknown link");
    const size_t fi = it->second;
    Interface& f = ifaces_[fi];

    // Handover loss window: everything offered to the link is dropped.
    if (f.gate_drop_until > now_) {
        drop(p, DropReason::handover);
        return;
    }

    if (p.cls == PacketClass::trace_virtual) {
        if (observer_)
            observer_->on_enqueue(p.trace_idx,
                                  std::max(0, f.capacity_pkts - f.waiting_real), now_);
        if (f.waiting_real >= f.capacity_pkts) {
            // Mirror rule: a real packet in this position would be dropped.
            drop(p, DropReason::queue);
            return;
        }
        f.q.push_back(std::move(p));
    } else {
        if (f.waiting_real >= f.capacity_pkts) {
            drop(p, DropReason::queue);
            return;
        }
        f.q.push_back(std::move(p));
        ++f.waiting_real;
    }
    iface_kick(fi);
}

void Simulator::iface_kick(size_t fi) {
    Interface& f = ifaces_[fi];
    while (!f.transmitting && !f.q.empty()) {
        Packet& head = f.q.front();

        // A paused GSL keeps everything buffered, virtual packets included.
        if (f.is_gsl && reconfig_paused_)
            return;

        if (head.cls == PacketClass::trace_virtual) {
            // Virtual packets have no transmission time: they leave the
            // moment they reach the head of the queue.
            Packet v = std::move(head);
            f.q.pop_front();
            if (observer_)
                observer_->on_dequeue(v.trace_idx,
                                      iface_available_bps(f, PacketClass::trace_virtual), now_);
            depart(fi, std::move(v));
            continue;
        }

        if (head.cls == PacketClass::background && f.reservation_bps > 0.0) {
            double wake = 0.0;
            if (!background_may_start(f, head.size_bytes, &wake)) {
                schedule_internal(wake, [this, fi] { iface_kick(fi); });
                return;
            }
        }

        Packet p = std::move(head);
        f.q.pop_front();
        --f.waiting_real;
        const double start = now_;
        const double finish = start + p.size_bytes * 8.0 / f.rate_bps;
        f.transmitting = true;
        schedule_internal(finish,
                          [this, fi, p = std::move(p)]() mutable { complete_transmission(fi, std::move(p)); });
        return;
    }
}

void Simulator::complete_transmission(size_t fi, Packet p) {
    Interface& f = ifaces_[fi];
    f.transmitting = false;
    prune_tx_log(f);
    if (p.cls == PacketClass::background) {
        f.tx_bg.emplace_back(now_, p.size_bytes);
        f.tx_bg_bytes += p.size_bytes;
    } else {
        f.tx_other.emplace_back(now_, p.size_bytes);
        f.tx_other_bytes += p.size_bytes;
    }
    depart(fi, std::move(p));
    iface_kick(fi);
}

void Simulator::depart(size_t fi, Packet p) {
    Interface& f = ifaces_[fi];
    const double prop = geom::propagation_delay_s(node_position(f.from_flat, now_),
                                                  node_position(f.to_flat, now_));
    const int to = f.to_flat;
    schedule_internal(now_ + prop, [this, to, p = std::move(p)]() mutable { arrive(std::move(p), to); });
}

void Simulator::prune_tx_log(Interface& f) {
    const double horizon = now_ - kWindowS;
    while (!f.tx_bg.empty() && f.tx_bg.front().first <= horizon) {
        f.tx_bg_bytes -= f.tx_bg.front().second;
        f.tx_bg.pop_front();
    }
    while (!f.tx_other.empty() && f.tx_other.front().first <= horizon) {
        f.tx_other_bytes -= f.tx_other.front().second;
        f.tx_other.pop_front();
    }
}

double Simulator::iface_available_bps(Interface& f, PacketClass cls) {
    prune_tx_log(f);
    const double other = f.tx_other_bytes * 8.0 / kWindowS;
    const double bg = f.tx_bg_bytes * 8.0 / kWindowS;
    if (cls == PacketClass::background)
        return std::max(0.0, f.rate_bps - f.reservation_bps - bg - other);
    // Reserved bandwidth is shielded from background consumption.
    const double bg_counted = std::min(bg, std::max(0.0, f.rate_bps - f.reservation_bps));
    return std::max(0.0, f.rate_bps - other - bg_counted);
}

bool Simulator::background_may_start(Interface& f, int size_bytes, double* wake_s) {
    prune_tx_log(f);
    const double budget_bytes = (f.rate_bps - f.reservation_bps) * kWindowS / 8.0;
    if (f.tx_bg_bytes + size_bytes <= budget_bytes + 1e-9)
        return true;
    const double need = f.tx_bg_bytes + size_bytes - budget_bytes;
    double freed = 0.0;
    double wake = now_ + kWindowS;
    for (const auto& [tm, bytes] : f.tx_bg) {
        freed += bytes;
        if (freed + 1e-9 >= need) {
            wake = tm + kWindowS;
            break;
        }
    }
    if (wake <= now_)
        wake = now_ + kWindowS * 1e-3;
    *wake_s = wake;
    return false;
}

double Simulator::available_bandwidth_bps(const topo::LinkId& link, PacketClass cls) {
    const auto it = iface_index_.find({flat_of(link.from), flat_of(link.to)});
    if (it == iface_index_.end())
        return link.kind == topo::LinkKind::gsl ? cfg_.spec.gsl_rate_bps
                                                : cfg_.spec.isl_rate_bps;
    return iface_available_bps(ifaces_[it->second], cls);
}

double Simulator::reservation_for_iface(int from_flat, int to_flat) const {
    const int sats = cfg_.spec.num_satellites();
    const int gs_flat = from_flat >= sats ? from_flat : to_flat;
    if (gs_flat < sats)
        return 0.0;
    const int gs_id = cfg_.stations[gs_flat - sats].id;
    const auto it = cfg_.gsl_reservation_bps.find(gs_id);
    return it == cfg_.gsl_reservation_bps.end() ? 0.0 : it->second;
}

size_t Simulator::ensure_gsl_interface(int from_flat, int to_flat) {
    const int sats = cfg_.spec.num_satellites();
    Interface f;
    const topo::NodeId from = from_flat < sats ? topo::sat_node(from_flat)
                                               : topo::gs_node(from_flat - sats);
    const topo::NodeId to = to_flat < sats ? topo::sat_node(to_flat)
                                           : topo::gs_node(to_flat - sats);
    f.link = {from, to, topo::LinkKind::gsl};
    f.from_flat = from_flat;
    f.to_flat = to_flat;
    f.is_gsl = true;
    f.rate_bps = cfg_.spec.gsl_rate_bps;
    f.capacity_pkts = cfg_.spec.gsl_queue_pkts;
    f.reservation_bps = reservation_for_iface(from_flat, to_flat);
    const size_t fi = ifaces_.size();
    iface_index_[{from_flat, to_flat}] = fi;
    ifaces_.push_back(std::move(f));
    return fi;
}

void Simulator::apply_epoch(size_t k) {
    active_idx_ = k;
    active_ = &timeline_[k];
    const int n = active_->num_nodes();
    const int sats = cfg_.spec.num_satellites();

    // Directed GSL pairs the new state actually references.
    std::set<std::pair<int, int>> wanted;
    for (int u = 0; u < n; ++u) {
        const int32_t* row = &active_->next_flat[static_cast<size_t>(u) * n];
        const bool u_sat = u < sats;
        for (int d = 0; d < n; ++d) {
            const int32_t nh = row[d];
            if (nh >= 0 && u_sat != (nh < sats))
                wanted.insert({u, nh});
        }
    }

    // Tear down links the state no longer references; queued packets on
    // them have no path anymore.
    std::vector<std::pair<int, int>> stale;
    for (const auto& [key, fi] : iface_index_) {
        if (ifaces_[fi].is_gsl && !wanted.count(key))
            stale.push_back(key);
    }
    for (const auto& key : stale) {
        const size_t fi = iface_index_[key];
        Interface& f = ifaces_[fi];
        for (Packet& p : f.q)
            drop(p, DropReason::no_gsl);
        f.q.clear();
        f.waiting_real = 0;
        f.alive = false;
        iface_index_.erase(key);
    }
    for (const auto& key : wanted) {
        if (!iface_index_.count(key))
            ensure_gsl_interface(key.first, key.second);
    }

    // Handover loss windows on newly chosen GSLs.
    if (k > 0 && cfg_.handover_loss_s > 0.0) {
        const topo::ForwardingState& prev = timeline_[k - 1];
        std::set<std::pair<int, int>> handed_over; // (gs_flat, sat_flat)
        for (int g = sats; g < n; ++g) {
            // Uplink: the first-hop satellite changed for some destination.
            const int32_t* cur_row = &active_->next_flat[static_cast<size_t>(g) * n];
            const int32_t* old_row = &prev.next_flat[static_cast<size_t>(g) * n];
            for (int d = 0; d < n; ++d) {
                const int32_t cur = cur_row[d];
                const int32_t old = old_row[d];
                if (cur >= 0 && old >= 0 && cur != old && cur < sats && old < sats)
                    handed_over.insert({g, cur});
            }
            // Downlink: a satellite newly delivers directly to this station
            // while some other satellite used to.
            bool had_direct = false;
            for (int s = 0; s < sats && !had_direct; ++s)
                had_direct = prev.next_flat[static_cast<size_t>(s) * n + g] == g;
            if (!had_direct)
                continue;
            for (int s = 0; s < sats; ++s) {
                const bool now_direct = active_->next_flat[static_cast<size_t>(s) * n + g] == g;
                const bool was_direct = prev.next_flat[static_cast<size_t>(s) * n + g] == g;
                if (now_direct && !was_direct)
                    handed_over.insert({g, s});
            }
        }
        for (const auto& [g, s] : handed_over) {
            const double until = now_ + cfg_.handover_loss_s;
            for (const auto& key : {std::pair<int, int>{g, s}, std::pair<int, int>{s, g}}) {
                const auto it = iface_index_.find(key);
                if (it != iface_index_.end())
                    ifaces_[it->second].gate_drop_until =
                        std::max(ifaces_[it->second].gate_drop_until, until);
            }
        }
    }
}

void Simulator::resume_gsls() {
    reconfig_paused_ = false;
    for (size_t fi = 0; fi < ifaces_.size(); ++fi) {
        if (ifaces_[fi].is_gsl && ifaces_[fi].alive)
            iface_kick(fi);
    }
}

void Simulator::run() {
    while (!events_.empty()) {
        Event ev = std::move(const_cast<Event&>(events_.top()));
        events_.pop();
        now_ = ev.t;
        ev.fn();
    }
}

std::vector<SingleLinkVerdict> run_single_link(double rate_bps, double prop_delay_s,
                                               int queue_capacity_pkts,
                                               std::span<const OfferedPacket> offers) {
    if (rate_bps <= 0.0 || queue_capacity_pkts < 0)
        throw ConfigError("single link: bad parameters");

    std::vector<SingleLinkVerdict> verdicts(offers.size());
    std::priority_queue<SingleLinkEvent, std::vector<SingleLinkEvent>, std::greater<>> events;
    uint64_t seq = 0;
    for (size_t i = 0; i < offers.size(); ++i) {
        if (i > 0 && offers[i].arrival_s < offers[i - 1].arrival_s)
            throw UsageError("single link: arrivals must be non-decreasing");
        events.push({offers[i].arrival_s, seq++, static_cast<int>(i), false});
    }

    std::deque<int> waiting;
    bool busy = false;

    auto start = [&](int idx, double t) {
        const double finish = t + offers[idx].size_bytes * 8.0 / rate_bps;
        busy = true;
        events.push({finish, seq++, idx, true});
    };

    while (!events.empty()) {
        const SingleLinkEvent ev = events.top();
        events.pop();
        if (ev.completion) {
            verdicts[ev.idx] = {true, ev.t + prop_delay_s};
            busy = false;
            if (!waiting.empty()) {
                const int next = waiting.front();
                waiting.pop_front();
                start(next, ev.t);
            }
        } else {
            if (!busy && waiting.empty()) {
                start(ev.idx, ev.t);
            } else if (static_cast<int>(waiting.size()) >= queue_capacity_pkts) {
                verdicts[ev.idx] = {false, 0.0};
            } else {
                waiting.push_back(ev.idx);
            }
        }
    }
    return verdicts;
}

} // namespace leotrace::netsim
