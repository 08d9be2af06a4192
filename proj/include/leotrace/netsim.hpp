#ifndef LEOTRACE_NETSIM_HPP
#define LEOTRACE_NETSIM_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "leotrace/geom.hpp"
#include "leotrace/topology.hpp"

namespace leotrace::netsim {

enum class PacketClass : uint8_t { background = 0, probe = 1, transport = 2, trace_virtual = 3 };

enum class DropReason : uint8_t { none = 0, queue = 1, handover = 2, no_gsl = 3 };

const char* to_string(PacketClass cls);
const char* to_string(DropReason r);

struct SimConfig {
    geom::ConstellationSpec spec;
    std::vector<geom::GroundStation> stations;
    double fs_interval_s = 0.1;
    double duration_s = 0.0;
    double handover_loss_s = 0.0;    // 0 disables
    double reconfig_interval_s = 0.0; // 0 disables
    double reconfig_duration_s = 0.0;
    std::map<int, double> gsl_reservation_bps; // station id -> reserved bps
    uint64_t seed = 0;

    void validate() const;
};

struct Packet {
    uint64_t id = 0;
    PacketClass cls = PacketClass::background;
    topo::NodeId src;
    topo::NodeId dst;
    int size_bytes = 0;
    double created_s = 0.0;
    uint64_t tag = 0;          // application correlation value
    int32_t trace_idx = -1;    // tracer sample slot for trace_virtual packets
    uint64_t route_hash = topo::kRouteHashInit;
};

struct DeliveryRecord {
    uint64_t packet_id = 0;
    PacketClass cls = PacketClass::background;
    topo::NodeId src;
    topo::NodeId dst;
    double created_s = 0.0;
    std::optional<double> delivered_s;
    DropReason drop = DropReason::none;
    uint64_t route_id = 0;

    friend bool operator==(const DeliveryRecord&, const DeliveryRecord&) = default;
};

struct DeliveryLog {
    std::vector<DeliveryRecord> records;

    void write_csv(std::ostream& out) const;
    friend bool operator==(const DeliveryLog&, const DeliveryLog&) = default;
};

// Hooks the tracer uses to follow virtual packets through the network.
// Sample indices are the values passed to Simulator::send_trace_packet.
class VirtualPacketObserver {
  public:
    virtual ~VirtualPacketObserver() = default;
    virtual void on_enqueue(int32_t sample, int queue_avail_pkts, double now_s) = 0;
    virtual void on_dequeue(int32_t sample, double avail_bps, double now_s) = 0;
    virtual void on_delivered(int32_t sample, double now_s, uint64_t route_hash) = 0;
    virtual void on_dropped(int32_t sample, DropReason reason, double now_s) = 0;
};

// Deterministic packet-level event simulator over one constellation
// scenario. Interfaces are FIFO drop-tail; per-packet transmission times
// come from the link rate and propagation from exact positions at dequeue.
// The forwarding timeline drives topology churn: GSL interfaces exist
// while the active forwarding state references them, and handover loss
// windows open when a station's serving satellite changes between epochs.
class Simulator {
  public:
    Simulator(SimConfig cfg, std::vector<topo::ForwardingState> timeline);
    ~Simulator();

    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    double now() const { return now_; }
    double duration_s() const { return cfg_.duration_s; }
    const SimConfig& config() const { return cfg_; }

    // Schedule an application callback. Events at equal times run in
    // scheduling order, which makes reruns reproducible.
    void schedule(double t_s, std::function<void()> fn);

    // Inject a packet at its source station; it is routed immediately.
    uint64_t send_packet(topo::NodeId src, topo::NodeId dst, PacketClass cls, int size_bytes,
                         uint64_t tag = 0);

    // Zero-size virtual measurement packet; reported through the observer.
    void send_trace_packet(topo::NodeId src, topo::NodeId dst, int32_t sample);

    void set_observer(VirtualPacketObserver* obs) { observer_ = obs; }

    // Invoked on delivery of probe and transport packets.
    using DeliveryHandler = std::function<void(const Packet&, double now_s)>;
    void set_delivery_handler(DeliveryHandler h) { on_delivery_ = std::move(h); }

    // Runs the event loop until no events remain. Sources stop producing
    // at duration_s, so the queue drains shortly after.
    void run();

    const DeliveryLog& delivery_log() const { return log_; }

    // Probe-class view of the spare capacity on a link right now; links
    // without a live interface report the full configured rate.
    double available_bandwidth_bps(const topo::LinkId& link, PacketClass cls);

    const topo::ForwardingState& active_state() const { return *active_; }

  private:
    struct Interface;
    struct Event;

    void schedule_internal(double t_s, std::function<void()> fn);
    void arrive(Packet p, int node_flat);
    void iface_kick(size_t fi);
    void complete_transmission(size_t fi, Packet p);
    void depart(size_t fi, Packet p);
    void deliver(Packet& p);
    void drop(Packet& p, DropReason reason);
    void apply_epoch(size_t k);
    void resume_gsls();
    geom::Position3 node_position(int flat, double t_s) const;
    double iface_available_bps(Interface& f, PacketClass cls);
    bool background_may_start(Interface& f, int size_bytes, double* wake_s);
    void prune_tx_log(Interface& f);
    size_t ensure_gsl_interface(int from_flat, int to_flat);
    double reservation_for_iface(int from_flat, int to_flat) const;
    int flat_of(topo::NodeId n) const;

    SimConfig cfg_;
    std::vector<topo::ForwardingState> timeline_;
    const topo::ForwardingState* active_ = nullptr;
    size_t active_idx_ = 0;

    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
    uint64_t next_event_seq_ = 0;
    double now_ = 0.0;

    std::vector<Interface> ifaces_;
    std::map<std::pair<int, int>, size_t> iface_index_; // (from_flat, to_flat)

    bool reconfig_paused_ = false;

    uint64_t next_packet_id_ = 0;
    DeliveryLog log_;
    VirtualPacketObserver* observer_ = nullptr;
    DeliveryHandler on_delivery_;
};

// Single-link fixture used by tests and by the replay-equivalence oracle:
// one FIFO drop-tail interface with a constant rate, propagation delay,
// and queue capacity, fed with a fixed offered sequence in virtual time.
struct OfferedPacket {
    double arrival_s = 0.0;
    int size_bytes = 0;
};

struct SingleLinkVerdict {
    bool delivered = false;
    double release_s = 0.0; // valid when delivered
};

std::vector<SingleLinkVerdict> run_single_link(double rate_bps, double prop_delay_s,
                                               int queue_capacity_pkts,
                                               std::span<const OfferedPacket> offers);

} // namespace leotrace::netsim

#endif
