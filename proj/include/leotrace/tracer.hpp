#ifndef LEOTRACE_TRACER_HPP
#define LEOTRACE_TRACER_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leotrace/netsim.hpp"
#include "leotrace/tracefile.hpp"

namespace leotrace::tracer {

// One virtual trace packet's fate. min_avail_bps is the bottleneck
// availability over the traversed links, each sampled when the packet
// left that link's queue; the queue headroom is read at the packet's
// arrival in front of the bottleneck link.
struct TraceSample {
    double send_s = 0.0;
    bool delivered = false;
    double delay_s = 0.0;
    double min_avail_bps = 0.0;
    int bottleneck_queue_avail_pkts = 0;
    int path_bdp_pkts = 0;
    uint64_t route_id = 0;
};

// Injects a virtual packet pair (forward and return) every interval_s
// between two ground stations and records per-packet path characteristics.
// Attach before Simulator::run(); it must never perturb real traffic.
class Tracer : public netsim::VirtualPacketObserver {
  public:
    Tracer(netsim::Simulator& sim, topo::NodeId gs_a, topo::NodeId gs_b, double interval_s);

    const std::vector<TraceSample>& forward_samples() const { return forward_; }
    const std::vector<TraceSample>& return_samples() const { return return_; }
    double interval_s() const { return interval_s_; }

    void on_enqueue(int32_t sample, int queue_avail_pkts, double now_s) override;
    void on_dequeue(int32_t sample, double avail_bps, double now_s) override;
    void on_delivered(int32_t sample, double now_s, uint64_t route_hash) override;
    void on_dropped(int32_t sample, netsim::DropReason reason, double now_s) override;

  private:
    struct Scratch {
        double min_avail_bps = std::numeric_limits<double>::infinity();
        int pending_queue_avail = 0;
        int queue_at_min = 0;
    };

    void inject(int64_t k);
    TraceSample& sample_at(int32_t idx);
    Scratch& scratch_at(int32_t idx);

    netsim::Simulator& sim_;
    topo::NodeId a_;
    topo::NodeId b_;
    double interval_s_;
    std::vector<TraceSample> forward_;
    std::vector<TraceSample> return_;
    std::vector<Scratch> scratch_fwd_;
    std::vector<Scratch> scratch_ret_;
};

// Collapses n consecutive samples into one record: means over delivered
// samples (rounded half-up to the field unit), exact drop ratio, and the
// most recent delivered route. All-lost groups carry sentinels and keep
// prev_route_id.
tracefile::TraceRecord aggregate(std::span<const TraceSample> group, uint64_t prev_route_id);

// Groups a full sample stream into a trace file with n samples per record.
tracefile::TraceFile build_trace_file(std::span<const TraceSample> samples, int aggregate_n,
                                      double interval_s, std::string scenario,
                                      std::string direction, uint64_t seed);

} // namespace leotrace::tracer

#endif
