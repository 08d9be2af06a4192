#include "leotrace/tracer.hpp"

#include <cmath>

namespace leotrace::tracer {

namespace {

constexpr double kPacketBits = 1500.0 * 8.0;

// Sample slots interleave directions: forward packets get even indices.
int32_t fwd_idx(int64_t k) { return static_cast<int32_t>(k * 2); }
int32_t ret_idx(int64_t k) { return static_cast<int32_t>(k * 2 + 1); }

int64_t round_half_up(double x) { return static_cast<int64_t>(std::floor(x + 0.5)); }

} // namespace

Tracer::Tracer(netsim::Simulator& sim, topo::NodeId gs_a, topo::NodeId gs_b, double interval_s)
    : sim_(sim), a_(gs_a), b_(gs_b), interval_s_(interval_s) {
    if (interval_s_ <= 0.0)
        throw ConfigError("tracer: interval must be positive");
    if (a_.kind != topo::NodeKind::ground_station || b_.kind != topo::NodeKind::ground_station)
        throw ConfigError("tracer: endpoints must be ground stations");
    sim_.set_observer(this);
    sim_.schedule(0.0, [this] { inject(0); });
}

void Tracer::inject(int64_t k) {
    const double t = static_cast<double>(k) * interval_s_;
    forward_.emplace_back().send_s = t;
    return_.emplace_back().send_s = t;
    scratch_fwd_.emplace_back();
    scratch_ret_.emplace_back();
    sim_.send_trace_packet(a_, b_, fwd_idx(k));
    sim_.send_trace_packet(b_, a_, ret_idx(k));

    const double next = static_cast<double>(k + 1) * interval_s_;
    if (next < sim_.duration_s())
        sim_.schedule(next, [this, k] { inject(k + 1); });
}

TraceSample& Tracer::sample_at(int32_t idx) {
    return idx % 2 == 0 ? forward_[idx / 2] : return_[idx / 2];
}

Tracer::Scratch& Tracer::scratch_at(int32_t idx) {
    return idx % 2 == 0 ? scratch_fwd_[idx / 2] : scratch_ret_[idx / 2];
}

void Tracer::on_enqueue(int32_t sample, int queue_avail_pkts, double) {
    scratch_at(sample).pending_queue_avail = queue_avail_pkts;
}

void Tracer::on_dequeue(int32_t sample, double avail_bps, double) {
    Scratch& s = scratch_at(sample);
    if (avail_bps < s.min_avail_bps) {
        s.min_avail_bps = avail_bps;
        s.queue_at_min = s.pending_queue_avail;
    }
}

void Tracer::on_delivered(int32_t sample, double now_s, uint64_t route_hash) {
    TraceSample& out = sample_at(sample);
    const Scratch& s = scratch_at(sample);
    out.delivered = true;
    out.delay_s = now_s - out.send_s;
    out.min_avail_bps = std::isfinite(s.min_avail_bps) ? s.min_avail_bps : 0.0;
    out.bottleneck_queue_avail_pkts = s.queue_at_min;
    out.path_bdp_pkts = static_cast<int>(std::floor(out.min_avail_bps * out.delay_s / kPacketBits));
    out.route_id = route_hash;
}

void Tracer::on_dropped(int32_t sample, netsim::DropReason, double) {
    sample_at(sample).delivered = false;
}

tracefile::TraceRecord aggregate(std::span<const TraceSample> group, uint64_t prev_route_id) {
    if (group.empty())
        throw UsageError("aggregate: empty sample group");

    tracefile::TraceRecord rec;
    rec.t_ms = std::llround(group.front().send_s * 1000.0);

    int delivered = 0;
    double delay_sum = 0.0, avail_sum = 0.0, queue_sum = 0.0, bdp_sum = 0.0;
    uint64_t last_route = prev_route_id;
    for (const TraceSample& s : group) {
        if (!s.delivered)
            continue;
        ++delivered;
        delay_sum += s.delay_s;
        avail_sum += s.min_avail_bps;
        queue_sum += s.bottleneck_queue_avail_pkts;
        bdp_sum += s.path_bdp_pkts;
        last_route = s.route_id;
    }

    const int n = static_cast<int>(group.size());
    rec.loss_ratio = static_cast<double>(n - delivered) / n;
    rec.route_id = last_route;
    if (delivered == 0) {
        rec.delay_us = -1;
        rec.rate_bps = -1;
        rec.queue_capacity_pkts = -1;
        rec.bdp_pkts = -1;
        return rec;
    }
    rec.delay_us = round_half_up(delay_sum / delivered * 1e6);
    rec.rate_bps = round_half_up(avail_sum / delivered);
    rec.queue_capacity_pkts = static_cast<int32_t>(round_half_up(queue_sum / delivered));
    rec.bdp_pkts = round_half_up(bdp_sum / delivered);
    return rec;
}

tracefile::TraceFile build_trace_file(std::span<const TraceSample> samples, int aggregate_n,
                                      double interval_s, std::string scenario,
                                      std::string direction, uint64_t seed) {
    if (aggregate_n < 1)
        throw ConfigError("trace build: aggregation count must be >= 1");
    const double res_ms_real = aggregate_n * interval_s * 1000.0;
    const int64_t res_ms = std::llround(res_ms_real);
    if (res_ms < 1 || std::fabs(res_ms_real - static_cast<double>(res_ms)) > 1e-6)
        throw ConfigError("trace build: update resolution must be a whole millisecond");

    tracefile::TraceFile tf;
    tf.scenario = std::move(scenario);
    tf.direction = std::move(direction);
    tf.resolution_ms = res_ms;
    tf.seed = seed;

    uint64_t prev_route = 0;
    for (size_t i = 0; i < samples.size(); i += aggregate_n) {
        const size_t count = std::min<size_t>(aggregate_n, samples.size() - i);
        tracefile::TraceRecord rec = aggregate(samples.subspan(i, count), prev_route);
        prev_route = rec.route_id;
        tf.records.push_back(rec);
    }
    tf.validate();
    return tf;
}

} // namespace leotrace::tracer
