#include "leotrace/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <sstream>

#include "leotrace/rng.hpp"

namespace leotrace::traffic {

std::vector<FlowSpec> generate_background_flows(const BackgroundParams& p, int num_stations,
                                                uint64_t seed) {
    if (p.num_flows <= 0)
        throw ConfigError("background: flow count must be positive");
    if (num_stations < 2)
        throw ConfigError("background: need at least two stations");
    if (p.rate_min_bps <= 0.0 || p.rate_max_bps < p.rate_min_bps)
        throw ConfigError("background: bad rate range");
    if (p.duration_min_s <= 0.0 || p.duration_max_s < p.duration_min_s)
        throw ConfigError("background: bad duration range");

    const double lo = 0.0;
    const double hi = p.sim_duration_s - p.duration_min_s;
    if (hi <= lo)
        throw ConfigError("background: simulation too short for the flow duration range");
    const double sigma = p.sigma_s > 0.0 ? p.sigma_s : p.sim_duration_s / 6.0;
    if (p.peak_s < lo - 6.0 * sigma || p.peak_s > hi + 6.0 * sigma)
        throw ConfigError("background: start-time truncation leaves no probability mass");

    rng::Generator gen(seed);
    std::vector<FlowSpec> flows;
    flows.reserve(p.num_flows);
    for (int i = 0; i < p.num_flows; ++i) {
        double start;
        do {
            start = gen.normal(p.peak_s, sigma);
        } while (start < lo || start > hi);
        const double rate = gen.uniform(p.rate_min_bps, p.rate_max_bps);
        const double dur = gen.uniform(p.duration_min_s, p.duration_max_s);
        const int src = static_cast<int>(gen.uniform_below(num_stations));
        int dst = static_cast<int>(gen.uniform_below(num_stations - 1));
        if (dst >= src)
            ++dst;

        FlowSpec f;
        f.src_gs = src;
        f.dst_gs = dst;
        f.rate_bps = std::llround(rate);
        f.start_ms = std::min<int64_t>(std::llround(start * 1000.0), std::llround(hi * 1000.0));
        f.duration_ms = std::llround(dur * 1000.0);
        flows.push_back(f);
    }
    std::stable_sort(flows.begin(), flows.end(),
                     [](const FlowSpec& a, const FlowSpec& b) { return a.start_ms < b.start_ms; });
    for (size_t i = 0; i < flows.size(); ++i)
        flows[i].id = static_cast<int>(i);
    return flows;
}

void write_flows_csv(std::ostream& out, std::span<const FlowSpec> flows) {
    out << "id,src_gs,dst_gs,rate_bps,start_ms,duration_ms\n";
    for (const FlowSpec& f : flows)
        out << f.id << ',' << f.src_gs << ',' << f.dst_gs << ',' << f.rate_bps << ','
            << f.start_ms << ',' << f.duration_ms << '\n';
}

std::vector<FlowSpec> read_flows_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("flows: empty input");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != "id,src_gs,dst_gs,rate_bps,start_ms,duration_ms")
        throw ParseError("flows: missing or malformed header");

    std::vector<FlowSpec> flows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        FlowSpec f;
        char sep = 0;
        std::istringstream row(line);
        row >> f.id >> sep >> f.src_gs >> sep >> f.dst_gs >> sep >> f.rate_bps >> sep >>
            f.start_ms >> sep >> f.duration_ms;
        if (!row)
            throw ParseError("flows: line " + std::to_string(line_no) + ": malformed row");
        flows.push_back(f);
    }
    return flows;
}

std::vector<double> cbr_send_times(const FlowSpec& flow) {
    if (flow.rate_bps <= 0)
        throw ConfigError("cbr: rate must be positive");
    const double start = static_cast<double>(flow.start_ms) / 1000.0;
    const double duration = static_cast<double>(flow.duration_ms) / 1000.0;
    const double interval = static_cast<double>(kPacketBits) / static_cast<double>(flow.rate_bps);
    const int64_t count = std::max<int64_t>(
        1, static_cast<int64_t>(std::floor(duration * static_cast<double>(flow.rate_bps) /
                                               kPacketBits +
                                           1e-9)));
    std::vector<double> times;
    times.reserve(count);
    for (int64_t k = 0; k < count; ++k)
        times.push_back(start + static_cast<double>(k) * interval);
    return times;
}

void install_background_flows(netsim::Simulator& sim, std::span<const FlowSpec> flows) {
    for (const FlowSpec& flow : flows) {
        const auto times = cbr_send_times(flow);
        const topo::NodeId src = topo::gs_node(flow.src_gs);
        const topo::NodeId dst = topo::gs_node(flow.dst_gs);
        const uint64_t tag = static_cast<uint64_t>(flow.id);

        auto step = std::make_shared<std::function<void(size_t)>>();
        *step = [&sim, times, src, dst, tag, step](size_t k) {
            sim.send_packet(src, dst, netsim::PacketClass::background, kWirePacketBytes, tag);
            const size_t next = k + 1;
            if (next < times.size() && times[next] < sim.duration_s())
                sim.schedule(times[next], [step, next] { (*step)(next); });
        };
        if (times.front() < sim.duration_s())
            sim.schedule(times.front(), [step] { (*step)(0); });
    }
}

CcState tcp_model_step(CcState cc, const CcEvent& ev) {
    switch (ev.type) {
    case CcEvent::Type::ack:
        if (cc.in_slow_start) {
            cc.cwnd_pkts += ev.acked;
            if (cc.cwnd_pkts >= cc.ssthresh_pkts) {
                cc.in_slow_start = false;
                cc.epoch_start_s = ev.now_s;
                cc.w_max_pkts = cc.cwnd_pkts;
                cc.k_s = 0.0;
            }
        } else {
            const double dt = (ev.now_s - cc.epoch_start_s) - cc.k_s;
            const double target = kCubicC * dt * dt * dt + cc.w_max_pkts;
            cc.cwnd_pkts = std::max(1.0, target);
        }
        break;
    case CcEvent::Type::loss:
        cc.ssthresh_pkts = std::max(2.0, kCubicBeta * cc.cwnd_pkts);
        cc.w_max_pkts = cc.cwnd_pkts;
        cc.cwnd_pkts = cc.ssthresh_pkts;
        cc.in_slow_start = false;
        cc.epoch_start_s = ev.now_s;
        cc.k_s = std::cbrt(std::max(0.0, cc.w_max_pkts - cc.cwnd_pkts) / kCubicC);
        break;
    case CcEvent::Type::rtt_sample:
        cc.rtt_estimate_s = cc.rtt_estimate_s == 0.0
                                ? ev.rtt_s
                                : 0.875 * cc.rtt_estimate_s + 0.125 * ev.rtt_s;
        break;
    }
    return cc;
}

NetsimDuplexEnv::NetsimDuplexEnv(netsim::Simulator& sim, topo::NodeId gs_a, topo::NodeId gs_b)
    : sim_(sim), a_(gs_a), b_(gs_b) {
    sim_.set_delivery_handler([this](const netsim::Packet& p, double now_s) {
        if (p.dst != a_ && p.dst != b_)
            return;
        const int app = static_cast<int>(p.tag >> 48);
        const uint64_t seq = p.tag & ((1ull << 48) - 1);
        dispatch(app, p.dst == b_, seq, p.size_bytes, now_s);
    });
}

void NetsimDuplexEnv::send(int app_id, bool a_to_b, netsim::PacketClass cls, int size_bytes,
                           uint64_t seq) {
    const uint64_t tag = (static_cast<uint64_t>(app_id) << 48) | (seq & ((1ull << 48) - 1));
    sim_.send_packet(a_to_b ? a_ : b_, a_to_b ? b_ : a_, cls, size_bytes, tag);
}

PingApp::PingApp(DuplexEnv& env, int app_id, PingOptions opt)
    : env_(env), app_id_(app_id), opt_(opt) {
    if (opt_.interval_s <= 0.0)
        throw ConfigError("ping: interval must be positive");
    env_.register_app(app_id_, [this](bool to_b, uint64_t seq, int size, double now) {
        on_packet(to_b, seq, size, now);
    });
    if (opt_.start_s < opt_.stop_s)
        env_.at(opt_.start_s, [this] { send_next(0); });
}

void PingApp::send_next(int64_t k) {
    const double t = opt_.start_s + static_cast<double>(k) * opt_.interval_s;
    const uint64_t seq = results_.size();
    results_.push_back({t, std::nullopt});
    closed_.push_back(false);
    env_.send(app_id_, true, netsim::PacketClass::probe, opt_.payload_bytes, seq);
    env_.at(t + opt_.timeout_s, [this, seq] { closed_[seq] = true; });

    const double next = opt_.start_s + static_cast<double>(k + 1) * opt_.interval_s;
    if (next < opt_.stop_s)
        env_.at(next, [this, k] { send_next(k + 1); });
}

void PingApp::on_packet(bool to_b, uint64_t seq, int size_bytes, double now_s) {
    if (to_b) {
        // Echo side: reflect immediately with the same payload.
        env_.send(app_id_, false, netsim::PacketClass::probe, size_bytes, seq);
        return;
    }
    if (seq < results_.size() && !closed_[seq] && !results_[seq].rtt_s)
        results_[seq].rtt_s = now_s - results_[seq].send_s;
}

SpeedtestApp::SpeedtestApp(DuplexEnv& env, int app_id, SpeedtestOptions opt)
    : env_(env), app_id_(app_id), opt_(opt) {
    if (opt_.duration_s <= 0.0)
        throw ConfigError("speedtest: duration must be positive");
    env_.register_app(app_id_, [this](bool to_b, uint64_t seq, int size, double now) {
        on_packet(to_b, seq, size, now);
    });
    env_.at(opt_.start_s, [this] {
        const double now = env_.now();
        last_progress_s_ = now;
        cwnd_log_.emplace_back(now, cc_.cwnd_pkts);
        try_send(now);
        arm_rto(now);
    });
}

void SpeedtestApp::try_send(double now_s) {
    if (now_s >= opt_.start_s + opt_.duration_s)
        return;
    const auto wnd = static_cast<uint64_t>(std::max(1.0, std::floor(cc_.cwnd_pkts)));
    while (next_ < base_ + wnd) {
        if (next_ >= max_sent_) {
            send_time_.push_back(now_s);
            retransmitted_.push_back(false);
            max_sent_ = next_ + 1;
        } else {
            retransmitted_[next_] = true;
        }
        env_.send(app_id_, true, netsim::PacketClass::transport, opt_.wire_bytes, next_);
        ++next_;
    }
}

void SpeedtestApp::arm_rto(double now_s) {
    if (rto_armed_)
        return;
    rto_armed_ = true;
    const double when = std::max(now_s, last_progress_s_) + opt_.rto_s;
    env_.at(when, [this] {
        rto_armed_ = false;
        const double now = env_.now();
        if (now >= opt_.start_s + opt_.duration_s)
            return;
        if (base_ < max_sent_ && now - last_progress_s_ >= opt_.rto_s - 1e-9) {
            on_loss_event(now);
            last_progress_s_ = now;
        }
        arm_rto(now);
    });
}

void SpeedtestApp::on_loss_event(double now_s) {
    in_recovery_ = true;
    recovery_point_ = max_sent_;
    dupacks_ = 0;
    cc_ = tcp_model_step(cc_, {CcEvent::Type::loss, now_s, 0, 0.0});
    cwnd_log_.emplace_back(now_s, cc_.cwnd_pkts);
    next_ = base_; // go-back-N
    try_send(now_s);
}

void SpeedtestApp::on_ack(uint64_t ack, double now_s) {
    if (ack > base_) {
        const int newly_acked = static_cast<int>(ack - base_);
        const uint64_t probe_seq = ack - 1;
        base_ = ack;
        if (next_ < base_)
            next_ = base_;
        dupacks_ = 0;
        last_progress_s_ = now_s;
        if (in_recovery_ && base_ >= recovery_point_)
            in_recovery_ = false;
        if (!retransmitted_[probe_seq]) {
            cc_ = tcp_model_step(
                cc_, {CcEvent::Type::rtt_sample, now_s, 0, now_s - send_time_[probe_seq]});
        }
        cc_ = tcp_model_step(cc_, {CcEvent::Type::ack, now_s, newly_acked, 0.0});
        cwnd_log_.emplace_back(now_s, cc_.cwnd_pkts);
        try_send(now_s);
    } else if (ack == base_ && base_ < max_sent_) {
        if (++dupacks_ == opt_.dupack_threshold && !in_recovery_)
            on_loss_event(now_s);
    }
}

void SpeedtestApp::on_packet(bool to_b, uint64_t seq, int /*size*/, double now_s) {
    if (to_b) {
        // Receiver: accept only the next in-order packet, always ACK with
        // the next expected sequence number.
        if (seq == expect_) {
            ++expect_;
            deliveries_.emplace_back(now_s, opt_.payload_bytes);
            total_payload_ += opt_.payload_bytes;
        }
        env_.send(app_id_, false, netsim::PacketClass::transport, opt_.ack_bytes, expect_);
        return;
    }
    on_ack(seq, now_s);
}

} // namespace leotrace::traffic
