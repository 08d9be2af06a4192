#ifndef LEOTRACE_TRAFFIC_HPP
#define LEOTRACE_TRAFFIC_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "leotrace/netsim.hpp"

namespace leotrace::traffic {

inline constexpr int kWirePacketBytes = 1500;
inline constexpr int kPacketBits = kWirePacketBytes * 8;

// One UDP-like constant-bitrate background flow.
struct FlowSpec {
    int id = 0;
    int src_gs = 0;
    int dst_gs = 0;
    int64_t rate_bps = 0;
    int64_t start_ms = 0;
    int64_t duration_ms = 0;

    friend bool operator==(const FlowSpec&, const FlowSpec&) = default;
};

struct BackgroundParams {
    int num_flows = 10000;
    double rate_min_bps = 0.1e6;
    double rate_max_bps = 2.0e6;
    double duration_min_s = 10.0;
    double duration_max_s = 15.0;
    double peak_s = 100.0;     // centre of the active-flow bell
    double sigma_s = 0.0;      // 0 -> sim_duration / 6
    double sim_duration_s = 200.0;
};

// Start times follow a truncated Normal(peak, sigma) on
// [0, sim_duration - duration_min]; rates and durations are uniform.
// Fields are quantized to the flow-file units (ms, bps) so an exported
// file round-trips losslessly. Output is sorted by start time.
std::vector<FlowSpec> generate_background_flows(const BackgroundParams& p, int num_stations,
                                                uint64_t seed);

// CSV: id,src_gs,dst_gs,rate_bps,start_ms,duration_ms (header required).
void write_flows_csv(std::ostream& out, std::span<const FlowSpec> flows);
std::vector<FlowSpec> read_flows_csv(std::istream& in);

// Departure times of a CBR sender: 1500-byte packets spaced 12000/rate
// seconds apart, at least one packet per flow.
std::vector<double> cbr_send_times(const FlowSpec& flow);

// Schedules every flow's packets into the simulator (background class).
// Sends past the simulation end are skipped.
void install_background_flows(netsim::Simulator& sim, std::span<const FlowSpec> flows);

// --- congestion control -------------------------------------------------

inline constexpr double kCubicC = 0.4;   // pkts / s^3
inline constexpr double kCubicBeta = 0.7;

struct CcState {
    double cwnd_pkts = 10.0;
    double ssthresh_pkts = 1e9;
    double w_max_pkts = 0.0;
    double epoch_start_s = 0.0;
    double k_s = 0.0; // cubic inflection offset for the current epoch
    double rtt_estimate_s = 0.0;
    bool in_slow_start = true;
};

struct CcEvent {
    enum class Type { ack, loss, rtt_sample };
    Type type = Type::ack;
    double now_s = 0.0;
    int acked = 0;      // ack: newly acknowledged packets
    double rtt_s = 0.0; // rtt_sample
};

// Pure window update: slow start doubles per RTT, loss multiplies the
// window by beta and restarts the cubic epoch, avoidance follows
// W(t) = C (t - K)^3 + W_max with K chosen so W(0) equals the reduced
// window (so cwnd is continuous through a loss).
CcState tcp_model_step(CcState cc, const CcEvent& ev);

// --- measurement applications --------------------------------------------

// The channel abstraction both measurement workflows implement: the full
// simulator routes packets through the constellation, the replay side
// pushes them through a trace-driven channel pair. Keeping the apps on
// this interface guarantees both sides run identical logic.
class DuplexEnv {
  public:
    // to_b is true when the packet reached endpoint B (it travelled A->B).
    using Handler = std::function<void(bool to_b, uint64_t seq, int size_bytes, double now_s)>;

    virtual ~DuplexEnv() = default;
    virtual double now() const = 0;
    virtual void at(double t_s, std::function<void()> fn) = 0;
    virtual void send(int app_id, bool a_to_b, netsim::PacketClass cls, int size_bytes,
                      uint64_t seq) = 0;

    void register_app(int app_id, Handler h) { handlers_[app_id] = std::move(h); }

  protected:
    void dispatch(int app_id, bool to_b, uint64_t seq, int size_bytes, double now_s) {
        const auto it = handlers_.find(app_id);
        if (it != handlers_.end())
            it->second(to_b, seq, size_bytes, now_s);
    }

    std::map<int, Handler> handlers_;
};

// Adapter running apps over a live Simulator between two stations.
class NetsimDuplexEnv : public DuplexEnv {
  public:
    NetsimDuplexEnv(netsim::Simulator& sim, topo::NodeId gs_a, topo::NodeId gs_b);

    double now() const override { return sim_.now(); }
    void at(double t_s, std::function<void()> fn) override { sim_.schedule(t_s, std::move(fn)); }
    void send(int app_id, bool a_to_b, netsim::PacketClass cls, int size_bytes,
              uint64_t seq) override;

  private:
    netsim::Simulator& sim_;
    topo::NodeId a_;
    topo::NodeId b_;
};

struct PingResult {
    double send_s = 0.0;
    std::optional<double> rtt_s; // empty: timed out
};

struct PingOptions {
    double start_s = 0.0;
    double stop_s = 0.0;
    double interval_s = 0.5;
    int payload_bytes = 84;
    double timeout_s = 4.0;
};

// Request/echo probe at a fixed cadence; the receiver side echoes
// immediately with the same size.
class PingApp {
  public:
    PingApp(DuplexEnv& env, int app_id, PingOptions opt);
    const std::vector<PingResult>& results() const { return results_; }

  private:
    void send_next(int64_t k);
    void on_packet(bool to_b, uint64_t seq, int size_bytes, double now_s);

    DuplexEnv& env_;
    int app_id_;
    PingOptions opt_;
    std::vector<PingResult> results_;
    std::vector<bool> closed_;
};

struct SpeedtestOptions {
    double start_s = 0.0;
    double duration_s = 0.0;
    int wire_bytes = kWirePacketBytes;
    int payload_bytes = 1440;
    int ack_bytes = 64;
    double rto_s = 1.0;
    int dupack_threshold = 3;
};

// Greedy go-back-N transport driven by tcp_model_step. The receiver ACKs
// every packet with the next expected sequence number and counts only
// in-order payload toward goodput.
class SpeedtestApp {
  public:
    SpeedtestApp(DuplexEnv& env, int app_id, SpeedtestOptions opt);

    // (time, payload bytes) per in-order delivery at the receiver.
    const std::vector<std::pair<double, int>>& deliveries() const { return deliveries_; }
    const std::vector<std::pair<double, double>>& cwnd_log() const { return cwnd_log_; }
    const CcState& cc() const { return cc_; }
    int64_t total_payload_bytes() const { return total_payload_; }

  private:
    void on_packet(bool to_b, uint64_t seq, int size_bytes, double now_s);
    void on_ack(uint64_t ack, double now_s);
    void try_send(double now_s);
    void arm_rto(double now_s);
    void on_loss_event(double now_s);

    DuplexEnv& env_;
    int app_id_;
    SpeedtestOptions opt_;
    CcState cc_;

    // sender
    uint64_t base_ = 0;      // first unacked seq
    uint64_t next_ = 0;      // next seq to (re)send
    uint64_t max_sent_ = 0;  // one past the highest seq ever sent
    int dupacks_ = 0;
    bool in_recovery_ = false;
    uint64_t recovery_point_ = 0;
    double last_progress_s_ = 0.0;
    bool rto_armed_ = false;
    std::vector<double> send_time_;
    std::vector<bool> retransmitted_;

    // receiver
    uint64_t expect_ = 0;

    std::vector<std::pair<double, int>> deliveries_;
    std::vector<std::pair<double, double>> cwnd_log_;
    int64_t total_payload_ = 0;
};

} // namespace leotrace::traffic

#endif
