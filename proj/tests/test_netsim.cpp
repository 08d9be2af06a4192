#include <doctest.h>

#include <cmath>
#include <map>

#include "leotrace/netsim.hpp"
#include "leotrace/rng.hpp"
#include "leotrace/tracer.hpp"
#include "leotrace/traffic.hpp"

using namespace leotrace;
using namespace leotrace::netsim;
using topo::gs_node;
using topo::sat_node;

namespace {

geom::ConstellationSpec tiny_shell() {
    geom::ConstellationSpec s;
    s.altitude_km = 600.0;
    s.num_orbits = 3;
    s.sats_per_orbit = 3;
    s.inclination_deg = 53.0;
    s.min_elevation_deg = 25.0;
    s.isl_rate_bps = 50e6;
    s.gsl_rate_bps = 50e6;
    s.isl_queue_pkts = 200;
    s.gsl_queue_pkts = 200;
    return s;
}

std::vector<geom::GroundStation> two_stations() {
    return {{0, "a", 0.0, 0.0, 0.0}, {1, "b", 2.0, 2.0, 0.0}};
}

// Hand-built forwarding state: entries are (node, dest, next) in flat
// indices, satellites first.
topo::ForwardingState make_state(double epoch_s, int sats, int stations,
                                 const std::vector<std::array<int, 3>>& entries) {
    topo::ForwardingState fs;
    fs.epoch_s = epoch_s;
    fs.num_satellites = sats;
    fs.num_stations = stations;
    const int n = sats + stations;
    fs.next_flat.assign(static_cast<size_t>(n) * n, -1);
    for (const auto& [node, dest, next] : entries)
        fs.next_flat[static_cast<size_t>(node) * n + dest] = next;
    return fs;
}

// gs0 (flat 9) <-> sat `s` <-> gs1 (flat 10) in both directions.
std::vector<std::array<int, 3>> relay_entries(int s) {
    return {{9, 10, s}, {s, 10, 10}, {10, 9, s}, {s, 9, 9}};
}

struct CollectingObserver : VirtualPacketObserver {
    struct Event {
        int32_t sample;
        std::string what;
        double value;
        double t;
    };
    std::vector<Event> events;
    std::map<int32_t, double> delivered_at;
    std::map<int32_t, DropReason> dropped;

    void on_enqueue(int32_t s, int q, double t) override {
        events.push_back({s, "enqueue", static_cast<double>(q), t});
    }
    void on_dequeue(int32_t s, double avail, double t) override {
        events.push_back({s, "dequeue", avail, t});
    }
    void on_delivered(int32_t s, double t, uint64_t) override { delivered_at[s] = t; }
    void on_dropped(int32_t s, DropReason r, double t) override { dropped[s] = r; }
};

} // namespace

TEST_CASE("single link: isolated packet timing") {
    const std::vector<OfferedPacket> offers = {{0.0, 1500}};
    const auto v = run_single_link(50e6, 0.002, 200, offers);
    REQUIRE(v.size() == 1);
    CHECK(v[0].delivered);
    // 240 us serialization plus 2 ms propagation.
    CHECK(v[0].release_s == doctest::Approx(0.00224).epsilon(1e-12));
}

TEST_CASE("single link: drop-tail at capacity") {
    // Serialization takes 0.1 s per packet; arrivals pile up behind the
    // first transmission.
    const double rate = 1500.0 * 8.0 / 0.1;
    const std::vector<OfferedPacket> offers = {
        {0.00, 1500}, // starts transmitting
        {0.01, 1500}, // waiting 1
        {0.02, 1500}, // waiting 2
        {0.03, 1500}, // dropped: two already queued
        {0.25, 1500}, // accepted again after drain
    };
    const auto v = run_single_link(rate, 0.001, 2, offers);
    CHECK(v[0].delivered);
    CHECK(v[1].delivered);
    CHECK(v[2].delivered);
    CHECK(!v[3].delivered);
    CHECK(v[4].delivered);
    CHECK(v[1].release_s == doctest::Approx(0.201).epsilon(1e-12));
    CHECK(v[2].release_s == doctest::Approx(0.301).epsilon(1e-12));
}

TEST_CASE("single link: FIFO order preserved") {
    rng::Generator gen(5);
    std::vector<OfferedPacket> offers;
    double t = 0.0;
    for (int i = 0; i < 300; ++i) {
        t += gen.uniform(0.0, 0.001);
        offers.push_back({t, 200 + static_cast<int>(gen.uniform_below(1300))});
    }
    const auto v = run_single_link(10e6, 0.005, 50, offers);
    double prev = -1.0;
    for (const auto& verdict : v) {
        if (!verdict.delivered)
            continue;
        CHECK(verdict.release_s >= prev);
        prev = verdict.release_s;
    }
}

TEST_CASE("simulator: empty workload runs to completion") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 5.0;
    Simulator sim(cfg, {make_state(0.0, 9, 2, relay_entries(0))});
    sim.run();
    CHECK(sim.delivery_log().records.empty());
    CHECK(sim.now() == 0.0);
}

TEST_CASE("simulator: isolated packet delay equals serialization plus propagation") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 5.0;
    Simulator sim(cfg, {make_state(0.0, 9, 2, relay_entries(0))});

    const double t0 = 1.0;
    sim.schedule(t0, [&] {
        sim.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 1500, 0);
    });
    sim.run();

    REQUIRE(sim.delivery_log().records.size() == 1);
    const DeliveryRecord& rec = sim.delivery_log().records[0];
    REQUIRE(rec.delivered_s.has_value());

    // Independent walk over the two hops with exact positions.
    const auto& spec = cfg.spec;
    const auto& st = cfg.stations;
    const double ser = 1500 * 8.0 / spec.gsl_rate_bps;
    const double t1 = t0 + ser;
    const double p1 = geom::propagation_delay_s(geom::ground_station_position(st[0], t1),
                                                geom::satellite_position(spec, 0, 0, t1));
    const double t2 = t1 + p1 + ser;
    const double p2 = geom::propagation_delay_s(geom::satellite_position(spec, 0, 0, t2),
                                                geom::ground_station_position(st[1], t2));
    CHECK(*rec.delivered_s == doctest::Approx(t2 + p2).epsilon(1e-12));

    // Route hash covers the traversed nodes.
    const std::vector<topo::NodeId> nodes = {gs_node(0), sat_node(0), gs_node(1)};
    CHECK(rec.route_id == topo::route_id(nodes));
}

TEST_CASE("simulator: unreachable destination drops at the source") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 2.0;
    // gs1 has no serving satellite in this state.
    Simulator sim(cfg, {make_state(0.0, 9, 2, {{9, 10, 0}, {0, 10, 10}})});
    sim.schedule(0.5, [&] {
        sim.send_packet(gs_node(1), gs_node(0), PacketClass::probe, 1500, 0);
    });
    sim.run();
    REQUIRE(sim.delivery_log().records.size() == 1);
    CHECK(!sim.delivery_log().records[0].delivered_s.has_value());
    CHECK(sim.delivery_log().records[0].drop == DropReason::no_gsl);
}

TEST_CASE("simulator: rerun determinism") {
    auto run_once = [] {
        SimConfig cfg;
        cfg.spec = tiny_shell();
        cfg.stations = two_stations();
        cfg.duration_s = 8.0;
        std::vector<topo::ForwardingState> tl = {make_state(0.0, 9, 2, relay_entries(0)),
                                                 make_state(4.0, 9, 2, relay_entries(1))};
        Simulator sim(cfg, tl);
        traffic::FlowSpec flow{0, 0, 1, 5'000'000, 100, 6000};
        traffic::install_background_flows(sim, {&flow, 1});
        sim.run();
        return sim.delivery_log();
    };
    const DeliveryLog a = run_once();
    const DeliveryLog b = run_once();
    CHECK(a.records.size() > 100);
    CHECK(a == b);
}

TEST_CASE("simulator: same-flow packets keep FIFO order end to end") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 4.0;
    Simulator sim(cfg, {make_state(0.0, 9, 2, relay_entries(0))});
    traffic::FlowSpec flow{0, 0, 1, 20'000'000, 0, 3000};
    traffic::install_background_flows(sim, {&flow, 1});
    sim.run();

    double prev_created = -1.0, prev_delivered = -1.0;
    int delivered = 0;
    for (const auto& rec : sim.delivery_log().records) {
        if (!rec.delivered_s)
            continue;
        ++delivered;
        CHECK(rec.created_s > prev_created);
        CHECK(*rec.delivered_s > prev_delivered);
        prev_created = rec.created_s;
        prev_delivered = *rec.delivered_s;
    }
    CHECK(delivered > 1000);
}

TEST_CASE("simulator: conservation of packets") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.spec.gsl_queue_pkts = 5; // force queue drops
    cfg.stations = two_stations();
    cfg.duration_s = 3.0;
    std::vector<topo::ForwardingState> tl = {make_state(0.0, 9, 2, relay_entries(0)),
                                             make_state(1.5, 9, 2, relay_entries(1))};
    Simulator sim(cfg, tl);
    std::vector<traffic::FlowSpec> flows = {{0, 0, 1, 60'000'000, 0, 2500},
                                            {1, 1, 0, 10'000'000, 200, 2000}};
    traffic::install_background_flows(sim, flows);
    sim.run();

    int delivered = 0, dropped_queue = 0, dropped_other = 0;
    for (const auto& rec : sim.delivery_log().records) {
        if (rec.delivered_s) {
            CHECK(rec.drop == DropReason::none);
            CHECK(*rec.delivered_s >= rec.created_s);
            ++delivered;
        } else if (rec.drop == DropReason::queue) {
            ++dropped_queue;
        } else {
            ++dropped_other;
        }
    }
    CHECK(delivered > 0);
    CHECK(dropped_queue > 0); // 60 Mbps offered over a 50 Mbps link
    CHECK(delivered + dropped_queue + dropped_other ==
          static_cast<int>(sim.delivery_log().records.size()));
}

TEST_CASE("simulator: handover gate drops everything inside the window") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 15.0;
    cfg.handover_loss_s = 0.25;
    std::vector<topo::ForwardingState> tl = {make_state(0.0, 9, 2, relay_entries(0)),
                                             make_state(10.0, 9, 2, relay_entries(1))};
    Simulator sim(cfg, tl);

    CollectingObserver obs;
    sim.set_observer(&obs);

    auto probe = [&](double t) {
        sim.schedule(t, [&sim, t] {
            sim.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 600,
                            static_cast<uint64_t>(t * 1000));
        });
    };
    probe(9.5);   // before the handover
    probe(10.1);  // inside the loss window
    probe(10.249);
    probe(10.26); // window is half-open, this one passes
    sim.schedule(10.05, [&] { sim.send_trace_packet(gs_node(0), gs_node(1), 0); });
    sim.run();

    const auto& recs = sim.delivery_log().records;
    REQUIRE(recs.size() == 4);
    CHECK(recs[0].delivered_s.has_value());
    CHECK(recs[1].drop == DropReason::handover);
    CHECK(recs[2].drop == DropReason::handover);
    CHECK(recs[3].delivered_s.has_value());
    REQUIRE(obs.dropped.count(0));
    CHECK(obs.dropped[0] == DropReason::handover);
}

TEST_CASE("simulator: handover gate disabled when loss window is zero") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 15.0;
    cfg.handover_loss_s = 0.0;
    std::vector<topo::ForwardingState> tl = {make_state(0.0, 9, 2, relay_entries(0)),
                                             make_state(10.0, 9, 2, relay_entries(1))};
    Simulator sim(cfg, tl);
    sim.schedule(10.1, [&] {
        sim.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 600, 0);
    });
    sim.run();
    CHECK(sim.delivery_log().records[0].delivered_s.has_value());
}

TEST_CASE("simulator: reconfiguration pauses GSL dequeues without loss") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 20.0;
    cfg.reconfig_interval_s = 15.0;
    cfg.reconfig_duration_s = 0.1;
    Simulator sim(cfg, {make_state(0.0, 9, 2, relay_entries(0))});

    sim.schedule(14.9, [&] {
        sim.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 1500, 0);
    });
    sim.schedule(15.02, [&] {
        sim.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 1500, 1);
    });
    sim.run();

    const auto& recs = sim.delivery_log().records;
    REQUIRE(recs.size() == 2);
    REQUIRE(recs[0].delivered_s.has_value());
    REQUIRE(recs[1].delivered_s.has_value());

    // The 14.9 packet clears the GSL before the pause.
    const double ser = 1500 * 8.0 / cfg.spec.gsl_rate_bps;
    CHECK(*recs[0].delivered_s < 15.0);
    // The 15.02 packet is buffered and released no earlier than 15.1.
    CHECK(*recs[1].delivered_s >= 15.1 + ser);
    CHECK(*recs[1].delivered_s < 15.2);
}

TEST_CASE("simulator: queue keeps packets across a reconfiguration, overflow drops") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.spec.gsl_queue_pkts = 3;
    cfg.stations = two_stations();
    cfg.duration_s = 20.0;
    cfg.reconfig_interval_s = 15.0;
    cfg.reconfig_duration_s = 0.1;
    Simulator sim(cfg, {make_state(0.0, 9, 2, relay_entries(0))});

    for (int i = 0; i < 5; ++i) {
        sim.schedule(15.01 + i * 0.001, [&sim, i] {
            sim.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 1500,
                            static_cast<uint64_t>(i));
        });
    }
    sim.run();

    int delivered = 0, dropped = 0;
    for (const auto& rec : sim.delivery_log().records)
        rec.delivered_s ? ++delivered : ++dropped;
    CHECK(delivered == 3);
    CHECK(dropped == 2);
}

TEST_CASE("simulator: virtual packets ride queues without consuming them") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.spec.gsl_rate_bps = 1500.0 * 8.0 / 0.1; // 0.1 s per packet
    cfg.spec.gsl_queue_pkts = 2;
    cfg.stations = two_stations();
    cfg.duration_s = 5.0;
    Simulator sim(cfg, {make_state(0.0, 9, 2, relay_entries(0))});

    CollectingObserver obs;
    sim.set_observer(&obs);

    auto real_at = [&](double t, uint64_t tag) {
        sim.schedule(t, [&sim, tag] {
            sim.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 1500, tag);
        });
    };

    // R0 transmits 0..0.1; R1 waits; virtual 10 next; R2 still accepted
    // (virtual does not count); R3 dropped; virtual 11 mirrors the drop.
    real_at(0.00, 0);
    real_at(0.01, 1);
    sim.schedule(0.02, [&] { sim.send_trace_packet(gs_node(0), gs_node(1), 10); });
    real_at(0.03, 2);
    real_at(0.04, 3);
    sim.schedule(0.05, [&] { sim.send_trace_packet(gs_node(0), gs_node(1), 11); });
    sim.run();

    const auto& recs = sim.delivery_log().records;
    REQUIRE(recs.size() == 4);
    CHECK(recs[0].delivered_s.has_value());
    CHECK(recs[1].delivered_s.has_value());
    CHECK(recs[2].delivered_s.has_value());
    CHECK(recs[3].drop == DropReason::queue);

    // Virtual 10 sits between R1 and R2: it leaves when R1 finishes at 0.2.
    REQUIRE(obs.delivered_at.count(10));
    const double gsl_dequeue_t = 0.2;
    CHECK(obs.delivered_at[10] > gsl_dequeue_t);
    CHECK(obs.delivered_at[10] < gsl_dequeue_t + 0.01);

    // Virtual 11 arrived with two real packets waiting: mirror drop.
    REQUIRE(obs.dropped.count(11));
    CHECK(obs.dropped[11] == DropReason::queue);

    // Real packet outcomes are identical to a run without any virtuals.
    SimConfig cfg2 = cfg;
    Simulator plain(cfg2, {make_state(0.0, 9, 2, relay_entries(0))});
    auto real_at2 = [&](double t, uint64_t tag) {
        plain.schedule(t, [&plain, tag] {
            plain.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 1500, tag);
        });
    };
    real_at2(0.00, 0);
    real_at2(0.01, 1);
    real_at2(0.03, 2);
    real_at2(0.04, 3);
    plain.run();
    CHECK(plain.delivery_log() == sim.delivery_log());
}

TEST_CASE("simulator: available bandwidth reflects load and reservations") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 3.0;
    cfg.gsl_reservation_bps[0] = 10e6;
    Simulator sim(cfg, {make_state(0.0, 9, 2, relay_entries(0))});

    traffic::FlowSpec flow{0, 0, 1, 20'000'000, 0, 2500};
    traffic::install_background_flows(sim, {&flow, 1});

    const topo::LinkId uplink{gs_node(0), sat_node(0), topo::LinkKind::gsl};
    double avail_probe = 0.0, avail_bg = 0.0;
    sim.schedule(1.0, [&] {
        avail_probe = sim.available_bandwidth_bps(uplink, PacketClass::probe);
        avail_bg = sim.available_bandwidth_bps(uplink, PacketClass::background);
    });
    sim.run();

    const double quantum = 1500 * 8.0 / 0.01;
    CHECK(avail_probe == doctest::Approx(30e6).epsilon(0.0).scale(1.0).epsilon(quantum / 30e6 * 1.5));
    CHECK(avail_bg == doctest::Approx(20e6).scale(1.0).epsilon(quantum / 20e6 * 1.5));

    // An idle link reports its full rate.
    SimConfig idle_cfg;
    idle_cfg.spec = tiny_shell();
    idle_cfg.stations = two_stations();
    idle_cfg.duration_s = 1.0;
    Simulator idle(idle_cfg, {make_state(0.0, 9, 2, relay_entries(0))});
    double idle_avail = -1.0;
    idle.schedule(0.5, [&] {
        idle_avail = idle.available_bandwidth_bps(uplink, PacketClass::probe);
    });
    idle.run();
    CHECK(idle_avail == idle_cfg.spec.gsl_rate_bps);
}

TEST_CASE("simulator: reservation caps background throughput") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 3.0;
    cfg.gsl_reservation_bps[0] = 10e6; // background may use at most 40 Mbps
    Simulator sim(cfg, {make_state(0.0, 9, 2, relay_entries(0))});

    traffic::FlowSpec flow{0, 0, 1, 45'000'000, 0, 2500};
    traffic::install_background_flows(sim, {&flow, 1});
    sim.run();

    // Delivered background rate over the steady second stays near the cap.
    int64_t bytes = 0;
    for (const auto& rec : sim.delivery_log().records) {
        if (rec.delivered_s && *rec.delivered_s >= 1.0 && *rec.delivered_s < 2.0)
            bytes += 1500;
    }
    const double rate = bytes * 8.0;
    CHECK(rate > 37e6);
    CHECK(rate < 41.5e6);
}

TEST_CASE("simulator: stale GSL interfaces drop queued packets on epoch change") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.spec.gsl_rate_bps = 1500.0 * 8.0 / 0.05; // slow: 50 ms per packet
    cfg.stations = two_stations();
    cfg.duration_s = 5.0;
    std::vector<topo::ForwardingState> tl = {make_state(0.0, 9, 2, relay_entries(0)),
                                             make_state(1.0, 9, 2, relay_entries(1))};
    Simulator sim(cfg, tl);

    // Fill the old uplink right before the switch; the backlog cannot be
    // transmitted before t=1 and the new state no longer references S0.
    for (int i = 0; i < 6; ++i) {
        sim.schedule(0.95 + i * 0.001, [&sim, i] {
            sim.send_packet(gs_node(0), gs_node(1), PacketClass::probe, 1500,
                            static_cast<uint64_t>(i));
        });
    }
    sim.run();

    int no_gsl = 0, delivered = 0;
    for (const auto& rec : sim.delivery_log().records)
        rec.delivered_s ? ++delivered : (rec.drop == DropReason::no_gsl ? ++no_gsl : 0);
    CHECK(no_gsl >= 4);
    CHECK(delivered + no_gsl == 6);
}

TEST_CASE("sim config validation") {
    SimConfig cfg;
    cfg.spec = tiny_shell();
    cfg.stations = two_stations();
    cfg.duration_s = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg.duration_s = 10.0;
    cfg.reconfig_interval_s = 15.0;
    cfg.reconfig_duration_s = 15.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg.reconfig_duration_s = 0.1;
    cfg.gsl_reservation_bps[0] = 60e6;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg.gsl_reservation_bps[0] = 10e6;
    CHECK_NOTHROW(cfg.validate());
}
