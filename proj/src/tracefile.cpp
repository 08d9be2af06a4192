#include "leotrace/tracefile.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

namespace leotrace::tracefile {

namespace {

constexpr const char* kHeader = "t_ms,delay_us,rate_bps,queue_capacity_pkts,loss_ratio,route_id,bdp_pkts";

[[noreturn]] void parse_fail(int line_no, const std::string& what) {
    throw ParseError("trace file: line " + std::to_string(line_no) + ": " + what);
}

} // namespace

void TraceFile::validate() const {
    if (direction != "forward" && direction != "return")
        throw ValidationError("trace file: direction must be 'forward' or 'return'");
    if (resolution_ms <= 0)
        throw ValidationError("trace file: resolution must be positive");
    for (size_t i = 0; i < records.size(); ++i) {
        const TraceRecord& r = records[i];
        const int64_t expect = static_cast<int64_t>(i) * resolution_ms;
        if (r.t_ms != expect)
            throw ValidationError("trace file: record " + std::to_string(i) +
                                  ": t_ms " + std::to_string(r.t_ms) + " breaks the uniform grid");
        if (r.loss_ratio < 0.0 || r.loss_ratio > 1.0)
            throw ValidationError("trace file: record " + std::to_string(i) +
                                  ": loss ratio outside [0, 1]");
        const bool sentinel = r.delay_us == -1 && r.rate_bps == -1 &&
                              r.queue_capacity_pkts == -1 && r.bdp_pkts == -1;
        const bool measured = r.delay_us >= 0 && r.rate_bps >= 0 &&
                              r.queue_capacity_pkts >= 0 && r.bdp_pkts >= 0;
        if (!sentinel && !measured)
            throw ValidationError("trace file: record " + std::to_string(i) +
                                  ": mixed sentinel and measured fields");
    }
}

void write(const TraceFile& tf, std::ostream& out) {
    tf.validate();
    out << "# scenario=" << tf.scenario << '\n';
    out << "# direction=" << tf.direction << '\n';
    out << "# resolution_ms=" << tf.resolution_ms << '\n';
    out << "# seed=" << tf.seed << '\n';
    out << kHeader << '\n';
    char buf[160];
    for (const TraceRecord& r : tf.records) {
        std::snprintf(buf, sizeof(buf),
                      "%" PRId64 ",%" PRId64 ",%" PRId64 ",%d,%.3f,%" PRIx64 ",%" PRId64 "\n",
                      r.t_ms, r.delay_us, r.rate_bps, r.queue_capacity_pkts, r.loss_ratio,
                      r.route_id, r.bdp_pkts);
        out << buf;
    }
}

void write_file(const TraceFile& tf, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw ConfigError("cannot open trace file for writing: " + path);
    write(tf, f);
    if (!f)
        throw Error("write failed: " + path);
}

TraceFile read(std::istream& in) {
    TraceFile tf;
    tf.scenario.clear();
    std::string line;
    int line_no = 0;
    bool saw_header = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                continue;
            size_t key_start = 1;
            while (key_start < line.size() && line[key_start] == ' ')
                ++key_start;
            const std::string key = line.substr(key_start, eq - key_start);
            const std::string value = line.substr(eq + 1);
            if (key == "scenario")
                tf.scenario = value;
            else if (key == "direction")
                tf.direction = value;
            else if (key == "resolution_ms")
                tf.resolution_ms = std::strtoll(value.c_str(), nullptr, 10);
            else if (key == "seed")
                tf.seed = std::strtoull(value.c_str(), nullptr, 10);
            continue;
        }
        if (!saw_header) {
            if (line != kHeader)
                parse_fail(line_no, "expected header row");
            saw_header = true;
            continue;
        }
        TraceRecord r;
        char route_hex[32];
        int consumed = 0;
        const int got = std::sscanf(line.c_str(),
                                    "%" SCNd64 ",%" SCNd64 ",%" SCNd64 ",%d,%lf,%31[0-9a-f],%" SCNd64 "%n",
                                    &r.t_ms, &r.delay_us, &r.rate_bps, &r.queue_capacity_pkts,
                                    &r.loss_ratio, route_hex, &r.bdp_pkts, &consumed);
        if (got != 7 || consumed != static_cast<int>(line.size()))
            parse_fail(line_no, "malformed record row");
        r.route_id = std::strtoull(route_hex, nullptr, 16);
        tf.records.push_back(r);
    }
    if (!saw_header)
        throw ParseError("trace file: missing header row");
    tf.validate();
    return tf;
}

TraceFile read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw ConfigError("cannot open trace file: " + path);
    return read(f);
}

TraceFile apply_delay_offset(TraceFile tf, int64_t offset_us) {
    for (TraceRecord& r : tf.records) {
        if (r.is_sentinel())
            continue;
        if (r.delay_us + offset_us < 0)
            throw UsageError("delay offset would make record at t_ms=" +
                             std::to_string(r.t_ms) + " negative");
        r.delay_us += offset_us;
    }
    return tf;
}

} // namespace leotrace::tracefile
