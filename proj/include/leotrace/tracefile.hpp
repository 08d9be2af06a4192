#ifndef LEOTRACE_TRACEFILE_HPP
#define LEOTRACE_TRACEFILE_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "leotrace/errors.hpp"

namespace leotrace::tracefile {

// One fixed-interval update of path characteristics. Sentinel -1 in
// delay/rate/queue/bdp marks an interval where every probe was lost.
// queue_capacity_pkts is the free queue space observed in front of the
// bottleneck link; the path BDP is kept in its own column and is never
// folded into it.
struct TraceRecord {
    int64_t t_ms = 0;
    int64_t delay_us = 0;
    int64_t rate_bps = 0;
    int32_t queue_capacity_pkts = 0;
    double loss_ratio = 0.0;
    uint64_t route_id = 0;
    int64_t bdp_pkts = 0;

    bool is_sentinel() const { return delay_us < 0; }

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TraceFile {
    std::string scenario;
    std::string direction; // "forward" or "return"
    int64_t resolution_ms = 10;
    uint64_t seed = 0;
    std::vector<TraceRecord> records;

    // Invariants: t_ms starts at 0 and advances by exactly resolution_ms,
    // non-sentinel fields non-negative, loss ratio within [0, 1].
    void validate() const;

    friend bool operator==(const TraceFile&, const TraceFile&) = default;
};

// UTF-8 CSV with LF endings; `# key=value` metadata comments, then the
// header row, then one row per record. Validates before writing.
void write(const TraceFile& tf, std::ostream& out);
void write_file(const TraceFile& tf, const std::string& path);

TraceFile read(std::istream& in);
TraceFile read_file(const std::string& path);

// Shifts every non-sentinel delay by offset_us. Throws on negative results.
TraceFile apply_delay_offset(TraceFile tf, int64_t offset_us);

} // namespace leotrace::tracefile

#endif
