#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace owdmon {

struct TraceManifest {
    std::string server_id;
    std::int64_t epoch_start = 0;
    std::int64_t epoch_length = 3600;
    std::uint64_t expected_files = 0;
    std::uint64_t received_files = 0;
    std::vector<std::int64_t> missing_epochs;  // sorted, disjoint
};

// Scans `<trace_root>/<server_id>/<YYYY-MM>/<epoch>.pcap[.gz]` for every
// epoch in [window_start, window_end) and reports the missing ones. Throws
// on an unreadable trace root.
std::vector<TraceManifest> gap_monitor(const std::string& trace_root,
                                       const std::vector<std::string>& expected_servers,
                                       std::int64_t epoch_length,
                                       std::int64_t window_start,
                                       std::int64_t window_end);

// One JSON object per missing epoch: {"server_id": ..., "missing_epoch": ...}.
std::string gap_report_jsonl(const std::vector<TraceManifest>& manifests);

}  // namespace owdmon
