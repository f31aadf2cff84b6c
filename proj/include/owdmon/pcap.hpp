#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "owdmon/ip.hpp"
#include "owdmon/records.hpp"

namespace owdmon {

struct PcapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PcapParseResult {
    std::vector<NtpPacketRecord> records;
    std::uint64_t udp123_packets = 0;   // UDP packets on port 123 seen in the trace
    std::uint64_t skipped_short = 0;    // NTP payload shorter than 48 bytes
    std::uint64_t truncated_packets = 0;  // capture ended mid-packet
    std::uint64_t total_packets = 0;    // every pcap record in the trace
};

// Parses a classic pcap byte stream (LE/BE, microsecond or nanosecond) into
// NTP records. `server_ip` identifies which endpoint is the server; it is not
// used for filtering, only carried by callers. Throws PcapError on a malformed
// global header.
PcapParseResult parse_pcap(std::span<const std::uint8_t> data, const IpAddr& server_ip);

// Reads a trace file, transparently inflating gzip (magic 1f 8b).
std::vector<std::uint8_t> load_trace_file(const std::string& path);

PcapParseResult parse_pcap_file(const std::string& path, const IpAddr& server_ip);

}  // namespace owdmon
