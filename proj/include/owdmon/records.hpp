#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "owdmon/ip.hpp"

namespace owdmon {

// One parsed NTP packet in the 9-field trace schema.
struct NtpPacketRecord {
    std::uint64_t packet_number = 0;  // 1-based ordinal within the source trace
    IpAddr src_ip;
    IpAddr dst_ip;
    double latency = 0.0;           // origin - receive NTP timestamps, seconds (s2c OWD)
    int poll_exponent = 0;          // log2 of polling interval in seconds
    double packet_timestamp = 0.0;  // capture epoch time, microsecond precision
    double root_delay = 0.0;        // 16.16 fixed point, seconds (c2s OWD)
    double rtt = 0.0;               // seconds
    std::string reference_ip;       // refid rendered as dotted quad

    // NTP mode from the packet header. Carried in memory only; the CSV schema
    // has no mode column, so read_csv restores the client-request default (3).
    int mode = 3;

    bool operator==(const NtpPacketRecord&) const = default;
};

inline constexpr const char* kCsvHeader =
    "packet_number,src_ip,dst_ip,latency,poll_exponent,packet_timestamp,root_delay,rtt,reference_ip";

void write_csv(const std::vector<NtpPacketRecord>& records, std::ostream& out);
void write_csv_file(const std::vector<NtpPacketRecord>& records, const std::string& path);
std::string format_csv_row(const NtpPacketRecord& r);

struct CsvReadResult {
    std::vector<NtpPacketRecord> records;
    std::uint64_t corrupted = 0;  // lines with the wrong column count
};

CsvReadResult read_csv(std::istream& in);
CsvReadResult read_csv_file(const std::string& path);

struct FilterResult {
    std::vector<NtpPacketRecord> records;
    std::uint64_t rejected = 0;
};

// Drops records with non-finite or negative delay fields, zero IPs, or a poll
// exponent outside [0, 17]. Total and idempotent.
FilterResult integrity_filter(const std::vector<NtpPacketRecord>& records);
bool record_passes_integrity(const NtpPacketRecord& r);

}  // namespace owdmon
