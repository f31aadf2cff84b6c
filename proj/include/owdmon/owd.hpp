#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "owdmon/ip.hpp"
#include "owdmon/records.hpp"

namespace owdmon {

enum class Direction { c2s, s2c };

const char* to_string(Direction d);
Direction direction_from_string(std::string_view s);

enum class PollingClass { constant, increasing, decreasing, variable };

const char* to_string(PollingClass c);

struct OwdPoint {
    double timestamp = 0;
    double owd = 0;
};

struct ClientSeries {
    IpAddr client_ip;
    Direction direction = Direction::c2s;
    std::vector<OwdPoint> samples;   // time-ordered after sort_temporal
    std::vector<int> poll_values;    // aligned with samples
    PollingClass polling_class = PollingClass::constant;
    bool tightly_synced = false;
};

struct ClientStreams {
    ClientSeries c2s;
    ClientSeries s2c;
};

// Selects mode-3 client-to-server packets: s2c OWD from the latency field,
// c2s OWD from the root delay field. Both series share timestamps.
std::map<IpAddr, ClientStreams> extract_owd_streams(const std::vector<NtpPacketRecord>& records,
                                                    const IpAddr& server_ip);

// Stable sort by timestamp; poll values follow their samples.
void sort_temporal(ClientSeries& series);

// Throws on an empty input.
PollingClass classify_polling(const std::vector<int>& poll_values);

struct TightSyncConfig {
    std::size_t min_samples = 10;
    double constant_span_intervals = 4.0;   // required span in polling intervals
    double increasing_hold_intervals = 2.0;  // final poll held at least this long
    double mad_spacing_ratio = 0.25;         // MAD(spacing) / median(spacing) bound
};

bool tight_sync_filter(const ClientSeries& series, const TightSyncConfig& cfg = {});

struct PrefixCluster {
    Prefix prefix;
    Direction direction = Direction::c2s;
    std::string server_id;
    std::vector<ClientSeries> clients;  // n >= 2, sorted by client ip
};

struct ClusterConfig {
    int v4_prefix_bits = 24;
    int v6_prefix_bits = 96;
};

// Groups tightly synchronized clients by prefix; clusters with fewer than two
// clients are discarded. Output is sorted by prefix.
std::vector<PrefixCluster> cluster_prefixes(const std::vector<ClientSeries>& clients,
                                            const ClusterConfig& cfg = {});

// Intermediate cluster files: one CSV of (client_ip, timestamp, owd) triples
// per cluster per direction, plus an index.
void write_cluster_files(const std::vector<PrefixCluster>& clusters, const std::string& server_dir);
std::vector<PrefixCluster> read_cluster_files(const std::string& server_dir,
                                              const std::string& server_id);

}  // namespace owdmon
