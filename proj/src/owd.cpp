#include "owdmon/owd.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "owdmon/util.hpp"

namespace fs = std::filesystem;

namespace owdmon {

const char* to_string(Direction d) {
    return d == Direction::c2s ? "c2s" : "s2c";
}

Direction direction_from_string(std::string_view s) {
    if (s == "c2s") return Direction::c2s;
    if (s == "s2c") return Direction::s2c;
    throw std::invalid_argument("unknown direction: " + std::string(s));
}

const char* to_string(PollingClass c) {
    switch (c) {
        case PollingClass::constant: return "constant";
        case PollingClass::increasing: return "increasing";
        case PollingClass::decreasing: return "decreasing";
        case PollingClass::variable: return "variable";
    }
    return "?";
}

std::map<IpAddr, ClientStreams> extract_owd_streams(const std::vector<NtpPacketRecord>& records,
                                                    const IpAddr& server_ip) {
    std::map<IpAddr, ClientStreams> out;
    for (const auto& r : records) {
        if (r.dst_ip != server_ip || r.mode != 3) continue;
        auto& streams = out[r.src_ip];
        if (streams.c2s.samples.empty() && streams.c2s.client_ip.is_zero()) {
            streams.c2s.client_ip = r.src_ip;
            streams.c2s.direction = Direction::c2s;
            streams.s2c.client_ip = r.src_ip;
            streams.s2c.direction = Direction::s2c;
        }
        streams.c2s.samples.push_back({r.packet_timestamp, r.root_delay});
        streams.c2s.poll_values.push_back(r.poll_exponent);
        streams.s2c.samples.push_back({r.packet_timestamp, r.latency});
        streams.s2c.poll_values.push_back(r.poll_exponent);
    }
    return out;
}

void sort_temporal(ClientSeries& series) {
    std::vector<std::size_t> order(series.samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return series.samples[a].timestamp < series.samples[b].timestamp;
    });
    std::vector<OwdPoint> samples(series.samples.size());
    std::vector<int> polls(series.poll_values.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        samples[i] = series.samples[order[i]];
        polls[i] = series.poll_values[order[i]];
    }
    series.samples = std::move(samples);
    series.poll_values = std::move(polls);
}

PollingClass classify_polling(const std::vector<int>& poll_values) {
    if (poll_values.empty()) throw std::invalid_argument("classify_polling: empty input");
    bool any_up = false, any_down = false;
    for (std::size_t i = 1; i < poll_values.size(); ++i) {
        if (poll_values[i] > poll_values[i - 1]) any_up = true;
        if (poll_values[i] < poll_values[i - 1]) any_down = true;
    }
    if (!any_up && !any_down) return PollingClass::constant;
    if (any_up && !any_down) return PollingClass::increasing;
    if (any_down && !any_up) return PollingClass::decreasing;
    return PollingClass::variable;
}

namespace {

bool spacing_is_regular(const ClientSeries& s, double mad_ratio) {
    std::vector<double> spacing;
    spacing.reserve(s.samples.size() - 1);
    for (std::size_t i = 1; i < s.samples.size(); ++i)
        spacing.push_back(s.samples[i].timestamp - s.samples[i - 1].timestamp);
    double med = median(std::vector<double>(spacing));
    if (med <= 0) return false;
    return mad(spacing) <= mad_ratio * med;
}

}  // namespace

bool tight_sync_filter(const ClientSeries& series, const TightSyncConfig& cfg) {
    if (series.samples.size() < cfg.min_samples) return false;

    double span = series.samples.back().timestamp - series.samples.front().timestamp;
    switch (series.polling_class) {
        case PollingClass::constant: {
            double interval = std::ldexp(1.0, series.poll_values.front());
            return span >= cfg.constant_span_intervals * interval;
        }
        case PollingClass::increasing: {
            int final_poll = series.poll_values.back();
            std::size_t first = series.poll_values.size();
            while (first > 0 && series.poll_values[first - 1] == final_poll) --first;
            double held = series.samples.back().timestamp - series.samples[first].timestamp;
            return held >= cfg.increasing_hold_intervals * std::ldexp(1.0, final_poll);
        }
        case PollingClass::decreasing:
        case PollingClass::variable:
            return spacing_is_regular(series, cfg.mad_spacing_ratio);
    }
    return false;
}

std::vector<PrefixCluster> cluster_prefixes(const std::vector<ClientSeries>& clients,
                                            const ClusterConfig& cfg) {
    std::map<std::pair<Prefix, Direction>, std::vector<ClientSeries>> groups;
    for (const auto& c : clients) {
        Prefix p = Prefix::cluster_of(c.client_ip, cfg.v4_prefix_bits, cfg.v6_prefix_bits);
        groups[{p, c.direction}].push_back(c);
    }
    std::vector<PrefixCluster> out;
    for (auto& [key, members] : groups) {
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end(),
                  [](const ClientSeries& a, const ClientSeries& b) {
                      return a.client_ip < b.client_ip;
                  });
        PrefixCluster cluster;
        cluster.prefix = key.first;
        cluster.direction = key.second;
        cluster.clients = std::move(members);
        out.push_back(std::move(cluster));
    }
    return out;
}

void write_cluster_files(const std::vector<PrefixCluster>& clusters, const std::string& server_dir) {
    fs::create_directories(server_dir);
    std::ofstream index(fs::path(server_dir) / "index.csv", std::ios::binary | std::ios::trunc);
    if (!index) throw std::runtime_error("cannot write cluster index in " + server_dir);
    index << "prefix,direction,clients,file\n";
    // Per-client minimum poll exponents; the matrix bin width derives from
    // these, and cluster files stay plain (client_ip, timestamp, owd) triples.
    std::ofstream polls(fs::path(server_dir) / "polls.csv", std::ios::binary | std::ios::trunc);
    polls << "direction,client_ip,min_poll\n";

    for (const auto& cluster : clusters) {
        fs::path dir = fs::path(server_dir) / to_string(cluster.direction);
        fs::create_directories(dir);
        std::string fname = cluster.prefix.file_token() + ".csv";
        fs::path file = dir / fname;
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write cluster file " + file.string());
        out << "client_ip,timestamp,owd\n";
        std::string buf;
        for (const auto& client : cluster.clients) {
            std::string ip = client.client_ip.to_string();
            for (const auto& sample : client.samples) {
                buf = ip;
                buf += ',';
                buf += format_fixed(sample.timestamp, 6);
                buf += ',';
                buf += format_fixed(sample.owd, 9);
                buf += '\n';
                out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            }
            int min_poll = *std::min_element(client.poll_values.begin(), client.poll_values.end());
            polls << to_string(cluster.direction) << ',' << ip << ',' << min_poll << '\n';
        }
        index << cluster.prefix.to_string() << ',' << to_string(cluster.direction) << ','
              << cluster.clients.size() << ',' << to_string(cluster.direction) << '/' << fname
              << '\n';
    }
}

std::vector<PrefixCluster> read_cluster_files(const std::string& server_dir,
                                              const std::string& server_id) {
    std::ifstream index(fs::path(server_dir) / "index.csv");
    if (!index) throw std::runtime_error("missing cluster index in " + server_dir);

    std::map<std::pair<std::string, IpAddr>, int> min_polls;
    {
        std::ifstream polls(fs::path(server_dir) / "polls.csv");
        if (!polls) throw std::runtime_error("missing polls.csv in " + server_dir);
        std::string line;
        std::getline(polls, line);
        while (std::getline(polls, line)) {
            if (line.empty()) continue;
            auto f = split_fields(line);
            if (f.size() != 3) throw std::runtime_error("bad polls line: " + line);
            min_polls[{std::string(f[0]), IpAddr::parse(f[1]).value()}] =
                static_cast<int>(parse_int64(f[2]).value());
        }
    }

    std::vector<PrefixCluster> out;
    std::string line;
    std::getline(index, line);  // header
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != 4) throw std::runtime_error("bad cluster index line: " + line);
        PrefixCluster cluster;
        cluster.prefix = Prefix::parse(f[0]).value();
        cluster.direction = direction_from_string(f[1]);
        cluster.server_id = server_id;

        std::ifstream in(fs::path(server_dir) / std::string(f[3]));
        if (!in) throw std::runtime_error("missing cluster file " + std::string(f[3]));
        std::string row;
        std::getline(in, row);  // header
        std::map<IpAddr, ClientSeries> members;
        while (std::getline(in, row)) {
            if (row.empty()) continue;
            auto c = split_fields(row);
            if (c.size() != 3) throw std::runtime_error("bad cluster row: " + row);
            IpAddr ip = IpAddr::parse(c[0]).value();
            auto& series = members[ip];
            if (series.samples.empty()) {
                series.client_ip = ip;
                series.direction = cluster.direction;
                series.tightly_synced = true;
            }
            series.samples.push_back({parse_double(c[1]).value(), parse_double(c[2]).value()});
        }
        for (auto& [ip, series] : members) {
            auto it = min_polls.find({to_string(cluster.direction), ip});
            if (it == min_polls.end())
                throw std::runtime_error("client missing from polls.csv: " + ip.to_string());
            // Reconstructed series carry only the minimum poll; the full
            // sequence was consumed by classification before clustering.
            series.poll_values.assign(1, it->second);
            cluster.clients.push_back(std::move(series));
        }
        out.push_back(std::move(cluster));
    }
    return out;
}

}  // namespace owdmon
