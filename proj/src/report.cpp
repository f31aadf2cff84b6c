#include "owdmon/report.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "owdmon/util.hpp"

namespace owdmon {

namespace {

using nlohmann::ordered_json;

struct EventCounts {
    // direction -> kind -> class -> count
    std::map<std::string, std::map<std::string, std::map<std::string, std::size_t>>> counts;
    std::map<int, std::set<Prefix>> prefixes_with_events;  // family -> prefixes

    void add(const ConsolidatedEvent& ev) {
        ++counts[to_string(ev.direction)][to_string(ev.kind)]
                [std::string(1, to_char(ev.confidence_class))];
        prefixes_with_events[ev.prefix.base.v6 ? 6 : 4].insert(ev.prefix);
    }
};

ordered_json top_largest(const std::vector<AggregatedEvent>& aggregated) {
    std::vector<const AggregatedEvent*> rows;
    for (const auto& ev : aggregated) rows.push_back(&ev);
    std::sort(rows.begin(), rows.end(), [](const AggregatedEvent* a, const AggregatedEvent* b) {
        if (a->constituent_prefixes.size() != b->constituent_prefixes.size())
            return a->constituent_prefixes.size() > b->constituent_prefixes.size();
        return std::tie(a->announced_prefix, a->start_epoch) <
               std::tie(b->announced_prefix, b->start_epoch);
    });
    if (rows.size() > 10) rows.resize(10);
    ordered_json out = ordered_json::array();
    for (const auto* ev : rows) {
        out.push_back({{"announced_prefix", ev->announced_prefix.to_string()},
                       {"asn", ev->asn},
                       {"direction", to_string(ev->direction)},
                       {"constituent_prefixes", ev->constituent_prefixes.size()},
                       {"start_epoch", ev->start_epoch},
                       {"end_epoch", ev->end_epoch},
                       {"class", std::string(1, to_char(ev->confidence_class))}});
    }
    return out;
}

ordered_json top_longest(const std::vector<ConsolidatedEvent>& consolidated) {
    std::vector<const ConsolidatedEvent*> rows;
    for (const auto& ev : consolidated)
        if (ev.kind == EventKind::event) rows.push_back(&ev);
    std::sort(rows.begin(), rows.end(), [](const ConsolidatedEvent* a, const ConsolidatedEvent* b) {
        auto da = a->end_epoch - a->start_epoch, db = b->end_epoch - b->start_epoch;
        if (da != db) return da > db;
        return std::tie(a->prefix, a->start_epoch) < std::tie(b->prefix, b->start_epoch);
    });
    if (rows.size() > 10) rows.resize(10);
    ordered_json out = ordered_json::array();
    for (const auto* ev : rows) {
        out.push_back({{"prefix", ev->prefix.to_string()},
                       {"direction", to_string(ev->direction)},
                       {"duration_seconds", ev->end_epoch - ev->start_epoch},
                       {"start_epoch", ev->start_epoch},
                       {"end_epoch", ev->end_epoch},
                       {"class", std::string(1, to_char(ev->confidence_class))}});
    }
    return out;
}

}  // namespace

DailyReport daily_report(const DailyReportInputs& in) {
    EventCounts counts;
    std::size_t multi_server = 0;
    std::size_t total_constituents = 0;
    for (const auto& ev : in.consolidated) {
        counts.add(ev);
        if (ev.contributing_servers.size() > 1) ++multi_server;
        total_constituents += ev.constituent_event_count;
    }

    ordered_json j;
    j["date"] = in.date;

    ordered_json servers = ordered_json::array();
    for (const auto& sv : in.server_volumes) {
        ordered_json row;
        row["id"] = sv.server_id;
        row["raw_bytes"] = sv.raw_bytes ? ordered_json(*sv.raw_bytes) : ordered_json(nullptr);
        row["csv_bytes"] = sv.csv_bytes ? ordered_json(*sv.csv_bytes) : ordered_json(nullptr);
        servers.push_back(std::move(row));
    }
    j["servers"] = servers;
    j["total_clients"] =
        in.total_clients ? ordered_json(*in.total_clients) : ordered_json(nullptr);

    ordered_json observed;
    observed["ipv4"] = in.prefixes_observed.count(4) ? in.prefixes_observed.at(4) : 0;
    observed["ipv6"] = in.prefixes_observed.count(6) ? in.prefixes_observed.at(6) : 0;
    j["prefixes_observed"] = observed;

    ordered_json with_events;
    with_events["ipv4"] = counts.prefixes_with_events.count(4)
                              ? counts.prefixes_with_events.at(4).size()
                              : 0;
    with_events["ipv6"] = counts.prefixes_with_events.count(6)
                              ? counts.prefixes_with_events.at(6).size()
                              : 0;
    j["prefixes_with_events"] = with_events;

    ordered_json event_counts = ordered_json::object();
    std::size_t total_events = 0;
    for (const char* dir : {"c2s", "s2c"}) {
        ordered_json kinds = ordered_json::object();
        for (const char* kind : {"event", "single_spike"}) {
            ordered_json classes = ordered_json::object();
            std::size_t kind_total = 0;
            for (const char* cls : {"A", "B", "C"}) {
                std::size_t c = 0;
                auto dit = counts.counts.find(dir);
                if (dit != counts.counts.end()) {
                    auto kit = dit->second.find(kind);
                    if (kit != dit->second.end()) {
                        auto cit = kit->second.find(cls);
                        if (cit != kit->second.end()) c = cit->second;
                    }
                }
                classes[cls] = c;
                kind_total += c;
            }
            classes["total"] = kind_total;
            kinds[kind] = classes;
            total_events += kind_total;
        }
        event_counts[dir] = kinds;
    }
    event_counts["total"] = total_events;
    j["event_counts"] = event_counts;

    j["top_events_by_aggregate_size"] = top_largest(in.aggregated);
    j["top_events_by_duration"] = top_longest(in.consolidated);
    j["consolidation"] = {{"consolidated_events", in.consolidated.size()},
                          {"constituent_events", total_constituents},
                          {"multi_server_events", multi_server}};
    ordered_json gaps = ordered_json::array();
    for (const auto& note : in.gap_notes) gaps.push_back(note);
    j["gap_notes"] = gaps;

    DailyReport out;
    out.json = j.dump(2) + "\n";

    std::ostringstream text;
    text << "Daily event report for " << in.date << "\n";
    text << "=========================================\n";
    for (const auto& sv : in.server_volumes) {
        text << "server " << sv.server_id << ": raw ";
        if (sv.raw_bytes) text << *sv.raw_bytes << " B"; else text << "n/a";
        text << ", csv ";
        if (sv.csv_bytes) text << *sv.csv_bytes << " B"; else text << "n/a";
        text << "\n";
    }
    if (in.total_clients) text << "total clients: " << *in.total_clients << "\n";
    else text << "total clients: n/a\n";
    text << "prefixes observed: ipv4 " << observed["ipv4"].get<std::size_t>() << ", ipv6 "
         << observed["ipv6"].get<std::size_t>() << "\n";
    text << "prefixes with events: ipv4 " << with_events["ipv4"].get<std::size_t>() << ", ipv6 "
         << with_events["ipv6"].get<std::size_t>() << "\n";
    text << "events (A/B/C, single spikes in parentheses):\n";
    for (const char* dir : {"c2s", "s2c"}) {
        text << "  " << dir << ":";
        for (const char* cls : {"A", "B", "C"}) {
            std::size_t ev = event_counts[dir]["event"][cls].get<std::size_t>();
            std::size_t sp = event_counts[dir]["single_spike"][cls].get<std::size_t>();
            text << " " << cls << "=" << ev << "(" << sp << ")";
        }
        text << "\n";
    }
    text << "top events by duration:\n";
    for (const auto& row : j["top_events_by_duration"]) {
        text << "  " << row["prefix"].get<std::string>() << " "
             << row["duration_seconds"].get<std::int64_t>() << " s class "
             << row["class"].get<std::string>() << "\n";
    }
    text << "top events by aggregate size:\n";
    for (const auto& row : j["top_events_by_aggregate_size"]) {
        text << "  " << row["announced_prefix"].get<std::string>() << " ("
             << row["constituent_prefixes"].get<std::size_t>() << " prefixes) class "
             << row["class"].get<std::string>() << "\n";
    }
    text << "consolidated events: " << in.consolidated.size() << " (from " << total_constituents
         << " constituents, " << multi_server << " multi-server)\n";
    for (const auto& note : in.gap_notes) text << "gap: " << note << "\n";
    out.text = text.str();
    return out;
}

std::vector<PlotRow> owd_plotdata(const ClusterMatrix& m) {
    std::vector<PlotRow> rows;
    rows.reserve(static_cast<std::size_t>(m.values.rows() * m.values.cols()));
    std::vector<std::string> ips;
    for (const auto& ip : m.client_order) ips.push_back(ip.to_string());
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
            rows.push_back({m.bin_starts[static_cast<std::size_t>(r)],
                            ips[static_cast<std::size_t>(c)], m.values(r, c), m.na_mask(r, c)});
        }
    }
    return rows;
}

std::string plotdata_csv(const std::vector<PlotRow>& rows) {
    std::string out = "bin_start,client_ip,owd,filled\n";
    for (const auto& row : rows) {
        out += std::to_string(row.bin_start);
        out += ',';
        out += row.client_ip;
        out += ',';
        out += format_fixed(row.owd, 9);
        out += ',';
        out += row.filled ? "true" : "false";
        out += '\n';
    }
    return out;
}

ClusterMatrix find_cluster_matrix(const std::vector<ClusterMatrix>& matrices, const Prefix& prefix,
                                  Direction direction) {
    for (const auto& m : matrices) {
        if (m.prefix == prefix && m.direction == direction) return m;
    }
    std::string available;
    for (const auto& m : matrices) {
        available += "\n  " + m.prefix.to_string() + " " + to_string(m.direction);
    }
    throw std::runtime_error("unknown cluster " + prefix.to_string() + " " + to_string(direction) +
                             "; available clusters:" + available);
}

}  // namespace owdmon
