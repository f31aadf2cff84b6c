#include "owdmon/match.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "owdmon/util.hpp"

namespace owdmon {

const char* to_string(MatchType t) {
    switch (t) {
        case MatchType::direct: return "direct";
        case MatchType::pre: return "pre";
        case MatchType::post: return "post";
    }
    return "?";
}

MatchOutput match_events(const std::vector<ConsolidatedEvent>& detected_events,
                         const std::vector<ExternalEvent>& external_events,
                         std::int64_t window_secs) {
    MatchOutput out;

    std::map<Prefix, std::vector<std::size_t>> external_by_prefix;
    std::set<Prefix> external_prefixes;
    for (std::size_t i = 0; i < external_events.size(); ++i) {
        external_by_prefix[external_events[i].prefix].push_back(i);
        external_prefixes.insert(external_events[i].prefix);
    }

    std::set<Prefix> detected_prefixes;
    std::set<std::size_t> matched_detected, matched_external;

    for (std::size_t bi = 0; bi < detected_events.size(); ++bi) {
        const auto& b = detected_events[bi];
        if (b.prefix.base.v6) continue;  // the external comparison is IPv4-only
        detected_prefixes.insert(b.prefix);
        auto it = external_by_prefix.find(b.prefix);
        if (it == external_by_prefix.end()) continue;
        for (std::size_t ei : it->second) {
            const auto& e = external_events[ei];
            MatchType type;
            if (b.start_epoch <= e.end_epoch && e.start_epoch <= b.end_epoch) {
                type = MatchType::direct;
            } else if (b.end_epoch < e.start_epoch && e.start_epoch - b.end_epoch <= window_secs) {
                type = MatchType::pre;
            } else if (b.start_epoch > e.end_epoch && b.start_epoch - e.end_epoch <= window_secs) {
                type = MatchType::post;
            } else {
                continue;
            }
            out.results.push_back({bi, ei, type, b.confidence_class});
            switch (type) {
                case MatchType::direct: ++out.summary.direct; break;
                case MatchType::pre: ++out.summary.pre; break;
                case MatchType::post: ++out.summary.post; break;
            }
            if (matched_detected.insert(bi).second) {
                ++out.summary.matched_by_class[to_char(b.confidence_class)];
                ++out.summary.matched_by_day[utc_date(b.start_epoch)];
            }
            matched_external.insert(ei);
        }
    }

    std::size_t shared = 0;
    for (const auto& p : detected_prefixes)
        if (external_prefixes.count(p)) ++shared;
    out.summary.shared_prefixes = shared;
    out.summary.detected_only_prefixes = detected_prefixes.size() - shared;
    out.summary.external_only_prefixes = external_prefixes.size() - shared;
    out.summary.matched_events = matched_detected.size();
    out.summary.matched_external = matched_external.size();
    return out;
}

std::vector<ExternalEvent> CsvExternalFeedReader::read(const std::string& path) const {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open external events: " + path);
    std::vector<ExternalEvent> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("prefix,", 0) == 0) continue;
        auto f = split_fields(line);
        if (f.size() != 3 && f.size() != 4)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected prefix,start_epoch,end_epoch[,source]");
        auto prefix = Prefix::parse(f[0]);
        auto start = parse_int64(f[1]);
        auto end = parse_int64(f[2]);
        if (!prefix || !start || !end || *end < *start)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unparseable event");
        ExternalEvent ev;
        ev.prefix = *prefix;
        ev.start_epoch = *start;
        ev.end_epoch = *end;
        ev.source = f.size() == 4 ? std::string(f[3]) : "external";
        out.push_back(std::move(ev));
    }
    return out;
}

void write_match_report(const MatchOutput& output,
                        const std::vector<ConsolidatedEvent>& detected_events,
                        const std::vector<ExternalEvent>& external_events,
                        const std::string& csv_path, const std::string& summary_json_path) {
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write: " + csv_path);
    csv << "prefix,match_type,event_start,event_end,event_kind,event_class,"
           "external_start,external_end,external_source\n";
    for (const auto& m : output.results) {
        const auto& b = detected_events[m.detected_index];
        const auto& e = external_events[m.external_index];
        csv << b.prefix.to_string() << ',' << to_string(m.type) << ',' << b.start_epoch << ','
            << b.end_epoch << ',' << to_string(b.kind) << ',' << to_char(b.confidence_class) << ','
            << e.start_epoch << ',' << e.end_epoch << ',' << e.source << '\n';
    }

    nlohmann::ordered_json j;
    j["pair_matches"] = {{"direct", output.summary.direct},
                         {"pre", output.summary.pre},
                         {"post", output.summary.post}};
    nlohmann::ordered_json by_class = nlohmann::ordered_json::object();
    for (const auto& [cls, count] : output.summary.matched_by_class)
        by_class[std::string(1, cls)] = count;
    j["matched_events_by_class"] = by_class;
    nlohmann::ordered_json by_day = nlohmann::ordered_json::object();
    for (const auto& [day, count] : output.summary.matched_by_day) by_day[day] = count;
    j["matched_events_by_day"] = by_day;
    j["prefixes"] = {{"shared", output.summary.shared_prefixes},
                     {"detected_only", output.summary.detected_only_prefixes},
                     {"external_only", output.summary.external_only_prefixes}};
    j["matched_events"] = output.summary.matched_events;
    j["matched_external_events"] = output.summary.matched_external;
    write_file(summary_json_path, j.dump(2) + "\n");
}

}  // namespace owdmon
