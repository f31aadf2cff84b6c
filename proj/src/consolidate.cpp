#include "owdmon/consolidate.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "owdmon/util.hpp"

namespace owdmon {

namespace {

bool intervals_merge(std::int64_t s1, std::int64_t e1, std::int64_t s2, std::int64_t e2) {
    return std::min(e1, e2) - std::max(s1, s2) >= 1;
}

ConfidenceClass better_class(ConfidenceClass a, ConfidenceClass b) {
    return class_better(a, b) ? a : b;
}

// Interval index keyed by start epoch; inserting an event absorbs everything
// it overlaps, repeated until no overlap remains.
class MergeIndex {
public:
    void insert(ConsolidatedEvent ev) {
        while (true) {
            auto hit = find_overlap(ev);
            if (hit == events_.end()) break;
            ev.start_epoch = std::min(ev.start_epoch, hit->second.start_epoch);
            ev.end_epoch = std::max(ev.end_epoch, hit->second.end_epoch);
            ev.confidence_class = better_class(ev.confidence_class, hit->second.confidence_class);
            ev.contributing_servers.insert(hit->second.contributing_servers.begin(),
                                           hit->second.contributing_servers.end());
            ev.constituent_event_count += hit->second.constituent_event_count;
            events_.erase(hit);
        }
        events_.emplace(ev.start_epoch, std::move(ev));
    }

    std::vector<ConsolidatedEvent> take() {
        std::vector<ConsolidatedEvent> out;
        out.reserve(events_.size());
        for (auto& [start, ev] : events_) out.push_back(std::move(ev));
        return out;
    }

private:
    std::multimap<std::int64_t, ConsolidatedEvent> events_;

    std::multimap<std::int64_t, ConsolidatedEvent>::iterator find_overlap(
        const ConsolidatedEvent& ev) {
        // Candidates start before ev ends; scan back from there.
        auto it = events_.upper_bound(ev.end_epoch);
        while (it != events_.begin()) {
            --it;
            if (intervals_merge(ev.start_epoch, ev.end_epoch, it->second.start_epoch,
                                it->second.end_epoch))
                return it;
        }
        return events_.end();
    }
};

}  // namespace

std::vector<ConsolidatedEvent> consolidate(
    const std::map<std::string, std::vector<DetectedEvent>>& events_by_server) {
    // Events and single spikes consolidate separately; the map key order
    // fixes the documented server fold order.
    std::map<std::tuple<Prefix, Direction, EventKind>, MergeIndex> buckets;
    for (const auto& [server, events] : events_by_server) {
        for (const auto& ev : events) {
            ConsolidatedEvent c;
            c.prefix = ev.prefix;
            c.direction = ev.direction;
            c.kind = ev.kind;
            c.start_epoch = ev.start_epoch;
            c.end_epoch = ev.end_epoch;
            c.confidence_class = ev.confidence_class;
            c.contributing_servers.insert(ev.server_id.empty() ? server : ev.server_id);
            c.constituent_event_count = 1;
            buckets[{ev.prefix, ev.direction, ev.kind}].insert(std::move(c));
        }
    }
    std::vector<ConsolidatedEvent> out;
    for (auto& [key, index] : buckets) {
        auto merged = index.take();
        out.insert(out.end(), std::make_move_iterator(merged.begin()),
                   std::make_move_iterator(merged.end()));
    }
    std::sort(out.begin(), out.end(), [](const ConsolidatedEvent& a, const ConsolidatedEvent& b) {
        return std::tie(a.prefix, a.direction, a.kind, a.start_epoch, a.end_epoch) <
               std::tie(b.prefix, b.direction, b.kind, b.start_epoch, b.end_epoch);
    });
    return out;
}

void PrefixTable::add(const Prefix& prefix, std::uint32_t asn, PrefixTableEntry::Source source) {
    auto it = entries_.find(prefix);
    if (it != entries_.end()) {
        // First source wins; CAIDA is loaded before Cymru by the pipeline.
        return;
    }
    entries_.emplace(prefix, PrefixTableEntry{prefix, asn, source});
    (prefix.base.v6 ? lengths_v6_ : lengths_v4_).insert(prefix.length);
}

namespace {

std::optional<std::uint32_t> parse_asn_token(std::string_view token,
                                             std::vector<std::string>* audit) {
    // Multi-origin "_" and AS-set "," lists resolve to the first ASN.
    std::size_t cut = token.find_first_of("_,");
    std::string_view first = cut == std::string_view::npos ? token : token.substr(0, cut);
    auto asn = parse_int64(first);
    if (!asn || *asn < 0) return std::nullopt;
    if (cut != std::string_view::npos && audit) {
        audit->push_back("multi-origin entry '" + std::string(token) + "' resolved to AS" +
                         std::string(first));
    }
    return static_cast<std::uint32_t>(*asn);
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

}  // namespace

void PrefixTable::load_caida(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prefix table: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto f = split_ws(line);
        if (f.size() != 3) throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                                    ": expected `prefix length asn`");
        auto len = parse_int64(f[1]);
        auto base = IpAddr::parse(f[0]);
        auto asn = parse_asn_token(f[2], &audit_);
        if (!base || !len || !asn)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unparseable entry");
        add(Prefix::of(*base, static_cast<int>(*len)), *asn, PrefixTableEntry::Source::caida);
    }
}

void PrefixTable::load_cymru(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prefix table: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::size_t bar = line.find('|');
        if (bar == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected `asn | prefix`");
        auto trim = [](std::string_view s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
            return s;
        };
        auto asn = parse_asn_token(trim(std::string_view(line).substr(0, bar)), &audit_);
        auto prefix = Prefix::parse(trim(std::string_view(line).substr(bar + 1)));
        if (!asn || !prefix)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unparseable entry");
        add(*prefix, *asn, PrefixTableEntry::Source::cymru);
    }
}

std::optional<PrefixTableEntry> PrefixTable::longest_match(const IpAddr& ip) const {
    const auto& lengths = ip.v6 ? lengths_v6_ : lengths_v4_;
    for (auto it = lengths.rbegin(); it != lengths.rend(); ++it) {
        auto entry = entries_.find(Prefix::of(ip, *it));
        if (entry != entries_.end()) return entry->second;
    }
    return std::nullopt;
}

AggregationResult aggregate(const std::vector<ConsolidatedEvent>& consolidated,
                            const PrefixTable& table) {
    if (table.empty()) throw std::invalid_argument("empty prefix table");

    AggregationResult result;
    std::set<Prefix> unmatched;
    struct Group {
        std::uint32_t asn;
        std::vector<const ConsolidatedEvent*> events;
    };
    std::map<std::pair<Prefix, Direction>, Group> groups;

    for (const auto& ev : consolidated) {
        if (ev.kind != EventKind::event) continue;  // single spikes omitted
        auto entry = table.longest_match(ev.prefix.base);
        if (!entry) {
            unmatched.insert(ev.prefix);
            continue;
        }
        auto& group = groups[{entry->prefix, ev.direction}];
        group.asn = entry->asn;
        group.events.push_back(&ev);
    }

    for (auto& [key, group] : groups) {
        // Temporal-overlap merging, same fixpoint rule as consolidation, with
        // constituent cluster prefixes accumulated per merged event.
        struct Agg {
            std::int64_t start, end;
            ConfidenceClass cls;
            std::set<Prefix> prefixes;
        };
        std::vector<Agg> merged;
        for (const ConsolidatedEvent* ev : group.events) {
            Agg cur{ev->start_epoch, ev->end_epoch, ev->confidence_class, {ev->prefix}};
            bool changed = true;
            while (changed) {
                changed = false;
                for (auto it = merged.begin(); it != merged.end(); ++it) {
                    if (!intervals_merge(cur.start, cur.end, it->start, it->end)) continue;
                    cur.start = std::min(cur.start, it->start);
                    cur.end = std::max(cur.end, it->end);
                    cur.cls = better_class(cur.cls, it->cls);
                    cur.prefixes.insert(it->prefixes.begin(), it->prefixes.end());
                    merged.erase(it);
                    changed = true;
                    break;
                }
            }
            merged.push_back(std::move(cur));
        }
        for (auto& agg : merged) {
            if (agg.prefixes.size() < 2) continue;
            AggregatedEvent out;
            out.announced_prefix = key.first;
            out.direction = key.second;
            out.asn = group.asn;
            out.start_epoch = agg.start;
            out.end_epoch = agg.end;
            out.confidence_class = agg.cls;
            out.constituent_prefixes = std::move(agg.prefixes);
            result.events.push_back(std::move(out));
        }
    }
    std::sort(result.events.begin(), result.events.end(),
              [](const AggregatedEvent& a, const AggregatedEvent& b) {
                  return std::tie(a.announced_prefix, a.direction, a.start_epoch, a.end_epoch) <
                         std::tie(b.announced_prefix, b.direction, b.start_epoch, b.end_epoch);
              });
    result.unmatched_prefixes.assign(unmatched.begin(), unmatched.end());
    return result;
}

std::vector<AsRankRow> rank_ases(const std::vector<AggregatedEvent>& events,
                                 const std::map<std::uint32_t, std::string>& as_names,
                                 std::size_t top_n) {
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& ev : events) ++counts[ev.asn];
    std::vector<std::pair<std::uint32_t, std::size_t>> rows(counts.begin(), counts.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (rows.size() > top_n) rows.resize(top_n);

    std::vector<AsRankRow> out;
    int rank = 1;
    for (const auto& [asn, count] : rows) {
        AsRankRow row;
        row.rank = rank++;
        row.asn = asn;
        auto it = as_names.find(asn);
        row.name = it == as_names.end() ? "" : it->second;
        row.event_count = count;
        out.push_back(std::move(row));
    }
    return out;
}

std::map<std::uint32_t, std::string> load_as_names(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open AS names: " + path);
    std::map<std::uint32_t, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) continue;
        auto asn = parse_int64(std::string_view(line).substr(0, comma));
        if (asn && *asn >= 0) out[static_cast<std::uint32_t>(*asn)] = line.substr(comma + 1);
    }
    return out;
}

namespace {

std::string join_set(const std::set<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += ';';
        out += s;
    }
    return out;
}

}  // namespace

void write_consolidated_csv(const std::vector<ConsolidatedEvent>& events, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "prefix,direction,kind,start_epoch,end_epoch,class,servers,constituent_events\n";
    for (const auto& ev : events) {
        out << ev.prefix.to_string() << ',' << to_string(ev.direction) << ',' << to_string(ev.kind)
            << ',' << ev.start_epoch << ',' << ev.end_epoch << ',' << to_char(ev.confidence_class)
            << ',' << join_set(ev.contributing_servers) << ',' << ev.constituent_event_count << '\n';
    }
}

std::vector<ConsolidatedEvent> read_consolidated_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<ConsolidatedEvent> out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != 8) throw std::runtime_error("bad consolidated line: " + line);
        ConsolidatedEvent ev;
        ev.prefix = Prefix::parse(f[0]).value();
        ev.direction = direction_from_string(f[1]);
        ev.kind = event_kind_from_string(f[2]);
        ev.start_epoch = parse_int64(f[3]).value();
        ev.end_epoch = parse_int64(f[4]).value();
        ev.confidence_class = confidence_from_char(f[5][0]);
        for (auto server : split_fields(f[6], ';'))
            if (!server.empty()) ev.contributing_servers.insert(std::string(server));
        ev.constituent_event_count = static_cast<std::size_t>(parse_int64(f[7]).value());
        out.push_back(std::move(ev));
    }
    return out;
}

void write_aggregated_csv(const std::vector<AggregatedEvent>& events, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "announced_prefix,asn,direction,start_epoch,end_epoch,class,constituent_prefixes\n";
    for (const auto& ev : events) {
        out << ev.announced_prefix.to_string() << ',' << ev.asn << ',' << to_string(ev.direction)
            << ',' << ev.start_epoch << ',' << ev.end_epoch << ',' << to_char(ev.confidence_class)
            << ',';
        bool first = true;
        for (const auto& p : ev.constituent_prefixes) {
            if (!first) out << ';';
            out << p.to_string();
            first = false;
        }
        out << '\n';
    }
}

void write_unmatched_csv(const std::vector<Prefix>& prefixes, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "prefix\n";
    for (const auto& p : prefixes) out << p.to_string() << '\n';
}

void write_as_ranking_csv(const std::vector<AsRankRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "rank,asn,name,count\n";
    for (const auto& row : rows)
        out << row.rank << ',' << row.asn << ',' << row.name << ',' << row.event_count << '\n';
}

}  // namespace owdmon
