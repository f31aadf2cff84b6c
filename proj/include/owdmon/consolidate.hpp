#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "owdmon/events.hpp"

namespace owdmon {

struct ConsolidatedEvent {
    Prefix prefix;
    Direction direction = Direction::c2s;
    EventKind kind = EventKind::event;
    std::int64_t start_epoch = 0;
    std::int64_t end_epoch = 0;
    ConfidenceClass confidence_class = ConfidenceClass::C;
    std::set<std::string> contributing_servers;
    std::size_t constituent_event_count = 0;
};

// Merges per-server events into a global view. Servers are folded in sorted
// id order; same-prefix events of the same kind and direction merge when
// their closed intervals intersect by at least one second (abutment does not
// merge), iterated to fixpoint. Merged events take the earliest start, latest
// end, and best class.
std::vector<ConsolidatedEvent> consolidate(
    const std::map<std::string, std::vector<DetectedEvent>>& events_by_server);

struct PrefixTableEntry {
    Prefix prefix;
    std::uint32_t asn = 0;
    enum class Source { caida, cymru } source = Source::caida;
};

class PrefixTable {
public:
    // CAIDA pfx2as format: `prefix <TAB> length <TAB> ASN`; multi-origin ASN
    // lists ("_" or ",") resolve to the first ASN.
    void load_caida(const std::string& path);
    // Team Cymru style: `ASN | prefix` lines.
    void load_cymru(const std::string& path);
    void add(const Prefix& prefix, std::uint32_t asn, PrefixTableEntry::Source source);

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    // Longest-prefix match; CAIDA entries win over Cymru at equal length.
    std::optional<PrefixTableEntry> longest_match(const IpAddr& ip) const;
    const std::vector<std::string>& audit_notes() const { return audit_; }

private:
    std::map<Prefix, PrefixTableEntry> entries_;
    std::set<int> lengths_v4_;
    std::set<int> lengths_v6_;
    std::vector<std::string> audit_;
};

struct AggregatedEvent {
    Prefix announced_prefix;
    std::uint32_t asn = 0;
    Direction direction = Direction::c2s;
    std::int64_t start_epoch = 0;
    std::int64_t end_epoch = 0;
    ConfidenceClass confidence_class = ConfidenceClass::C;
    std::set<Prefix> constituent_prefixes;  // >= 2 cluster prefixes
};

struct AggregationResult {
    std::vector<AggregatedEvent> events;
    std::vector<Prefix> unmatched_prefixes;  // no table entry, sorted unique
};

// Rolls consolidated events (kind == event only) up to announced prefixes via
// longest-prefix match and re-runs interval merging per announced prefix.
// Only merged events spanning >= 2 distinct cluster prefixes are emitted.
// Throws on an empty table.
AggregationResult aggregate(const std::vector<ConsolidatedEvent>& consolidated,
                            const PrefixTable& table);

struct AsRankRow {
    int rank = 0;
    std::uint32_t asn = 0;
    std::string name;
    std::size_t event_count = 0;
};

// Descending event count, ties broken by ascending ASN.
std::vector<AsRankRow> rank_ases(const std::vector<AggregatedEvent>& events,
                                 const std::map<std::uint32_t, std::string>& as_names = {},
                                 std::size_t top_n = 5);

std::map<std::uint32_t, std::string> load_as_names(const std::string& path);

void write_consolidated_csv(const std::vector<ConsolidatedEvent>& events, const std::string& path);
std::vector<ConsolidatedEvent> read_consolidated_csv(const std::string& path);
void write_aggregated_csv(const std::vector<AggregatedEvent>& events, const std::string& path);
void write_unmatched_csv(const std::vector<Prefix>& prefixes, const std::string& path);
void write_as_ranking_csv(const std::vector<AsRankRow>& rows, const std::string& path);

}  // namespace owdmon
