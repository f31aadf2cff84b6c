#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "owdmon/consolidate.hpp"

namespace owdmon {

struct ExternalEvent {
    Prefix prefix;  // /24
    std::int64_t start_epoch = 0;
    std::int64_t end_epoch = 0;
    std::string source;
};

enum class MatchType { direct, pre, post };
const char* to_string(MatchType t);

struct MatchResult {
    std::size_t detected_index = 0;    // into the input event list
    std::size_t external_index = 0;  // into the external event list
    MatchType type = MatchType::direct;
    ConfidenceClass detected_class = ConfidenceClass::C;
};

struct MatchSummary {
    std::size_t direct = 0, pre = 0, post = 0;
    std::map<char, std::size_t> matched_by_class;       // events with >= 1 match
    std::map<std::string, std::size_t> matched_by_day;  // UTC date of event start
    std::size_t shared_prefixes = 0;
    std::size_t detected_only_prefixes = 0;
    std::size_t external_only_prefixes = 0;
    std::size_t matched_events = 0;    // distinct events with >= 1 match
    std::size_t matched_external = 0;  // distinct external events with >= 1 match
};

struct MatchOutput {
    std::vector<MatchResult> results;
    MatchSummary summary;
};

// Classifies every same-prefix pair: direct when the closed intervals
// intersect, otherwise pre/post when the edge-to-edge gap is within the
// window (inclusive). Direct wins; one type per pair. IPv4 only.
MatchOutput match_events(const std::vector<ConsolidatedEvent>& detected_events,
                         const std::vector<ExternalEvent>& external_events,
                         std::int64_t window_secs = 3600);

// Reader interface for external feeds; the CSV implementation ships in-repo,
// other encodings plug in behind it.
class ExternalFeedReader {
public:
    virtual ~ExternalFeedReader() = default;
    virtual std::vector<ExternalEvent> read(const std::string& path) const = 0;
};

// CSV `prefix,start_epoch,end_epoch[,source]`, header optional. Throws with
// the offending line number on parse failure.
class CsvExternalFeedReader final : public ExternalFeedReader {
public:
    std::vector<ExternalEvent> read(const std::string& path) const override;
};

void write_match_report(const MatchOutput& output,
                        const std::vector<ConsolidatedEvent>& detected_events,
                        const std::vector<ExternalEvent>& external_events,
                        const std::string& csv_path, const std::string& summary_json_path);

}  // namespace owdmon
