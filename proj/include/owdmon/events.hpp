#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "owdmon/matrix.hpp"
#include "owdmon/rpca.hpp"

namespace owdmon {

enum class EventKind { event, single_spike };
enum class ConfidenceClass { A, B, C, D };

const char* to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);
char to_char(ConfidenceClass c);
ConfidenceClass confidence_from_char(char c);
// True when `a` outranks `b` (A is best).
bool class_better(ConfidenceClass a, ConfidenceClass b);

struct DetectedEvent {
    Prefix prefix;
    Direction direction = Direction::c2s;
    std::int64_t start_epoch = 0;
    std::int64_t end_epoch = 0;  // last outlier bin start + bin width
    EventKind kind = EventKind::event;
    ConfidenceClass confidence_class = ConfidenceClass::D;
    int client_count = 0;
    std::string server_id;
    std::vector<std::size_t> outlier_bins;  // original tiling indices
};

struct FlagRun {
    std::size_t first_row = 0;  // retained-row indices [first, last]
    std::size_t last_row = 0;
};

// Maximal runs of outlier flags. Rows are consecutive only when their
// original bin indices are adjacent, so runs never span removed all-NA rows
// (unless bridging is enabled, which tolerates a single removed row).
std::vector<FlagRun> extract_flag_runs(const std::vector<bool>& outlier,
                                       const std::vector<std::size_t>& bin_index,
                                       bool bridge_na_gaps = false);

// Fraction of the event's RPCA-outlier bins corroborated by Z-score outliers,
// mapped to half-open class intervals: A (0.75, 1], B (0.5, 0.75],
// C (0.25, 0.5], D [0, 0.25].
ConfidenceClass classify_event(const FlagRun& run, const std::vector<bool>& outlier,
                               const std::vector<bool>& z_mask);

struct ClusterDetection {
    std::optional<ClusterMatrix> matrix;
    std::vector<DetectedEvent> events;  // class D already discarded
    SkipReason skip = SkipReason::none;
    RpcaPath path = RpcaPath::rce;
    std::size_t discarded_class_d = 0;
};

ClusterDetection detect_cluster(const PrefixCluster& cluster, std::int64_t window_start,
                                std::int64_t window_end, const DetectorParams& params);

// Detects every cluster, optionally in parallel; output is canonicalized by
// (prefix, start_epoch) so the parallelism degree never changes results.
std::vector<ClusterDetection> detect_clusters(const std::vector<PrefixCluster>& clusters,
                                              std::int64_t window_start, std::int64_t window_end,
                                              const DetectorParams& params, int parallelism = 1);

void sort_events_canonical(std::vector<DetectedEvent>& events);

// Event details file: prefix, client_count, start_epoch, end_epoch, class, kind.
void write_event_details(const std::vector<DetectedEvent>& events, const std::string& path);
std::vector<DetectedEvent> read_event_details(const std::string& path, const std::string& server_id,
                                              Direction direction);

}  // namespace owdmon
