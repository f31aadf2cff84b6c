#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "owdmon/consolidate.hpp"
#include "owdmon/matrix.hpp"

namespace owdmon {

struct ServerVolume {
    std::string server_id;
    std::optional<std::uint64_t> raw_bytes;  // null when the input is missing
    std::optional<std::uint64_t> csv_bytes;
};

struct DailyReportInputs {
    std::string date;  // YYYY-MM-DD
    std::vector<ServerVolume> server_volumes;
    std::optional<std::size_t> total_clients;
    // Prefixes observed per family (4 or 6 -> count).
    std::map<int, std::size_t> prefixes_observed;
    std::vector<ConsolidatedEvent> consolidated;   // events and single spikes
    std::vector<AggregatedEvent> aggregated;       // may be empty
    std::vector<std::string> gap_notes;
};

struct DailyReport {
    std::string json;  // stable key order
    std::string text;
};

// Counts per direction/kind/class, top-10 by aggregate size (constituent
// prefix count) and by duration, consolidation totals. Missing inputs appear
// as nulls alongside a gap note.
DailyReport daily_report(const DailyReportInputs& inputs);

struct PlotRow {
    std::int64_t bin_start = 0;
    std::string client_ip;
    double owd = 0;
    bool filled = false;
};

// Long-format table of a cluster matrix: one row per (bin, client).
std::vector<PlotRow> owd_plotdata(const ClusterMatrix& matrix);

// Renders `bin_start,client_ip,owd,filled` CSV.
std::string plotdata_csv(const std::vector<PlotRow>& rows);

// Finds one cluster in a matrix details file; throws an error listing the
// available clusters when the requested one is absent.
ClusterMatrix find_cluster_matrix(const std::vector<ClusterMatrix>& matrices, const Prefix& prefix,
                                  Direction direction);

}  // namespace owdmon
