#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "owdmon/owd.hpp"

namespace owdmon {

enum class SkipReason {
    none,
    too_few_clients,     // fewer than 2 clients with samples in the window
    all_rows_na,         // no bin had any sample
    zero_variance,       // degenerate matrix, eigenvalues undefined
    too_few_bins,        // fewer than 2 retained bins
    decomposition_failed  // both robust estimators failed
};

const char* to_string(SkipReason r);

// The t' x n max-OWD-per-bin matrix for one cluster, NA-filled.
struct ClusterMatrix {
    Prefix prefix;
    Direction direction = Direction::c2s;
    std::string server_id;
    std::int64_t bin_width = 0;              // 2^t seconds
    std::vector<std::int64_t> bin_starts;    // retained rows only
    std::vector<std::size_t> bin_index;      // original tiling index per retained row
    Eigen::MatrixXd values;                  // t' x n, filled
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> na_mask;  // true where filled
    std::vector<IpAddr> client_order;
};

struct MatrixBuildResult {
    std::optional<ClusterMatrix> matrix;
    SkipReason skip = SkipReason::none;
};

// Bins [window_start, window_end) at width 2^t, t the lower median of the
// clients' minimum poll exponents; keeps the per-bin maximum OWD, removes
// all-NA rows, then fills remaining NAs with each client's minimum observed
// OWD. Throws std::invalid_argument when the window is shorter than one bin.
MatrixBuildResult build_matrix(const PrefixCluster& cluster, std::int64_t window_start,
                               std::int64_t window_end);

// Columns centered and scaled to unit standard deviation; constant columns
// become zero.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& values);

// Number of principal components whose share of total variance exceeds the
// threshold (percent), floored at 1. Empty when the matrix is degenerate.
std::optional<int> select_top_k(const ClusterMatrix& matrix, double variance_threshold_pct = 5.0);

// Matrix details file: all cluster matrices for one server+direction.
void write_matrix_details(const std::vector<ClusterMatrix>& matrices, const std::string& path);
std::vector<ClusterMatrix> read_matrix_details(const std::string& path);

}  // namespace owdmon
