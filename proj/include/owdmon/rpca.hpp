#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

namespace owdmon {

struct DetectorParams {
    double coverage = 0.75;            // MCD subset fraction
    double cutoff_quantile = 0.975;    // score/orthogonal distance flag level
    double variance_threshold_pct = 5.0;
    double z_threshold = 2.0;
    int mcd_subsets = 100;
    int mcd_max_csteps = 30;
    bool bridge_na_gaps = false;       // merge flag runs across a single removed row
    std::uint64_t seed = 1;
};

enum class RpcaPath { rce, epca };

struct RpcaFlags {
    std::vector<bool> outlier;  // per retained bin; true marks an anomalous row
    RpcaPath path = RpcaPath::rce;
};

// Flags anomalous rows of a column-standardized matrix. The default path uses
// a robust covariance estimate; when that fails the spherical-PCA fallback
// runs with the same distance cutoffs. Empty when both paths fail.
std::optional<RpcaFlags> rpca_flags(const Eigen::MatrixXd& standardized, int k,
                                    const DetectorParams& params, std::uint64_t cluster_seed);

// Per-column z-scores; a bin is an outlier when any of its cells deviates
// more than `threshold` standard deviations from its column mean. Constant
// columns yield no outliers.
std::vector<bool> zscore_outliers(const Eigen::MatrixXd& values, double threshold = 2.0);

}  // namespace owdmon
