#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace owdmon {

double chi2_quantile(double p, double df);
double chi2_cdf(double x, double df);
double normal_quantile(double p);

struct McdEstimate {
    bool ok = false;
    Eigen::VectorXd location;
    Eigen::MatrixXd scatter;  // reweighted, consistency-corrected
};

// Reweighted minimum-covariance-determinant estimate of location and scatter.
// `coverage` is the subset fraction h/m. Fails (ok = false) when the data
// cannot support a positive-definite scatter — the caller falls back to
// spherical PCA in that case.
McdEstimate fast_mcd(const Eigen::MatrixXd& X, double coverage, std::mt19937_64& rng,
                     int n_subsets = 100, int max_csteps = 30);

}  // namespace owdmon
