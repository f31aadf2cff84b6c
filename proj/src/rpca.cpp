#include "owdmon/rpca.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "owdmon/robust.hpp"
#include "owdmon/util.hpp"

namespace owdmon {

namespace {

constexpr double kMadScale = 1.4826;  // consistency factor at the normal

std::vector<double> column_vector(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

// Flags from score distances in a k-dimensional basis plus orthogonal
// distances to the spanned hyperplane. Shared by both estimation paths.
std::vector<bool> distance_flags(const Eigen::MatrixXd& centered, const Eigen::MatrixXd& axes,
                                 const Eigen::VectorXd& score_scale2, double cutoff_quantile) {
    const Eigen::Index m = centered.rows();
    const int k = static_cast<int>(axes.cols());

    Eigen::MatrixXd scores = centered * axes;            // m x k
    Eigen::MatrixXd residual = centered - scores * axes.transpose();

    const double sd_cut2 = chi2_quantile(cutoff_quantile, k);
    std::vector<bool> flags(static_cast<std::size_t>(m), false);
    for (Eigen::Index i = 0; i < m; ++i) {
        double sd2 = 0;
        for (int j = 0; j < k; ++j) {
            double s2 = score_scale2(j);
            if (s2 > 0) sd2 += scores(i, j) * scores(i, j) / s2;
        }
        if (sd2 > sd_cut2) flags[static_cast<std::size_t>(i)] = true;
    }

    // Orthogonal distances only exist when the basis leaves a residual space.
    if (k < centered.cols()) {
        Eigen::VectorXd od = residual.rowwise().norm();
        if (od.maxCoeff() > 1e-12) {
            std::vector<double> u(static_cast<std::size_t>(m));
            for (Eigen::Index i = 0; i < m; ++i)
                u[static_cast<std::size_t>(i)] = std::pow(od(i), 2.0 / 3.0);
            double center = median(std::vector<double>(u));
            double scale = mad(u) * kMadScale;
            if (scale > 0) {
                double cut = std::pow(center + scale * normal_quantile(cutoff_quantile), 1.5);
                for (Eigen::Index i = 0; i < m; ++i)
                    if (od(i) > cut) flags[static_cast<std::size_t>(i)] = true;
            }
        }
    }
    return flags;
}

std::optional<RpcaFlags> rce_flags(const Eigen::MatrixXd& z, int k, const DetectorParams& params,
                                   std::uint64_t cluster_seed) {
    std::mt19937_64 rng(cluster_seed);
    McdEstimate mcd = fast_mcd(z, params.coverage, rng, params.mcd_subsets, params.mcd_max_csteps);
    if (!mcd.ok) return std::nullopt;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(mcd.scatter);
    if (eig.info() != Eigen::Success) return std::nullopt;

    const Eigen::Index p = z.cols();
    k = std::min<int>(k, static_cast<int>(p));
    Eigen::MatrixXd axes(p, k);
    Eigen::VectorXd lambda(k);
    for (int j = 0; j < k; ++j) {
        Eigen::Index src = p - 1 - j;  // eigenvalues ascend in Eigen
        axes.col(j) = eig.eigenvectors().col(src);
        lambda(j) = eig.eigenvalues()(src);
    }
    if (!(lambda.minCoeff() > 0)) return std::nullopt;

    Eigen::MatrixXd centered = z.rowwise() - mcd.location.transpose();
    RpcaFlags out;
    out.path = RpcaPath::rce;
    out.outlier = distance_flags(centered, axes, lambda, params.cutoff_quantile);
    return out;
}

std::optional<RpcaFlags> epca_flags(const Eigen::MatrixXd& z, int k, const DetectorParams& params) {
    const Eigen::Index m = z.rows(), p = z.cols();
    k = std::min<int>(k, static_cast<int>(p));

    // Median center, then project rows onto the unit sphere; classical PCA of
    // the projected cloud gives outlier-resistant axes.
    Eigen::VectorXd med(p);
    for (Eigen::Index c = 0; c < p; ++c) med(c) = median(column_vector(z.col(c)));
    Eigen::MatrixXd centered = z.rowwise() - med.transpose();

    Eigen::MatrixXd sphere(m, p);
    for (Eigen::Index i = 0; i < m; ++i) {
        double norm = centered.row(i).norm();
        if (norm > 0) {
            sphere.row(i) = centered.row(i) / norm;
        } else {
            sphere.row(i) = centered.row(i);
        }
    }
    Eigen::MatrixXd scatter = sphere.transpose() * sphere / static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scatter);
    if (eig.info() != Eigen::Success) return std::nullopt;

    Eigen::MatrixXd axes(p, k);
    for (int j = 0; j < k; ++j) axes.col(j) = eig.eigenvectors().col(p - 1 - j);

    // Spherical PCA recovers directions, not variances; the score spread is
    // re-estimated robustly per component.
    Eigen::MatrixXd scores = centered * axes;
    Eigen::VectorXd scale2(k);
    bool any_scale = false;
    for (int j = 0; j < k; ++j) {
        auto col = column_vector(scores.col(j));
        double med_j = median(std::vector<double>(col));
        for (double& v : col) v -= med_j;
        double s = mad(col) * kMadScale;
        if (s <= 0) {
            double mean = scores.col(j).mean();
            double var = (scores.col(j).array() - mean).square().sum() /
                         std::max<double>(1.0, static_cast<double>(m - 1));
            s = std::sqrt(var);
        }
        scale2(j) = s * s;
        any_scale |= s > 0;
        // Center each score column at its median for the distance computation.
        scores.col(j).array() -= med_j;
    }
    if (!any_scale) return std::nullopt;

    const double sd_cut2 = chi2_quantile(params.cutoff_quantile, k);
    std::vector<bool> flags(static_cast<std::size_t>(m), false);
    for (Eigen::Index i = 0; i < m; ++i) {
        double sd2 = 0;
        for (int j = 0; j < k; ++j)
            if (scale2(j) > 0) sd2 += scores(i, j) * scores(i, j) / scale2(j);
        if (sd2 > sd_cut2) flags[static_cast<std::size_t>(i)] = true;
    }

    if (k < p) {
        Eigen::MatrixXd residual = centered - (centered * axes) * axes.transpose();
        Eigen::VectorXd od = residual.rowwise().norm();
        if (od.maxCoeff() > 1e-12) {
            std::vector<double> u(static_cast<std::size_t>(m));
            for (Eigen::Index i = 0; i < m; ++i)
                u[static_cast<std::size_t>(i)] = std::pow(od(i), 2.0 / 3.0);
            double center = median(std::vector<double>(u));
            double scale = mad(u) * kMadScale;
            if (scale > 0) {
                double cut = std::pow(center + scale * normal_quantile(params.cutoff_quantile), 1.5);
                for (Eigen::Index i = 0; i < m; ++i)
                    if (od(i) > cut) flags[static_cast<std::size_t>(i)] = true;
            }
        }
    }

    RpcaFlags out;
    out.path = RpcaPath::epca;
    out.outlier = std::move(flags);
    return out;
}

}  // namespace

std::optional<RpcaFlags> rpca_flags(const Eigen::MatrixXd& standardized, int k,
                                    const DetectorParams& params, std::uint64_t cluster_seed) {
    if (k < 1 || standardized.rows() < 2) return std::nullopt;
    if (auto rce = rce_flags(standardized, k, params, cluster_seed)) return rce;
    return epca_flags(standardized, k, params);
}

std::vector<bool> zscore_outliers(const Eigen::MatrixXd& values, double threshold) {
    const Eigen::Index m = values.rows(), n = values.cols();
    std::vector<bool> out(static_cast<std::size_t>(m), false);
    for (Eigen::Index c = 0; c < n; ++c) {
        double mean = values.col(c).mean();
        double sigma = std::sqrt((values.col(c).array() - mean).square().sum() /
                                 static_cast<double>(m));
        if (sigma <= 0) continue;
        for (Eigen::Index r = 0; r < m; ++r) {
            if (std::fabs((values(r, c) - mean) / sigma) > threshold)
                out[static_cast<std::size_t>(r)] = true;
        }
    }
    return out;
}

}  // namespace owdmon
