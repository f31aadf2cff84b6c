#include "owdmon/robust.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace owdmon {

double chi2_quantile(double p, double df) {
    return boost::math::quantile(boost::math::chi_squared(df), p);
}

double chi2_cdf(double x, double df) {
    return boost::math::cdf(boost::math::chi_squared(df), x);
}

double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal(), p);
}

namespace {

struct Candidate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double log_det = std::numeric_limits<double>::infinity();
};

constexpr double kLogDetFloor = -1e12;

// Mean and sample covariance of the listed rows.
Candidate fit_subset(const Eigen::MatrixXd& X, const std::vector<int>& rows) {
    const auto p = X.cols();
    Candidate c;
    c.mean = Eigen::VectorXd::Zero(p);
    for (int r : rows) c.mean += X.row(r).transpose();
    c.mean /= static_cast<double>(rows.size());
    c.cov = Eigen::MatrixXd::Zero(p, p);
    for (int r : rows) {
        Eigen::VectorXd d = X.row(r).transpose() - c.mean;
        c.cov += d * d.transpose();
    }
    c.cov /= static_cast<double>(rows.size()) - 1.0;
    return c;
}

// Log-determinant via Cholesky; -inf when not positive definite.
double log_det_pd(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    double ld = 0;
    const auto& L = llt.matrixLLT();
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        double diag = L(i, i);
        if (!(diag > 0)) return -std::numeric_limits<double>::infinity();
        ld += 2.0 * std::log(diag);
    }
    return ld;
}

std::vector<int> h_smallest_by_distance(const Eigen::MatrixXd& X, const Candidate& c, int h) {
    Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
    if (llt.info() != Eigen::Success) return {};
    const int m = static_cast<int>(X.rows());
    std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        Eigen::VectorXd d = X.row(i).transpose() - c.mean;
        Eigen::VectorXd u = llt.matrixL().solve(d);
        dist[static_cast<std::size_t>(i)] = {u.squaredNorm(), i};
    }
    std::nth_element(dist.begin(), dist.begin() + h - 1, dist.end());
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i) rows.push_back(dist[static_cast<std::size_t>(i)].second);
    std::sort(rows.begin(), rows.end());
    return rows;
}

// One concentration step; false when the scatter degenerates.
bool c_step(const Eigen::MatrixXd& X, Candidate& c, int h) {
    auto rows = h_smallest_by_distance(X, c, h);
    if (rows.empty()) return false;
    Candidate next = fit_subset(X, rows);
    next.log_det = log_det_pd(next.cov);
    c = std::move(next);
    return std::isfinite(c.log_det);
}

// Exact univariate MCD: the minimum-variance window of h consecutive order
// statistics.
Candidate univariate_mcd(const Eigen::MatrixXd& X, int h) {
    std::vector<double> v(X.col(0).data(), X.col(0).data() + X.rows());
    std::sort(v.begin(), v.end());
    const int m = static_cast<int>(v.size());
    double best_var = std::numeric_limits<double>::infinity();
    double best_mean = 0;
    std::vector<double> prefix(static_cast<std::size_t>(m) + 1, 0.0), prefix2(prefix);
    for (int i = 0; i < m; ++i) {
        prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + v[static_cast<std::size_t>(i)];
        prefix2[static_cast<std::size_t>(i) + 1] =
            prefix2[static_cast<std::size_t>(i)] + v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    }
    for (int start = 0; start + h <= m; ++start) {
        double s = prefix[static_cast<std::size_t>(start + h)] - prefix[static_cast<std::size_t>(start)];
        double s2 = prefix2[static_cast<std::size_t>(start + h)] - prefix2[static_cast<std::size_t>(start)];
        double mean = s / h;
        double var = (s2 - s * mean) / (h - 1);
        if (var < best_var) {
            best_var = var;
            best_mean = mean;
        }
    }
    Candidate c;
    c.mean = Eigen::VectorXd::Constant(1, best_mean);
    c.cov = Eigen::MatrixXd::Constant(1, 1, best_var);
    c.log_det = best_var > 0 ? std::log(best_var) : kLogDetFloor;
    return c;
}

}  // namespace

McdEstimate fast_mcd(const Eigen::MatrixXd& X, double coverage, std::mt19937_64& rng,
                     int n_subsets, int max_csteps) {
    McdEstimate out;
    const int m = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    int h = std::max(static_cast<int>(std::ceil(coverage * m)), p + 1);
    if (h > m || m < 2) return out;

    Candidate best;
    if (h == m) {
        std::vector<int> all(static_cast<std::size_t>(m));
        std::iota(all.begin(), all.end(), 0);
        best = fit_subset(X, all);
        best.log_det = log_det_pd(best.cov);
        if (!std::isfinite(best.log_det)) return out;
    } else if (p == 1) {
        best = univariate_mcd(X, h);
        if (best.cov(0, 0) <= 0) return out;
    } else {
        std::uniform_int_distribution<int> pick(0, m - 1);
        std::vector<Candidate> pool;
        for (int s = 0; s < n_subsets; ++s) {
            std::vector<int> rows;
            std::vector<char> used(static_cast<std::size_t>(m), 0);
            while (static_cast<int>(rows.size()) < p + 1) {
                int r = pick(rng);
                if (!used[static_cast<std::size_t>(r)]) {
                    used[static_cast<std::size_t>(r)] = 1;
                    rows.push_back(r);
                }
            }
            Candidate c = fit_subset(X, rows);
            c.log_det = log_det_pd(c.cov);
            // Grow a singular seed subset until it spans the space.
            while (!std::isfinite(c.log_det) && static_cast<int>(rows.size()) < m) {
                int r = pick(rng);
                if (used[static_cast<std::size_t>(r)]) continue;
                used[static_cast<std::size_t>(r)] = 1;
                rows.push_back(r);
                c = fit_subset(X, rows);
                c.log_det = log_det_pd(c.cov);
            }
            if (!std::isfinite(c.log_det)) continue;
            bool alive = true;
            for (int step = 0; step < 2 && alive; ++step) alive = c_step(X, c, h);
            if (alive) pool.push_back(std::move(c));
        }
        if (pool.empty()) return out;
        std::sort(pool.begin(), pool.end(),
                  [](const Candidate& a, const Candidate& b) { return a.log_det < b.log_det; });
        pool.resize(std::min<std::size_t>(pool.size(), 10));

        best.log_det = std::numeric_limits<double>::infinity();
        for (auto& c : pool) {
            double prev = c.log_det;
            for (int step = 0; step < max_csteps; ++step) {
                if (!c_step(X, c, h)) break;
                if (prev - c.log_det < 1e-12) break;
                prev = c.log_det;
            }
            if (std::isfinite(c.log_det) && c.log_det < best.log_det) best = c;
        }
        if (!std::isfinite(best.log_det)) return out;
    }

    // Consistency at the raw coverage, then a reweighting step with its own
    // consistency factor (Croux & Haesbroeck).
    double alpha = static_cast<double>(h) / m;
    double c_raw =
        alpha < 1.0 ? alpha / chi2_cdf(chi2_quantile(alpha, p), static_cast<double>(p) + 2.0) : 1.0;
    Eigen::MatrixXd scatter = best.cov * c_raw;

    Eigen::LLT<Eigen::MatrixXd> llt(scatter);
    if (llt.info() != Eigen::Success) return out;
    const double w_cut = chi2_quantile(0.975, p);
    std::vector<int> kept;
    for (int i = 0; i < m; ++i) {
        Eigen::VectorXd d = X.row(i).transpose() - best.mean;
        if (llt.matrixL().solve(d).squaredNorm() <= w_cut) kept.push_back(i);
    }
    if (static_cast<int>(kept.size()) <= p) return out;
    Candidate rw = fit_subset(X, kept);
    double c_rw = 0.975 / chi2_cdf(w_cut, static_cast<double>(p) + 2.0);
    rw.cov *= c_rw;
    if (!std::isfinite(log_det_pd(rw.cov))) return out;

    out.ok = true;
    out.location = std::move(rw.mean);
    out.scatter = std::move(rw.cov);
    return out;
}

}  // namespace owdmon
