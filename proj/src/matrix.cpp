#include "owdmon/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "owdmon/util.hpp"

namespace owdmon {

const char* to_string(SkipReason r) {
    switch (r) {
        case SkipReason::none: return "none";
        case SkipReason::too_few_clients: return "too_few_clients";
        case SkipReason::all_rows_na: return "all_rows_na";
        case SkipReason::zero_variance: return "zero_variance";
        case SkipReason::too_few_bins: return "too_few_bins";
        case SkipReason::decomposition_failed: return "decomposition_failed";
    }
    return "?";
}

MatrixBuildResult build_matrix(const PrefixCluster& cluster, std::int64_t window_start,
                               std::int64_t window_end) {
    MatrixBuildResult result;

    std::vector<double> least_polls;
    for (const auto& client : cluster.clients) {
        if (client.poll_values.empty())
            throw std::invalid_argument("client without poll values: " + client.client_ip.to_string());
        least_polls.push_back(
            *std::min_element(client.poll_values.begin(), client.poll_values.end()));
    }
    int t = static_cast<int>(lower_median(std::move(least_polls)));
    std::int64_t width = std::int64_t{1} << t;
    if (window_end - window_start < width)
        throw std::invalid_argument("processing window shorter than one bin");

    const auto span = static_cast<std::uint64_t>(window_end - window_start);
    const std::size_t n_bins = static_cast<std::size_t>((span + static_cast<std::uint64_t>(width) - 1) /
                                                        static_cast<std::uint64_t>(width));

    // Clients with no samples inside the window contribute no column.
    struct ClientCells {
        const ClientSeries* series;
        double min_owd;
    };
    std::vector<ClientCells> active;
    for (const auto& client : cluster.clients) {
        double min_owd = std::numeric_limits<double>::infinity();
        bool any = false;
        for (const auto& s : client.samples) {
            if (s.timestamp < static_cast<double>(window_start) ||
                s.timestamp >= static_cast<double>(window_end))
                continue;
            any = true;
            min_owd = std::min(min_owd, s.owd);
        }
        if (any) active.push_back({&client, min_owd});
    }
    if (active.size() < 2) {
        result.skip = SkipReason::too_few_clients;
        return result;
    }
    const std::size_t n = active.size();

    constexpr double kNa = std::numeric_limits<double>::quiet_NaN();
    Eigen::MatrixXd cells = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n_bins),
                                                      static_cast<Eigen::Index>(n), kNa);
    for (std::size_t ci = 0; ci < n; ++ci) {
        for (const auto& s : active[ci].series->samples) {
            if (s.timestamp < static_cast<double>(window_start) ||
                s.timestamp >= static_cast<double>(window_end))
                continue;
            auto bin = static_cast<Eigen::Index>(
                (s.timestamp - static_cast<double>(window_start)) / static_cast<double>(width));
            double& cell = cells(bin, static_cast<Eigen::Index>(ci));
            if (std::isnan(cell) || s.owd > cell) cell = s.owd;
        }
    }

    ClusterMatrix m;
    m.prefix = cluster.prefix;
    m.direction = cluster.direction;
    m.server_id = cluster.server_id;
    m.bin_width = width;
    for (std::size_t b = 0; b < n_bins; ++b) {
        bool all_na = true;
        for (std::size_t ci = 0; ci < n && all_na; ++ci)
            all_na = std::isnan(cells(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(ci)));
        if (all_na) continue;
        m.bin_index.push_back(b);
        m.bin_starts.push_back(window_start + static_cast<std::int64_t>(b) * width);
    }
    if (m.bin_index.empty()) {
        result.skip = SkipReason::all_rows_na;
        return result;
    }

    const auto rows = static_cast<Eigen::Index>(m.bin_index.size());
    m.values.resize(rows, static_cast<Eigen::Index>(n));
    m.na_mask.resize(rows, static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < rows; ++r) {
        auto src = static_cast<Eigen::Index>(m.bin_index[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(n); ++c) {
            double v = cells(src, c);
            bool na = std::isnan(v);
            m.na_mask(r, c) = na;
            m.values(r, c) = na ? active[static_cast<std::size_t>(c)].min_owd : v;
        }
    }
    for (const auto& a : active) m.client_order.push_back(a.series->client_ip);

    result.matrix = std::move(m);
    return result;
}

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& values) {
    const Eigen::Index rows = values.rows(), cols = values.cols();
    Eigen::MatrixXd z(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        double mean = values.col(c).mean();
        double var = rows > 1 ? (values.col(c).array() - mean).square().sum() /
                                    static_cast<double>(rows - 1)
                              : 0.0;
        if (var > 0) {
            z.col(c) = (values.col(c).array() - mean) / std::sqrt(var);
        } else {
            z.col(c).setZero();
        }
    }
    return z;
}

std::optional<int> select_top_k(const ClusterMatrix& matrix, double variance_threshold_pct) {
    if (matrix.values.rows() < 2) return std::nullopt;
    Eigen::MatrixXd z = standardize_columns(matrix.values);
    Eigen::MatrixXd cov = z.transpose() * z / static_cast<double>(z.rows() - 1);
    double total = cov.trace();
    if (!(total > 0)) return std::nullopt;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) return std::nullopt;
    int k = 0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
        double pct = 100.0 * eig.eigenvalues()(i) / total;
        if (pct > variance_threshold_pct) ++k;
    }
    return std::max(k, 1);
}

void write_matrix_details(const std::vector<ClusterMatrix>& matrices, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write matrix details: " + path);
    for (const auto& m : matrices) {
        out << "cluster," << m.prefix.to_string() << ',' << to_string(m.direction) << ','
            << m.bin_width << ',' << m.values.rows() << ',' << m.values.cols() << '\n';
        out << "clients";
        for (const auto& ip : m.client_order) out << ',' << ip.to_string();
        out << '\n';
        for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
            out << "row," << m.bin_starts[static_cast<std::size_t>(r)] << ','
                << m.bin_index[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < m.values.cols(); ++c)
                out << ',' << format_fixed(m.values(r, c), 9);
            out << '\n';
            out << "fill," << m.bin_starts[static_cast<std::size_t>(r)] << ','
                << m.bin_index[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < m.values.cols(); ++c)
                out << ',' << (m.na_mask(r, c) ? 1 : 0);
            out << '\n';
        }
    }
}

std::vector<ClusterMatrix> read_matrix_details(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open matrix details: " + path);
    std::vector<ClusterMatrix> out;
    std::string line;
    Eigen::Index row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f[0] == "cluster") {
            if (f.size() != 6) throw std::runtime_error("bad cluster line: " + line);
            ClusterMatrix m;
            m.prefix = Prefix::parse(f[1]).value();
            m.direction = direction_from_string(f[2]);
            m.bin_width = parse_int64(f[3]).value();
            auto rows = parse_int64(f[4]).value();
            auto cols = parse_int64(f[5]).value();
            m.values.resize(rows, cols);
            m.na_mask.resize(rows, cols);
            out.push_back(std::move(m));
            row = 0;
        } else if (f[0] == "clients") {
            for (std::size_t i = 1; i < f.size(); ++i)
                out.back().client_order.push_back(IpAddr::parse(f[i]).value());
        } else if (f[0] == "row") {
            auto& m = out.back();
            m.bin_starts.push_back(parse_int64(f[1]).value());
            m.bin_index.push_back(static_cast<std::size_t>(parse_int64(f[2]).value()));
            for (Eigen::Index c = 0; c < m.values.cols(); ++c)
                m.values(row, c) = parse_double(f[static_cast<std::size_t>(c) + 3]).value();
        } else if (f[0] == "fill") {
            auto& m = out.back();
            for (Eigen::Index c = 0; c < m.values.cols(); ++c)
                m.na_mask(row, c) = f[static_cast<std::size_t>(c) + 3] == "1";
            ++row;
        } else {
            throw std::runtime_error("unknown matrix details line: " + line);
        }
    }
    return out;
}

}  // namespace owdmon
