#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "owdmon/matrix.hpp"

using namespace owdmon;

namespace {

ClientSeries client(const char* ip, std::vector<std::pair<double, double>> samples, int poll = 6) {
    ClientSeries s;
    s.client_ip = *IpAddr::parse(ip);
    s.direction = Direction::c2s;
    s.tightly_synced = true;
    for (auto [ts, owd] : samples) s.samples.push_back({ts, owd});
    s.poll_values.assign(std::max<std::size_t>(1, samples.size()), poll);
    return s;
}

PrefixCluster cluster_of(std::vector<ClientSeries> clients) {
    PrefixCluster c;
    c.prefix = Prefix::cluster_of(clients.front().client_ip);
    c.direction = Direction::c2s;
    c.server_id = "S1";
    c.clients = std::move(clients);
    return c;
}

// Independent per-bin max/fill oracle: dense tiling, per-sample max, all-NA
// row removal, then per-client raw-minimum fill.
struct OracleMatrix {
    std::vector<std::int64_t> bin_starts;
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> filled;
};

OracleMatrix oracle_build(const std::vector<ClientSeries>& clients, std::int64_t w0,
                          std::int64_t w1) {
    std::vector<int> polls;
    for (const auto& c : clients)
        polls.push_back(*std::min_element(c.poll_values.begin(), c.poll_values.end()));
    std::sort(polls.begin(), polls.end());
    int t = polls[(polls.size() - 1) / 2];
    std::int64_t width = std::int64_t{1} << t;

    std::vector<const ClientSeries*> active;
    std::vector<double> minimum;
    for (const auto& c : clients) {
        double lo = std::numeric_limits<double>::infinity();
        for (const auto& s : c.samples)
            if (s.timestamp >= static_cast<double>(w0) && s.timestamp < static_cast<double>(w1))
                lo = std::min(lo, s.owd);
        if (std::isfinite(lo)) {
            active.push_back(&c);
            minimum.push_back(lo);
        }
    }

    std::size_t n_bins = static_cast<std::size_t>(
        (w1 - w0 + width - 1) / width);
    OracleMatrix out;
    constexpr double kNa = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t b = 0; b < n_bins; ++b) {
        std::vector<double> row(active.size(), kNa);
        for (std::size_t c = 0; c < active.size(); ++c) {
            for (const auto& s : active[c]->samples) {
                if (s.timestamp < static_cast<double>(w0) ||
                    s.timestamp >= static_cast<double>(w1))
                    continue;
                auto bin = static_cast<std::size_t>((s.timestamp - w0) / width);
                if (bin != b) continue;
                if (std::isnan(row[c]) || s.owd > row[c]) row[c] = s.owd;
            }
        }
        bool all_na = std::all_of(row.begin(), row.end(), [](double v) { return std::isnan(v); });
        if (all_na) continue;
        std::vector<bool> fill(active.size(), false);
        for (std::size_t c = 0; c < active.size(); ++c) {
            if (std::isnan(row[c])) {
                row[c] = minimum[c];
                fill[c] = true;
            }
        }
        out.bin_starts.push_back(w0 + static_cast<std::int64_t>(b) * width);
        out.rows.push_back(std::move(row));
        out.filled.push_back(std::move(fill));
    }
    return out;
}

}  // namespace

TEST_CASE("median of minimum polls sets the bin width") {
    auto c1 = client("10.0.0.1", {{1000, 0.01}}, 4);
    auto c2 = client("10.0.0.2", {{1000, 0.01}}, 6);
    auto c3 = client("10.0.0.3", {{1000, 0.01}}, 6);
    auto result = build_matrix(cluster_of({c1, c2, c3}), 960, 1600);
    REQUIRE(result.matrix.has_value());
    CHECK(result.matrix->bin_width == 64);

    // Even count takes the lower median.
    auto c4 = client("10.0.0.4", {{1000, 0.01}}, 8);
    auto even = build_matrix(cluster_of({c1, c2, c3, c4}), 960, 1600);
    REQUIRE(even.matrix.has_value());
    CHECK(even.matrix->bin_width == 64);
}

TEST_CASE("a bin retains the maximum OWD of its samples") {
    auto c1 = client("10.0.0.1", {{1000, 0.003}, {1010, 0.005}});
    auto c2 = client("10.0.0.2", {{1001, 0.004}});
    auto result = build_matrix(cluster_of({c1, c2}), 960, 1024);
    REQUIRE(result.matrix.has_value());
    CHECK(result.matrix->values(0, 0) == 0.005);
    CHECK(result.matrix->values(0, 1) == 0.004);
    CHECK(!result.matrix->na_mask(0, 0));
}

TEST_CASE("missing bins are filled with the client's minimum OWD") {
    auto c1 = client("10.0.0.1", {{1000, 0.0021}, {1070, 0.0035}, {1500, 0.0030}});
    auto c2 = client("10.0.0.2", {{1000, 0.004}, {1070, 0.004}, {1140, 0.004},
                                  {1200, 0.004}, {1270, 0.004}, {1340, 0.004},
                                  {1400, 0.004}, {1470, 0.004}});
    auto result = build_matrix(cluster_of({c1, c2}), 960, 1472);
    REQUIRE(result.matrix.has_value());
    const auto& m = *result.matrix;
    // Client 1 is absent from several bins; the filled value is its raw
    // sample minimum, 0.0021.
    bool saw_fill = false;
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        if (m.na_mask(r, 0)) {
            saw_fill = true;
            CHECK(m.values(r, 0) == 0.0021);
        }
    }
    CHECK(saw_fill);
}

TEST_CASE("windows shorter than one bin are an error") {
    auto c1 = client("10.0.0.1", {{1000, 0.01}});
    auto c2 = client("10.0.0.2", {{1000, 0.01}});
    CHECK_THROWS_AS((void)build_matrix(cluster_of({c1, c2}), 1000, 1030), std::invalid_argument);
}

TEST_CASE("clusters with no samples in the window are skipped") {
    auto c1 = client("10.0.0.1", {{10, 0.01}});
    auto c2 = client("10.0.0.2", {{20, 0.01}});
    auto result = build_matrix(cluster_of({c1, c2}), 1000, 2000);
    CHECK(!result.matrix.has_value());
    CHECK(result.skip == SkipReason::too_few_clients);
}

TEST_CASE("all-NA rows are removed and never appear filled") {
    // Samples only in bins 0 and 3 of a 4-bin window.
    auto c1 = client("10.0.0.1", {{1000, 0.01}, {1200, 0.02}});
    auto c2 = client("10.0.0.2", {{1010, 0.01}});
    auto result = build_matrix(cluster_of({c1, c2}), 960, 1216);
    REQUIRE(result.matrix.has_value());
    const auto& m = *result.matrix;
    CHECK(m.values.rows() == 2);
    CHECK(m.bin_index == std::vector<std::size_t>{0, 3});
    // No retained row consists solely of filled values.
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        bool all_fill = true;
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) all_fill &= m.na_mask(r, c);
        CHECK(!all_fill);
    }
}

TEST_CASE("matrix equals the brute-force oracle on 200 random clusters") {
    std::mt19937_64 rng(20190201);
    std::uniform_int_distribution<int> n_clients(2, 5);
    std::uniform_int_distribution<int> poll(2, 6);
    std::uniform_int_distribution<int> n_samples(0, 60);
    std::uniform_real_distribution<double> owd(0.001, 0.2);

    for (int trial = 0; trial < 200; ++trial) {
        std::int64_t w0 = 10000;
        // Sized in units of the largest possible bin so any poll median fits.
        std::int64_t w1 = w0 + 64 * (1 + static_cast<int>(rng() % 50));
        int n = n_clients(rng);
        std::vector<ClientSeries> clients;
        for (int c = 0; c < n; ++c) {
            std::vector<std::pair<double, double>> samples;
            int count = n_samples(rng);
            for (int s = 0; s < count; ++s) {
                double ts = static_cast<double>(w0) +
                            (static_cast<double>(rng() % 100000) / 100000.0) *
                                static_cast<double>(w1 - w0) * 1.05;  // some outside
                samples.emplace_back(ts, owd(rng));
            }
            clients.push_back(client(("10.0.0." + std::to_string(c + 1)).c_str(), samples,
                                     poll(rng)));
        }
        auto cluster = cluster_of(clients);
        OracleMatrix expected = oracle_build(cluster.clients, w0, w1);
        auto result = build_matrix(cluster, w0, w1);

        std::size_t active = 0;
        for (const auto& c : cluster.clients) {
            for (const auto& s : c.samples)
                if (s.timestamp >= static_cast<double>(w0) &&
                    s.timestamp < static_cast<double>(w1)) {
                    ++active;
                    break;
                }
        }
        if (active < 2) {
            CHECK(!result.matrix.has_value());
            continue;
        }
        if (expected.rows.empty()) {
            CHECK(!result.matrix.has_value());
            CHECK(result.skip == SkipReason::all_rows_na);
            continue;
        }
        REQUIRE(result.matrix.has_value());
        const auto& m = *result.matrix;
        REQUIRE(static_cast<std::size_t>(m.values.rows()) == expected.rows.size());
        REQUIRE(static_cast<std::size_t>(m.values.cols()) == expected.rows[0].size());
        for (std::size_t r = 0; r < expected.rows.size(); ++r) {
            CHECK(m.bin_starts[r] == expected.bin_starts[r]);
            for (std::size_t c = 0; c < expected.rows[r].size(); ++c) {
                CHECK(m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) ==
                      expected.rows[r][c]);
                CHECK(m.na_mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) ==
                      expected.filled[r][c]);
            }
        }
    }
}

TEST_CASE("matrix max rule dominates every sample in the bin") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> owd(0.001, 0.2);
    std::vector<ClientSeries> clients;
    for (int c = 0; c < 3; ++c) {
        std::vector<std::pair<double, double>> samples;
        for (int s = 0; s < 40; ++s)
            samples.emplace_back(1000.0 + static_cast<double>(rng() % 640), owd(rng));
        clients.push_back(client(("10.0.0." + std::to_string(c + 1)).c_str(), samples));
    }
    auto cluster = cluster_of(clients);
    auto result = build_matrix(cluster, 960, 1600);
    REQUIRE(result.matrix.has_value());
    const auto& m = *result.matrix;
    for (std::size_t c = 0; c < cluster.clients.size(); ++c) {
        // Columns follow sorted client order inside the cluster.
        std::size_t col = 0;
        for (; col < m.client_order.size(); ++col)
            if (m.client_order[col] == cluster.clients[c].client_ip) break;
        for (const auto& s : cluster.clients[c].samples) {
            if (s.timestamp < 960 || s.timestamp >= 1600) continue;
            auto bin = static_cast<std::size_t>((s.timestamp - 960) / m.bin_width);
            auto row = std::find(m.bin_index.begin(), m.bin_index.end(), bin);
            REQUIRE(row != m.bin_index.end());
            auto r = static_cast<Eigen::Index>(row - m.bin_index.begin());
            CHECK(m.values(r, static_cast<Eigen::Index>(col)) >= s.owd);
        }
    }
}

TEST_CASE("select_top_k") {
    SUBCASE("two identical columns collapse to one component") {
        auto c1 = client("10.0.0.1", {{1000, 0.01}, {1064, 0.02}, {1128, 0.03}, {1192, 0.015}});
        auto c2 = client("10.0.0.2", {{1000, 0.01}, {1064, 0.02}, {1128, 0.03}, {1192, 0.015}});
        auto result = build_matrix(cluster_of({c1, c2}), 960, 1216);
        REQUIRE(result.matrix.has_value());
        auto k = select_top_k(*result.matrix);
        REQUIRE(k.has_value());
        CHECK(*k == 1);
    }
    SUBCASE("isotropic 2-column noise keeps both components") {
        std::mt19937_64 rng(1234);
        std::normal_distribution<double> noise(0.05, 0.01);
        std::vector<std::pair<double, double>> s1, s2;
        for (int i = 0; i < 200; ++i) {
            s1.emplace_back(1000.0 + 64.0 * i, noise(rng));
            s2.emplace_back(1000.0 + 64.0 * i, noise(rng));
        }
        auto result =
            build_matrix(cluster_of({client("10.0.0.1", s1), client("10.0.0.2", s2)}), 960,
                         960 + 64 * 202);
        REQUIRE(result.matrix.has_value());

        // Independent oracle: closed-form eigenvalues of the 2x2 covariance.
        Eigen::MatrixXd z = standardize_columns(result.matrix->values);
        Eigen::MatrixXd cov = z.transpose() * z / static_cast<double>(z.rows() - 1);
        double tr = cov(0, 0) + cov(1, 1);
        double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
        double disc = std::sqrt(tr * tr / 4.0 - det);
        double l1 = tr / 2.0 + disc, l2 = tr / 2.0 - disc;
        CHECK(100.0 * l1 / (l1 + l2) > 5.0);
        CHECK(100.0 * l2 / (l1 + l2) > 5.0);

        auto k = select_top_k(*result.matrix);
        REQUIRE(k.has_value());
        CHECK(*k == 2);
    }
    SUBCASE("constant matrix is degenerate and skipped") {
        auto c1 = client("10.0.0.1", {{1000, 0.01}, {1064, 0.01}, {1128, 0.01}});
        auto c2 = client("10.0.0.2", {{1000, 0.01}, {1064, 0.01}, {1128, 0.01}});
        auto result = build_matrix(cluster_of({c1, c2}), 960, 1216);
        REQUIRE(result.matrix.has_value());
        CHECK(!select_top_k(*result.matrix).has_value());
    }
}

TEST_CASE("matrix details round trip through the interchange file") {
    auto c1 = client("10.0.0.1", {{1000, 0.0021}, {1070, 0.0035}, {1500, 0.0030}});
    auto c2 = client("10.0.0.2", {{1000, 0.004}, {1200, 0.0045}, {1470, 0.004}});
    auto result = build_matrix(cluster_of({c1, c2}), 960, 1472);
    REQUIRE(result.matrix.has_value());

    auto path = std::filesystem::temp_directory_path() / "owdmon-matrix-details.txt";
    write_matrix_details({*result.matrix}, path.string());
    auto back = read_matrix_details(path.string());
    std::filesystem::remove(path);

    REQUIRE(back.size() == 1);
    const auto& a = *result.matrix;
    const auto& b = back[0];
    CHECK(a.prefix == b.prefix);
    CHECK(a.direction == b.direction);
    CHECK(a.bin_width == b.bin_width);
    CHECK(a.bin_starts == b.bin_starts);
    CHECK(a.bin_index == b.bin_index);
    REQUIRE(a.values.rows() == b.values.rows());
    REQUIRE(a.values.cols() == b.values.cols());
    for (Eigen::Index r = 0; r < a.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.values.cols(); ++c) {
            CHECK(a.values(r, c) == doctest::Approx(b.values(r, c)).epsilon(1e-9));
            CHECK(a.na_mask(r, c) == b.na_mask(r, c));
        }
    }
    CHECK(a.client_order == b.client_order);
}
