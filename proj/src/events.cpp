#include "owdmon/events.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "owdmon/util.hpp"

namespace owdmon {

const char* to_string(EventKind k) {
    return k == EventKind::event ? "event" : "single_spike";
}

EventKind event_kind_from_string(std::string_view s) {
    if (s == "event") return EventKind::event;
    if (s == "single_spike") return EventKind::single_spike;
    throw std::invalid_argument("unknown event kind: " + std::string(s));
}

char to_char(ConfidenceClass c) {
    switch (c) {
        case ConfidenceClass::A: return 'A';
        case ConfidenceClass::B: return 'B';
        case ConfidenceClass::C: return 'C';
        case ConfidenceClass::D: return 'D';
    }
    return '?';
}

ConfidenceClass confidence_from_char(char c) {
    switch (c) {
        case 'A': return ConfidenceClass::A;
        case 'B': return ConfidenceClass::B;
        case 'C': return ConfidenceClass::C;
        case 'D': return ConfidenceClass::D;
    }
    throw std::invalid_argument(std::string("unknown class: ") + c);
}

bool class_better(ConfidenceClass a, ConfidenceClass b) {
    return static_cast<int>(a) < static_cast<int>(b);
}

std::vector<FlagRun> extract_flag_runs(const std::vector<bool>& outlier,
                                       const std::vector<std::size_t>& bin_index,
                                       bool bridge_na_gaps) {
    const std::size_t max_gap = bridge_na_gaps ? 2 : 1;
    std::vector<FlagRun> runs;
    std::size_t i = 0;
    while (i < outlier.size()) {
        if (!outlier[i]) {
            ++i;
            continue;
        }
        FlagRun run{i, i};
        while (run.last_row + 1 < outlier.size() && outlier[run.last_row + 1] &&
               bin_index[run.last_row + 1] - bin_index[run.last_row] <= max_gap) {
            ++run.last_row;
        }
        runs.push_back(run);
        i = run.last_row + 1;
    }
    return runs;
}

ConfidenceClass classify_event(const FlagRun& run, const std::vector<bool>& outlier,
                               const std::vector<bool>& z_mask) {
    std::size_t rpca_bins = 0, corroborated = 0;
    for (std::size_t r = run.first_row; r <= run.last_row; ++r) {
        if (!outlier[r]) continue;
        ++rpca_bins;
        if (z_mask[r]) ++corroborated;
    }
    if (rpca_bins == 0) return ConfidenceClass::D;
    double correlation = static_cast<double>(corroborated) / static_cast<double>(rpca_bins);
    if (correlation > 0.75) return ConfidenceClass::A;
    if (correlation > 0.5) return ConfidenceClass::B;
    if (correlation > 0.25) return ConfidenceClass::C;
    return ConfidenceClass::D;
}

ClusterDetection detect_cluster(const PrefixCluster& cluster, std::int64_t window_start,
                                std::int64_t window_end, const DetectorParams& params) {
    ClusterDetection out;
    MatrixBuildResult built = build_matrix(cluster, window_start, window_end);
    if (!built.matrix) {
        out.skip = built.skip;
        return out;
    }
    out.matrix = std::move(built.matrix);
    const ClusterMatrix& m = *out.matrix;

    auto k = select_top_k(m, params.variance_threshold_pct);
    if (!k) {
        out.skip = m.values.rows() < 2 ? SkipReason::too_few_bins : SkipReason::zero_variance;
        return out;
    }

    // Per-cluster seed keyed by identity, not processing order.
    std::uint64_t cluster_seed = params.seed;
    cluster_seed = fnv1a(m.prefix.to_string(), cluster_seed);
    cluster_seed = fnv1a(to_string(m.direction), cluster_seed);

    Eigen::MatrixXd z = standardize_columns(m.values);
    auto flags = rpca_flags(z, *k, params, cluster_seed);
    if (!flags) {
        out.skip = SkipReason::decomposition_failed;
        return out;
    }
    out.path = flags->path;

    std::vector<bool> z_mask = zscore_outliers(m.values, params.z_threshold);
    auto runs = extract_flag_runs(flags->outlier, m.bin_index, params.bridge_na_gaps);
    for (const auto& run : runs) {
        ConfidenceClass cls = classify_event(run, flags->outlier, z_mask);
        if (cls == ConfidenceClass::D) {
            ++out.discarded_class_d;
            continue;
        }
        DetectedEvent ev;
        ev.prefix = m.prefix;
        ev.direction = m.direction;
        ev.server_id = m.server_id;
        ev.client_count = static_cast<int>(m.client_order.size());
        ev.start_epoch = m.bin_starts[run.first_row];
        ev.end_epoch = m.bin_starts[run.last_row] + m.bin_width;
        ev.kind = run.first_row == run.last_row ? EventKind::single_spike : EventKind::event;
        for (std::size_t r = run.first_row; r <= run.last_row; ++r)
            if (flags->outlier[r]) ev.outlier_bins.push_back(m.bin_index[r]);
        ev.confidence_class = cls;
        out.events.push_back(std::move(ev));
    }
    return out;
}

std::vector<ClusterDetection> detect_clusters(const std::vector<PrefixCluster>& clusters,
                                              std::int64_t window_start, std::int64_t window_end,
                                              const DetectorParams& params, int parallelism) {
    std::vector<ClusterDetection> results(clusters.size());
    int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(clusters.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < clusters.size(); ++i)
            results[i] = detect_cluster(clusters[i], window_start, window_end, params);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= clusters.size()) break;
                    results[i] = detect_cluster(clusters[i], window_start, window_end, params);
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& r : results) sort_events_canonical(r.events);
    return results;
}

void sort_events_canonical(std::vector<DetectedEvent>& events) {
    std::sort(events.begin(), events.end(), [](const DetectedEvent& a, const DetectedEvent& b) {
        if (a.prefix != b.prefix) return a.prefix < b.prefix;
        if (a.start_epoch != b.start_epoch) return a.start_epoch < b.start_epoch;
        return a.end_epoch < b.end_epoch;
    });
}

void write_event_details(const std::vector<DetectedEvent>& events, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write event details: " + path);
    out << "prefix,client_count,start_epoch,end_epoch,class,kind\n";
    for (const auto& ev : events) {
        out << ev.prefix.to_string() << ',' << ev.client_count << ',' << ev.start_epoch << ','
            << ev.end_epoch << ',' << to_char(ev.confidence_class) << ',' << to_string(ev.kind)
            << '\n';
    }
}

std::vector<DetectedEvent> read_event_details(const std::string& path, const std::string& server_id,
                                              Direction direction) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open event details: " + path);
    std::vector<DetectedEvent> out;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != 6) throw std::runtime_error("bad event details line: " + line);
        DetectedEvent ev;
        ev.prefix = Prefix::parse(f[0]).value();
        ev.client_count = static_cast<int>(parse_int64(f[1]).value());
        ev.start_epoch = parse_int64(f[2]).value();
        ev.end_epoch = parse_int64(f[3]).value();
        ev.confidence_class = confidence_from_char(f[4][0]);
        ev.kind = event_kind_from_string(f[5]);
        ev.server_id = server_id;
        ev.direction = direction;
        out.push_back(std::move(ev));
    }
    return out;
}

}  // namespace owdmon
