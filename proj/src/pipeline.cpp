#include "owdmon/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

#include "owdmon/consolidate.hpp"
#include "owdmon/events.hpp"
#include "owdmon/gaps.hpp"
#include "owdmon/geo.hpp"
#include "owdmon/match.hpp"
#include "owdmon/pcap.hpp"
#include "owdmon/report.hpp"
#include "owdmon/synth.hpp"
#include "owdmon/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace owdmon {

namespace {

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute() || base_dir.empty()) return path;
    return (fs::path(base_dir) / path).string();
}

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    return from_json_text(read_file(path), fs::path(path).parent_path().string());
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text, const std::string& base_dir) {
    json j = json::parse(text);
    PipelineConfig c;
    c.seed = j.value("seed", std::uint64_t{1});
    c.epoch_length = j.value("epoch_length", std::int64_t{3600});
    c.detection_window = j.value("detection_window", std::int64_t{86400});
    if (j.contains("window_start")) c.window_start = j["window_start"].get<std::int64_t>();
    c.parallelism = j.value("parallelism", 0);
    c.output_root = resolve_path(base_dir, j.value("output_root", std::string("out")));
    if (j.contains("servers")) {
        for (const auto& s : j["servers"]) {
            ServerSpec spec;
            spec.id = s.at("id").get<std::string>();
            auto ip = IpAddr::parse(s.at("ip").get<std::string>());
            if (ip) spec.ip = *ip;
            spec.trace_dir = resolve_path(base_dir, s.value("trace_dir", std::string()));
            c.servers.push_back(std::move(spec));
        }
    }
    c.synth_scenario = resolve_path(base_dir, j.value("synth_scenario", std::string()));
    if (j.contains("detector")) {
        const auto& d = j["detector"];
        c.detector.coverage = d.value("coverage", c.detector.coverage);
        c.detector.cutoff_quantile = d.value("score_cutoff_q", c.detector.cutoff_quantile);
        c.detector.variance_threshold_pct =
            d.value("variance_threshold_pct", c.detector.variance_threshold_pct);
        c.detector.z_threshold = d.value("z_threshold", c.detector.z_threshold);
        c.detector.mcd_subsets = d.value("mcd_subsets", c.detector.mcd_subsets);
        c.detector.bridge_na_gaps = d.value("bridge_na_gaps", c.detector.bridge_na_gaps);
        c.tight_sync.min_samples = d.value("min_samples", c.tight_sync.min_samples);
        c.tight_sync.mad_spacing_ratio =
            d.value("mad_spacing_ratio", c.tight_sync.mad_spacing_ratio);
    }
    c.detector.seed = c.seed;
    if (j.contains("prefix_tables")) {
        const auto& t = j["prefix_tables"];
        c.caida_table = resolve_path(base_dir, t.value("caida", std::string()));
        c.cymru_table = resolve_path(base_dir, t.value("cymru", std::string()));
        c.as_names = resolve_path(base_dir, t.value("as_names", std::string()));
    }
    c.external_events = resolve_path(base_dir, j.value("external_events", std::string()));
    c.match_window = j.value("match_window", std::int64_t{3600});
    c.geo_table = resolve_path(base_dir, j.value("geo_table", std::string()));
    return c;
}

std::vector<std::string> PipelineConfig::validate() const {
    std::vector<std::string> problems;
    if (epoch_length <= 0) problems.push_back("epoch_length must be positive");
    if (detection_window <= 0) problems.push_back("detection_window must be positive");
    if (epoch_length > 0 && detection_window > 0 && detection_window % epoch_length != 0)
        problems.push_back("epoch_length must divide detection_window");
    if (detector.coverage <= 0.5 || detector.coverage > 1.0)
        problems.push_back("detector.coverage must lie in (0.5, 1]");
    if (detector.cutoff_quantile <= 0.5 || detector.cutoff_quantile >= 1.0)
        problems.push_back("detector.score_cutoff_q must lie in (0.5, 1)");
    if (detector.variance_threshold_pct < 0 || detector.variance_threshold_pct >= 100)
        problems.push_back("detector.variance_threshold_pct must lie in [0, 100)");
    if (match_window < 0) problems.push_back("match_window must be non-negative");
    if (parallelism < 0) problems.push_back("parallelism must be non-negative");
    if (servers.empty() && synth_scenario.empty())
        problems.push_back("configure servers and/or synth_scenario");
    std::set<std::string> ids;
    for (const auto& s : servers) {
        if (s.id.empty()) problems.push_back("server with empty id");
        if (!ids.insert(s.id).second) problems.push_back("duplicate server id: " + s.id);
        if (s.ip.is_zero()) problems.push_back("server " + s.id + " has no valid ip");
        if (!s.trace_dir.empty() && !fs::is_directory(s.trace_dir))
            problems.push_back("server " + s.id + " trace_dir missing: " + s.trace_dir);
    }
    auto check_file = [&](const std::string& path, const char* what) {
        if (!path.empty() && !fs::exists(path))
            problems.push_back(std::string(what) + " path missing: " + path);
    };
    check_file(synth_scenario, "synth_scenario");
    check_file(caida_table, "prefix_tables.caida");
    check_file(cymru_table, "prefix_tables.cymru");
    check_file(as_names, "prefix_tables.as_names");
    check_file(external_events, "external_events");
    check_file(geo_table, "geo_table");
    return problems;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    if (config_.parallelism == 0) {
        config_.parallelism = std::max(1u, std::thread::hardware_concurrency());
    }
}

std::string Pipeline::out_dir(const std::string& stage) const {
    return (fs::path(config_.output_root) / stage).string();
}

void Pipeline::write_manifest(const std::string& stage, const std::vector<std::string>& inputs,
                              const std::vector<std::string>& outputs,
                              const std::map<std::string, std::string>& parameters,
                              double wall_seconds) const {
    fs::create_directories(fs::path(config_.output_root) / "manifests");
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : parameters) params[k] = v;
    j["parameters"] = params;
    j["wall_time_seconds"] = wall_seconds;
    write_file((fs::path(config_.output_root) / "manifests" / (stage + ".json")).string(),
               j.dump(2) + "\n");
}

StageReport Pipeline::run_stage(const std::string& stage) {
    try {
        if (stage == "synth") return stage_synth();
        if (stage == "ingest") return stage_ingest();
        if (stage == "filter") return stage_filter();
        if (stage == "detect") return stage_detect();
        if (stage == "consolidate") return stage_consolidate();
        if (stage == "aggregate") return stage_aggregate();
        if (stage == "match") return stage_match();
        if (stage == "report") return stage_report();
        return {stage, kExitValidation, "unknown stage: " + stage};
    } catch (const std::exception& e) {
        return {stage, kExitRuntime, e.what()};
    }
}

StageReport Pipeline::run_all() {
    std::vector<std::string> plan;
    if (!config_.synth_scenario.empty()) plan.push_back("synth");
    bool any_traces = std::any_of(config_.servers.begin(), config_.servers.end(),
                                  [](const ServerSpec& s) { return !s.trace_dir.empty(); });
    if (any_traces) plan.push_back("ingest");
    plan.insert(plan.end(), {"filter", "detect", "consolidate"});
    if (!config_.caida_table.empty() || !config_.cymru_table.empty()) plan.push_back("aggregate");
    if (!config_.external_events.empty()) plan.push_back("match");
    plan.push_back("report");

    bool gaps = false;
    for (const auto& stage : plan) {
        StageReport r = run_stage(stage);
        if (r.status == kExitDataGaps) {
            gaps = true;
        } else if (r.status != kExitOk) {
            return r;
        }
    }
    if (gaps) return {"run-all", kExitDataGaps, "completed with data gaps"};
    return {"run-all", kExitOk, "completed"};
}

StageReport Pipeline::stage_synth() {
    StageTimer timer;
    if (config_.synth_scenario.empty())
        return {"synth", kExitValidation, "no synth_scenario configured"};
    SynthScenario scenario = SynthScenario::from_json_file(config_.synth_scenario);
    SynthOutput output = generate(scenario);

    fs::create_directories(out_dir("ingest"));
    fs::create_directories(out_dir("synth"));
    std::string csv_path = (fs::path(out_dir("ingest")) / (scenario.server_id + ".csv")).string();
    write_csv_file(output.records, csv_path);
    std::string truth_path = (fs::path(out_dir("synth")) / "ground_truth.json").string();
    write_file(truth_path, ground_truth_json(output.ground_truth));

    // Register the synthetic server so the filter stage can resolve its ip.
    std::string servers_path = (fs::path(out_dir("ingest")) / "servers.json").string();
    json servers = fs::exists(servers_path) ? json::parse(read_file(servers_path)) : json::object();
    servers[scenario.server_id] = scenario.server_ip.to_string();
    write_file(servers_path, servers.dump(2) + "\n");

    std::string volumes_path = (fs::path(out_dir("ingest")) / "volumes.csv").string();
    std::ofstream volumes(volumes_path, std::ios::binary | std::ios::trunc);
    volumes << "server_id,raw_bytes,csv_bytes\n";
    volumes << scenario.server_id << ",," << fs::file_size(csv_path) << '\n';
    volumes.close();

    write_manifest("synth", {config_.synth_scenario}, {csv_path, truth_path},
                   {{"seed", std::to_string(scenario.seed)},
                    {"records", std::to_string(output.records.size())}},
                   timer.seconds());
    return {"synth", kExitOk,
            "generated " + std::to_string(output.records.size()) + " records"};
}

StageReport Pipeline::stage_ingest() {
    StageTimer timer;
    std::vector<ServerSpec> with_traces;
    for (const auto& s : config_.servers)
        if (!s.trace_dir.empty()) with_traces.push_back(s);
    if (with_traces.empty()) return {"ingest", kExitValidation, "no servers with trace_dir"};
    if (!config_.window_start)
        return {"ingest", kExitValidation, "ingest from trace dirs requires window_start"};

    std::int64_t w0 = *config_.window_start;
    std::int64_t w1 = w0 + config_.detection_window;
    fs::create_directories(out_dir("ingest"));

    std::string servers_path = (fs::path(out_dir("ingest")) / "servers.json").string();
    json servers = fs::exists(servers_path) ? json::parse(read_file(servers_path)) : json::object();
    std::string volumes_path = (fs::path(out_dir("ingest")) / "volumes.csv").string();
    bool volumes_exists = fs::exists(volumes_path);
    std::ofstream volumes(volumes_path, volumes_exists ? std::ios::app : std::ios::trunc);
    if (!volumes_exists) volumes << "server_id,raw_bytes,csv_bytes\n";

    std::vector<std::string> outputs;
    std::uint64_t total_records = 0, total_rejected = 0, total_skipped = 0;
    for (const auto& server : with_traces) {
        std::vector<NtpPacketRecord> all;
        std::uint64_t raw_bytes = 0, skipped = 0;
        std::uint64_t offset = 0;
        for (std::int64_t epoch = w0; epoch < w1; epoch += config_.epoch_length) {
            fs::path dir = fs::path(server.trace_dir) / server.id / utc_month(epoch);
            fs::path file = dir / (std::to_string(epoch) + ".pcap");
            if (!fs::exists(file)) file = dir / (std::to_string(epoch) + ".pcap.gz");
            if (!fs::exists(file)) continue;
            raw_bytes += fs::file_size(file);
            PcapParseResult parsed = parse_pcap_file(file.string(), server.ip);
            skipped += parsed.skipped_short + parsed.truncated_packets;
            for (auto& r : parsed.records) {
                r.packet_number += offset;  // keep ordinals unique across epoch files
                all.push_back(std::move(r));
            }
            offset += parsed.total_packets;
        }
        FilterResult filtered = integrity_filter(all);
        std::string csv_path = (fs::path(out_dir("ingest")) / (server.id + ".csv")).string();
        write_csv_file(filtered.records, csv_path);
        outputs.push_back(csv_path);
        servers[server.id] = server.ip.to_string();
        volumes << server.id << ',' << raw_bytes << ',' << fs::file_size(csv_path) << '\n';
        total_records += filtered.records.size();
        total_rejected += filtered.rejected;
        total_skipped += skipped;
    }
    volumes.close();
    write_file(servers_path, servers.dump(2) + "\n");

    // Trace roots may differ per server; monitor each against its own root.
    std::vector<TraceManifest> manifests;
    for (const auto& s : with_traces) {
        auto m = gap_monitor(s.trace_dir, {s.id}, config_.epoch_length, w0, w1);
        manifests.insert(manifests.end(), m.begin(), m.end());
    }
    std::string gap_path = (fs::path(out_dir("ingest")) / "gap_report.jsonl").string();
    write_file(gap_path, gap_report_jsonl(manifests));
    outputs.push_back(gap_path);
    bool has_gaps = std::any_of(manifests.begin(), manifests.end(),
                                [](const TraceManifest& m) { return !m.missing_epochs.empty(); });

    write_manifest("ingest", {}, outputs,
                   {{"records", std::to_string(total_records)},
                    {"rejected", std::to_string(total_rejected)},
                    {"skipped_packets", std::to_string(total_skipped)},
                    {"window_start", std::to_string(w0)}},
                   timer.seconds());
    if (has_gaps) return {"ingest", kExitDataGaps, "trace gaps detected; see gap_report.jsonl"};
    return {"ingest", kExitOk, "ingested " + std::to_string(total_records) + " records"};
}

StageReport Pipeline::stage_filter() {
    StageTimer timer;
    std::string ingest_dir = out_dir("ingest");
    std::string servers_path = (fs::path(ingest_dir) / "servers.json").string();
    if (!fs::exists(servers_path))
        return {"filter", kExitRuntime, "missing upstream stage outputs: ingest"};
    json servers = json::parse(read_file(servers_path));

    // The processing window either comes from config or derives from the
    // earliest record, floored to the epoch grid.
    std::optional<std::int64_t> w0 = config_.window_start;
    std::vector<std::pair<std::string, std::string>> csvs;  // (server_id, path)
    for (const auto& [id, ip] : servers.items()) {
        std::string path = (fs::path(ingest_dir) / (id + ".csv")).string();
        if (fs::exists(path)) csvs.emplace_back(id, path);
    }
    if (csvs.empty()) return {"filter", kExitRuntime, "missing upstream stage outputs: ingest"};

    fs::create_directories(out_dir("filter"));
    std::string clients_path = (fs::path(out_dir("filter")) / "clients.csv").string();
    std::ofstream clients_csv(clients_path, std::ios::binary | std::ios::trunc);
    clients_csv << "server_id,clients,tightly_synced\n";

    std::uint64_t corrupted = 0, rejected = 0;
    std::vector<std::string> outputs;
    struct ServerData {
        std::string id;
        std::map<IpAddr, ClientStreams> streams;
    };
    std::vector<ServerData> parsed;
    for (const auto& [id, path] : csvs) {
        CsvReadResult read = read_csv_file(path);
        corrupted += read.corrupted;
        FilterResult filtered = integrity_filter(read.records);
        rejected += filtered.rejected;
        IpAddr server_ip = IpAddr::parse(servers.at(id).get<std::string>()).value();
        ServerData data;
        data.id = id;
        data.streams = extract_owd_streams(filtered.records, server_ip);
        if (!w0) {
            for (const auto& r : filtered.records) {
                std::int64_t floored =
                    static_cast<std::int64_t>(r.packet_timestamp / config_.epoch_length) *
                    config_.epoch_length;
                if (!w0 || floored < *w0) w0 = floored;
            }
        }
        parsed.push_back(std::move(data));
    }
    if (!w0) return {"filter", kExitRuntime, "no records to derive the processing window from"};
    std::int64_t w1 = *w0 + config_.detection_window;
    write_file((fs::path(out_dir("filter")) / "window.json").string(),
               json{{"window_start", *w0}, {"window_end", w1}}.dump(2) + "\n");

    std::size_t total_clusters = 0;
    for (auto& data : parsed) {
        std::size_t ts_count = 0;
        std::vector<ClientSeries> kept;
        for (auto& [ip, streams] : data.streams) {
            // Both directions derive from the same packets; sort once,
            // classify once, and drop or keep the client as a whole.
            sort_temporal(streams.c2s);
            sort_temporal(streams.s2c);
            streams.c2s.polling_class = classify_polling(streams.c2s.poll_values);
            streams.s2c.polling_class = streams.c2s.polling_class;
            bool ts = tight_sync_filter(streams.c2s, config_.tight_sync);
            streams.c2s.tightly_synced = ts;
            streams.s2c.tightly_synced = ts;
            if (!ts) continue;
            ++ts_count;
            kept.push_back(streams.c2s);
            kept.push_back(streams.s2c);
        }
        auto clusters = cluster_prefixes(kept);
        for (auto& c : clusters) c.server_id = data.id;
        std::string server_dir = (fs::path(out_dir("filter")) / data.id).string();
        write_cluster_files(clusters, server_dir);
        outputs.push_back(server_dir);
        clients_csv << data.id << ',' << data.streams.size() << ',' << ts_count << '\n';
        total_clusters += clusters.size();
    }
    clients_csv.close();

    write_manifest("filter", {ingest_dir}, outputs,
                   {{"corrupted_rows", std::to_string(corrupted)},
                    {"rejected_records", std::to_string(rejected)},
                    {"clusters", std::to_string(total_clusters)},
                    {"window_start", std::to_string(*w0)}},
                   timer.seconds());
    return {"filter", kExitOk, "built " + std::to_string(total_clusters) + " clusters"};
}

StageReport Pipeline::stage_detect() {
    StageTimer timer;
    std::string filter_dir = out_dir("filter");
    std::string window_path = (fs::path(filter_dir) / "window.json").string();
    if (!fs::exists(window_path))
        return {"detect", kExitRuntime, "missing upstream stage outputs: filter"};
    json window = json::parse(read_file(window_path));
    std::int64_t w0 = window.at("window_start").get<std::int64_t>();
    std::int64_t w1 = window.at("window_end").get<std::int64_t>();

    DetectorParams params = config_.detector;
    fs::create_directories(out_dir("detect"));
    std::vector<std::string> outputs;
    std::size_t total_events = 0, total_skipped = 0, epca_count = 0;

    for (const auto& entry : fs::directory_iterator(filter_dir)) {
        if (!entry.is_directory()) continue;
        std::string server_id = entry.path().filename().string();
        auto clusters = read_cluster_files(entry.path().string(), server_id);
        std::sort(clusters.begin(), clusters.end(),
                  [](const PrefixCluster& a, const PrefixCluster& b) {
                      return std::tie(a.direction, a.prefix) < std::tie(b.direction, b.prefix);
                  });
        auto detections = detect_clusters(clusters, w0, w1, params, config_.parallelism);

        fs::path server_out = fs::path(out_dir("detect")) / server_id;
        fs::create_directories(server_out);
        std::ofstream skips((server_out / "skips.csv").string(), std::ios::binary | std::ios::trunc);
        skips << "prefix,direction,reason\n";

        for (Direction dir : {Direction::c2s, Direction::s2c}) {
            std::vector<DetectedEvent> events;
            std::vector<ClusterMatrix> matrices;
            for (std::size_t i = 0; i < detections.size(); ++i) {
                if (clusters[i].direction != dir) continue;
                auto& det = detections[i];
                if (det.skip != SkipReason::none) {
                    skips << clusters[i].prefix.to_string() << ',' << to_string(dir) << ','
                          << to_string(det.skip) << '\n';
                    ++total_skipped;
                    continue;
                }
                if (det.path == RpcaPath::epca) ++epca_count;
                for (auto& ev : det.events) events.push_back(ev);
                if (det.matrix) matrices.push_back(std::move(*det.matrix));
            }
            sort_events_canonical(events);
            std::string events_path =
                (server_out / ("events_" + std::string(to_string(dir)) + ".csv")).string();
            write_event_details(events, events_path);
            std::string matrix_path =
                (server_out / ("matrix_" + std::string(to_string(dir)) + ".txt")).string();
            write_matrix_details(matrices, matrix_path);
            outputs.push_back(events_path);
            outputs.push_back(matrix_path);
            total_events += events.size();
        }
    }

    write_manifest("detect", {filter_dir}, outputs,
                   {{"events", std::to_string(total_events)},
                    {"skipped_clusters", std::to_string(total_skipped)},
                    {"epca_clusters", std::to_string(epca_count)},
                    {"coverage", format_fixed(params.coverage, 3)},
                    {"cutoff_quantile", format_fixed(params.cutoff_quantile, 3)}},
                   timer.seconds());
    return {"detect", kExitOk, "detected " + std::to_string(total_events) + " events"};
}

StageReport Pipeline::stage_consolidate() {
    StageTimer timer;
    std::string detect_dir = out_dir("detect");
    if (!fs::is_directory(detect_dir))
        return {"consolidate", kExitRuntime, "missing upstream stage outputs: detect"};

    std::map<std::string, std::vector<DetectedEvent>> by_server;
    bool any = false;
    for (const auto& entry : fs::directory_iterator(detect_dir)) {
        if (!entry.is_directory()) continue;
        std::string server_id = entry.path().filename().string();
        for (Direction dir : {Direction::c2s, Direction::s2c}) {
            fs::path path = entry.path() / ("events_" + std::string(to_string(dir)) + ".csv");
            if (!fs::exists(path)) continue;
            any = true;
            auto events = read_event_details(path.string(), server_id, dir);
            auto& dst = by_server[server_id];
            dst.insert(dst.end(), events.begin(), events.end());
        }
    }
    if (!any) return {"consolidate", kExitRuntime, "missing upstream stage outputs: detect"};

    auto consolidated = consolidate(by_server);
    fs::create_directories(out_dir("consolidate"));
    std::string path = (fs::path(out_dir("consolidate")) / "consolidated.csv").string();
    write_consolidated_csv(consolidated, path);

    write_manifest("consolidate", {detect_dir}, {path},
                   {{"consolidated_events", std::to_string(consolidated.size())}},
                   timer.seconds());
    return {"consolidate", kExitOk,
            "consolidated " + std::to_string(consolidated.size()) + " events"};
}

StageReport Pipeline::stage_aggregate() {
    StageTimer timer;
    std::string consolidated_path = (fs::path(out_dir("consolidate")) / "consolidated.csv").string();
    if (!fs::exists(consolidated_path))
        return {"aggregate", kExitRuntime, "missing upstream stage outputs: consolidate"};
    if (config_.caida_table.empty() && config_.cymru_table.empty())
        return {"aggregate", kExitValidation, "no prefix tables configured"};

    PrefixTable table;
    if (!config_.caida_table.empty()) table.load_caida(config_.caida_table);
    if (!config_.cymru_table.empty()) table.load_cymru(config_.cymru_table);

    auto consolidated = read_consolidated_csv(consolidated_path);
    AggregationResult result = aggregate(consolidated, table);

    std::map<std::uint32_t, std::string> names;
    if (!config_.as_names.empty()) names = load_as_names(config_.as_names);
    auto ranking = rank_ases(result.events, names, 5);

    fs::create_directories(out_dir("aggregate"));
    std::string agg_path = (fs::path(out_dir("aggregate")) / "aggregated.csv").string();
    std::string unmatched_path =
        (fs::path(out_dir("aggregate")) / "unmatched_prefixes.csv").string();
    std::string ranking_path = (fs::path(out_dir("aggregate")) / "as_ranking.csv").string();
    write_aggregated_csv(result.events, agg_path);
    write_unmatched_csv(result.unmatched_prefixes, unmatched_path);
    write_as_ranking_csv(ranking, ranking_path);

    std::map<std::string, std::string> params = {
        {"aggregated_events", std::to_string(result.events.size())},
        {"unmatched_prefixes", std::to_string(result.unmatched_prefixes.size())},
        {"table_entries", std::to_string(table.size())}};
    if (!table.audit_notes().empty())
        params["multi_origin_entries"] = std::to_string(table.audit_notes().size());
    write_manifest("aggregate", {consolidated_path}, {agg_path, unmatched_path, ranking_path},
                   params, timer.seconds());
    return {"aggregate", kExitOk,
            "aggregated " + std::to_string(result.events.size()) + " events"};
}

StageReport Pipeline::stage_match() {
    StageTimer timer;
    std::string consolidated_path = (fs::path(out_dir("consolidate")) / "consolidated.csv").string();
    if (!fs::exists(consolidated_path))
        return {"match", kExitRuntime, "missing upstream stage outputs: consolidate"};
    if (config_.external_events.empty())
        return {"match", kExitValidation, "no external_events configured"};

    auto consolidated = read_consolidated_csv(consolidated_path);
    CsvExternalFeedReader reader;
    auto external = reader.read(config_.external_events);
    MatchOutput output = match_events(consolidated, external, config_.match_window);

    fs::create_directories(out_dir("match"));
    std::string csv_path = (fs::path(out_dir("match")) / "matches.csv").string();
    std::string summary_path = (fs::path(out_dir("match")) / "summary.json").string();
    write_match_report(output, consolidated, external, csv_path, summary_path);

    write_manifest("match", {consolidated_path, config_.external_events},
                   {csv_path, summary_path},
                   {{"pairs", std::to_string(output.results.size())},
                    {"window_secs", std::to_string(config_.match_window)}},
                   timer.seconds());
    return {"match", kExitOk, std::to_string(output.results.size()) + " match pairs"};
}

StageReport Pipeline::stage_report() {
    StageTimer timer;
    DailyReportInputs inputs;
    std::vector<std::string> stage_inputs;

    std::string window_path = (fs::path(out_dir("filter")) / "window.json").string();
    std::int64_t w0 = 0;
    if (fs::exists(window_path)) {
        w0 = json::parse(read_file(window_path)).at("window_start").get<std::int64_t>();
        inputs.date = utc_date(w0);
        stage_inputs.push_back(window_path);
    } else if (config_.window_start) {
        w0 = *config_.window_start;
        inputs.date = utc_date(w0);
        inputs.gap_notes.push_back("filter outputs missing; date taken from config");
    } else {
        inputs.date = "unknown";
        inputs.gap_notes.push_back("no filter outputs and no window_start configured");
    }

    std::string volumes_path = (fs::path(out_dir("ingest")) / "volumes.csv").string();
    if (fs::exists(volumes_path)) {
        std::ifstream in(volumes_path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_fields(line);
            if (f.size() != 3) continue;
            ServerVolume sv;
            sv.server_id = std::string(f[0]);
            if (auto raw = parse_int64(f[1])) sv.raw_bytes = static_cast<std::uint64_t>(*raw);
            if (auto csv = parse_int64(f[2])) sv.csv_bytes = static_cast<std::uint64_t>(*csv);
            if (!sv.raw_bytes)
                inputs.gap_notes.push_back("server " + sv.server_id + ": no raw trace volume");
            inputs.server_volumes.push_back(std::move(sv));
        }
        stage_inputs.push_back(volumes_path);
    } else {
        inputs.gap_notes.push_back("ingest volume data missing");
    }

    std::string clients_path = (fs::path(out_dir("filter")) / "clients.csv").string();
    if (fs::exists(clients_path)) {
        std::ifstream in(clients_path);
        std::string line;
        std::getline(in, line);
        std::size_t total = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_fields(line);
            if (f.size() == 3) total += static_cast<std::size_t>(parse_int64(f[1]).value_or(0));
        }
        inputs.total_clients = total;
        stage_inputs.push_back(clients_path);
    } else {
        inputs.gap_notes.push_back("filter client counts missing");
    }

    // Distinct prefixes observed across servers, from the cluster indexes.
    std::set<Prefix> observed;
    if (fs::is_directory(out_dir("filter"))) {
        for (const auto& entry : fs::directory_iterator(out_dir("filter"))) {
            if (!entry.is_directory()) continue;
            fs::path index = entry.path() / "index.csv";
            if (!fs::exists(index)) continue;
            std::ifstream in(index);
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                auto f = split_fields(line);
                if (!f.empty())
                    if (auto p = Prefix::parse(f[0])) observed.insert(*p);
            }
        }
    }
    for (const auto& p : observed) ++inputs.prefixes_observed[p.base.v6 ? 6 : 4];

    std::string consolidated_path = (fs::path(out_dir("consolidate")) / "consolidated.csv").string();
    if (fs::exists(consolidated_path)) {
        inputs.consolidated = read_consolidated_csv(consolidated_path);
        stage_inputs.push_back(consolidated_path);
    } else {
        inputs.gap_notes.push_back("consolidated events missing");
    }

    std::string agg_path = (fs::path(out_dir("aggregate")) / "aggregated.csv").string();
    if (fs::exists(agg_path)) {
        std::ifstream in(agg_path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_fields(line);
            if (f.size() != 7) continue;
            AggregatedEvent ev;
            ev.announced_prefix = Prefix::parse(f[0]).value();
            ev.asn = static_cast<std::uint32_t>(parse_int64(f[1]).value());
            ev.direction = direction_from_string(f[2]);
            ev.start_epoch = parse_int64(f[3]).value();
            ev.end_epoch = parse_int64(f[4]).value();
            ev.confidence_class = confidence_from_char(f[5][0]);
            for (auto p : split_fields(f[6], ';'))
                if (!p.empty()) ev.constituent_prefixes.insert(Prefix::parse(p).value());
            inputs.aggregated.push_back(std::move(ev));
        }
        stage_inputs.push_back(agg_path);
    }

    DailyReport report = daily_report(inputs);
    fs::create_directories(out_dir("report"));
    std::string json_path = (fs::path(out_dir("report")) / "daily_report.json").string();
    std::string text_path = (fs::path(out_dir("report")) / "daily_report.txt").string();
    write_file(json_path, report.json);
    write_file(text_path, report.text);
    std::vector<std::string> outputs = {json_path, text_path};

    // Plot tables for every cluster with a detected event.
    std::set<std::pair<Prefix, Direction>> event_clusters;
    for (const auto& ev : inputs.consolidated) event_clusters.insert({ev.prefix, ev.direction});
    if (!event_clusters.empty() && fs::is_directory(out_dir("detect"))) {
        fs::path plot_dir = fs::path(out_dir("report")) / "plotdata";
        fs::create_directories(plot_dir);
        for (const auto& entry : fs::directory_iterator(out_dir("detect"))) {
            if (!entry.is_directory()) continue;
            std::string server_id = entry.path().filename().string();
            for (Direction dir : {Direction::c2s, Direction::s2c}) {
                fs::path matrix_path =
                    entry.path() / ("matrix_" + std::string(to_string(dir)) + ".txt");
                if (!fs::exists(matrix_path)) continue;
                auto matrices = read_matrix_details(matrix_path.string());
                for (const auto& m : matrices) {
                    if (!event_clusters.count({m.prefix, dir})) continue;
                    std::string name = server_id + "_" + to_string(dir) + "_" +
                                       m.prefix.file_token() + ".csv";
                    write_file((plot_dir / name).string(), plotdata_csv(owd_plotdata(m)));
                }
            }
        }
        outputs.push_back(plot_dir.string());
    }

    // Geographic footprints for prefixes with events, when a provider table
    // is configured.
    if (!config_.geo_table.empty() && !event_clusters.empty()) {
        TableGeoProvider provider(config_.geo_table);
        std::set<Prefix> event_prefixes;
        for (const auto& [prefix, dir] : event_clusters) event_prefixes.insert(prefix);
        std::map<Prefix, std::set<IpAddr>> members;
        if (fs::is_directory(out_dir("filter"))) {
            for (const auto& entry : fs::directory_iterator(out_dir("filter"))) {
                if (!entry.is_directory()) continue;
                auto clusters = read_cluster_files(entry.path().string(),
                                                   entry.path().filename().string());
                for (const auto& c : clusters) {
                    if (!event_prefixes.count(c.prefix)) continue;
                    for (const auto& client : c.clients) members[c.prefix].insert(client.client_ip);
                }
            }
        }
        std::vector<GeoFootprint> footprints;
        for (const auto& [prefix, ips] : members) {
            GeolocateResult located =
                geolocate(std::vector<IpAddr>(ips.begin(), ips.end()), provider);
            if (located.points.empty()) continue;
            GeoFootprint fp;
            fp.prefix = prefix;
            fp.points = located.points;
            std::vector<GeoPoint> pts;
            for (const auto& [ip, pt] : located.points) pts.push_back(pt);
            fp.hull = convex_hull(std::move(pts));
            footprints.push_back(std::move(fp));
        }
        std::string geo_path = (fs::path(out_dir("report")) / "footprints.geojson").string();
        write_file(geo_path, footprints_geojson(footprints));
        outputs.push_back(geo_path);
    }

    write_manifest("report", stage_inputs, outputs,
                   {{"gap_notes", std::to_string(inputs.gap_notes.size())}}, timer.seconds());
    return {"report", kExitOk, "report written"};
}

}  // namespace owdmon
