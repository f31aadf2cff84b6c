// Command-line entry point wiring the pipeline stages together.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <span>

#include "owdmon/events.hpp"
#include "owdmon/gaps.hpp"
#include "owdmon/match.hpp"
#include "owdmon/pcap.hpp"
#include "owdmon/pipeline.hpp"
#include "owdmon/report.hpp"
#include "owdmon/util.hpp"

namespace fs = std::filesystem;
using namespace owdmon;

namespace {

int run_configured_stage(const std::string& config_path, bool dry_run, const std::string& stage) {
    PipelineConfig config;
    try {
        config = PipelineConfig::from_json_file(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    }
    auto problems = config.validate();
    if (!problems.empty()) {
        std::cerr << "invalid configuration:\n";
        for (const auto& p : problems) std::cerr << "  - " << p << "\n";
        return kExitValidation;
    }
    if (dry_run) {
        std::cout << "configuration valid\n";
        return kExitOk;
    }
    Pipeline pipeline(std::move(config));
    StageReport report = stage == "run-all" ? pipeline.run_all() : pipeline.run_stage(stage);
    if (report.status == kExitOk || report.status == kExitDataGaps) {
        std::cout << report.stage << ": " << report.message << "\n";
    } else {
        std::cerr << report.stage << ": " << report.message << "\n";
    }
    return report.status;
}

int run_direct_ingest(const std::string& server_ip, const std::vector<std::string>& inputs,
                      const std::string& output) {
    auto ip = IpAddr::parse(server_ip);
    if (!ip) {
        std::cerr << "invalid --server-ip\n";
        return kExitValidation;
    }
    std::vector<NtpPacketRecord> all;
    std::uint64_t skipped = 0;
    std::uint64_t offset = 0;
    for (const auto& path : inputs) {
        try {
            PcapParseResult parsed = parse_pcap_file(path, *ip);
            skipped += parsed.skipped_short + parsed.truncated_packets;
            for (auto& r : parsed.records) {
                r.packet_number += offset;
                all.push_back(std::move(r));
            }
            offset += parsed.total_packets;
        } catch (const std::exception& e) {
            std::cerr << path << ": " << e.what() << "\n";
            return kExitRuntime;
        }
    }
    FilterResult filtered = integrity_filter(all);
    write_csv_file(filtered.records, output);
    std::cout << "wrote " << filtered.records.size() << " records (" << filtered.rejected
              << " rejected, " << skipped << " skipped packets)\n";
    return kExitOk;
}

int run_direct_match(const std::string& events_path, const std::string& external_path,
                     std::int64_t window, const std::string& out_prefix) {
    try {
        auto events = read_consolidated_csv(events_path);
        CsvExternalFeedReader reader;
        auto external = reader.read(external_path);
        MatchOutput output = match_events(events, external, window);
        write_match_report(output, events, external, out_prefix + ".csv", out_prefix + ".json");
        std::cout << output.results.size() << " match pairs (direct " << output.summary.direct
                  << ", pre " << output.summary.pre << ", post " << output.summary.post << ")\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitRuntime;
    }
}

int run_plot_data(const std::string& matrix_path, const std::string& cluster,
                  const std::string& direction, const std::string& output) {
    try {
        auto matrices = read_matrix_details(matrix_path);
        auto prefix = Prefix::parse(cluster);
        if (!prefix) {
            std::cerr << "invalid --cluster prefix\n";
            return kExitValidation;
        }
        ClusterMatrix m = find_cluster_matrix(matrices, *prefix, direction_from_string(direction));
        write_file(output, plotdata_csv(owd_plotdata(m)));
        std::cout << "wrote " << m.values.rows() * m.values.cols() << " rows\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitRuntime;
    }
}

int run_gaps(const std::string& trace_dir, const std::vector<std::string>& servers,
             std::int64_t epoch_length, std::int64_t window_start, std::int64_t window_end,
             const std::string& output) {
    try {
        auto manifests = gap_monitor(trace_dir, servers, epoch_length, window_start, window_end);
        std::string report = gap_report_jsonl(manifests);
        if (output.empty()) {
            std::cout << report;
        } else {
            write_file(output, report);
        }
        bool gaps = false;
        for (const auto& m : manifests) gaps |= !m.missing_epochs.empty();
        return gaps ? kExitDataGaps : kExitOk;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NTP one-way-delay telemetry pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    bool dry_run = false;
    app.add_option("--config", config_path, "pipeline configuration (JSON)");
    app.add_flag("--dry-run", dry_run, "validate configuration without executing");

    // Configured stages.
    std::vector<std::string> stages = stage_names();
    stages.push_back("run-all");
    for (const auto& stage : stages) {
        app.add_subcommand(stage, "run the " + stage + " stage");
    }

    // Direct ingest: pcap files to CSV without a config.
    auto* ingest = app.get_subcommand("ingest");
    std::string server_ip, ingest_out;
    std::vector<std::string> ingest_in;
    ingest->add_option("--server-ip", server_ip, "server address in the traces");
    ingest->add_option("--in", ingest_in, "input pcap files (optionally gzipped)");
    ingest->add_option("--out", ingest_out, "output CSV path");

    // Direct match: event CSV against an external feed.
    auto* match = app.get_subcommand("match");
    std::string match_events_path, match_external, match_out;
    std::int64_t match_window = 3600;
    match->add_option("--events", match_events_path, "consolidated event CSV");
    match->add_option("--external", match_external, "external event CSV");
    match->add_option("--window-secs", match_window, "pre/post match window");
    match->add_option("--out", match_out, "output path prefix (.csv/.json appended)");

    auto* plot = app.add_subcommand("plot-data", "emit per-client OWD plot table for one cluster");
    std::string plot_matrix, plot_cluster, plot_direction = "c2s", plot_out;
    plot->add_option("--matrix", plot_matrix, "matrix details file")->required();
    plot->add_option("--cluster", plot_cluster, "cluster prefix, e.g. 10.0.0.0/24")->required();
    plot->add_option("--direction", plot_direction, "c2s or s2c");
    plot->add_option("--out", plot_out, "output CSV path")->required();

    auto* gaps = app.add_subcommand("gaps", "report missing trace epochs");
    std::string gaps_dir, gaps_out;
    std::vector<std::string> gaps_servers;
    std::int64_t gaps_epoch = 3600, gaps_start = 0, gaps_end = 0;
    gaps->add_option("--trace-dir", gaps_dir, "trace root directory")->required();
    gaps->add_option("--server", gaps_servers, "server id (repeatable)")->required();
    gaps->add_option("--epoch-length", gaps_epoch, "epoch length in seconds");
    gaps->add_option("--window-start", gaps_start, "window start epoch")->required();
    gaps->add_option("--window-end", gaps_end, "window end epoch")->required();
    gaps->add_option("--out", gaps_out, "gap report path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    for (auto* sub : app.get_subcommands()) {
        const std::string& name = sub->get_name();
        if (name == "plot-data") {
            return run_plot_data(plot_matrix, plot_cluster, plot_direction, plot_out);
        }
        if (name == "gaps") {
            return run_gaps(gaps_dir, gaps_servers, gaps_epoch, gaps_start, gaps_end, gaps_out);
        }
        if (name == "ingest" && config_path.empty()) {
            if (server_ip.empty() || ingest_in.empty() || ingest_out.empty()) {
                std::cerr << "direct ingest needs --server-ip, --in and --out (or --config)\n";
                return kExitValidation;
            }
            return run_direct_ingest(server_ip, ingest_in, ingest_out);
        }
        if (name == "match" && config_path.empty()) {
            if (match_events_path.empty() || match_external.empty() || match_out.empty()) {
                std::cerr << "direct match needs --events, --external and --out (or --config)\n";
                return kExitValidation;
            }
            return run_direct_match(match_events_path, match_external, match_window, match_out);
        }
        if (config_path.empty()) {
            std::cerr << name << " requires --config\n";
            return kExitValidation;
        }
        return run_configured_stage(config_path, dry_run, name);
    }
    return kExitValidation;
}
