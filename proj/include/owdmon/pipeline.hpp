#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "owdmon/ip.hpp"
#include "owdmon/owd.hpp"
#include "owdmon/rpca.hpp"

namespace owdmon {

struct ServerSpec {
    std::string id;
    IpAddr ip;
    std::string trace_dir;  // pcap layout: <trace_dir>/<id>/<YYYY-MM>/<epoch>.pcap[.gz]
};

struct PipelineConfig {
    std::uint64_t seed = 1;
    std::int64_t epoch_length = 3600;
    std::int64_t detection_window = 86400;
    std::optional<std::int64_t> window_start;  // derived from the data when absent
    int parallelism = 0;                        // 0 = hardware concurrency
    std::string output_root = "out";
    std::vector<ServerSpec> servers;
    std::string synth_scenario;  // optional
    DetectorParams detector;
    TightSyncConfig tight_sync;
    std::string caida_table;      // optional
    std::string cymru_table;      // optional
    std::string as_names;         // optional
    std::string external_events;  // optional
    std::int64_t match_window = 3600;
    std::string geo_table;  // optional

    static PipelineConfig from_json_file(const std::string& path);
    static PipelineConfig from_json_text(const std::string& text, const std::string& base_dir);
    // Every violation, empty when valid.
    std::vector<std::string> validate() const;
};

// Exit statuses shared by the CLI.
enum : int {
    kExitOk = 0,
    kExitValidation = 1,
    kExitRuntime = 2,
    kExitDataGaps = 3,
};

struct StageReport {
    std::string stage;
    int status = kExitOk;
    std::string message;
};

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"synth",       "ingest",    "filter",
                                                   "detect",      "consolidate", "aggregate",
                                                   "match",       "report"};
    return names;
}

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    // Runs one stage; status kExitRuntime names missing upstream outputs.
    StageReport run_stage(const std::string& stage);
    // Runs the configured stage DAG in order; data gaps surface as status 3
    // after all stages complete.
    StageReport run_all();

    const PipelineConfig& config() const { return config_; }

private:
    PipelineConfig config_;

    std::string out_dir(const std::string& stage) const;
    void write_manifest(const std::string& stage, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs,
                        const std::map<std::string, std::string>& parameters,
                        double wall_seconds) const;

    StageReport stage_synth();
    StageReport stage_ingest();
    StageReport stage_filter();
    StageReport stage_detect();
    StageReport stage_consolidate();
    StageReport stage_aggregate();
    StageReport stage_match();
    StageReport stage_report();
};

}  // namespace owdmon
