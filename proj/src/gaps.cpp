#include "owdmon/gaps.hpp"

#include <filesystem>
#include <stdexcept>

#include "owdmon/util.hpp"

namespace fs = std::filesystem;

namespace owdmon {

std::vector<TraceManifest> gap_monitor(const std::string& trace_root,
                                       const std::vector<std::string>& expected_servers,
                                       std::int64_t epoch_length,
                                       std::int64_t window_start,
                                       std::int64_t window_end) {
    if (epoch_length <= 0) throw std::invalid_argument("epoch_length must be positive");
    if (!expected_servers.empty()) {
        std::error_code ec;
        if (!fs::is_directory(trace_root, ec)) {
            throw std::runtime_error("unreadable trace directory: " + trace_root);
        }
    }

    std::vector<TraceManifest> out;
    for (const auto& server : expected_servers) {
        TraceManifest m;
        m.server_id = server;
        m.epoch_start = window_start;
        m.epoch_length = epoch_length;
        for (std::int64_t epoch = window_start; epoch < window_end; epoch += epoch_length) {
            ++m.expected_files;
            fs::path dir = fs::path(trace_root) / server / utc_month(epoch);
            fs::path plain = dir / (std::to_string(epoch) + ".pcap");
            fs::path gz = dir / (std::to_string(epoch) + ".pcap.gz");
            std::error_code ec;
            if (fs::exists(plain, ec) || fs::exists(gz, ec)) {
                ++m.received_files;
            } else {
                m.missing_epochs.push_back(epoch);
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::string gap_report_jsonl(const std::vector<TraceManifest>& manifests) {
    std::string out;
    for (const auto& m : manifests) {
        for (std::int64_t epoch : m.missing_epochs) {
            out += "{\"server_id\":\"" + m.server_id +
                   "\",\"missing_epoch\":" + std::to_string(epoch) + "}\n";
        }
    }
    return out;
}

}  // namespace owdmon
