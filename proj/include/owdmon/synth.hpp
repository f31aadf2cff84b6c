#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "owdmon/ip.hpp"
#include "owdmon/records.hpp"

namespace owdmon {

enum class InjectionMode { delay, loss };

struct InjectedEvent {
    Prefix prefix;
    double start = 0;  // epoch seconds
    double end = 0;
    double owd_multiplier = 4.0;
    double affected_client_fraction = 1.0;
    InjectionMode mode = InjectionMode::delay;
};

enum class NoiseModel { gaussian, lognormal };

struct SynthScenario {
    std::uint64_t seed = 1;
    std::string server_id = "synth";
    IpAddr server_ip = IpAddr::v4_from_bytes(192, 0, 2, 1);
    std::int64_t start_epoch = 0;
    std::int64_t duration = 86400;
    double noise_sigma = 0.0025;
    NoiseModel noise_model = NoiseModel::gaussian;
    double baseline_owd_min = 0.02;
    double baseline_owd_max = 0.08;
    int poll_exponent_min = 6;
    int poll_exponent_max = 6;
    std::vector<std::pair<Prefix, int>> prefixes;  // (prefix, client_count)
    std::vector<InjectedEvent> events;

    static SynthScenario from_json_file(const std::string& path);
    static SynthScenario from_json_text(const std::string& text);
    // Throws std::invalid_argument listing every violated invariant.
    void validate() const;
};

struct SynthOutput {
    std::vector<NtpPacketRecord> records;       // sorted by (timestamp, src ip)
    std::vector<InjectedEvent> ground_truth;    // the injected windows, verbatim
};

SynthOutput generate(const SynthScenario& scenario);

std::string ground_truth_json(const std::vector<InjectedEvent>& events);
std::vector<InjectedEvent> ground_truth_from_json(const std::string& text);

}  // namespace owdmon
