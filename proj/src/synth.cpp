#include "owdmon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "owdmon/util.hpp"

namespace owdmon {

namespace {

using nlohmann::json;

InjectionMode mode_from_string(const std::string& s) {
    if (s == "delay") return InjectionMode::delay;
    if (s == "loss") return InjectionMode::loss;
    throw std::invalid_argument("unknown injection mode: " + s);
}

NoiseModel noise_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseModel::gaussian;
    if (s == "lognormal") return NoiseModel::lognormal;
    throw std::invalid_argument("unknown noise model: " + s);
}

IpAddr client_address(const Prefix& prefix, int index) {
    IpAddr ip = prefix.base;
    // Host numbering starts at 1 within the prefix.
    std::uint32_t host = static_cast<std::uint32_t>(index) + 1;
    int last = ip.v6 ? 15 : 3;
    for (int b = last; b >= 0 && host > 0; --b) {
        std::uint32_t sum = ip.bytes[static_cast<std::size_t>(b)] + (host & 0xFF);
        ip.bytes[static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(sum & 0xFF);
        host = (host >> 8) + (sum >> 8);
    }
    return ip;
}

}  // namespace

SynthScenario SynthScenario::from_json_text(const std::string& text) {
    json j = json::parse(text);
    SynthScenario s;
    s.seed = j.value("seed", std::uint64_t{1});
    s.server_id = j.value("server_id", std::string("synth"));
    if (j.contains("server_ip")) {
        auto ip = IpAddr::parse(j["server_ip"].get<std::string>());
        if (!ip) throw std::invalid_argument("bad server_ip");
        s.server_ip = *ip;
    }
    s.start_epoch = j.value("start_epoch", std::int64_t{0});
    s.duration = j.value("duration", std::int64_t{86400});
    s.noise_sigma = j.value("noise_sigma", 0.0025);
    s.noise_model = noise_from_string(j.value("noise_model", std::string("gaussian")));
    s.baseline_owd_min = j.value("baseline_owd_min", 0.02);
    s.baseline_owd_max = j.value("baseline_owd_max", 0.08);
    s.poll_exponent_min = j.value("poll_exponent_min", 6);
    s.poll_exponent_max = j.value("poll_exponent_max", 6);
    for (const auto& p : j.at("prefixes")) {
        auto prefix = Prefix::parse(p.at("prefix").get<std::string>());
        if (!prefix) throw std::invalid_argument("bad prefix in scenario");
        s.prefixes.emplace_back(*prefix, p.at("clients").get<int>());
    }
    if (j.contains("events")) {
        for (const auto& e : j["events"]) {
            InjectedEvent ev;
            auto prefix = Prefix::parse(e.at("prefix").get<std::string>());
            if (!prefix) throw std::invalid_argument("bad prefix in event");
            ev.prefix = *prefix;
            ev.start = e.at("start").get<double>();
            ev.end = e.at("end").get<double>();
            ev.owd_multiplier = e.value("owd_multiplier", 4.0);
            ev.affected_client_fraction = e.value("affected_client_fraction", 1.0);
            ev.mode = mode_from_string(e.value("mode", std::string("delay")));
            s.events.push_back(ev);
        }
    }
    return s;
}

SynthScenario SynthScenario::from_json_file(const std::string& path) {
    return from_json_text(read_file(path));
}

void SynthScenario::validate() const {
    std::string problems;
    auto fail = [&](const std::string& msg) { problems += "  - " + msg + "\n"; };

    if (duration <= 0) fail("duration must be positive");
    if (noise_sigma < 0) fail("noise_sigma must be non-negative");
    if (baseline_owd_min <= 0 || baseline_owd_max < baseline_owd_min)
        fail("baseline_owd range invalid");
    if (poll_exponent_min < 0 || poll_exponent_max > 17 || poll_exponent_max < poll_exponent_min)
        fail("poll_exponent range must lie within [0, 17]");
    if (prefixes.empty()) fail("at least one prefix required");
    for (const auto& [prefix, clients] : prefixes) {
        if (clients < 2) fail("prefix " + prefix.to_string() + " needs >= 2 clients");
    }
    for (const auto& ev : events) {
        if (ev.owd_multiplier <= 1.0) fail("owd_multiplier must exceed 1");
        if (ev.affected_client_fraction <= 0 || ev.affected_client_fraction > 1)
            fail("affected_client_fraction must lie in (0, 1]");
        double s0 = static_cast<double>(start_epoch);
        if (ev.start < s0 || ev.end > s0 + static_cast<double>(duration) || ev.end <= ev.start)
            fail("event window outside scenario duration");
        bool known = false;
        for (const auto& [prefix, clients] : prefixes) known |= prefix == ev.prefix;
        if (!known) fail("event prefix " + ev.prefix.to_string() + " not in scenario");
    }
    if (!problems.empty()) throw std::invalid_argument("invalid scenario:\n" + problems);
}

SynthOutput generate(const SynthScenario& sc) {
    sc.validate();
    SynthOutput out;
    out.ground_truth = sc.events;

    std::mt19937_64 rng(sc.seed);
    std::uniform_real_distribution<double> baseline_dist(sc.baseline_owd_min, sc.baseline_owd_max);
    std::uniform_int_distribution<int> poll_dist(sc.poll_exponent_min, sc.poll_exponent_max);
    std::normal_distribution<double> noise(0.0, 1.0);

    const double t0 = static_cast<double>(sc.start_epoch);
    const double t1 = t0 + static_cast<double>(sc.duration);

    for (const auto& [prefix, client_count] : sc.prefixes) {
        std::vector<const InjectedEvent*> prefix_events;
        for (const auto& ev : sc.events)
            if (ev.prefix == prefix) prefix_events.push_back(&ev);

        for (int ci = 0; ci < client_count; ++ci) {
            IpAddr client = client_address(prefix, ci);
            int poll = poll_dist(rng);
            double interval = std::ldexp(1.0, poll);
            // Phase drawn in whole microseconds keeps timestamps exact in CSV.
            std::uniform_int_distribution<std::int64_t> phase_dist(
                0, static_cast<std::int64_t>(interval * 1e6) - 1);
            double phase = static_cast<double>(phase_dist(rng)) / 1e6;
            double base_s2c = baseline_dist(rng);
            double base_c2s = baseline_dist(rng);

            for (double ts = t0 + phase; ts < t1; ts += interval) {
                double g1 = noise(rng);
                double g2 = noise(rng);

                double mult = 1.0;
                bool dropped = false;
                for (const InjectedEvent* ev : prefix_events) {
                    if (ts < ev->start || ts >= ev->end) continue;
                    int affected =
                        static_cast<int>(std::ceil(ev->affected_client_fraction * client_count));
                    if (ci >= affected) continue;
                    if (ev->mode == InjectionMode::loss) {
                        dropped = true;
                    } else {
                        mult = std::max(mult, ev->owd_multiplier);
                    }
                }
                if (dropped) continue;

                double s2c, c2s;
                if (sc.noise_model == NoiseModel::gaussian) {
                    s2c = std::max(0.0, base_s2c * mult + sc.noise_sigma * g1);
                    c2s = std::max(0.0, base_c2s * mult + sc.noise_sigma * g2);
                } else {
                    s2c = base_s2c * mult * std::exp(sc.noise_sigma * g1);
                    c2s = base_c2s * mult * std::exp(sc.noise_sigma * g2);
                }

                NtpPacketRecord r;
                r.src_ip = client;
                r.dst_ip = sc.server_ip;
                r.latency = s2c;
                r.poll_exponent = poll;
                r.packet_timestamp = ts;
                r.root_delay = c2s;
                r.rtt = s2c + c2s;
                r.reference_ip = sc.server_ip.v6 ? "0.0.0.0" : sc.server_ip.to_string();
                r.mode = 3;
                out.records.push_back(std::move(r));
            }
        }
    }

    std::sort(out.records.begin(), out.records.end(),
              [](const NtpPacketRecord& a, const NtpPacketRecord& b) {
                  if (a.packet_timestamp != b.packet_timestamp)
                      return a.packet_timestamp < b.packet_timestamp;
                  return a.src_ip < b.src_ip;
              });
    for (std::size_t i = 0; i < out.records.size(); ++i)
        out.records[i].packet_number = i + 1;
    return out;
}

std::string ground_truth_json(const std::vector<InjectedEvent>& events) {
    json arr = json::array();
    for (const auto& ev : events) {
        arr.push_back({{"prefix", ev.prefix.to_string()},
                       {"start", ev.start},
                       {"end", ev.end},
                       {"owd_multiplier", ev.owd_multiplier},
                       {"affected_client_fraction", ev.affected_client_fraction},
                       {"mode", ev.mode == InjectionMode::loss ? "loss" : "delay"}});
    }
    return json{{"events", arr}}.dump(2) + "\n";
}

std::vector<InjectedEvent> ground_truth_from_json(const std::string& text) {
    json j = json::parse(text);
    std::vector<InjectedEvent> out;
    for (const auto& e : j.at("events")) {
        InjectedEvent ev;
        ev.prefix = *Prefix::parse(e.at("prefix").get<std::string>());
        ev.start = e.at("start").get<double>();
        ev.end = e.at("end").get<double>();
        ev.owd_multiplier = e.value("owd_multiplier", 4.0);
        ev.affected_client_fraction = e.value("affected_client_fraction", 1.0);
        ev.mode = mode_from_string(e.value("mode", std::string("delay")));
        out.push_back(ev);
    }
    return out;
}

}  // namespace owdmon
