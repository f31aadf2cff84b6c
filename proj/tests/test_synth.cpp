#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "owdmon/synth.hpp"
#include "owdmon/util.hpp"

using namespace owdmon;

namespace {

SynthScenario base_scenario() {
    SynthScenario s;
    s.seed = 11;
    s.start_epoch = 1557700000;
    s.duration = 7200;
    s.noise_sigma = 0.001;
    s.baseline_owd_min = 0.03;
    s.baseline_owd_max = 0.05;
    s.poll_exponent_min = 6;
    s.poll_exponent_max = 6;
    s.prefixes.emplace_back(*Prefix::parse("10.0.0.0/24"), 3);
    return s;
}

}  // namespace

TEST_CASE("no injected events means empty ground truth") {
    auto out = generate(base_scenario());
    CHECK(out.ground_truth.empty());
    CHECK(!out.records.empty());
}

TEST_CASE("a 4x injection window elevates OWD by the multiplier") {
    auto scenario = base_scenario();
    InjectedEvent ev;
    ev.prefix = scenario.prefixes[0].first;
    ev.start = 1557702000;
    ev.end = 1557703000;
    ev.owd_multiplier = 4.0;
    scenario.events.push_back(ev);

    auto out = generate(scenario);
    REQUIRE(out.ground_truth.size() == 1);

    // Per-client means inside vs. outside the window.
    std::map<IpAddr, std::pair<double, int>> inside, outside;
    for (const auto& r : out.records) {
        auto& acc = (r.packet_timestamp >= ev.start && r.packet_timestamp < ev.end)
                        ? inside[r.src_ip]
                        : outside[r.src_ip];
        acc.first += r.latency;
        acc.second += 1;
    }
    for (const auto& [ip, acc] : inside) {
        REQUIRE(outside.count(ip));
        double mean_in = acc.first / acc.second;
        double mean_out = outside[ip].first / outside[ip].second;
        CHECK(mean_in >= 4.0 * 0.9 * mean_out);
        CHECK(mean_in <= 4.0 * 1.1 * mean_out);
    }
}

TEST_CASE("identical seeds produce byte-identical CSV") {
    auto scenario = base_scenario();
    auto a = generate(scenario);
    auto b = generate(scenario);
    std::ostringstream csv_a, csv_b;
    write_csv(a.records, csv_a);
    write_csv(b.records, csv_b);
    CHECK(csv_a.str() == csv_b.str());

    scenario.seed = 12;
    auto c = generate(scenario);
    std::ostringstream csv_c;
    write_csv(c.records, csv_c);
    CHECK(csv_a.str() != csv_c.str());
}

TEST_CASE("per-client timestamps are strictly increasing with spacing 2^poll") {
    auto scenario = base_scenario();
    scenario.poll_exponent_min = 4;
    scenario.poll_exponent_max = 8;
    auto out = generate(scenario);

    std::map<IpAddr, std::vector<const NtpPacketRecord*>> per_client;
    for (const auto& r : out.records) per_client[r.src_ip].push_back(&r);
    for (const auto& [ip, records] : per_client) {
        REQUIRE(records.size() >= 2);
        double spacing = std::ldexp(1.0, records[0]->poll_exponent);
        for (std::size_t i = 1; i < records.size(); ++i) {
            double dt = records[i]->packet_timestamp - records[i - 1]->packet_timestamp;
            CHECK(dt > 0);
            CHECK(dt == doctest::Approx(spacing).epsilon(1e-9));
        }
    }
}

TEST_CASE("loss-mode injection removes samples inside the window") {
    auto scenario = base_scenario();
    InjectedEvent ev;
    ev.prefix = scenario.prefixes[0].first;
    ev.start = 1557702000;
    ev.end = 1557703024;
    ev.owd_multiplier = 4.0;  // unused in loss mode but must satisfy invariants
    ev.mode = InjectionMode::loss;
    scenario.events.push_back(ev);

    auto with_loss = generate(scenario);
    for (const auto& r : with_loss.records) {
        bool in_window = r.packet_timestamp >= ev.start && r.packet_timestamp < ev.end;
        CHECK(!in_window);
    }

    auto baseline = scenario;
    baseline.events.clear();
    auto without = generate(baseline);
    CHECK(without.records.size() > with_loss.records.size());
}

TEST_CASE("invalid scenarios are rejected before generation") {
    SUBCASE("single-client prefix") {
        auto s = base_scenario();
        s.prefixes[0].second = 1;
        CHECK_THROWS_AS((void)generate(s), std::invalid_argument);
    }
    SUBCASE("multiplier not above one") {
        auto s = base_scenario();
        InjectedEvent ev;
        ev.prefix = s.prefixes[0].first;
        ev.start = static_cast<double>(s.start_epoch + 10);
        ev.end = static_cast<double>(s.start_epoch + 20);
        ev.owd_multiplier = 1.0;
        s.events.push_back(ev);
        CHECK_THROWS_AS((void)generate(s), std::invalid_argument);
    }
    SUBCASE("event outside the scenario window") {
        auto s = base_scenario();
        InjectedEvent ev;
        ev.prefix = s.prefixes[0].first;
        ev.start = static_cast<double>(s.start_epoch - 100);
        ev.end = static_cast<double>(s.start_epoch + 100);
        s.events.push_back(ev);
        CHECK_THROWS_AS((void)generate(s), std::invalid_argument);
    }
    SUBCASE("event prefix not in the scenario") {
        auto s = base_scenario();
        InjectedEvent ev;
        ev.prefix = *Prefix::parse("172.16.0.0/24");
        ev.start = static_cast<double>(s.start_epoch + 10);
        ev.end = static_cast<double>(s.start_epoch + 20);
        s.events.push_back(ev);
        CHECK_THROWS_AS((void)generate(s), std::invalid_argument);
    }
}

TEST_CASE("scenario and ground truth JSON round trip") {
    std::string text = R"({
      "seed": 5,
      "server_id": "synth",
      "server_ip": "192.0.2.9",
      "start_epoch": 1557700000,
      "duration": 3600,
      "noise_sigma": 0.002,
      "baseline_owd_min": 0.02,
      "baseline_owd_max": 0.04,
      "poll_exponent_min": 6,
      "poll_exponent_max": 6,
      "prefixes": [{"prefix": "10.1.0.0/24", "clients": 2}],
      "events": [{"prefix": "10.1.0.0/24", "start": 1557701000, "end": 1557702000,
                  "owd_multiplier": 4.0, "affected_client_fraction": 1.0, "mode": "delay"}]
    })";
    auto scenario = SynthScenario::from_json_text(text);
    CHECK(scenario.seed == 5);
    CHECK(scenario.server_ip.to_string() == "192.0.2.9");
    REQUIRE(scenario.events.size() == 1);

    auto out = generate(scenario);
    auto round = ground_truth_from_json(ground_truth_json(out.ground_truth));
    REQUIRE(round.size() == 1);
    CHECK(round[0].prefix == scenario.events[0].prefix);
    CHECK(round[0].start == scenario.events[0].start);
    CHECK(round[0].owd_multiplier == 4.0);
}

TEST_CASE("affected fraction limits injection to the leading clients") {
    auto scenario = base_scenario();
    scenario.prefixes[0].second = 4;
    InjectedEvent ev;
    ev.prefix = scenario.prefixes[0].first;
    ev.start = 1557701000;
    ev.end = 1557703000;
    ev.owd_multiplier = 4.0;
    ev.affected_client_fraction = 0.5;
    scenario.events.push_back(ev);

    auto out = generate(scenario);
    std::map<IpAddr, std::pair<double, double>> in_out;  // ip -> (max inside, max outside)
    for (const auto& r : out.records) {
        auto& acc = in_out[r.src_ip];
        bool inside = r.packet_timestamp >= ev.start && r.packet_timestamp < ev.end;
        auto& slot = inside ? acc.first : acc.second;
        slot = std::max(slot, r.latency);
    }
    REQUIRE(in_out.size() == 4);
    int elevated = 0;
    for (const auto& [ip, acc] : in_out)
        if (acc.first > 2.0 * acc.second) ++elevated;
    CHECK(elevated == 2);
}
