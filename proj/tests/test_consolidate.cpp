#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "owdmon/consolidate.hpp"
#include "pcap_builder.hpp"

using namespace owdmon;

namespace {

DetectedEvent make_event(const char* prefix, std::int64_t start, std::int64_t end,
                         ConfidenceClass cls, const char* server,
                         EventKind kind = EventKind::event,
                         Direction dir = Direction::c2s) {
    DetectedEvent ev;
    ev.prefix = *Prefix::parse(prefix);
    ev.direction = dir;
    ev.start_epoch = start;
    ev.end_epoch = end;
    ev.kind = kind;
    ev.confidence_class = cls;
    ev.client_count = 3;
    ev.server_id = server;
    return ev;
}

// O(n^2) transitive-closure oracle: union-find over pairwise interval
// overlaps within each (prefix, direction, kind) group, iterated on the
// component hulls until the closure stabilizes.
std::vector<ConsolidatedEvent> oracle_consolidate(const std::vector<DetectedEvent>& events) {
    std::vector<std::size_t> parent(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) parent[i] = i;
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) -> std::size_t {
        return parent[i] == i ? i : parent[i] = find(parent[i]);
    };
    auto same_group = [&](std::size_t i, std::size_t j) {
        const auto& a = events[i];
        const auto& b = events[j];
        return a.prefix == b.prefix && a.direction == b.direction && a.kind == b.kind;
    };
    bool changed = true;
    while (changed) {
        changed = false;
        std::map<std::size_t, std::pair<std::int64_t, std::int64_t>> hulls;
        for (std::size_t i = 0; i < events.size(); ++i) {
            std::size_t r = find(i);
            auto it = hulls.find(r);
            if (it == hulls.end()) {
                hulls[r] = {events[i].start_epoch, events[i].end_epoch};
            } else {
                it->second.first = std::min(it->second.first, events[i].start_epoch);
                it->second.second = std::max(it->second.second, events[i].end_epoch);
            }
        }
        for (std::size_t i = 0; i < events.size(); ++i) {
            for (std::size_t j = i + 1; j < events.size(); ++j) {
                if (!same_group(i, j)) continue;
                std::size_t ri = find(i), rj = find(j);
                if (ri == rj) continue;
                auto hi = hulls[ri], hj = hulls[rj];
                if (std::min(hi.second, hj.second) - std::max(hi.first, hj.first) >= 1) {
                    parent[ri] = rj;
                    changed = true;
                }
            }
        }
    }

    std::map<std::size_t, ConsolidatedEvent> merged;
    std::map<std::size_t, bool> started;
    for (std::size_t i = 0; i < events.size(); ++i) {
        std::size_t r = find(i);
        const auto& ev = events[i];
        auto& out = merged[r];
        if (!started[r]) {
            started[r] = true;
            out.prefix = ev.prefix;
            out.direction = ev.direction;
            out.kind = ev.kind;
            out.start_epoch = ev.start_epoch;
            out.end_epoch = ev.end_epoch;
            out.confidence_class = ev.confidence_class;
        } else {
            out.start_epoch = std::min(out.start_epoch, ev.start_epoch);
            out.end_epoch = std::max(out.end_epoch, ev.end_epoch);
            if (class_better(ev.confidence_class, out.confidence_class))
                out.confidence_class = ev.confidence_class;
        }
        out.contributing_servers.insert(ev.server_id);
        out.constituent_event_count += 1;
    }
    std::vector<ConsolidatedEvent> out;
    for (auto& [r, ev] : merged) out.push_back(std::move(ev));
    std::sort(out.begin(), out.end(), [](const ConsolidatedEvent& a, const ConsolidatedEvent& b) {
        return std::tie(a.prefix, a.direction, a.kind, a.start_epoch, a.end_epoch) <
               std::tie(b.prefix, b.direction, b.kind, b.start_epoch, b.end_epoch);
    });
    return out;
}

bool same_consolidation(const std::vector<ConsolidatedEvent>& a,
                        const std::vector<ConsolidatedEvent>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].prefix != b[i].prefix || a[i].direction != b[i].direction ||
            a[i].kind != b[i].kind || a[i].start_epoch != b[i].start_epoch ||
            a[i].end_epoch != b[i].end_epoch ||
            a[i].confidence_class != b[i].confidence_class ||
            a[i].contributing_servers != b[i].contributing_servers ||
            a[i].constituent_event_count != b[i].constituent_event_count)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("single-server consolidation is the identity") {
    std::map<std::string, std::vector<DetectedEvent>> by_server;
    by_server["S1"] = {make_event("10.0.0.0/24", 100, 200, ConfidenceClass::B, "S1"),
                       make_event("10.0.1.0/24", 500, 900, ConfidenceClass::A, "S1")};
    auto out = consolidate(by_server);
    REQUIRE(out.size() == 2);
    CHECK(out[0].start_epoch == 100);
    CHECK(out[0].end_epoch == 200);
    CHECK(out[0].confidence_class == ConfidenceClass::B);
    CHECK(out[0].constituent_event_count == 1);
}

TEST_CASE("overlapping events merge with earliest start, latest end, best class") {
    std::map<std::string, std::vector<DetectedEvent>> by_server;
    by_server["S1"] = {make_event("10.0.0.0/24", 100, 200, ConfidenceClass::B, "S1")};
    by_server["S2"] = {make_event("10.0.0.0/24", 150, 300, ConfidenceClass::A, "S2")};
    auto out = consolidate(by_server);
    REQUIRE(out.size() == 1);
    CHECK(out[0].start_epoch == 100);
    CHECK(out[0].end_epoch == 300);
    CHECK(out[0].confidence_class == ConfidenceClass::A);
    CHECK(out[0].contributing_servers == std::set<std::string>{"S1", "S2"});
    CHECK(out[0].constituent_event_count == 2);
}

TEST_CASE("disjoint same-prefix events stay separate") {
    std::map<std::string, std::vector<DetectedEvent>> by_server;
    by_server["S1"] = {make_event("10.0.0.0/24", 100, 200, ConfidenceClass::A, "S1")};
    by_server["S2"] = {make_event("10.0.0.0/24", 300, 400, ConfidenceClass::B, "S2")};
    CHECK(consolidate(by_server).size() == 2);
}

TEST_CASE("abutting intervals do not merge; one second of overlap does") {
    std::map<std::string, std::vector<DetectedEvent>> by_server;
    by_server["S1"] = {make_event("10.0.0.0/24", 100, 200, ConfidenceClass::A, "S1")};
    by_server["S2"] = {make_event("10.0.0.0/24", 200, 300, ConfidenceClass::A, "S2")};
    CHECK(consolidate(by_server).size() == 2);

    by_server["S2"] = {make_event("10.0.0.0/24", 199, 300, ConfidenceClass::A, "S2")};
    CHECK(consolidate(by_server).size() == 1);
}

TEST_CASE("events and single spikes never merge with each other") {
    std::map<std::string, std::vector<DetectedEvent>> by_server;
    by_server["S1"] = {make_event("10.0.0.0/24", 100, 300, ConfidenceClass::A, "S1")};
    by_server["S2"] = {make_event("10.0.0.0/24", 150, 214, ConfidenceClass::A, "S2",
                                  EventKind::single_spike)};
    auto out = consolidate(by_server);
    CHECK(out.size() == 2);
}

TEST_CASE("chained overlaps collapse to a single event") {
    std::map<std::string, std::vector<DetectedEvent>> by_server;
    by_server["S1"] = {make_event("10.0.0.0/24", 100, 200, ConfidenceClass::C, "S1"),
                       make_event("10.0.0.0/24", 350, 500, ConfidenceClass::B, "S1")};
    by_server["S2"] = {make_event("10.0.0.0/24", 150, 360, ConfidenceClass::C, "S2")};
    auto out = consolidate(by_server);
    REQUIRE(out.size() == 1);
    CHECK(out[0].start_epoch == 100);
    CHECK(out[0].end_epoch == 500);
    CHECK(out[0].confidence_class == ConfidenceClass::B);
    CHECK(out[0].constituent_event_count == 3);
}

TEST_CASE("consolidation equals the transitive-closure oracle on random fixtures") {
    std::mt19937_64 rng(190528);
    const char* prefixes[] = {"10.0.0.0/24", "10.0.1.0/24", "10.0.2.0/24", "10.0.3.0/24",
                              "10.1.0.0/24", "10.1.1.0/24", "10.2.0.0/24", "10.3.0.0/24",
                              "172.16.0.0/24", "192.168.1.0/24"};
    const char* servers[] = {"S1", "S2", "S3", "S4"};
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 1 + rng() % 50;
        std::map<std::string, std::vector<DetectedEvent>> by_server;
        std::vector<DetectedEvent> all;
        for (std::size_t i = 0; i < n; ++i) {
            std::int64_t start = static_cast<std::int64_t>(rng() % 1000);
            std::int64_t len = 1 + static_cast<std::int64_t>(rng() % 200);
            auto ev = make_event(prefixes[rng() % 10], start, start + len,
                                 static_cast<ConfidenceClass>(rng() % 3), servers[rng() % 4],
                                 rng() % 4 == 0 ? EventKind::single_spike : EventKind::event,
                                 rng() % 2 ? Direction::c2s : Direction::s2c);
            by_server[ev.server_id].push_back(ev);
            all.push_back(ev);
        }
        auto got = consolidate(by_server);
        auto expected = oracle_consolidate(all);
        CHECK(same_consolidation(got, expected));

        // Conservation: constituent counts sum to the input count.
        std::size_t total = 0;
        for (const auto& ev : got) total += ev.constituent_event_count;
        CHECK(total == n);
    }
}

TEST_CASE("consolidation output is independent of server labeling order") {
    std::mt19937_64 rng(5150);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<DetectedEvent> all;
        std::size_t n = 2 + rng() % 20;
        for (std::size_t i = 0; i < n; ++i) {
            std::int64_t start = static_cast<std::int64_t>(rng() % 300);
            all.push_back(make_event("10.0.0.0/24", start,
                                     start + 1 + static_cast<std::int64_t>(rng() % 100),
                                     static_cast<ConfidenceClass>(rng() % 3),
                                     (std::string("S") + std::to_string(1 + rng() % 4)).c_str()));
        }
        std::map<std::string, std::vector<DetectedEvent>> forward;
        for (const auto& ev : all) forward[ev.server_id].push_back(ev);

        // Relabel servers in reverse lexicographic order; the merged event
        // set must be identical up to the server names.
        std::map<std::string, std::vector<DetectedEvent>> reversed;
        for (const auto& ev : all) {
            auto renamed = ev;
            renamed.server_id = "Z" + ev.server_id;
            reversed[renamed.server_id].push_back(renamed);
        }
        auto a = consolidate(forward);
        auto b = consolidate(reversed);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].start_epoch == b[i].start_epoch);
            CHECK(a[i].end_epoch == b[i].end_epoch);
            CHECK(a[i].confidence_class == b[i].confidence_class);
            CHECK(a[i].constituent_event_count == b[i].constituent_event_count);
        }
    }
}

TEST_CASE("consolidated events round trip through CSV") {
    std::map<std::string, std::vector<DetectedEvent>> by_server;
    by_server["S1"] = {make_event("10.0.0.0/24", 100, 200, ConfidenceClass::B, "S1")};
    by_server["S2"] = {make_event("10.0.0.0/24", 150, 300, ConfidenceClass::A, "S2")};
    auto out = consolidate(by_server);

    auto path = std::filesystem::temp_directory_path() / "owdmon-consolidated.csv";
    write_consolidated_csv(out, path.string());
    auto back = read_consolidated_csv(path.string());
    std::filesystem::remove(path);
    REQUIRE(back.size() == out.size());
    CHECK(same_consolidation(out, back));
}

TEST_CASE("prefix tables") {
    testutil::TempDir tmp("owdmon-pfx");

    SUBCASE("caida format with multi-origin entries") {
        auto path = tmp.path() / "caida.txt";
        std::ofstream(path) << "10.0.0.0\t16\t64500\n"
                            << "10.0.128.0\t17\t64501_64502\n"
                            << "2001:db8::\t32\t64510\n";
        PrefixTable table;
        table.load_caida(path.string());
        CHECK(table.size() == 3);
        REQUIRE(table.audit_notes().size() == 1);

        auto hit = table.longest_match(*IpAddr::parse("10.0.200.1"));
        REQUIRE(hit.has_value());
        CHECK(hit->asn == 64501);  // first ASN of the multi-origin list
        CHECK(hit->prefix.to_string() == "10.0.128.0/17");

        auto low = table.longest_match(*IpAddr::parse("10.0.1.1"));
        REQUIRE(low.has_value());
        CHECK(low->asn == 64500);

        auto v6 = table.longest_match(*IpAddr::parse("2001:db8::55"));
        REQUIRE(v6.has_value());
        CHECK(v6->asn == 64510);

        CHECK(!table.longest_match(*IpAddr::parse("11.0.0.1")).has_value());
    }

    SUBCASE("cymru format") {
        auto path = tmp.path() / "cymru.txt";
        std::ofstream(path) << "64499 | 198.51.0.0/16\n"
                            << "64498 | 198.51.100.0/24\n";
        PrefixTable table;
        table.load_cymru(path.string());
        auto hit = table.longest_match(*IpAddr::parse("198.51.100.7"));
        REQUIRE(hit.has_value());
        CHECK(hit->asn == 64498);  // longest match wins
    }

    SUBCASE("unparseable lines are fatal") {
        auto path = tmp.path() / "bad.txt";
        std::ofstream(path) << "10.0.0.0\t16\n";
        PrefixTable table;
        CHECK_THROWS((void)table.load_caida(path.string()));
    }

    SUBCASE("longest match equals a linear-scan oracle") {
        std::mt19937_64 rng(2718);
        PrefixTable table;
        std::vector<PrefixTableEntry> entries;
        for (int i = 0; i < 300; ++i) {
            int len = 8 + static_cast<int>(rng() % 17);
            auto base = IpAddr::v4_from_bytes(static_cast<std::uint8_t>(rng() % 4 + 10),
                                              static_cast<std::uint8_t>(rng() % 256),
                                              static_cast<std::uint8_t>(rng() % 256), 0);
            Prefix p = Prefix::of(base, len);
            auto asn = static_cast<std::uint32_t>(64000 + i);
            table.add(p, asn, PrefixTableEntry::Source::caida);
            entries.push_back({p, asn, PrefixTableEntry::Source::caida});
        }
        for (int q = 0; q < 500; ++q) {
            auto ip = IpAddr::v4_from_bytes(static_cast<std::uint8_t>(rng() % 6 + 9),
                                            static_cast<std::uint8_t>(rng() % 256),
                                            static_cast<std::uint8_t>(rng() % 256),
                                            static_cast<std::uint8_t>(rng() % 256));
            const PrefixTableEntry* best = nullptr;
            for (const auto& e : entries) {
                if (!e.prefix.contains(ip)) continue;
                if (!best || e.prefix.length > best->prefix.length) best = &e;
            }
            auto got = table.longest_match(ip);
            if (!best) {
                CHECK(!got.has_value());
            } else {
                REQUIRE(got.has_value());
                CHECK(got->prefix.length == best->prefix.length);
            }
        }
    }
}

TEST_CASE("aggregation") {
    PrefixTable table;
    table.add(*Prefix::parse("10.0.0.0/16"), 64500, PrefixTableEntry::Source::caida);
    table.add(*Prefix::parse("172.16.0.0/12"), 64501, PrefixTableEntry::Source::caida);

    auto consolidated_event = [](const char* prefix, std::int64_t start, std::int64_t end,
                                 ConfidenceClass cls, EventKind kind = EventKind::event) {
        ConsolidatedEvent ev;
        ev.prefix = *Prefix::parse(prefix);
        ev.direction = Direction::c2s;
        ev.kind = kind;
        ev.start_epoch = start;
        ev.end_epoch = end;
        ev.confidence_class = cls;
        ev.contributing_servers = {"S1"};
        ev.constituent_event_count = 1;
        return ev;
    };

    SUBCASE("two overlapping /24s under one /16 aggregate with the highest class") {
        auto result = aggregate({consolidated_event("10.0.1.0/24", 100, 200, ConfidenceClass::B),
                                 consolidated_event("10.0.2.0/24", 150, 250, ConfidenceClass::A)},
                                table);
        REQUIRE(result.events.size() == 1);
        CHECK(result.events[0].announced_prefix.to_string() == "10.0.0.0/16");
        CHECK(result.events[0].asn == 64500);
        CHECK(result.events[0].start_epoch == 100);
        CHECK(result.events[0].end_epoch == 250);
        CHECK(result.events[0].confidence_class == ConfidenceClass::A);
        CHECK(result.events[0].constituent_prefixes.size() == 2);
    }
    SUBCASE("a single constituent prefix yields no aggregate") {
        auto result = aggregate({consolidated_event("10.0.1.0/24", 100, 200, ConfidenceClass::A)},
                                table);
        CHECK(result.events.empty());
    }
    SUBCASE("single spikes are omitted from aggregation") {
        auto result = aggregate({consolidated_event("10.0.1.0/24", 100, 200, ConfidenceClass::A,
                                                    EventKind::single_spike),
                                 consolidated_event("10.0.2.0/24", 150, 250, ConfidenceClass::A)},
                                table);
        CHECK(result.events.empty());
    }
    SUBCASE("prefixes without a table entry are reported unmatched") {
        auto result = aggregate({consolidated_event("192.168.0.0/24", 100, 200,
                                                    ConfidenceClass::A)},
                                table);
        CHECK(result.events.empty());
        REQUIRE(result.unmatched_prefixes.size() == 1);
        CHECK(result.unmatched_prefixes[0].to_string() == "192.168.0.0/24");
    }
    SUBCASE("an empty table is an error") {
        PrefixTable empty;
        CHECK_THROWS_AS((void)aggregate({}, empty), std::invalid_argument);
    }
    SUBCASE("overlap groups split within an announced prefix") {
        auto result = aggregate({consolidated_event("10.0.1.0/24", 100, 200, ConfidenceClass::B),
                                 consolidated_event("10.0.2.0/24", 150, 250, ConfidenceClass::C),
                                 consolidated_event("10.0.3.0/24", 1000, 1100, ConfidenceClass::A),
                                 consolidated_event("10.0.4.0/24", 1050, 1200, ConfidenceClass::B)},
                                table);
        REQUIRE(result.events.size() == 2);
        CHECK(result.events[0].confidence_class == ConfidenceClass::B);
        CHECK(result.events[1].confidence_class == ConfidenceClass::A);
    }
}

TEST_CASE("as ranking") {
    SUBCASE("empty input yields an empty ranking") {
        CHECK(rank_ases({}).empty());
    }
    SUBCASE("ties break by ascending ASN and top_n truncates") {
        std::vector<AggregatedEvent> events;
        auto add = [&](std::uint32_t asn, int count) {
            for (int i = 0; i < count; ++i) {
                AggregatedEvent ev;
                ev.asn = asn;
                ev.announced_prefix = *Prefix::parse("10.0.0.0/16");
                events.push_back(ev);
            }
        };
        add(2, 5);
        add(1, 5);
        add(3, 1);
        auto ranking = rank_ases(events, {}, 2);
        REQUIRE(ranking.size() == 2);
        CHECK(ranking[0].asn == 1);
        CHECK(ranking[1].asn == 2);
        CHECK(ranking[0].rank == 1);
        CHECK(ranking[1].rank == 2);
    }
    SUBCASE("rows carry rank, ASN, name and count") {
        std::vector<AggregatedEvent> events;
        AggregatedEvent ev;
        ev.asn = 64500;
        ev.announced_prefix = *Prefix::parse("10.0.0.0/16");
        events.push_back(ev);
        auto ranking = rank_ases(events, {{64500, "Example Transit"}}, 5);
        REQUIRE(ranking.size() == 1);
        CHECK(ranking[0].rank == 1);
        CHECK(ranking[0].asn == 64500);
        CHECK(ranking[0].name == "Example Transit");
        CHECK(ranking[0].event_count == 1);
    }
}
