#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace owdmon {

// IPv4 or IPv6 address. IPv4 occupies the first 4 bytes.
struct IpAddr {
    std::array<std::uint8_t, 16> bytes{};
    bool v6 = false;

    static std::optional<IpAddr> parse(std::string_view text);
    static IpAddr v4_from_bytes(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d);

    std::string to_string() const;
    bool is_zero() const;

    friend auto operator<=>(const IpAddr&, const IpAddr&) = default;
};

// Network prefix with explicit length (bits).
struct Prefix {
    IpAddr base;   // masked to `length` bits
    int length = 0;

    static std::optional<Prefix> parse(std::string_view text);
    // The detection cluster prefix of an address: /24 for IPv4, /96 for IPv6.
    static Prefix cluster_of(const IpAddr& ip, int v4_bits = 24, int v6_bits = 96);
    static Prefix of(const IpAddr& ip, int length);

    bool contains(const IpAddr& ip) const;
    std::string to_string() const;
    // Filesystem-safe form: '/' replaced by '_'.
    std::string file_token() const;

    friend auto operator<=>(const Prefix&, const Prefix&) = default;
};

std::uint64_t stable_hash(const IpAddr& ip);
std::uint64_t stable_hash(const Prefix& p);

}  // namespace owdmon
