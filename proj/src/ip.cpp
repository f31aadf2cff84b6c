#include "owdmon/ip.hpp"

#include <arpa/inet.h>

#include <cstring>

#include "owdmon/util.hpp"

namespace owdmon {

std::optional<IpAddr> IpAddr::parse(std::string_view text) {
    if (text.empty() || text.size() >= INET6_ADDRSTRLEN) return std::nullopt;
    char buf[INET6_ADDRSTRLEN];
    std::memcpy(buf, text.data(), text.size());
    buf[text.size()] = '\0';

    IpAddr out;
    if (text.find(':') != std::string_view::npos) {
        in6_addr a6{};
        if (inet_pton(AF_INET6, buf, &a6) != 1) return std::nullopt;
        std::memcpy(out.bytes.data(), &a6, 16);
        out.v6 = true;
        return out;
    }
    in_addr a4{};
    if (inet_pton(AF_INET, buf, &a4) != 1) return std::nullopt;
    std::memcpy(out.bytes.data(), &a4, 4);
    out.v6 = false;
    return out;
}

IpAddr IpAddr::v4_from_bytes(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    IpAddr out;
    out.bytes[0] = a;
    out.bytes[1] = b;
    out.bytes[2] = c;
    out.bytes[3] = d;
    return out;
}

std::string IpAddr::to_string() const {
    char buf[INET6_ADDRSTRLEN];
    if (v6) {
        in6_addr a6{};
        std::memcpy(&a6, bytes.data(), 16);
        inet_ntop(AF_INET6, &a6, buf, sizeof(buf));
    } else {
        in_addr a4{};
        std::memcpy(&a4, bytes.data(), 4);
        inet_ntop(AF_INET, &a4, buf, sizeof(buf));
    }
    return buf;
}

bool IpAddr::is_zero() const {
    std::size_t n = v6 ? 16 : 4;
    for (std::size_t i = 0; i < n; ++i)
        if (bytes[i] != 0) return false;
    return true;
}

namespace {

IpAddr mask_bits(const IpAddr& ip, int bits) {
    IpAddr out = ip;
    int total = ip.v6 ? 128 : 32;
    if (bits > total) bits = total;
    for (int i = 0; i < 16; ++i) {
        int bit_start = i * 8;
        if (bit_start + 8 <= bits) continue;
        if (bit_start >= bits) {
            out.bytes[static_cast<std::size_t>(i)] = 0;
        } else {
            int keep = bits - bit_start;
            out.bytes[static_cast<std::size_t>(i)] &=
                static_cast<std::uint8_t>(0xFFu << (8 - keep));
        }
    }
    return out;
}

}  // namespace

std::optional<Prefix> Prefix::parse(std::string_view text) {
    std::size_t slash = text.find('/');
    if (slash == std::string_view::npos) return std::nullopt;
    auto ip = IpAddr::parse(text.substr(0, slash));
    auto len = parse_int64(text.substr(slash + 1));
    if (!ip || !len) return std::nullopt;
    int max_len = ip->v6 ? 128 : 32;
    if (*len < 0 || *len > max_len) return std::nullopt;
    Prefix p;
    p.base = mask_bits(*ip, static_cast<int>(*len));
    p.length = static_cast<int>(*len);
    return p;
}

Prefix Prefix::cluster_of(const IpAddr& ip, int v4_bits, int v6_bits) {
    return of(ip, ip.v6 ? v6_bits : v4_bits);
}

Prefix Prefix::of(const IpAddr& ip, int length) {
    Prefix p;
    p.base = mask_bits(ip, length);
    p.length = length;
    return p;
}

bool Prefix::contains(const IpAddr& ip) const {
    if (ip.v6 != base.v6) return false;
    return mask_bits(ip, length).bytes == base.bytes;
}

std::string Prefix::to_string() const {
    return base.to_string() + "/" + std::to_string(length);
}

std::string Prefix::file_token() const {
    std::string s = to_string();
    for (char& c : s) {
        if (c == '/' || c == ':') c = '_';
    }
    return s;
}

std::uint64_t stable_hash(const IpAddr& ip) {
    std::uint64_t h = fnv1a_bytes(ip.bytes.data(), ip.bytes.size());
    return fnv1a_bytes(&ip.v6, 1, h);
}

std::uint64_t stable_hash(const Prefix& p) {
    std::uint64_t h = stable_hash(p.base);
    return fnv1a_bytes(&p.length, sizeof(p.length), h);
}

}  // namespace owdmon
