#include "owdmon/pcap.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "owdmon/util.hpp"

namespace owdmon {

namespace {

constexpr std::uint32_t kMagicUsec = 0xa1b2c3d4u;
constexpr std::uint32_t kMagicUsecSwapped = 0xd4c3b2a1u;
constexpr std::uint32_t kMagicNsec = 0xa1b23c4du;
constexpr std::uint32_t kMagicNsecSwapped = 0x4d3cb2a1u;

constexpr std::uint16_t kEthertypeIpv4 = 0x0800;
constexpr std::uint16_t kEthertypeIpv6 = 0x86DD;
constexpr std::uint16_t kEthertypeVlan = 0x8100;
constexpr std::uint16_t kEthertypeQinQ = 0x88A8;

constexpr int kLinkNull = 0;
constexpr int kLinkEthernet = 1;
constexpr int kLinkRaw = 101;
constexpr int kLinkLinuxSll = 113;

// Seconds between the NTP era-0 epoch (1900) and the Unix epoch.
constexpr double kNtpUnixOffset = 2208988800.0;
// Half the 32-bit seconds range; timestamps farther than this from the
// capture time cannot be disambiguated and are treated as corrupt.
constexpr double kEraHalfRange = 2147483648.0;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct Cursor {
    const std::uint8_t* p;
    const std::uint8_t* end;
    std::size_t remaining() const { return static_cast<std::size_t>(end - p); }
};

std::uint16_t read_be16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t read_be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

double ntp_timestamp_to_unix(const std::uint8_t* p, double capture_ts) {
    std::uint32_t secs = read_be32(p);
    std::uint32_t frac = read_be32(p + 4);
    if (secs == 0 && frac == 0) return kNan;  // unset field
    double unix_ts = static_cast<double>(secs) - kNtpUnixOffset +
                  static_cast<double>(frac) / 4294967296.0;
    if (std::fabs(unix_ts - capture_ts) > kEraHalfRange) return kNan;
    return unix_ts;
}

struct UdpInfo {
    IpAddr src;
    IpAddr dst;
    std::uint16_t sport = 0;
    std::uint16_t dport = 0;
    const std::uint8_t* payload = nullptr;
    std::size_t payload_len = 0;
};

bool parse_ip_and_udp(Cursor c, std::uint16_t ethertype, UdpInfo& out) {
    if (ethertype == kEthertypeIpv4) {
        if (c.remaining() < 20) return false;
        std::uint8_t ihl = static_cast<std::uint8_t>((c.p[0] & 0x0F) * 4);
        if ((c.p[0] >> 4) != 4 || ihl < 20 || c.remaining() < ihl) return false;
        if (c.p[9] != 17) return false;  // UDP only
        std::uint16_t frag = read_be16(c.p + 6);
        if (frag & 0x3FFF) return false;  // fragments carry no reusable NTP payload
        out.src = IpAddr::v4_from_bytes(c.p[12], c.p[13], c.p[14], c.p[15]);
        out.dst = IpAddr::v4_from_bytes(c.p[16], c.p[17], c.p[18], c.p[19]);
        c.p += ihl;
    } else if (ethertype == kEthertypeIpv6) {
        if (c.remaining() < 40) return false;
        if ((c.p[0] >> 4) != 6) return false;
        if (c.p[6] != 17) return false;  // no extension-header walking
        out.src.v6 = true;
        out.dst.v6 = true;
        std::memcpy(out.src.bytes.data(), c.p + 8, 16);
        std::memcpy(out.dst.bytes.data(), c.p + 24, 16);
        c.p += 40;
    } else {
        return false;
    }

    if (c.remaining() < 8) return false;
    out.sport = read_be16(c.p);
    out.dport = read_be16(c.p + 2);
    std::uint16_t udp_len = read_be16(c.p + 4);
    c.p += 8;
    std::size_t declared = udp_len >= 8 ? udp_len - 8u : 0u;
    out.payload = c.p;
    out.payload_len = std::min<std::size_t>(declared, c.remaining());
    return true;
}

bool parse_link_layer(Cursor& c, int link_type, std::uint16_t& ethertype) {
    switch (link_type) {
        case kLinkEthernet: {
            if (c.remaining() < 14) return false;
            ethertype = read_be16(c.p + 12);
            c.p += 14;
            while (ethertype == kEthertypeVlan || ethertype == kEthertypeQinQ) {
                if (c.remaining() < 4) return false;
                ethertype = read_be16(c.p + 2);
                c.p += 4;
            }
            return true;
        }
        case kLinkLinuxSll: {
            if (c.remaining() < 16) return false;
            ethertype = read_be16(c.p + 14);
            c.p += 16;
            return true;
        }
        case kLinkRaw: {
            if (c.remaining() < 1) return false;
            ethertype = (c.p[0] >> 4) == 6 ? kEthertypeIpv6 : kEthertypeIpv4;
            return true;
        }
        case kLinkNull: {
            if (c.remaining() < 4) return false;
            std::uint32_t family = c.p[0] | (c.p[1] << 8) | (c.p[2] << 16)
                                   | (static_cast<std::uint32_t>(c.p[3]) << 24);
            if (family > 0xFFFF) family = read_be32(c.p);  // opposite-endian writer
            ethertype = (family == 2) ? kEthertypeIpv4 : kEthertypeIpv6;
            c.p += 4;
            return true;
        }
        default:
            return false;
    }
}

}  // namespace

PcapParseResult parse_pcap(std::span<const std::uint8_t> data, const IpAddr& /*server_ip*/) {
    if (data.size() < 24) throw PcapError("pcap global header truncated");

    std::uint32_t magic;
    std::memcpy(&magic, data.data(), 4);
    bool swap = false;
    bool nanos = false;
    switch (magic) {
        case kMagicUsec: break;
        case kMagicNsec: nanos = true; break;
        case kMagicUsecSwapped: swap = true; break;
        case kMagicNsecSwapped: swap = true; nanos = true; break;
        default:
            throw PcapError("not a pcap file (bad magic)");
    }
    auto rd32 = [&](std::size_t off) {
        std::uint32_t v;
        std::memcpy(&v, data.data() + off, 4);
        return swap ? __builtin_bswap32(v) : v;
    };

    int link_type = static_cast<int>(rd32(20));
    PcapParseResult out;
    std::size_t pos = 24;

    while (pos < data.size()) {
        if (pos + 16 > data.size()) {
            ++out.truncated_packets;
            break;
        }
        std::uint32_t ts_sec = rd32(pos);
        std::uint32_t ts_sub = rd32(pos + 4);
        std::uint32_t incl_len = rd32(pos + 8);
        pos += 16;
        if (pos + incl_len > data.size()) {
            ++out.truncated_packets;
            break;
        }
        const std::uint8_t* pkt = data.data() + pos;
        pos += incl_len;
        ++out.total_packets;

        double capture_ts = static_cast<double>(ts_sec) +
                            static_cast<double>(ts_sub) / (nanos ? 1e9 : 1e6);

        Cursor c{pkt, pkt + incl_len};
        std::uint16_t ethertype = 0;
        if (!parse_link_layer(c, link_type, ethertype)) continue;

        UdpInfo udp;
        if (!parse_ip_and_udp(c, ethertype, udp)) continue;
        if (udp.sport != 123 && udp.dport != 123) continue;
        ++out.udp123_packets;

        if (udp.payload_len < 48) {
            ++out.skipped_short;
            continue;
        }
        const std::uint8_t* ntp = udp.payload;

        NtpPacketRecord r;
        r.packet_number = out.total_packets;
        r.src_ip = udp.src;
        r.dst_ip = udp.dst;
        r.mode = ntp[0] & 0x07;
        r.poll_exponent = static_cast<std::int8_t>(ntp[2]);
        r.packet_timestamp = capture_ts;
        r.root_delay = static_cast<double>(static_cast<std::int32_t>(read_be32(ntp + 4))) / 65536.0;
        r.reference_ip = std::to_string(ntp[12]) + "." + std::to_string(ntp[13]) + "." +
                         std::to_string(ntp[14]) + "." + std::to_string(ntp[15]);
        double origin = ntp_timestamp_to_unix(ntp + 24, capture_ts);
        double receive = ntp_timestamp_to_unix(ntp + 32, capture_ts);
        r.latency = origin - receive;
        r.rtt = r.latency + r.root_delay;
        out.records.push_back(std::move(r));
    }
    return out;
}

std::vector<std::uint8_t> load_trace_file(const std::string& path) {
    std::string raw = read_file(path);
    if (raw.size() >= 2 && static_cast<std::uint8_t>(raw[0]) == 0x1F &&
        static_cast<std::uint8_t>(raw[1]) == 0x8B) {
        std::vector<std::uint8_t> inflated;
        inflated.reserve(raw.size() * 4);
        z_stream zs{};
        if (inflateInit2(&zs, 15 + 16) != Z_OK) throw PcapError("zlib init failed");
        zs.next_in = reinterpret_cast<Bytef*>(raw.data());
        zs.avail_in = static_cast<uInt>(raw.size());
        std::uint8_t chunk[1 << 16];
        int rc = Z_OK;
        do {
            zs.next_out = chunk;
            zs.avail_out = sizeof(chunk);
            rc = inflate(&zs, Z_NO_FLUSH);
            if (rc != Z_OK && rc != Z_STREAM_END) {
                inflateEnd(&zs);
                throw PcapError("gzip decompression failed: " + path);
            }
            inflated.insert(inflated.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
        } while (rc != Z_STREAM_END);
        inflateEnd(&zs);
        return inflated;
    }
    return std::vector<std::uint8_t>(raw.begin(), raw.end());
}

PcapParseResult parse_pcap_file(const std::string& path, const IpAddr& server_ip) {
    auto bytes = load_trace_file(path);
    return parse_pcap(std::span<const std::uint8_t>(bytes.data(), bytes.size()), server_ip);
}

}  // namespace owdmon
