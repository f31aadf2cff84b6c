// Test-only helpers: craft NTP packets into pcap byte streams, independent of
// the parser under test, plus a scratch-directory guard.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testutil {

inline void put_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

struct NtpTimestamp {
    std::uint32_t secs = 0;
    std::uint32_t frac = 0;
};

// Unix seconds to NTP era-0 fixed point.
inline NtpTimestamp to_ntp(double unix_seconds) {
    double whole = std::floor(unix_seconds);
    NtpTimestamp ts;
    ts.secs = static_cast<std::uint32_t>(static_cast<std::uint64_t>(whole) + 2208988800ULL);
    ts.frac = static_cast<std::uint32_t>(std::llround((unix_seconds - whole) * 4294967296.0));
    return ts;
}

struct NtpPayloadSpec {
    int mode = 3;
    int version = 4;
    int stratum = 2;
    int poll = 6;
    std::uint32_t root_delay_raw = 0;  // 16.16 fixed point
    std::array<std::uint8_t, 4> refid = {192, 0, 2, 1};
    NtpTimestamp reference{};
    NtpTimestamp origin{};
    NtpTimestamp receive{};
    NtpTimestamp transmit{};
};

inline std::vector<std::uint8_t> ntp_payload(const NtpPayloadSpec& s) {
    std::vector<std::uint8_t> out;
    out.push_back(static_cast<std::uint8_t>((s.version << 3) | s.mode));
    out.push_back(static_cast<std::uint8_t>(s.stratum));
    out.push_back(static_cast<std::uint8_t>(s.poll));
    out.push_back(0xE9);  // precision, arbitrary
    put_be32(out, s.root_delay_raw);
    put_be32(out, 0);  // root dispersion
    out.insert(out.end(), s.refid.begin(), s.refid.end());
    for (const auto& ts : {s.reference, s.origin, s.receive, s.transmit}) {
        put_be32(out, ts.secs);
        put_be32(out, ts.frac);
    }
    return out;
}

inline std::vector<std::uint8_t> udp4_frame(const std::array<std::uint8_t, 4>& src,
                                            const std::array<std::uint8_t, 4>& dst,
                                            std::uint16_t sport, std::uint16_t dport,
                                            const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> f;
    // Ethernet
    for (int i = 0; i < 12; ++i) f.push_back(0);
    put_be16(f, 0x0800);
    // IPv4
    f.push_back(0x45);
    f.push_back(0);
    put_be16(f, static_cast<std::uint16_t>(20 + 8 + payload.size()));
    put_be16(f, 0);
    put_be16(f, 0);
    f.push_back(64);
    f.push_back(17);
    put_be16(f, 0);  // checksum unused by the reader
    f.insert(f.end(), src.begin(), src.end());
    f.insert(f.end(), dst.begin(), dst.end());
    // UDP
    put_be16(f, sport);
    put_be16(f, dport);
    put_be16(f, static_cast<std::uint16_t>(8 + payload.size()));
    put_be16(f, 0);
    f.insert(f.end(), payload.begin(), payload.end());
    return f;
}

inline std::vector<std::uint8_t> udp6_frame(const std::array<std::uint8_t, 16>& src,
                                            const std::array<std::uint8_t, 16>& dst,
                                            std::uint16_t sport, std::uint16_t dport,
                                            const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> f;
    for (int i = 0; i < 12; ++i) f.push_back(0);
    put_be16(f, 0x86DD);
    f.push_back(0x60);
    f.push_back(0);
    put_be16(f, 0);
    put_be16(f, static_cast<std::uint16_t>(8 + payload.size()));
    f.push_back(17);
    f.push_back(64);
    f.insert(f.end(), src.begin(), src.end());
    f.insert(f.end(), dst.begin(), dst.end());
    put_be16(f, sport);
    put_be16(f, dport);
    put_be16(f, static_cast<std::uint16_t>(8 + payload.size()));
    put_be16(f, 0);
    f.insert(f.end(), payload.begin(), payload.end());
    return f;
}

class PcapBuilder {
public:
    PcapBuilder() {
        put_le32(buf_, 0xa1b2c3d4);  // little-endian microsecond pcap
        put_le16(buf_, 2);
        put_le16(buf_, 4);
        put_le32(buf_, 0);
        put_le32(buf_, 0);
        put_le32(buf_, 65535);
        put_le32(buf_, 1);  // Ethernet
    }

    // Appends a frame; a non-negative `truncate_to` caps the captured bytes
    // (orig_len still records the full size).
    void add(double ts, const std::vector<std::uint8_t>& frame, int truncate_to = -1) {
        std::uint32_t incl = truncate_to >= 0
                                 ? std::min<std::uint32_t>(static_cast<std::uint32_t>(truncate_to),
                                                           static_cast<std::uint32_t>(frame.size()))
                                 : static_cast<std::uint32_t>(frame.size());
        double whole = std::floor(ts);
        put_le32(buf_, static_cast<std::uint32_t>(whole));
        put_le32(buf_, static_cast<std::uint32_t>(std::llround((ts - whole) * 1e6)));
        put_le32(buf_, incl);
        put_le32(buf_, static_cast<std::uint32_t>(frame.size()));
        buf_.insert(buf_.end(), frame.begin(), frame.begin() + incl);
    }

    // Writes a record header promising more bytes than follow (file cut off).
    void add_cut_off(double ts, const std::vector<std::uint8_t>& frame) {
        double whole = std::floor(ts);
        put_le32(buf_, static_cast<std::uint32_t>(whole));
        put_le32(buf_, static_cast<std::uint32_t>(std::llround((ts - whole) * 1e6)));
        put_le32(buf_, static_cast<std::uint32_t>(frame.size() + 64));
        put_le32(buf_, static_cast<std::uint32_t>(frame.size() + 64));
        buf_.insert(buf_.end(), frame.begin(), frame.end());
    }

    const std::vector<std::uint8_t>& bytes() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::mt19937_64 rng{std::random_device{}()};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
