#include "owdmon/records.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "owdmon/util.hpp"

namespace owdmon {

std::string format_csv_row(const NtpPacketRecord& r) {
    std::string row;
    row.reserve(128);
    row += std::to_string(r.packet_number);
    row += ',';
    row += r.src_ip.to_string();
    row += ',';
    row += r.dst_ip.to_string();
    row += ',';
    row += format_fixed(r.latency, 9);
    row += ',';
    row += std::to_string(r.poll_exponent);
    row += ',';
    row += format_fixed(r.packet_timestamp, 6);
    row += ',';
    row += format_fixed(r.root_delay, 9);
    row += ',';
    row += format_fixed(r.rtt, 9);
    row += ',';
    row += r.reference_ip;
    return row;
}

void write_csv(const std::vector<NtpPacketRecord>& records, std::ostream& out) {
    out << kCsvHeader << '\n';
    std::string buf;
    for (const auto& r : records) {
        buf = format_csv_row(r);
        buf += '\n';
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
}

void write_csv_file(const std::vector<NtpPacketRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write csv: " + path);
    write_csv(records, out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Unparseable IPs become the zero address and unparseable numbers NaN, so the
// integrity filter sees and drops them; only a wrong column count rejects the
// whole line here.
NtpPacketRecord parse_row(const std::vector<std::string_view>& f) {
    NtpPacketRecord r;
    r.packet_number = static_cast<std::uint64_t>(parse_int64(f[0]).value_or(0));
    r.src_ip = IpAddr::parse(f[1]).value_or(IpAddr{});
    r.dst_ip = IpAddr::parse(f[2]).value_or(IpAddr{});
    r.latency = parse_double(f[3]).value_or(kNan);
    r.poll_exponent = static_cast<int>(parse_int64(f[4]).value_or(-1));
    r.packet_timestamp = parse_double(f[5]).value_or(kNan);
    r.root_delay = parse_double(f[6]).value_or(kNan);
    r.rtt = parse_double(f[7]).value_or(kNan);
    r.reference_ip = std::string(f[8]);
    return r;
}

}  // namespace

CsvReadResult read_csv(std::istream& in) {
    CsvReadResult out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line == kCsvHeader) continue;
        }
        auto fields = split_fields(line);
        if (fields.size() != 9) {
            ++out.corrupted;
            continue;
        }
        out.records.push_back(parse_row(fields));
    }
    return out;
}

CsvReadResult read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open csv: " + path);
    return read_csv(in);
}

bool record_passes_integrity(const NtpPacketRecord& r) {
    auto good_delay = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!good_delay(r.latency) || !good_delay(r.root_delay) || !good_delay(r.rtt)) return false;
    if (r.src_ip.is_zero() || r.dst_ip.is_zero()) return false;
    if (r.poll_exponent < 0 || r.poll_exponent > 17) return false;
    if (!std::isfinite(r.packet_timestamp)) return false;
    return true;
}

FilterResult integrity_filter(const std::vector<NtpPacketRecord>& records) {
    FilterResult out;
    out.records.reserve(records.size());
    for (const auto& r : records) {
        if (record_passes_integrity(r)) {
            out.records.push_back(r);
        } else {
            ++out.rejected;
        }
    }
    return out;
}

}  // namespace owdmon
