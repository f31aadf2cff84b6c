#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "owdmon/ip.hpp"

namespace owdmon {

struct GeoPoint {
    double lat = 0;
    double lon = 0;
    bool operator==(const GeoPoint&) const = default;
};

class GeoProvider {
public:
    virtual ~GeoProvider() = default;
    virtual std::optional<GeoPoint> locate(const IpAddr& ip) const = 0;
};

// Offline provider backed by a CSV table `ip,lat,lon`. Construction throws
// when the table is unavailable; per-IP misses are not errors.
class TableGeoProvider final : public GeoProvider {
public:
    explicit TableGeoProvider(const std::string& path);
    std::optional<GeoPoint> locate(const IpAddr& ip) const override;

private:
    std::vector<std::pair<IpAddr, GeoPoint>> table_;
};

struct GeolocateResult {
    std::vector<std::pair<IpAddr, GeoPoint>> points;
    std::size_t skipped = 0;  // IPs the provider could not resolve
};

GeolocateResult geolocate(const std::vector<IpAddr>& ips, const GeoProvider& provider);

// Monotone-chain convex hull, counterclockwise, duplicates removed first.
// One point maps to itself; a collinear set maps to its two extremes.
// Throws on an empty input.
std::vector<GeoPoint> convex_hull(std::vector<GeoPoint> points);

struct GeoFootprint {
    Prefix prefix;
    std::vector<std::pair<IpAddr, GeoPoint>> points;
    std::vector<GeoPoint> hull;
};

// GeoJSON FeatureCollection: one Point feature per located client plus the
// hull as Polygon (LineString / Point for the degenerate cases).
std::string footprints_geojson(const std::vector<GeoFootprint>& footprints);

}  // namespace owdmon
