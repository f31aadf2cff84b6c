#include "owdmon/geo.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "owdmon/util.hpp"

namespace owdmon {

TableGeoProvider::TableGeoProvider(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("geolocation table unavailable: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.rfind("ip,", 0) == 0) continue;
        auto f = split_fields(line);
        if (f.size() != 3)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected ip,lat,lon");
        auto ip = IpAddr::parse(f[0]);
        auto lat = parse_double(f[1]);
        auto lon = parse_double(f[2]);
        if (!ip || !lat || !lon)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unparseable row");
        table_.emplace_back(*ip, GeoPoint{*lat, *lon});
    }
    std::sort(table_.begin(), table_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
}

std::optional<GeoPoint> TableGeoProvider::locate(const IpAddr& ip) const {
    auto it = std::lower_bound(table_.begin(), table_.end(), ip,
                               [](const auto& row, const IpAddr& key) { return row.first < key; });
    if (it == table_.end() || it->first != ip) return std::nullopt;
    return it->second;
}

GeolocateResult geolocate(const std::vector<IpAddr>& ips, const GeoProvider& provider) {
    GeolocateResult out;
    for (const auto& ip : ips) {
        if (auto point = provider.locate(ip)) {
            out.points.emplace_back(ip, *point);
        } else {
            ++out.skipped;
        }
    }
    return out;
}

namespace {

double cross(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
    return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

}  // namespace

std::vector<GeoPoint> convex_hull(std::vector<GeoPoint> points) {
    if (points.empty()) throw std::invalid_argument("convex_hull: no points");
    std::sort(points.begin(), points.end(), [](const GeoPoint& a, const GeoPoint& b) {
        if (a.lon != b.lon) return a.lon < b.lon;
        return a.lat < b.lat;
    });
    points.erase(std::unique(points.begin(), points.end()), points.end());
    const std::size_t n = points.size();
    if (n <= 2) return points;

    std::vector<GeoPoint> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {  // lower hull
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    for (std::size_t i = n - 1, t = k + 1; i-- > 0;) {  // upper hull
        while (k >= t && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    hull.resize(k - 1);
    return hull;
}

std::string footprints_geojson(const std::vector<GeoFootprint>& footprints) {
    using nlohmann::ordered_json;
    ordered_json features = ordered_json::array();
    for (const auto& fp : footprints) {
        for (const auto& [ip, pt] : fp.points) {
            features.push_back({{"type", "Feature"},
                                {"geometry",
                                 {{"type", "Point"}, {"coordinates", {pt.lon, pt.lat}}}},
                                {"properties",
                                 {{"prefix", fp.prefix.to_string()}, {"ip", ip.to_string()}}}});
        }
        if (fp.hull.empty()) continue;
        ordered_json geometry;
        if (fp.hull.size() == 1) {
            geometry = {{"type", "Point"}, {"coordinates", {fp.hull[0].lon, fp.hull[0].lat}}};
        } else if (fp.hull.size() == 2) {
            geometry = {{"type", "LineString"},
                        {"coordinates",
                         {{fp.hull[0].lon, fp.hull[0].lat}, {fp.hull[1].lon, fp.hull[1].lat}}}};
        } else {
            ordered_json ring = ordered_json::array();
            for (const auto& p : fp.hull) ring.push_back({p.lon, p.lat});
            ring.push_back({fp.hull[0].lon, fp.hull[0].lat});  // closed ring
            geometry = {{"type", "Polygon"}, {"coordinates", {ring}}};
        }
        features.push_back({{"type", "Feature"},
                            {"geometry", geometry},
                            {"properties",
                             {{"prefix", fp.prefix.to_string()}, {"kind", "footprint"}}}});
    }
    ordered_json fc = {{"type", "FeatureCollection"}, {"features", features}};
    return fc.dump(2) + "\n";
}

}  // namespace owdmon
