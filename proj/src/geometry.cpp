#include "exmort/geometry.hpp"

#include "exmort/errors.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace exmort {

bool ring_contains(const Ring &ring, Point p) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point &a = ring[i];
        const Point &b = ring[j];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
            if (p.lon < x) {
                inside = !inside;
            }
        }
    }
    return inside;
}

bool contains(const Polygon &polygon, Point p) {
    if (!ring_contains(polygon.outer, p)) {
        return false;
    }
    for (const auto &hole : polygon.holes) {
        if (ring_contains(hole, p)) {
            return false;
        }
    }
    return true;
}

bool contains(const Region &region, Point p) {
    for (const auto &part : region.parts) {
        if (contains(part, p)) {
            return true;
        }
    }
    return false;
}

Point centroid(const Region &region) {
    double area_sum = 0;
    double cx = 0;
    double cy = 0;
    double vx = 0;
    double vy = 0;
    std::size_t nv = 0;
    for (const auto &part : region.parts) {
        const Ring &r = part.outer;
        for (std::size_t i = 0, j = r.size() - 1; i < r.size(); j = i++) {
            const double cross = r[j].lon * r[i].lat - r[i].lon * r[j].lat;
            area_sum += cross;
            cx += (r[j].lon + r[i].lon) * cross;
            cy += (r[j].lat + r[i].lat) * cross;
            vx += r[i].lon;
            vy += r[i].lat;
            ++nv;
        }
    }
    if (std::abs(area_sum) < 1e-14) {
        // degenerate rings: fall back to the vertex mean
        return nv == 0 ? Point{} : Point{vx / nv, vy / nv};
    }
    return {cx / (3 * area_sum), cy / (3 * area_sum)};
}

double squared_distance(Point a, Point b) {
    const double dx = a.lon - b.lon;
    const double dy = a.lat - b.lat;
    return dx * dx + dy * dy;
}

namespace {

Ring parse_ring(const nlohmann::json &coords) {
    Ring ring;
    ring.reserve(coords.size());
    for (const auto &pt : coords) {
        ring.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    // GeoJSON rings repeat the first vertex; drop the duplicate closing point.
    if (ring.size() > 1 && ring.front().lon == ring.back().lon &&
        ring.front().lat == ring.back().lat) {
        ring.pop_back();
    }
    return ring;
}

Polygon parse_polygon(const nlohmann::json &rings) {
    Polygon polygon;
    for (std::size_t i = 0; i < rings.size(); ++i) {
        if (i == 0) {
            polygon.outer = parse_ring(rings[i]);
        } else {
            polygon.holes.push_back(parse_ring(rings[i]));
        }
    }
    return polygon;
}

std::string property_string(const nlohmann::json &props, const char *key) {
    if (!props.contains(key) || props[key].is_null()) {
        return {};
    }
    const auto &v = props[key];
    return v.is_string() ? v.get<std::string>() : v.dump();
}

} // namespace

std::vector<Region> parse_regions_geojson(const nlohmann::json &doc, const std::string &source) {
    if (!doc.contains("features")) {
        throw DataError(source + ": not a GeoJSON FeatureCollection");
    }
    std::vector<Region> regions;
    std::set<std::string> seen;
    for (const auto &feature : doc["features"]) {
        Region region;
        const auto &props = feature.value("properties", nlohmann::json::object());
        region.area_id = property_string(props, "area_id");
        if (region.area_id.empty()) {
            throw DataError(source + ": feature without 'area_id' property");
        }
        if (!seen.insert(region.area_id).second) {
            throw DataError(source + ": duplicate area_id '" + region.area_id + "'");
        }
        region.region_id = property_string(props, "region_id");
        region.name = property_string(props, "name");
        const auto &geom = feature.at("geometry");
        const auto type = geom.at("type").get<std::string>();
        if (type == "Polygon") {
            region.parts.push_back(parse_polygon(geom.at("coordinates")));
        } else if (type == "MultiPolygon") {
            for (const auto &poly : geom.at("coordinates")) {
                region.parts.push_back(parse_polygon(poly));
            }
        } else {
            throw DataError(source + ": unsupported geometry '" + type + "' for area '" +
                            region.area_id + "'");
        }
        regions.push_back(std::move(region));
    }
    return regions;
}

std::vector<Region> read_regions_geojson(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception &e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return parse_regions_geojson(doc, path.string());
}

nlohmann::json polygon_to_geojson(const std::vector<Polygon> &parts) {
    auto ring_json = [](const Ring &ring) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto &p : ring) {
            out.push_back({p.lon, p.lat});
        }
        if (!ring.empty()) {
            out.push_back({ring.front().lon, ring.front().lat});
        }
        return out;
    };
    nlohmann::json coords = nlohmann::json::array();
    for (const auto &part : parts) {
        nlohmann::json poly = nlohmann::json::array();
        poly.push_back(ring_json(part.outer));
        for (const auto &hole : part.holes) {
            poly.push_back(ring_json(hole));
        }
        coords.push_back(std::move(poly));
    }
    return {{"type", "MultiPolygon"}, {"coordinates", std::move(coords)}};
}

} // namespace exmort
