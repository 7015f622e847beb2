#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace exmort {

struct Point {
    double lon = 0;
    double lat = 0;
};

using Ring = std::vector<Point>;

struct Polygon {
    Ring outer;
    std::vector<Ring> holes;
};

/// One areal unit (province) with its polygons and grouping attributes.
struct Region {
    std::string area_id;
    std::string region_id; // coarser level; empty when not supplied
    std::string name;
    std::vector<Polygon> parts;
};

/// Even-odd ray casting; boundary points may fall either way.
bool ring_contains(const Ring &ring, Point p);
bool contains(const Polygon &polygon, Point p);
bool contains(const Region &region, Point p);

/// Area-weighted centroid of all outer rings (holes ignored).
Point centroid(const Region &region);

double squared_distance(Point a, Point b);

/// Reads a FeatureCollection of Polygon/MultiPolygon features. The area id is
/// taken from property `area_id`; `region_id` and `name` are optional.
std::vector<Region> parse_regions_geojson(const nlohmann::json &doc, const std::string &source);
std::vector<Region> read_regions_geojson(const std::filesystem::path &path);

nlohmann::json polygon_to_geojson(const std::vector<Polygon> &parts);

} // namespace exmort
