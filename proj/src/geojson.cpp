#include "fieldseg/geojson.hpp"

#include <json.hpp>

#include "fieldseg/errors.hpp"
#include "fieldseg/raster_io.hpp"

namespace fieldseg::io {

using nlohmann::json;

namespace {

json ring_to_json(const Ring& ring) {
    json coords = json::array();
    for (const Point& p : ring) coords.push_back(json::array({p.x, p.y}));
    if (!ring.empty()) coords.push_back(json::array({ring.front().x, ring.front().y}));
    return coords;
}

Ring ring_from_json(const json& coords) {
    Ring ring;
    for (const json& p : coords) {
        if (!p.is_array() || p.size() < 2) throw FormatError("GeoJSON position must be [x,y]");
        ring.push_back(Point{p[0].get<double>(), p[1].get<double>()});
    }
    if (ring.size() >= 2 && ring.front().x == ring.back().x &&
        ring.front().y == ring.back().y)
        ring.pop_back();  // stored without the closing duplicate
    return ring;
}

} // namespace

std::string to_geojson(const PolygonSet& ps) {
    json features = json::array();
    for (std::size_t i = 0; i < ps.polygons.size(); ++i) {
        const FieldPolygon& poly = ps.polygons[i];
        json rings = json::array();
        rings.push_back(ring_to_json(poly.exterior));
        for (const Ring& h : poly.holes) rings.push_back(ring_to_json(h));
        json feature;
        feature["type"] = "Feature";
        feature["geometry"] = {{"type", "Polygon"}, {"coordinates", rings}};
        feature["properties"] = {{"area_m2", poly.area_m2},
                                 {"component_id", poly.component_id}};
        features.push_back(feature);
    }
    json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = features;
    if (!ps.crs_tag.empty() && ps.crs_tag != "EPSG:4326" && ps.crs_tag != "WGS84")
        fc["crs_tag"] = ps.crs_tag;  // foreign member for non-default CRS
    return fc.dump();
}

void write_geojson(const PolygonSet& ps, const std::string& path) {
    std::string body = to_geojson(ps);
    body.push_back('\n');
    write_atomic(path, body);
}

PolygonSet read_geojson(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FormatError("GeoJSON parse error: " + std::string(e.what()));
    }
    PolygonSet ps;
    try {
        if (doc.at("type").get<std::string>() != "FeatureCollection")
            throw FormatError("expected a FeatureCollection");
        ps.crs_tag = doc.value("crs_tag", std::string("EPSG:4326"));
        for (const json& feature : doc.at("features")) {
            const json& geom = feature.at("geometry");
            if (geom.at("type").get<std::string>() != "Polygon")
                throw FormatError("expected Polygon geometries");
            const json& rings = geom.at("coordinates");
            if (rings.empty()) throw FormatError("polygon without rings");
            FieldPolygon poly;
            poly.exterior = ring_from_json(rings[0]);
            for (std::size_t i = 1; i < rings.size(); ++i)
                poly.holes.push_back(ring_from_json(rings[i]));
            if (feature.contains("properties") && feature["properties"].is_object()) {
                const json& props = feature["properties"];
                poly.area_m2 = props.value("area_m2", 0.0);
                poly.component_id = props.value("component_id", static_cast<std::int64_t>(-1));
            }
            if (poly.area_m2 == 0.0) poly.area_m2 = polygon_area(poly);
            ps.polygons.push_back(std::move(poly));
        }
    } catch (const json::exception& e) {
        throw FormatError("GeoJSON field error: " + std::string(e.what()));
    }
    return ps;
}

} // namespace fieldseg::io
