#pragma once

#include <string>

#include "fieldseg/geometry.hpp"

namespace fieldseg::io {

/// RFC 7946 FeatureCollection with one Polygon feature per field
/// (properties: area_m2, component_id). Non-WGS84 CRS tags ride in a
/// `crs_tag` foreign member.
std::string to_geojson(const PolygonSet& ps);
void write_geojson(const PolygonSet& ps, const std::string& path);
PolygonSet read_geojson(const std::string& path);

} // namespace fieldseg::io
