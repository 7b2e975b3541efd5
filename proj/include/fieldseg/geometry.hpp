#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fieldseg {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Closed ring stored without the duplicated closing vertex.
using Ring = std::vector<Point>;

/// Field polygon in world coordinates: one exterior ring plus optional
/// holes, with area (holes subtracted) and raster provenance.
struct FieldPolygon {
    Ring exterior;
    std::vector<Ring> holes;
    double area_m2 = 0.0;
    std::int64_t component_id = -1;
    std::int64_t pixel_count = 0;
};

struct PolygonSet {
    std::vector<FieldPolygon> polygons;
    std::string crs_tag;
};

/// Signed shoelace area (positive for counterclockwise rings in a y-up
/// frame).
double ring_signed_area(const Ring& ring);

/// Net area of exterior minus holes (absolute values).
double polygon_area(const FieldPolygon& poly);

/// Even-odd point-in-ring test; points exactly on the boundary are
/// classified by the crossing parity of the half-open edge rule.
bool point_in_ring(const Ring& ring, Point p);

/// Even-odd containment against exterior and holes.
bool point_in_polygon(const FieldPolygon& poly, Point p);

/// Exact (up to float rounding) intersection area of two polygons with
/// holes, computed by a scanline over all vertex and edge-crossing events;
/// within each band the cross-section lengths are linear so the midpoint
/// rule integrates them exactly.
double polygon_intersection_area(const FieldPolygon& a, const FieldPolygon& b);

/// Area-overlap IoU of two polygons.
double polygon_iou(const FieldPolygon& a, const FieldPolygon& b);

/// Douglas-Peucker simplification of a closed ring at the given tolerance;
/// tolerance 0 returns the ring unchanged.
Ring simplify_ring(const Ring& ring, double tolerance);

/// True when any two non-adjacent edges of the ring properly intersect.
bool ring_self_intersects(const Ring& ring);

} // namespace fieldseg
