#pragma once

// Test-only rasterization oracle, independent of the boundary tracer: even-odd
// point-in-polygon checks at pixel centers mapped through the geotransform.

#include "fieldseg/geometry.hpp"
#include "fieldseg/image.hpp"
#include "fieldseg/postprocess.hpp"

namespace fieldseg::testsupport {

inline BoolImage rasterize_even_odd(const PolygonSet& ps, const post::RasterMeta& meta) {
    BoolImage out(meta.height, meta.width);
    for (std::size_t r = 0; r < meta.height; ++r)
        for (std::size_t c = 0; c < meta.width; ++c) {
            const Point center = meta.pixel_to_world(static_cast<double>(c) + 0.5,
                                                     static_cast<double>(r) + 0.5);
            for (const FieldPolygon& poly : ps.polygons) {
                if (point_in_polygon(poly, center)) {
                    out.set(r, c, true);
                    break;
                }
            }
        }
    return out;
}

// Number of polygons containing each pixel center; >1 anywhere means two
// polygon interiors overlap.
inline int max_coverage(const PolygonSet& ps, const post::RasterMeta& meta) {
    int worst = 0;
    for (std::size_t r = 0; r < meta.height; ++r)
        for (std::size_t c = 0; c < meta.width; ++c) {
            const Point center = meta.pixel_to_world(static_cast<double>(c) + 0.5,
                                                     static_cast<double>(r) + 0.5);
            int hits = 0;
            for (const FieldPolygon& poly : ps.polygons)
                if (point_in_polygon(poly, center)) ++hits;
            worst = std::max(worst, hits);
        }
    return worst;
}

} // namespace fieldseg::testsupport
