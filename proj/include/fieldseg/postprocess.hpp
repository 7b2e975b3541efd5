#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fieldseg/geometry.hpp"
#include "fieldseg/image.hpp"
#include "fieldseg/tensor.hpp"

namespace fieldseg::post {

/// Affine pixel -> world mapping (GDAL-style 6-term geotransform) plus the
/// CRS tag carried through to the polygon outputs.
struct RasterMeta {
    std::size_t width = 0;
    std::size_t height = 0;
    std::array<double, 6> geotransform{0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
    std::string crs_tag = "local";

    void validate() const;
    Point pixel_to_world(double col, double row) const;
    double pixel_area() const;
};

struct ThresholdPair {
    double t_b = 0.2;
    double t_e = 0.4;

    void validate() const;
};

/// Guo-Hall thinning to an 8-connected skeleton; idempotent and
/// connectivity preserving.
BoolImage thin(const BoolImage& mask);

/// One pass of 3x3 cross dilation.
BoolImage dilate_cross(const BoolImage& mask);

/// Listing-style refined thresholding: the boundary map is thresholded at
/// t_b, thinned and dilated once; the output is extent * (1 - boundary)
/// thresholded at t_e.
BoolImage refined_threshold(const DenseTensor& extent, const DenseTensor& boundary,
                            const ThresholdPair& t);

struct Components {
    IntImage labels;  // -1 background, 0..count-1 components
    int count = 0;
};

/// 4-connected foreground components.
Components label_components(const BoolImage& mask);

/// Traces one polygon per 4-connected component along pixel edges; holes
/// are preserved and vertices pass through the geotransform. Exterior rings
/// are counterclockwise in world coordinates, holes clockwise.
PolygonSet components_to_polygons(const BoolImage& mask, const RasterMeta& meta);

/// Douglas-Peucker simplification followed by the minimum-area filter.
/// Rings collapsing below 3 distinct vertices are dropped; a simplification
/// that would self-intersect reverts to the unsimplified ring.
PolygonSet simplify_filter(const PolygonSet& ps, double tolerance_m = 10.0,
                           double min_area_m2 = 100.0);

struct PolygonMatch {
    std::size_t pred_id = 0;
    std::size_t truth_id = 0;
    double iou = 0.0;
    double hausdorff = 0.0;
    double msd = 0.0;
};

/// Greedy best-IoU matching: all cross pairs above iou_min sorted by IoU
/// descending, each polygon used at most once.
std::vector<PolygonMatch> match_polygons(const PolygonSet& pred, const PolygonSet& truth,
                                         double iou_min = 0.001);

struct TuneCandidate {
    ThresholdPair thresholds;
    std::array<double, 4> objectives{};  // (1-IoU, FDR, FOR, |dN|/max(1,truth_count))
    bool on_front = false;
};

struct TuneResult {
    std::vector<TuneCandidate> candidates;  // sorted by (t_b, t_e)
    std::vector<TuneCandidate> front;       // non-dominated subset, same order
    ThresholdPair best;                     // front point nearest the origin
};

std::vector<ThresholdPair> default_threshold_grid(double step = 0.05);

/// Evaluates every candidate via refined_threshold -> components, computes
/// the Pareto front of the four objectives and picks the front point with
/// the smallest Euclidean norm (ties broken by smaller (t_b, t_e)).
TuneResult tune_thresholds(const DenseTensor& extent, const DenseTensor& boundary,
                           const BoolImage& truth_mask, int truth_count,
                           const std::vector<ThresholdPair>& grid, int jobs = 1);

} // namespace fieldseg::post
