#pragma once

#include <cstdint>
#include <vector>

#include "fieldseg/image.hpp"
#include "fieldseg/tensor.hpp"

namespace fieldseg::synth {

/// Deterministic scene description. Field layout, optics and clouds draw
/// from independent sub-streams of the seed, so changing the cloud
/// parameters never changes the fields or the SAR stream.
struct SceneSpec {
    std::uint64_t seed = 0;
    std::size_t height = 64;
    std::size_t width = 64;
    int n_fields = 5;
    int times = 4;
    double cloud_fraction = 0.0;  // in [0,1)
    double cloud_speed_px = 9.0;
    int speckle_looks = 4;

    void validate() const;
};

struct FieldScene {
    IntImage labels;            // Voronoi cell index per pixel
    MultitaskPrediction gt;     // extent, boundary, distance in [0,1]
};

/// Voronoi mosaic from seeded sites: extent = non-boundary pixels, boundary
/// = pixels whose closed 4-neighborhood holds >= 2 distinct labels,
/// distance = per-cell chamfer transform normalized to [0,1].
FieldScene gen_fields(const SceneSpec& spec);

struct TimeSeries {
    DenseTensor optical;       // 4 x T x H x W, reflectance-like in [0,1]
    DenseTensor sar;           // 5 x T x H x W, bands [alpha_deg, A, H, VH, VV]
    std::vector<BoolImage> cloud_masks;  // per time step
};

/// Per-field reflectance trajectories plus translating cloud blobs over the
/// optical stream (replaced by bright noise); the SAR stream is cloud-free
/// with multiplicative gamma speckle.
TimeSeries gen_timeseries(const SceneSpec& spec, const FieldScene& scene);

} // namespace fieldseg::synth
