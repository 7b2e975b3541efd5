#pragma once

#include <array>
#include <string>
#include <vector>

#include "fieldseg/postprocess.hpp"
#include "fieldseg/tensor.hpp"

namespace fieldseg::io {

/// Bit-exact raster container: one line of JSON (dims, dtype, band names,
/// geotransform, CRS, transformed flag) followed by a raw little-endian
/// payload in row-major C-T-H-W (or C-H-W) order.
struct RasterContainer {
    Shape dims;  // [C,H,W] or [C,T,H,W]
    std::string dtype = "f64";
    std::vector<std::string> band_names;
    std::array<double, 6> geotransform{0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
    std::string crs = "local";
    bool transformed = false;
    DenseTensor data;  // held as doubles in memory regardless of dtype

    void validate() const;
    post::RasterMeta meta() const;

    static RasterContainer read(const std::string& path);
    void write(const std::string& path) const;
};

/// Writes bytes through a temp file in the same directory plus rename.
void write_atomic(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

} // namespace fieldseg::io
