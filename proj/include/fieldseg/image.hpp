#pragma once

#include <cstdint>
#include <vector>

#include "fieldseg/tensor.hpp"

namespace fieldseg {

/// Flat row-major binary image.
struct BoolImage {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<std::uint8_t> data;

    BoolImage() = default;
    BoolImage(std::size_t h_, std::size_t w_) : h(h_), w(w_), data(h_ * w_, 0) {}

    bool at(std::size_t r, std::size_t c) const { return data[r * w + c] != 0; }
    void set(std::size_t r, std::size_t c, bool v) { data[r * w + c] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += v != 0;
        return n;
    }
};

/// Flat row-major integer label image.
struct IntImage {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<int> data;

    IntImage() = default;
    IntImage(std::size_t h_, std::size_t w_, int fill = 0) : h(h_), w(w_), data(h_ * w_, fill) {}

    int at(std::size_t r, std::size_t c) const { return data[r * w + c]; }
    int& at(std::size_t r, std::size_t c) { return data[r * w + c]; }
};

/// The three aligned multitask maps in [0,1]: extent, boundary and distance
/// transform, each a rank-2 H x W tensor.
struct MultitaskPrediction {
    DenseTensor extent;
    DenseTensor boundary;
    DenseTensor distance;
};

/// Converts a rank-2 tensor into a mask of entries > threshold.
BoolImage threshold_mask(const DenseTensor& map, double threshold);

} // namespace fieldseg
