#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "fieldseg/image.hpp"
#include "fieldseg/tensor.hpp"

namespace fieldseg::s1 {

/// Normative band order of a Sentinel-1 feature stack.
inline const std::vector<std::string> kBandOrder = {"alpha", "anisotropy", "entropy", "vh",
                                                    "vv"};

/// 5 x T x H x W stack: [alpha, anisotropy, entropy, VH, VV]. alpha is in
/// degrees before the transform and radians after; VH/VV are linear
/// intensities before and symlog values after.
struct S1Stack {
    DenseTensor bands;
    bool transformed = false;
};

/// sign(x) * log(|x| + epsilon); odd by construction.
double symlog(double x, double epsilon = 1e-5);

/// Scales the angle band from degrees to radians and applies symlog to the
/// VH and VV bands. Refuses double application via the transformed flag.
S1Stack transform_s1(const S1Stack& stack);

struct BandStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct StandardizeResult {
    DenseTensor data;
    BandStats stats;
};

/// Per-band (x - mean) / std over a rank-4 C,T,H,W tensor. When stats are
/// omitted they are computed from x itself and returned. A constant band
/// raises DegenerateBandError.
StandardizeResult standardize(const DenseTensor& x,
                              const std::optional<BandStats>& stats = std::nullopt);

struct Chip {
    DenseTensor data;  // C x T x size x size
    std::size_t row0 = 0;
    std::size_t col0 = 0;
};

struct ChipSet {
    std::vector<Chip> chips;
    std::size_t size = 0;
    std::size_t stride = 0;
};

/// Non-overlapping chip grid; margins smaller than the chip size are
/// dropped.
ChipSet extract_chips(const DenseTensor& x, std::size_t size = 128, std::size_t stride = 128);

enum class FlipMode { none, h, v, hv };

struct FlipResult {
    DenseTensor data;
    MultitaskPrediction label;
};

/// Applies the same spatial flip to every time slice and every label layer.
FlipResult flip_augment(const DenseTensor& x, FlipMode mode, const MultitaskPrediction& label);

/// 2x2 Hermitian wave coherency sample.
struct DualPolSample {
    std::complex<double> j00, j01, j10, j11;
};

struct DualPolResult {
    double alpha_bar2 = 0.0;  // radians, in [0, pi/2]
    double entropy2 = 0.0;    // in [0, 1]
    double anisotropy = 0.0;  // in [0, 1]
};

/// Eigen-based dual-pol decomposition: pseudo-probabilities from the
/// eigenvalues, scattering angle from the principal eigenvector, entropy
/// -sum P_i log2 P_i and anisotropy (l1-l2)/(l1+l2).
DualPolResult dualpol_decompose(const DualPolSample& j);

} // namespace fieldseg::s1
