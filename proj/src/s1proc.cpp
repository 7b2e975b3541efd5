#include "fieldseg/s1proc.hpp"

#include <cmath>

#include "fieldseg/errors.hpp"

namespace fieldseg::s1 {

double symlog(double x, double epsilon) {
    const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    return s * std::log(std::abs(x) + epsilon);
}

S1Stack transform_s1(const S1Stack& stack) {
    if (stack.transformed)
        throw FormatError("stack already transformed; refusing double application");
    const Shape& s = stack.bands.shape();
    if (s.size() != 4 || s[0] != 5)
        throw FormatError("S1 stack must be 5 x T x H x W, got " + shape_to_string(s));
    S1Stack out{stack.bands, true};
    const std::size_t plane = s[1] * s[2] * s[3];
    double* d = out.bands.data();
    constexpr double deg2rad = M_PI / 180.0;
    for (std::size_t i = 0; i < plane; ++i) d[i] *= deg2rad;  // band 0: angle
    for (std::size_t b = 3; b < 5; ++b) {                     // bands -2, -1: VH, VV
        double* p = d + b * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = symlog(p[i]);
    }
    return out;
}

StandardizeResult standardize(const DenseTensor& x, const std::optional<BandStats>& stats) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw DimensionError("standardize expects a rank-4 C,T,H,W tensor");
    const std::size_t bands = s[0];
    const std::size_t plane = s[1] * s[2] * s[3];

    StandardizeResult out;
    if (stats.has_value()) {
        if (stats->mean.size() != bands || stats->stddev.size() != bands)
            throw DimensionError("band statistics size mismatch");
        out.stats = *stats;
    } else {
        out.stats.mean.resize(bands);
        out.stats.stddev.resize(bands);
        for (std::size_t b = 0; b < bands; ++b) {
            const double* p = x.data() + b * plane;
            double mean = 0.0;
            for (std::size_t i = 0; i < plane; ++i) mean += p[i];
            mean /= static_cast<double>(plane);
            double var = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = p[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(plane);
            out.stats.mean[b] = mean;
            out.stats.stddev[b] = std::sqrt(var);
        }
    }
    for (std::size_t b = 0; b < bands; ++b)
        if (!(out.stats.stddev[b] > 0.0))
            throw DegenerateBandError("band " + std::to_string(b) +
                                      " has zero standard deviation");

    out.data = DenseTensor(s);
    for (std::size_t b = 0; b < bands; ++b) {
        const double* p = x.data() + b * plane;
        double* q = out.data.data() + b * plane;
        const double m = out.stats.mean[b];
        const double inv = 1.0 / out.stats.stddev[b];
        for (std::size_t i = 0; i < plane; ++i) q[i] = (p[i] - m) * inv;
    }
    return out;
}

ChipSet extract_chips(const DenseTensor& x, std::size_t size, std::size_t stride) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw DimensionError("extract_chips expects a rank-4 C,T,H,W tensor");
    if (size == 0 || stride == 0) throw ConfigError("chip size and stride must be positive");
    const std::size_t c = s[0], t = s[1], h = s[2], w = s[3];
    if (h < size || w < size)
        throw DimensionError("input " + shape_to_string(s) + " smaller than chip size " +
                             std::to_string(size));
    ChipSet out;
    out.size = size;
    out.stride = stride;
    for (std::size_t r0 = 0; r0 + size <= h; r0 += stride)
        for (std::size_t c0 = 0; c0 + size <= w; c0 += stride) {
            Chip chip;
            chip.row0 = r0;
            chip.col0 = c0;
            chip.data = DenseTensor(Shape{c, t, size, size});
            double* dst = chip.data.data();
            const double* src = x.data();
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t ti = 0; ti < t; ++ti)
                    for (std::size_t r = 0; r < size; ++r) {
                        const double* row = src + ((ci * t + ti) * h + r0 + r) * w + c0;
                        std::copy(row, row + size, dst);
                        dst += size;
                    }
            out.chips.push_back(std::move(chip));
        }
    return out;
}

namespace {

DenseTensor flip_rank4(const DenseTensor& x, bool flip_h, bool flip_v) {
    const Shape& s = x.shape();
    const std::size_t c = s[0], t = s[1], h = s[2], w = s[3];
    DenseTensor out(s);
    const double* src = x.data();
    double* dst = out.data();
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t ti = 0; ti < t; ++ti)
            for (std::size_t r = 0; r < h; ++r) {
                const std::size_t rs = flip_v ? h - 1 - r : r;
                const double* row = src + ((ci * t + ti) * h + rs) * w;
                double* orow = dst + ((ci * t + ti) * h + r) * w;
                if (flip_h)
                    for (std::size_t cc = 0; cc < w; ++cc) orow[cc] = row[w - 1 - cc];
                else
                    std::copy(row, row + w, orow);
            }
    return out;
}

DenseTensor flip_rank2(const DenseTensor& x, bool flip_h, bool flip_v) {
    const Shape& s = x.shape();
    DenseTensor wrapped = fieldseg::reshape(x, Shape{1, 1, s[0], s[1]});
    return fieldseg::reshape(flip_rank4(wrapped, flip_h, flip_v), s);
}

} // namespace

FlipResult flip_augment(const DenseTensor& x, FlipMode mode,
                        const MultitaskPrediction& label) {
    if (x.rank() != 4) throw DimensionError("flip_augment expects a rank-4 C,T,H,W tensor");
    if (label.extent.rank() != 2 || !label.extent.same_shape(label.boundary) ||
        !label.extent.same_shape(label.distance))
        throw DimensionError("flip_augment label layers must be aligned rank-2 maps");
    if (x.extent(2) != label.extent.extent(0) || x.extent(3) != label.extent.extent(1))
        throw DimensionError("flip_augment input/label spatial extents differ");
    const bool fh = mode == FlipMode::h || mode == FlipMode::hv;
    const bool fv = mode == FlipMode::v || mode == FlipMode::hv;
    FlipResult out;
    if (!fh && !fv) {
        out.data = x;
        out.label = label;
        return out;
    }
    out.data = flip_rank4(x, fh, fv);
    out.label.extent = flip_rank2(label.extent, fh, fv);
    out.label.boundary = flip_rank2(label.boundary, fh, fv);
    out.label.distance = flip_rank2(label.distance, fh, fv);
    return out;
}

DualPolResult dualpol_decompose(const DualPolSample& j) {
    const double a = j.j00.real();
    const double b = j.j11.real();
    const double trace = a + b;
    const double scale = std::max(1.0, std::abs(trace));
    if (std::abs(j.j00.imag()) > 1e-12 * scale || std::abs(j.j11.imag()) > 1e-12 * scale)
        throw FormatError("coherency matrix diagonal must be real");
    if (std::abs(j.j01.real() - j.j10.real()) > 1e-12 * scale ||
        std::abs(j.j01.imag() + j.j10.imag()) > 1e-12 * scale)
        throw FormatError("coherency matrix is not Hermitian within tolerance");
    if (!(trace > 0.0))
        throw DegenerateSampleError("coherency matrix has non-positive trace");

    const std::complex<double> c = j.j01;
    const double mean = 0.5 * (a + b);
    const double half_diff = 0.5 * (a - b);
    const double disc = std::sqrt(half_diff * half_diff + std::norm(c));
    double l1 = mean + disc;
    double l2 = mean - disc;
    if (l2 < -1e-12 * scale)
        throw FormatError("coherency matrix is not positive semi-definite");
    if (l2 < 0.0) l2 = 0.0;

    const double p1 = l1 / (l1 + l2);
    const double p2 = 1.0 - p1;

    // Principal eigenvector: (c, l1 - a), or an axis vector when c == 0.
    double cos_alpha;
    if (std::norm(c) > 0.0) {
        const double v0 = std::abs(c);
        const double v1 = l1 - a;
        cos_alpha = v0 / std::sqrt(v0 * v0 + v1 * v1);
    } else {
        cos_alpha = a >= b ? 1.0 : 0.0;
    }
    const double alpha = std::acos(std::clamp(cos_alpha, 0.0, 1.0));

    DualPolResult out;
    out.alpha_bar2 = alpha * (p1 - p2) + p2 * M_PI / 2.0;
    auto plog2p = [](double p) { return p > 0.0 ? p * std::log2(p) : 0.0; };
    out.entropy2 = -(plog2p(p1) + plog2p(p2));
    out.anisotropy = (l1 - l2) / (l1 + l2);
    return out;
}

} // namespace fieldseg::s1
