#include "fieldseg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <numeric>
#include <sstream>

#include "fieldseg/errors.hpp"

namespace fieldseg {

namespace alloc_stats {

namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak_single{0};
} // namespace

void reset() {
    g_live.store(0);
    g_peak_single.store(0);
}

std::size_t peak_single_elements() { return g_peak_single.load(); }
std::size_t live_elements() { return g_live.load(); }

void record_alloc(std::size_t elements) {
    g_live.fetch_add(elements);
    std::size_t prev = g_peak_single.load();
    while (elements > prev && !g_peak_single.compare_exchange_weak(prev, elements)) {
    }
}

void record_free(std::size_t elements) {
    g_live.fetch_sub(std::min(elements, g_live.load()));
}

} // namespace alloc_stats

namespace {

std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

void check_rank(const Shape& shape) {
    if (shape.empty() || shape.size() > 8)
        throw DimensionError("tensor rank must be in 1..8, got " + std::to_string(shape.size()));
    for (std::size_t e : shape)
        if (e == 0) throw DimensionError("zero extent in shape " + shape_to_string(shape));
}

} // namespace

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
    check_rank(shape_);
    init_strides();
    data_.assign(shape_product(shape_), 0.0);
    alloc_stats::record_alloc(data_.size());
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank(shape_);
    if (shape_product(shape_) != data_.size())
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_to_string(shape_));
    init_strides();
    alloc_stats::record_alloc(data_.size());
}

DenseTensor::DenseTensor(const DenseTensor& other)
    : shape_(other.shape_), strides_(other.strides_), data_(other.data_) {
    alloc_stats::record_alloc(data_.size());
}

DenseTensor::DenseTensor(DenseTensor&& other) noexcept
    : shape_(std::move(other.shape_)), strides_(std::move(other.strides_)),
      data_(std::move(other.data_)) {
    other.shape_.clear();
    other.strides_.clear();
}

DenseTensor& DenseTensor::operator=(const DenseTensor& other) {
    if (this != &other) {
        alloc_stats::record_free(data_.size());
        shape_ = other.shape_;
        strides_ = other.strides_;
        data_ = other.data_;
        alloc_stats::record_alloc(data_.size());
    }
    return *this;
}

DenseTensor& DenseTensor::operator=(DenseTensor&& other) noexcept {
    if (this != &other) {
        alloc_stats::record_free(data_.size());
        shape_ = std::move(other.shape_);
        strides_ = std::move(other.strides_);
        data_ = std::move(other.data_);
        other.shape_.clear();
        other.strides_.clear();
    }
    return *this;
}

DenseTensor::~DenseTensor() { alloc_stats::record_free(data_.size()); }

DenseTensor DenseTensor::full(Shape shape, double value) {
    DenseTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

std::size_t DenseTensor::extent(std::size_t axis) const {
    if (axis >= shape_.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(shape_.size()));
    return shape_[axis];
}

void DenseTensor::init_strides() {
    strides_.assign(shape_.size(), 1);
    for (std::size_t i = shape_.size(); i-- > 1;)
        strides_[i - 1] = strides_[i] * shape_[i];
}

std::size_t DenseTensor::offset(std::span<const std::size_t> idx) const {
    if (idx.size() != shape_.size())
        throw DimensionError("index rank mismatch");
    std::size_t off = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= shape_[i])
            throw DimensionError("index out of bounds on axis " + std::to_string(i));
        off += idx[i] * strides_[i];
    }
    return off;
}

double DenseTensor::at(std::initializer_list<std::size_t> idx) const {
    std::vector<std::size_t> v(idx);
    return data_[offset(v)];
}

double& DenseTensor::at(std::initializer_list<std::size_t> idx) {
    std::vector<std::size_t> v(idx);
    return data_[offset(v)];
}

// ---- patch ops ----

namespace {

struct PatchDims {
    std::size_t C, T, H, W;
    std::size_t pc, ph, pw;  // patch content extents C/c, H/h, W/w
};

PatchDims check_patch(const Shape& shape, const PatchSpec& p) {
    if (shape.size() != 4)
        throw DimensionError("patch_partition expects a rank-4 tensor, got rank " +
                             std::to_string(shape.size()));
    PatchDims d{shape[0], shape[1], shape[2], shape[3], 0, 0, 0};
    if (p.c == 0 || d.C % p.c != 0)
        throw DimensionError("patch count c=" + std::to_string(p.c) +
                             " does not divide channel extent " + std::to_string(d.C));
    if (p.h == 0 || d.H % p.h != 0)
        throw DimensionError("patch count h=" + std::to_string(p.h) +
                             " does not divide height extent " + std::to_string(d.H));
    if (p.w == 0 || d.W % p.w != 0)
        throw DimensionError("patch count w=" + std::to_string(p.w) +
                             " does not divide width extent " + std::to_string(d.W));
    d.pc = d.C / p.c;
    d.ph = d.H / p.h;
    d.pw = d.W / p.w;
    return d;
}

} // namespace

DenseTensor patch_partition(const DenseTensor& x, const PatchSpec& p) {
    PatchDims d = check_patch(x.shape(), p);
    DenseTensor out(Shape{p.c, d.T, p.h, p.w, d.pc, d.ph, d.pw});
    const double* src = x.data();
    double* dst = out.data();
    std::size_t o = 0;
    for (std::size_t ci = 0; ci < p.c; ++ci)
        for (std::size_t t = 0; t < d.T; ++t)
            for (std::size_t hi = 0; hi < p.h; ++hi)
                for (std::size_t wi = 0; wi < p.w; ++wi)
                    for (std::size_t r = 0; r < d.pc; ++r)
                        for (std::size_t s = 0; s < d.ph; ++s) {
                            const std::size_t c0 = ci * d.pc + r;
                            const std::size_t h0 = hi * d.ph + s;
                            const std::size_t base =
                                ((c0 * d.T + t) * d.H + h0) * d.W + wi * d.pw;
                            std::memcpy(dst + o, src + base, d.pw * sizeof(double));
                            o += d.pw;
                        }
    return out;
}

DenseTensor patch_merge(const DenseTensor& xp, const PatchSpec& p) {
    const Shape& s7 = xp.shape();
    if (s7.size() != 7)
        throw DimensionError("patch_merge expects a rank-7 tensor, got rank " +
                             std::to_string(s7.size()));
    if (s7[0] != p.c || s7[2] != p.h || s7[3] != p.w)
        throw DimensionError("patch grid " + shape_to_string({s7[0], s7[2], s7[3]}) +
                             " does not match spec (" + std::to_string(p.c) + "," +
                             std::to_string(p.h) + "," + std::to_string(p.w) + ")");
    const std::size_t T = s7[1], pc = s7[4], ph = s7[5], pw = s7[6];
    const std::size_t C = p.c * pc, H = p.h * ph, W = p.w * pw;
    DenseTensor out(Shape{C, T, H, W});
    const double* src = xp.data();
    double* dst = out.data();
    std::size_t o = 0;
    for (std::size_t ci = 0; ci < p.c; ++ci)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t hi = 0; hi < p.h; ++hi)
                for (std::size_t wi = 0; wi < p.w; ++wi)
                    for (std::size_t r = 0; r < pc; ++r)
                        for (std::size_t s = 0; s < ph; ++s) {
                            const std::size_t c0 = ci * pc + r;
                            const std::size_t h0 = hi * ph + s;
                            const std::size_t base = ((c0 * T + t) * H + h0) * W + wi * pw;
                            std::memcpy(dst + base, src + o, pw * sizeof(double));
                            o += pw;
                        }
    return out;
}

DenseTensor reshape(const DenseTensor& x, Shape new_shape) {
    check_rank(new_shape);
    std::size_t n = shape_product(new_shape);
    if (n != x.size())
        throw DimensionError("reshape to " + shape_to_string(new_shape) +
                             " changes element count");
    return DenseTensor(std::move(new_shape), x.storage());
}

DenseTensor permute(const DenseTensor& x, const std::vector<std::size_t>& perm) {
    const Shape& s = x.shape();
    if (perm.size() != s.size()) throw DimensionError("permutation rank mismatch");
    std::vector<bool> seen(s.size(), false);
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= s.size() || seen[perm[i]])
            throw DimensionError("invalid permutation");
        seen[perm[i]] = true;
        out_shape[i] = s[perm[i]];
    }
    DenseTensor out(out_shape);
    const std::size_t rank = s.size();
    std::vector<std::size_t> idx(rank, 0);
    const auto& in_strides = x.strides();
    const double* src = x.data();
    double* dst = out.data();
    const std::size_t n = x.size();
    for (std::size_t o = 0; o < n; ++o) {
        std::size_t in_off = 0;
        for (std::size_t i = 0; i < rank; ++i) in_off += idx[i] * in_strides[perm[i]];
        dst[o] = src[in_off];
        for (std::size_t i = rank; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

// ---- contraction ----

void mat_mul(const double* a, std::size_t m, std::size_t k,
             const double* b, std::size_t n, double* out) {
    std::fill(out, out + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* orow = out + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     const std::vector<std::pair<std::size_t, std::size_t>>& axes) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    std::vector<bool> ca(sa.size(), false), cb(sb.size(), false);
    std::size_t k = 1;
    for (auto [ia, ib] : axes) {
        if (ia >= sa.size() || ib >= sb.size())
            throw DimensionError("contraction axis out of range");
        if (ca[ia] || cb[ib]) throw DimensionError("axis contracted twice");
        if (sa[ia] != sb[ib])
            throw DimensionError("contracted extents differ: " + std::to_string(sa[ia]) +
                                 " vs " + std::to_string(sb[ib]));
        ca[ia] = true;
        cb[ib] = true;
        k *= sa[ia];
    }
    // Permute a so contracted axes come last (in the order given), b so they
    // come first, then multiply the flattened matrices.
    std::vector<std::size_t> pa, pb;
    Shape out_shape;
    for (std::size_t i = 0; i < sa.size(); ++i)
        if (!ca[i]) {
            pa.push_back(i);
            out_shape.push_back(sa[i]);
        }
    for (auto [ia, ib] : axes) {
        pa.push_back(ia);
        (void)ib;
    }
    for (auto [ia, ib] : axes) {
        pb.push_back(ib);
        (void)ia;
    }
    for (std::size_t i = 0; i < sb.size(); ++i)
        if (!cb[i]) {
            pb.push_back(i);
            out_shape.push_back(sb[i]);
        }
    if (out_shape.empty()) out_shape = {1};  // full contraction yields a scalar

    DenseTensor ap = permute(a, pa);
    DenseTensor bp = permute(b, pb);
    const std::size_t m = a.size() / k;
    const std::size_t n = b.size() / k;
    DenseTensor out(out_shape);
    mat_mul(ap.data(), m, k, bp.data(), n, out.data());
    return out;
}

// ---- reductions ----

namespace {

void check_axes(const Shape& shape, const std::vector<std::size_t>& axes) {
    std::vector<bool> seen(shape.size(), false);
    for (std::size_t ax : axes) {
        if (ax >= shape.size()) throw DimensionError("reduction axis out of range");
        if (seen[ax]) throw DimensionError("duplicate reduction axis");
        seen[ax] = true;
    }
}

} // namespace

DenseTensor reduce_sum(const DenseTensor& x, const std::vector<std::size_t>& axes) {
    const Shape& s = x.shape();
    check_axes(s, axes);
    std::vector<bool> reduced(s.size(), false);
    for (std::size_t ax : axes) reduced[ax] = true;
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (!reduced[i]) out_shape.push_back(s[i]);
    if (out_shape.empty()) out_shape = {1};

    DenseTensor out(out_shape);
    DenseTensor comp(out_shape);  // Kahan compensation per output element
    const std::size_t rank = s.size();
    std::vector<std::size_t> idx(rank, 0);
    const std::size_t n = x.size();
    const double* src = x.data();
    double* acc = out.data();
    double* c = comp.data();
    for (std::size_t f = 0; f < n; ++f) {
        std::size_t o = 0;
        for (std::size_t i = 0; i < rank; ++i)
            if (!reduced[i]) o = o * s[i] + idx[i];
        const double y = src[f] - c[o];
        const double t = acc[o] + y;
        c[o] = (t - acc[o]) - y;
        acc[o] = t;
        for (std::size_t i = rank; i-- > 0;) {
            if (++idx[i] < s[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

DenseTensor reduce_mean(const DenseTensor& x, const std::vector<std::size_t>& axes) {
    std::size_t count = 1;
    for (std::size_t ax : axes) count *= x.extent(ax);
    return scale(reduce_sum(x, axes), 1.0 / static_cast<double>(count));
}

double sum_all(const DenseTensor& x) {
    double acc = 0.0, c = 0.0;
    for (double v : x.storage()) {
        const double y = v - c;
        const double t = acc + y;
        c = (t - acc) - y;
        acc = t;
    }
    return acc;
}

double dot_all(const DenseTensor& a, const DenseTensor& b) {
    if (!a.same_shape(b)) throw DimensionError("dot_all shape mismatch");
    double acc = 0.0, c = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double y = pa[i] * pb[i] - c;
        const double t = acc + y;
        c = (t - acc) - y;
        acc = t;
    }
    return acc;
}

// ---- elementwise ----

namespace {

template <class F>
DenseTensor zip(const DenseTensor& a, const DenseTensor& b, F f, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " +
                             shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    DenseTensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

} // namespace

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
    return zip(a, b, [](double x, double y) { return x + y; }, "add");
}

DenseTensor sub(const DenseTensor& a, const DenseTensor& b) {
    return zip(a, b, [](double x, double y) { return x - y; }, "sub");
}

DenseTensor mul(const DenseTensor& a, const DenseTensor& b) {
    return zip(a, b, [](double x, double y) { return x * y; }, "mul");
}

DenseTensor scale(const DenseTensor& x, double s) {
    DenseTensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * s;
    return out;
}

DenseTensor add_scalar(const DenseTensor& x, double s) {
    DenseTensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = px[i] + s;
    return out;
}

DenseTensor greater(const DenseTensor& x, double threshold) {
    DenseTensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > threshold ? 1.0 : 0.0;
    return out;
}

DenseTensor broadcast_mul_leading(const DenseTensor& map, const DenseTensor& x) {
    const Shape& sm = map.shape();
    const Shape& sx = x.shape();
    if (sm.size() > sx.size())
        throw DimensionError("broadcast map rank exceeds tensor rank");
    for (std::size_t i = 0; i < sm.size(); ++i)
        if (sm[i] != sx[i])
            throw DimensionError("broadcast leading extent mismatch on axis " +
                                 std::to_string(i));
    std::size_t trail = 1;
    for (std::size_t i = sm.size(); i < sx.size(); ++i) trail *= sx[i];
    DenseTensor out(sx);
    const double* pm = map.data();
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < map.size(); ++i) {
        const double v = pm[i];
        const std::size_t base = i * trail;
        for (std::size_t j = 0; j < trail; ++j) po[base + j] = px[base + j] * v;
    }
    return out;
}

} // namespace fieldseg
