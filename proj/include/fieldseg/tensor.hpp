#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fieldseg {

using Shape = std::vector<std::size_t>;

/// Allocation accounting used by the attention memory-bound tests: reset the
/// counters around a region and read the largest single buffer allocated
/// inside it.
namespace alloc_stats {
void reset();
std::size_t peak_single_elements();
std::size_t live_elements();
void record_alloc(std::size_t elements);
void record_free(std::size_t elements);
} // namespace alloc_stats

/// Dense row-major tensor of doubles, rank 1..8.
///
/// The shape is fixed at construction and the linearization is row-major:
/// index (i0..in) maps to offset sum(i_k * stride_k) with stride_n = 1.
/// There are no views or stride aliasing; every operation copies. All
/// operations are pure functions of their inputs, so tensors are safe to
/// share read-only across threads.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Shape shape);                    // zero-filled
    DenseTensor(Shape shape, std::vector<double> data);

    DenseTensor(const DenseTensor& other);
    DenseTensor(DenseTensor&& other) noexcept;
    DenseTensor& operator=(const DenseTensor& other);
    DenseTensor& operator=(DenseTensor&& other) noexcept;
    ~DenseTensor();

    static DenseTensor full(Shape shape, double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t extent(std::size_t axis) const;
    bool empty() const noexcept { return data_.empty(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double operator[](std::size_t flat) const { return data_[flat]; }
    double& operator[](std::size_t flat) { return data_[flat]; }

    /// Bounds-checked multi-index access.
    double at(std::initializer_list<std::size_t> idx) const;
    double& at(std::initializer_list<std::size_t> idx);

    std::size_t offset(std::span<const std::size_t> idx) const;
    const std::vector<std::size_t>& strides() const noexcept { return strides_; }

    bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }

private:
    void init_strides();

    Shape shape_;
    std::vector<std::size_t> strides_;
    std::vector<double> data_;
};

/// Patch-grid counts along channel, height and width; each must divide the
/// corresponding extent of the tensor it is applied to.
struct PatchSpec {
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;
};

std::string shape_to_string(const Shape& shape);

// ---- reshape / patch ops ----

/// Rank-4 C,T,H,W -> rank-7 c,T,h,w,(C/c),(H/h),(W/w). Bijective relabeling:
/// patch (ci,hi,wi) holds the contiguous block of x it was cut from.
DenseTensor patch_partition(const DenseTensor& x, const PatchSpec& p);

/// Exact inverse of patch_partition.
DenseTensor patch_merge(const DenseTensor& xp, const PatchSpec& p);

DenseTensor reshape(const DenseTensor& x, Shape new_shape);
DenseTensor permute(const DenseTensor& x, const std::vector<std::size_t>& perm);

// ---- contraction / reduction ----

/// General tensor contraction: sums products over the paired axes; output
/// extents are the unpaired axes of a followed by the unpaired axes of b.
DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                     const std::vector<std::pair<std::size_t, std::size_t>>& axes);

DenseTensor reduce_sum(const DenseTensor& x, const std::vector<std::size_t>& axes);
DenseTensor reduce_mean(const DenseTensor& x, const std::vector<std::size_t>& axes);

/// Kahan-compensated sum of all elements.
double sum_all(const DenseTensor& x);
double dot_all(const DenseTensor& a, const DenseTensor& b);

// ---- elementwise ----

DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor sub(const DenseTensor& a, const DenseTensor& b);
DenseTensor mul(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(const DenseTensor& x, double s);
DenseTensor add_scalar(const DenseTensor& x, double s);

/// 0/1 mask of elements strictly greater than the threshold.
DenseTensor greater(const DenseTensor& x, double threshold);

/// Multiplies x by a map over its leading axes: map.shape() must equal the
/// first map.rank() extents of x; the product broadcasts over the trailing
/// axes.
DenseTensor broadcast_mul_leading(const DenseTensor& map, const DenseTensor& x);

/// Row-major matrix product helper shared by contract and the attention
/// kernel: a is m x k, b is k x n, both contiguous.
void mat_mul(const double* a, std::size_t m, std::size_t k,
             const double* b, std::size_t n, double* out);

} // namespace fieldseg
