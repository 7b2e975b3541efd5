#pragma once

#include <array>
#include <vector>

#include "fieldseg/geometry.hpp"
#include "fieldseg/image.hpp"
#include "fieldseg/tensor.hpp"

namespace fieldseg::metrics {

// ---- loss ----

/// Fuzzy Tanimoto similarity of two flattened maps with the all-zero branch
/// returning 0.
double fuzzy_tanimoto(const DenseTensor& p, const DenseTensor& l);

/// Tanimoto-with-complement loss: 1 - (T(p,l) + T(1-p,1-l)) / 2. Inputs must
/// lie in [0,1].
double tanimoto_loss(const DenseTensor& p, const DenseTensor& l);

/// Gradient of tanimoto_loss with respect to p.
DenseTensor tanimoto_loss_grad(const DenseTensor& p, const DenseTensor& l);

/// Mean of the per-layer Tanimoto-with-complement losses over extent,
/// boundary and distance.
double multitask_loss(const MultitaskPrediction& pred, const MultitaskPrediction& gt);

/// Gradients of multitask_loss with respect to the three predicted layers.
MultitaskPrediction multitask_loss_grad(const MultitaskPrediction& pred,
                                        const MultitaskPrediction& gt);

// ---- confusion-matrix metrics ----

/// K x K counts with rows = predicted class, columns = actual class.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::int64_t> counts;  // row-major

    explicit ConfusionMatrix(std::size_t k_ = 0) : k(k_), counts(k_ * k_, 0) {}
    std::int64_t at(std::size_t pred, std::size_t truth) const { return counts[pred * k + truth]; }
    std::int64_t& at(std::size_t pred, std::size_t truth) { return counts[pred * k + truth]; }
    std::int64_t total() const;
};

ConfusionMatrix confusion(const IntImage& pred_labels, const IntImage& true_labels, int k);

/// Metric value plus a degenerate flag; degenerate cases return value 0
/// instead of NaN so batch aggregates stay finite.
struct MetricValue {
    double value = 0.0;
    bool degenerate = false;
};

MetricValue mcc(const ConfusionMatrix& cm);
MetricValue cohens_kappa(const ConfusionMatrix& cm);

/// Fuzzy mean IoU over class maps stacked as N x H x W; a class with empty
/// intersection and union contributes 1.
double miou_fuzzy(const DenseTensor& p, const DenseTensor& l);

/// TP / (TP + FP + FN); empty union returns 1.
double iou_binary(const BoolImage& pred, const BoolImage& truth);

/// False discovery rate |A and not-B| / |A| (oversegmentation proxy).
MetricValue fdr(const BoolImage& pred, const BoolImage& truth);

/// False omission rate |not-A and B| / |not-A| (undersegmentation proxy).
MetricValue for_rate(const BoolImage& pred, const BoolImage& truth);

// ---- vertex-set distances ----

/// Mean surface distance: the symmetric average of vertex-to-nearest-vertex
/// distances.
double msd(const std::vector<Point>& x, const std::vector<Point>& y);

/// Max of the two directed Hausdorff distances between vertex sets.
double hausdorff(const std::vector<Point>& x, const std::vector<Point>& y);

} // namespace fieldseg::metrics
