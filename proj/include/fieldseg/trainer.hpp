#pragma once

#include <cstdint>
#include <vector>

#include "fieldseg/image.hpp"
#include "fieldseg/nn.hpp"

namespace fieldseg::nn {

struct ToySample {
    DenseTensor input;           // C,T,H,W
    MultitaskPrediction target;  // aligned H,W maps in [0,1]
};

struct FitResult {
    ModelWeights weights;
    std::vector<double> loss_trace;  // total dataset loss per step (steps+1 entries,
                                     // entry 0 is the pre-update loss)
};

/// Plain full-batch gradient descent on the mean multitask Tanimoto loss.
/// The model must stay small (<= 2 stages) so gradients flow through conv,
/// squeeze-excitation, feed-forward and the attention kernel at desk scale.
/// Throws TrainingError when the loss turns non-finite.
FitResult fit_toy(const UNet3DConfig& cfg, const std::vector<ToySample>& data, int steps,
                  double lr, std::uint64_t seed);

/// Same as fit_toy but continues from existing weights.
FitResult fit_toy_from(const UNet3DConfig& cfg, ModelWeights weights,
                       const std::vector<ToySample>& data, int steps, double lr);

/// Total dataset loss for a fixed weight bundle (no updates).
double toy_loss(const UNet3DConfig& cfg, const ModelWeights& w,
                const std::vector<ToySample>& data);

} // namespace fieldseg::nn
