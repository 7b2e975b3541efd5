#pragma once

#include <optional>
#include <span>

#include "fieldseg/tensor.hpp"

namespace fieldseg::pta3d {

enum class ContractionMode { mean, learned_weight };

/// Configuration of the patch Tanimoto attention kernel. In learned_weight
/// mode `weight` must hold the contraction weights over the query patch
/// grid (c, T_q, h, w); in mean mode no weight is allowed.
struct AttentionConfig {
    PatchSpec patch;
    ContractionMode mode = ContractionMode::mean;
    bool causal = false;
    std::optional<DenseTensor> weight;
};

/// Both squared norms below this threshold trigger the all-zero branch of
/// the Tanimoto similarity (exact-zero tests are fragile after float
/// accumulation).
inline constexpr double kZeroBranchEps = 1e-30;

/// Tanimoto similarity <q|k> / (<q|q> + <k|k> - <q|k>); exactly 0 when both
/// vectors vanish.
double tanimoto(std::span<const double> q, std::span<const double> k);

/// Rank-8 similarity map (c,F,h,w,k,T,l,m): entry = tanimoto of query patch
/// (c,F,h,w) against key patch (k,T,l,m), summed over the patch content
/// axes. q and k must agree in C,H,W; their time extents may differ (cross
/// attention between streams of different lengths).
DenseTensor similarity_8d(const DenseTensor& q, const DenseTensor& k,
                          const AttentionConfig& cfg);

/// Contracts the rank-8 map over the query patch grid: arithmetic mean in
/// mean mode, weighted sum with cfg.weight in learned_weight mode. Returns
/// the rank-4 map over the key patch grid (k,T,l,m).
DenseTensor contract_similarity(const DenseTensor& s8, const AttentionConfig& cfg);

/// Zeroes every entry with query time F greater than key time T.
DenseTensor apply_causal_mask(const DenseTensor& s8);

/// Full attention: contracted patch similarity broadcast over each value
/// patch, merged back to image layout. Output shape equals v's shape.
/// The largest intermediate scales with the patch-grid size squared, never
/// with (C*H*W)^2.
DenseTensor attention(const DenseTensor& q, const DenseTensor& k, const DenseTensor& v,
                      const AttentionConfig& cfg);

struct AttentionGrads {
    DenseTensor dq, dk, dv;
    std::optional<DenseTensor> dweight;  // learned_weight mode only
};

/// Gradient of <upstream, attention(q,k,v)> with respect to each input (and
/// the contraction weight in learned mode). The zero branch of the
/// similarity contributes zero gradient.
AttentionGrads attention_grad(const DenseTensor& q, const DenseTensor& k,
                              const DenseTensor& v, const AttentionConfig& cfg,
                              const DenseTensor& upstream);

} // namespace fieldseg::pta3d
