#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fieldseg/autodiff.hpp"
#include "fieldseg/image.hpp"
#include "fieldseg/tensor.hpp"

namespace fieldseg::nn {

/// One PTAViT3D stage: `repeats` blocks of MBConv3D, squeeze-excitation,
/// patch Tanimoto attention and feed-forward, each with a residual
/// connection. Shape preserving (in particular the time extent).
struct StageConfig {
    int repeats = 1;
    int channels = 16;
    PatchSpec patch{2, 4, 4};
    bool causal = false;
    int mbconv_expansion = 4;   // MaXViT-style defaults
    int se_reduction = 4;
    int ffn_expansion = 4;
};

enum class Compaction {
    mean_time,  // time-agnostic weights; default
    conv_time,  // convolution over the full time extent (fixed T)
};

struct UNet3DConfig {
    std::vector<int> stage_repeats{2, 2, 5, 2, 5, 2, 2};
    int init_features = 16;  // desk-scale default; 96 reproduces the full-size model
    int in_channels = 4;
    PatchSpec patch{2, 4, 4};
    bool causal = false;
    int mbconv_expansion = 4;
    int se_reduction = 4;
    int ffn_expansion = 4;
    Compaction compaction = Compaction::mean_time;
    int compact_t = 0;  // required time extent for conv_time

    int depth() const { return static_cast<int>(stage_repeats.size()) / 2; }
    void validate() const;
};

struct FusionConfig {
    std::vector<int> encoder_repeats{2, 2, 5, 2};
    std::vector<int> decoder_repeats{5, 2, 2};
    int init_features = 16;
    int in_channels_optical = 4;
    int in_channels_sar = 5;
    PatchSpec patch{2, 4, 4};
    int mbconv_expansion = 4;
    int se_reduction = 4;
    int ffn_expansion = 4;
    Compaction compaction = Compaction::mean_time;
    int compact_t = 0;

    void validate() const;
};

struct ManifestEntry {
    std::string name;
    Shape shape;
    std::string init_rule;
    std::uint64_t seed = 0;
    std::size_t offset = 0;  // element offset into the serialized blob
};

/// Named parameter bundle plus the manifest describing every tensor.
struct ModelWeights {
    std::vector<ManifestEntry> manifest;
    std::map<std::string, DenseTensor> tensors;

    const DenseTensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    std::size_t total_elements() const;
    void rebuild_offsets();
};

/// Parameter lookup used while building a model graph: either fetches from
/// a ModelWeights bundle or records/initializes new tensors.
class ParamProvider {
public:
    virtual ~ParamProvider() = default;
    virtual ag::Var get(const std::string& name, const Shape& shape, const char* rule) = 0;
};

class FetchProvider final : public ParamProvider {
public:
    FetchProvider(const ModelWeights& w, bool requires_grad)
        : weights_(w), requires_grad_(requires_grad) {}
    ag::Var get(const std::string& name, const Shape& shape, const char* rule) override;
    const std::map<std::string, ag::Var>& leaves() const { return leaves_; }

private:
    const ModelWeights& weights_;
    bool requires_grad_;
    std::map<std::string, ag::Var> leaves_;
};

class InitProvider final : public ParamProvider {
public:
    explicit InitProvider(std::uint64_t seed) : seed_(seed) {}
    ag::Var get(const std::string& name, const Shape& shape, const char* rule) override;
    ModelWeights take();

private:
    std::uint64_t seed_;
    ModelWeights out_;
};

// ---- graph builders ----

struct BuiltHeads {
    ag::Var extent, boundary, distance;  // rank-2 H x W after squeeze
};

ag::Var build_stage(ag::Var x, const StageConfig& cfg, ParamProvider& pp,
                    const std::string& prefix);
BuiltHeads build_unet3d(ag::Var x, const UNet3DConfig& cfg, ParamProvider& pp);
BuiltHeads build_fusion(ag::Var x_optical, ag::Var x_sar, const FusionConfig& cfg,
                        ParamProvider& pp);

// ---- public forward / init entry points ----

DenseTensor stage_forward(const DenseTensor& x, const StageConfig& cfg,
                          const ModelWeights& w, const std::string& prefix = "stage");
MultitaskPrediction unet3d_forward(const DenseTensor& x, const UNet3DConfig& cfg,
                                   const ModelWeights& w);
MultitaskPrediction fusion_forward(const DenseTensor& x_optical, const DenseTensor& x_sar,
                                   const FusionConfig& cfg, const ModelWeights& w);

ModelWeights init_weights(const UNet3DConfig& cfg, std::uint64_t seed);
ModelWeights init_weights(const FusionConfig& cfg, std::uint64_t seed);
ModelWeights init_stage_weights(const StageConfig& cfg, std::uint64_t seed,
                                const std::string& prefix = "stage");

} // namespace fieldseg::nn
