#include <doctest.h>

#include <cmath>

#include "fieldseg/errors.hpp"
#include "fieldseg/loss_metrics.hpp"
#include "fieldseg/nn.hpp"
#include "fieldseg/rng.hpp"
#include "fieldseg/trainer.hpp"

using namespace fieldseg;
using namespace fieldseg::nn;

namespace {

DenseTensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    DenseTensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

StageConfig small_stage() {
    StageConfig cfg;
    cfg.repeats = 1;
    cfg.channels = 8;
    cfg.patch = PatchSpec{2, 2, 2};
    cfg.mbconv_expansion = 2;
    cfg.ffn_expansion = 2;
    return cfg;
}

UNet3DConfig small_unet() {
    UNet3DConfig cfg;
    cfg.stage_repeats = {1, 1, 1};
    cfg.init_features = 8;
    cfg.in_channels = 4;
    cfg.patch = PatchSpec{2, 2, 2};
    cfg.mbconv_expansion = 2;
    cfg.ffn_expansion = 2;
    return cfg;
}

FusionConfig small_fusion() {
    FusionConfig cfg;
    cfg.encoder_repeats = {1, 1};
    cfg.decoder_repeats = {1};
    cfg.init_features = 8;
    cfg.patch = PatchSpec{2, 2, 2};
    cfg.mbconv_expansion = 2;
    cfg.ffn_expansion = 2;
    return cfg;
}

bool all_in_unit_range(const DenseTensor& t) {
    for (double v : t.storage())
        if (!(v >= 0.0 && v <= 1.0)) return false;
    return true;
}

bool bit_identical(const DenseTensor& a, const DenseTensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace

TEST_CASE("stage preserves shape and the time extent") {
    StageConfig cfg = small_stage();
    ModelWeights w = init_stage_weights(cfg, 5);
    Rng rng(91);
    for (std::size_t t : {1, 2, 5}) {
        DenseTensor x = random_tensor(Shape{8, t, 8, 8}, rng);
        DenseTensor y = stage_forward(x, cfg, w);
        CHECK(y.shape() == x.shape());
    }
    CHECK_THROWS_AS(stage_forward(random_tensor(Shape{4, 1, 8, 8}, rng), cfg, w),
                    DimensionError);
}

TEST_CASE("identity-initialized residual branches make the stage an identity") {
    StageConfig cfg = small_stage();
    ModelWeights w = init_stage_weights(cfg, 6);
    // zero the final layer of every residual branch
    for (const char* name :
         {"stage.r0.mb.contract.weight", "stage.r0.mb.contract.bias",
          "stage.r0.se.fc2.weight", "stage.r0.se.fc2.bias", "stage.r0.att.out.weight",
          "stage.r0.att.out.bias", "stage.r0.ffn.fc2.weight", "stage.r0.ffn.fc2.bias"}) {
        DenseTensor& t = w.tensors.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
    }
    Rng rng(92);
    DenseTensor x = random_tensor(Shape{8, 2, 8, 8}, rng);
    DenseTensor y = stage_forward(x, cfg, w);
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == x[i]);
}

TEST_CASE("stage forward is bit-deterministic") {
    StageConfig cfg = small_stage();
    ModelWeights w = init_stage_weights(cfg, 7);
    Rng rng(93);
    DenseTensor x = random_tensor(Shape{8, 2, 8, 8}, rng);
    CHECK(bit_identical(stage_forward(x, cfg, w), stage_forward(x, cfg, w)));
}

TEST_CASE("stage rejects a weight bundle with a missing or mis-shaped tensor") {
    StageConfig cfg = small_stage();
    ModelWeights w = init_stage_weights(cfg, 8);
    Rng rng(94);
    DenseTensor x = random_tensor(Shape{8, 1, 8, 8}, rng);
    ModelWeights missing = w;
    missing.tensors.erase("stage.r0.ffn.fc2.weight");
    CHECK_THROWS_AS(stage_forward(x, cfg, missing), WeightError);
    ModelWeights wrong = w;
    wrong.tensors.at("stage.r0.ffn.fc2.weight") = DenseTensor(Shape{3, 3});
    CHECK_THROWS_AS(stage_forward(x, cfg, wrong), WeightError);
}

TEST_CASE("unet3d tiny depth-3 configuration emits unit-range maps") {
    UNet3DConfig cfg;  // paper-shaped tiny config at desk-scale feature width
    cfg.stage_repeats = {2, 2, 5, 2, 5, 2, 2};
    cfg.init_features = 16;
    cfg.in_channels = 4;
    cfg.patch = PatchSpec{2, 4, 4};
    ModelWeights w = init_weights(cfg, 11);
    Rng rng(95);
    DenseTensor x = random_tensor(Shape{4, 4, 64, 64}, rng, 0.0, 1.0);
    MultitaskPrediction pred = unet3d_forward(x, cfg, w);
    CHECK(pred.extent.shape() == Shape{64, 64});
    CHECK(pred.boundary.shape() == Shape{64, 64});
    CHECK(pred.distance.shape() == Shape{64, 64});
    CHECK(all_in_unit_range(pred.extent));
    CHECK(all_in_unit_range(pred.boundary));
    CHECK(all_in_unit_range(pred.distance));
}

TEST_CASE("unet3d weights are time-agnostic: one bundle serves T=4 and T=8") {
    UNet3DConfig cfg = small_unet();
    ModelWeights w = init_weights(cfg, 12);
    Rng rng(96);
    DenseTensor x4 = random_tensor(Shape{4, 4, 16, 16}, rng);
    DenseTensor x8 = random_tensor(Shape{4, 8, 16, 16}, rng);
    MultitaskPrediction p4 = unet3d_forward(x4, cfg, w);
    MultitaskPrediction p8 = unet3d_forward(x8, cfg, w);
    CHECK(p4.extent.shape() == Shape{16, 16});
    CHECK(p8.extent.shape() == Shape{16, 16});
    // the manifest itself never references T
    ModelWeights again = init_weights(cfg, 12);
    REQUIRE(again.manifest.size() == w.manifest.size());
    for (std::size_t i = 0; i < w.manifest.size(); ++i) {
        CHECK(again.manifest[i].name == w.manifest[i].name);
        CHECK(again.manifest[i].shape == w.manifest[i].shape);
    }
}

TEST_CASE("unet3d on a constant field emits spatially constant maps") {
    UNet3DConfig cfg = small_unet();
    ModelWeights w = init_weights(cfg, 13);
    DenseTensor x = DenseTensor::full(Shape{4, 2, 16, 16}, 0.4);
    MultitaskPrediction pred = unet3d_forward(x, cfg, w);
    for (const DenseTensor* layer : {&pred.extent, &pred.boundary, &pred.distance}) {
        const double v = (*layer)[0];
        for (std::size_t i = 0; i < layer->size(); ++i)
            REQUIRE((*layer)[i] == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("unet3d validation errors") {
    UNet3DConfig cfg = small_unet();
    ModelWeights w = init_weights(cfg, 14);
    Rng rng(97);
    // spatial extent not divisible by 2^depth
    CHECK_THROWS_AS(unet3d_forward(random_tensor(Shape{4, 2, 18, 18}, rng), cfg, w),
                    DimensionError);
    // asymmetric repeats rejected
    UNet3DConfig bad = cfg;
    bad.stage_repeats = {1, 2, 2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    UNet3DConfig even = cfg;
    even.stage_repeats = {1, 1};
    CHECK_THROWS_AS(even.validate(), ConfigError);
    // channel mismatch with patch.c
    UNet3DConfig badc = cfg;
    badc.init_features = 9;
    badc.patch = PatchSpec{2, 2, 2};
    CHECK_THROWS_AS(badc.validate(), ConfigError);
}

TEST_CASE("doubling init_features scales interior conv parameters by 4") {
    UNet3DConfig cfg = small_unet();
    ModelWeights w1 = init_weights(cfg, 15);
    UNet3DConfig cfg2 = cfg;
    cfg2.init_features *= 2;
    ModelWeights w2 = init_weights(cfg2, 15);
    REQUIRE(w1.manifest.size() == w2.manifest.size());
    for (std::size_t i = 0; i < w1.manifest.size(); ++i) {
        const ManifestEntry& a = w1.manifest[i];
        const ManifestEntry& b = w2.manifest[i];
        REQUIRE(a.name == b.name);
        std::size_t na = 1, nb = 1;
        for (std::size_t e : a.shape) na *= e;
        for (std::size_t e : b.shape) nb *= e;
        if (a.name == "stem.weight" || a.name == "head.weight") {
            CHECK(nb == 2 * na);  // one side pinned by in/out channels
        } else if (a.name == "head.bias") {
            CHECK(nb == na);
        } else if (a.name.find(".dw.weight") != std::string::npos) {
            CHECK(nb == 2 * na);  // depthwise kernels are linear in channels
        } else if (a.shape.size() >= 2) {
            CHECK(nb == 4 * na);  // dense conv / linear weights
        } else {
            CHECK(nb == 2 * na);  // biases and norm affine parameters
        }
    }
}

TEST_CASE("init_weights determinism and seed sensitivity") {
    UNet3DConfig cfg = small_unet();
    ModelWeights a = init_weights(cfg, 21);
    ModelWeights b = init_weights(cfg, 21);
    ModelWeights c = init_weights(cfg, 22);
    REQUIRE(a.manifest.size() == b.manifest.size());
    bool all_same = true;
    bool any_diff_c = false;
    for (const auto& e : a.manifest) {
        const DenseTensor& ta = a.tensors.at(e.name);
        const DenseTensor& tb = b.tensors.at(e.name);
        const DenseTensor& tc = c.tensors.at(e.name);
        all_same = all_same && bit_identical(ta, tb);
        if (e.init_rule == "trunc_normal_fanin" && !bit_identical(ta, tc))
            any_diff_c = true;
    }
    CHECK(all_same);
    CHECK(any_diff_c);
}

TEST_CASE("fusion forward fuses streams with differing time extents") {
    FusionConfig cfg = small_fusion();
    ModelWeights w = init_weights(cfg, 31);
    Rng rng(98);
    DenseTensor s2 = random_tensor(Shape{4, 4, 64, 64}, rng, 0.0, 1.0);
    DenseTensor s1 = random_tensor(Shape{5, 16, 64, 64}, rng, 0.0, 1.0);
    MultitaskPrediction pred = fusion_forward(s2, s1, cfg, w);
    CHECK(pred.extent.shape() == Shape{64, 64});
    CHECK(all_in_unit_range(pred.extent));
    CHECK(all_in_unit_range(pred.boundary));
    CHECK(all_in_unit_range(pred.distance));

    // zeroed SAR stream still yields valid-range outputs
    DenseTensor zero_s1(Shape{5, 16, 64, 64});
    MultitaskPrediction pz = fusion_forward(s2, zero_s1, cfg, w);
    CHECK(all_in_unit_range(pz.extent));

    // determinism under a fixed seed
    MultitaskPrediction p2 = fusion_forward(s2, s1, cfg, w);
    CHECK(bit_identical(pred.extent, p2.extent));
    CHECK(bit_identical(pred.distance, p2.distance));

    // spatial mismatch rejected
    CHECK_THROWS_AS(
        fusion_forward(s2, random_tensor(Shape{5, 4, 32, 32}, rng), cfg, w),
        DimensionError);
}

TEST_CASE("fit_toy with lr=0 leaves the loss trace constant") {
    UNet3DConfig cfg = small_unet();
    Rng rng(99);
    std::vector<ToySample> data;
    ToySample s;
    s.input = random_tensor(Shape{4, 2, 16, 16}, rng, 0.0, 1.0);
    s.target.extent = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    s.target.boundary = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    s.target.distance = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    data.push_back(std::move(s));

    FitResult res = fit_toy(cfg, data, 3, 0.0, 41);
    REQUIRE(res.loss_trace.size() == 4);
    for (double v : res.loss_trace) CHECK(v == res.loss_trace[0]);
}

TEST_CASE("fit_toy reduces the loss on a small denoising task") {
    UNet3DConfig cfg = small_unet();
    Rng rng(100);
    std::vector<ToySample> data;
    for (int i = 0; i < 2; ++i) {
        ToySample s;
        s.target.extent = DenseTensor(Shape{16, 16});
        s.target.boundary = DenseTensor(Shape{16, 16});
        s.target.distance = DenseTensor(Shape{16, 16});
        s.input = DenseTensor(Shape{4, 2, 16, 16});
        for (std::size_t r = 0; r < 16; ++r)
            for (std::size_t c = 0; c < 16; ++c) {
                const bool ridge = (c == 8);
                s.target.extent.at({r, c}) = ridge ? 0.0 : 1.0;
                s.target.boundary.at({r, c}) = ridge ? 1.0 : 0.0;
                s.target.distance.at({r, c}) =
                    std::min<double>(std::min(c, 15 - c), 8) / 8.0;
                for (std::size_t ch = 0; ch < 4; ++ch)
                    for (std::size_t t = 0; t < 2; ++t)
                        s.input.at({ch, t, r, c}) =
                            (ridge ? 0.2 : 0.7) + rng.uniform(-0.05, 0.05);
            }
        data.push_back(std::move(s));
    }
    FitResult res = fit_toy(cfg, data, 30, 0.3, 42);
    CHECK(res.loss_trace.back() < res.loss_trace.front());
}

TEST_CASE("fit_toy gradients match finite differences on parameter probes") {
    UNet3DConfig cfg = small_unet();
    Rng rng(101);
    std::vector<ToySample> data;
    ToySample s;
    s.input = random_tensor(Shape{4, 2, 16, 16}, rng, 0.0, 1.0);
    s.target.extent = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    s.target.boundary = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    s.target.distance = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    data.push_back(s);

    ModelWeights w = init_weights(cfg, 51);
    // analytic gradient via one zero-lr "step" is not exposed; recompute here
    // with the training graph by running a single step at lr=0 and reading
    // the accumulated leaf gradients through a tiny lr update instead:
    // compare loss changes against finite differences for probed parameters.
    const double step = 1e-5;
    // gradient from the implementation: w' = w - lr * g  =>  g = (w - w')/lr
    const double lr = 1e-6;
    FitResult one = fit_toy_from(cfg, w, data, 1, lr);
    int probes = 0;
    for (const auto& e : w.manifest) {
        if (e.init_rule != "trunc_normal_fanin") continue;
        if (probes >= 10) break;
        const DenseTensor& before = w.tensors.at(e.name);
        const DenseTensor& after = one.weights.tensors.at(e.name);
        const std::size_t i = rng.below(before.size());
        const double grad_impl = (before[i] - after[i]) / lr;

        ModelWeights plus = w;
        plus.tensors.at(e.name)[i] += step;
        ModelWeights minus = w;
        minus.tensors.at(e.name)[i] -= step;
        const double fd = (toy_loss(cfg, plus, data) - toy_loss(cfg, minus, data)) /
                          (2.0 * step);
        const double denom = std::max({std::abs(fd), std::abs(grad_impl), 1e-6});
        REQUIRE(std::abs(fd - grad_impl) / denom <= 1e-3);
        ++probes;
    }
    CHECK(probes == 10);
}

TEST_CASE("fit_toy raises TrainingError on non-finite loss") {
    UNet3DConfig cfg = small_unet();
    Rng rng(102);
    std::vector<ToySample> data;
    ToySample s;
    s.input = random_tensor(Shape{4, 2, 16, 16}, rng, 0.0, 1.0);
    s.target.extent = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    s.target.boundary = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    s.target.distance = random_tensor(Shape{16, 16}, rng, 0.0, 1.0);
    data.push_back(s);
    ModelWeights w = init_weights(cfg, 61);
    w.tensors.at("stem.weight")[0] = std::nan("");
    CHECK_THROWS_AS(fit_toy_from(cfg, std::move(w), data, 1, 0.1), TrainingError);
}
