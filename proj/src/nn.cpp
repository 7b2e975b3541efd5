#include "fieldseg/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fieldseg/errors.hpp"
#include "fieldseg/rng.hpp"

namespace fieldseg::nn {

namespace {

std::size_t shape_elems(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

DenseTensor init_tensor(const Shape& shape, const std::string& rule, std::uint64_t seed) {
    DenseTensor t(shape);
    if (rule == "zeros") return t;
    if (rule == "ones") return DenseTensor::full(shape, 1.0);
    if (rule == "trunc_normal_fanin") {
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
        const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Rng rng(seed);
        for (std::size_t i = 0; i < t.size(); ++i) {
            double z = rng.normal();
            while (std::abs(z) > 2.0) z = rng.normal();  // truncate at 2 sigma
            t[i] = z * stddev;
        }
        return t;
    }
    throw ConfigError("unknown init rule: " + rule);
}

} // namespace

// ---- weights ----

const DenseTensor& ModelWeights::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw WeightError("missing weight tensor: " + name);
    return it->second;
}

std::size_t ModelWeights::total_elements() const {
    std::size_t n = 0;
    for (const auto& e : manifest) n += shape_elems(e.shape);
    return n;
}

void ModelWeights::rebuild_offsets() {
    std::size_t off = 0;
    for (auto& e : manifest) {
        e.offset = off;
        off += shape_elems(e.shape);
    }
}

ag::Var FetchProvider::get(const std::string& name, const Shape& shape, const char*) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    const DenseTensor& t = weights_.get(name);
    if (t.shape() != shape)
        throw WeightError("weight " + name + " has shape " + shape_to_string(t.shape()) +
                          ", expected " + shape_to_string(shape));
    ag::Var v = ag::leaf(t, requires_grad_);
    leaves_.emplace(name, v);
    return v;
}

ag::Var InitProvider::get(const std::string& name, const Shape& shape, const char* rule) {
    auto it = out_.tensors.find(name);
    if (it != out_.tensors.end()) return ag::leaf(it->second, false);
    const std::uint64_t tseed = mix_seed(seed_, name);
    DenseTensor t = init_tensor(shape, rule, tseed);
    out_.manifest.push_back(ManifestEntry{name, shape, rule, tseed, 0});
    out_.tensors.emplace(name, t);
    return ag::leaf(std::move(t), false);
}

ModelWeights InitProvider::take() {
    out_.rebuild_offsets();
    return std::move(out_);
}

// ---- config validation ----

void UNet3DConfig::validate() const {
    if (stage_repeats.empty() || stage_repeats.size() % 2 == 0)
        throw ConfigError("stage_repeats must have odd length");
    std::vector<int> rev(stage_repeats.rbegin(), stage_repeats.rend());
    if (rev != stage_repeats)
        throw ConfigError("encoder and decoder must be symmetric: stage_repeats must equal "
                          "its reverse");
    for (int r : stage_repeats)
        if (r < 1) throw ConfigError("stage repeats must be >= 1");
    if (init_features < 1) throw ConfigError("init_features must be positive");
    if (patch.c == 0 || init_features % static_cast<int>(patch.c) != 0)
        throw ConfigError("init_features must be divisible by patch.c");
    if (in_channels < 1) throw ConfigError("in_channels must be positive");
    if (compaction == Compaction::conv_time && compact_t < 1)
        throw ConfigError("conv_time compaction requires compact_t >= 1");
}

void FusionConfig::validate() const {
    if (encoder_repeats.size() < 2)
        throw ConfigError("fusion encoder needs at least two stages");
    if (decoder_repeats.size() + 1 != encoder_repeats.size())
        throw ConfigError("fusion decoder must have one stage fewer than the encoder");
    for (int r : encoder_repeats)
        if (r < 1) throw ConfigError("stage repeats must be >= 1");
    for (int r : decoder_repeats)
        if (r < 1) throw ConfigError("stage repeats must be >= 1");
    if (init_features < 1) throw ConfigError("init_features must be positive");
    if (patch.c == 0 || init_features % static_cast<int>(patch.c) != 0)
        throw ConfigError("init_features must be divisible by patch.c");
}

// ---- blocks ----

namespace {

using ag::Var;

struct BlockCtx {
    ParamProvider& pp;
    std::string prefix;

    Var get(const std::string& name, Shape shape, const char* rule) const {
        return pp.get(prefix + name, shape, rule);
    }
};

Var norm_block(const BlockCtx& c, const std::string& name, Var x, std::size_t channels) {
    Var gamma = c.get(name + ".gamma", Shape{channels}, "ones");
    Var beta = c.get(name + ".beta", Shape{channels}, "zeros");
    return ag::instance_norm(x, gamma, beta);
}

Var mbconv_block(const BlockCtx& c, Var x, const StageConfig& cfg) {
    const std::size_t ch = static_cast<std::size_t>(cfg.channels);
    const std::size_t hidden = ch * static_cast<std::size_t>(cfg.mbconv_expansion);
    Var h = norm_block(c, "mb.norm", x, ch);
    h = ag::conv1x1(h, c.get("mb.expand.weight", Shape{hidden, ch}, "trunc_normal_fanin"),
                    c.get("mb.expand.bias", Shape{hidden}, "zeros"));
    h = ag::gelu(h);
    h = ag::dwconv3d(h, c.get("mb.dw.weight", Shape{hidden, 3, 3, 3}, "trunc_normal_fanin"),
                     c.get("mb.dw.bias", Shape{hidden}, "zeros"));
    h = ag::gelu(h);
    h = ag::conv1x1(h, c.get("mb.contract.weight", Shape{ch, hidden}, "trunc_normal_fanin"),
                    c.get("mb.contract.bias", Shape{ch}, "zeros"));
    return ag::add(x, h);
}

Var squeeze_excite_block(const BlockCtx& c, Var x, const StageConfig& cfg) {
    const std::size_t ch = static_cast<std::size_t>(cfg.channels);
    const std::size_t mid =
        std::max<std::size_t>(1, ch / static_cast<std::size_t>(cfg.se_reduction));
    Var s = ag::global_mean_thw(x);
    s = ag::linear(s, c.get("se.fc1.weight", Shape{mid, ch}, "trunc_normal_fanin"),
                   c.get("se.fc1.bias", Shape{mid}, "zeros"));
    s = ag::gelu(s);
    s = ag::linear(s, c.get("se.fc2.weight", Shape{ch, mid}, "trunc_normal_fanin"),
                   c.get("se.fc2.bias", Shape{ch}, "zeros"));
    // tanh gate: a zeroed fc2 makes the whole branch vanish, keeping the
    // residual identity property of every block.
    s = ag::tanh_op(s);
    return ag::add(x, ag::channel_mul(x, s));
}

Var attention_block(const BlockCtx& c, Var x, const StageConfig& cfg) {
    const std::size_t ch = static_cast<std::size_t>(cfg.channels);
    Var h = norm_block(c, "att.norm", x, ch);
    Var q = ag::conv1x1(h, c.get("att.q.weight", Shape{ch, ch}, "trunc_normal_fanin"),
                        c.get("att.q.bias", Shape{ch}, "zeros"));
    Var k = ag::conv1x1(h, c.get("att.k.weight", Shape{ch, ch}, "trunc_normal_fanin"),
                        c.get("att.k.bias", Shape{ch}, "zeros"));
    Var v = ag::conv1x1(h, c.get("att.v.weight", Shape{ch, ch}, "trunc_normal_fanin"),
                        c.get("att.v.bias", Shape{ch}, "zeros"));
    pta3d::AttentionConfig acfg;
    acfg.patch = cfg.patch;
    acfg.causal = cfg.causal;
    Var a = ag::pta_attention(q, k, v, acfg);
    a = ag::conv1x1(a, c.get("att.out.weight", Shape{ch, ch}, "trunc_normal_fanin"),
                    c.get("att.out.bias", Shape{ch}, "zeros"));
    return ag::add(x, a);
}

Var ffn_block(const BlockCtx& c, Var x, const StageConfig& cfg) {
    const std::size_t ch = static_cast<std::size_t>(cfg.channels);
    const std::size_t hidden = ch * static_cast<std::size_t>(cfg.ffn_expansion);
    Var h = norm_block(c, "ffn.norm", x, ch);
    h = ag::conv1x1(h, c.get("ffn.fc1.weight", Shape{hidden, ch}, "trunc_normal_fanin"),
                    c.get("ffn.fc1.bias", Shape{hidden}, "zeros"));
    h = ag::gelu(h);
    h = ag::conv1x1(h, c.get("ffn.fc2.weight", Shape{ch, hidden}, "trunc_normal_fanin"),
                    c.get("ffn.fc2.bias", Shape{ch}, "zeros"));
    return ag::add(x, h);
}

void check_stage_input(const DenseTensor& x, const StageConfig& cfg) {
    if (x.rank() != 4) throw DimensionError("stage input must be rank-4 C,T,H,W");
    if (x.extent(0) != static_cast<std::size_t>(cfg.channels))
        throw DimensionError("stage channels " + std::to_string(cfg.channels) +
                             " do not match input " + shape_to_string(x.shape()));
    if (cfg.channels % static_cast<int>(cfg.patch.c) != 0)
        throw ConfigError("stage channels must be divisible by patch.c");
}

} // namespace

ag::Var build_stage(ag::Var x, const StageConfig& cfg, ParamProvider& pp,
                    const std::string& prefix) {
    check_stage_input(x->value, cfg);
    for (int r = 0; r < cfg.repeats; ++r) {
        BlockCtx c{pp, prefix + ".r" + std::to_string(r) + "."};
        x = mbconv_block(c, x, cfg);
        x = squeeze_excite_block(c, x, cfg);
        x = attention_block(c, x, cfg);
        x = ffn_block(c, x, cfg);
    }
    return x;
}

namespace {

StageConfig stage_cfg_for(const UNet3DConfig& cfg, int repeats, int channels) {
    StageConfig s;
    s.repeats = repeats;
    s.channels = channels;
    s.patch = cfg.patch;
    s.causal = cfg.causal;
    s.mbconv_expansion = cfg.mbconv_expansion;
    s.se_reduction = cfg.se_reduction;
    s.ffn_expansion = cfg.ffn_expansion;
    return s;
}

Var compact_time(Var x, ParamProvider& pp, Compaction mode, int compact_t,
                 std::size_t channels) {
    if (mode == Compaction::mean_time) return ag::mean_t(x);
    const std::size_t t = x->value.extent(1);
    if (t != static_cast<std::size_t>(compact_t))
        throw ConfigError("conv_time compaction configured for T=" +
                          std::to_string(compact_t) + " but input has T=" +
                          std::to_string(t));
    // Convolution over the full time extent, valid padding: implemented as a
    // per-time pointwise mix summed over time.
    Var acc;
    for (std::size_t ti = 0; ti < t; ++ti) {
        Var mixed = ag::conv1x1(
            ag::time_slice(x, ti),
            pp.get("compact.t" + std::to_string(ti) + ".weight", Shape{channels, channels},
                   "trunc_normal_fanin"),
            pp.get("compact.t" + std::to_string(ti) + ".bias", Shape{channels}, "zeros"));
        acc = acc ? ag::add(acc, mixed) : mixed;
    }
    return acc;
}

BuiltHeads head_block(Var x, ParamProvider& pp, std::size_t channels) {
    Var logits = ag::conv1x1(x, pp.get("head.weight", Shape{3, channels}, "trunc_normal_fanin"),
                             pp.get("head.bias", Shape{3}, "zeros"));
    Var probs = ag::sigmoid(logits);
    const std::size_t h = probs->value.extent(2), w = probs->value.extent(3);
    auto squeeze = [&](std::size_t c0) {
        return ag::reshape_op(ag::channel_slice(probs, c0, 1), Shape{h, w});
    };
    return BuiltHeads{squeeze(0), squeeze(1), squeeze(2)};
}

} // namespace

BuiltHeads build_unet3d(ag::Var x, const UNet3DConfig& cfg, ParamProvider& pp) {
    cfg.validate();
    if (x->value.rank() != 4) throw DimensionError("unet3d input must be rank-4 C,T,H,W");
    if (x->value.extent(0) != static_cast<std::size_t>(cfg.in_channels))
        throw DimensionError("unet3d input channels " + std::to_string(x->value.extent(0)) +
                             " do not match config " + std::to_string(cfg.in_channels));
    const int depth = cfg.depth();
    const std::size_t h = x->value.extent(2), w = x->value.extent(3);
    const std::size_t div = static_cast<std::size_t>(1) << depth;
    if (h % div != 0 || w % div != 0)
        throw DimensionError("spatial extents must be divisible by 2^depth = " +
                             std::to_string(div));
    for (int k = 0; k <= depth; ++k) {
        const std::size_t hk = h >> k, wk = w >> k;
        if (hk % cfg.patch.h != 0 || wk % cfg.patch.w != 0)
            throw DimensionError("patch grid does not divide the stage-" + std::to_string(k) +
                                 " spatial extents");
    }

    Var cur = ag::conv3d_same(
        x,
        pp.get("stem.weight",
               Shape{static_cast<std::size_t>(cfg.init_features),
                     static_cast<std::size_t>(cfg.in_channels), 3, 3, 3},
               "trunc_normal_fanin"),
        pp.get("stem.bias", Shape{static_cast<std::size_t>(cfg.init_features)}, "zeros"));

    std::vector<Var> skips;
    int channels = cfg.init_features;
    for (int i = 0; i < depth; ++i) {
        cur = build_stage(cur, stage_cfg_for(cfg, cfg.stage_repeats[i], channels), pp,
                          "enc" + std::to_string(i));
        skips.push_back(cur);
        const std::size_t ci = static_cast<std::size_t>(channels);
        cur = ag::conv3d_down(
            cur, pp.get("down" + std::to_string(i) + ".weight", Shape{ci * 2, ci, 1, 2, 2},
                        "trunc_normal_fanin"),
            pp.get("down" + std::to_string(i) + ".bias", Shape{ci * 2}, "zeros"));
        channels *= 2;
    }

    cur = build_stage(cur, stage_cfg_for(cfg, cfg.stage_repeats[depth], channels), pp, "bridge");

    for (int j = 0; j < depth; ++j) {
        const int out_channels = channels / 2;
        cur = ag::upsample2_hw(cur);
        Var skip = skips[static_cast<std::size_t>(depth - 1 - j)];
        cur = ag::concat_c(cur, skip);
        const std::size_t ci = static_cast<std::size_t>(channels + out_channels);
        cur = ag::conv1x1(
            cur, pp.get("dec" + std::to_string(j) + ".fuse.weight",
                        Shape{static_cast<std::size_t>(out_channels), ci}, "trunc_normal_fanin"),
            pp.get("dec" + std::to_string(j) + ".fuse.bias",
                   Shape{static_cast<std::size_t>(out_channels)}, "zeros"));
        channels = out_channels;
        cur = build_stage(cur, stage_cfg_for(cfg, cfg.stage_repeats[depth + 1 + j], channels),
                          pp, "dec" + std::to_string(j));
    }

    // One more stage before compacting the time dimension.
    cur = build_stage(cur, stage_cfg_for(cfg, cfg.stage_repeats.front(), channels), pp, "final");
    cur = compact_time(cur, pp, cfg.compaction, cfg.compact_t,
                       static_cast<std::size_t>(channels));
    return head_block(cur, pp, static_cast<std::size_t>(channels));
}

namespace {

struct CrossPair {
    Var a, b;
};

// Cross attention in both directions: each stream is re-weighted by the
// mean patch similarity to the whole other stream (queries come from the
// other stream; keys/values stay on the updated stream's timeline).
CrossPair cross_attention(Var a, Var b, const FusionConfig& cfg, ParamProvider& pp,
                          const std::string& prefix, std::size_t channels) {
    BlockCtx ca{pp, prefix + ".a."};
    BlockCtx cb{pp, prefix + ".b."};
    Var an = norm_block(ca, "norm", a, channels);
    Var bn = norm_block(cb, "norm", b, channels);
    pta3d::AttentionConfig acfg;
    acfg.patch = cfg.patch;

    auto direction = [&](const BlockCtx& c, Var query_stream, Var kv_stream, Var residual) {
        Var q = ag::conv1x1(query_stream,
                            c.get("q.weight", Shape{channels, channels}, "trunc_normal_fanin"),
                            c.get("q.bias", Shape{channels}, "zeros"));
        Var k = ag::conv1x1(kv_stream,
                            c.get("k.weight", Shape{channels, channels}, "trunc_normal_fanin"),
                            c.get("k.bias", Shape{channels}, "zeros"));
        Var v = ag::conv1x1(kv_stream,
                            c.get("v.weight", Shape{channels, channels}, "trunc_normal_fanin"),
                            c.get("v.bias", Shape{channels}, "zeros"));
        Var att = ag::pta_attention(q, k, v, acfg);
        att = ag::conv1x1(att,
                          c.get("out.weight", Shape{channels, channels}, "trunc_normal_fanin"),
                          c.get("out.bias", Shape{channels}, "zeros"));
        return ag::add(residual, att);
    };
    CrossPair out;
    out.a = direction(ca, bn, an, a);  // stream a updated with queries from b
    out.b = direction(cb, an, bn, b);  // stream b updated with queries from a
    return out;
}

StageConfig stage_cfg_for(const FusionConfig& cfg, int repeats, int channels) {
    StageConfig s;
    s.repeats = repeats;
    s.channels = channels;
    s.patch = cfg.patch;
    s.mbconv_expansion = cfg.mbconv_expansion;
    s.se_reduction = cfg.se_reduction;
    s.ffn_expansion = cfg.ffn_expansion;
    return s;
}

} // namespace

BuiltHeads build_fusion(ag::Var xa, ag::Var xb, const FusionConfig& cfg, ParamProvider& pp) {
    cfg.validate();
    if (xa->value.rank() != 4 || xb->value.rank() != 4)
        throw DimensionError("fusion inputs must be rank-4 C,T,H,W");
    if (xa->value.extent(2) != xb->value.extent(2) ||
        xa->value.extent(3) != xb->value.extent(3))
        throw DimensionError("fusion streams must share spatial extents: " +
                             shape_to_string(xa->value.shape()) + " vs " +
                             shape_to_string(xb->value.shape()));
    const int n_enc = static_cast<int>(cfg.encoder_repeats.size());
    const int depth = n_enc - 1;
    const std::size_t h = xa->value.extent(2), w = xa->value.extent(3);
    const std::size_t div = static_cast<std::size_t>(1) << depth;
    if (h % div != 0 || w % div != 0)
        throw DimensionError("spatial extents must be divisible by 2^depth = " +
                             std::to_string(div));

    const std::size_t f0 = static_cast<std::size_t>(cfg.init_features);
    Var fa = ag::conv3d_same(
        xa,
        pp.get("stem_a.weight",
               Shape{f0, static_cast<std::size_t>(cfg.in_channels_optical), 3, 3, 3},
               "trunc_normal_fanin"),
        pp.get("stem_a.bias", Shape{f0}, "zeros"));
    Var fb = ag::conv3d_same(
        xb,
        pp.get("stem_b.weight",
               Shape{f0, static_cast<std::size_t>(cfg.in_channels_sar), 3, 3, 3},
               "trunc_normal_fanin"),
        pp.get("stem_b.bias", Shape{f0}, "zeros"));

    std::vector<Var> skips;
    int channels = cfg.init_features;
    for (int i = 0; i < n_enc; ++i) {
        fa = build_stage(fa, stage_cfg_for(cfg, cfg.encoder_repeats[i], channels), pp,
                         "enc_a" + std::to_string(i));
        fb = build_stage(fb, stage_cfg_for(cfg, cfg.encoder_repeats[i], channels), pp,
                         "enc_b" + std::to_string(i));
        CrossPair fused = cross_attention(fa, fb, cfg, pp, "xattn" + std::to_string(i),
                                          static_cast<std::size_t>(channels));
        fa = fused.a;
        fb = fused.b;
        if (i < depth) {
            skips.push_back(fa);
            const std::size_t ci = static_cast<std::size_t>(channels);
            fa = ag::conv3d_down(fa,
                                 pp.get("down_a" + std::to_string(i) + ".weight",
                                        Shape{ci * 2, ci, 1, 2, 2}, "trunc_normal_fanin"),
                                 pp.get("down_a" + std::to_string(i) + ".bias", Shape{ci * 2},
                                        "zeros"));
            fb = ag::conv3d_down(fb,
                                 pp.get("down_b" + std::to_string(i) + ".weight",
                                        Shape{ci * 2, ci, 1, 2, 2}, "trunc_normal_fanin"),
                                 pp.get("down_b" + std::to_string(i) + ".bias", Shape{ci * 2},
                                        "zeros"));
            channels *= 2;
        }
    }

    // Single decoder on the optical-timeline stream with skips from the
    // fused encoder levels.
    Var cur = fa;
    for (std::size_t j = 0; j < cfg.decoder_repeats.size(); ++j) {
        const int out_channels = channels / 2;
        cur = ag::upsample2_hw(cur);
        Var skip = skips[skips.size() - 1 - j];
        cur = ag::concat_c(cur, skip);
        const std::size_t ci = static_cast<std::size_t>(channels + out_channels);
        cur = ag::conv1x1(
            cur,
            pp.get("dec" + std::to_string(j) + ".fuse.weight",
                   Shape{static_cast<std::size_t>(out_channels), ci}, "trunc_normal_fanin"),
            pp.get("dec" + std::to_string(j) + ".fuse.bias",
                   Shape{static_cast<std::size_t>(out_channels)}, "zeros"));
        channels = out_channels;
        cur = build_stage(cur, stage_cfg_for(cfg, cfg.decoder_repeats[j], channels), pp,
                          "dec" + std::to_string(j));
    }

    cur = build_stage(cur, stage_cfg_for(cfg, cfg.decoder_repeats.back(), channels), pp,
                      "final");
    cur = compact_time(cur, pp, cfg.compaction, cfg.compact_t,
                       static_cast<std::size_t>(channels));
    return head_block(cur, pp, static_cast<std::size_t>(channels));
}

// ---- forwards / init ----

DenseTensor stage_forward(const DenseTensor& x, const StageConfig& cfg, const ModelWeights& w,
                          const std::string& prefix) {
    FetchProvider pp(w, false);
    ag::Var out = build_stage(ag::leaf(x, false), cfg, pp, prefix);
    return out->value;
}

MultitaskPrediction unet3d_forward(const DenseTensor& x, const UNet3DConfig& cfg,
                                   const ModelWeights& w) {
    FetchProvider pp(w, false);
    BuiltHeads heads = build_unet3d(ag::leaf(x, false), cfg, pp);
    return MultitaskPrediction{heads.extent->value, heads.boundary->value,
                               heads.distance->value};
}

MultitaskPrediction fusion_forward(const DenseTensor& x_optical, const DenseTensor& x_sar,
                                   const FusionConfig& cfg, const ModelWeights& w) {
    FetchProvider pp(w, false);
    BuiltHeads heads = build_fusion(ag::leaf(x_optical, false), ag::leaf(x_sar, false), cfg, pp);
    return MultitaskPrediction{heads.extent->value, heads.boundary->value,
                               heads.distance->value};
}

namespace {

// Minimal valid dummy input for a config: weights are shape-independent of
// the input, so the init pass runs a small forward to enumerate them.
DenseTensor dummy_input(int channels, int t, int depth, const PatchSpec& patch) {
    const std::size_t side =
        std::max(patch.h, patch.w) * (static_cast<std::size_t>(1) << depth);
    return DenseTensor(Shape{static_cast<std::size_t>(channels),
                             static_cast<std::size_t>(t), side, side});
}

} // namespace

ModelWeights init_weights(const UNet3DConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    InitProvider pp(seed);
    const int t = cfg.compaction == Compaction::conv_time ? cfg.compact_t : 1;
    build_unet3d(ag::leaf(dummy_input(cfg.in_channels, t, cfg.depth(), cfg.patch), false), cfg,
                 pp);
    return pp.take();
}

ModelWeights init_weights(const FusionConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    InitProvider pp(seed);
    const int depth = static_cast<int>(cfg.encoder_repeats.size()) - 1;
    const int t = cfg.compaction == Compaction::conv_time ? cfg.compact_t : 1;
    build_fusion(ag::leaf(dummy_input(cfg.in_channels_optical, t, depth, cfg.patch), false),
                 ag::leaf(dummy_input(cfg.in_channels_sar, 1, depth, cfg.patch), false), cfg,
                 pp);
    return pp.take();
}

ModelWeights init_stage_weights(const StageConfig& cfg, std::uint64_t seed,
                                const std::string& prefix) {
    InitProvider pp(seed);
    DenseTensor dummy(Shape{static_cast<std::size_t>(cfg.channels), 1,
                            cfg.patch.h, cfg.patch.w});
    build_stage(ag::leaf(std::move(dummy), false), cfg, pp, prefix);
    return pp.take();
}

} // namespace fieldseg::nn
