#include "fieldseg/synth.hpp"

#include <algorithm>
#include <cmath>

#include "fieldseg/errors.hpp"
#include "fieldseg/rng.hpp"

namespace fieldseg::synth {

void SceneSpec::validate() const {
    if (height < 64 || width < 64)
        throw ConfigError("scene extents must be at least 64 x 64");
    if (n_fields < 1) throw ConfigError("n_fields must be >= 1");
    if (times < 1) throw ConfigError("times must be >= 1");
    if (!(cloud_fraction >= 0.0 && cloud_fraction < 1.0))
        throw ConfigError("cloud_fraction must lie in [0,1)");
    if (speckle_looks < 1) throw ConfigError("speckle_looks must be >= 1");
}

FieldScene gen_fields(const SceneSpec& spec) {
    spec.validate();
    const std::size_t h = spec.height, w = spec.width;
    Rng rng(mix_seed(spec.seed, "fields"));

    std::vector<double> site_r(spec.n_fields), site_c(spec.n_fields);
    for (int f = 0; f < spec.n_fields; ++f) {
        site_r[static_cast<std::size_t>(f)] = rng.uniform(0.0, static_cast<double>(h));
        site_c[static_cast<std::size_t>(f)] = rng.uniform(0.0, static_cast<double>(w));
    }

    FieldScene out;
    out.labels = IntImage(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const double pr = static_cast<double>(r) + 0.5;
            const double pc = static_cast<double>(c) + 0.5;
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int f = 0; f < spec.n_fields; ++f) {
                const double dr = pr - site_r[static_cast<std::size_t>(f)];
                const double dc = pc - site_c[static_cast<std::size_t>(f)];
                const double d = dr * dr + dc * dc;
                if (d < best_d) {
                    best_d = d;
                    best = f;
                }
            }
            out.labels.at(r, c) = best;
        }

    // Boundary: closed 4-neighborhood holds at least two distinct labels.
    BoolImage boundary(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const int self = out.labels.at(r, c);
            const bool is_b =
                (r > 0 && out.labels.at(r - 1, c) != self) ||
                (r + 1 < h && out.labels.at(r + 1, c) != self) ||
                (c > 0 && out.labels.at(r, c - 1) != self) ||
                (c + 1 < w && out.labels.at(r, c + 1) != self);
            boundary.set(r, c, is_b);
        }

    // Two-pass 3-4 chamfer distance to the boundary set; the virtual outside
    // also counts as a source so a single field peaks at its center.
    const double kInf = 1e18;
    std::vector<double> dist(h * w, kInf);
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (boundary.data[i]) dist[i] = 0.0;
    auto d_at = [&](long r, long c) -> double {
        if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w))
            return -3.0;  // outside pixels are sources: one step in costs 3
        return dist[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
    };
    for (long r = 0; r < static_cast<long>(h); ++r)
        for (long c = 0; c < static_cast<long>(w); ++c) {
            double& d = dist[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
            d = std::min(d, d_at(r - 1, c) + 3.0);
            d = std::min(d, d_at(r, c - 1) + 3.0);
            d = std::min(d, d_at(r - 1, c - 1) + 4.0);
            d = std::min(d, d_at(r - 1, c + 1) + 4.0);
        }
    for (long r = static_cast<long>(h) - 1; r >= 0; --r)
        for (long c = static_cast<long>(w) - 1; c >= 0; --c) {
            double& d = dist[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
            d = std::min(d, d_at(r + 1, c) + 3.0);
            d = std::min(d, d_at(r, c + 1) + 3.0);
            d = std::min(d, d_at(r + 1, c + 1) + 4.0);
            d = std::min(d, d_at(r + 1, c - 1) + 4.0);
        }

    std::vector<double> cell_max(static_cast<std::size_t>(spec.n_fields), 0.0);
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const auto f = static_cast<std::size_t>(out.labels.data[i]);
        cell_max[f] = std::max(cell_max[f], dist[i]);
    }

    out.gt.extent = DenseTensor(Shape{h, w});
    out.gt.boundary = DenseTensor(Shape{h, w});
    out.gt.distance = DenseTensor(Shape{h, w});
    for (std::size_t i = 0; i < dist.size(); ++i) {
        out.gt.boundary[i] = boundary.data[i] ? 1.0 : 0.0;
        out.gt.extent[i] = boundary.data[i] ? 0.0 : 1.0;
        const auto f = static_cast<std::size_t>(out.labels.data[i]);
        out.gt.distance[i] = cell_max[f] > 0.0 ? dist[i] / cell_max[f] : 0.0;
    }
    return out;
}

namespace {

struct CloudBlob {
    double r, c;    // position at t=0
    double vr, vc;  // per-step velocity
    double sigma;
};

} // namespace

TimeSeries gen_timeseries(const SceneSpec& spec, const FieldScene& scene) {
    spec.validate();
    const std::size_t h = spec.height, w = spec.width;
    const auto t_count = static_cast<std::size_t>(spec.times);
    const auto n_fields = static_cast<std::size_t>(spec.n_fields);

    TimeSeries out;
    out.optical = DenseTensor(Shape{4, t_count, h, w});
    out.sar = DenseTensor(Shape{5, t_count, h, w});
    out.cloud_masks.assign(t_count, BoolImage(h, w));

    // ---- optical stream (own RNG stream) ----
    Rng rng_opt(mix_seed(spec.seed, "optics"));
    std::vector<double> base(n_fields * 4), phase(n_fields), amp(n_fields);
    for (std::size_t f = 0; f < n_fields; ++f) {
        for (std::size_t ch = 0; ch < 4; ++ch) base[f * 4 + ch] = rng_opt.uniform(0.15, 0.8);
        phase[f] = rng_opt.uniform(0.0, 2.0 * M_PI);
        amp[f] = rng_opt.uniform(0.04, 0.1);
    }
    const std::size_t plane = h * w;
    for (std::size_t ch = 0; ch < 4; ++ch)
        for (std::size_t t = 0; t < t_count; ++t) {
            double* dst = out.optical.data() + (ch * t_count + t) * plane;
            const double tt = static_cast<double>(t) / static_cast<double>(spec.times);
            for (std::size_t i = 0; i < plane; ++i) {
                const auto f = static_cast<std::size_t>(scene.labels.data[i]);
                double v = base[f * 4 + ch] + amp[f] * std::sin(2.0 * M_PI * tt + phase[f]);
                if (scene.gt.boundary[i] > 0.5) v *= 0.35;  // dark inter-field ridges
                v += rng_opt.normal(0.0, 0.02);
                dst[i] = std::clamp(v, 0.0, 1.0);
            }
        }

    // ---- SAR stream (own RNG stream; never sees cloud parameters) ----
    Rng rng_sar(mix_seed(spec.seed, "sar"));
    std::vector<double> alpha_f(n_fields), aniso_f(n_fields), entropy_f(n_fields),
        vh_f(n_fields), vv_f(n_fields);
    for (std::size_t f = 0; f < n_fields; ++f) {
        alpha_f[f] = rng_sar.uniform(5.0, 85.0);
        aniso_f[f] = rng_sar.uniform(0.1, 0.9);
        entropy_f[f] = rng_sar.uniform(0.1, 0.9);
        vh_f[f] = rng_sar.uniform(0.02, 0.2);
        vv_f[f] = rng_sar.uniform(0.1, 0.5);
    }
    const double looks = static_cast<double>(spec.speckle_looks);
    for (std::size_t t = 0; t < t_count; ++t) {
        double* b_alpha = out.sar.data() + (0 * t_count + t) * plane;
        double* b_aniso = out.sar.data() + (1 * t_count + t) * plane;
        double* b_entro = out.sar.data() + (2 * t_count + t) * plane;
        double* b_vh = out.sar.data() + (3 * t_count + t) * plane;
        double* b_vv = out.sar.data() + (4 * t_count + t) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const auto f = static_cast<std::size_t>(scene.labels.data[i]);
            const bool ridge = scene.gt.boundary[i] > 0.5;
            b_alpha[i] = std::clamp(alpha_f[f] + rng_sar.normal(0.0, 1.0), 0.0, 90.0);
            b_aniso[i] = std::clamp(aniso_f[f] + rng_sar.normal(0.0, 0.02), 0.0, 1.0);
            b_entro[i] = std::clamp(entropy_f[f] + rng_sar.normal(0.0, 0.02), 0.0, 1.0);
            const double ridge_gain = ridge ? 0.4 : 1.0;
            b_vh[i] = vh_f[f] * ridge_gain * rng_sar.gamma_int(spec.speckle_looks) / looks;
            b_vv[i] = vv_f[f] * ridge_gain * rng_sar.gamma_int(spec.speckle_looks) / looks;
        }
    }

    // ---- clouds (own RNG stream) ----
    if (spec.cloud_fraction > 0.0) {
        Rng rng_cloud(mix_seed(spec.seed, "clouds"));
        const int n_blobs =
            std::max(8, static_cast<int>(std::lround(spec.cloud_fraction * 30.0)));
        // one wind direction per scene: the whole field sweeps, so no spot
        // stays occluded across a long series
        const double wind = rng_cloud.uniform(0.0, 2.0 * M_PI);
        std::vector<CloudBlob> blobs;
        for (int k = 0; k < n_blobs; ++k) {
            CloudBlob b;
            b.r = rng_cloud.uniform(0.0, static_cast<double>(h));
            b.c = rng_cloud.uniform(0.0, static_cast<double>(w));
            const double speed = spec.cloud_speed_px * rng_cloud.uniform(0.9, 1.1);
            b.vr = speed * std::sin(wind);
            b.vc = speed * std::cos(wind);
            b.sigma = rng_cloud.uniform(static_cast<double>(h) / 12.0,
                                        static_cast<double>(h) / 7.0);
            blobs.push_back(b);
        }
        std::vector<double> field(plane);
        std::vector<double> sorted(plane);
        for (std::size_t t = 0; t < t_count; ++t) {
            const double td = static_cast<double>(t);
            std::fill(field.begin(), field.end(), 0.0);
            for (const CloudBlob& b : blobs) {
                // torus wrap keeps per-frame coverage stable while blobs move
                double br = std::fmod(b.r + b.vr * td, static_cast<double>(h));
                double bc = std::fmod(b.c + b.vc * td, static_cast<double>(w));
                if (br < 0.0) br += static_cast<double>(h);
                if (bc < 0.0) bc += static_cast<double>(w);
                const double inv2s2 = 1.0 / (2.0 * b.sigma * b.sigma);
                for (std::size_t r = 0; r < h; ++r)
                    for (std::size_t c = 0; c < w; ++c) {
                        double dr = std::abs(static_cast<double>(r) + 0.5 - br);
                        double dc = std::abs(static_cast<double>(c) + 0.5 - bc);
                        dr = std::min(dr, static_cast<double>(h) - dr);
                        dc = std::min(dc, static_cast<double>(w) - dc);
                        field[r * w + c] += std::exp(-(dr * dr + dc * dc) * inv2s2);
                    }
            }
            sorted = field;
            const auto k = static_cast<std::size_t>(
                std::floor((1.0 - spec.cloud_fraction) * static_cast<double>(plane)));
            const std::size_t kth = std::min(k, plane - 1);
            std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(kth),
                             sorted.end());
            const double threshold = sorted[kth];
            BoolImage& mask = out.cloud_masks[t];
            for (std::size_t i = 0; i < plane; ++i) mask.data[i] = field[i] > threshold;
            // bright noise replaces occluded optical pixels
            for (std::size_t i = 0; i < plane; ++i) {
                if (!mask.data[i]) continue;
                for (std::size_t ch = 0; ch < 4; ++ch) {
                    double v = 0.75 + rng_cloud.normal(0.0, 0.08);
                    out.optical.data()[(ch * t_count + t) * plane + i] =
                        std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    return out;
}

} // namespace fieldseg::synth
