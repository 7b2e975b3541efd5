#include "fieldseg/pta3d.hpp"

#include <cmath>
#include <vector>

#include "fieldseg/errors.hpp"

namespace fieldseg::pta3d {

namespace {

struct PatchedPair {
    DenseTensor qp, kp;          // rank-7 partitions
    std::size_t nq, nk, d;       // patch counts and content size
    std::size_t tq, tk;          // time extents
    std::size_t grid_hw;         // h*w of the patch grid
};

void check_qk(const DenseTensor& q, const DenseTensor& k) {
    const Shape& sq = q.shape();
    const Shape& sk = k.shape();
    if (sq.size() != 4 || sk.size() != 4)
        throw DimensionError("attention inputs must be rank-4 C,T,H,W");
    if (sq[0] != sk[0] || sq[2] != sk[2] || sq[3] != sk[3])
        throw DimensionError("query/key must agree in C,H,W: " + shape_to_string(sq) +
                             " vs " + shape_to_string(sk));
}

PatchedPair partition_pair(const DenseTensor& q, const DenseTensor& k, const PatchSpec& p) {
    check_qk(q, k);
    PatchedPair pp{patch_partition(q, p), patch_partition(k, p), 0, 0, 0, 0, 0, 0};
    const Shape& s7 = pp.qp.shape();
    pp.d = s7[4] * s7[5] * s7[6];
    pp.tq = q.extent(1);
    pp.tk = k.extent(1);
    pp.nq = p.c * pp.tq * p.h * p.w;
    pp.nk = p.c * pp.tk * p.h * p.w;
    pp.grid_hw = p.h * p.w;
    return pp;
}

std::vector<double> row_norms(const DenseTensor& patched, std::size_t rows, std::size_t d) {
    std::vector<double> out(rows, 0.0);
    const double* p = patched.data();
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        const double* row = p + i * d;
        for (std::size_t j = 0; j < d; ++j) acc += row[j] * row[j];
        out[i] = acc;
    }
    return out;
}

// Q [nq x d] times K^T [d x nk] with K stored row-major [nk x d].
void mat_mul_bt(const double* qrows, std::size_t nq, std::size_t d,
                const double* krows, std::size_t nk, double* out) {
    for (std::size_t i = 0; i < nq; ++i) {
        const double* qi = qrows + i * d;
        double* orow = out + i * nk;
        for (std::size_t j = 0; j < nk; ++j) {
            const double* kj = krows + j * d;
            double acc = 0.0;
            for (std::size_t x = 0; x < d; ++x) acc += qi[x] * kj[x];
            orow[j] = acc;
        }
    }
}

inline double tanimoto_from_parts(double qk, double qq, double kk) {
    if (qq < kZeroBranchEps && kk < kZeroBranchEps) return 0.0;
    return qk / (qq + kk - qk);
}

// Query time index of flat patch index i in the (c,T,h,w) grid.
inline std::size_t time_of(std::size_t i, std::size_t t_extent, std::size_t grid_hw) {
    return (i / grid_hw) % t_extent;
}

void check_weight(const AttentionConfig& cfg, std::size_t c, std::size_t tq,
                  std::size_t h, std::size_t w) {
    if (cfg.mode == ContractionMode::mean) {
        if (cfg.weight.has_value())
            throw ConfigError("mean contraction mode requires no weight tensor");
        return;
    }
    if (!cfg.weight.has_value())
        throw ConfigError("learned_weight contraction mode requires a weight tensor");
    const Shape expect{c, tq, h, w};
    if (cfg.weight->shape() != expect)
        throw ConfigError("contraction weight shape " + shape_to_string(cfg.weight->shape()) +
                          " does not match query patch grid " + shape_to_string(expect));
}

} // namespace

double tanimoto(std::span<const double> q, std::span<const double> k) {
    if (q.size() != k.size())
        throw DimensionError("tanimoto length mismatch: " + std::to_string(q.size()) +
                             " vs " + std::to_string(k.size()));
    double qk = 0.0, qq = 0.0, kk = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        qk += q[i] * k[i];
        qq += q[i] * q[i];
        kk += k[i] * k[i];
    }
    return tanimoto_from_parts(qk, qq, kk);
}

DenseTensor similarity_8d(const DenseTensor& q, const DenseTensor& k,
                          const AttentionConfig& cfg) {
    const PatchSpec& p = cfg.patch;
    PatchedPair pp = partition_pair(q, k, p);
    std::vector<double> qq = row_norms(pp.qp, pp.nq, pp.d);
    std::vector<double> kk = row_norms(pp.kp, pp.nk, pp.d);

    DenseTensor s8(Shape{p.c, pp.tq, p.h, p.w, p.c, pp.tk, p.h, p.w});
    double* out = s8.data();
    const double* qrows = pp.qp.data();
    const double* krows = pp.kp.data();
    for (std::size_t i = 0; i < pp.nq; ++i) {
        const double* qi = qrows + i * pp.d;
        double* orow = out + i * pp.nk;
        for (std::size_t j = 0; j < pp.nk; ++j) {
            const double* kj = krows + j * pp.d;
            double acc = 0.0;
            for (std::size_t x = 0; x < pp.d; ++x) acc += qi[x] * kj[x];
            orow[j] = tanimoto_from_parts(acc, qq[i], kk[j]);
        }
    }
    return s8;
}

DenseTensor contract_similarity(const DenseTensor& s8, const AttentionConfig& cfg) {
    const Shape& s = s8.shape();
    if (s.size() != 8) throw DimensionError("contract_similarity expects a rank-8 map");
    check_weight(cfg, s[0], s[1], s[2], s[3]);

    const std::size_t nq = s[0] * s[1] * s[2] * s[3];
    const std::size_t nk = s[4] * s[5] * s[6] * s[7];
    DenseTensor s4(Shape{s[4], s[5], s[6], s[7]});
    const double* src = s8.data();
    double* dst = s4.data();
    if (cfg.mode == ContractionMode::mean) {
        const double inv = 1.0 / static_cast<double>(nq);
        for (std::size_t i = 0; i < nq; ++i) {
            const double* row = src + i * nk;
            for (std::size_t j = 0; j < nk; ++j) dst[j] += row[j];
        }
        for (std::size_t j = 0; j < nk; ++j) dst[j] *= inv;
    } else {
        const double* w = cfg.weight->data();
        for (std::size_t i = 0; i < nq; ++i) {
            const double wi = w[i];
            const double* row = src + i * nk;
            for (std::size_t j = 0; j < nk; ++j) dst[j] += wi * row[j];
        }
    }
    return s4;
}

DenseTensor apply_causal_mask(const DenseTensor& s8) {
    const Shape& s = s8.shape();
    if (s.size() != 8) throw DimensionError("apply_causal_mask expects a rank-8 map");
    const std::size_t tq = s[1], tk = s[5];
    const std::size_t nq = s[0] * s[1] * s[2] * s[3];
    const std::size_t nk = s[4] * s[5] * s[6] * s[7];
    const std::size_t grid_q = s[2] * s[3];
    const std::size_t grid_k = s[6] * s[7];
    DenseTensor out = s8;
    double* dst = out.data();
    for (std::size_t i = 0; i < nq; ++i) {
        const std::size_t f = time_of(i, tq, grid_q);
        double* row = dst + i * nk;
        for (std::size_t j = 0; j < nk; ++j) {
            if (f > time_of(j, tk, grid_k)) row[j] = 0.0;
        }
    }
    return out;
}

DenseTensor attention(const DenseTensor& q, const DenseTensor& k, const DenseTensor& v,
                      const AttentionConfig& cfg) {
    if (!k.same_shape(v))
        throw DimensionError("key/value shapes differ: " + shape_to_string(k.shape()) +
                             " vs " + shape_to_string(v.shape()));
    const PatchSpec& p = cfg.patch;
    PatchedPair pp = partition_pair(q, k, p);
    check_weight(cfg, p.c, pp.tq, p.h, p.w);

    std::vector<double> qq = row_norms(pp.qp, pp.nq, pp.d);
    std::vector<double> kk = row_norms(pp.kp, pp.nk, pp.d);

    // The similarity matrix is the single largest intermediate: its element
    // count is (c*T_q*h*w)*(c*T_k*h*w), a function of the patch grid only.
    DenseTensor sim(Shape{pp.nq, pp.nk});
    mat_mul_bt(pp.qp.data(), pp.nq, pp.d, pp.kp.data(), pp.nk, sim.data());
    double* sm = sim.data();
    for (std::size_t i = 0; i < pp.nq; ++i) {
        double* row = sm + i * pp.nk;
        for (std::size_t j = 0; j < pp.nk; ++j)
            row[j] = tanimoto_from_parts(row[j], qq[i], kk[j]);
    }
    if (cfg.causal) {
        for (std::size_t i = 0; i < pp.nq; ++i) {
            const std::size_t f = time_of(i, pp.tq, pp.grid_hw);
            double* row = sm + i * pp.nk;
            for (std::size_t j = 0; j < pp.nk; ++j)
                if (f > time_of(j, pp.tk, pp.grid_hw)) row[j] = 0.0;
        }
    }

    std::vector<double> s4(pp.nk, 0.0);
    if (cfg.mode == ContractionMode::mean) {
        const double inv = 1.0 / static_cast<double>(pp.nq);
        for (std::size_t i = 0; i < pp.nq; ++i) {
            const double* row = sm + i * pp.nk;
            for (std::size_t j = 0; j < pp.nk; ++j) s4[j] += row[j];
        }
        for (std::size_t j = 0; j < pp.nk; ++j) s4[j] *= inv;
    } else {
        const double* w = cfg.weight->data();
        for (std::size_t i = 0; i < pp.nq; ++i) {
            const double* row = sm + i * pp.nk;
            for (std::size_t j = 0; j < pp.nk; ++j) s4[j] += w[i] * row[j];
        }
    }

    DenseTensor vp = patch_partition(v, p);
    double* vd = vp.data();
    for (std::size_t j = 0; j < pp.nk; ++j) {
        const double sj = s4[j];
        double* row = vd + j * pp.d;
        for (std::size_t x = 0; x < pp.d; ++x) row[x] *= sj;
    }
    return patch_merge(vp, p);
}

AttentionGrads attention_grad(const DenseTensor& q, const DenseTensor& k,
                              const DenseTensor& v, const AttentionConfig& cfg,
                              const DenseTensor& upstream) {
    if (!k.same_shape(v))
        throw DimensionError("key/value shapes differ");
    if (!upstream.same_shape(v))
        throw DimensionError("upstream shape must equal the attention output shape");
    const PatchSpec& p = cfg.patch;
    PatchedPair pp = partition_pair(q, k, p);
    check_weight(cfg, p.c, pp.tq, p.h, p.w);

    std::vector<double> qq = row_norms(pp.qp, pp.nq, pp.d);
    std::vector<double> kk = row_norms(pp.kp, pp.nk, pp.d);

    // Forward similarity (masked), kept for the contraction and weight grads.
    DenseTensor sim(Shape{pp.nq, pp.nk});
    mat_mul_bt(pp.qp.data(), pp.nq, pp.d, pp.kp.data(), pp.nk, sim.data());
    DenseTensor raw_qk = sim;  // inner products, needed for the tanimoto partials
    double* sm = sim.data();
    const double* nq_data = raw_qk.data();
    for (std::size_t i = 0; i < pp.nq; ++i) {
        double* row = sm + i * pp.nk;
        for (std::size_t j = 0; j < pp.nk; ++j)
            row[j] = tanimoto_from_parts(row[j], qq[i], kk[j]);
    }
    std::vector<char> masked(pp.nq * pp.nk, 0);
    if (cfg.causal) {
        for (std::size_t i = 0; i < pp.nq; ++i) {
            const std::size_t f = time_of(i, pp.tq, pp.grid_hw);
            for (std::size_t j = 0; j < pp.nk; ++j)
                if (f > time_of(j, pp.tk, pp.grid_hw)) {
                    sm[i * pp.nk + j] = 0.0;
                    masked[i * pp.nk + j] = 1;
                }
        }
    }

    std::vector<double> s4(pp.nk, 0.0);
    const double inv_nq = 1.0 / static_cast<double>(pp.nq);
    const double* wq = cfg.mode == ContractionMode::learned_weight ? cfg.weight->data() : nullptr;
    for (std::size_t i = 0; i < pp.nq; ++i) {
        const double wi = wq ? wq[i] : inv_nq;
        const double* row = sm + i * pp.nk;
        for (std::size_t j = 0; j < pp.nk; ++j) s4[j] += wi * row[j];
    }

    DenseTensor up = patch_partition(upstream, p);
    DenseTensor vp = patch_partition(v, p);
    const double* ud = up.data();
    const double* vd = vp.data();

    // dv rows and the contracted-similarity gradient.
    DenseTensor dvp(vp.shape());
    double* dvd = dvp.data();
    std::vector<double> ds4(pp.nk, 0.0);
    for (std::size_t j = 0; j < pp.nk; ++j) {
        const double* urow = ud + j * pp.d;
        const double* vrow = vd + j * pp.d;
        double* drow = dvd + j * pp.d;
        double acc = 0.0;
        for (std::size_t x = 0; x < pp.d; ++x) {
            acc += urow[x] * vrow[x];
            drow[x] = s4[j] * urow[x];
        }
        ds4[j] = acc;
    }

    // Gradient through the contraction and the tanimoto transform.
    DenseTensor gn(Shape{pp.nq, pp.nk});  // d/d<qk>
    double* gnd = gn.data();
    std::vector<double> ga(pp.nq, 0.0);   // accumulated d/d<qq> per query row
    std::vector<double> gb(pp.nk, 0.0);   // accumulated d/d<kk> per key column
    std::optional<DenseTensor> dweight;
    double* dw = nullptr;
    if (cfg.mode == ContractionMode::learned_weight) {
        dweight.emplace(Shape{p.c, pp.tq, p.h, p.w});
        dw = dweight->data();
    }
    for (std::size_t i = 0; i < pp.nq; ++i) {
        const double wi = wq ? wq[i] : inv_nq;
        const double a = qq[i];
        double* grow = gnd + i * pp.nk;
        const double* nrow = nq_data + i * pp.nk;
        const double* srow = sm + i * pp.nk;
        for (std::size_t j = 0; j < pp.nk; ++j) {
            if (dw) dw[i] += srow[j] * ds4[j];
            if (masked.size() && masked[i * pp.nk + j]) {
                grow[j] = 0.0;
                continue;
            }
            const double b = kk[j];
            if (a < kZeroBranchEps && b < kZeroBranchEps) {
                grow[j] = 0.0;  // subgradient 0 at the zero branch
                continue;
            }
            const double ds = wi * ds4[j];
            const double n = nrow[j];
            const double denom = a + b - n;
            const double inv2 = 1.0 / (denom * denom);
            grow[j] = ds * (a + b) * inv2;
            const double dnorm = -ds * n * inv2;
            ga[i] += dnorm;
            gb[j] += dnorm;
        }
    }

    // dq rows = Gn * K + 2 ga_i * q_i ; dk rows = Gn^T * Q + 2 gb_j * k_j.
    DenseTensor dqp(pp.qp.shape());
    mat_mul(gnd, pp.nq, pp.nk, pp.kp.data(), pp.d, dqp.data());
    double* dqd = dqp.data();
    const double* qd = pp.qp.data();
    for (std::size_t i = 0; i < pp.nq; ++i) {
        const double g2 = 2.0 * ga[i];
        double* row = dqd + i * pp.d;
        const double* qrow = qd + i * pp.d;
        for (std::size_t x = 0; x < pp.d; ++x) row[x] += g2 * qrow[x];
    }

    DenseTensor dkp(pp.kp.shape());
    double* dkd = dkp.data();
    const double* kd = pp.kp.data();
    for (std::size_t i = 0; i < pp.nq; ++i) {
        const double* grow = gnd + i * pp.nk;
        const double* qrow = qd + i * pp.d;
        for (std::size_t j = 0; j < pp.nk; ++j) {
            const double g = grow[j];
            if (g == 0.0) continue;
            double* krow = dkd + j * pp.d;
            for (std::size_t x = 0; x < pp.d; ++x) krow[x] += g * qrow[x];
        }
    }
    for (std::size_t j = 0; j < pp.nk; ++j) {
        const double g2 = 2.0 * gb[j];
        double* row = dkd + j * pp.d;
        const double* krow = kd + j * pp.d;
        for (std::size_t x = 0; x < pp.d; ++x) row[x] += g2 * krow[x];
    }

    AttentionGrads out{patch_merge(dqp, p), patch_merge(dkp, p), patch_merge(dvp, p),
                       std::move(dweight)};
    return out;
}

} // namespace fieldseg::pta3d
