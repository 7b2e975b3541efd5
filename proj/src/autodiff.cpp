#include "fieldseg/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include "fieldseg/errors.hpp"
#include "fieldseg/loss_metrics.hpp"

namespace fieldseg::ag {

namespace {

void add_into(DenseTensor& dst, const DenseTensor& src) {
    double* d = dst.data();
    const double* s = src.data();
    const std::size_t n = dst.size();
    for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

Var make_node(DenseTensor value, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const Var& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->backprop = std::move(backprop);
    } else {
        // Inference-only node: dropping the parent links lets intermediate
        // values free as soon as the last local handle goes away.
        n->parents.clear();
    }
    return n;
}

struct ConvDims {
    std::size_t C, T, H, W;
};

ConvDims dims4(const DenseTensor& x, const char* who) {
    if (x.rank() != 4) throw DimensionError(std::string(who) + " expects rank-4 input");
    return {x.extent(0), x.extent(1), x.extent(2), x.extent(3)};
}

inline std::size_t clamp_idx(long v, std::size_t n) {
    if (v < 0) return 0;
    if (v >= static_cast<long>(n)) return n - 1;
    return static_cast<std::size_t>(v);
}

} // namespace

void Node::accumulate(const DenseTensor& g) {
    if (!grad_ready) {
        grad = g;
        grad_ready = true;
    } else {
        add_into(grad, g);
    }
}

Var leaf(DenseTensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var add(const Var& a, const Var& b) {
    return make_node(fieldseg::add(a->value, b->value), {a, b}, [](Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    return make_node(fieldseg::sub(a->value, b->value), {a, b}, [](Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad)
            self.parents[1]->accumulate(fieldseg::scale(self.grad, -1.0));
    });
}

Var mul(const Var& a, const Var& b) {
    return make_node(fieldseg::mul(a->value, b->value), {a, b}, [](Node& self) {
        if (self.parents[0]->requires_grad)
            self.parents[0]->accumulate(fieldseg::mul(self.grad, self.parents[1]->value));
        if (self.parents[1]->requires_grad)
            self.parents[1]->accumulate(fieldseg::mul(self.grad, self.parents[0]->value));
    });
}

Var scale(const Var& a, double s) {
    return make_node(fieldseg::scale(a->value, s), {a}, [s](Node& self) {
        self.parents[0]->accumulate(fieldseg::scale(self.grad, s));
    });
}

Var gelu(const Var& a) {
    DenseTensor out(a->value.shape());
    const double* x = a->value.data();
    double* y = out.data();
    const std::size_t n = out.size();
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (std::size_t i = 0; i < n; ++i)
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * inv_sqrt2));
    return make_node(std::move(out), {a}, [](Node& self) {
        const DenseTensor& xv = self.parents[0]->value;
        DenseTensor gx(xv.shape());
        const double* x = xv.data();
        const double* g = self.grad.data();
        double* o = gx.data();
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double phi = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x[i] * x[i]);
            o[i] = g[i] * (phi + x[i] * pdf);
        }
        self.parents[0]->accumulate(gx);
    });
}

Var sigmoid(const Var& a) {
    DenseTensor out(a->value.shape());
    const double* x = a->value.data();
    double* y = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    return make_node(std::move(out), {a}, [](Node& self) {
        DenseTensor gx(self.value.shape());
        const double* s = self.value.data();
        const double* g = self.grad.data();
        double* o = gx.data();
        for (std::size_t i = 0; i < gx.size(); ++i) o[i] = g[i] * s[i] * (1.0 - s[i]);
        self.parents[0]->accumulate(gx);
    });
}

Var tanh_op(const Var& a) {
    DenseTensor out(a->value.shape());
    const double* x = a->value.data();
    double* y = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) y[i] = std::tanh(x[i]);
    return make_node(std::move(out), {a}, [](Node& self) {
        DenseTensor gx(self.value.shape());
        const double* s = self.value.data();
        const double* g = self.grad.data();
        double* o = gx.data();
        for (std::size_t i = 0; i < gx.size(); ++i) o[i] = g[i] * (1.0 - s[i] * s[i]);
        self.parents[0]->accumulate(gx);
    });
}

// ---- convolutions ----

Var conv3d_same(const Var& x, const Var& w, const Var& b) {
    const ConvDims d = dims4(x->value, "conv3d_same");
    const Shape& ws = w->value.shape();
    if (ws.size() != 5) throw DimensionError("conv3d_same weight must be rank-5");
    const std::size_t co = ws[0], ci = ws[1], kt = ws[2], kh = ws[3], kw = ws[4];
    if (ci != d.C) throw DimensionError("conv3d_same input channel mismatch");
    if (kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0)
        throw DimensionError("conv3d_same kernel extents must be odd");
    DenseTensor out(Shape{co, d.T, d.H, d.W});
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    const double* bd = b->value.data();
    double* od = out.data();
    const long rt = static_cast<long>(kt / 2), rh = static_cast<long>(kh / 2),
               rw = static_cast<long>(kw / 2);
    const std::size_t plane = d.H * d.W;
    for (std::size_t oc = 0; oc < co; ++oc) {
        for (std::size_t t = 0; t < d.T; ++t)
            for (std::size_t r = 0; r < d.H; ++r)
                for (std::size_t cidx = 0; cidx < d.W; ++cidx) {
                    double acc = bd[oc];
                    for (std::size_t ic = 0; ic < ci; ++ic) {
                        const double* xc = xd + ic * d.T * plane;
                        const double* wc = wd + ((oc * ci + ic) * kt) * kh * kw;
                        for (std::size_t dt = 0; dt < kt; ++dt) {
                            const std::size_t ts =
                                clamp_idx(static_cast<long>(t) + static_cast<long>(dt) - rt, d.T);
                            for (std::size_t dr = 0; dr < kh; ++dr) {
                                const std::size_t rs = clamp_idx(
                                    static_cast<long>(r) + static_cast<long>(dr) - rh, d.H);
                                const double* xrow = xc + (ts * d.H + rs) * d.W;
                                const double* wrow = wc + (dt * kh + dr) * kw;
                                for (std::size_t dc = 0; dc < kw; ++dc) {
                                    const std::size_t cs = clamp_idx(
                                        static_cast<long>(cidx) + static_cast<long>(dc) - rw,
                                        d.W);
                                    acc += wrow[dc] * xrow[cs];
                                }
                            }
                        }
                    }
                    od[((oc * d.T + t) * d.H + r) * d.W + cidx] = acc;
                }
    }
    return make_node(std::move(out), {x, w, b}, [d, co, ci, kt, kh, kw, rt, rh, rw,
                                                 plane](Node& self) {
        const Var& x = self.parents[0];
        const Var& w = self.parents[1];
        const Var& b = self.parents[2];
        DenseTensor gx(x->value.shape());
        DenseTensor gw(w->value.shape());
        DenseTensor gb(b->value.shape());
        const double* g = self.grad.data();
        const double* xd = x->value.data();
        const double* wd = w->value.data();
        double* gxd = gx.data();
        double* gwd = gw.data();
        double* gbd = gb.data();
        for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t t = 0; t < d.T; ++t)
                for (std::size_t r = 0; r < d.H; ++r)
                    for (std::size_t cidx = 0; cidx < d.W; ++cidx) {
                        const double gv = g[((oc * d.T + t) * d.H + r) * d.W + cidx];
                        if (gv == 0.0) continue;
                        gbd[oc] += gv;
                        for (std::size_t ic = 0; ic < ci; ++ic) {
                            const double* xc = xd + ic * d.T * plane;
                            double* gxc = gxd + ic * d.T * plane;
                            const double* wc = wd + ((oc * ci + ic) * kt) * kh * kw;
                            double* gwc = gwd + ((oc * ci + ic) * kt) * kh * kw;
                            for (std::size_t dt = 0; dt < kt; ++dt) {
                                const std::size_t ts = clamp_idx(
                                    static_cast<long>(t) + static_cast<long>(dt) - rt, d.T);
                                for (std::size_t dr = 0; dr < kh; ++dr) {
                                    const std::size_t rs = clamp_idx(
                                        static_cast<long>(r) + static_cast<long>(dr) - rh, d.H);
                                    for (std::size_t dc = 0; dc < kw; ++dc) {
                                        const std::size_t cs = clamp_idx(
                                            static_cast<long>(cidx) + static_cast<long>(dc) - rw,
                                            d.W);
                                        const std::size_t xoff = (ts * d.H + rs) * d.W + cs;
                                        const std::size_t woff = (dt * kh + dr) * kw + dc;
                                        gwc[woff] += gv * xc[xoff];
                                        gxc[xoff] += gv * wc[woff];
                                    }
                                }
                            }
                        }
                    }
        if (x->requires_grad) x->accumulate(gx);
        if (w->requires_grad) w->accumulate(gw);
        if (b->requires_grad) b->accumulate(gb);
    });
}

Var conv3d_down(const Var& x, const Var& w, const Var& b) {
    const ConvDims d = dims4(x->value, "conv3d_down");
    const Shape& ws = w->value.shape();
    if (ws.size() != 5 || ws[2] != 1 || ws[3] != 2 || ws[4] != 2)
        throw DimensionError("conv3d_down weight must be (Co,Ci,1,2,2)");
    if (ws[1] != d.C) throw DimensionError("conv3d_down input channel mismatch");
    if (d.H % 2 != 0 || d.W % 2 != 0)
        throw DimensionError("conv3d_down needs even spatial extents, got " +
                             shape_to_string(x->value.shape()));
    const std::size_t co = ws[0], ci = ws[1];
    const std::size_t oh = d.H / 2, ow = d.W / 2;
    DenseTensor out(Shape{co, d.T, oh, ow});
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    const double* bd = b->value.data();
    double* od = out.data();
    for (std::size_t oc = 0; oc < co; ++oc)
        for (std::size_t t = 0; t < d.T; ++t)
            for (std::size_t r = 0; r < oh; ++r)
                for (std::size_t c = 0; c < ow; ++c) {
                    double acc = bd[oc];
                    for (std::size_t ic = 0; ic < ci; ++ic) {
                        const double* xrow = xd + ((ic * d.T + t) * d.H + 2 * r) * d.W + 2 * c;
                        const double* wq = wd + (oc * ci + ic) * 4;
                        acc += wq[0] * xrow[0] + wq[1] * xrow[1] + wq[2] * xrow[d.W] +
                               wq[3] * xrow[d.W + 1];
                    }
                    od[((oc * d.T + t) * oh + r) * ow + c] = acc;
                }
    return make_node(std::move(out), {x, w, b}, [d, co, ci, oh, ow](Node& self) {
        const Var& x = self.parents[0];
        const Var& w = self.parents[1];
        const Var& b = self.parents[2];
        DenseTensor gx(x->value.shape());
        DenseTensor gw(w->value.shape());
        DenseTensor gb(b->value.shape());
        const double* g = self.grad.data();
        const double* xd = x->value.data();
        const double* wd = w->value.data();
        double* gxd = gx.data();
        double* gwd = gw.data();
        double* gbd = gb.data();
        for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t t = 0; t < d.T; ++t)
                for (std::size_t r = 0; r < oh; ++r)
                    for (std::size_t c = 0; c < ow; ++c) {
                        const double gv = g[((oc * d.T + t) * oh + r) * ow + c];
                        if (gv == 0.0) continue;
                        gbd[oc] += gv;
                        for (std::size_t ic = 0; ic < ci; ++ic) {
                            const std::size_t base = ((ic * d.T + t) * d.H + 2 * r) * d.W + 2 * c;
                            const std::size_t wq = (oc * ci + ic) * 4;
                            gwd[wq + 0] += gv * xd[base];
                            gwd[wq + 1] += gv * xd[base + 1];
                            gwd[wq + 2] += gv * xd[base + d.W];
                            gwd[wq + 3] += gv * xd[base + d.W + 1];
                            gxd[base] += gv * wd[wq + 0];
                            gxd[base + 1] += gv * wd[wq + 1];
                            gxd[base + d.W] += gv * wd[wq + 2];
                            gxd[base + d.W + 1] += gv * wd[wq + 3];
                        }
                    }
        if (x->requires_grad) x->accumulate(gx);
        if (w->requires_grad) w->accumulate(gw);
        if (b->requires_grad) b->accumulate(gb);
    });
}

Var conv1x1(const Var& x, const Var& w, const Var& b) {
    const ConvDims d = dims4(x->value, "conv1x1");
    const Shape& ws = w->value.shape();
    if (ws.size() != 2) throw DimensionError("conv1x1 weight must be rank-2 (Cout,Cin)");
    if (ws[1] != d.C) throw DimensionError("conv1x1 input channel mismatch: weight wants " +
                                           std::to_string(ws[1]) + ", input has " +
                                           std::to_string(d.C));
    const std::size_t co = ws[0], ci = ws[1];
    const std::size_t n = d.T * d.H * d.W;
    DenseTensor out(Shape{co, d.T, d.H, d.W});
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    const double* bd = b->value.data();
    double* od = out.data();
    for (std::size_t oc = 0; oc < co; ++oc) {
        double* orow = od + oc * n;
        const double bias = bd[oc];
        for (std::size_t j = 0; j < n; ++j) orow[j] = bias;
        for (std::size_t ic = 0; ic < ci; ++ic) {
            const double wv = wd[oc * ci + ic];
            if (wv == 0.0) continue;
            const double* xrow = xd + ic * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += wv * xrow[j];
        }
    }
    return make_node(std::move(out), {x, w, b}, [co, ci, n](Node& self) {
        const Var& x = self.parents[0];
        const Var& w = self.parents[1];
        const Var& b = self.parents[2];
        const double* g = self.grad.data();
        const double* xd = x->value.data();
        const double* wd = w->value.data();
        if (x->requires_grad) {
            DenseTensor gx(x->value.shape());
            double* gxd = gx.data();
            for (std::size_t oc = 0; oc < co; ++oc) {
                const double* grow = g + oc * n;
                for (std::size_t ic = 0; ic < ci; ++ic) {
                    const double wv = wd[oc * ci + ic];
                    if (wv == 0.0) continue;
                    double* gxrow = gxd + ic * n;
                    for (std::size_t j = 0; j < n; ++j) gxrow[j] += wv * grow[j];
                }
            }
            x->accumulate(gx);
        }
        if (w->requires_grad) {
            DenseTensor gw(w->value.shape());
            double* gwd = gw.data();
            for (std::size_t oc = 0; oc < co; ++oc) {
                const double* grow = g + oc * n;
                for (std::size_t ic = 0; ic < ci; ++ic) {
                    const double* xrow = xd + ic * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * xrow[j];
                    gwd[oc * ci + ic] = acc;
                }
            }
            w->accumulate(gw);
        }
        if (b->requires_grad) {
            DenseTensor gb(b->value.shape());
            double* gbd = gb.data();
            for (std::size_t oc = 0; oc < co; ++oc) {
                const double* grow = g + oc * n;
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += grow[j];
                gbd[oc] = acc;
            }
            b->accumulate(gb);
        }
    });
}

Var dwconv3d(const Var& x, const Var& w, const Var& b) {
    const ConvDims d = dims4(x->value, "dwconv3d");
    const Shape& ws = w->value.shape();
    if (ws.size() != 4) throw DimensionError("dwconv3d weight must be rank-4 (C,kt,kh,kw)");
    if (ws[0] != d.C) throw DimensionError("dwconv3d channel mismatch");
    const std::size_t kt = ws[1], kh = ws[2], kw = ws[3];
    if (kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0)
        throw DimensionError("dwconv3d kernel extents must be odd");
    const long rt = static_cast<long>(kt / 2), rh = static_cast<long>(kh / 2),
               rw = static_cast<long>(kw / 2);
    DenseTensor out(x->value.shape());
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    const double* bd = b->value.data();
    double* od = out.data();
    const std::size_t plane = d.H * d.W;
    for (std::size_t c = 0; c < d.C; ++c) {
        const double* xc = xd + c * d.T * plane;
        const double* wc = wd + c * kt * kh * kw;
        double* oc = od + c * d.T * plane;
        for (std::size_t t = 0; t < d.T; ++t)
            for (std::size_t r = 0; r < d.H; ++r)
                for (std::size_t cc = 0; cc < d.W; ++cc) {
                    double acc = bd[c];
                    for (std::size_t dt = 0; dt < kt; ++dt) {
                        const std::size_t ts =
                            clamp_idx(static_cast<long>(t) + static_cast<long>(dt) - rt, d.T);
                        for (std::size_t dr = 0; dr < kh; ++dr) {
                            const std::size_t rs = clamp_idx(
                                static_cast<long>(r) + static_cast<long>(dr) - rh, d.H);
                            const double* xrow = xc + (ts * d.H + rs) * d.W;
                            const double* wrow = wc + (dt * kh + dr) * kw;
                            for (std::size_t dc = 0; dc < kw; ++dc) {
                                const std::size_t cs = clamp_idx(
                                    static_cast<long>(cc) + static_cast<long>(dc) - rw, d.W);
                                acc += wrow[dc] * xrow[cs];
                            }
                        }
                    }
                    oc[(t * d.H + r) * d.W + cc] = acc;
                }
    }
    return make_node(std::move(out), {x, w, b}, [d, kt, kh, kw, rt, rh, rw, plane](Node& self) {
        const Var& x = self.parents[0];
        const Var& w = self.parents[1];
        const Var& b = self.parents[2];
        DenseTensor gx(x->value.shape());
        DenseTensor gw(w->value.shape());
        DenseTensor gb(b->value.shape());
        const double* g = self.grad.data();
        const double* xd = x->value.data();
        const double* wd = w->value.data();
        double* gxd = gx.data();
        double* gwd = gw.data();
        double* gbd = gb.data();
        for (std::size_t c = 0; c < d.C; ++c) {
            const double* xc = xd + c * d.T * plane;
            double* gxc = gxd + c * d.T * plane;
            const double* wc = wd + c * kt * kh * kw;
            double* gwc = gwd + c * kt * kh * kw;
            for (std::size_t t = 0; t < d.T; ++t)
                for (std::size_t r = 0; r < d.H; ++r)
                    for (std::size_t cc = 0; cc < d.W; ++cc) {
                        const double gv = g[(c * d.T + t) * plane + r * d.W + cc];
                        if (gv == 0.0) continue;
                        gbd[c] += gv;
                        for (std::size_t dt = 0; dt < kt; ++dt) {
                            const std::size_t ts = clamp_idx(
                                static_cast<long>(t) + static_cast<long>(dt) - rt, d.T);
                            for (std::size_t dr = 0; dr < kh; ++dr) {
                                const std::size_t rs = clamp_idx(
                                    static_cast<long>(r) + static_cast<long>(dr) - rh, d.H);
                                for (std::size_t dc = 0; dc < kw; ++dc) {
                                    const std::size_t cs = clamp_idx(
                                        static_cast<long>(cc) + static_cast<long>(dc) - rw, d.W);
                                    const std::size_t xoff = (ts * d.H + rs) * d.W + cs;
                                    const std::size_t woff = (dt * kh + dr) * kw + dc;
                                    gwc[woff] += gv * xc[xoff];
                                    gxc[xoff] += gv * wc[woff];
                                }
                            }
                        }
                    }
        }
        if (x->requires_grad) x->accumulate(gx);
        if (w->requires_grad) w->accumulate(gw);
        if (b->requires_grad) b->accumulate(gb);
    });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const ConvDims d = dims4(x->value, "instance_norm");
    if (gamma->value.size() != d.C || beta->value.size() != d.C)
        throw DimensionError("instance_norm affine parameter size mismatch");
    const std::size_t m = d.T * d.H * d.W;
    auto xhat = std::make_shared<DenseTensor>(x->value.shape());
    auto inv_std = std::make_shared<std::vector<double>>(d.C, 0.0);
    DenseTensor out(x->value.shape());
    const double* xd = x->value.data();
    const double* gd = gamma->value.data();
    const double* bd = beta->value.data();
    double* hd = xhat->data();
    double* od = out.data();
    for (std::size_t c = 0; c < d.C; ++c) {
        const double* xc = xd + c * m;
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += xc[i];
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double dv = xc[i] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(m);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[c] = is;
        double* hc = hd + c * m;
        double* oc = od + c * m;
        for (std::size_t i = 0; i < m; ++i) {
            hc[i] = (xc[i] - mean) * is;
            oc[i] = gd[c] * hc[i] + bd[c];
        }
    }
    return make_node(std::move(out), {x, gamma, beta}, [d, m, xhat, inv_std](Node& self) {
        const Var& x = self.parents[0];
        const Var& gamma = self.parents[1];
        const Var& beta = self.parents[2];
        const double* g = self.grad.data();
        const double* hd = xhat->data();
        const double* gd = gamma->value.data();
        DenseTensor ggamma(gamma->value.shape());
        DenseTensor gbeta(beta->value.shape());
        DenseTensor gx(x->value.shape());
        double* ggd = ggamma.data();
        double* gbd = gbeta.data();
        double* gxd = gx.data();
        for (std::size_t c = 0; c < d.C; ++c) {
            const double* gc = g + c * m;
            const double* hc = hd + c * m;
            double sum_g = 0.0, sum_gh = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                sum_g += gc[i];
                sum_gh += gc[i] * hc[i];
            }
            ggd[c] = sum_gh;
            gbd[c] = sum_g;
            const double mg = sum_g / static_cast<double>(m);
            const double mgh = sum_gh / static_cast<double>(m);
            const double k = gd[c] * (*inv_std)[c];
            double* gxc = gxd + c * m;
            for (std::size_t i = 0; i < m; ++i)
                gxc[i] = k * (gc[i] - mg - hc[i] * mgh);
        }
        if (x->requires_grad) x->accumulate(gx);
        if (gamma->requires_grad) gamma->accumulate(ggamma);
        if (beta->requires_grad) beta->accumulate(gbeta);
    });
}

Var global_mean_thw(const Var& x) {
    const ConvDims d = dims4(x->value, "global_mean_thw");
    const std::size_t m = d.T * d.H * d.W;
    DenseTensor out(Shape{d.C});
    const double* xd = x->value.data();
    double* od = out.data();
    for (std::size_t c = 0; c < d.C; ++c) {
        double acc = 0.0;
        const double* xc = xd + c * m;
        for (std::size_t i = 0; i < m; ++i) acc += xc[i];
        od[c] = acc / static_cast<double>(m);
    }
    return make_node(std::move(out), {x}, [d, m](Node& self) {
        DenseTensor gx(self.parents[0]->value.shape());
        const double* g = self.grad.data();
        double* gxd = gx.data();
        for (std::size_t c = 0; c < d.C; ++c) {
            const double gv = g[c] / static_cast<double>(m);
            double* gxc = gxd + c * m;
            for (std::size_t i = 0; i < m; ++i) gxc[i] = gv;
        }
        self.parents[0]->accumulate(gx);
    });
}

Var linear(const Var& v, const Var& w, const Var& b) {
    if (v->value.rank() != 1) throw DimensionError("linear expects a rank-1 input");
    const Shape& ws = w->value.shape();
    if (ws.size() != 2 || ws[1] != v->value.size())
        throw DimensionError("linear weight shape mismatch");
    const std::size_t out_n = ws[0], in_n = ws[1];
    DenseTensor out(Shape{out_n});
    const double* vd = v->value.data();
    const double* wd = w->value.data();
    const double* bd = b->value.data();
    double* od = out.data();
    for (std::size_t o = 0; o < out_n; ++o) {
        double acc = bd[o];
        const double* wrow = wd + o * in_n;
        for (std::size_t i = 0; i < in_n; ++i) acc += wrow[i] * vd[i];
        od[o] = acc;
    }
    return make_node(std::move(out), {v, w, b}, [out_n, in_n](Node& self) {
        const Var& v = self.parents[0];
        const Var& w = self.parents[1];
        const Var& b = self.parents[2];
        const double* g = self.grad.data();
        const double* vd = v->value.data();
        const double* wd = w->value.data();
        if (v->requires_grad) {
            DenseTensor gv(v->value.shape());
            double* gvd = gv.data();
            for (std::size_t o = 0; o < out_n; ++o) {
                const double* wrow = wd + o * in_n;
                for (std::size_t i = 0; i < in_n; ++i) gvd[i] += g[o] * wrow[i];
            }
            v->accumulate(gv);
        }
        if (w->requires_grad) {
            DenseTensor gw(w->value.shape());
            double* gwd = gw.data();
            for (std::size_t o = 0; o < out_n; ++o)
                for (std::size_t i = 0; i < in_n; ++i) gwd[o * in_n + i] = g[o] * vd[i];
            w->accumulate(gw);
        }
        if (b->requires_grad) {
            DenseTensor gb(b->value.shape());
            double* gbd = gb.data();
            for (std::size_t o = 0; o < out_n; ++o) gbd[o] = g[o];
            b->accumulate(gb);
        }
    });
}

Var channel_mul(const Var& x, const Var& s) {
    const ConvDims d = dims4(x->value, "channel_mul");
    if (s->value.rank() != 1 || s->value.size() != d.C)
        throw DimensionError("channel_mul scale size mismatch");
    const std::size_t m = d.T * d.H * d.W;
    DenseTensor out(x->value.shape());
    const double* xd = x->value.data();
    const double* sd = s->value.data();
    double* od = out.data();
    for (std::size_t c = 0; c < d.C; ++c) {
        const double sv = sd[c];
        const double* xc = xd + c * m;
        double* oc = od + c * m;
        for (std::size_t i = 0; i < m; ++i) oc[i] = xc[i] * sv;
    }
    return make_node(std::move(out), {x, s}, [d, m](Node& self) {
        const Var& x = self.parents[0];
        const Var& s = self.parents[1];
        const double* g = self.grad.data();
        if (x->requires_grad) {
            DenseTensor gx(x->value.shape());
            double* gxd = gx.data();
            const double* sd = s->value.data();
            for (std::size_t c = 0; c < d.C; ++c) {
                const double sv = sd[c];
                const double* gc = g + c * m;
                double* gxc = gxd + c * m;
                for (std::size_t i = 0; i < m; ++i) gxc[i] = gc[i] * sv;
            }
            x->accumulate(gx);
        }
        if (s->requires_grad) {
            DenseTensor gs(s->value.shape());
            double* gsd = gs.data();
            const double* xd = x->value.data();
            for (std::size_t c = 0; c < d.C; ++c) {
                const double* gc = g + c * m;
                const double* xc = xd + c * m;
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i) acc += gc[i] * xc[i];
                gsd[c] = acc;
            }
            s->accumulate(gs);
        }
    });
}

Var concat_c(const Var& a, const Var& b) {
    const ConvDims da = dims4(a->value, "concat_c");
    const ConvDims db = dims4(b->value, "concat_c");
    if (da.T != db.T || da.H != db.H || da.W != db.W)
        throw DimensionError("concat_c non-channel extents differ");
    DenseTensor out(Shape{da.C + db.C, da.T, da.H, da.W});
    const std::size_t na = a->value.size(), nb = b->value.size();
    std::copy(a->value.data(), a->value.data() + na, out.data());
    std::copy(b->value.data(), b->value.data() + nb, out.data() + na);
    return make_node(std::move(out), {a, b}, [na, nb](Node& self) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        const double* g = self.grad.data();
        if (a->requires_grad) {
            DenseTensor ga(a->value.shape());
            std::copy(g, g + na, ga.data());
            a->accumulate(ga);
        }
        if (b->requires_grad) {
            DenseTensor gb(b->value.shape());
            std::copy(g + na, g + na + nb, gb.data());
            b->accumulate(gb);
        }
    });
}

Var channel_slice(const Var& x, std::size_t c0, std::size_t len) {
    const ConvDims d = dims4(x->value, "channel_slice");
    if (c0 + len > d.C) throw DimensionError("channel_slice out of range");
    const std::size_t m = d.T * d.H * d.W;
    DenseTensor out(Shape{len, d.T, d.H, d.W});
    std::copy(x->value.data() + c0 * m, x->value.data() + (c0 + len) * m, out.data());
    return make_node(std::move(out), {x}, [c0, len, m](Node& self) {
        DenseTensor gx(self.parents[0]->value.shape());
        std::copy(self.grad.data(), self.grad.data() + len * m, gx.data() + c0 * m);
        self.parents[0]->accumulate(gx);
    });
}

Var upsample2_hw(const Var& x) {
    const ConvDims d = dims4(x->value, "upsample2_hw");
    DenseTensor out(Shape{d.C, d.T, d.H * 2, d.W * 2});
    const double* xd = x->value.data();
    double* od = out.data();
    for (std::size_t c = 0; c < d.C; ++c)
        for (std::size_t t = 0; t < d.T; ++t)
            for (std::size_t r = 0; r < d.H; ++r) {
                const double* xrow = xd + ((c * d.T + t) * d.H + r) * d.W;
                double* orow0 = od + ((c * d.T + t) * d.H * 2 + 2 * r) * d.W * 2;
                double* orow1 = orow0 + d.W * 2;
                for (std::size_t cc = 0; cc < d.W; ++cc) {
                    const double v = xrow[cc];
                    orow0[2 * cc] = orow0[2 * cc + 1] = v;
                    orow1[2 * cc] = orow1[2 * cc + 1] = v;
                }
            }
    return make_node(std::move(out), {x}, [d](Node& self) {
        DenseTensor gx(self.parents[0]->value.shape());
        const double* g = self.grad.data();
        double* gxd = gx.data();
        for (std::size_t c = 0; c < d.C; ++c)
            for (std::size_t t = 0; t < d.T; ++t)
                for (std::size_t r = 0; r < d.H; ++r) {
                    double* gxrow = gxd + ((c * d.T + t) * d.H + r) * d.W;
                    const double* grow0 = g + ((c * d.T + t) * d.H * 2 + 2 * r) * d.W * 2;
                    const double* grow1 = grow0 + d.W * 2;
                    for (std::size_t cc = 0; cc < d.W; ++cc)
                        gxrow[cc] = grow0[2 * cc] + grow0[2 * cc + 1] + grow1[2 * cc] +
                                    grow1[2 * cc + 1];
                }
        self.parents[0]->accumulate(gx);
    });
}

Var mean_t(const Var& x) {
    const ConvDims d = dims4(x->value, "mean_t");
    DenseTensor out(Shape{d.C, 1, d.H, d.W});
    const double* xd = x->value.data();
    double* od = out.data();
    const std::size_t plane = d.H * d.W;
    const double inv = 1.0 / static_cast<double>(d.T);
    for (std::size_t c = 0; c < d.C; ++c)
        for (std::size_t t = 0; t < d.T; ++t) {
            const double* xp = xd + (c * d.T + t) * plane;
            double* op = od + c * plane;
            for (std::size_t i = 0; i < plane; ++i) op[i] += xp[i] * inv;
        }
    return make_node(std::move(out), {x}, [d, plane, inv](Node& self) {
        DenseTensor gx(self.parents[0]->value.shape());
        const double* g = self.grad.data();
        double* gxd = gx.data();
        for (std::size_t c = 0; c < d.C; ++c)
            for (std::size_t t = 0; t < d.T; ++t) {
                double* gxp = gxd + (c * d.T + t) * plane;
                const double* gp = g + c * plane;
                for (std::size_t i = 0; i < plane; ++i) gxp[i] = gp[i] * inv;
            }
        self.parents[0]->accumulate(gx);
    });
}

Var time_slice(const Var& x, std::size_t t) {
    const ConvDims d = dims4(x->value, "time_slice");
    if (t >= d.T) throw DimensionError("time_slice index out of range");
    const std::size_t plane = d.H * d.W;
    DenseTensor out(Shape{d.C, 1, d.H, d.W});
    const double* xd = x->value.data();
    double* od = out.data();
    for (std::size_t c = 0; c < d.C; ++c)
        std::copy(xd + (c * d.T + t) * plane, xd + (c * d.T + t + 1) * plane, od + c * plane);
    return make_node(std::move(out), {x}, [d, t, plane](Node& self) {
        DenseTensor gx(self.parents[0]->value.shape());
        const double* g = self.grad.data();
        double* gxd = gx.data();
        for (std::size_t c = 0; c < d.C; ++c)
            std::copy(g + c * plane, g + (c + 1) * plane, gxd + (c * d.T + t) * plane);
        self.parents[0]->accumulate(gx);
    });
}

Var reshape_op(const Var& x, Shape new_shape) {
    DenseTensor out = fieldseg::reshape(x->value, new_shape);
    return make_node(std::move(out), {x}, [](Node& self) {
        self.parents[0]->accumulate(
            fieldseg::reshape(self.grad, self.parents[0]->value.shape()));
    });
}

Var pta_attention(const Var& q, const Var& k, const Var& v,
                  const pta3d::AttentionConfig& cfg) {
    DenseTensor out = pta3d::attention(q->value, k->value, v->value, cfg);
    return make_node(std::move(out), {q, k, v}, [cfg](Node& self) {
        const Var& q = self.parents[0];
        const Var& k = self.parents[1];
        const Var& v = self.parents[2];
        pta3d::AttentionGrads g =
            pta3d::attention_grad(q->value, k->value, v->value, cfg, self.grad);
        if (q->requires_grad) q->accumulate(g.dq);
        if (k->requires_grad) k->accumulate(g.dk);
        if (v->requires_grad) v->accumulate(g.dv);
    });
}

Var tanimoto_loss_op(const Var& p, DenseTensor label) {
    const double loss = metrics::tanimoto_loss(p->value, label);
    DenseTensor out(Shape{1});
    out[0] = loss;
    auto lbl = std::make_shared<DenseTensor>(std::move(label));
    return make_node(std::move(out), {p}, [lbl](Node& self) {
        const double up = self.grad[0];
        DenseTensor g = metrics::tanimoto_loss_grad(self.parents[0]->value, *lbl);
        if (up != 1.0) g = fieldseg::scale(g, up);
        self.parents[0]->accumulate(g);
    });
}

void backward(const Var& root) {
    // Reverse topological order: every node is processed before its parents.
    std::vector<Node*> order;
    std::vector<std::pair<Var, std::size_t>> stack;
    std::unordered_set<Node*> visited;
    stack.emplace_back(root, 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Var parent = node->parents[idx++];
            if (parent->requires_grad && !visited.count(parent.get())) {
                visited.insert(parent.get());
                stack.emplace_back(std::move(parent), 0);
            }
        } else {
            order.push_back(node.get());
            stack.pop_back();
        }
    }

    root->accumulate(DenseTensor::full(root->value.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->requires_grad || !n->grad_ready) continue;
        if (n->backprop) n->backprop(*n);
        if (!n->is_leaf()) {
            // Buffers are dead once the node has pushed its gradient.
            n->value = DenseTensor();
            n->grad = DenseTensor();
            n->grad_ready = false;
        }
    }
}

} // namespace fieldseg::ag
