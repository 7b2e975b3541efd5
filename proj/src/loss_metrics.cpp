#include "fieldseg/loss_metrics.hpp"

#include <cmath>

#include "fieldseg/errors.hpp"

namespace fieldseg::metrics {

namespace {

constexpr double kZeroEps = 1e-30;

void check_unit_range(const DenseTensor& x, const char* who) {
    for (double v : x.storage())
        if (!(v >= -1e-12 && v <= 1.0 + 1e-12))
            throw RangeError(std::string(who) + ": value " + std::to_string(v) +
                             " outside [0,1]");
}

struct TanimotoParts {
    double n = 0.0, a = 0.0, b = 0.0;
    bool zero = false;
    double value() const { return zero ? 0.0 : n / (a + b - n); }
};

TanimotoParts tanimoto_parts(const double* p, const double* l, std::size_t size,
                             bool complement) {
    TanimotoParts t;
    double cn = 0.0, ca = 0.0, cb = 0.0;  // Kahan compensations
    for (std::size_t i = 0; i < size; ++i) {
        const double pv = complement ? 1.0 - p[i] : p[i];
        const double lv = complement ? 1.0 - l[i] : l[i];
        double y = pv * lv - cn;
        double s = t.n + y;
        cn = (s - t.n) - y;
        t.n = s;
        y = pv * pv - ca;
        s = t.a + y;
        ca = (s - t.a) - y;
        t.a = s;
        y = lv * lv - cb;
        s = t.b + y;
        cb = (s - t.b) - y;
        t.b = s;
    }
    t.zero = t.a < kZeroEps && t.b < kZeroEps;
    return t;
}

} // namespace

double fuzzy_tanimoto(const DenseTensor& p, const DenseTensor& l) {
    if (!p.same_shape(l)) throw DimensionError("fuzzy_tanimoto shape mismatch");
    return tanimoto_parts(p.data(), l.data(), p.size(), false).value();
}

double tanimoto_loss(const DenseTensor& p, const DenseTensor& l) {
    if (!p.same_shape(l))
        throw DimensionError("tanimoto_loss shape mismatch: " + shape_to_string(p.shape()) +
                             " vs " + shape_to_string(l.shape()));
    check_unit_range(p, "tanimoto_loss prediction");
    check_unit_range(l, "tanimoto_loss label");
    const TanimotoParts t1 = tanimoto_parts(p.data(), l.data(), p.size(), false);
    const TanimotoParts t2 = tanimoto_parts(p.data(), l.data(), p.size(), true);
    return 1.0 - 0.5 * (t1.value() + t2.value());
}

DenseTensor tanimoto_loss_grad(const DenseTensor& p, const DenseTensor& l) {
    if (!p.same_shape(l)) throw DimensionError("tanimoto_loss_grad shape mismatch");
    const std::size_t n = p.size();
    const double* pd = p.data();
    const double* ld = l.data();
    const TanimotoParts t1 = tanimoto_parts(pd, ld, n, false);
    const TanimotoParts t2 = tanimoto_parts(pd, ld, n, true);
    DenseTensor grad(p.shape());
    double* gd = grad.data();
    const double d1 = t1.a + t1.b - t1.n;
    const double d2 = t2.a + t2.b - t2.n;
    for (std::size_t i = 0; i < n; ++i) {
        double g = 0.0;
        if (!t1.zero) {
            // d/dp of n/(a+b-n) with dn = l_i, d(a+b-n) = 2p_i - l_i
            g += (ld[i] * d1 - t1.n * (2.0 * pd[i] - ld[i])) / (d1 * d1);
        }
        if (!t2.zero) {
            const double q = 1.0 - pd[i];
            const double m = 1.0 - ld[i];
            g -= (m * d2 - t2.n * (2.0 * q - m)) / (d2 * d2);
        }
        gd[i] = -0.5 * g;
    }
    return grad;
}

double multitask_loss(const MultitaskPrediction& pred, const MultitaskPrediction& gt) {
    return (tanimoto_loss(pred.extent, gt.extent) + tanimoto_loss(pred.boundary, gt.boundary) +
            tanimoto_loss(pred.distance, gt.distance)) /
           3.0;
}

MultitaskPrediction multitask_loss_grad(const MultitaskPrediction& pred,
                                        const MultitaskPrediction& gt) {
    MultitaskPrediction g;
    g.extent = scale(tanimoto_loss_grad(pred.extent, gt.extent), 1.0 / 3.0);
    g.boundary = scale(tanimoto_loss_grad(pred.boundary, gt.boundary), 1.0 / 3.0);
    g.distance = scale(tanimoto_loss_grad(pred.distance, gt.distance), 1.0 / 3.0);
    return g;
}

// ---- confusion-matrix metrics ----

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (auto v : counts) s += v;
    return s;
}

ConfusionMatrix confusion(const IntImage& pred_labels, const IntImage& true_labels, int k) {
    if (pred_labels.h != true_labels.h || pred_labels.w != true_labels.w)
        throw DimensionError("confusion: image sizes differ");
    if (k <= 0) throw ConfigError("confusion: class count must be positive");
    ConfusionMatrix cm(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < pred_labels.data.size(); ++i) {
        const int p = pred_labels.data[i];
        const int t = true_labels.data[i];
        if (p < 0 || p >= k)
            throw RangeError("predicted label " + std::to_string(p) + " outside [0," +
                             std::to_string(k) + ")");
        if (t < 0 || t >= k)
            throw RangeError("true label " + std::to_string(t) + " outside [0," +
                             std::to_string(k) + ")");
        ++cm.at(static_cast<std::size_t>(p), static_cast<std::size_t>(t));
    }
    return cm;
}

MetricValue mcc(const ConfusionMatrix& cm) {
    const std::size_t k = cm.k;
    const std::int64_t s = cm.total();
    if (s <= 0) return {0.0, true};
    std::int64_t c = 0;
    std::vector<std::int64_t> p(k, 0), t(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
        c += cm.at(i, i);
        for (std::size_t j = 0; j < k; ++j) {
            p[i] += cm.at(i, j);
            t[j] += cm.at(i, j);
        }
    }
    std::int64_t pt = 0, pp = 0, tt = 0;
    for (std::size_t i = 0; i < k; ++i) {
        pt += p[i] * t[i];
        pp += p[i] * p[i];
        tt += t[i] * t[i];
    }
    const std::int64_t s2 = s * s;
    if (s2 - pp == 0 || s2 - tt == 0) return {0.0, true};
    const double num = static_cast<double>(c * s - pt);
    const double den =
        std::sqrt(static_cast<double>(s2 - pp) * static_cast<double>(s2 - tt));
    return {num / den, false};
}

MetricValue cohens_kappa(const ConfusionMatrix& cm) {
    const std::size_t k = cm.k;
    const std::int64_t s = cm.total();
    if (s <= 0) return {0.0, true};
    std::int64_t c = 0, pt = 0;
    std::vector<std::int64_t> p(k, 0), t(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
        c += cm.at(i, i);
        for (std::size_t j = 0; j < k; ++j) {
            p[i] += cm.at(i, j);
            t[j] += cm.at(i, j);
        }
    }
    for (std::size_t i = 0; i < k; ++i) pt += p[i] * t[i];
    const std::int64_t s2 = s * s;
    if (pt == s2) return {0.0, true};  // p_e == 1 exactly
    const double po = static_cast<double>(c) / static_cast<double>(s);
    const double pe = static_cast<double>(pt) / static_cast<double>(s2);
    return {(po - pe) / (1.0 - pe), false};
}

double miou_fuzzy(const DenseTensor& p, const DenseTensor& l) {
    if (!p.same_shape(l)) throw DimensionError("miou_fuzzy shape mismatch");
    if (p.rank() != 3) throw DimensionError("miou_fuzzy expects rank-3 N x H x W maps");
    const std::size_t n_class = p.extent(0);
    const std::size_t plane = p.extent(1) * p.extent(2);
    const double* pd = p.data();
    const double* ld = l.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n_class; ++i) {
        double inter = 0.0, uni = 0.0;
        const double* pp = pd + i * plane;
        const double* lp = ld + i * plane;
        for (std::size_t j = 0; j < plane; ++j) {
            inter += std::min(pp[j], lp[j]);
            uni += std::max(pp[j], lp[j]);
        }
        acc += uni > 0.0 ? inter / uni : 1.0;  // empty class on both sides
    }
    return acc / static_cast<double>(n_class);
}

double iou_binary(const BoolImage& pred, const BoolImage& truth) {
    if (pred.h != truth.h || pred.w != truth.w)
        throw DimensionError("iou_binary: image sizes differ");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool a = pred.data[i] != 0;
        const bool b = truth.data[i] != 0;
        tp += a && b;
        fp += a && !b;
        fn += !a && b;
    }
    const std::size_t uni = tp + fp + fn;
    if (uni == 0) return 1.0;
    return static_cast<double>(tp) / static_cast<double>(uni);
}

MetricValue fdr(const BoolImage& pred, const BoolImage& truth) {
    if (pred.h != truth.h || pred.w != truth.w)
        throw DimensionError("fdr: image sizes differ");
    std::size_t a = 0, a_not_b = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (pred.data[i]) {
            ++a;
            if (!truth.data[i]) ++a_not_b;
        }
    }
    if (a == 0) return {0.0, true};
    return {static_cast<double>(a_not_b) / static_cast<double>(a), false};
}

MetricValue for_rate(const BoolImage& pred, const BoolImage& truth) {
    if (pred.h != truth.h || pred.w != truth.w)
        throw DimensionError("for_rate: image sizes differ");
    std::size_t not_a = 0, not_a_and_b = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (!pred.data[i]) {
            ++not_a;
            if (truth.data[i]) ++not_a_and_b;
        }
    }
    if (not_a == 0) return {0.0, true};
    return {static_cast<double>(not_a_and_b) / static_cast<double>(not_a), false};
}

// ---- vertex-set distances ----

namespace {

double min_distance_to(const Point& p, const std::vector<Point>& ys) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point& y : ys) {
        const double dx = p.x - y.x, dy = p.y - y.y;
        const double d = dx * dx + dy * dy;
        if (d < best) best = d;
    }
    return std::sqrt(best);
}

void check_nonempty(const std::vector<Point>& x, const std::vector<Point>& y) {
    if (x.empty() || y.empty())
        throw EmptyGeometryError("vertex set distance over an empty set");
}

} // namespace

double msd(const std::vector<Point>& x, const std::vector<Point>& y) {
    check_nonempty(x, y);
    double sx = 0.0, sy = 0.0;
    for (const Point& p : x) sx += min_distance_to(p, y);
    for (const Point& p : y) sy += min_distance_to(p, x);
    return 0.5 * (sx / static_cast<double>(x.size()) + sy / static_cast<double>(y.size()));
}

double hausdorff(const std::vector<Point>& x, const std::vector<Point>& y) {
    check_nonempty(x, y);
    double dx = 0.0, dy = 0.0;
    for (const Point& p : x) dx = std::max(dx, min_distance_to(p, y));
    for (const Point& p : y) dy = std::max(dy, min_distance_to(p, x));
    return std::max(dx, dy);
}

} // namespace fieldseg::metrics
