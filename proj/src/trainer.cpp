#include "fieldseg/trainer.hpp"

#include <cmath>

#include "fieldseg/errors.hpp"
#include "fieldseg/loss_metrics.hpp"

namespace fieldseg::nn {

namespace {

ag::Var sample_loss_graph(const UNet3DConfig& cfg, FetchProvider& pp, const ToySample& s) {
    BuiltHeads heads = build_unet3d(ag::leaf(s.input, false), cfg, pp);
    ag::Var le = ag::tanimoto_loss_op(heads.extent, s.target.extent);
    ag::Var lb = ag::tanimoto_loss_op(heads.boundary, s.target.boundary);
    ag::Var ld = ag::tanimoto_loss_op(heads.distance, s.target.distance);
    return ag::scale(ag::add(ag::add(le, lb), ld), 1.0 / 3.0);
}

double pass_over_data(const UNet3DConfig& cfg, ModelWeights& w,
                      const std::vector<ToySample>& data, bool update, double lr) {
    const double inv_n = 1.0 / static_cast<double>(data.size());
    std::map<std::string, DenseTensor> grad_acc;
    double total = 0.0;
    for (const ToySample& s : data) {
        FetchProvider pp(w, update);
        ag::Var loss;
        try {
            loss = sample_loss_graph(cfg, pp, s);
        } catch (const RangeError&) {
            // sigmoid outputs leave [0,1] only when the forward pass went
            // non-finite
            throw TrainingError("loss diverged (non-finite prediction)");
        }
        total += loss->value[0] * inv_n;
        if (!update) continue;
        ag::Var scaled = ag::scale(loss, inv_n);  // dataset mean
        ag::backward(scaled);
        for (const auto& [name, leaf] : pp.leaves()) {
            if (!leaf->grad_ready) continue;
            auto it = grad_acc.find(name);
            if (it == grad_acc.end()) {
                grad_acc.emplace(name, leaf->grad);
            } else {
                double* d = it->second.data();
                const double* g = leaf->grad.data();
                for (std::size_t i = 0; i < it->second.size(); ++i) d[i] += g[i];
            }
        }
    }
    if (!std::isfinite(total))
        throw TrainingError("loss diverged (non-finite value)");
    if (update && lr != 0.0) {
        for (auto& [name, grad] : grad_acc) {
            DenseTensor& t = w.tensors.at(name);
            double* d = t.data();
            const double* g = grad.data();
            for (std::size_t i = 0; i < t.size(); ++i) d[i] -= lr * g[i];
        }
    }
    return total;
}

} // namespace

FitResult fit_toy_from(const UNet3DConfig& cfg, ModelWeights weights,
                       const std::vector<ToySample>& data, int steps, double lr) {
    cfg.validate();
    if (data.empty()) throw ConfigError("fit_toy requires a non-empty dataset");
    if (steps < 0) throw ConfigError("fit_toy step count must be non-negative");
    FitResult out;
    out.weights = std::move(weights);
    out.loss_trace.reserve(static_cast<std::size_t>(steps) + 1);
    for (int step = 0; step < steps; ++step)
        out.loss_trace.push_back(pass_over_data(cfg, out.weights, data, true, lr));
    out.loss_trace.push_back(pass_over_data(cfg, out.weights, data, false, 0.0));
    return out;
}

FitResult fit_toy(const UNet3DConfig& cfg, const std::vector<ToySample>& data, int steps,
                  double lr, std::uint64_t seed) {
    return fit_toy_from(cfg, init_weights(cfg, seed), data, steps, lr);
}

double toy_loss(const UNet3DConfig& cfg, const ModelWeights& w,
                const std::vector<ToySample>& data) {
    ModelWeights copy = w;
    return pass_over_data(cfg, copy, data, false, 0.0);
}

} // namespace fieldseg::nn
