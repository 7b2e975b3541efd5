#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fieldseg/pta3d.hpp"
#include "fieldseg/tensor.hpp"

namespace fieldseg::ag {

/// Reverse-mode autodiff over DenseTensor values. Each op eagerly computes
/// its value and records a closure that pushes gradients to its parents.
/// Graphs are per-forward-pass; weights enter as leaves and their grads are
/// read back after backward().
struct Node {
    DenseTensor value;
    DenseTensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void accumulate(const DenseTensor& g);
    bool is_leaf() const { return parents.empty(); }
};

using Var = std::shared_ptr<Node>;

Var leaf(DenseTensor value, bool requires_grad = false);

// elementwise / scalar
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);

// convolutions on rank-4 C,T,H,W tensors
/// Dense 3D convolution, odd kernel, stride 1, replicate (edge) padding.
Var conv3d_same(const Var& x, const Var& w, const Var& b);
/// Spatial downsampling: kernel (1,2,2), stride (1,2,2), valid.
Var conv3d_down(const Var& x, const Var& w, const Var& b);
/// Pointwise channel mixing; weight is rank-2 (Cout, Cin).
Var conv1x1(const Var& x, const Var& w, const Var& b);
/// Depthwise 3D convolution, odd kernel, replicate padding; weight is
/// (C, kt, kh, kw).
Var dwconv3d(const Var& x, const Var& w, const Var& b);

/// Per-channel normalization over (T,H,W) with affine parameters; keeps
/// single-sample determinism (no batch statistics).
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// shape / structure
Var global_mean_thw(const Var& x);                       // (C,T,H,W) -> (C)
Var linear(const Var& v, const Var& w, const Var& b);    // (In) -> (Out)
Var channel_mul(const Var& x, const Var& s);             // scale channel c by s[c]
Var concat_c(const Var& a, const Var& b);
Var channel_slice(const Var& x, std::size_t c0, std::size_t len);
Var upsample2_hw(const Var& x);
Var mean_t(const Var& x);                                // (C,T,H,W) -> (C,1,H,W)
Var time_slice(const Var& x, std::size_t t);             // (C,T,H,W) -> (C,1,H,W)
Var reshape_op(const Var& x, Shape new_shape);

/// Patch Tanimoto attention; backward delegates to pta3d::attention_grad.
Var pta_attention(const Var& q, const Var& k, const Var& v,
                  const pta3d::AttentionConfig& cfg);

/// Tanimoto-with-complement loss against a constant label; value has shape
/// {1}.
Var tanimoto_loss_op(const Var& p, DenseTensor label);

/// Reverse topological sweep from root; seeds the root gradient with ones.
/// Intermediate buffers are dropped as soon as their backprop has run;
/// leaves keep value and grad.
void backward(const Var& root);

} // namespace fieldseg::ag
