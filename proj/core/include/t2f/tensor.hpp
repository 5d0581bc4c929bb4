#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace t2f {

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node;

/// Shared tensor storage. Tensor handles alias one of these; the autodiff
/// graph is the chain of producer Nodes hanging off intermediate impls.
struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  std::vector<double> grad;  // leaf accumulation buffer, sized on first use
  std::shared_ptr<Node> producer;

  size_t numel() const { return value.size(); }
  bool tracked() const { return requires_grad || producer != nullptr; }
};

/// Per-backward gradient buffers keyed by impl. Returns nullptr for tensors
/// that do not participate in the graph (frozen weights), letting backward
/// kernels skip that work entirely.
class GradMap {
 public:
  std::vector<double>* buffer(const std::shared_ptr<TensorImpl>& t);
  std::vector<double>* find(const TensorImpl* t);

 private:
  std::unordered_map<const TensorImpl*, std::vector<double>> buffers_;
};

struct Node {
  const char* op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Accumulates input gradients given the output gradient.
  std::function<void(const std::vector<double>& out_grad, GradMap& grads)>
      backward;
};

}  // namespace detail

/// Gradients collected by a backward pass instead of being accumulated into
/// the leaves directly. Lets several workers differentiate disjoint graphs
/// that share read-only leaves, then reduce in a fixed order.
class GradSink {
 public:
  void add(std::shared_ptr<detail::TensorImpl> impl, std::vector<double> g);
  /// Adds every collected gradient into its leaf's grad buffer.
  void flush();

 private:
  std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, std::vector<double>>>
      entries_;
};

/// Dense n-dimensional double tensor with optional gradient tracking.
/// Handles share storage; copying a Tensor is cheap and aliases the data.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  size_t rank() const { return impl_->shape.size(); }
  size_t numel() const { return impl_->value.size(); }

  const std::vector<double>& values() const { return impl_->value; }
  /// Leaf-only mutation (parameter updates). Must not be called on tensors
  /// that are part of a live graph.
  std::vector<double>& mutable_values();

  double item() const;
  double at(size_t i) const { return impl_->value[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool rg);
  /// True if gradients flow through this tensor (leaf with requires_grad,
  /// or the output of a recorded op).
  bool tracked() const { return impl_->tracked(); }

  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Same values, cut loose from any graph, requires_grad off.
  Tensor detach() const;
  /// Deep copy as a fresh leaf.
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend Tensor make_op_output(const char* op, Shape shape,
                               std::vector<double> value,
                               std::vector<Tensor> inputs,
                               std::function<void(const std::vector<double>&,
                                                  detail::GradMap&)>
                                   backward);
};

// ---------------------------------------------------------------------------
// Forward op catalog. Every op is differentiable w.r.t. every Tensor input.
// Shape mismatches raise DataError naming the op and both shapes.
// ---------------------------------------------------------------------------

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [Cin,H,W] convolved with w [Cout,Cin,k,k], stride 1, same zero padding,
/// k in {1,3}. Output [Cout,H,W].
Tensor conv2d(const Tensor& x, const Tensor& w);
/// Elementwise with numpy-style broadcasting over leading/singleton extents.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// a - b, composed from add and scale.
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor leaky_relu(const Tensor& x, double slope);
/// [C,H,W] -> [C,h,w], half-pixel sample positions, edge-clamped.
Tensor bilinear_resize(const Tensor& x, size_t out_h, size_t out_w);
/// [C,H,W] -> [C,2H,2W].
Tensor nearest_upsample2(const Tensor& x);
/// Non-overlapping window x window mean pooling, stride = window, floor
/// semantics on odd extents. Requires H,W >= window.
Tensor average_pool(const Tensor& x, size_t window);
/// [C,H,W] -> [C].
Tensor global_average_pool(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor square(const Tensor& x);
/// Elementwise sqrt(x + eps), eps > 0.
Tensor sqrt_eps(const Tensor& x, double eps);
/// Euclidean norm as a scalar tensor; subgradient 0 at the origin.
Tensor l2_norm(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, size_t axis);
/// Normalizes each vector along axis 0 to unit RMS: x / sqrt(mean_c x^2 + eps).
/// Accepts [C] or [C,H,W] (per spatial position).
Tensor pixel_norm(const Tensor& x, double eps = 1e-8);
Tensor tanh(const Tensor& x);
/// Same data, new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);

// ---------------------------------------------------------------------------
// Reverse mode.
// ---------------------------------------------------------------------------

/// Backpropagates from a scalar loss. Gradients of every reachable
/// requires_grad tensor are accumulated into its grad buffer (+=). The graph
/// is released afterwards.
void backward(const Tensor& loss);
/// As above but gradients are collected into the sink instead of the leaves.
void backward(const Tensor& loss, GradSink& sink);

void zero_grads(const std::vector<Tensor>& params);

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t checked = 0;
  size_t skipped = 0;  // coordinates flagged as non-smooth samples
  bool passed = false;
};

/// Compares the analytic gradient of a scalar-valued f at x against central
/// finite differences. Coordinates where the one-sided differences disagree
/// (a kink under the probe step) are skipped and counted.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step = 1e-5,
                           double tol = 1e-4);

/// FNV-1a over the raw bytes of the tensors' values, in order. Used to prove
/// frozen modules stay frozen.
uint64_t hash_tensors(const std::vector<Tensor>& ts);

bool all_finite(const Tensor& t);

}  // namespace t2f
