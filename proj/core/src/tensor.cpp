#include "t2f/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "t2f/errors.hpp"

namespace t2f {

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>* GradMap::buffer(const std::shared_ptr<TensorImpl>& t) {
  if (!t->tracked()) return nullptr;
  auto it = buffers_.find(t.get());
  if (it == buffers_.end()) {
    it = buffers_.emplace(t.get(), std::vector<double>(t->numel(), 0.0)).first;
  }
  return &it->second;
}

std::vector<double>* GradMap::find(const TensorImpl* t) {
  auto it = buffers_.find(t);
  return it == buffers_.end() ? nullptr : &it->second;
}

}  // namespace detail

void GradSink::add(std::shared_ptr<detail::TensorImpl> impl,
                   std::vector<double> g) {
  entries_.emplace_back(std::move(impl), std::move(g));
}

void GradSink::flush() {
  for (auto& [impl, g] : entries_) {
    if (impl->grad.empty()) impl->grad.assign(impl->numel(), 0.0);
    for (size_t i = 0; i < g.size(); ++i) impl->grad[i] += g[i];
  }
  entries_.clear();
}

Tensor Tensor::zeros(Shape shape) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->value.assign(shape_numel(shape), 0.0);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.impl_->value.begin(), t.impl_->value.end(), v);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw DataError("tensor: data length " + std::to_string(data.size()) +
                    " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v) { return from_data({}, {v}); }

std::vector<double>& Tensor::mutable_values() {
  if (impl_->producer) {
    throw DataError("tensor: mutating a non-leaf tensor");
  }
  return impl_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DataError("tensor: item() on non-scalar shape " + shape_str(shape()));
  }
  return impl_->value[0];
}

Tensor& Tensor::set_requires_grad(bool rg) {
  impl_->requires_grad = rg;
  return *this;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->numel(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->numel(), 0.0); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->value = impl_->value;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const { return detach(); }

Tensor make_op_output(
    const char* op, Shape shape, std::vector<double> value,
    std::vector<Tensor> inputs,
    std::function<void(const std::vector<double>&, detail::GradMap&)>
        backward_fn) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(value);
  bool any_tracked = false;
  for (const auto& in : inputs) {
    if (in.tracked()) {
      any_tracked = true;
      break;
    }
  }
  if (any_tracked) {
    auto node = std::make_shared<detail::Node>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::move(backward_fn);
    impl->producer = std::move(node);
  }
  return Tensor(std::move(impl));
}

namespace {

// Post-order collection of every impl reachable from the root through
// producer edges. The returned list is a valid topological order.
std::vector<std::shared_ptr<detail::TensorImpl>> topo_order(
    const std::shared_ptr<detail::TensorImpl>& root) {
  std::vector<std::shared_ptr<detail::TensorImpl>> order;
  std::unordered_set<const detail::TensorImpl*> seen;
  struct Frame {
    std::shared_ptr<detail::TensorImpl> impl;
    size_t next_child = 0;
  };
  std::vector<Frame> stack;
  if (seen.insert(root.get()).second) stack.push_back({root});
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& prod = f.impl->producer;
    if (prod && f.next_child < prod->inputs.size()) {
      auto child = prod->inputs[f.next_child++];
      if (seen.insert(child.get()).second) stack.push_back({std::move(child)});
    } else {
      order.push_back(std::move(f.impl));
      stack.pop_back();
    }
  }
  return order;
}

void backward_impl(const Tensor& loss, GradSink* sink) {
  if (loss.numel() != 1) {
    throw DataError("backward: loss must be scalar, got shape " +
                    shape_str(loss.shape()));
  }
  auto order = topo_order(loss.impl());
  detail::GradMap grads;
  if (auto* seed = grads.buffer(loss.impl())) {
    (*seed)[0] = 1.0;
  } else {
    return;  // loss does not depend on any tracked tensor
  }
  // Reverse topological order: consumers before producers.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& impl = *it;
    if (!impl->producer) continue;
    if (auto* g = grads.find(impl.get())) {
      impl->producer->backward(*g, grads);
    }
  }
  // Deliver leaf gradients in deterministic (topological) order.
  for (const auto& impl : order) {
    if (!impl->requires_grad) continue;
    auto* g = grads.find(impl.get());
    if (!g) continue;
    if (sink) {
      sink->add(impl, std::move(*g));
    } else {
      if (impl->grad.empty()) impl->grad.assign(impl->numel(), 0.0);
      for (size_t i = 0; i < g->size(); ++i) impl->grad[i] += (*g)[i];
    }
  }
  // The graph is per-step: release it.
  for (const auto& impl : order) impl->producer.reset();
}

}  // namespace

void backward(const Tensor& loss) { backward_impl(loss, nullptr); }

void backward(const Tensor& loss, GradSink& sink) {
  backward_impl(loss, &sink);
}

void zero_grads(const std::vector<Tensor>& params) {
  for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step, double tol) {
  GradCheckReport report;
  Tensor x0 = x.clone().set_requires_grad(true);
  Tensor loss = f(x0);
  const double l0 = loss.item();
  backward(loss);
  const std::vector<double> analytic = x0.grad();

  Tensor probe = x.clone();
  auto eval = [&](size_t i, double delta) {
    probe.mutable_values()[i] = x.values()[i] + delta;
    const double v = f(probe).item();
    probe.mutable_values()[i] = x.values()[i];
    return v;
  };
  for (size_t i = 0; i < x.numel(); ++i) {
    const double lp = eval(i, step);
    const double lm = eval(i, -step);
    const double fwd = (lp - l0) / step;
    const double bwd = (l0 - lm) / step;
    // One-sided slopes disagree -> the probe straddles a kink; central
    // differences are meaningless there.
    if (std::abs(fwd - bwd) >
        1e-2 * std::max({1.0, std::abs(fwd), std::abs(bwd)})) {
      ++report.skipped;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * step);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    report.max_rel_err = std::max(report.max_rel_err, rel);
    ++report.checked;
  }
  report.passed = report.max_rel_err < tol;
  return report;
}

uint64_t hash_tensors(const std::vector<Tensor>& ts) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& t : ts) {
    for (size_t e : t.shape()) mix(&e, sizeof(e));
    mix(t.values().data(), t.values().size() * sizeof(double));
  }
  return h;
}

bool all_finite(const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace t2f
