#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "t2f/errors.hpp"
#include "t2f/tensor.hpp"

namespace t2f {

Tensor make_op_output(
    const char* op, Shape shape, std::vector<double> value,
    std::vector<Tensor> inputs,
    std::function<void(const std::vector<double>&, detail::GradMap&)>
        backward_fn);

namespace {

using detail::GradMap;
using detail::TensorImpl;
using ImplPtr = std::shared_ptr<detail::TensorImpl>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw DataError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                  " and " + shape_str(b));
}

// Right-aligned broadcasting plan for a binary elementwise op. For every
// output dimension, the per-operand stride is 0 where that operand
// broadcasts.
struct BroadcastPlan {
  Shape out_shape;
  std::vector<size_t> a_stride;
  std::vector<size_t> b_stride;
  size_t out_numel = 0;
  bool same_shape = false;
};

std::vector<size_t> natural_strides(const Shape& s) {
  std::vector<size_t> st(s.size(), 1);
  for (size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

BroadcastPlan make_plan(const char* op, const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out_shape = a;
    plan.out_numel = shape_numel(a);
    plan.same_shape = true;
    return plan;
  }
  const size_t rank = std::max(a.size(), b.size());
  plan.out_shape.assign(rank, 1);
  const auto as = natural_strides(a);
  const auto bs = natural_strides(b);
  plan.a_stride.assign(rank, 0);
  plan.b_stride.assign(rank, 0);
  for (size_t i = 0; i < rank; ++i) {
    const size_t ai = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const size_t bi = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (ai != bi && ai != 1 && bi != 1) shape_fail(op, a, b);
    plan.out_shape[i] = std::max(ai, bi);
    if (ai != 1) plan.a_stride[i] = as[i + a.size() - rank];
    if (bi != 1) plan.b_stride[i] = bs[i + b.size() - rank];
  }
  plan.out_numel = shape_numel(plan.out_shape);
  return plan;
}

// Walks every output position of a broadcast plan, handing the callback the
// linear offsets into both operands. Odometer over the output shape.
template <typename F>
void for_each_bcast(const BroadcastPlan& plan, F&& f) {
  const size_t rank = plan.out_shape.size();
  std::vector<size_t> idx(rank, 0);
  size_t ao = 0, bo = 0;
  for (size_t i = 0; i < plan.out_numel; ++i) {
    f(i, ao, bo);
    for (size_t d = rank; d-- > 0;) {
      ++idx[d];
      ao += plan.a_stride[d];
      bo += plan.b_stride[d];
      if (idx[d] < plan.out_shape[d]) break;
      ao -= plan.a_stride[d] * plan.out_shape[d];
      bo -= plan.b_stride[d] * plan.out_shape[d];
      idx[d] = 0;
    }
  }
}

void check_rank(const char* op, const Tensor& t, size_t rank) {
  if (t.rank() != rank) {
    throw DataError(std::string(op) + ": expected rank " +
                    std::to_string(rank) + " tensor, got shape " +
                    shape_str(t.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank("matmul", a, 2);
  check_rank("matmul", b, 2);
  const size_t m = a.shape()[0], k = a.shape()[1];
  const size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) shape_fail("matmul", a.shape(), b.shape());

  std::vector<double> out(m * n, 0.0);
  {
    const double* A = a.values().data();
    const double* B = b.values().data();
    for (size_t i = 0; i < m; ++i) {
      double* crow = out.data() + i * n;
      for (size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = B + p * n;
        for (size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_op_output(
      "matmul", {m, n}, std::move(out), {a, b},
      [ai, bi, m, k, n](const std::vector<double>& g, GradMap& grads) {
        const double* A = ai->value.data();
        const double* B = bi->value.data();
        if (auto* da = grads.buffer(ai)) {
          // dA = G * B^T
          for (size_t i = 0; i < m; ++i) {
            const double* grow = g.data() + i * n;
            double* darow = da->data() + i * k;
            for (size_t p = 0; p < k; ++p) {
              const double* brow = B + p * n;
              double acc = 0.0;
              for (size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              darow[p] += acc;
            }
          }
        }
        if (auto* db = grads.buffer(bi)) {
          // dB = A^T * G
          for (size_t i = 0; i < m; ++i) {
            const double* grow = g.data() + i * n;
            for (size_t p = 0; p < k; ++p) {
              const double aip = A[i * k + p];
              if (aip == 0.0) continue;
              double* dbrow = db->data() + p * n;
              for (size_t j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// conv2d: stride 1, same zero padding, square kernels of size 1 or 3
// ---------------------------------------------------------------------------

namespace {

void conv_accumulate(const double* in, double* out, double wv, int dy, int dx,
                     size_t H, size_t W) {
  // out[y][x] += wv * in[y+dy][x+dx] over the in-bounds window.
  const size_t y0 = dy < 0 ? static_cast<size_t>(-dy) : 0;
  const size_t y1 = dy > 0 ? H - static_cast<size_t>(dy) : H;
  const size_t x0 = dx < 0 ? static_cast<size_t>(-dx) : 0;
  const size_t x1 = dx > 0 ? W - static_cast<size_t>(dx) : W;
  for (size_t y = y0; y < y1; ++y) {
    double* orow = out + y * W;
    const double* irow = in + (y + dy) * W + dx;
    for (size_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
  }
}

double conv_window_dot(const double* a, const double* b, int dy, int dx,
                       size_t H, size_t W) {
  // sum over valid positions of a[y][x] * b[y+dy][x+dx].
  const size_t y0 = dy < 0 ? static_cast<size_t>(-dy) : 0;
  const size_t y1 = dy > 0 ? H - static_cast<size_t>(dy) : H;
  const size_t x0 = dx < 0 ? static_cast<size_t>(-dx) : 0;
  const size_t x1 = dx > 0 ? W - static_cast<size_t>(dx) : W;
  double acc = 0.0;
  for (size_t y = y0; y < y1; ++y) {
    const double* ar = a + y * W;
    const double* br = b + (y + dy) * W + dx;
    for (size_t x = x0; x < x1; ++x) acc += ar[x] * br[x];
  }
  return acc;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w) {
  check_rank("conv2d", x, 3);
  check_rank("conv2d", w, 4);
  const size_t cin = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const size_t cout = w.shape()[0];
  const size_t k = w.shape()[2];
  if (w.shape()[1] != cin || w.shape()[3] != k || (k != 1 && k != 3)) {
    shape_fail("conv2d", x.shape(), w.shape());
  }
  const size_t hw = H * W;
  const int kc = static_cast<int>(k) / 2;

  std::vector<double> out(cout * hw, 0.0);
  {
    const double* X = x.values().data();
    const double* Wt = w.values().data();
    for (size_t co = 0; co < cout; ++co) {
      double* oplane = out.data() + co * hw;
      for (size_t ci = 0; ci < cin; ++ci) {
        const double* iplane = X + ci * hw;
        const double* wk = Wt + (co * cin + ci) * k * k;
        for (size_t ky = 0; ky < k; ++ky) {
          for (size_t kx = 0; kx < k; ++kx) {
            const double wv = wk[ky * k + kx];
            if (wv == 0.0) continue;
            conv_accumulate(iplane, oplane, wv, static_cast<int>(ky) - kc,
                            static_cast<int>(kx) - kc, H, W);
          }
        }
      }
    }
  }
  ImplPtr xi = x.impl(), wi = w.impl();
  return make_op_output(
      "conv2d", {cout, H, W}, std::move(out), {x, w},
      [xi, wi, cin, cout, H, W, k, kc](const std::vector<double>& g,
                                       GradMap& grads) {
        const size_t hw = H * W;
        const double* X = xi->value.data();
        const double* Wt = wi->value.data();
        if (auto* dx = grads.buffer(xi)) {
          for (size_t co = 0; co < cout; ++co) {
            const double* gplane = g.data() + co * hw;
            for (size_t ci = 0; ci < cin; ++ci) {
              double* dplane = dx->data() + ci * hw;
              const double* wk = Wt + (co * cin + ci) * k * k;
              for (size_t ky = 0; ky < k; ++ky) {
                for (size_t kx = 0; kx < k; ++kx) {
                  const double wv = wk[ky * k + kx];
                  if (wv == 0.0) continue;
                  // Transposed: dIn[y+dy][x+dx] += wv * g[y][x] is the same
                  // window walk with the kernel offset negated on the output.
                  conv_accumulate(gplane, dplane, wv,
                                  -(static_cast<int>(ky) - kc),
                                  -(static_cast<int>(kx) - kc), H, W);
                }
              }
            }
          }
        }
        if (auto* dw = grads.buffer(wi)) {
          for (size_t co = 0; co < cout; ++co) {
            const double* gplane = g.data() + co * hw;
            for (size_t ci = 0; ci < cin; ++ci) {
              const double* iplane = X + ci * hw;
              double* dwk = dw->data() + (co * cin + ci) * k * k;
              for (size_t ky = 0; ky < k; ++ky) {
                for (size_t kx = 0; kx < k; ++kx) {
                  dwk[ky * k + kx] += conv_window_dot(
                      gplane, iplane, static_cast<int>(ky) - kc,
                      static_cast<int>(kx) - kc, H, W);
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// broadcast elementwise: add / mul / div
// ---------------------------------------------------------------------------

namespace {

enum class BinOp { Add, Mul, Div };

Tensor binary_op(const char* name, BinOp op, const Tensor& a,
                 const Tensor& b) {
  BroadcastPlan plan = make_plan(name, a.shape(), b.shape());
  std::vector<double> out(plan.out_numel);
  const double* A = a.values().data();
  const double* B = b.values().data();
  if (plan.same_shape) {
    switch (op) {
      case BinOp::Add:
        for (size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
        break;
      case BinOp::Mul:
        for (size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
        break;
      case BinOp::Div:
        for (size_t i = 0; i < out.size(); ++i) out[i] = A[i] / B[i];
        break;
    }
  } else {
    for_each_bcast(plan, [&](size_t i, size_t ao, size_t bo) {
      switch (op) {
        case BinOp::Add: out[i] = A[ao] + B[bo]; break;
        case BinOp::Mul: out[i] = A[ao] * B[bo]; break;
        case BinOp::Div: out[i] = A[ao] / B[bo]; break;
      }
    });
  }
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_op_output(
      name, plan.out_shape, std::move(out), {a, b},
      [ai, bi, op, plan](const std::vector<double>& g, GradMap& grads) {
        const double* A = ai->value.data();
        const double* B = bi->value.data();
        auto* da = grads.buffer(ai);
        auto* db = grads.buffer(bi);
        if (!da && !db) return;
        auto accum = [&](size_t i, size_t ao, size_t bo) {
          switch (op) {
            case BinOp::Add:
              if (da) (*da)[ao] += g[i];
              if (db) (*db)[bo] += g[i];
              break;
            case BinOp::Mul:
              if (da) (*da)[ao] += g[i] * B[bo];
              if (db) (*db)[bo] += g[i] * A[ao];
              break;
            case BinOp::Div: {
              const double inv = 1.0 / B[bo];
              if (da) (*da)[ao] += g[i] * inv;
              if (db) (*db)[bo] -= g[i] * A[ao] * inv * inv;
              break;
            }
          }
        };
        if (plan.same_shape) {
          for (size_t i = 0; i < g.size(); ++i) accum(i, i, i);
        } else {
          for_each_bcast(plan, accum);
        }
      });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", BinOp::Add, a, b);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("multiply", BinOp::Mul, a, b);
}
Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op("divide", BinOp::Div, a, b);
}
Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

// ---------------------------------------------------------------------------
// pointwise unary ops
// ---------------------------------------------------------------------------

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = c * x.values()[i];
  ImplPtr xi = x.impl();
  return make_op_output("scale", x.shape(), std::move(out), {x},
                        [xi, c](const std::vector<double>& g, GradMap& grads) {
                          if (auto* dx = grads.buffer(xi)) {
                            for (size_t i = 0; i < g.size(); ++i)
                              (*dx)[i] += c * g[i];
                          }
                        });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.numel());
  for (size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    out[i] = v > 0.0 ? v : slope * v;
  }
  ImplPtr xi = x.impl();
  return make_op_output(
      "leaky_relu", x.shape(), std::move(out), {x},
      [xi, slope](const std::vector<double>& g, GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          for (size_t i = 0; i < g.size(); ++i) {
            const double v = xi->value[i];
            // subgradient 0 exactly at the kink
            if (v > 0.0) (*dx)[i] += g[i];
            else if (v < 0.0) (*dx)[i] += slope * g[i];
          }
        }
      });
}

Tensor square(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = x.values()[i] * x.values()[i];
  ImplPtr xi = x.impl();
  return make_op_output("square", x.shape(), std::move(out), {x},
                        [xi](const std::vector<double>& g, GradMap& grads) {
                          if (auto* dx = grads.buffer(xi)) {
                            for (size_t i = 0; i < g.size(); ++i)
                              (*dx)[i] += 2.0 * xi->value[i] * g[i];
                          }
                        });
}

Tensor sqrt_eps(const Tensor& x, double eps) {
  if (eps <= 0.0) throw DataError("sqrt_eps: eps must be positive");
  std::vector<double> out(x.numel());
  for (size_t i = 0; i < out.size(); ++i) {
    const double v = x.values()[i] + eps;
    if (v <= 0.0) {
      throw NumericError("sqrt_eps: argument " + std::to_string(x.values()[i]) +
                         " below -eps");
    }
    out[i] = std::sqrt(v);
  }
  ImplPtr xi = x.impl();
  std::vector<double> y = out;
  return make_op_output(
      "sqrt_eps", x.shape(), std::move(out), {x},
      [xi, y = std::move(y)](const std::vector<double>& g, GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          for (size_t i = 0; i < g.size(); ++i) (*dx)[i] += 0.5 * g[i] / y[i];
        }
      });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.values()[i]);
  ImplPtr xi = x.impl();
  std::vector<double> y = out;
  return make_op_output(
      "tanh", x.shape(), std::move(out), {x},
      [xi, y = std::move(y)](const std::vector<double>& g, GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          for (size_t i = 0; i < g.size(); ++i)
            (*dx)[i] += g[i] * (1.0 - y[i] * y[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  ImplPtr xi = x.impl();
  return make_op_output("sum", {}, {acc}, {x},
                        [xi](const std::vector<double>& g, GradMap& grads) {
                          if (auto* dx = grads.buffer(xi)) {
                            for (auto& d : *dx) d += g[0];
                          }
                        });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DataError("mean: empty tensor");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  ImplPtr xi = x.impl();
  return make_op_output("mean", {}, {acc * inv}, {x},
                        [xi, inv](const std::vector<double>& g,
                                  GradMap& grads) {
                          if (auto* dx = grads.buffer(xi)) {
                            for (auto& d : *dx) d += g[0] * inv;
                          }
                        });
}

Tensor l2_norm(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v * v;
  const double norm = std::sqrt(acc);
  ImplPtr xi = x.impl();
  return make_op_output(
      "l2_norm", {}, {norm}, {x},
      [xi, norm](const std::vector<double>& g, GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          if (norm == 0.0) return;  // subgradient 0 at the origin
          const double s = g[0] / norm;
          for (size_t i = 0; i < dx->size(); ++i) (*dx)[i] += s * xi->value[i];
        }
      });
}

Tensor global_average_pool(const Tensor& x) {
  check_rank("global_average_pool", x, 3);
  const size_t c = x.shape()[0], s = x.shape()[1] * x.shape()[2];
  std::vector<double> out(c, 0.0);
  for (size_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    const double* p = x.values().data() + ci * s;
    for (size_t i = 0; i < s; ++i) acc += p[i];
    out[ci] = acc / static_cast<double>(s);
  }
  ImplPtr xi = x.impl();
  return make_op_output(
      "global_average_pool", {c}, std::move(out), {x},
      [xi, c, s](const std::vector<double>& g, GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          const double inv = 1.0 / static_cast<double>(s);
          for (size_t ci = 0; ci < c; ++ci) {
            double* p = dx->data() + ci * s;
            const double gv = g[ci] * inv;
            for (size_t i = 0; i < s; ++i) p[i] += gv;
          }
        }
      });
}

Tensor average_pool(const Tensor& x, size_t window) {
  check_rank("average_pool", x, 3);
  if (window == 0) throw DataError("average_pool: window must be positive");
  const size_t c = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  if (H < window || W < window) {
    throw DataError("average_pool: input " + shape_str(x.shape()) +
                    " smaller than window " + std::to_string(window));
  }
  const size_t ho = H / window, wo = W / window;  // floor: trailing rows drop
  const double inv = 1.0 / static_cast<double>(window * window);
  std::vector<double> out(c * ho * wo, 0.0);
  for (size_t ci = 0; ci < c; ++ci) {
    const double* ip = x.values().data() + ci * H * W;
    double* op = out.data() + ci * ho * wo;
    for (size_t oy = 0; oy < ho; ++oy) {
      for (size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (size_t ky = 0; ky < window; ++ky) {
          const double* row = ip + (oy * window + ky) * W + ox * window;
          for (size_t kx = 0; kx < window; ++kx) acc += row[kx];
        }
        op[oy * wo + ox] = acc * inv;
      }
    }
  }
  ImplPtr xi = x.impl();
  return make_op_output(
      "average_pool", {c, ho, wo}, std::move(out), {x},
      [xi, c, H, W, ho, wo, window, inv](const std::vector<double>& g,
                                         GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          for (size_t ci = 0; ci < c; ++ci) {
            double* ip = dx->data() + ci * H * W;
            const double* gp = g.data() + ci * ho * wo;
            for (size_t oy = 0; oy < ho; ++oy) {
              for (size_t ox = 0; ox < wo; ++ox) {
                const double gv = gp[oy * wo + ox] * inv;
                for (size_t ky = 0; ky < window; ++ky) {
                  double* row = ip + (oy * window + ky) * W + ox * window;
                  for (size_t kx = 0; kx < window; ++kx) row[kx] += gv;
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

Tensor nearest_upsample2(const Tensor& x) {
  check_rank("nearest_upsample2", x, 3);
  const size_t c = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const size_t H2 = 2 * H, W2 = 2 * W;
  std::vector<double> out(c * H2 * W2);
  for (size_t ci = 0; ci < c; ++ci) {
    const double* ip = x.values().data() + ci * H * W;
    double* op = out.data() + ci * H2 * W2;
    for (size_t y = 0; y < H2; ++y) {
      const double* irow = ip + (y / 2) * W;
      double* orow = op + y * W2;
      for (size_t xq = 0; xq < W2; ++xq) orow[xq] = irow[xq / 2];
    }
  }
  ImplPtr xi = x.impl();
  return make_op_output(
      "nearest_upsample2", {c, H2, W2}, std::move(out), {x},
      [xi, c, H, W](const std::vector<double>& g, GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          const size_t H2 = 2 * H, W2 = 2 * W;
          for (size_t ci = 0; ci < c; ++ci) {
            double* ip = dx->data() + ci * H * W;
            const double* gp = g.data() + ci * H2 * W2;
            for (size_t y = 0; y < H2; ++y) {
              double* irow = ip + (y / 2) * W;
              const double* grow = gp + y * W2;
              for (size_t xq = 0; xq < W2; ++xq) irow[xq / 2] += grow[xq];
            }
          }
        }
      });
}

namespace {

struct ResizeAxis {
  std::vector<size_t> i0, i1;
  std::vector<double> frac;
};

// Half-pixel sample positions, clamped to the edges.
ResizeAxis resize_axis(size_t in, size_t out) {
  ResizeAxis ax;
  ax.i0.resize(out);
  ax.i1.resize(out);
  ax.frac.resize(out);
  const double r = static_cast<double>(in) / static_cast<double>(out);
  for (size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * r - 0.5;
    if (src < 0.0) src = 0.0;
    const double hi = static_cast<double>(in - 1);
    if (src > hi) src = hi;
    const size_t lo = static_cast<size_t>(src);
    ax.i0[o] = lo;
    ax.i1[o] = std::min(lo + 1, in - 1);
    ax.frac[o] = src - static_cast<double>(lo);
  }
  return ax;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, size_t out_h, size_t out_w) {
  check_rank("bilinear_resize", x, 3);
  if (out_h == 0 || out_w == 0) {
    throw DataError("bilinear_resize: zero target size");
  }
  const size_t c = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const ResizeAxis ay = resize_axis(H, out_h);
  const ResizeAxis axx = resize_axis(W, out_w);
  std::vector<double> out(c * out_h * out_w);
  for (size_t ci = 0; ci < c; ++ci) {
    const double* ip = x.values().data() + ci * H * W;
    double* op = out.data() + ci * out_h * out_w;
    for (size_t oy = 0; oy < out_h; ++oy) {
      const double* r0 = ip + ay.i0[oy] * W;
      const double* r1 = ip + ay.i1[oy] * W;
      const double fy = ay.frac[oy];
      double* orow = op + oy * out_w;
      for (size_t ox = 0; ox < out_w; ++ox) {
        const size_t x0 = axx.i0[ox], x1 = axx.i1[ox];
        const double fx = axx.frac[ox];
        const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const double bot = r1[x0] + fx * (r1[x1] - r1[x0]);
        orow[ox] = top + fy * (bot - top);
      }
    }
  }
  ImplPtr xi = x.impl();
  return make_op_output(
      "bilinear_resize", {c, out_h, out_w}, std::move(out), {x},
      [xi, c, H, W, out_h, out_w, ay, axx](const std::vector<double>& g,
                                           GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          for (size_t ci = 0; ci < c; ++ci) {
            double* ip = dx->data() + ci * H * W;
            const double* gp = g.data() + ci * out_h * out_w;
            for (size_t oy = 0; oy < out_h; ++oy) {
              double* r0 = ip + ay.i0[oy] * W;
              double* r1 = ip + ay.i1[oy] * W;
              const double fy = ay.frac[oy];
              const double* grow = gp + oy * out_w;
              for (size_t ox = 0; ox < out_w; ++ox) {
                const size_t x0 = axx.i0[ox], x1 = axx.i1[ox];
                const double fx = axx.frac[ox];
                const double gv = grow[ox];
                r0[x0] += gv * (1.0 - fy) * (1.0 - fx);
                r0[x1] += gv * (1.0 - fy) * fx;
                r1[x0] += gv * fy * (1.0 - fx);
                r1[x1] += gv * fy * fx;
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// concat / reshape / pixel_norm
// ---------------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
  if (parts.empty()) throw DataError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) {
    throw DataError("concat: axis " + std::to_string(axis) +
                    " out of range for shape " + shape_str(s0));
  }
  Shape out_shape = s0;
  size_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != s0.size()) shape_fail("concat", s0, p.shape());
    for (size_t d = 0; d < s0.size(); ++d) {
      if (d != axis && p.shape()[d] != s0[d]) {
        shape_fail("concat", s0, p.shape());
      }
    }
    axis_total += p.shape()[axis];
  }
  out_shape[axis] = axis_total;

  size_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  std::vector<double> out(shape_numel(out_shape));
  std::vector<size_t> block(parts.size());
  for (size_t p = 0; p < parts.size(); ++p) {
    block[p] = parts[p].shape()[axis] * inner;
  }
  const size_t out_stride = axis_total * inner;
  for (size_t o = 0; o < outer; ++o) {
    size_t off = o * out_stride;
    for (size_t p = 0; p < parts.size(); ++p) {
      const double* src = parts[p].values().data() + o * block[p];
      std::copy(src, src + block[p], out.data() + off);
      off += block[p];
    }
  }
  std::vector<ImplPtr> impls;
  impls.reserve(parts.size());
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_op_output(
      "concat", out_shape, std::move(out), parts,
      [impls, block, outer, out_stride](const std::vector<double>& g,
                                        GradMap& grads) {
        for (size_t o = 0; o < outer; ++o) {
          size_t off = o * out_stride;
          for (size_t p = 0; p < impls.size(); ++p) {
            if (auto* dp = grads.buffer(impls[p])) {
              double* dst = dp->data() + o * block[p];
              for (size_t i = 0; i < block[p]; ++i) dst[i] += g[off + i];
            }
            off += block[p];
          }
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    shape_fail("reshape", x.shape(), shape);
  }
  ImplPtr xi = x.impl();
  std::vector<double> out = x.values();
  return make_op_output("reshape", std::move(shape), std::move(out), {x},
                        [xi](const std::vector<double>& g, GradMap& grads) {
                          if (auto* dx = grads.buffer(xi)) {
                            for (size_t i = 0; i < g.size(); ++i)
                              (*dx)[i] += g[i];
                          }
                        });
}

Tensor pixel_norm(const Tensor& x, double eps) {
  if (x.rank() != 1 && x.rank() != 3) {
    throw DataError("pixel_norm: expected rank 1 or 3, got " +
                    shape_str(x.shape()));
  }
  if (eps <= 0.0) throw DataError("pixel_norm: eps must be positive");
  const size_t c = x.shape()[0];
  const size_t s = x.numel() / c;  // spatial positions
  std::vector<double> out(x.numel());
  std::vector<double> sd(s);  // sqrt(mean + eps) per position
  const double invc = 1.0 / static_cast<double>(c);
  const double* X = x.values().data();
  for (size_t p = 0; p < s; ++p) {
    double m = 0.0;
    for (size_t ci = 0; ci < c; ++ci) {
      const double v = X[ci * s + p];
      m += v * v;
    }
    sd[p] = std::sqrt(m * invc + eps);
    const double inv = 1.0 / sd[p];
    for (size_t ci = 0; ci < c; ++ci) out[ci * s + p] = X[ci * s + p] * inv;
  }
  ImplPtr xi = x.impl();
  return make_op_output(
      "pixel_norm", x.shape(), std::move(out), {x},
      [xi, c, s, invc, sd = std::move(sd)](const std::vector<double>& g,
                                           GradMap& grads) {
        if (auto* dx = grads.buffer(xi)) {
          const double* X = xi->value.data();
          for (size_t p = 0; p < s; ++p) {
            const double inv = 1.0 / sd[p];
            double dot = 0.0;
            for (size_t ci = 0; ci < c; ++ci) {
              dot += g[ci * s + p] * X[ci * s + p];
            }
            const double coef = dot * invc * inv * inv * inv;
            for (size_t ci = 0; ci < c; ++ci) {
              (*dx)[ci * s + p] += g[ci * s + p] * inv - X[ci * s + p] * coef;
            }
          }
        }
      });
}

}  // namespace t2f
