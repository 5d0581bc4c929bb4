#include "t2f/tensor.hpp"

#include <cmath>

#include "doctest.h"
#include "t2f/errors.hpp"
#include "t2f/rng.hpp"
#include "testutil.hpp"

using namespace t2f;
using test::check_gradient;
using test::max_rel_err;
using test::numeric_grad;
using test::random_tensor;

TEST_CASE("leaky_relu at the two definition points") {
  Tensor x = Tensor::from_data({2}, {-1.0, 2.0});
  Tensor y = leaky_relu(x, 0.2);
  CHECK(y.values()[0] == doctest::Approx(-0.2));
  CHECK(y.values()[1] == doctest::Approx(2.0));
}

TEST_CASE("conv2d with an identity 1x1 kernel is the identity") {
  Rng rng(3);
  Tensor img = random_tensor(rng, {3, 5, 5});
  // One 1x1 kernel per output channel selecting the same input channel.
  std::vector<double> w(3 * 3, 0.0);
  for (size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  Tensor kernel = Tensor::from_data({3, 3, 1, 1}, w);
  Tensor out = conv2d(img, kernel);
  REQUIRE(out.shape() == img.shape());
  for (size_t i = 0; i < img.numel(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(img.values()[i]));
  }
}

TEST_CASE("matmul against a hand-expanded triple loop") {
  Rng rng(11);
  Tensor a = random_tensor(rng, {2, 3});
  Tensor b = random_tensor(rng, {3, 2});
  Tensor c = matmul(a, b);
  for (size_t i = 0; i < 2; ++i) {
    for (size_t j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < 3; ++k) {
        acc += a.values()[i * 3 + k] * b.values()[k * 2 + j];
      }
      CHECK(c.values()[i * 2 + j] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul shape mismatch names the op and both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       "matmul: incompatible shapes [2x3] and [4x2]",
                       DataError);
}

TEST_CASE("backward of sum is all ones") {
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6})
                 .set_requires_grad(true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of mean(square(x)) matches hand differentiation") {
  // d/dx mean(x^2) = 2x/N; for x = [3,-1], N = 2 the gradient is [3,-1].
  Tensor x = Tensor::from_data({2}, {3.0, -1.0}).set_requires_grad(true);
  backward(mean(square(x)));
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(-1.0));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::zeros({3}).set_requires_grad(true);
  Tensor y = square(x);
  CHECK_THROWS_AS(backward(y), DataError);
}

TEST_CASE("gradient accumulation equals backward of the summed loss") {
  Rng rng(5);
  const Tensor base = random_tensor(rng, {4});

  Tensor xa = base.clone().set_requires_grad(true);
  backward(sum(square(xa)));
  backward(mean(mul(xa, xa.detach())));
  const std::vector<double> separate = xa.grad();

  Tensor xb = base.clone().set_requires_grad(true);
  Tensor combined = add(sum(square(xb)), mean(mul(xb, xb.detach())));
  backward(combined);
  const std::vector<double> joint = xb.grad();

  CHECK(max_rel_err(separate, joint) < 1e-12);
}

TEST_CASE("identical inputs give bitwise-identical outputs and gradients") {
  auto run = [] {
    Rng rng(77);
    Tensor x = random_tensor(rng, {2, 6, 6}).set_requires_grad(true);
    Tensor w = random_tensor(rng, {3, 2, 3, 3});
    Tensor loss = mean(square(conv2d(x, w)));
    backward(loss);
    auto out = x.grad();
    out.push_back(loss.item());
    return out;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

// Every cataloged op: analytic gradient vs central finite differences on
// ten seeds, inputs kept away from non-smooth points.
TEST_CASE("finite-difference sweep over the op catalog") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Tensor w33 = random_tensor(rng, {3, 2, 3, 3});
    const Tensor w11 = random_tensor(rng, {4, 2, 1, 1});
    const Tensor m = random_tensor(rng, {4, 3});
    const Tensor probe2 = random_tensor(rng, {5, 4});
    const Tensor bias = random_tensor(rng, {4});
    const Tensor denom = random_tensor(rng, {5, 4}, 0.5, 1.5, false);

    struct Case {
      const char* name;
      Shape shape;
      std::function<Tensor(const Tensor&)> loss;
    };
    const std::vector<Case> cases = {
        {"matmul", {3, 5}, [&](const Tensor& x) {
           return mean(square(matmul(x, probe2.detach())));
         }},
        {"conv2d_3x3", {2, 5, 5}, [&](const Tensor& x) {
           return mean(square(conv2d(x, w33)));
         }},
        {"conv2d_1x1", {2, 4, 4}, [&](const Tensor& x) {
           return mean(square(conv2d(x, w11)));
         }},
        {"conv2d_weights", {3, 2, 3, 3}, [&](const Tensor& x) {
           Rng r2(seed + 100);
           return mean(square(conv2d(random_tensor(r2, {2, 4, 4}), x)));
         }},
        {"add_broadcast", {5, 4}, [&](const Tensor& x) {
           return mean(square(add(x, bias)));
         }},
        {"mul_broadcast", {5, 4}, [&](const Tensor& x) {
           return mean(square(mul(x, bias)));
         }},
        {"div", {5, 4}, [&](const Tensor& x) {
           return mean(square(div(x, denom)));
         }},
        {"div_denominator", {5, 4}, [&](const Tensor& x) {
           // keep the denominator away from zero
           Tensor shifted = add(square(x), Tensor::full({5, 4}, 0.5));
           return mean(square(div(probe2.detach(), shifted)));
         }},
        {"scale", {7}, [&](const Tensor& x) {
           return sum(square(scale(x, -1.7)));
         }},
        {"leaky_relu", {9}, [&](const Tensor& x) {
           return sum(square(leaky_relu(x, 0.2)));
         }},
        {"bilinear_resize", {2, 3, 3}, [&](const Tensor& x) {
           return mean(square(bilinear_resize(x, 5, 7)));
         }},
        {"nearest_upsample", {2, 3, 3}, [&](const Tensor& x) {
           return mean(square(nearest_upsample2(x)));
         }},
        {"average_pool", {2, 5, 5}, [&](const Tensor& x) {
           return mean(square(average_pool(x, 2)));
         }},
        {"global_average_pool", {3, 4, 4}, [&](const Tensor& x) {
           return sum(square(global_average_pool(x)));
         }},
        {"sum", {6}, [&](const Tensor& x) { return sum(x); }},
        {"mean", {6}, [&](const Tensor& x) { return mean(x); }},
        {"square", {6}, [&](const Tensor& x) { return mean(square(x)); }},
        {"sqrt_eps", {6}, [&](const Tensor& x) {
           return sum(sqrt_eps(square(x), 1e-8));
         }},
        {"l2_norm", {6}, [&](const Tensor& x) { return l2_norm(x); }},
        {"concat", {2, 3}, [&](const Tensor& x) {
           return mean(square(concat({x, square(x)}, 1)));
         }},
        {"pixel_norm_vec", {8}, [&](const Tensor& x) {
           return mean(square(pixel_norm(x)));
         }},
        {"pixel_norm_map", {4, 3, 3}, [&](const Tensor& x) {
           return mean(square(pixel_norm(x)));
         }},
        {"tanh", {6}, [&](const Tensor& x) {
           return mean(square(t2f::tanh(x)));
         }},
        {"reshape", {6}, [&](const Tensor& x) {
           return mean(square(reshape(x, {2, 3})));
         }},
    };
    for (const auto& c : cases) {
      Rng in_rng(seed * 1000 + 17);
      Tensor x0 = random_tensor(in_rng, c.shape);
      const double err = check_gradient(c.loss, x0);
      INFO("op = ", c.name, ", seed = ", seed);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("composite graph gradient matches finite differences") {
  Rng rng(123);
  const Tensor w = random_tensor(rng, {4, 3, 3, 3});
  const Tensor target = random_tensor(rng, {4, 6, 6});
  auto loss = [&](const Tensor& x) {
    Tensor h = leaky_relu(conv2d(nearest_upsample2(x), w), 0.2);
    Tensor diff = sub(h, target);
    return add(mean(square(diff)), scale(l2_norm(global_average_pool(h)), 0.3));
  };
  Tensor x0 = random_tensor(rng, {3, 3, 3});
  CHECK(check_gradient(loss, x0) < 1e-4);
}

TEST_CASE("forward ops stay finite on finite inputs") {
  Rng rng(9);
  Tensor x = random_tensor(rng, {3, 8, 8}, 0.0, 3.0);
  CHECK(all_finite(pixel_norm(x)));
  CHECK(all_finite(sqrt_eps(square(x), 1e-8)));
  CHECK(all_finite(bilinear_resize(x, 13, 5)));
  CHECK(all_finite(t2f::tanh(scale(x, 50.0))));
}

TEST_CASE("pixel_norm yields unit RMS per spatial vector") {
  // eps = 1e-8 biases the RMS by eps/(2*rms^2); inputs with RMS >= 2 keep
  // that inside 1e-9.
  Rng rng(21);
  Tensor x = random_tensor(rng, {16, 3, 3}, 2.0, 4.0);
  Tensor y = pixel_norm(x);
  const size_t c = 16, s = 9;
  for (size_t p = 0; p < s; ++p) {
    double m = 0.0;
    for (size_t ci = 0; ci < c; ++ci) {
      m += y.values()[ci * s + p] * y.values()[ci * s + p];
    }
    CHECK(std::abs(std::sqrt(m / double(c)) - 1.0) < 1e-9);
  }
}

TEST_CASE("pixel_norm is scale invariant") {
  Rng rng(22);
  Tensor x = random_tensor(rng, {8}, 1.0, 2.0);
  Tensor a = pixel_norm(x);
  Tensor b = pixel_norm(scale(x, 37.5));
  CHECK(max_rel_err(a.values(), b.values()) < 1e-7);
}

TEST_CASE("average_pool floors odd extents") {
  // 5x5 window 2 -> 2x2, trailing row and column dropped.
  std::vector<double> v(25);
  for (size_t i = 0; i < 25; ++i) v[i] = double(i);
  Tensor x = Tensor::from_data({1, 5, 5}, v);
  Tensor y = average_pool(x, 2);
  REQUIRE(y.shape() == Shape{1, 2, 2});
  CHECK(y.values()[0] == doctest::Approx((0 + 1 + 5 + 6) / 4.0));
  CHECK(y.values()[3] == doctest::Approx((12 + 13 + 17 + 18) / 4.0));
}

TEST_CASE("bilinear_resize against brute-force interpolation on a ramp") {
  // 2x2 ramp to 4x4, half-pixel convention, computed directly here.
  Tensor x = Tensor::from_data({1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  Tensor y = bilinear_resize(x, 4, 4);
  auto sample = [&](double sy, double sx) {
    sy = std::min(std::max(sy, 0.0), 1.0);
    sx = std::min(std::max(sx, 0.0), 1.0);
    const size_t y0 = size_t(sy), x0 = size_t(sx);
    const size_t y1 = std::min<size_t>(y0 + 1, 1), x1 = std::min<size_t>(x0 + 1, 1);
    const double fy = sy - double(y0), fx = sx - double(x0);
    const auto& v = x.values();
    const double top = v[y0 * 2 + x0] * (1 - fx) + v[y0 * 2 + x1] * fx;
    const double bot = v[y1 * 2 + x0] * (1 - fx) + v[y1 * 2 + x1] * fx;
    return top * (1 - fy) + bot * fy;
  };
  for (size_t oy = 0; oy < 4; ++oy) {
    for (size_t ox = 0; ox < 4; ++ox) {
      const double expected =
          sample((oy + 0.5) * 0.5 - 0.5, (ox + 0.5) * 0.5 - 0.5);
      CHECK(y.values()[oy * 4 + ox] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("concat shapes and ordering") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 1}, {9, 8});
  Tensor c = concat({a, b}, 1);
  REQUIRE(c.shape() == Shape{2, 3});
  CHECK(c.values() == std::vector<double>{1, 2, 9, 3, 4, 8});
  CHECK_THROWS_AS(concat({a, Tensor::zeros({3, 1})}, 1), DataError);
}

TEST_CASE("grad_check on sum reports zero error") {
  Rng rng(31);
  auto report = grad_check([](const Tensor& x) { return sum(x); },
                           random_tensor(rng, {5}));
  CHECK(report.passed);
  CHECK(report.max_rel_err < 1e-9);
  CHECK(report.skipped == 0);
}

TEST_CASE("grad_check skips the leaky_relu kink") {
  Tensor x = Tensor::from_data({3}, {1.0, 0.0, -1.0});
  auto report = grad_check(
      [](const Tensor& t) { return sum(leaky_relu(t, 0.2)); }, x);
  CHECK(report.skipped == 1);  // the coordinate sitting exactly on the kink
  CHECK(report.checked == 2);
  CHECK(report.passed);
}

TEST_CASE("non-leaf tensors reject in-place mutation") {
  Tensor x = Tensor::zeros({2}).set_requires_grad(true);
  Tensor y = square(x);
  CHECK_THROWS_AS(y.mutable_values(), DataError);
}

TEST_CASE("sqrt_eps rejects arguments below -eps") {
  Tensor x = Tensor::from_data({1}, {-1.0});
  CHECK_THROWS_AS(sqrt_eps(x, 1e-8), NumericError);
}
