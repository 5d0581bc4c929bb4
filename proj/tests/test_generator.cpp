#include "t2f/generator.hpp"

#include <cmath>

#include "doctest.h"
#include "t2f/errors.hpp"
#include "t2f/rng.hpp"
#include "testutil.hpp"

using namespace t2f;
using test::max_rel_err;
using test::random_tensor;

namespace {

LatentCode random_latent(Rng& rng, LatentSpace space) {
  return {Tensor::from_data({kLatentDim}, rng.normal_vec(kLatentDim)), space};
}

}  // namespace

TEST_CASE("seed 7 twice yields bitwise-identical parameters") {
  const Generator a = gen_init(7, 16);
  const Generator b = gen_init(7, 16);
  CHECK(a.param_hash() == b.param_hash());
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].values() == pb[i].values());
  }
  CHECK(gen_init(8, 16).param_hash() != a.param_hash());
}

TEST_CASE("resolution 32 builds four synthesis blocks") {
  const Generator g = gen_init(1, 32);
  REQUIRE(g.blocks.size() == 4);
  CHECK(g.blocks[0].res == 4);
  CHECK(g.blocks[1].res == 8);
  CHECK(g.blocks[2].res == 16);
  CHECK(g.blocks[3].res == 32);
  // c0 = 64 halving with floor 16
  CHECK(g.blocks[0].out_ch == 64);
  CHECK(g.blocks[1].out_ch == 32);
  CHECK(g.blocks[2].out_ch == 16);
  CHECK(g.blocks[3].out_ch == 16);
}

TEST_CASE("unsupported resolutions are rejected") {
  CHECK_THROWS_AS(gen_init(1, 7), DataError);
  CHECK_THROWS_AS(gen_init(1, 128), DataError);
  CHECK_THROWS_AS(gen_init(1, 0), DataError);
}

TEST_CASE("mapping is invariant to positive scaling of z") {
  const Generator g = gen_init(3, 8);
  Rng rng(12);
  const LatentCode z = random_latent(rng, LatentSpace::Z);
  const LatentCode w1 = mapping_forward(g, z);
  LatentCode z2{scale(z.values, 4.2).detach(), LatentSpace::Z};
  const LatentCode w2 = mapping_forward(g, z2);
  CHECK(w1.space == LatentSpace::W);
  CHECK(w1.values.numel() == 512);
  CHECK(max_rel_err(w1.values.values(), w2.values.values()) < 1e-7);
}

TEST_CASE("mapping rejects W-tagged input, synthesis rejects Z-tagged") {
  const Generator g = gen_init(3, 8);
  Rng rng(13);
  CHECK_THROWS_AS(mapping_forward(g, random_latent(rng, LatentSpace::W)),
                  DataError);
  CHECK_THROWS_AS(synthesize(g, random_latent(rng, LatentSpace::Z)),
                  DataError);
}

TEST_CASE("mapping determinism") {
  const Generator g = gen_init(5, 8);
  Rng rng(14);
  const LatentCode z = random_latent(rng, LatentSpace::Z);
  CHECK(mapping_forward(g, z).values.values() ==
        mapping_forward(g, z).values.values());
}

TEST_CASE("demodulation: all-ones style on unit-norm weights is the identity") {
  Rng rng(21);
  Tensor w = random_tensor(rng, {4, 3, 3, 3});
  // normalize each output channel
  auto& wv = w.mutable_values();
  for (size_t o = 0; o < 4; ++o) {
    double s = 0;
    for (size_t i = 0; i < 27; ++i) s += wv[o * 27 + i] * wv[o * 27 + i];
    s = std::sqrt(s);
    for (size_t i = 0; i < 27; ++i) wv[o * 27 + i] /= s;
  }
  const Tensor ones = Tensor::full({3}, 1.0);
  const Tensor demod = demodulated_weights(w, ones, true);
  CHECK(max_rel_err(demod.values(), w.values()) < 1e-6);
}

TEST_CASE("demodulated weights are invariant to uniform style scaling") {
  Rng rng(22);
  const Tensor w = random_tensor(rng, {4, 3, 3, 3});
  const Tensor style = random_tensor(rng, {3}, 0.5, 1.5, false);
  const Tensor a = demodulated_weights(w, style, true);
  const Tensor b = demodulated_weights(w, scale(style, 13.7).detach(), true);
  CHECK(max_rel_err(a.values(), b.values()) < 1e-6);
}

TEST_CASE("demodulated per-output-channel squared sums are 1") {
  Rng rng(23);
  const Tensor w = random_tensor(rng, {5, 4, 3, 3});
  const Tensor style = random_tensor(rng, {4}, 0.3, 2.0, false);
  const Tensor demod = demodulated_weights(w, style, true);
  for (size_t o = 0; o < 5; ++o) {
    double s = 0;
    for (size_t i = 0; i < 36; ++i) {
      s += demod.values()[o * 36 + i] * demod.values()[o * 36 + i];
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("modulated conv rejects zero-length and mismatched styles") {
  Rng rng(24);
  const Tensor w = random_tensor(rng, {4, 3, 3, 3});
  const Tensor x = random_tensor(rng, {3, 4, 4});
  CHECK_THROWS_AS(modulated_conv2d(w, Tensor::zeros({0}), x, true), DataError);
  CHECK_THROWS_AS(modulated_conv2d(w, Tensor::zeros({5}), x, true), DataError);
}

TEST_CASE("synthesis is deterministic with the contracted shape and range") {
  const Generator g = gen_init(9, 16);
  Rng rng(31);
  const LatentCode w = random_latent(rng, LatentSpace::W);
  const Tensor img1 = synthesize(g, w);
  const Tensor img2 = synthesize(g, w);
  REQUIRE(img1.shape() == Shape{3, 16, 16});
  CHECK(img1.values() == img2.values());
  for (double v : img1.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("synthesis gradient w.r.t. w matches finite differences at 8x8") {
  const Generator g = gen_init(11, 8);
  Rng rng(32);
  const Tensor w0 = Tensor::from_data({kLatentDim}, rng.normal_vec(kLatentDim));
  auto loss = [&](const Tensor& w) {
    return mean(synthesize(g, {w, LatentSpace::W}));
  };
  CHECK(test::check_gradient(loss, w0) < 1e-4);
}

TEST_CASE("generator parameters stay frozen through synthesis and backward") {
  const Generator g = gen_init(13, 8);
  const uint64_t before = g.param_hash();
  Rng rng(33);
  Tensor w = Tensor::from_data({kLatentDim}, rng.normal_vec(kLatentDim))
                 .set_requires_grad(true);
  backward(mean(square(synthesize(g, {w, LatentSpace::W}))));
  CHECK(g.param_hash() == before);
  for (const auto& p : g.parameters()) CHECK_FALSE(p.has_grad());
  // but gradients did flow into w
  bool any = false;
  for (double v : w.grad()) any |= (v != 0.0);
  CHECK(any);
}

TEST_CASE("distinct w codes give distinct images over 100 seeded pairs") {
  const Generator g = gen_init(17, 8);
  Rng rng(34);
  for (int i = 0; i < 100; ++i) {
    const LatentCode wa = random_latent(rng, LatentSpace::W);
    LatentCode wb = random_latent(rng, LatentSpace::W);
    double dist = 0;
    for (size_t k = 0; k < kLatentDim; ++k) {
      const double d = wa.values.values()[k] - wb.values.values()[k];
      dist += d * d;
    }
    REQUIRE(std::sqrt(dist) > 0.1);
    const Tensor ia = synthesize(g, wa);
    const Tensor ib = synthesize(g, wb);
    double mse = 0;
    for (size_t k = 0; k < ia.numel(); ++k) {
      const double d = ia.values()[k] - ib.values()[k];
      mse += d * d;
    }
    CHECK(mse / double(ia.numel()) > 0.0);
  }
}

TEST_CASE("pixel statistics over 256 random w codes") {
  const Generator g = gen_init(19, 8);
  Rng rng(35);
  double mean_acc = 0.0;
  double min_v = 1e9, max_v = -1e9;
  for (int i = 0; i < 256; ++i) {
    const Tensor img = synthesize(g, random_latent(rng, LatentSpace::W));
    for (double v : img.values()) {
      mean_acc += v;
      min_v = std::min(min_v, v);
      max_v = std::max(max_v, v);
    }
  }
  const double mean = mean_acc / (256.0 * 3 * 8 * 8);
  INFO("mean = ", mean, ", min = ", min_v, ", max = ", max_v);
  CHECK(mean > -0.5);
  CHECK(mean < 0.5);
  CHECK(max_v - min_v > 0.1);  // not constant
}

TEST_CASE("generate_image dispatches on the latent tag") {
  const Generator g = gen_init(23, 8);
  Rng rng(36);
  const LatentCode z = random_latent(rng, LatentSpace::Z);
  const Tensor via_z = generate_image(g, z);
  const Tensor direct = synthesize(g, mapping_forward(g, z));
  CHECK(via_z.values() == direct.values());

  const LatentCode w = random_latent(rng, LatentSpace::W);
  CHECK(generate_image(g, w).values() == synthesize(g, w).values());
}
