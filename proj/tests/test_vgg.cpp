#include "t2f/vgg.hpp"

#include <cmath>

#include "doctest.h"
#include "t2f/errors.hpp"
#include "t2f/rng.hpp"
#include "testutil.hpp"

using namespace t2f;
using test::random_tensor;

TEST_CASE("widths follow the canonical table divided by the divisor") {
  const FeatureExtractor fe8 = vgg_init(1, 8);
  CHECK(fe8.widths ==
        std::vector<size_t>{8, 8, 16, 16, 32, 32, 32, 64, 64, 64, 64, 64, 64});
  const FeatureExtractor fe1 = vgg_init(1, 1);
  CHECK(fe1.widths == std::vector<size_t>{64, 64, 128, 128, 256, 256, 256, 512,
                                          512, 512, 512, 512, 512});
  CHECK_THROWS_AS(vgg_init(1, 0), DataError);
}

TEST_CASE("conv1_1 map keeps the input spatial size") {
  const FeatureExtractor fe = vgg_init(2);
  Rng rng(3);
  const Tensor img = random_tensor(rng, {3, 16, 16});
  const FeatureMaps maps = extract_features(fe, img, {"conv1_1"});
  REQUIRE(maps.size() == 1);
  CHECK(maps[0].first == "conv1_1");
  CHECK(maps[0].second.shape() == Shape{8, 16, 16});
}

TEST_CASE("zero image with zero biases gives all-zero maps") {
  const FeatureExtractor fe = vgg_init(4);
  const Tensor img = Tensor::zeros({3, 8, 8});
  for (const auto& [name, m] : extract_features(
           fe, img, {"conv1_1", "conv3_3", "conv5_3"})) {
    for (double v : m.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("conv3_3 on a 32x32 image has spatial side 8") {
  // Two poolings: 32 -> 16 -> 8.
  const FeatureExtractor fe = vgg_init(5);
  Rng rng(6);
  const Tensor img = random_tensor(rng, {3, 32, 32});
  const FeatureMaps maps = extract_features(fe, img, {"conv3_3"});
  CHECK(maps[0].second.shape() == Shape{32, 8, 8});
}

TEST_CASE("deep maps on an 8x8 input bottom out at 1x1") {
  const FeatureExtractor fe = vgg_init(5);
  Rng rng(7);
  const Tensor img = random_tensor(rng, {3, 8, 8});
  const FeatureMaps maps = extract_features(fe, img, {"conv4_3", "conv5_3"});
  CHECK(maps[0].second.shape() == Shape{64, 1, 1});
  CHECK(maps[1].second.shape() == Shape{64, 1, 1});
}

TEST_CASE("unknown layer names list the canonical set") {
  const FeatureExtractor fe = vgg_init(5);
  const Tensor img = Tensor::zeros({3, 8, 8});
  CHECK_THROWS_WITH_AS(extract_features(fe, img, {"conv6_1"}),
                       doctest::Contains("conv5_3"), DataError);
  CHECK_THROWS_AS(LayerSet::from_string("conv1_1,conv9_9"), DataError);
}

TEST_CASE("hypercolumn identity, additivity and ordering") {
  const FeatureExtractor fe = vgg_init(8);
  Rng rng(9);
  const Tensor img = random_tensor(rng, {3, 16, 16});

  SUBCASE("single map already at target equals the map") {
    const FeatureMaps maps = extract_features(fe, img, {"conv1_1"});
    const Tensor hc = hypercolumn(maps, 16, 16);
    CHECK(hc.values() == maps[0].second.values());
  }

  SUBCASE("channel counts add up") {
    FeatureMaps maps;
    maps.emplace_back("a", random_tensor(rng, {4, 8, 8}));
    maps.emplace_back("b", random_tensor(rng, {8, 4, 4}));
    const Tensor hc = hypercolumn(maps, 8, 8);
    CHECK(hc.shape() == Shape{12, 8, 8});
  }

  CHECK_THROWS_AS(hypercolumn({}, 4, 4), DataError);
}

TEST_CASE("perceptual loss of identical images is zero, otherwise >= 0") {
  const FeatureExtractor fe = vgg_init(10);
  Rng rng(11);
  const Tensor a = random_tensor(rng, {3, 16, 16});
  const Tensor b = random_tensor(rng, {3, 16, 16});
  const LayerSet layers{{"conv2_2", "conv4_3"}, false};
  CHECK(perceptual_loss(fe, a, a, layers).item() == 0.0);
  CHECK(perceptual_loss(fe, a, b, layers).item() >= 0.0);

  const LayerSet hyper{{"conv2_2", "conv3_3"}, true};
  CHECK(perceptual_loss(fe, a, a, hyper).item() == 0.0);
  CHECK(perceptual_loss(fe, a, b, hyper).item() >= 0.0);
}

TEST_CASE("perceptual loss value is symmetric in its image arguments") {
  const FeatureExtractor fe = vgg_init(12);
  Rng rng(13);
  const Tensor a = random_tensor(rng, {3, 16, 16});
  const Tensor b = random_tensor(rng, {3, 16, 16});
  for (const LayerSet& layers :
       {LayerSet{{"conv1_2", "conv3_3"}, false},
        LayerSet{{"conv3_2", "conv4_2"}, true}}) {
    const double ab = perceptual_loss(fe, a, b, layers).item();
    const double ba = perceptual_loss(fe, b, a, layers).item();
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  }
}

TEST_CASE("perceptual loss rejects shape mismatches") {
  const FeatureExtractor fe = vgg_init(14);
  CHECK_THROWS_AS(perceptual_loss(fe, Tensor::zeros({3, 16, 16}),
                                  Tensor::zeros({3, 8, 8}),
                                  LayerSet{{"conv1_1"}, false}),
                  DataError);
}

TEST_CASE("perceptual loss gradient at 8x8 with the experiment-01 layers") {
  const FeatureExtractor fe = vgg_init(15);
  Rng rng(16);
  const Tensor real = random_tensor(rng, {3, 8, 8});
  const auto [space, layers] = experiment_layerset(1);
  auto loss = [&](const Tensor& img) {
    return perceptual_loss(fe, img, real, layers);
  };
  const Tensor img0 = random_tensor(rng, {3, 8, 8});
  CHECK(test::check_gradient(loss, img0) < 1e-4);
}

TEST_CASE("hypercolumn loss gradient") {
  const FeatureExtractor fe = vgg_init(17);
  Rng rng(18);
  const Tensor real = random_tensor(rng, {3, 8, 8});
  const auto [space, layers] = experiment_layerset(3);
  auto loss = [&](const Tensor& img) {
    return perceptual_loss(fe, img, real, layers);
  };
  CHECK(test::check_gradient(loss, random_tensor(rng, {3, 8, 8})) < 1e-4);
}

TEST_CASE("loss grows monotonically along a fixed perturbation direction") {
  const FeatureExtractor fe = vgg_init(19);
  Rng rng(20);
  const Tensor img = random_tensor(rng, {3, 16, 16}, 0.1, 0.6);
  const Tensor delta = random_tensor(rng, {3, 16, 16}, 0.05, 0.1);
  const LayerSet layers{{"conv2_2", "conv4_3"}, false};
  double prev = 0.0;
  for (int k = 1; k <= 10; ++k) {
    const double s = 0.08 * k;
    const Tensor probe = add(img, scale(delta, s)).detach();
    const double loss = perceptual_loss(fe, probe, img, layers).item();
    INFO("scale index ", k);
    CHECK(loss > prev);
    prev = loss;
  }
}

TEST_CASE("extractor stays frozen across loss evaluations") {
  const FeatureExtractor fe = vgg_init(21);
  const uint64_t before = fe.param_hash();
  Rng rng(22);
  Tensor img = random_tensor(rng, {3, 8, 8}).set_requires_grad(true);
  backward(perceptual_loss(fe, img, random_tensor(rng, {3, 8, 8}),
                           LayerSet{{"conv5_3"}, false}));
  CHECK(fe.param_hash() == before);
}

TEST_CASE("experiment table matches the six configurations") {
  using LS = LatentSpace;
  const struct {
    int id;
    LS space;
    std::vector<std::string> layers;
    bool hyper;
  } expected[] = {
      {1, LS::Z, {"conv4_3", "conv5_3"}, false},
      {2, LS::Z, {"conv3_2", "conv4_2", "conv5_2"}, false},
      {3, LS::Z, {"conv3_2", "conv4_2", "conv5_2"}, true},
      {4, LS::W, {"conv4_3", "conv5_3"}, false},
      {5, LS::W, {"conv3_3", "conv4_3", "conv5_3"}, false},
      {6, LS::W, {"conv1_2", "conv2_2", "conv3_2", "conv4_3"}, false},
  };
  for (const auto& e : expected) {
    const auto [space, layers] = experiment_layerset(e.id);
    CHECK(space == e.space);
    CHECK(layers.layers == e.layers);
    CHECK(layers.hypercolumn == e.hyper);
  }
  // 01 and 04 share layers across different spaces.
  CHECK(experiment_layerset(1).second.layers ==
        experiment_layerset(4).second.layers);
  CHECK(experiment_layerset(1).first != experiment_layerset(4).first);
  CHECK_THROWS_AS(experiment_layerset(0), UsageError);
  CHECK_THROWS_AS(experiment_layerset(7), UsageError);
}
