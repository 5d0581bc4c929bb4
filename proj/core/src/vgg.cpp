#include "t2f/vgg.hpp"

#include <algorithm>
#include <cmath>

#include "t2f/errors.hpp"
#include "t2f/rng.hpp"

namespace t2f {

namespace {

constexpr std::array<std::string_view, kVggLayerCount> kLayerNames = {
    "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2",
    "conv3_3", "conv4_1", "conv4_2", "conv4_3", "conv5_1", "conv5_2",
    "conv5_3"};

constexpr std::array<size_t, kVggLayerCount> kCanonicalWidths = {
    64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};

// Average pooling follows these layers (ends of stages 1-4).
bool stage_end(size_t layer) {
  return layer == 1 || layer == 3 || layer == 6 || layer == 9;
}

}  // namespace

const std::array<std::string_view, kVggLayerCount>& vgg_layer_names() {
  return kLayerNames;
}

size_t vgg_layer_index(std::string_view name) {
  for (size_t i = 0; i < kVggLayerCount; ++i) {
    if (kLayerNames[i] == name) return i;
  }
  std::string msg = "unknown VGG layer '" + std::string(name) + "'; valid: ";
  for (size_t i = 0; i < kVggLayerCount; ++i) {
    if (i) msg += ", ";
    msg += kLayerNames[i];
  }
  throw DataError(msg);
}

std::string LayerSet::joined() const {
  std::string out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ',';
    out += layers[i];
  }
  return out;
}

LayerSet LayerSet::from_string(const std::string& csv, bool hc) {
  LayerSet set;
  set.hypercolumn = hc;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    std::string name = csv.substr(pos, comma - pos);
    // trim spaces
    const size_t a = name.find_first_not_of(" \t");
    const size_t b = name.find_last_not_of(" \t");
    if (a != std::string::npos) {
      name = name.substr(a, b - a + 1);
      vgg_layer_index(name);
      set.layers.push_back(std::move(name));
    }
    pos = comma + 1;
  }
  if (set.layers.empty()) throw DataError("empty layer set");
  return set;
}

std::vector<Tensor> FeatureExtractor::parameters() const {
  std::vector<Tensor> out;
  for (size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> FeatureExtractor::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < weights.size(); ++i) {
    const std::string p = "vgg/" + std::string(kLayerNames[i]);
    out.emplace_back(p + "/weight", weights[i]);
    out.emplace_back(p + "/bias", biases[i]);
  }
  return out;
}

uint64_t FeatureExtractor::param_hash() const {
  return hash_tensors(parameters());
}

FeatureExtractor vgg_init(uint64_t seed, size_t width_divisor) {
  if (width_divisor == 0) {
    throw DataError("vgg_init: width divisor must be positive");
  }
  FeatureExtractor fe;
  fe.divisor = width_divisor;
  size_t in_ch = 3;
  for (size_t i = 0; i < kVggLayerCount; ++i) {
    const size_t out_ch = std::max<size_t>(kCanonicalWidths[i] / width_divisor,
                                           1);
    fe.widths.push_back(out_ch);
    Rng rng(substream(seed, i));
    const double stddev = std::sqrt(2.0 / double(in_ch * 9));
    fe.weights.push_back(Tensor::from_data(
        {out_ch, in_ch, 3, 3}, rng.normal_vec(out_ch * in_ch * 9, stddev)));
    fe.biases.push_back(Tensor::zeros({out_ch}));
    in_ch = out_ch;
  }
  return fe;
}

FeatureMaps extract_features(const FeatureExtractor& fe, const Tensor& img,
                             const std::vector<std::string>& layers) {
  if (img.rank() != 3 || img.shape()[0] != 3) {
    throw DataError("extract_features: expected [3,H,W] image, got " +
                    shape_str(img.shape()));
  }
  if (img.shape()[1] != img.shape()[2] || img.shape()[1] < 8) {
    throw DataError("extract_features: image must be square with side >= 8");
  }
  if (layers.empty()) throw DataError("extract_features: empty layer set");
  size_t deepest = 0;
  for (const auto& name : layers) {
    deepest = std::max(deepest, vgg_layer_index(name));
  }
  std::vector<Tensor> by_index(kVggLayerCount);
  Tensor x = img;
  for (size_t li = 0; li <= deepest; ++li) {
    x = conv2d(x, fe.weights[li]);
    x = add(x, reshape(fe.biases[li], {fe.widths[li], 1, 1}));
    x = leaky_relu(x, 0.0);  // relu
    by_index[li] = x;
    if (stage_end(li) && li < deepest && x.shape()[1] >= 2) {
      x = average_pool(x, 2);
    }
  }
  FeatureMaps maps;
  maps.reserve(layers.size());
  for (const auto& name : layers) {
    maps.emplace_back(name, by_index[vgg_layer_index(name)]);
  }
  return maps;
}

Tensor hypercolumn(const FeatureMaps& maps, size_t target_h, size_t target_w) {
  if (maps.empty()) throw DataError("hypercolumn: no feature maps");
  std::vector<Tensor> resized;
  resized.reserve(maps.size());
  for (const auto& [name, m] : maps) {
    if (m.shape()[1] == target_h && m.shape()[2] == target_w) {
      resized.push_back(m);
    } else {
      resized.push_back(bilinear_resize(m, target_h, target_w));
    }
  }
  return resized.size() == 1 ? resized[0] : concat(resized, 0);
}

Tensor perceptual_loss_vs_maps(const FeatureExtractor& fe,
                               const Tensor& generated,
                               const FeatureMaps& real_maps,
                               const LayerSet& layers) {
  std::vector<std::string> names = layers.layers;
  FeatureMaps gen_maps = extract_features(fe, generated, names);
  if (gen_maps.size() != real_maps.size()) {
    throw DataError("perceptual_loss: layer count mismatch");
  }
  for (size_t i = 0; i < gen_maps.size(); ++i) {
    if (gen_maps[i].second.shape() != real_maps[i].second.shape()) {
      throw DataError("perceptual_loss: feature shape mismatch at " +
                      gen_maps[i].first + ": " +
                      shape_str(gen_maps[i].second.shape()) + " vs " +
                      shape_str(real_maps[i].second.shape()));
    }
  }
  if (layers.hypercolumn) {
    size_t th = 0, tw = 0;
    for (const auto& [name, m] : gen_maps) {
      th = std::max(th, m.shape()[1]);
      tw = std::max(tw, m.shape()[2]);
    }
    Tensor hg = hypercolumn(gen_maps, th, tw);
    Tensor hr = hypercolumn(real_maps, th, tw);
    return mean(square(sub(hg, hr)));
  }
  Tensor loss;
  for (size_t i = 0; i < gen_maps.size(); ++i) {
    Tensor term = mean(square(sub(gen_maps[i].second, real_maps[i].second)));
    loss = i == 0 ? term : add(loss, term);
  }
  return loss;
}

Tensor perceptual_loss(const FeatureExtractor& fe, const Tensor& generated,
                       const Tensor& real, const LayerSet& layers) {
  if (generated.shape() != real.shape()) {
    throw DataError("perceptual_loss: image shapes differ: " +
                    shape_str(generated.shape()) + " vs " +
                    shape_str(real.shape()));
  }
  FeatureMaps real_maps = extract_features(fe, real, layers.layers);
  return perceptual_loss_vs_maps(fe, generated, real_maps, layers);
}

std::pair<LatentSpace, LayerSet> experiment_layerset(int id) {
  switch (id) {
    case 1:
      return {LatentSpace::Z, LayerSet{{"conv4_3", "conv5_3"}, false}};
    case 2:
      return {LatentSpace::Z,
              LayerSet{{"conv3_2", "conv4_2", "conv5_2"}, false}};
    case 3:
      return {LatentSpace::Z,
              LayerSet{{"conv3_2", "conv4_2", "conv5_2"}, true}};
    case 4:
      return {LatentSpace::W, LayerSet{{"conv4_3", "conv5_3"}, false}};
    case 5:
      return {LatentSpace::W,
              LayerSet{{"conv3_3", "conv4_3", "conv5_3"}, false}};
    case 6:
      return {LatentSpace::W,
              LayerSet{{"conv1_2", "conv2_2", "conv3_2", "conv4_3"}, false}};
    default:
      throw UsageError("experiment id " + std::to_string(id) +
                       " out of range [1,6]");
  }
}

}  // namespace t2f
