#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "t2f/tensor.hpp"
#include "t2f/text2latent.hpp"

namespace t2f {

inline constexpr size_t kVggLayerCount = 13;
const std::array<std::string_view, kVggLayerCount>& vgg_layer_names();
size_t vgg_layer_index(std::string_view name);  // throws listing valid names

/// Ordered selection of feature layers for the loss.
struct LayerSet {
  std::vector<std::string> layers;
  bool hypercolumn = false;

  std::string joined() const;  // "conv3_3,conv4_3,conv5_3"
  static LayerSet from_string(const std::string& csv, bool hypercolumn = false);
};

/// VGG16-topology feature extractor: the 13 conv layers in canonical order,
/// relu after each, 2x2 average pooling between stages, channel widths
/// divided by `divisor`. Frozen after creation.
struct FeatureExtractor {
  size_t divisor = 8;
  std::vector<size_t> widths;   // 13 output widths
  std::vector<Tensor> weights;  // [out,in,3,3]
  std::vector<Tensor> biases;   // [out]

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  uint64_t param_hash() const;
};

FeatureExtractor vgg_init(uint64_t seed, size_t width_divisor = 8);

/// Feature maps keyed by layer name, in the requested order.
using FeatureMaps = std::vector<std::pair<std::string, Tensor>>;

/// Post-activation maps for the requested layers. Pooling stops once the
/// spatial side would drop below 1. Input must be square with side >= 8.
FeatureMaps extract_features(const FeatureExtractor& fe, const Tensor& img,
                             const std::vector<std::string>& layers);

/// Bilinearly resizes every map to the target size and concatenates along
/// channels, in map order.
Tensor hypercolumn(const FeatureMaps& maps, size_t target_h, size_t target_w);

/// Sum over layers of mean squared feature difference, equal layer weights.
/// In hypercolumn mode a single term over the assembled hypercolumn (target
/// = largest selected map). Differentiable w.r.t. `generated`.
Tensor perceptual_loss(const FeatureExtractor& fe, const Tensor& generated,
                       const Tensor& real, const LayerSet& layers);

/// Same loss against precomputed reference maps (cache path for training).
Tensor perceptual_loss_vs_maps(const FeatureExtractor& fe,
                               const Tensor& generated,
                               const FeatureMaps& real_maps,
                               const LayerSet& layers);

/// The experiment matrix rows 1..6: latent space and VGG layer selection.
std::pair<LatentSpace, LayerSet> experiment_layerset(int id);

}  // namespace t2f
