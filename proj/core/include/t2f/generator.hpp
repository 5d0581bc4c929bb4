#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "t2f/tensor.hpp"
#include "t2f/text2latent.hpp"

namespace t2f {

/// One synthesis resolution: two modulated 3x3 convs with per-conv style
/// affines, plus a (non-demodulated) 1x1 toRGB with its own affine.
struct GenBlock {
  size_t res = 0;
  size_t in_ch = 0, out_ch = 0;
  Tensor conv1_w, conv1_b;      // [out,in,3,3], [out]
  Tensor aff1_w, aff1_b;        // [512,in], [in]
  Tensor conv2_w, conv2_b;      // [out,out,3,3], [out]
  Tensor aff2_w, aff2_b;        // [512,out], [out]
  Tensor rgb_w, rgb_b;          // [3,out,1,1], [3]
  Tensor rgb_aff_w, rgb_aff_b;  // [512,out], [out]
};

/// Frozen miniature style-based generator: 8-layer mapping network Z -> W
/// and a synthesis network with weight demodulation and upsampled toRGB
/// skips. Parameters are immutable after gen_init; noise injection is
/// omitted so synthesis is deterministic.
struct Generator {
  size_t resolution = 0;
  size_t c0 = 64;
  std::vector<MlpLayer> mapping;  // 8 x (512 -> 512), leaky_relu(0.2)
  Tensor const_input;             // [c0,4,4]
  std::vector<GenBlock> blocks;   // 4x4 up to resolution

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  uint64_t param_hash() const;
};

/// Seeded deterministic init. resolution must be one of 8/16/32/64.
Generator gen_init(uint64_t seed, size_t resolution, size_t c0 = 64);

/// pixel_norm(z) through the mapping network; output tagged W.
LatentCode mapping_forward(const Generator& g, const LatentCode& z);

/// Style-scaled conv weights w'[o][i][k] = style[i] * w[o][i][k], each output
/// channel rescaled to unit norm (sqrt(sum w'^2 + eps)) when demodulate is
/// set. Differentiable w.r.t. style.
Tensor demodulated_weights(const Tensor& weights, const Tensor& style,
                           bool demodulate, double eps = 1e-8);

/// Convolution with the style-modulated (and optionally demodulated)
/// weights. Differentiable w.r.t. x and style.
Tensor modulated_conv2d(const Tensor& weights, const Tensor& style,
                        const Tensor& x, bool demodulate, double eps = 1e-8);

/// Deterministic synthesis from a W-space code. Output [3,R,R] in [-1,1]
/// via tanh on the skip-summed RGB.
Tensor synthesize(const Generator& g, const LatentCode& w);

/// Z codes go through the mapping network, W codes straight to synthesis.
Tensor generate_image(const Generator& g, const LatentCode& latent);

}  // namespace t2f
