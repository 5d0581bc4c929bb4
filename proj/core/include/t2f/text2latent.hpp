#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2f/tensor.hpp"

namespace t2f {

inline constexpr size_t kLatentDim = 512;

enum class LatentSpace { Z, W };

std::string latent_space_name(LatentSpace s);
LatentSpace latent_space_from_name(const std::string& name);

/// 512-d latent vector tagged with the space it lives in.
struct LatentCode {
  Tensor values;  // shape [512]
  LatentSpace space = LatentSpace::Z;
};

struct MlpLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

/// The trainable embedding -> latent mapping: fully connected layers with
/// leaky_relu(0.2) on hidden layers and an identity output.
struct Mlp {
  std::vector<MlpLayer> layers;
  LatentSpace target = LatentSpace::W;

  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool rg);
  std::vector<size_t> hidden_widths() const;
};

/// Seeded init, scaled-normal fan-in (He gain on hidden layers). Input width
/// 768, output width 512, at least one hidden layer.
Mlp t2l_init(uint64_t seed, const std::vector<size_t>& hidden,
             LatentSpace target);

/// [768] embedding -> tagged [512] latent, differentiable w.r.t. parameters.
LatentCode t2l_forward(const Mlp& mlp, const Tensor& embedding);

}  // namespace t2f
