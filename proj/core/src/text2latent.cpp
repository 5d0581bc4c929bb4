#include "t2f/text2latent.hpp"

#include <cmath>

#include "t2f/encoder.hpp"
#include "t2f/errors.hpp"
#include "t2f/rng.hpp"

namespace t2f {

std::string latent_space_name(LatentSpace s) {
  return s == LatentSpace::Z ? "Z" : "W";
}

LatentSpace latent_space_from_name(const std::string& name) {
  if (name == "Z" || name == "z") return LatentSpace::Z;
  if (name == "W" || name == "w") return LatentSpace::W;
  throw DataError("unknown latent space '" + name + "' (expected Z or W)");
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  out.reserve(layers.size() * 2);
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

void Mlp::set_requires_grad(bool rg) {
  for (auto& l : layers) {
    l.weight.set_requires_grad(rg);
    l.bias.set_requires_grad(rg);
  }
}

std::vector<size_t> Mlp::hidden_widths() const {
  std::vector<size_t> out;
  for (size_t i = 0; i + 1 < layers.size(); ++i) {
    out.push_back(layers[i].weight.shape()[1]);
  }
  return out;
}

Mlp t2l_init(uint64_t seed, const std::vector<size_t>& hidden,
             LatentSpace target) {
  if (hidden.empty()) {
    throw DataError("t2l_init: at least one hidden layer required");
  }
  for (size_t h : hidden) {
    if (h == 0) throw DataError("t2l_init: hidden widths must be positive");
  }
  std::vector<size_t> dims;
  dims.push_back(kEmbeddingDim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(kLatentDim);

  Mlp mlp;
  mlp.target = target;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    const size_t fan_in = dims[i], fan_out = dims[i + 1];
    const bool last = (i + 2 == dims.size());
    const double gain = last ? 1.0 : std::sqrt(2.0);
    Rng rng(substream(seed, i));
    MlpLayer layer;
    layer.weight = Tensor::from_data(
        {fan_in, fan_out},
        rng.normal_vec(fan_in * fan_out, gain / std::sqrt(double(fan_in))));
    layer.bias = Tensor::zeros({fan_out});
    layer.weight.set_requires_grad(true);
    layer.bias.set_requires_grad(true);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

LatentCode t2l_forward(const Mlp& mlp, const Tensor& embedding) {
  if (embedding.numel() != kEmbeddingDim) {
    throw DataError("t2l_forward: embedding must have " +
                    std::to_string(kEmbeddingDim) + " values, got " +
                    shape_str(embedding.shape()));
  }
  Tensor x = reshape(embedding, {1, kEmbeddingDim});
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    const auto& l = mlp.layers[i];
    x = add(matmul(x, l.weight), reshape(l.bias, {1, l.bias.numel()}));
    if (i + 1 < mlp.layers.size()) x = leaky_relu(x, 0.2);
  }
  LatentCode code;
  code.values = reshape(x, {kLatentDim});
  code.space = mlp.target;
  return code;
}

}  // namespace t2f
