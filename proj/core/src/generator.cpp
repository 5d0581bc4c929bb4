#include "t2f/generator.hpp"

#include <cmath>

#include "t2f/errors.hpp"
#include "t2f/rng.hpp"

namespace t2f {

namespace {

size_t block_channels(size_t c0, size_t block_index) {
  const size_t ch = c0 >> block_index;
  return ch < 16 ? 16 : ch;
}

Tensor seeded_normal(Rng& rng, Shape shape, double stddev) {
  return Tensor::from_data(shape, rng.normal_vec(shape_numel(shape), stddev));
}

// style = w * A + b as a flat [C] tensor.
Tensor style_affine(const Tensor& w_row, const Tensor& aw, const Tensor& ab) {
  Tensor s = add(matmul(w_row, aw), reshape(ab, {1, ab.numel()}));
  return reshape(s, {ab.numel()});
}

}  // namespace

std::vector<Tensor> Generator::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Generator::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < mapping.size(); ++i) {
    out.emplace_back("gen/mapping/" + std::to_string(i) + "/weight",
                     mapping[i].weight);
    out.emplace_back("gen/mapping/" + std::to_string(i) + "/bias",
                     mapping[i].bias);
  }
  out.emplace_back("gen/const", const_input);
  for (const auto& b : blocks) {
    const std::string p = "gen/block" + std::to_string(b.res) + "/";
    out.emplace_back(p + "conv1_w", b.conv1_w);
    out.emplace_back(p + "conv1_b", b.conv1_b);
    out.emplace_back(p + "aff1_w", b.aff1_w);
    out.emplace_back(p + "aff1_b", b.aff1_b);
    out.emplace_back(p + "conv2_w", b.conv2_w);
    out.emplace_back(p + "conv2_b", b.conv2_b);
    out.emplace_back(p + "aff2_w", b.aff2_w);
    out.emplace_back(p + "aff2_b", b.aff2_b);
    out.emplace_back(p + "rgb_w", b.rgb_w);
    out.emplace_back(p + "rgb_b", b.rgb_b);
    out.emplace_back(p + "rgb_aff_w", b.rgb_aff_w);
    out.emplace_back(p + "rgb_aff_b", b.rgb_aff_b);
  }
  return out;
}

uint64_t Generator::param_hash() const { return hash_tensors(parameters()); }

Generator gen_init(uint64_t seed, size_t resolution, size_t c0) {
  if (resolution != 8 && resolution != 16 && resolution != 32 &&
      resolution != 64) {
    throw DataError("gen_init: unsupported resolution " +
                    std::to_string(resolution) + " (expected 8/16/32/64)");
  }
  if (c0 < 16) throw DataError("gen_init: c0 must be at least 16");

  Generator g;
  g.resolution = resolution;
  g.c0 = c0;

  uint64_t stream = 0;
  auto rng_for = [&]() { return Rng(substream(seed, stream++)); };

  for (size_t i = 0; i < 8; ++i) {
    Rng rng = rng_for();
    MlpLayer l;
    l.weight = seeded_normal(rng, {kLatentDim, kLatentDim},
                             std::sqrt(2.0 / double(kLatentDim)));
    l.bias = Tensor::zeros({kLatentDim});
    g.mapping.push_back(std::move(l));
  }

  {
    Rng rng = rng_for();
    g.const_input = seeded_normal(rng, {c0, 4, 4}, 1.0);
  }

  size_t res = 4;
  size_t in_ch = c0;
  size_t block_index = 0;
  while (res <= resolution) {
    const size_t out_ch = block_channels(c0, block_index);
    Rng rng = rng_for();
    GenBlock b;
    b.res = res;
    b.in_ch = in_ch;
    b.out_ch = out_ch;
    const double conv1_std = std::sqrt(2.0 / double(in_ch * 9));
    const double conv2_std = std::sqrt(2.0 / double(out_ch * 9));
    const double aff_std = 1.0 / std::sqrt(double(kLatentDim));
    b.conv1_w = seeded_normal(rng, {out_ch, in_ch, 3, 3}, conv1_std);
    b.conv1_b = Tensor::zeros({out_ch});
    b.aff1_w = seeded_normal(rng, {kLatentDim, in_ch}, aff_std);
    b.aff1_b = Tensor::full({in_ch}, 1.0);  // styles start at 1
    b.conv2_w = seeded_normal(rng, {out_ch, out_ch, 3, 3}, conv2_std);
    b.conv2_b = Tensor::zeros({out_ch});
    b.aff2_w = seeded_normal(rng, {kLatentDim, out_ch}, aff_std);
    b.aff2_b = Tensor::full({out_ch}, 1.0);
    b.rgb_w = seeded_normal(rng, {3, out_ch, 1, 1},
                            1.0 / std::sqrt(double(out_ch)));
    b.rgb_b = Tensor::zeros({3});
    b.rgb_aff_w = seeded_normal(rng, {kLatentDim, out_ch}, aff_std);
    b.rgb_aff_b = Tensor::full({out_ch}, 1.0);
    g.blocks.push_back(std::move(b));
    in_ch = out_ch;
    res *= 2;
    ++block_index;
  }
  return g;
}

LatentCode mapping_forward(const Generator& g, const LatentCode& z) {
  if (z.space != LatentSpace::Z) {
    throw DataError("mapping_forward: latent tagged W, expected Z");
  }
  if (z.values.numel() != kLatentDim) {
    throw DataError("mapping_forward: latent must have 512 values, got " +
                    shape_str(z.values.shape()));
  }
  Tensor x = reshape(pixel_norm(z.values), {1, kLatentDim});
  for (const auto& l : g.mapping) {
    x = add(matmul(x, l.weight), reshape(l.bias, {1, kLatentDim}));
    x = leaky_relu(x, 0.2);
  }
  LatentCode w;
  w.values = reshape(x, {kLatentDim});
  w.space = LatentSpace::W;
  return w;
}

Tensor demodulated_weights(const Tensor& weights, const Tensor& style,
                           bool demodulate, double eps) {
  if (weights.rank() != 4) {
    throw DataError("modulated_conv2d: weights must be rank 4, got " +
                    shape_str(weights.shape()));
  }
  const size_t cin = weights.shape()[1];
  const size_t k = weights.shape()[2];
  if (style.numel() == 0) {
    throw DataError("modulated_conv2d: zero-length style");
  }
  if (style.numel() != cin) {
    throw DataError("modulated_conv2d: style length " +
                    std::to_string(style.numel()) +
                    " does not match input channels " + std::to_string(cin));
  }
  Tensor w1 = mul(weights, reshape(style, {cin, 1, 1}));
  if (demodulate) {
    const size_t cout = weights.shape()[0];
    Tensor sums = matmul(reshape(square(w1), {cout, cin * k * k}),
                         Tensor::full({cin * k * k, 1}, 1.0));
    Tensor denom = sqrt_eps(sums, eps);  // [cout,1]
    w1 = div(w1, reshape(denom, {cout, 1, 1, 1}));
  }
  return w1;
}

Tensor modulated_conv2d(const Tensor& weights, const Tensor& style,
                        const Tensor& x, bool demodulate, double eps) {
  return conv2d(x, demodulated_weights(weights, style, demodulate, eps));
}

Tensor synthesize(const Generator& g, const LatentCode& w) {
  if (w.space != LatentSpace::W) {
    throw DataError("synthesize: latent tagged Z, expected W");
  }
  if (w.values.numel() != kLatentDim) {
    throw DataError("synthesize: latent must have 512 values, got " +
                    shape_str(w.values.shape()));
  }
  const Tensor w_row = reshape(w.values, {1, kLatentDim});
  Tensor x = g.const_input;
  Tensor rgb;
  for (size_t bi = 0; bi < g.blocks.size(); ++bi) {
    const GenBlock& b = g.blocks[bi];
    if (bi > 0) x = nearest_upsample2(x);
    const Tensor s1 = style_affine(w_row, b.aff1_w, b.aff1_b);
    x = modulated_conv2d(b.conv1_w, s1, x, true);
    x = leaky_relu(add(x, reshape(b.conv1_b, {b.out_ch, 1, 1})), 0.2);
    const Tensor s2 = style_affine(w_row, b.aff2_w, b.aff2_b);
    x = modulated_conv2d(b.conv2_w, s2, x, true);
    x = leaky_relu(add(x, reshape(b.conv2_b, {b.out_ch, 1, 1})), 0.2);
    const Tensor srgb = style_affine(w_row, b.rgb_aff_w, b.rgb_aff_b);
    Tensor t = modulated_conv2d(b.rgb_w, srgb, x, false);
    t = add(t, reshape(b.rgb_b, {3, 1, 1}));
    rgb = bi == 0 ? t : add(nearest_upsample2(rgb), t);
  }
  return tanh(rgb);
}

Tensor generate_image(const Generator& g, const LatentCode& latent) {
  if (latent.space == LatentSpace::Z) {
    return synthesize(g, mapping_forward(g, latent));
  }
  return synthesize(g, latent);
}

}  // namespace t2f
