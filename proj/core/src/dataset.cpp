#include "t2f/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "t2f/errors.hpp"
#include "t2f/image_io.hpp"
#include "t2f/rng.hpp"

namespace fs = std::filesystem;

namespace t2f {

std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestRecord> records;
  std::set<std::string> ids;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) tab = line.size();
      fields.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (fields.size() != 3 && fields.size() != 4) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 3 or 4 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    ManifestRecord rec;
    rec.id = fields[0];
    rec.image_path = (base / fields[1]).string();
    if (fields.size() == 4) {
      rec.embedding_id = fields[2];
      rec.caption = fields[3];
    } else {
      rec.caption = fields[2];
    }
    if (rec.id.empty() || rec.caption.empty()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": empty id or caption");
    }
    if (!ids.insert(rec.id).second) {
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate id '" +
                      rec.id + "'");
    }
    if (!fs::exists(rec.image_path)) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": image file missing: " + rec.image_path);
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw DataError(path + ": no records");
  return records;
}

Dataset load_dataset(const std::string& manifest_path, size_t resolution) {
  Dataset data;
  data.records = load_manifest(manifest_path);
  data.images.reserve(data.records.size());
  for (const auto& rec : data.records) {
    Tensor img = read_image(rec.image_path);
    if (img.shape()[1] != resolution || img.shape()[2] != resolution) {
      img = bilinear_resize(img, resolution, resolution).detach();
    }
    data.images.push_back(std::move(img));
  }
  return data;
}

Tensor embedding_for(const Dataset& data, size_t index,
                     const TextEncoder& encoder) {
  const ManifestRecord& rec = data.records[index];
  if (!rec.embedding_id.empty()) {
    auto it = data.external_embeddings.find(rec.embedding_id);
    if (it == data.external_embeddings.end()) {
      throw DataError("record '" + rec.id + "' references embedding id '" +
                      rec.embedding_id + "' not present in embedding file");
    }
    return it->second.values;
  }
  return encoder.encode(rec.caption).values;
}

std::string synthesize_dataset(const std::string& out_dir, size_t n,
                               uint64_t seed, const Generator& gen,
                               const CaptionGrammar& grammar,
                               double jitter_sigma) {
  if (n == 0) throw DataError("synthesize_dataset: n must be >= 1");
  fs::create_directories(fs::path(out_dir) / "images");

  // Per-attribute latent directions, plus gender base directions so the sum
  // is never empty for an all-false vector.
  std::vector<std::vector<double>> dirs;
  dirs.reserve(kNumAttributes);
  for (size_t i = 0; i < kNumAttributes; ++i) {
    Rng rng(substream(seed, 1000 + i));
    dirs.push_back(rng.normal_vec(kLatentDim, 1.0));
  }
  Rng rng_male(substream(seed, 2000));
  const std::vector<double> male_dir = rng_male.normal_vec(kLatentDim, 1.0);
  Rng rng_female(substream(seed, 2001));
  const std::vector<double> female_dir = rng_female.normal_vec(kLatentDim, 1.0);

  Rng attr_rng(substream(seed, 0));
  std::ofstream manifest(fs::path(out_dir) / "manifest.tsv",
                         std::ios::binary);
  if (!manifest) throw DataError("cannot write manifest in " + out_dir);
  VectorTable latents;
  latents.reserve(n);

  size_t width = 4;
  while (n > std::pow(10, width)) ++width;

  for (size_t s = 0; s < n; ++s) {
    std::string id = std::to_string(s);
    id = "s" + std::string(width - std::min(width, id.size()), '0') + id;

    const AttributeVector attrs = grammar.random_valid(attr_rng);
    const Caption caption = grammar.render(attrs);

    std::vector<double> z(kLatentDim, 0.0);
    for (size_t i = 0; i < kNumAttributes; ++i) {
      if (!attrs.flags[i]) continue;
      for (size_t k = 0; k < kLatentDim; ++k) z[k] += dirs[i][k];
    }
    const auto& base = attrs.get(Attr::Male) ? male_dir : female_dir;
    for (size_t k = 0; k < kLatentDim; ++k) z[k] += base[k];
    double norm = 0.0;
    for (double v : z) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : z) v /= norm;
    Rng jitter(substream(seed, 3000 + s));
    for (double& v : z) v += jitter.normal(0.0, jitter_sigma);

    LatentCode zc{Tensor::from_data({kLatentDim}, z), LatentSpace::Z};
    const Tensor img = generate_image(gen, zc);
    const std::string rel = "images/" + id + ".ppm";
    write_image((fs::path(out_dir) / rel).string(), img);

    manifest << id << '\t' << rel << '\t' << caption.text << '\n';
    latents.emplace_back(id, std::move(z));
  }
  if (!manifest) throw DataError("failed writing manifest in " + out_dir);
  manifest.close();
  write_vector_table((fs::path(out_dir) / "latents.tsv").string(), latents);
  return (fs::path(out_dir) / "manifest.tsv").string();
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double frac) {
  if (frac < 0.0 || frac >= 1.0) {
    throw DataError("split_holdout: fraction must be in [0,1)");
  }
  const size_t held = static_cast<size_t>(
      std::floor(static_cast<double>(data.size()) * frac));
  const size_t cut = data.size() - held;
  Dataset train, hold;
  train.external_embeddings = data.external_embeddings;
  hold.external_embeddings = data.external_embeddings;
  for (size_t i = 0; i < data.size(); ++i) {
    auto& dst = i < cut ? train : hold;
    dst.records.push_back(data.records[i]);
    dst.images.push_back(data.images[i]);
  }
  return {std::move(train), std::move(hold)};
}

}  // namespace t2f
