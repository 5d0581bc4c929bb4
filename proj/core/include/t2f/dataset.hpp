#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "t2f/caption.hpp"
#include "t2f/encoder.hpp"
#include "t2f/generator.hpp"
#include "t2f/tensor.hpp"

namespace t2f {

/// One manifest line: tab-separated id, image path, optional precomputed
/// embedding id, caption (always last; tabs are forbidden in captions).
struct ManifestRecord {
  std::string id;
  std::string image_path;  // resolved against the manifest directory
  std::string embedding_id;
  std::string caption;
};

struct Dataset {
  std::vector<ManifestRecord> records;
  std::vector<Tensor> images;  // [3,R,R] in [-1,1], resized to resolution
  std::map<std::string, Embedding> external_embeddings;

  size_t size() const { return records.size(); }
};

/// Parses and validates a manifest (unique ids, referenced files exist).
std::vector<ManifestRecord> load_manifest(const std::string& path);

/// Loads the manifest and decodes every image, bilinearly resized to the
/// given resolution and mapped to [-1,1].
Dataset load_dataset(const std::string& manifest_path, size_t resolution);

/// Embedding for one record: the external table when the record names an
/// embedding id, otherwise the built-in encoder on its caption.
Tensor embedding_for(const Dataset& data, size_t index,
                     const TextEncoder& encoder);

/// Writes a synthetic caption/image dataset whose ground-truth images come
/// from the frozen generator: seeded random valid attribute vectors, captions
/// via the grammar, hidden latents z* = normalize(sum of per-attribute
/// directions) + jitter. The hidden latents go to a sidecar vector table for
/// oracle tests. Returns the manifest path.
std::string synthesize_dataset(
    const std::string& out_dir, size_t n, uint64_t seed, const Generator& gen,
    const CaptionGrammar& grammar = CaptionGrammar::builtin(),
    double jitter_sigma = 0.05);

/// Deterministic split: first (1-frac) for training, last frac held out.
std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double frac);

}  // namespace t2f
