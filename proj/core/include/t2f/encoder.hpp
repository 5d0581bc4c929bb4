#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "t2f/caption.hpp"
#include "t2f/tensor.hpp"

namespace t2f {

inline constexpr size_t kEmbeddingDim = 768;

/// 768-dimensional sentence vector.
struct Embedding {
  enum class Source { Builtin, File };
  Tensor values;  // shape [768]
  Source source = Source::Builtin;
};

struct EncoderConfig {
  uint64_t seed = 101;
  /// Weight of the hashed-token bag capturing residual wording.
  double token_weight = 0.02;
};

/// Deterministic desk-scale sentence encoder with the 768-d output contract:
/// sum of seeded per-attribute directions, gender/age offsets and a hashed
/// token bag, L2-normalized.
class TextEncoder {
 public:
  explicit TextEncoder(EncoderConfig cfg = {});

  /// Parses the caption and encodes it. Parse failures propagate.
  Embedding encode(const std::string& text,
                   const CaptionGrammar& grammar = CaptionGrammar::builtin()) const;

 private:
  EncoderConfig cfg_;
  std::vector<std::vector<double>> attr_dirs_;  // 40 x 768
  std::vector<double> male_off_, female_off_, young_off_, mature_off_;
};

// ---------------------------------------------------------------------------
// Vector table files: one record per line, "id<TAB>v0 v1 ... vD-1", UTF-8,
// '#' comment lines. Shared by embedding files, feature files and latent
// sidecars.
// ---------------------------------------------------------------------------

using VectorTable = std::vector<std::pair<std::string, std::vector<double>>>;

/// Reads a table, enforcing a fixed dimension when expected_dim > 0 and
/// internal consistency otherwise. Duplicate ids are an error.
VectorTable read_vector_table(const std::string& path, size_t expected_dim = 0);
void write_vector_table(const std::string& path, const VectorTable& table);

/// 768-d embedding ingestion keyed by sample id.
std::map<std::string, Embedding> load_embeddings(const std::string& path);
void write_embeddings(const std::string& path,
                      const std::map<std::string, Embedding>& table);

}  // namespace t2f
