#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "t2f/checkpoint.hpp"
#include "t2f/dataset.hpp"
#include "t2f/encoder.hpp"
#include "t2f/generator.hpp"
#include "t2f/text2latent.hpp"
#include "t2f/vgg.hpp"

namespace t2f {

/// Training configuration. File form: flat key=value lines, '#' comments,
/// unknown keys rejected.
struct TrainConfig {
  int experiment = 0;  // 1..6 selects space+layers; 0 = explicit below
  LatentSpace space = LatentSpace::W;
  LayerSet layers{{"conv3_3", "conv4_3", "conv5_3"}, false};

  size_t epochs = 500;
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  size_t batch = 16;
  uint64_t seed = 0;
  uint64_t gen_seed = 7;
  uint64_t vgg_seed = 11;
  uint64_t encoder_seed = 101;
  size_t resolution = 32;
  size_t c0 = 64;
  size_t width_divisor = 8;
  std::vector<size_t> hidden = {512, 512, 512};
  size_t checkpoint_every = 50;
  double latent_penalty = 0.0;  // default-off mean-latent regularizer
  size_t threads = 1;

  void validate() const;
  /// Applies the experiment id to space/layers when set.
  void resolve_experiment();

  static TrainConfig from_file(const std::string& path);
  static TrainConfig from_text(const std::string& text);
};

/// The full pipeline: frozen generator and extractor, deterministic encoder,
/// and the one trainable module.
struct Pipeline {
  TrainConfig config;
  Generator gen;
  FeatureExtractor vgg;
  TextEncoder encoder;
  Mlp mlp;
};

/// Fresh seeded pipeline from a config.
Pipeline build_pipeline(const TrainConfig& config);

/// Checkpoint round trip. include_frozen additionally serializes the
/// generator and extractor tensors; load always re-derives them from the
/// seeds and then overrides from the file when present.
void save_pipeline(const std::string& path, const Pipeline& pipe,
                   const std::vector<double>& history, size_t epoch,
                   bool include_frozen = false);
Pipeline load_pipeline(const std::string& path,
                       std::vector<double>* history = nullptr,
                       size_t* epoch = nullptr);

struct TrainResult {
  std::vector<double> history;  // per-epoch mean loss
  std::string checkpoint_path;
};

/// Trains the text-to-latent module with Adam on the perceptual loss.
/// Deterministic given config.seed, including across thread counts. Writes
/// the checkpoint every checkpoint_every epochs and at the end. Non-finite
/// losses abort with a NumericError naming epoch and step.
TrainResult train(Pipeline& pipe, const Dataset& data,
                  const std::string& out_ckpt);

struct EvalReport {
  double fsd = 0.0;
  double fss = 0.0;  // raw cosine in [-1,1]
  double fid = 0.0;
  size_t n = 0;
  size_t feature_dim = 0;
  int experiment = 0;
  std::string space;
  std::string layers;
  bool hypercolumn = false;
  size_t resolution = 0;

  double fss_percent() const { return 100.0 * fss; }
  /// Machine-readable key/value lines, byte-stable across reruns.
  std::string to_text() const;
};

/// Generates one image per record and reports FSD/FSS over feature pairs and
/// FID over the two feature sets. self_mode compares the real set against
/// itself (pipeline sanity check).
EvalReport evaluate(const Pipeline& pipe, const Dataset& data,
                    bool self_mode = false);

struct ExperimentRow {
  int id = 0;
  std::string space;
  std::string layers;
  bool hypercolumn = false;
  double final_loss = 0.0;
  double fsd = 0.0;
  double fss_percent = 0.0;
  double fid = 0.0;
};

/// Runs experiments 1..6 with a shared seed, training on the first
/// (1 - holdout) of the data and evaluating on the rest. Writes
/// expNN.ckpt files and report.tsv under out_dir.
std::vector<ExperimentRow> run_experiment_matrix(const TrainConfig& base,
                                                 const Dataset& data,
                                                 const std::string& out_dir,
                                                 double holdout = 0.2);

std::string experiment_report_text(const std::vector<ExperimentRow>& rows);

}  // namespace t2f
