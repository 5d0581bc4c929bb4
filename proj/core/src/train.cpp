#include "t2f/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "t2f/errors.hpp"
#include "t2f/metrics.hpp"
#include "t2f/rng.hpp"

namespace fs = std::filesystem;

namespace t2f {

void TrainConfig::validate() const {
  if (experiment != 0 && (experiment < 1 || experiment > 6)) {
    throw UsageError("config: experiment must be in [1,6]");
  }
  if (epochs < 1) throw UsageError("config: epochs must be >= 1");
  if (lr < 0.0) throw UsageError("config: lr must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw UsageError("config: betas must lie in [0,1)");
  }
  if (adam_eps <= 0.0) throw UsageError("config: adam_eps must be positive");
  if (batch < 1) throw UsageError("config: batch must be >= 1");
  if (hidden.empty()) throw UsageError("config: hidden layers required");
  if (layers.layers.empty() && experiment == 0) {
    throw UsageError("config: layers or experiment required");
  }
  if (checkpoint_every < 1) {
    throw UsageError("config: checkpoint_every must be >= 1");
  }
  if (threads < 1) throw UsageError("config: threads must be >= 1");
}

void TrainConfig::resolve_experiment() {
  if (experiment != 0) {
    auto [sp, ls] = experiment_layerset(experiment);
    space = sp;
    layers = ls;
  }
}

namespace {

std::vector<size_t> parse_size_list(const std::string& csv) {
  std::vector<size_t> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    const std::string item = csv.substr(pos, comma - pos);
    if (!item.empty()) out.push_back(std::stoull(item));
    pos = comma + 1;
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config: key '" + key + "' expects true/false, got '" + v +
                   "'");
}

}  // namespace

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  bool explicit_layers = false;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    const size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const size_t b = line.find_last_not_of(" \t");
    line = line.substr(a, b - a + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) +
                       ": expected key=value, got '" + line + "'");
    }
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const size_t x = s.find_first_not_of(" \t");
      const size_t y = s.find_last_not_of(" \t");
      s = x == std::string::npos ? "" : s.substr(x, y - x + 1);
    };
    trim(key);
    trim(val);
    try {
      if (key == "experiment") cfg.experiment = std::stoi(val);
      else if (key == "space") cfg.space = latent_space_from_name(val);
      else if (key == "layers") {
        cfg.layers.layers = LayerSet::from_string(val).layers;
        explicit_layers = true;
      } else if (key == "hypercolumn") {
        cfg.layers.hypercolumn = parse_bool(val, key);
      } else if (key == "epochs") cfg.epochs = std::stoull(val);
      else if (key == "lr") cfg.lr = std::stod(val);
      else if (key == "beta1") cfg.beta1 = std::stod(val);
      else if (key == "beta2") cfg.beta2 = std::stod(val);
      else if (key == "adam_eps") cfg.adam_eps = std::stod(val);
      else if (key == "batch") cfg.batch = std::stoull(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "gen_seed") cfg.gen_seed = std::stoull(val);
      else if (key == "vgg_seed") cfg.vgg_seed = std::stoull(val);
      else if (key == "encoder_seed") cfg.encoder_seed = std::stoull(val);
      else if (key == "resolution") cfg.resolution = std::stoull(val);
      else if (key == "c0") cfg.c0 = std::stoull(val);
      else if (key == "width_divisor") cfg.width_divisor = std::stoull(val);
      else if (key == "hidden") cfg.hidden = parse_size_list(val);
      else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoull(val);
      else if (key == "latent_penalty") cfg.latent_penalty = std::stod(val);
      else if (key == "threads") cfg.threads = std::stoull(val);
      else {
        throw UsageError("config line " + std::to_string(lineno) +
                         ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw UsageError("config line " + std::to_string(lineno) +
                       ": bad value '" + val + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
      throw UsageError("config line " + std::to_string(lineno) +
                       ": value out of range for key '" + key + "'");
    }
  }
  if (cfg.experiment != 0 && explicit_layers) {
    throw UsageError("config: give either experiment or layers, not both");
  }
  cfg.resolve_experiment();
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

Pipeline build_pipeline(const TrainConfig& config) {
  TrainConfig cfg = config;
  cfg.resolve_experiment();
  cfg.validate();
  Pipeline p{cfg,
             gen_init(cfg.gen_seed, cfg.resolution, cfg.c0),
             vgg_init(cfg.vgg_seed, cfg.width_divisor),
             TextEncoder(EncoderConfig{cfg.encoder_seed, 0.02}),
             t2l_init(cfg.seed, cfg.hidden, cfg.space)};
  return p;
}

// ---------------------------------------------------------------------------
// checkpoint encoding
// ---------------------------------------------------------------------------

namespace {

Tensor scalar_t(double v) { return Tensor::from_data({1}, {v}); }

Tensor vec_t(const std::vector<double>& v) {
  return Tensor::from_data({v.size()}, v);
}

NamedTensors encode_config(const TrainConfig& c) {
  NamedTensors out;
  out.emplace_back("config/experiment", scalar_t(double(c.experiment)));
  out.emplace_back("config/space",
                   scalar_t(c.space == LatentSpace::W ? 1.0 : 0.0));
  std::vector<double> mask(kVggLayerCount, 0.0);
  for (const auto& name : c.layers.layers) {
    mask[vgg_layer_index(name)] = 1.0;
  }
  out.emplace_back("config/layers", vec_t(mask));
  out.emplace_back("config/hypercolumn",
                   scalar_t(c.layers.hypercolumn ? 1.0 : 0.0));
  out.emplace_back("config/epochs", scalar_t(double(c.epochs)));
  out.emplace_back("config/lr", scalar_t(c.lr));
  out.emplace_back("config/beta1", scalar_t(c.beta1));
  out.emplace_back("config/beta2", scalar_t(c.beta2));
  out.emplace_back("config/adam_eps", scalar_t(c.adam_eps));
  out.emplace_back("config/batch", scalar_t(double(c.batch)));
  out.emplace_back("config/seed", scalar_t(double(c.seed)));
  out.emplace_back("config/gen_seed", scalar_t(double(c.gen_seed)));
  out.emplace_back("config/vgg_seed", scalar_t(double(c.vgg_seed)));
  out.emplace_back("config/encoder_seed", scalar_t(double(c.encoder_seed)));
  out.emplace_back("config/resolution", scalar_t(double(c.resolution)));
  out.emplace_back("config/c0", scalar_t(double(c.c0)));
  out.emplace_back("config/width_divisor", scalar_t(double(c.width_divisor)));
  std::vector<double> hid(c.hidden.begin(), c.hidden.end());
  out.emplace_back("config/hidden", vec_t(hid));
  out.emplace_back("config/checkpoint_every",
                   scalar_t(double(c.checkpoint_every)));
  out.emplace_back("config/latent_penalty", scalar_t(c.latent_penalty));
  return out;
}

TrainConfig decode_config(const NamedTensors& ts) {
  TrainConfig c;
  c.experiment = int(require_tensor(ts, "config/experiment").item());
  c.space = require_tensor(ts, "config/space").item() > 0.5 ? LatentSpace::W
                                                            : LatentSpace::Z;
  const Tensor mask = require_tensor(ts, "config/layers");
  c.layers.layers.clear();
  for (size_t i = 0; i < kVggLayerCount; ++i) {
    if (mask.at(i) > 0.5) {
      c.layers.layers.emplace_back(vgg_layer_names()[i]);
    }
  }
  c.layers.hypercolumn = require_tensor(ts, "config/hypercolumn").item() > 0.5;
  c.epochs = size_t(require_tensor(ts, "config/epochs").item());
  c.lr = require_tensor(ts, "config/lr").item();
  c.beta1 = require_tensor(ts, "config/beta1").item();
  c.beta2 = require_tensor(ts, "config/beta2").item();
  c.adam_eps = require_tensor(ts, "config/adam_eps").item();
  c.batch = size_t(require_tensor(ts, "config/batch").item());
  c.seed = uint64_t(require_tensor(ts, "config/seed").item());
  c.gen_seed = uint64_t(require_tensor(ts, "config/gen_seed").item());
  c.vgg_seed = uint64_t(require_tensor(ts, "config/vgg_seed").item());
  c.encoder_seed = uint64_t(require_tensor(ts, "config/encoder_seed").item());
  c.resolution = size_t(require_tensor(ts, "config/resolution").item());
  c.c0 = size_t(require_tensor(ts, "config/c0").item());
  c.width_divisor =
      size_t(require_tensor(ts, "config/width_divisor").item());
  const Tensor hid = require_tensor(ts, "config/hidden");
  c.hidden.clear();
  for (double v : hid.values()) c.hidden.push_back(size_t(v));
  c.checkpoint_every =
      size_t(require_tensor(ts, "config/checkpoint_every").item());
  c.latent_penalty = require_tensor(ts, "config/latent_penalty").item();
  return c;
}

}  // namespace

void save_pipeline(const std::string& path, const Pipeline& pipe,
                   const std::vector<double>& history, size_t epoch,
                   bool include_frozen) {
  NamedTensors ts = encode_config(pipe.config);
  ts.emplace_back("train/epoch", scalar_t(double(epoch)));
  ts.emplace_back("train/history", vec_t(history));
  for (size_t i = 0; i < pipe.mlp.layers.size(); ++i) {
    const std::string p = "t2l/" + std::to_string(i) + "/";
    ts.emplace_back(p + "weight", pipe.mlp.layers[i].weight);
    ts.emplace_back(p + "bias", pipe.mlp.layers[i].bias);
  }
  if (include_frozen) {
    for (auto& nt : pipe.gen.named_parameters()) ts.push_back(nt);
    for (auto& nt : pipe.vgg.named_parameters()) ts.push_back(nt);
  }
  save_checkpoint(path, ts);
}

Pipeline load_pipeline(const std::string& path, std::vector<double>* history,
                       size_t* epoch) {
  const NamedTensors ts = load_checkpoint(path);
  TrainConfig cfg = decode_config(ts);
  Pipeline pipe = build_pipeline(cfg);
  for (size_t i = 0; i < pipe.mlp.layers.size(); ++i) {
    const std::string p = "t2l/" + std::to_string(i) + "/";
    Tensor w = require_tensor(ts, p + "weight");
    Tensor b = require_tensor(ts, p + "bias");
    if (w.shape() != pipe.mlp.layers[i].weight.shape() ||
        b.shape() != pipe.mlp.layers[i].bias.shape()) {
      throw DataError(path + ": t2l layer " + std::to_string(i) +
                      " shape mismatch against config");
    }
    pipe.mlp.layers[i].weight = w.clone().set_requires_grad(true);
    pipe.mlp.layers[i].bias = b.clone().set_requires_grad(true);
  }
  // Optional frozen-module override (externally trained weights).
  auto override_from = [&](const NamedTensors& named) {
    for (const auto& [name, param] : named) {
      Tensor t = find_tensor(ts, name);
      if (!t.defined()) continue;
      if (t.shape() != param.shape()) {
        throw DataError(path + ": tensor '" + name + "' has shape " +
                        shape_str(t.shape()) + ", expected " +
                        shape_str(param.shape()));
      }
      auto& dst = const_cast<Tensor&>(param);
      dst.mutable_values() = t.values();
    }
  };
  override_from(pipe.gen.named_parameters());
  override_from(pipe.vgg.named_parameters());
  if (history) *history = require_tensor(ts, "train/history").values();
  if (epoch) *epoch = size_t(require_tensor(ts, "train/epoch").item());
  return pipe;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

struct Adam {
  double lr, beta1, beta2, eps;
  size_t t = 0;
  std::vector<std::vector<double>> m, v;

  explicit Adam(const TrainConfig& cfg)
      : lr(cfg.lr), beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.adam_eps) {}

  void step(std::vector<Tensor>& params, double grad_scale) {
    if (m.empty()) {
      for (const auto& p : params) {
        m.emplace_back(p.numel(), 0.0);
        v.emplace_back(p.numel(), 0.0);
      }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& vals = params[pi].mutable_values();
      const auto& g = params[pi].grad();
      for (size_t i = 0; i < vals.size(); ++i) {
        const double gi = g[i] * grad_scale;
        m[pi][i] = beta1 * m[pi][i] + (1.0 - beta1) * gi;
        v[pi][i] = beta2 * v[pi][i] + (1.0 - beta2) * gi * gi;
        const double mhat = m[pi][i] / bc1;
        const double vhat = v[pi][i] / bc2;
        vals[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

// Forward + backward for one sample; gradients land in the sink so several
// samples can run concurrently against shared read-only leaves.
double sample_step(const Pipeline& pipe, const Tensor& embedding,
                   const FeatureMaps& real_maps, GradSink& sink) {
  LatentCode lat = t2l_forward(pipe.mlp, embedding);
  Tensor img = generate_image(pipe.gen, lat);
  Tensor loss =
      perceptual_loss_vs_maps(pipe.vgg, img, real_maps, pipe.config.layers);
  if (pipe.config.latent_penalty > 0.0) {
    loss = add(loss, scale(mean(square(lat.values)),
                           pipe.config.latent_penalty));
  }
  const double value = loss.item();
  backward(loss, sink);
  return value;
}

}  // namespace

TrainResult train(Pipeline& pipe, const Dataset& data,
                  const std::string& out_ckpt) {
  const TrainConfig& cfg = pipe.config;
  if (data.size() == 0) throw DataError("train: empty dataset");
  if (pipe.mlp.target != cfg.space) {
    throw DataError("train: mlp target space does not match config");
  }

  // Precompute embeddings and per-sample reference feature maps; both are
  // constant across epochs.
  std::vector<Tensor> embeddings;
  embeddings.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    embeddings.push_back(embedding_for(data, i, pipe.encoder));
  }
  std::vector<FeatureMaps> real_maps(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    real_maps[i] =
        extract_features(pipe.vgg, data.images[i], cfg.layers.layers);
  }

  std::vector<Tensor> params = pipe.mlp.parameters();
  zero_grads(params);
  Adam adam(cfg);
  Rng shuffle_rng(substream(cfg.seed, 42));
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.checkpoint_path = out_ckpt;
  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch) {
      const size_t end = std::min(start + cfg.batch, order.size());
      const size_t bs = end - start;
      std::vector<double> losses(bs);
      std::vector<GradSink> sinks(bs);
      if (cfg.threads > 1 && bs > 1) {
        std::vector<std::future<double>> futs;
        futs.reserve(bs);
        for (size_t k = 0; k < bs; ++k) {
          futs.push_back(std::async(std::launch::async, [&, k] {
            return sample_step(pipe, embeddings[order[start + k]],
                               real_maps[order[start + k]], sinks[k]);
          }));
        }
        for (size_t k = 0; k < bs; ++k) losses[k] = futs[k].get();
      } else {
        for (size_t k = 0; k < bs; ++k) {
          losses[k] = sample_step(pipe, embeddings[order[start + k]],
                                  real_maps[order[start + k]], sinks[k]);
        }
      }
      for (size_t k = 0; k < bs; ++k) {
        if (!std::isfinite(losses[k])) {
          throw NumericError(
              "train: non-finite loss at epoch " + std::to_string(epoch) +
              ", step " + std::to_string(start / cfg.batch + 1) + ", sample " +
              data.records[order[start + k]].id);
        }
        epoch_loss += losses[k];
        sinks[k].flush();  // fixed sample order: deterministic reduction
      }
      adam.step(params, 1.0 / double(bs));
      zero_grads(params);
    }
    result.history.push_back(epoch_loss / double(data.size()));
    if (epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs) {
      save_pipeline(out_ckpt, pipe, result.history, epoch);
    }
  }
  save_pipeline(out_ckpt, pipe, result.history, cfg.epochs);

  // History CSV next to the checkpoint.
  std::ofstream hist(out_ckpt + ".history.csv", std::ios::binary);
  if (hist) {
    hist << "epoch,mean_loss\n";
    for (size_t e = 0; e < result.history.size(); ++e) {
      hist << (e + 1) << ',' << format_value(result.history[e]) << '\n';
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "fsd\t" << format_value(fsd) << '\n';
  os << "fss\t" << format_value(fss) << '\n';
  os << "fss_percent\t" << format_value(fss_percent()) << '\n';
  os << "fid\t" << format_value(fid) << '\n';
  os << "n\t" << n << '\n';
  os << "d\t" << feature_dim << '\n';
  os << "experiment\t" << experiment << '\n';
  os << "space\t" << space << '\n';
  os << "layers\t" << layers << '\n';
  os << "hypercolumn\t" << (hypercolumn ? "true" : "false") << '\n';
  os << "resolution\t" << resolution << '\n';
  return os.str();
}

EvalReport evaluate(const Pipeline& pipe, const Dataset& data,
                    bool self_mode) {
  if (data.size() == 0) throw DataError("evaluate: empty dataset");
  std::vector<FeatureVec> gen_feats, real_feats;
  gen_feats.reserve(data.size());
  real_feats.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    real_feats.push_back(face_features(pipe.vgg, data.images[i]));
    if (self_mode) {
      gen_feats.push_back(real_feats.back());
    } else {
      const Tensor e = embedding_for(data, i, pipe.encoder);
      LatentCode lat = t2l_forward(pipe.mlp, e);
      lat.values = lat.values.detach();
      const Tensor img = generate_image(pipe.gen, lat);
      gen_feats.push_back(face_features(pipe.vgg, img));
    }
  }
  std::vector<FeaturePair> pairs;
  pairs.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    pairs.emplace_back(gen_feats[i], real_feats[i]);
  }
  EvalReport rep;
  rep.fsd = fsd(pairs);
  rep.fss = fss(pairs);
  rep.fid = data.size() >= 2 ? fid(gen_feats, real_feats) : 0.0;
  rep.n = data.size();
  rep.feature_dim = gen_feats[0].size();
  rep.experiment = pipe.config.experiment;
  rep.space = latent_space_name(pipe.config.space);
  rep.layers = pipe.config.layers.joined();
  rep.hypercolumn = pipe.config.layers.hypercolumn;
  rep.resolution = pipe.config.resolution;
  return rep;
}

// ---------------------------------------------------------------------------
// experiment matrix
// ---------------------------------------------------------------------------

std::vector<ExperimentRow> run_experiment_matrix(const TrainConfig& base,
                                                 const Dataset& data,
                                                 const std::string& out_dir,
                                                 double holdout) {
  fs::create_directories(out_dir);
  auto [train_set, hold_set] = split_holdout(data, holdout);
  const Dataset& eval_set = hold_set.size() > 0 ? hold_set : train_set;

  std::vector<ExperimentRow> rows;
  for (int id = 1; id <= 6; ++id) {
    TrainConfig cfg = base;
    cfg.experiment = id;
    cfg.resolve_experiment();
    cfg.validate();
    Pipeline pipe = build_pipeline(cfg);
    char name[16];
    std::snprintf(name, sizeof(name), "exp%02d.ckpt", id);
    const TrainResult tr =
        train(pipe, train_set, (fs::path(out_dir) / name).string());
    const EvalReport rep = evaluate(pipe, eval_set);
    ExperimentRow row;
    row.id = id;
    row.space = latent_space_name(cfg.space);
    row.layers = cfg.layers.joined();
    row.hypercolumn = cfg.layers.hypercolumn;
    row.final_loss = tr.history.back();
    row.fsd = rep.fsd;
    row.fss_percent = rep.fss_percent();
    row.fid = rep.fid;
    rows.push_back(std::move(row));
  }
  std::ofstream report(fs::path(out_dir) / "report.tsv", std::ios::binary);
  if (!report) throw DataError("cannot write report in " + out_dir);
  report << experiment_report_text(rows);
  return rows;
}

std::string experiment_report_text(const std::vector<ExperimentRow>& rows) {
  std::ostringstream os;
  os << "experiment\tspace\tlayers\thypercolumn\tfinal_loss\tfsd\tfss_percent"
        "\tfid\n";
  for (const auto& r : rows) {
    char id[8];
    std::snprintf(id, sizeof(id), "%02d", r.id);
    os << id << '\t' << r.space << '\t' << r.layers << '\t'
       << (r.hypercolumn ? "true" : "false") << '\t'
       << format_value(r.final_loss) << '\t' << format_value(r.fsd) << '\t'
       << format_value(r.fss_percent) << '\t' << format_value(r.fid) << '\n';
  }
  return os.str();
}

}  // namespace t2f
