#include "t2f/encoder.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "t2f/errors.hpp"
#include "t2f/rng.hpp"

namespace t2f {

namespace {

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

TextEncoder::TextEncoder(EncoderConfig cfg) : cfg_(cfg) {
  attr_dirs_.reserve(kNumAttributes);
  for (size_t i = 0; i < kNumAttributes; ++i) {
    Rng rng(substream(cfg_.seed, i));
    attr_dirs_.push_back(rng.normal_vec(kEmbeddingDim, 1.0 / 27.7128129211));
  }
  // Scale chosen so each direction has roughly unit norm (sqrt(768) ~ 27.7).
  Rng gm(substream(cfg_.seed, 100));
  male_off_ = gm.normal_vec(kEmbeddingDim, 1.0 / 27.7128129211);
  Rng gf(substream(cfg_.seed, 101));
  female_off_ = gf.normal_vec(kEmbeddingDim, 1.0 / 27.7128129211);
  Rng ay(substream(cfg_.seed, 102));
  young_off_ = ay.normal_vec(kEmbeddingDim, 1.0 / 27.7128129211);
  Rng am(substream(cfg_.seed, 103));
  mature_off_ = am.normal_vec(kEmbeddingDim, 1.0 / 27.7128129211);
}

Embedding TextEncoder::encode(const std::string& text,
                              const CaptionGrammar& grammar) const {
  const ParseResult parsed = grammar.parse(text);
  std::vector<double> v(kEmbeddingDim, 0.0);
  for (size_t i = 0; i < kNumAttributes; ++i) {
    if (!parsed.attrs.flags[i]) continue;
    const auto& d = attr_dirs_[i];
    for (size_t k = 0; k < kEmbeddingDim; ++k) v[k] += d[k];
  }
  const auto& gender = parsed.attrs.get(Attr::Male) ? male_off_ : female_off_;
  const auto& age = parsed.attrs.get(Attr::Young) ? young_off_ : mature_off_;
  for (size_t k = 0; k < kEmbeddingDim; ++k) v[k] += gender[k] + age[k];
  for (const auto& w : words(text)) {
    Rng rng(substream(cfg_.seed ^ fnv1a(w), 7));
    for (size_t k = 0; k < kEmbeddingDim; ++k) {
      v[k] += cfg_.token_weight * rng.normal() / 27.7128129211;
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw NumericError("encode: zero-norm embedding");
  for (double& x : v) x /= norm;
  Embedding e;
  e.values = Tensor::from_data({kEmbeddingDim}, std::move(v));
  e.source = Embedding::Source::Builtin;
  return e;
}

VectorTable read_vector_table(const std::string& path, size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vector file " + path);
  VectorTable table;
  std::map<std::string, size_t> seen;
  std::string line;
  size_t lineno = 0;
  size_t dim = expected_dim;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'id<TAB>values'");
    }
    std::string id = line.substr(0, tab);
    if (id.empty()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": empty id");
    }
    if (!seen.emplace(id, lineno).second) {
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate id '" +
                      id + "'");
    }
    std::vector<double> vals;
    if (dim) vals.reserve(dim);
    std::istringstream vs(line.substr(tab + 1));
    double x;
    while (vs >> x) vals.push_back(x);
    if (!vs.eof()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": malformed number in row '" + id + "'");
    }
    if (dim == 0) dim = vals.size();
    if (vals.empty() || vals.size() != dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": row '" + id +
                      "' has " + std::to_string(vals.size()) +
                      " values, expected " + std::to_string(dim));
    }
    table.emplace_back(std::move(id), std::move(vals));
  }
  return table;
}

void write_vector_table(const std::string& path, const VectorTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vector file " + path);
  char buf[32];
  for (const auto& [id, vals] : table) {
    out << id << '\t';
    for (size_t i = 0; i < vals.size(); ++i) {
      // %.17g round-trips doubles exactly.
      std::snprintf(buf, sizeof(buf), "%.17g", vals[i]);
      if (i) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing vector file " + path);
}

std::map<std::string, Embedding> load_embeddings(const std::string& path) {
  const VectorTable table = read_vector_table(path, kEmbeddingDim);
  std::map<std::string, Embedding> out;
  for (const auto& [id, vals] : table) {
    Embedding e;
    e.values = Tensor::from_data({kEmbeddingDim}, vals);
    e.source = Embedding::Source::File;
    out.emplace(id, std::move(e));
  }
  return out;
}

void write_embeddings(const std::string& path,
                      const std::map<std::string, Embedding>& table) {
  VectorTable t;
  t.reserve(table.size());
  for (const auto& [id, e] : table) t.emplace_back(id, e.values.values());
  write_vector_table(path, t);
}

}  // namespace t2f
