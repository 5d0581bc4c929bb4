#include "t2f/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "t2f/errors.hpp"

namespace t2f {

FeatureVec face_features(const FeatureExtractor& fe, const Tensor& img) {
  Tensor x = img.detach();
  if (x.shape()[1] != 299 || x.shape()[2] != 299) {
    x = bilinear_resize(x, 299, 299);
  }
  FeatureMaps maps = extract_features(fe, x, {"conv5_3"});
  Tensor pooled = global_average_pool(maps[0].second);
  return pooled.values();
}

namespace {

void check_pairs(const std::vector<FeaturePair>& pairs, const char* op) {
  if (pairs.empty()) throw DataError(std::string(op) + ": empty pair list");
  const size_t d = pairs[0].first.size();
  for (const auto& [a, b] : pairs) {
    if (a.size() != d || b.size() != d) {
      throw DataError(std::string(op) + ": feature dimension mismatch");
    }
  }
}

}  // namespace

double fsd(const std::vector<FeaturePair>& pairs, FsdMode mode) {
  check_pairs(pairs, "fsd");
  double acc = 0.0;
  for (const auto& [a, b] : pairs) {
    if (mode == FsdMode::PairL2) {
      double s = 0.0;
      for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
      }
      acc += std::sqrt(s);
    } else {
      double s = 0.0;
      for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      acc += s / static_cast<double>(a.size());
    }
  }
  return acc / static_cast<double>(pairs.size());
}

double fss(const std::vector<FeaturePair>& pairs) {
  check_pairs(pairs, "fss");
  double acc = 0.0;
  for (const auto& [a, b] : pairs) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
      throw DataError("fss: zero-norm feature vector");
    }
    acc += dot / (std::sqrt(na) * std::sqrt(nb));
  }
  return acc / static_cast<double>(pairs.size());
}

FidStats feature_stats(const std::vector<FeatureVec>& set, double eps) {
  if (set.size() < 2) {
    throw DataError("fid: need at least 2 samples per set, got " +
                    std::to_string(set.size()));
  }
  const size_t d = set[0].size();
  for (const auto& v : set) {
    if (v.size() != d) throw DataError("fid: feature dimension mismatch");
  }
  FidStats st;
  st.dim = d;
  st.mu.assign(d, 0.0);
  for (const auto& v : set) {
    for (size_t i = 0; i < d; ++i) st.mu[i] += v[i];
  }
  const double invn = 1.0 / static_cast<double>(set.size());
  for (auto& m : st.mu) m *= invn;
  st.cov.assign(d * d, 0.0);
  for (const auto& v : set) {
    for (size_t i = 0; i < d; ++i) {
      const double di = v[i] - st.mu[i];
      for (size_t j = i; j < d; ++j) {
        st.cov[i * d + j] += di * (v[j] - st.mu[j]);
      }
    }
  }
  const double invn1 = 1.0 / static_cast<double>(set.size() - 1);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = i; j < d; ++j) {
      st.cov[i * d + j] *= invn1;
      st.cov[j * d + i] = st.cov[i * d + j];
    }
    st.cov[i * d + i] += eps;
  }
  return st;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. a is overwritten
// with the diagonalized matrix, v accumulates the rotations (columns are
// eigenvectors).
void jacobi_eigen(std::vector<double>& a, std::vector<double>& v, size_t d) {
  v.assign(d * d, 0.0);
  for (size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  if (d == 1) return;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t p = 0; p < d; ++p) {
      for (size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    }
    if (off < 1e-30) break;
    for (size_t p = 0; p < d; ++p) {
      for (size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (apq == 0.0) continue;
        const double app = a[p * d + p], aqq = a[q * d + q];
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p], vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }
}

std::vector<double> mat_mul(const std::vector<double>& a,
                            const std::vector<double>& b, size_t d) {
  std::vector<double> c(d * d, 0.0);
  for (size_t i = 0; i < d; ++i) {
    for (size_t p = 0; p < d; ++p) {
      const double aip = a[i * d + p];
      if (aip == 0.0) continue;
      for (size_t j = 0; j < d; ++j) c[i * d + j] += aip * b[p * d + j];
    }
  }
  return c;
}

}  // namespace

std::vector<double> matrix_sqrt_psd(const std::vector<double>& m, size_t d) {
  if (m.size() != d * d) {
    throw DataError("matrix_sqrt_psd: expected " + std::to_string(d * d) +
                    " entries, got " + std::to_string(m.size()));
  }
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = i + 1; j < d; ++j) {
      if (std::abs(m[i * d + j] - m[j * d + i]) > 1e-9) {
        throw DataError("matrix_sqrt_psd: input not symmetric within 1e-9");
      }
    }
  }
  std::vector<double> a = m, v;
  jacobi_eigen(a, v, d);
  std::vector<double> sq(d);
  for (size_t i = 0; i < d; ++i) {
    double lam = a[i * d + i];
    if (lam < -1e-10) {
      throw NumericError("matrix_sqrt_psd: negative eigenvalue " +
                         std::to_string(lam));
    }
    if (lam < 0.0) lam = 0.0;
    sq[i] = std::sqrt(lam);
  }
  // S = V sqrt(L) V^T
  std::vector<double> s(d * d, 0.0);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = i; j < d; ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < d; ++k) {
        acc += v[i * d + k] * sq[k] * v[j * d + k];
      }
      s[i * d + j] = acc;
      s[j * d + i] = acc;
    }
  }
  return s;
}

double fid_from_stats(const FidStats& a, const FidStats& b) {
  if (a.dim != b.dim) {
    throw DataError("fid: dimension mismatch: " + std::to_string(a.dim) +
                    " vs " + std::to_string(b.dim));
  }
  const size_t d = a.dim;
  double mu_term = 0.0;
  for (size_t i = 0; i < d; ++i) {
    const double diff = a.mu[i] - b.mu[i];
    mu_term += diff * diff;
  }
  double tr_a = 0.0, tr_b = 0.0;
  for (size_t i = 0; i < d; ++i) {
    tr_a += a.cov[i * d + i];
    tr_b += b.cov[i * d + i];
  }
  // Tr(sqrt(C1 C2)) computed stably as Tr(sqrt(S1 C2 S1)), S1 = sqrt(C1).
  const std::vector<double> s1 = matrix_sqrt_psd(a.cov, d);
  std::vector<double> mid = mat_mul(mat_mul(s1, b.cov, d), s1, d);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = i + 1; j < d; ++j) {
      const double sym = 0.5 * (mid[i * d + j] + mid[j * d + i]);
      mid[i * d + j] = sym;
      mid[j * d + i] = sym;
    }
  }
  const std::vector<double> cross = matrix_sqrt_psd(mid, d);
  double tr_cross = 0.0;
  for (size_t i = 0; i < d; ++i) tr_cross += cross[i * d + i];

  double d2 = mu_term + tr_a + tr_b - 2.0 * tr_cross;
  if (d2 < 0.0) {
    if (d2 < -1e-8) {
      throw NumericError("fid: distance came out negative: " +
                         std::to_string(d2));
    }
    d2 = 0.0;
  }
  return d2;
}

double fid(const std::vector<FeatureVec>& a, const std::vector<FeatureVec>& b) {
  return fid_from_stats(feature_stats(a), feature_stats(b));
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace t2f
