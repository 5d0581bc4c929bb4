#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "t2f/tensor.hpp"
#include "t2f/vgg.hpp"

namespace t2f {

using FeatureVec = std::vector<double>;
using FeaturePair = std::pair<FeatureVec, FeatureVec>;

/// Resizes to 299x299, extracts the conv5_3 map and global-average-pools it.
/// Deterministic; replaceable by feature files at the CLI level.
FeatureVec face_features(const FeatureExtractor& fe, const Tensor& img);

enum class FsdMode {
  PairL2,   // mean over pairs of ||a - b||_2 (default reading)
  MeanAbs,  // mean over pairs of mean_i |a_i - b_i|
};

/// Face Semantic Distance: mean pairwise feature distance.
double fsd(const std::vector<FeaturePair>& pairs,
           FsdMode mode = FsdMode::PairL2);

/// Face Semantic Similarity: mean pairwise cosine similarity in [-1,1]
/// (reported x100 as a percent). Zero-norm vectors are an error.
double fss(const std::vector<FeaturePair>& pairs);

/// Mean and epsilon-regularized covariance (1/(N-1)) of a feature set.
struct FidStats {
  size_t dim = 0;
  std::vector<double> mu;   // [D]
  std::vector<double> cov;  // [D*D] row-major, symmetric
};

FidStats feature_stats(const std::vector<FeatureVec>& set, double eps = 1e-6);

/// Square root of a symmetric PSD matrix via symmetric eigendecomposition.
/// Eigenvalues in [-1e-10, 0] are clipped to 0; anything more negative is a
/// NumericError. Asymmetry beyond 1e-9 is a DataError.
std::vector<double> matrix_sqrt_psd(const std::vector<double>& m, size_t d);

/// Frechet distance between two Gaussians:
/// d^2 = ||mu1-mu2||^2 + Tr(C1 + C2 - 2 sqrt(C1 C2)), with the cross term
/// computed as Tr(sqrt(sqrt(C1) C2 sqrt(C1))). Results within -1e-8 of zero
/// clamp to 0.
double fid_from_stats(const FidStats& a, const FidStats& b);

/// FID over two feature sets (each needs >= 2 samples of equal dimension).
double fid(const std::vector<FeatureVec>& a, const std::vector<FeatureVec>& b);

/// Stable decimal formatting used by every report writer.
std::string format_value(double v);

}  // namespace t2f
