#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "inklab/image.hpp"
#include "inklab/layers.hpp"
#include "inklab/rng.hpp"

namespace inklab::fid {

/// Published seed for the fixed feature network. All scores produced by
/// this module are only comparable to scores from the same extractor; they
/// are NOT Inception-FID values.
inline constexpr uint64_t kExtractorSeed = 2718281828ULL;

/// Small dense double matrix (row-major), sized for feature statistics.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  static Matrix zeros(int r, int c);
  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

Matrix matmul(const Matrix& x, const Matrix& y);
Matrix transpose(const Matrix& x);

/// Fixed, never-trained conv network: 3 stride-2 conv+tanh stages and a
/// global average pool; weights are generated from the seed alone.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(int in_channels = 3, int feature_dim = 64,
                            uint64_t seed = kExtractorSeed);

  int feature_dim() const { return feature_dim_; }
  uint64_t seed() const { return seed_; }

  /// n x d feature matrix, row order matching input order.
  Matrix extract(const std::vector<vision::Image>& images) const;
  Matrix extract(const std::vector<const vision::Image*>& images) const;

 private:
  int in_channels_;
  int feature_dim_;
  uint64_t seed_;
  ParamRegistry reg_;
  Conv2d c1_, c2_, c3_;
};

struct GaussianStats {
  int n = 0;
  std::vector<double> mu;
  Matrix sigma;  // unbiased covariance (divisor n-1)
};

/// Column means and unbiased covariance; needs at least 2 rows.
GaussianStats fit_gaussian(const Matrix& features);

/// Symmetric PSD square root via eigendecomposition with eigenvalues
/// clamped at zero. Input asymmetry beyond 1e-6 is an error.
Matrix matrix_sqrt_psd(const Matrix& a);

/// Frechet distance |mu1-mu2|^2 + tr(S1 + S2 - 2 sqrtm(S1 S2)), with the
/// cross term computed as sqrtm(sqrt(S1) S2 sqrt(S1)); clamped at zero.
double fid(const GaussianStats& s1, const GaussianStats& s2);

/// Mean-only distance |mu1-mu2|^2 for the single-reference-image mode,
/// where covariance is degenerate by construction.
double fid_mean_only(const GaussianStats& s1, const GaussianStats& s2);

struct EvalOptions {
  int repeats = 10;
  int samples_per_repeat = 64;
  int ref_per_repeat = 0;  // 0: use the whole reference pool each repeat
  bool single_image_mode = false;
  uint64_t extractor_seed = kExtractorSeed;
  int feature_dim = 64;
};

struct FIDReport {
  std::vector<double> scores;
  double mean = 0.0;
  std::vector<std::pair<std::string, std::string>> config_echo;

  /// Config-echo header ('# key value'), one score per line, final line
  /// "mean <value>".
  std::string to_text() const;
};

using GeneratorFn = std::function<std::vector<vision::Image>(int count, Rng& rng)>;

/// The repeated protocol: per repeat, draw generated images from the
/// callback and a reference set from the pool, fit Gaussians to extractor
/// features of each side, record the distance; the report carries all
/// per-repeat scores and their mean.
FIDReport eval_protocol(const GeneratorFn& generator, const std::vector<vision::Image>& reference_pool,
                        const EvalOptions& opts, Rng& rng);

}  // namespace inklab::fid
