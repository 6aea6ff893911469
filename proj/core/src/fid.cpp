#include "inklab/fid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "inklab/tensor.hpp"
#include "inklab/tensor_image.hpp"

namespace inklab::fid {

Matrix Matrix::zeros(int r, int c) {
  Matrix m;
  m.rows = r;
  m.cols = c;
  m.a.assign(static_cast<size_t>(r) * c, 0.0);
  return m;
}

Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) throw std::invalid_argument("Matrix matmul: inner dimensions differ");
  Matrix out = Matrix::zeros(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const double v = x.at(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) out.at(i, j) += v * y.at(k, j);
    }
  return out;
}

Matrix transpose(const Matrix& x) {
  Matrix out = Matrix::zeros(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
  return out;
}

FeatureExtractor::FeatureExtractor(int in_channels, int feature_dim, uint64_t seed)
    : in_channels_(in_channels), feature_dim_(feature_dim), seed_(seed) {
  if (feature_dim % 4 != 0) throw std::invalid_argument("FeatureExtractor: feature_dim must be divisible by 4");
  Rng rng(seed);
  const int c1 = feature_dim / 4, c2 = feature_dim / 2;
  c1_ = Conv2d(reg_, "c1", in_channels, c1, 3, 2, 1, rng);
  c2_ = Conv2d(reg_, "c2", c1, c2, 3, 2, 1, rng);
  c3_ = Conv2d(reg_, "c3", c2, feature_dim, 3, 2, 1, rng);
  reg_.lock_all();  // never trained
}

Matrix FeatureExtractor::extract(const std::vector<vision::Image>& images) const {
  std::vector<const vision::Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& im : images) ptrs.push_back(&im);
  return extract(ptrs);
}

Matrix FeatureExtractor::extract(const std::vector<const vision::Image*>& images) const {
  if (images.empty()) throw std::invalid_argument("extract_features: empty input");
  NoGradGuard no_grad;

  Matrix feats = Matrix::zeros(static_cast<int>(images.size()), feature_dim_);
  // batched in slabs to bound memory
  const size_t slab = 16;
  for (size_t begin = 0; begin < images.size(); begin += slab) {
    const size_t end = std::min(images.size(), begin + slab);
    std::vector<const vision::Image*> part(images.begin() + static_cast<ptrdiff_t>(begin),
                                           images.begin() + static_cast<ptrdiff_t>(end));
    for (const auto* im : part)
      if (im->channels != in_channels_)
        throw std::invalid_argument("extract_features: image channel count mismatch");
    Tensor x = images_to_pm1(part);
    Tensor h = inklab::tanh(c1_(x));
    h = inklab::tanh(c2_(h));
    h = inklab::tanh(c3_(h));
    // global average pool
    const int b = h.dim(0), c = h.dim(1), hw = h.dim(2) * h.dim(3);
    const float* hv = h.data().data();
    for (int bi = 0; bi < b; ++bi)
      for (int ci = 0; ci < c; ++ci) {
        double s = 0.0;
        const float* row = hv + (static_cast<size_t>(bi) * c + ci) * hw;
        for (int i = 0; i < hw; ++i) s += row[i];
        feats.at(static_cast<int>(begin) + bi, ci) = s / hw;
      }
  }
  return feats;
}

GaussianStats fit_gaussian(const Matrix& features) {
  if (features.rows < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
  GaussianStats st;
  st.n = features.rows;
  st.mu.assign(static_cast<size_t>(features.cols), 0.0);
  for (int i = 0; i < features.rows; ++i)
    for (int j = 0; j < features.cols; ++j) st.mu[static_cast<size_t>(j)] += features.at(i, j);
  for (auto& v : st.mu) v /= features.rows;

  st.sigma = Matrix::zeros(features.cols, features.cols);
  for (int i = 0; i < features.rows; ++i)
    for (int j = 0; j < features.cols; ++j) {
      const double dj = features.at(i, j) - st.mu[static_cast<size_t>(j)];
      for (int k = j; k < features.cols; ++k)
        st.sigma.at(j, k) += dj * (features.at(i, k) - st.mu[static_cast<size_t>(k)]);
    }
  for (int j = 0; j < features.cols; ++j)
    for (int k = j; k < features.cols; ++k) {
      const double v = st.sigma.at(j, k) / (features.rows - 1);
      st.sigma.at(j, k) = v;
      st.sigma.at(k, j) = v;
    }
  return st;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix: a = q diag(l) q^T.
void jacobi_eigh(Matrix a, Matrix& q, std::vector<double>& lam) {
  const int n = a.rows;
  q = Matrix::zeros(n, n);
  for (int i = 0; i < n; ++i) q.at(i, i) = 1.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int r = p + 1; r < n; ++r) off += a.at(p, r) * a.at(p, r);
    if (off < 1e-24) break;

    for (int p = 0; p < n; ++p)
      for (int r = p + 1; r < n; ++r) {
        const double apq = a.at(p, r);
        if (apq == 0.0) continue;
        const double app = a.at(p, p), aqq = a.at(r, r);
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, r);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, r) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(r, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(r, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double qkp = q.at(k, p), qkq = q.at(k, r);
          q.at(k, p) = c * qkp - s * qkq;
          q.at(k, r) = s * qkp + c * qkq;
        }
      }
  }
  lam.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) lam[static_cast<size_t>(i)] = a.at(i, i);
}

double frobenius(const Matrix& m) {
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Matrix matrix_sqrt_psd(const Matrix& a) {
  if (a.rows != a.cols) throw std::invalid_argument("matrix_sqrt_psd: square matrix required");
  double asym = 0.0;
  for (int i = 0; i < a.rows; ++i)
    for (int j = i + 1; j < a.cols; ++j) asym = std::max(asym, std::abs(a.at(i, j) - a.at(j, i)));
  if (asym > 1e-6 * (1.0 + frobenius(a)))
    throw std::invalid_argument("matrix_sqrt_psd: input is not symmetric");

  // symmetrize exactly before decomposing
  Matrix s = Matrix::zeros(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) s.at(i, j) = 0.5 * (a.at(i, j) + a.at(j, i));

  Matrix q;
  std::vector<double> lam;
  jacobi_eigh(s, q, lam);
  for (auto& l : lam) l = l > 0.0 ? std::sqrt(l) : 0.0;

  Matrix scaled = q;  // q * diag(sqrt(lam))
  for (int i = 0; i < q.rows; ++i)
    for (int j = 0; j < q.cols; ++j) scaled.at(i, j) = q.at(i, j) * lam[static_cast<size_t>(j)];
  return matmul(scaled, transpose(q));
}

double fid(const GaussianStats& s1, const GaussianStats& s2) {
  if (s1.mu.size() != s2.mu.size()) throw std::invalid_argument("fid: dimension mismatch");
  double mean_term = 0.0;
  for (size_t i = 0; i < s1.mu.size(); ++i) {
    const double d = s1.mu[i] - s2.mu[i];
    mean_term += d * d;
  }

  // tr(S1 + S2 - 2 sqrtm(sqrt(S1) S2 sqrt(S1)))
  const Matrix r1 = matrix_sqrt_psd(s1.sigma);
  const Matrix cross = matrix_sqrt_psd(matmul(matmul(r1, s2.sigma), r1));
  double trace_term = 0.0;
  for (int i = 0; i < s1.sigma.rows; ++i)
    trace_term += s1.sigma.at(i, i) + s2.sigma.at(i, i) - 2.0 * cross.at(i, i);

  return std::max(0.0, mean_term + trace_term);
}

double fid_mean_only(const GaussianStats& s1, const GaussianStats& s2) {
  if (s1.mu.size() != s2.mu.size()) throw std::invalid_argument("fid: dimension mismatch");
  double mean_term = 0.0;
  for (size_t i = 0; i < s1.mu.size(); ++i) {
    const double d = s1.mu[i] - s2.mu[i];
    mean_term += d * d;
  }
  return mean_term;
}

std::string FIDReport::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : config_echo) os << "# " << k << ' ' << v << '\n';
  os.precision(10);
  for (double s : scores) os << s << '\n';
  os << "mean " << mean << '\n';
  return os.str();
}

FIDReport eval_protocol(const GeneratorFn& generator, const std::vector<vision::Image>& reference_pool,
                        const EvalOptions& opts, Rng& rng) {
  if (opts.repeats < 1) throw std::invalid_argument("eval_protocol: repeats must be >= 1");
  if (reference_pool.empty()) throw std::invalid_argument("eval_protocol: empty reference pool");
  const int min_ref = opts.single_image_mode ? 1 : 2;
  if (!opts.single_image_mode && opts.samples_per_repeat < 2)
    throw std::invalid_argument("eval_protocol: need at least 2 samples per repeat");

  const FeatureExtractor extractor(reference_pool[0].channels, opts.feature_dim, opts.extractor_seed);

  FIDReport report;
  report.config_echo = {
      {"extractor_seed", std::to_string(opts.extractor_seed)},
      {"feature_dim", std::to_string(opts.feature_dim)},
      {"repeats", std::to_string(opts.repeats)},
      {"samples_per_repeat", std::to_string(opts.samples_per_repeat)},
      {"ref_per_repeat",
       std::to_string(opts.ref_per_repeat == 0 ? static_cast<int>(reference_pool.size())
                                               : opts.ref_per_repeat)},
      {"single_image_mode", opts.single_image_mode ? "true" : "false"},
  };

  for (int rep = 0; rep < opts.repeats; ++rep) {
    std::vector<vision::Image> generated;
    try {
      generated = generator(opts.samples_per_repeat, rng);
    } catch (const std::exception& e) {
      throw std::runtime_error("eval_protocol: generator failed at repeat " + std::to_string(rep) +
                               ": " + e.what());
    }
    if (static_cast<int>(generated.size()) != opts.samples_per_repeat)
      throw std::runtime_error("eval_protocol: generator returned wrong count at repeat " +
                               std::to_string(rep));

    // reference draw
    std::vector<const vision::Image*> ref;
    const int want = opts.single_image_mode
                         ? 1
                         : (opts.ref_per_repeat == 0 ? static_cast<int>(reference_pool.size())
                                                     : opts.ref_per_repeat);
    if (want <= min_ref - 1 || want > static_cast<int>(reference_pool.size()) * 4)
      throw std::invalid_argument("eval_protocol: bad reference count");
    if (want == static_cast<int>(reference_pool.size())) {
      for (const auto& im : reference_pool) ref.push_back(&im);
    } else {
      for (int i = 0; i < want; ++i)
        ref.push_back(&reference_pool[static_cast<size_t>(
            rng.uniform_int(static_cast<int64_t>(reference_pool.size())))]);
    }

    const Matrix gen_feats = extractor.extract(generated);
    const Matrix ref_feats = extractor.extract(ref);

    double score;
    if (opts.single_image_mode) {
      // literal single-reference variant: mean-only distance
      GaussianStats g1, g2;
      g1.mu.assign(static_cast<size_t>(gen_feats.cols), 0.0);
      for (int i = 0; i < gen_feats.rows; ++i)
        for (int j = 0; j < gen_feats.cols; ++j) g1.mu[static_cast<size_t>(j)] += gen_feats.at(i, j);
      for (auto& v : g1.mu) v /= gen_feats.rows;
      g2.mu.assign(static_cast<size_t>(ref_feats.cols), 0.0);
      for (int j = 0; j < ref_feats.cols; ++j) g2.mu[static_cast<size_t>(j)] = ref_feats.at(0, j);
      score = fid_mean_only(g1, g2);
    } else {
      score = fid(fit_gaussian(gen_feats), fit_gaussian(ref_feats));
    }
    report.scores.push_back(score);
  }

  report.mean = std::accumulate(report.scores.begin(), report.scores.end(), 0.0) /
                static_cast<double>(report.scores.size());
  return report;
}

}  // namespace inklab::fid
