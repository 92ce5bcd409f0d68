// SPDX-License-Identifier: Apache-2.0
#include "semalign/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "semalign/common/errors.hpp"

namespace semalign::eval {

template <typename Real>
std::size_t argmax_row(const Matrix<Real>& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < m.cols(); ++c)
    if (m(row, c) > m(row, best)) best = c;
  return best;
}

template <typename Real>
double top1_accuracy(const Matrix<Real>& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw InvalidArgument("top1_accuracy: no rows");
  if (labels.size() != logits.rows()) throw InvalidArgument("top1_accuracy: label count does not match rows");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i)
    if (static_cast<int>(argmax_row(logits, i)) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

template <typename Real>
RetrievalResult retrieval_diag(const Matrix<Real>& features, const Matrix<Real>& bank,
                               std::span<const std::size_t> pairing,
                               std::span<const std::size_t> duplicate_of) {
  const std::size_t n = features.rows();
  const std::size_t m = bank.rows();
  if (n == 0 || m == 0) throw InvalidArgument("retrieval_diag: empty features or bank");
  if (features.cols() != bank.cols()) throw InvalidArgument("retrieval_diag: dimension mismatch");
  if (pairing.size() != n) throw InvalidArgument("retrieval_diag: pairing size does not match features");
  if (!duplicate_of.empty() && duplicate_of.size() != m) {
    throw InvalidArgument("retrieval_diag: duplicate key count does not match bank");
  }
  auto norm = [](std::span<const Real> v) {
    double s = 0;
    for (Real x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
  };
  std::vector<double> bank_norm(m);
  for (std::size_t j = 0; j < m; ++j) {
    bank_norm[j] = norm(bank.row(j));
    if (bank_norm[j] == 0) throw DegenerateInput("retrieval_diag: zero-norm bank row " + std::to_string(j));
  }
  RetrievalResult out;
  out.ranks.resize(n);
  std::vector<double> score(m);
  for (std::size_t i = 0; i < n; ++i) {
    if (pairing[i] >= m) throw InvalidArgument("retrieval_diag: pairing index out of range");
    const double fn = norm(features.row(i));
    if (fn == 0) throw DegenerateInput("retrieval_diag: zero-norm feature row " + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < bank.cols(); ++c) dot += static_cast<double>(features(i, c)) * bank(j, c);
      score[j] = dot / (fn * bank_norm[j]);
    }
    const std::size_t truth = pairing[i];
    double best = score[truth];
    if (!duplicate_of.empty()) {
      for (std::size_t j = 0; j < m; ++j)
        if (duplicate_of[j] == duplicate_of[truth]) best = std::max(best, score[j]);
    }
    std::size_t higher = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const bool same = duplicate_of.empty() ? j == truth : duplicate_of[j] == duplicate_of[truth];
      if (!same && score[j] > best) ++higher;
    }
    out.ranks[i] = higher + 1;
  }
  std::vector<std::size_t> sorted = out.ranks;
  std::sort(sorted.begin(), sorted.end());
  out.median_rank = n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                               : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);
  out.recall_at_1 = static_cast<double>(std::count(out.ranks.begin(), out.ranks.end(), std::size_t{1})) /
                    static_cast<double>(n);
  return out;
}

template <typename Real>
encoders::BatchFeatures<Real> encode_split(const encoders::Model<Real>& model,
                                           const std::vector<synth::Sample>& samples, std::size_t batch) {
  if (samples.empty()) throw InvalidArgument("encode_split: empty split");
  if (batch == 0) throw InvalidArgument("encode_split: batch must be positive");
  const std::size_t n = samples.size();
  const std::size_t de = model.config().embed_dim;
  const std::size_t k = model.config().num_classes;
  encoders::BatchFeatures<Real> out{Matrix<Real>(n, de), Matrix<Real>(n, de), Matrix<Real>(n, k)};
  std::vector<const synth::VideoClip*> clips;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    clips.clear();
    for (std::size_t i = start; i < end; ++i) clips.push_back(&samples[i].clip);
    const auto f = model.encode_videos(clips);
    for (std::size_t i = start; i < end; ++i) {
      std::copy_n(f.f_mid.row(i - start).data(), de, out.f_mid.row(i).data());
      std::copy_n(f.f_high.row(i - start).data(), de, out.f_high.row(i).data());
      std::copy_n(f.logits.row(i - start).data(), k, out.logits.row(i).data());
    }
  }
  return out;
}

std::vector<int> labels_of(const std::vector<synth::Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.category_id);
  return out;
}

#define SEMALIGN_INSTANTIATE(Real)                                                                        \
  template std::size_t argmax_row<Real>(const Matrix<Real>&, std::size_t);                               \
  template double top1_accuracy<Real>(const Matrix<Real>&, std::span<const int>);                        \
  template RetrievalResult retrieval_diag<Real>(const Matrix<Real>&, const Matrix<Real>&,                \
                                                std::span<const std::size_t>, std::span<const std::size_t>); \
  template encoders::BatchFeatures<Real> encode_split<Real>(const encoders::Model<Real>&,                \
                                                            const std::vector<synth::Sample>&, std::size_t);

SEMALIGN_INSTANTIATE(float)
SEMALIGN_INSTANTIATE(double)
#undef SEMALIGN_INSTANTIATE

}  // namespace semalign::eval
