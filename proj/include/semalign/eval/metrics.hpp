// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "semalign/common/matrix.hpp"
#include "semalign/encoders/model.hpp"
#include "semalign/synth/dataset.hpp"

namespace semalign::eval {

/// Row argmax with the lowest index winning ties.
template <typename Real>
std::size_t argmax_row(const Matrix<Real>& m, std::size_t row);

/// Fraction of rows whose argmax equals the label. Throws InvalidArgument when
/// N is 0 or the label count differs from the row count.
template <typename Real>
double top1_accuracy(const Matrix<Real>& logits, std::span<const int> labels);

struct RetrievalResult {
  double median_rank = 0;
  double recall_at_1 = 0;
  std::vector<std::size_t> ranks;  ///< 1-based, per query
};

/// Ranks bank rows by cosine similarity to each feature row. pairing[i] is the
/// bank row of query i's true text. Competition ranking: rank = 1 + number of
/// bank rows scoring strictly higher than the best-scoring row that is a
/// duplicate of the true text. `duplicate_of[m]`, when non-empty, assigns every
/// bank row an equivalence key; rows sharing the true row's key count as correct.
template <typename Real>
RetrievalResult retrieval_diag(const Matrix<Real>& features, const Matrix<Real>& bank,
                               std::span<const std::size_t> pairing,
                               std::span<const std::size_t> duplicate_of = {});

/// Visual features of every sample of a split, computed in chunks of
/// `batch` clips.
template <typename Real>
encoders::BatchFeatures<Real> encode_split(const encoders::Model<Real>& model,
                                           const std::vector<synth::Sample>& samples, std::size_t batch);

std::vector<int> labels_of(const std::vector<synth::Sample>& samples);

}  // namespace semalign::eval
