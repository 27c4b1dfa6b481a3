#pragma once

#include "convmfit/rng.hpp"
#include "convmfit/tensor.hpp"

namespace convmfit {

enum class DropoutKind { kStandard, kEmbeddingRow, kVariational };

// Inverted dropout: survivors are scaled by 1/(1-p) at train time so that
// eval mode is the exact identity (no op is applied at all when !active).
struct DropoutSpec {
  DropoutKind kind = DropoutKind::kStandard;
  double rate = 0.0;
  bool active = true;  // train vs eval
};

// One Bernoulli(1-p)/(1-p) mask of shape [batch x hidden], sampled once per
// sequence and reused at every time step of that sequence (variational
// dropout). p == 0 yields an all-ones mask.
template <typename T>
TensorPtr<T> variational_dropout_mask(int64_t batch, int64_t hidden, double p, Rng& rng);

// Whole-row mask over an embedding table: row v is zeroed with probability p,
// survivors scaled by 1/(1-p). Every occurrence of a dropped word in the
// batch sees the same zero row.
template <typename T>
std::vector<T> embedding_dropout_mask(int64_t vocab_size, double p, Rng& rng);

// Standard elementwise dropout on an activation tensor. Identity when the
// spec is inactive or p == 0.
template <typename T>
TensorPtr<T> apply_dropout(Graph<T>& g, const TensorPtr<T>& x, const DropoutSpec& spec,
                           Rng& rng);

}  // namespace convmfit
