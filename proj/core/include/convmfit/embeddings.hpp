#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convmfit/tensor.hpp"
#include "convmfit/vocab.hpp"

namespace convmfit {

// Pre-trained word vectors; inputs of every model. Row count includes the
// reserved tokens; the <pad> row is all-zero and never updated.
template <typename T>
struct EmbeddingMatrix {
  int64_t dim = 0;
  TensorPtr<T> weights;  // [V x dim]
  uint64_t vocab_hash = 0;
};

struct SkipgramConfig {
  int64_t dim = 300;
  int window = 4;
  int negatives = 5;
  int epochs = 5;
  double lr = 0.05;
  uint64_t seed = 1;
};

template <typename T>
struct SkipgramResult {
  EmbeddingMatrix<T> embeddings;
  std::vector<double> epoch_loss;  // mean negative-sampling logistic loss
};

// Skip-gram with negative sampling over tokenized utterances. Deterministic
// under a fixed seed; reserved tokens other than <unk> stay at their random
// initialization, <pad> stays zero.
template <typename T>
SkipgramResult<T> train_skipgram(const std::vector<std::vector<std::string>>& utterances,
                                 const Vocab& vocab, const SkipgramConfig& config);

// dot(u, v) / (|u| |v|); zero vectors are an error.
double cosine(const std::vector<double>& u, const std::vector<double>& v);

template <typename T>
std::vector<double> embedding_row(const EmbeddingMatrix<T>& m, int64_t id);

// Binary format: magic "CMEV", version, vocab content hash, V, dim, then
// row-major 32-bit little-endian values.
template <typename T>
void save_embeddings(const std::string& path, const EmbeddingMatrix<T>& m);

template <typename T>
EmbeddingMatrix<T> load_embeddings(const std::string& path, const Vocab& vocab);

}  // namespace convmfit
