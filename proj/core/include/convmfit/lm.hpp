#pragma once

#include <string>
#include <utility>
#include <vector>

#include "convmfit/corpus.hpp"
#include "convmfit/embeddings.hpp"
#include "convmfit/lstm.hpp"

namespace convmfit {

// Role-specific word-level language model: tied embedding, multilayer LSTM,
// output projection through the embedding matrix (weight tying: the same
// tensor serves as lookup table and head, so one gradient step moves both).
template <typename T>
struct LanguageModel {
  Role role = Role::kClient;
  TensorPtr<T> embedding;  // [V x d]; also the output projection
  LstmStack<T> stack;
  double embedding_dropout = 0.2;

  int64_t vocab_size() const { return embedding ? embedding->rows() : 0; }
  int64_t dim() const { return embedding ? embedding->cols() : 0; }

  // Embedding rows must match the LM hidden size; the stack is initialized
  // from the fork of `seed`, the embedding is copied from the word vectors.
  static LanguageModel<T> create(Role role, const EmbeddingMatrix<T>& vectors,
                                 int n_layers, double emb_dropout, double out_dropout,
                                 uint64_t seed);

  // Per-step embedded inputs for a row-major [batch x width] id block. One
  // embedding-dropout row mask is sampled per call in train mode, so every
  // occurrence of a dropped word in the batch is zeroed identically.
  std::vector<TensorPtr<T>> embed_steps(Graph<T>& g, const std::vector<int64_t>& ids,
                                        int64_t batch, int64_t width, bool train,
                                        Rng& rng) const;

  // Tied projection: hidden_rows [R x d] -> logits [R x V].
  TensorPtr<T> tied_logits(Graph<T>& g, const TensorPtr<T>& hidden_rows) const;

  std::vector<std::pair<std::string, TensorPtr<T>>> named_params(
      const std::string& prefix) const;

  LanguageModel<T> clone() const;
};

struct LMTrainConfig {
  int batch = 32;
  int seq_len = 32;
  int epochs = 10;
  double lr = 1e-3;
  uint64_t seed = 1;
  double embedding_dropout = 0.2;
  double output_dropout = 0.1;
  double valid_fraction = 0.1;
  // fine-tuning runs at lr / finetune_lr_divisor and stops once validation
  // perplexity exceeds its minimum by finetune_stop_tolerance
  double finetune_lr_divisor = 10.0;
  double finetune_stop_tolerance = 0.05;
  int finetune_epochs = 5;
};

struct LMEpochLog {
  int epoch = 0;
  std::string split;  // "train" | "valid"
  double perplexity = 0.0;
};

template <typename T>
struct LMTrainResult {
  LanguageModel<T> model;
  std::vector<LMEpochLog> log;
};

// Next-token training over the <eos>-joined utterance stream with truncated
// backpropagation (window = seq_len, state carried across windows).
template <typename T>
LMTrainResult<T> train_language_model(Role role,
                                      const std::vector<std::vector<std::string>>& utterances,
                                      const Vocab& vocab, const EmbeddingMatrix<T>& vectors,
                                      const LMTrainConfig& config);

// Continued training on labeled-set utterances at a reduced learning rate;
// returns the minimum-validation-perplexity snapshot. `role` must match the
// model. Zero epochs leaves the model bitwise unchanged.
template <typename T>
std::vector<LMEpochLog> finetune_language_model(
    LanguageModel<T>& lm, Role role,
    const std::vector<std::vector<std::string>>& utterances, const Vocab& vocab,
    const LMTrainConfig& config);

// exp(mean token cross-entropy) over the stream, batch-1 evaluation with
// carried state; >= 1 by construction.
template <typename T>
double perplexity(const LanguageModel<T>& lm, const std::vector<int64_t>& stream,
                  int seq_len = 64);

}  // namespace convmfit
