#pragma once

#include <string>
#include <utility>
#include <vector>

#include "convmfit/lm.hpp"

namespace convmfit {

// Pre-trained seq2seq conversation model: the counselor LM is the encoder
// body, the client LM the decoder body, each with fresh seq2seq LSTM layers
// stacked on top. The decoder seq2seq layers start from the encoder seq2seq
// final states, layerwise by index.
template <typename T>
struct ConversationModel {
  LanguageModel<T> counselor_lm;
  LanguageModel<T> client_lm;
  LstmStack<T> enc_s2s;
  LstmStack<T> dec_s2s;

  std::vector<std::pair<std::string, TensorPtr<T>>> named_params() const;
  ConversationModel<T> clone() const;
  int64_t param_count() const;
};

// LM parameters are carried over unchanged (deep copies); the new seq2seq
// layers are randomly initialized from `seed`. Both LMs must share one vocab
// and dimension.
template <typename T>
ConversationModel<T> build_conversation_model(const LanguageModel<T>& counselor_lm,
                                              const LanguageModel<T>& client_lm,
                                              int s2s_layers, double s2s_dropout,
                                              uint64_t seed);

// Encoded (counselor turn, following client turn) pair batch.
struct PairBatch {
  EncodedField counselor;  // <bos> counselor <eos>
  EncodedField client;     // <bos> client <eos>
  int64_t size() const { return counselor.batch; }
};

PairBatch encode_pairs(const std::vector<ConversationPair>& pairs, const Vocab& vocab,
                       int64_t max_len);

// The three equally weighted losses. total == l_enc + l_dec + l_s2s exactly;
// the LM losses run through the LM layers only, which is what protects the
// pre-trained models from drifting during seq2seq training.
template <typename T>
struct TriLossParts {
  TensorPtr<T> total, l_enc, l_dec, l_s2s;
};

template <typename T>
TriLossParts<T> tri_loss(Graph<T>& g, const ConversationModel<T>& model,
                         const PairBatch& batch, bool train, Rng& rng);

struct ConvTrainConfig {
  int batch = 32;
  int epochs = 10;
  double lr = 1e-3;
  uint64_t seed = 1;
  int patience = 5;
  int64_t max_len = 64;
  double valid_fraction = 0.1;
};

struct ConvEpochLog {
  int epoch = 0;
  std::string split;  // "train" | "valid"
  double l_enc = 0, l_dec = 0, l_s2s = 0, total = 0;
};

// Adam on the tri-loss over conversation pairs; stops at the validation
// total-loss minimum with the configured patience and restores that snapshot.
template <typename T>
std::vector<ConvEpochLog> train_conversation_model(ConversationModel<T>& model,
                                                   const std::vector<ConversationPair>& pairs,
                                                   const Vocab& vocab,
                                                   const ConvTrainConfig& config);

}  // namespace convmfit
