#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "convmfit/rng.hpp"
#include "convmfit/vocab.hpp"

namespace convmfit {

enum class Role { kCounselor, kClient };

// The five client-utterance categories, in canonical multi-hot order.
enum class Label : int { kFact = 0, kAnec = 1, kProb = 2, kChan = 3, kProc = 4 };
constexpr int kNumLabels = 5;

const char* label_name(Label l);
std::optional<Label> label_from_name(const std::string& name);
const char* role_name(Role r);

using LabelSet = std::array<uint8_t, kNumLabels>;  // multi-hot

// A single text bubble. Only client utterances may carry labels.
struct Utterance {
  std::string text;
  Role role = Role::kClient;
  std::vector<Label> labels;  // empty = unlabeled
};

// Maximal run of consecutive utterances by one role.
struct Turn {
  Role role = Role::kClient;
  std::vector<Utterance> utterances;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
};

// Classification unit: one per (labeled) client utterance. Fields hold
// tokens; <sep> joins multiple utterances within a field. Ids are assigned
// at encode time.
struct Triple {
  std::string id;  // "<dialogue id>:<running index>"
  std::vector<std::string> counselor_tokens;  // nearest preceding counselor turn
  std::vector<std::string> context_tokens;    // earlier utterances of the same client turn
  std::vector<std::string> target_tokens;     // the utterance being classified
  LabelSet labels{};                           // all zero when unlabeled
};

// Whitespace split, then punctuation and emoji detached as single-character
// tokens. Bracketed anonymization markers ("[client's name]") and the digit
// mask "#" survive as single tokens.
std::vector<std::string> tokenize(const std::string& text);

// One triple per client utterance (per labeled client utterance when
// labeled_only). Counselor field: all utterances of the nearest preceding
// counselor turn, <sep>-joined; empty if the dialogue opens with a client
// turn. Context field: earlier utterances within the same client turn.
std::vector<Triple> build_triples(const Dialogue& dialogue, bool labeled_only);

std::vector<Triple> build_triples(const std::vector<Dialogue>& dialogues,
                                  bool labeled_only);

// Split at dialogue granularity: every triple of one dialogue lands in one
// split. Ratios must sum to 1.
struct DatasetSplit {
  std::vector<Dialogue> train, valid, test;
};
DatasetSplit split_dataset(const std::vector<Dialogue>& dialogues,
                           const std::array<double, 3>& ratios, uint64_t seed);

// ---- dialogue file format ---------------------------------------------------
// One dialogue per line as a JSON record:
//   {"id": "...", "turns": [{"role": "counselor"|"client",
//     "utterances": [{"text": "...", "labels": ["Fact", ...]?}]}]}
// Counselor utterances must not carry labels.
void write_dialogues(const std::string& path, const std::vector<Dialogue>& dialogues,
                     bool with_labels);
std::vector<Dialogue> read_dialogues(const std::string& path);

// ---- synthetic corpus -------------------------------------------------------

// Deterministic stand-in for the proprietary counseling corpus. Client
// utterances are sampled from category-conditioned token pools plus shared
// noise; counselor utterances mix probe tokens correlated with the upcoming
// client category. label_mix defaults follow the observed label proportions
// of the original dataset.
struct SynthConfig {
  int64_t n_dialogues = 300;
  int64_t vocab_size = 400;  // >= 50
  std::array<double, 5> label_mix{0.054, 0.366, 0.318, 0.061, 0.306};
  double two_label_fraction = 0.10;
  uint64_t seed = 1;

  int turn_pairs_min = 3, turn_pairs_max = 6;
  int counselor_utts_min = 1, counselor_utts_max = 2;
  int client_utts_min = 1, client_utts_max = 3;
  int utt_tokens_min = 3, utt_tokens_max = 9;

  // When > 0, each category owns one exclusive bigram that is planted into
  // single-label client utterances of that category with this probability.
  double planted_bigram_prob = 0.0;
};

std::vector<Dialogue> generate_synthetic_corpus(const SynthConfig& config);

// The two tokens of the category's planted bigram, for test oracles.
std::array<std::string, 2> planted_bigram_tokens(Label category);

// ---- encoding ---------------------------------------------------------------

// Row-major [batch x width] id/mask arrays. Sequences are wrapped in
// <bos>/<eos> (content truncated to max_len - 2 first) and padded with <pad>.
struct EncodedField {
  std::vector<int64_t> ids;
  std::vector<double> mask;  // 1 on real tokens (specials included), 0 on pads
  int64_t batch = 0;
  int64_t width = 0;

  int64_t id_at(int64_t row, int64_t col) const { return ids[row * width + col]; }
  double mask_at(int64_t row, int64_t col) const { return mask[row * width + col]; }
};

struct EncodedBatch {
  EncodedField counselor;     // <bos> counselor <eos>
  EncodedField client;        // <bos> context <sep> target <eos>
  EncodedField context_only;  // <bos> context <eos>
  EncodedField target_only;   // <bos> target <eos>
  std::vector<double> labels;  // [batch x 5] multi-hot
  std::vector<std::string> triple_ids;
  // Original token per position (empty string on pads, "<bos>" etc. on
  // specials); used for attention reporting.
  std::vector<std::string> counselor_pos_tokens;
  std::vector<std::string> client_pos_tokens;

  int64_t size() const { return counselor.batch; }
};

EncodedBatch encode_batch(const std::vector<Triple>& triples, const Vocab& vocab,
                          int64_t max_len);

// ---- model corpora ----------------------------------------------------------

// Tokens of every utterance of one role, dialogue order preserved; the raw
// material of the role LM streams and the skip-gram corpus.
std::vector<std::vector<std::string>> role_utterances(
    const std::vector<Dialogue>& dialogues, Role role);

std::vector<std::vector<std::string>> all_utterances(
    const std::vector<Dialogue>& dialogues);

// Utterances joined into one id stream with <eos> separators.
std::vector<int64_t> lm_stream(const std::vector<std::vector<std::string>>& utterances,
                               const Vocab& vocab);

// (counselor turn, following client turn) pairs for conversation-model
// pre-training; multiple utterances within a turn are <sep>-joined.
struct ConversationPair {
  std::vector<std::string> counselor_tokens;
  std::vector<std::string> client_tokens;
};
std::vector<ConversationPair> extract_conversation_pairs(
    const std::vector<Dialogue>& dialogues);

}  // namespace convmfit
