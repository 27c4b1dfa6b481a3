#include "convmfit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "convmfit/errors.hpp"

namespace convmfit {

namespace {
const char* kLabelNames[kNumLabels] = {"Fact", "Anec", "Prob", "Chan", "Proc"};
}

const char* label_name(Label l) { return kLabelNames[static_cast<int>(l)]; }

std::optional<Label> label_from_name(const std::string& name) {
  for (int i = 0; i < kNumLabels; ++i) {
    if (name == kLabelNames[i]) return static_cast<Label>(i);
  }
  return std::nullopt;
}

const char* role_name(Role r) { return r == Role::kCounselor ? "counselor" : "client"; }

// ---- tokenizer ---------------------------------------------------------------

namespace {

// decodes one UTF-8 codepoint starting at s[i]; advances i
uint32_t decode_utf8(const std::string& s, size_t& i) {
  const unsigned char c = s[i];
  uint32_t cp = c;
  int extra = 0;
  if (c >= 0xF0) {
    cp = c & 0x07;
    extra = 3;
  } else if (c >= 0xE0) {
    cp = c & 0x0F;
    extra = 2;
  } else if (c >= 0xC0) {
    cp = c & 0x1F;
    extra = 1;
  }
  ++i;
  for (int k = 0; k < extra && i < s.size(); ++k, ++i) {
    cp = (cp << 6) | (s[i] & 0x3F);
  }
  return cp;
}

bool is_ascii_punct(uint32_t cp) {
  return cp < 128 && std::strchr("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~", static_cast<char>(cp));
}

bool is_emoji(uint32_t cp) {
  return (cp >= 0x1F300 && cp <= 0x1FAFF) ||  // pictographs, emoticons, symbols
         (cp >= 0x2600 && cp <= 0x27BF) ||    // misc symbols, dingbats
         (cp >= 0x1F000 && cp <= 0x1F0FF) ||  // mahjong/domino/cards
         cp == 0x2764;                        // heavy heart
}

void append_codepoint(std::string& out, const std::string& src, size_t begin, size_t end) {
  out.append(src, begin, end - begin);
}

// splits a whitespace-free piece into word/punctuation/emoji tokens
void split_piece(const std::string& piece, std::vector<std::string>& out) {
  std::string word;
  size_t i = 0;
  while (i < piece.size()) {
    const size_t start = i;
    const uint32_t cp = decode_utf8(piece, i);
    if (is_ascii_punct(cp) || is_emoji(cp)) {
      if (!word.empty()) {
        out.push_back(word);
        word.clear();
      }
      std::string tok;
      append_codepoint(tok, piece, start, i);
      out.push_back(tok);
    } else {
      append_codepoint(word, piece, start, i);
    }
  }
  if (!word.empty()) out.push_back(word);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < text.size()) {
    // bracketed anonymization markers pass through whole, spaces included
    if (text[pos] == '[') {
      const size_t close = text.find(']', pos);
      if (close != std::string::npos) {
        out.push_back(text.substr(pos, close - pos + 1));
        pos = close + 1;
        continue;
      }
    }
    if (std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
      continue;
    }
    size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end])) &&
           text[end] != '[') {
      ++end;
    }
    split_piece(text.substr(pos, end - pos), out);
    pos = end;
  }
  return out;
}

// ---- triples -------------------------------------------------------------------

namespace {

std::vector<std::string> join_with_sep(const std::vector<std::vector<std::string>>& parts) {
  std::vector<std::string> out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out.push_back("<sep>");
    out.insert(out.end(), parts[i].begin(), parts[i].end());
  }
  return out;
}

}  // namespace

std::vector<Triple> build_triples(const Dialogue& dialogue, bool labeled_only) {
  std::vector<Triple> out;
  std::vector<std::string> counselor_field;  // nearest preceding counselor turn
  int64_t index = 0;
  for (const auto& turn : dialogue.turns) {
    if (turn.role == Role::kCounselor) {
      std::vector<std::vector<std::string>> parts;
      for (const auto& u : turn.utterances) parts.push_back(tokenize(u.text));
      counselor_field = join_with_sep(parts);
      continue;
    }
    std::vector<std::vector<std::string>> earlier;
    for (const auto& u : turn.utterances) {
      const auto target = tokenize(u.text);
      if (!labeled_only || !u.labels.empty()) {
        Triple t;
        t.id = dialogue.id + ":" + std::to_string(index++);
        t.counselor_tokens = counselor_field;
        t.context_tokens = join_with_sep(earlier);
        t.target_tokens = target;
        for (Label l : u.labels) t.labels[static_cast<int>(l)] = 1;
        out.push_back(std::move(t));
      }
      earlier.push_back(target);
    }
  }
  return out;
}

std::vector<Triple> build_triples(const std::vector<Dialogue>& dialogues,
                                  bool labeled_only) {
  std::vector<Triple> out;
  for (const auto& d : dialogues) {
    auto ts = build_triples(d, labeled_only);
    out.insert(out.end(), std::make_move_iterator(ts.begin()),
               std::make_move_iterator(ts.end()));
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<Dialogue>& dialogues,
                           const std::array<double, 3>& ratios, uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  int nonzero = 0;
  for (double r : ratios)
    if (r > 0) ++nonzero;
  if (static_cast<int>(dialogues.size()) < nonzero) {
    throw ConfigError("fewer dialogues than splits");
  }

  std::vector<size_t> order(dialogues.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x51u));
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_int(static_cast<int64_t>(i))]);
  }

  const auto n = static_cast<double>(dialogues.size());
  const auto c1 = static_cast<size_t>(std::llround(ratios[0] * n));
  const auto c2 = static_cast<size_t>(std::llround((ratios[0] + ratios[1]) * n));
  DatasetSplit split;
  for (size_t i = 0; i < order.size(); ++i) {
    const Dialogue& d = dialogues[order[i]];
    if (i < c1) {
      split.train.push_back(d);
    } else if (i < c2) {
      split.valid.push_back(d);
    } else {
      split.test.push_back(d);
    }
  }
  return split;
}

// ---- encoding ------------------------------------------------------------------

namespace {

struct FieldBuilder {
  std::vector<std::vector<int64_t>> rows;
  std::vector<std::vector<std::string>> toks;
  int64_t width = 0;

  void add(const std::vector<std::string>& tokens, const Vocab& vocab, int64_t max_len) {
    std::vector<int64_t> ids{Vocab::kBos};
    std::vector<std::string> raw{"<bos>"};
    for (const auto& t : tokens) {
      if (static_cast<int64_t>(ids.size()) >= max_len - 1) break;  // room for <eos>
      ids.push_back(t == "<sep>" ? Vocab::kSep : vocab.id(t));
      raw.push_back(t);
    }
    ids.push_back(Vocab::kEos);
    raw.emplace_back("<eos>");
    width = std::max(width, static_cast<int64_t>(ids.size()));
    rows.push_back(std::move(ids));
    toks.push_back(std::move(raw));
  }

  EncodedField finish(std::vector<std::string>* pos_tokens) const {
    EncodedField f;
    f.batch = static_cast<int64_t>(rows.size());
    f.width = width;
    f.ids.assign(f.batch * f.width, Vocab::kPad);
    f.mask.assign(f.batch * f.width, 0.0);
    if (pos_tokens) pos_tokens->assign(f.batch * f.width, "");
    for (int64_t r = 0; r < f.batch; ++r) {
      for (size_t j = 0; j < rows[r].size(); ++j) {
        f.ids[r * f.width + j] = rows[r][j];
        f.mask[r * f.width + j] = 1.0;
        if (pos_tokens) (*pos_tokens)[r * f.width + j] = toks[r][j];
      }
    }
    return f;
  }
};

std::vector<std::string> concat_client_field(const Triple& t, int64_t max_len) {
  // <bos> context <sep> target <eos>, each part truncated to max_len - 2
  std::vector<std::string> out;
  const auto limit = static_cast<size_t>(max_len - 2);
  if (!t.context_tokens.empty()) {
    for (size_t i = 0; i < t.context_tokens.size() && i < limit; ++i) {
      out.push_back(t.context_tokens[i]);
    }
    out.push_back("<sep>");
  }
  for (size_t i = 0; i < t.target_tokens.size() && i < limit; ++i) {
    out.push_back(t.target_tokens[i]);
  }
  return out;
}

}  // namespace

EncodedBatch encode_batch(const std::vector<Triple>& triples, const Vocab& vocab,
                          int64_t max_len) {
  if (max_len < 1) throw ConfigError("encode_batch: max_len must be >= 1");
  if (triples.empty()) throw ConfigError("encode_batch: empty triple list");
  const int64_t field_len = std::max<int64_t>(max_len, 3);

  EncodedBatch batch;
  FieldBuilder counselor, client, context, target;
  for (const auto& t : triples) {
    counselor.add(t.counselor_tokens, vocab, field_len);
    // the combined client field may span two truncated parts plus <sep>
    client.add(concat_client_field(t, field_len), vocab, 2 * field_len);
    context.add(t.context_tokens, vocab, field_len);
    target.add(t.target_tokens, vocab, field_len);
    batch.triple_ids.push_back(t.id);
    for (int i = 0; i < kNumLabels; ++i) {
      batch.labels.push_back(static_cast<double>(t.labels[i]));
    }
  }
  batch.counselor = counselor.finish(&batch.counselor_pos_tokens);
  batch.client = client.finish(&batch.client_pos_tokens);
  batch.context_only = context.finish(nullptr);
  batch.target_only = target.finish(nullptr);
  return batch;
}

// ---- model corpora ---------------------------------------------------------------

std::vector<std::vector<std::string>> role_utterances(
    const std::vector<Dialogue>& dialogues, Role role) {
  std::vector<std::vector<std::string>> out;
  for (const auto& d : dialogues) {
    for (const auto& turn : d.turns) {
      if (turn.role != role) continue;
      for (const auto& u : turn.utterances) out.push_back(tokenize(u.text));
    }
  }
  return out;
}

std::vector<std::vector<std::string>> all_utterances(const std::vector<Dialogue>& dialogues) {
  std::vector<std::vector<std::string>> out;
  for (const auto& d : dialogues) {
    for (const auto& turn : d.turns) {
      for (const auto& u : turn.utterances) out.push_back(tokenize(u.text));
    }
  }
  return out;
}

std::vector<int64_t> lm_stream(const std::vector<std::vector<std::string>>& utterances,
                               const Vocab& vocab) {
  std::vector<int64_t> stream;
  for (const auto& u : utterances) {
    for (const auto& t : u) stream.push_back(vocab.id(t));
    stream.push_back(Vocab::kEos);
  }
  return stream;
}

std::vector<ConversationPair> extract_conversation_pairs(
    const std::vector<Dialogue>& dialogues) {
  std::vector<ConversationPair> pairs;
  for (const auto& d : dialogues) {
    for (size_t i = 0; i + 1 < d.turns.size(); ++i) {
      if (d.turns[i].role != Role::kCounselor || d.turns[i + 1].role != Role::kClient) {
        continue;
      }
      std::vector<std::vector<std::string>> c_parts, r_parts;
      for (const auto& u : d.turns[i].utterances) c_parts.push_back(tokenize(u.text));
      for (const auto& u : d.turns[i + 1].utterances) r_parts.push_back(tokenize(u.text));
      ConversationPair p;
      p.counselor_tokens = join_with_sep(c_parts);
      p.client_tokens = join_with_sep(r_parts);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

}  // namespace convmfit
