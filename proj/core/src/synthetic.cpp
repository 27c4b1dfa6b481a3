#include <algorithm>
#include <cmath>

#include "convmfit/corpus.hpp"
#include "convmfit/errors.hpp"

namespace convmfit {

namespace {

struct TokenPools {
  std::array<std::vector<std::string>, kNumLabels> indicative;  // client
  std::array<std::vector<std::string>, kNumLabels> probe;       // counselor
  std::vector<std::string> noise;
  std::array<std::array<std::string, 2>, kNumLabels> planted;
};

// Deterministic token inventory: 5 punctuation tokens, 10 planted-bigram
// tokens, then ~50% category-indicative, ~20% counselor-probe and the rest
// shared noise tokens. Many distinct indicative tokens per category keep any
// single one rare in a small labeled set, which is what makes pre-trained
// vectors matter.
TokenPools make_pools(int64_t vocab_size) {
  TokenPools p;
  const char* kShort[kNumLabels] = {"fact", "anec", "prob", "chan", "proc"};
  for (int k = 0; k < kNumLabels; ++k) {
    p.planted[k][0] = std::string("key") + kShort[k] + "x";
    p.planted[k][1] = std::string("key") + kShort[k] + "y";
  }
  const int64_t budget = vocab_size - 15;  // minus punct + planted
  const int64_t per_cat_ind = std::max<int64_t>(3, budget / 2 / kNumLabels);
  const int64_t per_cat_probe = std::max<int64_t>(2, budget / 5 / kNumLabels);
  for (int k = 0; k < kNumLabels; ++k) {
    for (int64_t i = 0; i < per_cat_ind; ++i) {
      p.indicative[k].push_back(std::string(kShort[k]) + std::to_string(i));
    }
    for (int64_t i = 0; i < per_cat_probe; ++i) {
      p.probe[k].push_back(std::string("ask") + kShort[k] + std::to_string(i));
    }
  }
  const int64_t n_noise =
      std::max<int64_t>(10, budget - kNumLabels * (per_cat_ind + per_cat_probe));
  for (int64_t i = 0; i < n_noise; ++i) p.noise.push_back("n" + std::to_string(i));
  return p;
}

int sample_categorical(const std::array<double, 5>& weights, double total, Rng& rng) {
  double u = rng.uniform() * total;
  for (int k = 0; k < kNumLabels; ++k) {
    u -= weights[k];
    if (u < 0) return k;
  }
  return kNumLabels - 1;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[rng.uniform_int(static_cast<int64_t>(pool.size()))];
}

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace

std::array<std::string, 2> planted_bigram_tokens(Label category) {
  const char* kShort[kNumLabels] = {"fact", "anec", "prob", "chan", "proc"};
  const char* s = kShort[static_cast<int>(category)];
  return {std::string("key") + s + "x", std::string("key") + s + "y"};
}

std::vector<Dialogue> generate_synthetic_corpus(const SynthConfig& config) {
  if (config.vocab_size < 50) throw ConfigError("synthetic corpus: vocab_size must be >= 50");
  double mix_total = 0;
  for (double w : config.label_mix) {
    if (w < 0) throw ConfigError("synthetic corpus: label_mix weights must be >= 0");
    mix_total += w;
  }
  if (mix_total <= 0) throw ConfigError("synthetic corpus: label_mix must not be all zero");
  int nonzero_mix = 0;
  for (double w : config.label_mix)
    if (w > 0) ++nonzero_mix;

  const TokenPools pools = make_pools(config.vocab_size);
  Rng rng(mix_seed(config.seed, 0xC0A9u));
  const char* kPunct[3] = {".", "?", "!"};

  auto sample_labels = [&](Rng& r) {
    std::vector<Label> labels;
    const int primary = sample_categorical(config.label_mix, mix_total, r);
    labels.push_back(static_cast<Label>(primary));
    if (nonzero_mix > 1 && r.bernoulli(config.two_label_fraction)) {
      auto rest = config.label_mix;
      rest[primary] = 0;
      double rest_total = mix_total - config.label_mix[primary];
      labels.push_back(static_cast<Label>(sample_categorical(rest, rest_total, r)));
    }
    std::sort(labels.begin(), labels.end());
    return labels;
  };

  auto client_tokens = [&](const std::vector<Label>& labels, Rng& r) {
    const int n = config.utt_tokens_min +
                  static_cast<int>(r.uniform_int(config.utt_tokens_max - config.utt_tokens_min + 1));
    std::vector<std::string> toks;
    for (int i = 0; i < n; ++i) {
      if (r.bernoulli(0.55)) {
        const Label l = labels[r.uniform_int(static_cast<int64_t>(labels.size()))];
        toks.push_back(pick(pools.indicative[static_cast<int>(l)], r));
      } else {
        toks.push_back(pick(pools.noise, r));
      }
    }
    if (config.planted_bigram_prob > 0 && labels.size() == 1 &&
        r.bernoulli(config.planted_bigram_prob)) {
      const auto& bigram = pools.planted[static_cast<int>(labels[0])];
      const auto at = static_cast<size_t>(r.uniform_int(static_cast<int64_t>(toks.size()) + 1));
      toks.insert(toks.begin() + at, {bigram[0], bigram[1]});
    }
    if (r.bernoulli(0.05)) toks.push_back("#");
    if (r.bernoulli(0.4)) toks.push_back(kPunct[r.uniform_int(3)]);
    return toks;
  };

  auto counselor_tokens = [&](Label upcoming, Rng& r) {
    const int n = config.utt_tokens_min +
                  static_cast<int>(r.uniform_int(config.utt_tokens_max - config.utt_tokens_min + 1));
    std::vector<std::string> toks;
    for (int i = 0; i < n; ++i) {
      if (r.bernoulli(0.45)) {
        toks.push_back(pick(pools.probe[static_cast<int>(upcoming)], r));
      } else {
        toks.push_back(pick(pools.noise, r));
      }
    }
    if (r.bernoulli(0.35)) toks.push_back("?");
    return toks;
  };

  std::vector<Dialogue> dialogues;
  dialogues.reserve(config.n_dialogues);
  for (int64_t di = 0; di < config.n_dialogues; ++di) {
    Dialogue d;
    d.id = "synth-" + std::to_string(di);
    const int pairs = config.turn_pairs_min +
                      static_cast<int>(rng.uniform_int(config.turn_pairs_max - config.turn_pairs_min + 1));
    for (int pi = 0; pi < pairs; ++pi) {
      const int n_client = config.client_utts_min +
                           static_cast<int>(rng.uniform_int(config.client_utts_max - config.client_utts_min + 1));
      std::vector<std::vector<Label>> labels(n_client);
      for (auto& ls : labels) ls = sample_labels(rng);

      Turn counselor_turn;
      counselor_turn.role = Role::kCounselor;
      const int n_couns = config.counselor_utts_min +
                          static_cast<int>(rng.uniform_int(config.counselor_utts_max - config.counselor_utts_min + 1));
      for (int i = 0; i < n_couns; ++i) {
        Utterance u;
        u.role = Role::kCounselor;
        u.text = join(counselor_tokens(labels[0][0], rng));
        counselor_turn.utterances.push_back(std::move(u));
      }
      d.turns.push_back(std::move(counselor_turn));

      Turn client_turn;
      client_turn.role = Role::kClient;
      for (int i = 0; i < n_client; ++i) {
        Utterance u;
        u.role = Role::kClient;
        u.labels = labels[i];
        u.text = join(client_tokens(labels[i], rng));
        client_turn.utterances.push_back(std::move(u));
      }
      d.turns.push_back(std::move(client_turn));
    }
    dialogues.push_back(std::move(d));
  }
  return dialogues;
}

}  // namespace convmfit
