#include "convmfit/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "convmfit/errors.hpp"

namespace convmfit {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'E', 'V'};
constexpr uint32_t kVersion = 1;

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

template <typename T>
SkipgramResult<T> train_skipgram(const std::vector<std::vector<std::string>>& utterances,
                                 const Vocab& vocab, const SkipgramConfig& config) {
  if (utterances.empty()) throw ConfigError("train_skipgram: empty corpus");
  const int64_t v = vocab.size(), d = config.dim;
  if (v - Vocab::kNumReserved < 2) throw ConfigError("train_skipgram: vocab too small for window");

  Rng rng(mix_seed(config.seed, 0xE3B0u));
  auto weights = Tensor<T>::make({v, d}, true);
  std::vector<double> ctx(v * d);  // context-side vectors, discarded after training
  const double bound = 0.5 / static_cast<double>(d);
  for (int64_t r = Vocab::kNumReserved; r < v; ++r) {
    for (int64_t j = 0; j < d; ++j) {
      weights->data[r * d + j] = static_cast<T>(rng.uniform(-bound, bound));
    }
  }
  // <unk> may occur in the stream; give it vectors too
  for (int64_t j = 0; j < d; ++j) {
    weights->data[Vocab::kUnk * d + j] = static_cast<T>(rng.uniform(-bound, bound));
  }
  // <bos>/<eos>/<sep> never appear in skip-gram windows but are trainable
  // downstream; small random values avoid dead inputs there
  for (int64_t r : {Vocab::kBos, Vocab::kEos, Vocab::kSep}) {
    for (int64_t j = 0; j < d; ++j) weights->data[r * d + j] = static_cast<T>(rng.uniform(-bound, bound));
  }

  // sentence streams of ids, <pad>/<bos>/<eos>/<sep> excluded
  std::vector<std::vector<int64_t>> sents;
  int64_t total_tokens = 0;
  for (const auto& utt : utterances) {
    std::vector<int64_t> ids;
    for (const auto& tok : utt) {
      const int64_t id = vocab.id(tok);
      if (id >= Vocab::kNumReserved || id == Vocab::kUnk) ids.push_back(id);
    }
    total_tokens += static_cast<int64_t>(ids.size());
    if (ids.size() >= 2) sents.push_back(std::move(ids));
  }
  if (sents.empty()) throw ConfigError("train_skipgram: corpus has no usable windows");

  // unigram^0.75 negative-sampling table (cumulative, binary search)
  std::vector<double> cum;
  std::vector<int64_t> cand;
  double acc = 0;
  for (int64_t id = 0; id < v; ++id) {
    const int64_t f = vocab.freq(id);
    if (f <= 0 || id == Vocab::kPad) continue;
    acc += std::pow(static_cast<double>(f), 0.75);
    cum.push_back(acc);
    cand.push_back(id);
  }
  auto sample_negative = [&](Rng& r) {
    const double u = r.uniform() * acc;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    return cand[static_cast<size_t>(it - cum.begin())];
  };

  SkipgramResult<T> result;
  std::vector<double> grad_center(d);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // linear learning-rate decay over epochs
    const double lr = config.lr * (1.0 - static_cast<double>(epoch) / config.epochs);
    Rng erng = rng.fork(1000 + epoch);
    double loss_sum = 0;
    int64_t loss_count = 0;
    for (const auto& sent : sents) {
      const auto len = static_cast<int64_t>(sent.size());
      for (int64_t pos = 0; pos < len; ++pos) {
        const int64_t center = sent[pos];
        const int64_t win = 1 + erng.uniform_int(config.window);
        for (int64_t off = -win; off <= win; ++off) {
          if (off == 0) continue;
          const int64_t cpos = pos + off;
          if (cpos < 0 || cpos >= len) continue;
          const int64_t context = sent[cpos];
          T* wc = weights->data.data() + center * d;
          std::fill(grad_center.begin(), grad_center.end(), 0.0);
          double pair_loss = 0;
          for (int k = 0; k <= config.negatives; ++k) {
            const bool positive = (k == 0);
            const int64_t target = positive ? context : sample_negative(erng);
            if (!positive && target == context) continue;
            double* wo = ctx.data() + target * d;
            double dot = 0;
            for (int64_t j = 0; j < d; ++j) dot += static_cast<double>(wc[j]) * wo[j];
            const double pred = stable_sigmoid(dot);
            const double label = positive ? 1.0 : 0.0;
            pair_loss += positive ? -std::log(std::max(pred, 1e-12))
                                  : -std::log(std::max(1.0 - pred, 1e-12));
            const double g = (pred - label) * lr;
            for (int64_t j = 0; j < d; ++j) {
              grad_center[j] += g * wo[j];
              wo[j] -= g * static_cast<double>(wc[j]);
            }
          }
          for (int64_t j = 0; j < d; ++j) wc[j] -= static_cast<T>(grad_center[j]);
          loss_sum += pair_loss;
          ++loss_count;
        }
      }
    }
    result.epoch_loss.push_back(loss_count ? loss_sum / loss_count : 0.0);
  }

  result.embeddings.dim = d;
  result.embeddings.weights = weights;
  result.embeddings.vocab_hash = vocab.content_hash();
  return result;
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw ShapeError("cosine: dimension mismatch");
  double dot = 0, nu = 0, nv = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0 || nv == 0) throw NumericError("cosine: zero vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

template <typename T>
std::vector<double> embedding_row(const EmbeddingMatrix<T>& m, int64_t id) {
  const int64_t d = m.dim;
  std::vector<double> row(d);
  for (int64_t j = 0; j < d; ++j) row[j] = static_cast<double>(m.weights->data[id * d + j]);
  return row;
}

template <typename T>
void save_embeddings(const std::string& path, const EmbeddingMatrix<T>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  const uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&m.vocab_hash), 8);
  const int64_t v = m.weights->rows(), d = m.dim;
  out.write(reinterpret_cast<const char*>(&v), 8);
  out.write(reinterpret_cast<const char*>(&d), 8);
  // stored at 32-bit precision regardless of the training scalar type
  std::vector<float> row(d);
  for (int64_t r = 0; r < v; ++r) {
    for (int64_t j = 0; j < d; ++j) row[j] = static_cast<float>(m.weights->data[r * d + j]);
    out.write(reinterpret_cast<const char*>(row.data()), d * sizeof(float));
  }
  if (!out) throw FormatError("short write to '" + path + "'");
}

template <typename T>
EmbeddingMatrix<T> load_embeddings(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("'" + path + "' is not an embedding file (bad magic)");
  }
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != kVersion) {
    throw FormatError("embedding file version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kVersion) + ")");
  }
  uint64_t vocab_hash = 0;
  in.read(reinterpret_cast<char*>(&vocab_hash), 8);
  const uint64_t current = vocab.content_hash();
  if (vocab_hash != current) {
    throw FormatError("embedding file vocab hash " + std::to_string(vocab_hash) +
                      " does not match current vocab hash " + std::to_string(current));
  }
  int64_t v = 0, d = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  in.read(reinterpret_cast<char*>(&d), 8);
  if (v != vocab.size()) throw FormatError("embedding row count does not match vocab size");
  EmbeddingMatrix<T> m;
  m.dim = d;
  m.vocab_hash = vocab_hash;
  m.weights = Tensor<T>::make({v, d}, true);
  std::vector<float> row(d);
  for (int64_t r = 0; r < v; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), d * sizeof(float));
    for (int64_t j = 0; j < d; ++j) m.weights->data[r * d + j] = static_cast<T>(row[j]);
  }
  if (!in) throw FormatError("truncated embedding file '" + path + "'");
  return m;
}

#define CONVMFIT_INSTANTIATE_EMB(T)                                                        \
  template SkipgramResult<T> train_skipgram<T>(                                            \
      const std::vector<std::vector<std::string>>&, const Vocab&, const SkipgramConfig&);  \
  template std::vector<double> embedding_row<T>(const EmbeddingMatrix<T>&, int64_t);       \
  template void save_embeddings<T>(const std::string&, const EmbeddingMatrix<T>&);         \
  template EmbeddingMatrix<T> load_embeddings<T>(const std::string&, const Vocab&);

CONVMFIT_INSTANTIATE_EMB(float)
CONVMFIT_INSTANTIATE_EMB(double)

#undef CONVMFIT_INSTANTIATE_EMB

}  // namespace convmfit
