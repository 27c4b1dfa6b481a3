#include "convmfit/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "convmfit/adam.hpp"
#include "convmfit/errors.hpp"

namespace convmfit {

template <typename T>
LanguageModel<T> LanguageModel<T>::create(Role role, const EmbeddingMatrix<T>& vectors,
                                          int n_layers, double emb_dropout,
                                          double out_dropout, uint64_t seed) {
  LanguageModel<T> lm;
  lm.role = role;
  lm.embedding = Tensor<T>::from(vectors.weights->shape, vectors.weights->data, true);
  lm.embedding_dropout = emb_dropout;
  lm.stack = LstmStack<T>(n_layers, vectors.dim, vectors.dim, out_dropout);
  Rng rng(mix_seed(seed, role == Role::kCounselor ? 0xC0 : 0xC1));
  lm.stack.init(rng);
  return lm;
}

template <typename T>
std::vector<TensorPtr<T>> LanguageModel<T>::embed_steps(Graph<T>& g,
                                                        const std::vector<int64_t>& ids,
                                                        int64_t batch, int64_t width,
                                                        bool train, Rng& rng) const {
  std::vector<T> row_scale;
  if (train && embedding_dropout > 0.0) {
    row_scale = embedding_dropout_mask<T>(vocab_size(), embedding_dropout, rng);
  }
  std::vector<TensorPtr<T>> steps;
  steps.reserve(width);
  std::vector<int64_t> col(batch);
  for (int64_t t = 0; t < width; ++t) {
    for (int64_t b = 0; b < batch; ++b) col[b] = ids[b * width + t];
    steps.push_back(embedding_rows(g, embedding, col,
                                   row_scale.empty() ? nullptr : &row_scale));
  }
  return steps;
}

template <typename T>
TensorPtr<T> LanguageModel<T>::tied_logits(Graph<T>& g, const TensorPtr<T>& hidden_rows) const {
  return matmul_nt(g, hidden_rows, embedding);
}

template <typename T>
std::vector<std::pair<std::string, TensorPtr<T>>> LanguageModel<T>::named_params(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, TensorPtr<T>>> out;
  out.emplace_back(prefix + ".embedding", embedding);
  auto stack_params = stack.named_params(prefix + ".lstm");
  out.insert(out.end(), stack_params.begin(), stack_params.end());
  return out;
}

template <typename T>
LanguageModel<T> LanguageModel<T>::clone() const {
  LanguageModel<T> out;
  out.role = role;
  out.embedding = Tensor<T>::from(embedding->shape, embedding->data, true);
  out.embedding_dropout = embedding_dropout;
  out.stack = LstmStack<T>(stack.n_layers(), stack.input_size(), stack.hidden_size(),
                           stack.output_dropout());
  for (int l = 0; l < stack.n_layers(); ++l) {
    const auto& src = stack.layers()[l];
    auto& dst = out.stack.layers()[l];
    dst.input_size = src.input_size;
    dst.hidden_size = src.hidden_size;
    dst.w_ih = Tensor<T>::from(src.w_ih->shape, src.w_ih->data, true);
    dst.w_hh = Tensor<T>::from(src.w_hh->shape, src.w_hh->data, true);
    dst.bias = Tensor<T>::from(src.bias->shape, src.bias->data, true);
  }
  return out;
}

// ---- training ----------------------------------------------------------------

namespace {

// stream rearranged as [batch x cols]; row b is a contiguous chunk
struct StreamMatrix {
  std::vector<int64_t> ids;
  int64_t batch = 0, cols = 0;
  int64_t at(int64_t b, int64_t t) const { return ids[b * cols + t]; }
};

StreamMatrix arrange_stream(const std::vector<int64_t>& stream, int64_t batch) {
  StreamMatrix m;
  m.cols = static_cast<int64_t>(stream.size()) / batch;
  if (m.cols < 2) {
    m.batch = 1;
    m.cols = static_cast<int64_t>(stream.size());
    m.ids = stream;
    if (m.cols < 2) throw ConfigError("language model: stream too short");
    return m;
  }
  m.batch = batch;
  m.ids.resize(batch * m.cols);
  for (int64_t b = 0; b < batch; ++b) {
    std::copy(stream.begin() + b * m.cols, stream.begin() + (b + 1) * m.cols,
              m.ids.begin() + b * m.cols);
  }
  return m;
}

// One truncated-backprop window: inputs columns [t0, t0+len), targets shifted
// by one. Returns the window loss and the final recurrent states.
template <typename T>
struct WindowOut {
  TensorPtr<T> loss;
  typename LstmStack<T>::States states;
  int64_t tokens = 0;
};

template <typename T>
WindowOut<T> lm_window(Graph<T>& g, const LanguageModel<T>& lm, const StreamMatrix& m,
                       int64_t t0, int64_t len, const typename LstmStack<T>::States& init,
                       bool train, Rng& rng) {
  const int64_t batch = m.batch;
  std::vector<int64_t> inputs(batch * len);
  std::vector<int64_t> targets(batch * len);
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < len; ++t) {
      inputs[b * len + t] = m.at(b, t0 + t);
      targets[b * len + t] = m.at(b, t0 + t + 1);
    }
  }
  auto xs = lm.embed_steps(g, inputs, batch, len, train, rng);
  auto run = lm.stack.run(g, xs, {}, init, train, rng);
  auto stacked = concat_rows(g, run.outputs);  // [(len*batch) x d], time-major
  auto logits = lm.tied_logits(g, stacked);
  // targets rearranged to match the time-major stack
  std::vector<int64_t> tm_targets(batch * len);
  for (int64_t t = 0; t < len; ++t) {
    for (int64_t b = 0; b < batch; ++b) tm_targets[t * batch + b] = targets[b * len + t];
  }
  std::vector<T> mask(batch * len, T(1));
  WindowOut<T> out;
  out.loss = ce_loss_masked(g, logits, tm_targets, mask);
  out.states = run.final_states;
  out.tokens = batch * len;
  return out;
}

// mean NLL per token over the whole stream, eval mode
template <typename T>
double stream_nll(const LanguageModel<T>& lm, const StreamMatrix& m, int seq_len) {
  Graph<T> g;
  g.set_recording(false);
  Rng rng(0);
  auto states = lm.stack.zero_states(m.batch);
  double total = 0;
  int64_t count = 0;
  for (int64_t t0 = 0; t0 + 1 < m.cols; t0 += seq_len) {
    const int64_t len = std::min<int64_t>(seq_len, m.cols - 1 - t0);
    auto w = lm_window(g, lm, m, t0, len, states, false, rng);
    states = w.states;
    total += static_cast<double>(w.loss->item()) * static_cast<double>(w.tokens);
    count += w.tokens;
  }
  return total / static_cast<double>(count);
}

template <typename T>
std::vector<std::vector<T>> snapshot(const std::vector<std::pair<std::string, TensorPtr<T>>>& params) {
  std::vector<std::vector<T>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t->data);
  return out;
}

template <typename T>
void restore(const std::vector<std::pair<std::string, TensorPtr<T>>>& params,
             const std::vector<std::vector<T>>& snap) {
  for (size_t i = 0; i < params.size(); ++i) params[i].second->data = snap[i];
}

template <typename T>
std::vector<LMEpochLog> train_epochs(LanguageModel<T>& lm, const std::vector<int64_t>& stream,
                                     const LMTrainConfig& config, double lr, int epochs,
                                     bool finetune_stop) {
  const auto total = static_cast<int64_t>(stream.size());
  if (total < 4) throw ConfigError("language model: corpus too small");
  int64_t valid_len = static_cast<int64_t>(static_cast<double>(total) * config.valid_fraction);
  valid_len = std::clamp<int64_t>(valid_len, 2, total / 2);
  const std::vector<int64_t> train_ids(stream.begin(), stream.end() - valid_len);
  const std::vector<int64_t> valid_ids(stream.end() - valid_len, stream.end());
  const StreamMatrix train_m = arrange_stream(train_ids, config.batch);
  const StreamMatrix valid_m = arrange_stream(valid_ids, std::min<int64_t>(config.batch, 4));

  auto params = lm.named_params("lm");
  Adam<T> opt({lr});
  for (auto& [name, t] : params) {
    opt.add_param(name, t, 0, name == "lm.embedding" ? std::vector<int64_t>{Vocab::kPad}
                                                     : std::vector<int64_t>{});
  }

  std::vector<LMEpochLog> log;
  double best_valid = std::numeric_limits<double>::infinity();
  std::vector<std::vector<T>> best_snap;
  Rng base_rng(mix_seed(config.seed, 0x17D1u));

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng erng = base_rng.fork(epoch);
    auto states = lm.stack.zero_states(train_m.batch);
    double train_nll = 0;
    int64_t train_tokens = 0;
    for (int64_t t0 = 0; t0 + 1 < train_m.cols; t0 += config.seq_len) {
      const int64_t len = std::min<int64_t>(config.seq_len, train_m.cols - 1 - t0);
      Graph<T> g;
      auto w = lm_window(g, lm, train_m, t0, len, states, true, erng);
      states = detach_states<T>(w.states);
      opt.zero_grad();
      g.backward(w.loss);
      opt.step();
      train_nll += static_cast<double>(w.loss->item()) * static_cast<double>(w.tokens);
      train_tokens += w.tokens;
    }
    const double train_ppl = std::exp(train_nll / static_cast<double>(train_tokens));
    const double valid_ppl = std::exp(stream_nll(lm, valid_m, config.seq_len));
    log.push_back({epoch, "train", train_ppl});
    log.push_back({epoch, "valid", valid_ppl});

    if (finetune_stop) {
      if (valid_ppl < best_valid) {
        best_valid = valid_ppl;
        best_snap = snapshot(params);
      } else if (valid_ppl > best_valid * (1.0 + config.finetune_stop_tolerance)) {
        break;  // validation perplexity rose > tolerance above its minimum
      }
    }
  }
  if (finetune_stop && !best_snap.empty()) restore(params, best_snap);
  return log;
}

}  // namespace

template <typename T>
LMTrainResult<T> train_language_model(Role role,
                                      const std::vector<std::vector<std::string>>& utterances,
                                      const Vocab& vocab, const EmbeddingMatrix<T>& vectors,
                                      const LMTrainConfig& config) {
  if (utterances.empty()) throw ConfigError("train_language_model: empty corpus");
  LMTrainResult<T> result;
  result.model = LanguageModel<T>::create(role, vectors, 3, config.embedding_dropout,
                                          config.output_dropout, config.seed);
  const auto stream = lm_stream(utterances, vocab);
  result.log = train_epochs(result.model, stream, config, config.lr, config.epochs, false);
  return result;
}

template <typename T>
std::vector<LMEpochLog> finetune_language_model(
    LanguageModel<T>& lm, Role role,
    const std::vector<std::vector<std::string>>& utterances, const Vocab& vocab,
    const LMTrainConfig& config) {
  if (role != lm.role) {
    throw ConfigError(std::string("finetune_language_model: role mismatch (model is ") +
                      role_name(lm.role) + ", corpus tagged " + role_name(role) + ")");
  }
  if (config.finetune_epochs == 0) return {};
  if (utterances.empty()) throw ConfigError("finetune_language_model: empty corpus");
  const auto stream = lm_stream(utterances, vocab);
  return train_epochs(lm, stream, config, config.lr / config.finetune_lr_divisor,
                      config.finetune_epochs, true);
}

template <typename T>
double perplexity(const LanguageModel<T>& lm, const std::vector<int64_t>& stream,
                  int seq_len) {
  if (stream.size() < 2) throw ConfigError("perplexity: empty corpus");
  return std::exp(stream_nll(lm, arrange_stream(stream, 1), seq_len));
}

#define CONVMFIT_INSTANTIATE_LM(T)                                                      \
  template struct LanguageModel<T>;                                                     \
  template LMTrainResult<T> train_language_model<T>(                                    \
      Role, const std::vector<std::vector<std::string>>&, const Vocab&,                 \
      const EmbeddingMatrix<T>&, const LMTrainConfig&);                                 \
  template std::vector<LMEpochLog> finetune_language_model<T>(                          \
      LanguageModel<T>&, Role, const std::vector<std::vector<std::string>>&,            \
      const Vocab&, const LMTrainConfig&);                                              \
  template double perplexity<T>(const LanguageModel<T>&, const std::vector<int64_t>&, int);

CONVMFIT_INSTANTIATE_LM(float)
CONVMFIT_INSTANTIATE_LM(double)

#undef CONVMFIT_INSTANTIATE_LM

}  // namespace convmfit
