#include "convmfit/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "convmfit/errors.hpp"
#include "convmfit/hashing.hpp"

namespace convmfit {

namespace {
const char* kReserved[Vocab::kNumReserved] = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};
}

Vocab::Vocab() {
  for (int64_t i = 0; i < kNumReserved; ++i) {
    id_to_token_.emplace_back(kReserved[i]);
    token_to_id_[kReserved[i]] = i;
    freq_.push_back(0);
  }
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& token_seqs,
                   int64_t min_count, int64_t max_size) {
  if (token_seqs.empty()) throw ConfigError("build_vocab: empty corpus");
  std::map<std::string, int64_t> counts;  // ordered: ties break lexicographically
  for (const auto& seq : token_seqs)
    for (const auto& tok : seq) ++counts[tok];
  for (int64_t i = 0; i < kNumReserved; ++i) counts.erase(kReserved[i]);

  std::vector<std::pair<std::string, int64_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab v;
  for (const auto& [tok, cnt] : items) {
    if (cnt < min_count) continue;
    if (static_cast<int64_t>(v.id_to_token_.size()) - kNumReserved >= max_size) break;
    v.token_to_id_[tok] = static_cast<int64_t>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
    v.freq_.push_back(cnt);
  }
  return v;
}

int64_t Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int64_t id) const {
  if (id < 0 || id >= size()) throw ShapeError("vocab: token id out of range");
  return id_to_token_[id];
}

int64_t Vocab::freq(int64_t id) const {
  if (id < 0 || id >= size()) throw ShapeError("vocab: token id out of range");
  return freq_[id];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("vocab: cannot open '" + path + "' for writing");
  for (int64_t i = 0; i < size(); ++i) {
    out << id_to_token_[i] << '\t' << i << '\t' << freq_[i] << '\n';
  }
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("vocab: cannot open '" + path + "'");
  Vocab v;
  v.id_to_token_.clear();
  v.token_to_id_.clear();
  v.freq_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw FormatError("vocab: malformed line '" + line + "'");
    }
    std::string tok = line.substr(0, t1);
    const int64_t id = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
    const int64_t freq = std::stoll(line.substr(t2 + 1));
    if (id != static_cast<int64_t>(v.id_to_token_.size())) {
      throw FormatError("vocab: non-contiguous ids in '" + path + "'");
    }
    v.token_to_id_[tok] = id;
    v.id_to_token_.push_back(std::move(tok));
    v.freq_.push_back(freq);
  }
  if (v.size() < kNumReserved) throw FormatError("vocab: missing reserved tokens");
  for (int64_t i = 0; i < kNumReserved; ++i) {
    if (v.id_to_token_[i] != kReserved[i]) {
      throw FormatError("vocab: reserved token mismatch at id " + std::to_string(i));
    }
  }
  return v;
}

uint64_t Vocab::content_hash() const {
  std::ostringstream os;
  for (int64_t i = 0; i < size(); ++i) os << id_to_token_[i] << '\t' << freq_[i] << '\n';
  return fnv1a64(os.str());
}

}  // namespace convmfit
