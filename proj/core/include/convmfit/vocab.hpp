#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace convmfit {

// Token-to-id map with five reserved ids. Non-reserved ids are assigned most
// frequent first; unknown tokens map to <unk>.
class Vocab {
 public:
  static constexpr int64_t kPad = 0;
  static constexpr int64_t kUnk = 1;
  static constexpr int64_t kBos = 2;
  static constexpr int64_t kEos = 3;
  static constexpr int64_t kSep = 4;
  static constexpr int64_t kNumReserved = 5;

  Vocab();

  // Keeps tokens with frequency >= min_count, ordered by (frequency desc,
  // token asc), truncated to max_size non-reserved entries.
  static Vocab build(const std::vector<std::vector<std::string>>& token_seqs,
                     int64_t min_count, int64_t max_size);

  int64_t id(const std::string& token) const;
  const std::string& token(int64_t id) const;
  int64_t freq(int64_t id) const;
  int64_t size() const { return static_cast<int64_t>(id_to_token_.size()); }
  bool is_special(int64_t id) const { return id >= 0 && id < kNumReserved; }

  // "token<TAB>id<TAB>frequency" per line, reserved tokens included.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  uint64_t content_hash() const;

  bool operator==(const Vocab& other) const {
    return id_to_token_ == other.id_to_token_ && freq_ == other.freq_;
  }

 private:
  std::unordered_map<std::string, int64_t> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::vector<int64_t> freq_;
};

}  // namespace convmfit
