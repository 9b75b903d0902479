#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace lightcap {

using TokenId = int;

/// Token ↔ id bijection. Ids 0..3 are reserved for PAD, BOS, EOS and UNK.
class Vocab {
public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kNumSpecials = 4;

  Vocab();

  /// Adds the given non-special tokens in order; duplicates are rejected.
  explicit Vocab(const std::vector<std::string>& tokens);

  std::size_t size() const noexcept { return id_to_token_.size(); }

  /// Unknown tokens map to kUnk.
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;

  bool is_special(TokenId id) const noexcept { return id >= 0 && id < static_cast<TokenId>(kNumSpecials); }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;
  /// Maps ids back to tokens, dropping PAD/BOS/EOS; UNK renders as "<unk>".
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  /// One non-special token per line; line i holds id kNumSpecials + i.
  void write(std::ostream& out) const;
  static Vocab read(std::istream& in);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.id_to_token_ == b.id_to_token_; }

private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

/// All distinct tokens of the encoded corpus, sorted, after the specials.
Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus_encoded);

} // namespace lightcap
