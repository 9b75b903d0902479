#include "lightcap/vocab.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "lightcap/error.hpp"

namespace lightcap {

namespace {
const std::vector<std::string> kSpecialNames = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) : id_to_token_(kSpecialNames) {
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
  }
  for (const auto& t : tokens) {
    if (t.empty()) {
      throw ValidationError("vocab: empty token");
    }
    if (!token_to_id_.emplace(t, static_cast<TokenId>(id_to_token_.size())).second) {
      throw ValidationError(fmt::format("vocab: duplicate token '{}'", t));
    }
    id_to_token_.push_back(t);
  }
}

TokenId Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw IndexError(fmt::format("token id {} outside vocabulary of size {}", id, size()));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    ids.push_back(id(t));
  }
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const TokenId i : ids) {
    if (i == kPad || i == kBos || i == kEos) {
      continue;
    }
    out.push_back(token(i));
  }
  return out;
}

void Vocab::write(std::ostream& out) const {
  for (std::size_t i = kNumSpecials; i < id_to_token_.size(); ++i) {
    out << id_to_token_[i] << '\n';
  }
}

Vocab Vocab::read(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    tokens.push_back(line);
  }
  return Vocab(tokens);
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus_encoded) {
  if (corpus_encoded.empty()) {
    throw ValidationError("build_vocab: empty corpus");
  }
  std::set<std::string> distinct;
  for (const auto& seq : corpus_encoded) {
    for (const auto& t : seq) {
      if (std::find(kSpecialNames.begin(), kSpecialNames.end(), t) == kSpecialNames.end()) {
        distinct.insert(t);
      }
    }
  }
  return Vocab(std::vector<std::string>(distinct.begin(), distinct.end()));
}

} // namespace lightcap
