#include "lightcap/bpe.hpp"

#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "lightcap/error.hpp"

namespace lightcap {

namespace {

using Symbols = std::vector<std::string>;
using Pair = std::pair<std::string, std::string>;

Symbols initial_symbols(std::string_view word) {
  Symbols symbols = utf8_chars(word);
  if (!symbols.empty()) {
    symbols.back() += kEndOfWord;
  }
  return symbols;
}

void apply_merge(Symbols& symbols, const Pair& pair) {
  if (symbols.size() < 2) {
    return;
  }
  Symbols out;
  out.reserve(symbols.size());
  std::size_t i = 0;
  while (i < symbols.size()) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
      out.push_back(pair.first + pair.second);
      i += 2;
    } else {
      out.push_back(std::move(symbols[i]));
      i += 1;
    }
  }
  symbols = std::move(out);
}

std::string pair_key(const std::string& left, const std::string& right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key += left;
  key += '\x1f';
  key += right;
  return key;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

} // namespace

Sentence split_words(std::string_view text) {
  Sentence words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) {
      ++i;
    }
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) {
      ++i;
    }
    if (i > start) {
      words.emplace_back(text.substr(start, i - start));
    }
  }
  return words;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((lead & 0xE0) == 0xC0) {
      len = 2;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
    }
    len = std::min(len, word.size() - i);
    chars.emplace_back(word.substr(i, len));
    i += len;
  }
  return chars;
}

MergeTable learn_bpe(const std::vector<Sentence>& corpus, std::size_t n_merges) {
  if (corpus.empty()) {
    throw ValidationError("learn_bpe: empty corpus");
  }
  std::map<std::string, long> word_freq;
  for (const auto& sentence : corpus) {
    for (const auto& w : sentence) {
      word_freq[w] += 1;
    }
  }
  if (word_freq.empty()) {
    throw ValidationError("learn_bpe: corpus contains no words");
  }

  std::vector<std::pair<Symbols, long>> vocab;
  vocab.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq) {
    vocab.emplace_back(initial_symbols(word), freq);
  }

  MergeTable table;
  while (table.size() < n_merges) {
    std::map<Pair, long> counts;
    for (const auto& [symbols, freq] : vocab) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        counts[{symbols[i], symbols[i + 1]}] += freq;
      }
    }
    // std::map iterates in (left, right) order, so the first maximum wins ties.
    const Pair* best = nullptr;
    long best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr || best_count < 2) {
      break;
    }
    const Pair merge = *best;
    for (auto& entry : vocab) {
      apply_merge(entry.first, merge);
    }
    table.merges.push_back(merge);
  }
  return table;
}

std::vector<std::string> bpe_encode(const Sentence& words, const MergeTable& table) {
  std::unordered_map<std::string, std::size_t> rank;
  rank.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    rank.emplace(pair_key(table.merges[i].first, table.merges[i].second), i);
  }

  std::vector<std::string> tokens;
  for (const auto& word : words) {
    Symbols symbols = initial_symbols(word);
    // Merges never create a symbol needed by an earlier rule, so repeatedly
    // applying the lowest-ranked applicable rule equals applying the table
    // front to back.
    while (symbols.size() > 1) {
      std::size_t best_rank = std::numeric_limits<std::size_t>::max();
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = rank.find(pair_key(symbols[i], symbols[i + 1]));
        if (it != rank.end() && it->second < best_rank) {
          best_rank = it->second;
        }
      }
      if (best_rank == std::numeric_limits<std::size_t>::max()) {
        break;
      }
      apply_merge(symbols, table.merges[best_rank]);
    }
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      std::string piece = std::move(symbols[i]);
      if (i + 1 == symbols.size()) {
        piece.resize(piece.size() - kEndOfWord.size());
      } else {
        piece += kContinuation;
      }
      tokens.push_back(std::move(piece));
    }
  }
  return tokens;
}

std::string bpe_decode(const std::vector<std::string>& tokens) {
  std::string out;
  bool joined = true;
  for (const auto& token : tokens) {
    if (!joined) {
      out += ' ';
    }
    const bool continues = token.size() >= kContinuation.size() &&
                           std::string_view(token).ends_with(kContinuation);
    if (continues) {
      out.append(token, 0, token.size() - kContinuation.size());
    } else {
      out += token;
    }
    joined = continues;
  }
  return out;
}

void write_merges(std::ostream& out, const MergeTable& table) {
  out << "#bpe-v1 " << table.size() << '\n';
  for (const auto& [left, right] : table.merges) {
    out << left << ' ' << right << '\n';
  }
}

MergeTable read_merges(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("merge file: missing header");
  }
  std::istringstream header(line);
  std::string magic;
  long long declared = -1;
  header >> magic >> declared;
  if (magic != "#bpe-v1" || declared < 0) {
    throw ValidationError(fmt::format("merge file: bad header '{}'", line));
  }
  MergeTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const auto words = split_words(line);
    if (words.size() != 2) {
      throw ValidationError(fmt::format("merge file line {}: expected 'left right'", line_no));
    }
    table.merges.emplace_back(words[0], words[1]);
  }
  if (table.size() != static_cast<std::size_t>(declared)) {
    throw ValidationError(fmt::format("merge file: header declares {} merges, found {}", declared,
                                      table.size()));
  }
  return table;
}

} // namespace lightcap
