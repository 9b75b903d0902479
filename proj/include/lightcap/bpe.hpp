#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lightcap {

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kContinuation = "@@";

/// Ordered byte-pair merge rules, in the order they were learned.
struct MergeTable {
  std::vector<std::pair<std::string, std::string>> merges;

  std::size_t size() const noexcept { return merges.size(); }
  bool empty() const noexcept { return merges.empty(); }
  friend bool operator==(const MergeTable&, const MergeTable&) = default;
};

using Sentence = std::vector<std::string>;

/// Splits on ASCII whitespace.
Sentence split_words(std::string_view text);

/// Splits a word into UTF-8 code points.
std::vector<std::string> utf8_chars(std::string_view word);

/// Greedy most-frequent-pair merging over the word-frequency table of
/// `corpus`. Equal counts are broken by the lexicographically smallest
/// (left, right) pair; learning stops once no pair occurs at least twice.
MergeTable learn_bpe(const std::vector<Sentence>& corpus, std::size_t n_merges);

/// Segments each word with the learned merges. Non-final pieces carry "@@".
std::vector<std::string> bpe_encode(const Sentence& words, const MergeTable& table);

/// Joins tokens across "@@" markers and space-separates the rest.
std::string bpe_decode(const std::vector<std::string>& tokens);

/// Merge file: header "#bpe-v1 <n>", then one "left right" pair per line.
void write_merges(std::ostream& out, const MergeTable& table);
MergeTable read_merges(std::istream& in);

} // namespace lightcap
