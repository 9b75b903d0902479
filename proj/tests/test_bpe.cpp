#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lightcap/bpe.hpp"
#include "lightcap/error.hpp"
#include "lightcap/rng.hpp"
#include "lightcap/vocab.hpp"

using namespace lightcap;

namespace {

std::vector<Sentence> repeat_words(const std::vector<std::pair<std::string, int>>& counts) {
  std::vector<Sentence> corpus;
  for (const auto& [w, n] : counts) {
    for (int i = 0; i < n; ++i) {
      corpus.push_back({w});
    }
  }
  return corpus;
}

std::vector<Sentence> toy_corpus() {
  return repeat_words({{"low", 5}, {"lower", 2}, {"newest", 6}, {"widest", 3}});
}

using Pair = std::pair<std::string, std::string>;

} // namespace

TEST(LearnBpe, ZeroMergesGivesCharacters) {
  const auto table = learn_bpe(toy_corpus(), 0);
  EXPECT_TRUE(table.empty());
  EXPECT_EQ(bpe_encode({"low"}, table), (std::vector<std::string>{"l@@", "o@@", "w"}));
}

TEST(LearnBpe, FirstMergeIsMostFrequentPair) {
  // e-s occurs in newest (6) and widest (3); s-t</w> ties at 9 and sorts later.
  const auto table = learn_bpe(toy_corpus(), 1);
  ASSERT_EQ(table.size(), 1u);
  EXPECT_EQ(table.merges[0], Pair("e", "s"));
}

TEST(LearnBpe, HandTracedMergeSequence) {
  // Pair counts after each merge, ties broken by the smaller pair:
  //   e s 9 | es t</w> 9 | l o 7 | e w 6 (< n e, w est</w>) |
  //   ew est</w> 6 | n ewest</w> 6 | lo w</w> 5
  const auto table = learn_bpe(toy_corpus(), 7);
  const std::vector<Pair> expected{
      {"e", "s"},   {"es", "t</w>"},        {"l", "o"},      {"e", "w"},
      {"ew", "est</w>"}, {"n", "ewest</w>"}, {"lo", "w</w>"},
  };
  EXPECT_EQ(table.merges, expected);
}

TEST(LearnBpe, StopsWhenWordIsSingleSymbol) {
  const auto table = learn_bpe(repeat_words({{"aaaa", 10}}), 10);
  // aa a a</w>: (a, a</w>) ties (aa, a) at 10 and sorts first.
  const std::vector<Pair> expected{{"a", "a"}, {"a", "a</w>"}, {"aa", "aa</w>"}};
  EXPECT_EQ(table.merges, expected);
  EXPECT_EQ(bpe_encode({"aaaa"}, table), (std::vector<std::string>{"aaaa"}));
}

TEST(LearnBpe, Deterministic) {
  EXPECT_EQ(learn_bpe(toy_corpus(), 20), learn_bpe(toy_corpus(), 20));
}

TEST(BpeEncode, EmptySentence) {
  EXPECT_TRUE(bpe_encode({}, learn_bpe(toy_corpus(), 5)).empty());
}

TEST(BpeEncode, LearnedWordIsOneToken) {
  const auto table = learn_bpe(repeat_words({{"widest", 2}}), 50);
  EXPECT_EQ(bpe_encode({"widest"}, table), (std::vector<std::string>{"widest"}));
}

TEST(BpeEncode, PartialMergesMarkContinuation) {
  const auto table = learn_bpe(toy_corpus(), 3);
  EXPECT_EQ(bpe_encode({"lowest"}, table), (std::vector<std::string>{"lo@@", "w@@", "est"}));
}

TEST(BpeDecode, Examples) {
  EXPECT_EQ(bpe_decode({"lo@@", "w"}), "low");
  EXPECT_EQ(bpe_decode({}), "");
  EXPECT_EQ(bpe_decode({"a", "b"}), "a b");
}

TEST(BpeRoundTrip, RandomSentences) {
  Rng rng(11);
  const std::string alphabet = "abcdeilnorstw";
  auto random_word = [&] {
    std::string w;
    const auto len = 1 + rng.below(8);
    for (std::uint64_t i = 0; i < len; ++i) {
      w += alphabet[rng.below(alphabet.size())];
    }
    return w;
  };
  std::vector<Sentence> corpus;
  for (int i = 0; i < 300; ++i) {
    Sentence s;
    for (std::uint64_t k = 0; k < 1 + rng.below(6); ++k) {
      s.push_back(random_word());
    }
    corpus.push_back(s);
  }
  const auto table = learn_bpe(corpus, 150);
  ASSERT_GT(table.size(), 50u);
  for (int i = 0; i < 1000; ++i) {
    std::string text;
    const auto n = rng.below(9);
    for (std::uint64_t k = 0; k < n; ++k) {
      text += (k ? " " : "") + random_word();
    }
    EXPECT_EQ(bpe_decode(bpe_encode(split_words(text), table)), text);
  }
}

TEST(BpeRoundTrip, Utf8Words) {
  const auto table = learn_bpe(repeat_words({{"café", 4}, {"naïve", 3}}), 10);
  const Sentence s{"café", "naïf", "é"};
  EXPECT_EQ(bpe_decode(bpe_encode(s, table)), "café naïf é");
  EXPECT_EQ(utf8_chars("naïve").size(), 5u);
}

TEST(MergeFile, RoundTrip) {
  const auto table = learn_bpe(toy_corpus(), 7);
  std::stringstream ss;
  write_merges(ss, table);
  EXPECT_EQ(ss.str().rfind("#bpe-v1 7\n", 0), 0u);
  EXPECT_EQ(read_merges(ss), table);
}

TEST(MergeFile, BadHeaderRejected) {
  std::stringstream ss("e s\n");
  EXPECT_THROW(read_merges(ss), ValidationError);
}

TEST(Vocab, SpecialsThenSortedTokens) {
  const auto v = build_vocab({{"b", "a"}, {"a"}});
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.id("a"), 4);
  EXPECT_EQ(v.id("b"), 5);
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
  EXPECT_EQ(v.token(Vocab::kEos), "<eos>");
}

TEST(Vocab, DeterministicBuild) {
  const std::vector<std::vector<std::string>> corpus{{"x", "y@@", "z"}, {"y@@", "q"}};
  EXPECT_EQ(build_vocab(corpus), build_vocab(corpus));
}

TEST(Vocab, DecodeDropsControlTokens) {
  const auto v = build_vocab({{"lo@@", "w"}});
  const std::vector<TokenId> ids{Vocab::kBos, v.id("lo@@"), v.id("w"), Vocab::kUnk, Vocab::kEos,
                                 Vocab::kPad};
  EXPECT_EQ(v.decode(ids), (std::vector<std::string>{"lo@@", "w", "<unk>"}));
  EXPECT_THROW(v.token(99), IndexError);
}

TEST(Vocab, FileRoundTrip) {
  const auto v = build_vocab({{"red", "sq@@", "uare"}});
  std::stringstream ss;
  v.write(ss);
  EXPECT_EQ(Vocab::read(ss), v);
}

TEST(Vocab, DuplicateTokenRejected) {
  EXPECT_THROW(Vocab(std::vector<std::string>{"a", "a"}), ValidationError);
}
