#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lightcap {

using Words = std::vector<std::string>;
using ReferenceSet = std::vector<Words>;

/// Lowercases and splits on whitespace.
Words metric_tokens(std::string_view sentence);

/// Corpus BLEU-4: geometric mean of clipped 1..4-gram precisions pooled over
/// the corpus, times the brevity penalty exp(1 − r/c) when c < r. The
/// reference length of each candidate is its closest reference length (the
/// shorter one on ties). Any zero precision gives 0.
double bleu4(const std::vector<Words>& candidates, const std::vector<ReferenceSet>& references);

/// Sentence BLEU-4 with add-one smoothing on the 2..4-gram precisions.
double sentence_bleu4(const Words& candidate, const ReferenceSet& references);

/// Document frequencies for CIDEr-D; one document per reference set.
struct NGramStats {
  std::array<std::unordered_map<std::string, double>, 4> document_frequency;
  std::size_t documents = 0;
  double log_documents = 0.0;
};

NGramStats build_idf(const std::vector<ReferenceSet>& references);

inline constexpr double kCiderSigma = 6.0;

/// CIDEr-D of one candidate against its references, on the 0..10 scale.
double cider_d_sentence(const Words& candidate, const ReferenceSet& references,
                        const NGramStats& idf, double sigma = kCiderSigma);

struct CorpusScore {
  double mean = 0.0;
  std::vector<double> per_item;
};

CorpusScore cider_d(const std::vector<Words>& candidates, const std::vector<ReferenceSet>& references,
                    const NGramStats& idf, double sigma = kCiderSigma);

} // namespace lightcap
