#include "lightcap/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <unordered_set>

#include <fmt/format.h>

#include "lightcap/bpe.hpp"
#include "lightcap/error.hpp"

namespace lightcap {

namespace {

constexpr std::size_t kMaxOrder = 4;

using Counts = std::unordered_map<std::string, double>;

std::array<Counts, kMaxOrder> ngram_counts(const Words& words) {
  std::array<Counts, kMaxOrder> out;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string key = words[i];
      for (std::size_t j = 1; j < n; ++j) {
        key += ' ';
        key += words[i + j];
      }
      out[n - 1][key] += 1.0;
    }
  }
  return out;
}

struct BleuStats {
  std::array<double, kMaxOrder> matched{};
  std::array<double, kMaxOrder> total{};
  double cand_len = 0.0;
  double ref_len = 0.0;
};

void accumulate_bleu(const Words& cand, const ReferenceSet& refs, BleuStats& st) {
  if (refs.empty()) {
    throw ValidationError("bleu4: empty reference set");
  }
  const auto cc = ngram_counts(cand);
  std::array<Counts, kMaxOrder> max_ref;
  std::size_t closest = refs.front().size();
  for (const auto& ref : refs) {
    const auto rc = ngram_counts(ref);
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
      for (const auto& [g, c] : rc[n]) {
        auto& m = max_ref[n][g];
        m = std::max(m, c);
      }
    }
    const auto diff = [&](std::size_t len) {
      return std::abs(static_cast<long>(len) - static_cast<long>(cand.size()));
    };
    if (diff(ref.size()) < diff(closest) || (diff(ref.size()) == diff(closest) && ref.size() < closest)) {
      closest = ref.size();
    }
  }
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    for (const auto& [g, c] : cc[n]) {
      auto it = max_ref[n].find(g);
      if (it != max_ref[n].end()) {
        st.matched[n] += std::min(c, it->second);
      }
    }
    st.total[n] += cand.size() >= n + 1 ? static_cast<double>(cand.size() - n) : 0.0;
  }
  st.cand_len += static_cast<double>(cand.size());
  st.ref_len += static_cast<double>(closest);
}

double brevity_penalty(double c, double r) {
  if (c <= 0.0) {
    return 0.0;
  }
  return c < r ? std::exp(1.0 - r / c) : 1.0;
}

/// TF-IDF vectors per order, their norms, and the word length.
struct CiderVector {
  std::array<Counts, kMaxOrder> vec;
  std::array<double, kMaxOrder> norm{};
  double length = 0.0;
};

CiderVector cider_vector(const Words& words, const NGramStats& idf) {
  CiderVector out;
  const auto counts = ngram_counts(words);
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    for (const auto& [g, tf] : counts[n]) {
      auto it = idf.document_frequency[n].find(g);
      const double df = it == idf.document_frequency[n].end() ? 0.0 : it->second;
      const double w = tf * (idf.log_documents - std::log(std::max(1.0, df)));
      out.vec[n][g] = w;
      out.norm[n] += w * w;
    }
    out.norm[n] = std::sqrt(out.norm[n]);
  }
  out.length = static_cast<double>(words.size());
  return out;
}

std::array<double, kMaxOrder> cider_similarity(const CiderVector& cand, const CiderVector& ref,
                                               double sigma) {
  std::array<double, kMaxOrder> val{};
  const double delta = cand.length - ref.length;
  const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    for (const auto& [g, w] : cand.vec[n]) {
      auto it = ref.vec[n].find(g);
      if (it != ref.vec[n].end()) {
        val[n] += std::min(w, it->second) * it->second;
      }
    }
    if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) {
      val[n] /= cand.norm[n] * ref.norm[n];
    }
    val[n] *= penalty;
  }
  return val;
}

} // namespace

Words metric_tokens(std::string_view sentence) {
  std::string lower(sentence);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return split_words(lower);
}

double bleu4(const std::vector<Words>& candidates, const std::vector<ReferenceSet>& references) {
  if (candidates.size() != references.size()) {
    throw ValidationError(fmt::format("bleu4: {} candidates but {} reference sets",
                                      candidates.size(), references.size()));
  }
  BleuStats st;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    accumulate_bleu(candidates[i], references[i], st);
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (st.total[n] == 0.0 || st.matched[n] == 0.0) {
      return 0.0;
    }
    log_sum += std::log(st.matched[n] / st.total[n]);
  }
  return brevity_penalty(st.cand_len, st.ref_len) * std::exp(log_sum / kMaxOrder);
}

double sentence_bleu4(const Words& candidate, const ReferenceSet& references) {
  BleuStats st;
  accumulate_bleu(candidate, references, st);
  if (st.total[0] == 0.0 || st.matched[0] == 0.0) {
    return 0.0;
  }
  double log_sum = std::log(st.matched[0] / st.total[0]);
  for (std::size_t n = 1; n < kMaxOrder; ++n) {
    log_sum += std::log((st.matched[n] + 1.0) / (st.total[n] + 1.0));
  }
  return brevity_penalty(st.cand_len, st.ref_len) * std::exp(log_sum / kMaxOrder);
}

NGramStats build_idf(const std::vector<ReferenceSet>& references) {
  NGramStats out;
  for (const auto& refs : references) {
    std::array<std::unordered_set<std::string>, kMaxOrder> seen;
    for (const auto& ref : refs) {
      const auto counts = ngram_counts(ref);
      for (std::size_t n = 0; n < kMaxOrder; ++n) {
        for (const auto& [g, c] : counts[n]) {
          seen[n].insert(g);
        }
      }
    }
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
      for (const auto& g : seen[n]) {
        out.document_frequency[n][g] += 1.0;
      }
    }
  }
  out.documents = references.size();
  out.log_documents = out.documents == 0 ? 0.0 : std::log(static_cast<double>(out.documents));
  return out;
}

double cider_d_sentence(const Words& candidate, const ReferenceSet& references,
                        const NGramStats& idf, double sigma) {
  if (idf.documents == 0) {
    throw ValidationError("cider_d: empty IDF table");
  }
  if (references.empty()) {
    throw ValidationError("cider_d: empty reference set");
  }
  if (candidate.empty()) {
    return 0.0;
  }
  const auto cv = cider_vector(candidate, idf);
  std::array<double, kMaxOrder> acc{};
  for (const auto& ref : references) {
    const auto rv = cider_vector(ref, idf);
    const auto s = cider_similarity(cv, rv, sigma);
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
      acc[n] += s[n];
    }
  }
  double mean = 0.0;
  for (const double v : acc) {
    mean += v;
  }
  mean /= static_cast<double>(kMaxOrder);
  return 10.0 * mean / static_cast<double>(references.size());
}

CorpusScore cider_d(const std::vector<Words>& candidates, const std::vector<ReferenceSet>& references,
                    const NGramStats& idf, double sigma) {
  if (candidates.size() != references.size()) {
    throw ValidationError(fmt::format("cider_d: {} candidates but {} reference sets",
                                      candidates.size(), references.size()));
  }
  if (idf.documents == 0) {
    throw ValidationError("cider_d: empty IDF table");
  }
  CorpusScore out;
  out.per_item.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.per_item.push_back(cider_d_sentence(candidates[i], references[i], idf, sigma));
    out.mean += out.per_item.back();
  }
  if (!candidates.empty()) {
    out.mean /= static_cast<double>(candidates.size());
  }
  return out;
}

} // namespace lightcap
