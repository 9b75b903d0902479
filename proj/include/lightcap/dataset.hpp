#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lightcap/bpe.hpp"
#include "lightcap/config.hpp"
#include "lightcap/tensor.hpp"
#include "lightcap/training.hpp"
#include "lightcap/vocab.hpp"

namespace lightcap {

struct Example {
  std::string id;
  std::vector<float> features;
  std::vector<std::string> captions;

  friend bool operator==(const Example&, const Example&) = default;
};

/// JSON lines: {"id": str, "features": [reals], "captions": [str]}.
/// Errors name the 1-based line number.
std::vector<Example> read_dataset(std::istream& in, std::size_t v_dim);
std::vector<Example> load_dataset(const std::string& path, std::size_t v_dim);

void write_dataset(std::ostream& out, std::span<const Example> examples);
void save_dataset(const std::string& path, std::span<const Example> examples);

/// Expands a pooled vector into a regions × key_dim grid for multi-head
/// attention: G[r][k] = (Aᵀ v)[k] · M[r][k] with A and M drawn once from `seed`.
class GridSynthesizer {
public:
  GridSynthesizer(std::size_t v_dim, std::size_t regions, std::size_t key_dim, std::uint64_t seed);
  Tensor2D<float> grid(std::span<const float> pooled) const;

private:
  Tensor2D<float> proj_;
  Tensor2D<float> modulation_;
};

/// Encodes every caption (BPE, vocab lookup, trailing EOS) and tokenizes the
/// references for scoring. MHA configs also get a synthesized grid.
std::vector<PreparedExample> prepare_examples(std::span<const Example> examples,
                                              const MergeTable& merges, const Vocab& vocab,
                                              const ModelConfig& cfg, std::uint64_t grid_seed = 7);

/// BPE-encodes one caption string.
std::vector<std::string> encode_caption(const std::string& caption, const MergeTable& merges);

} // namespace lightcap
