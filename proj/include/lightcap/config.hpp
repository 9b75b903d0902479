#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>

namespace lightcap {

enum class AttentionMode { pooled, mha };
enum class BottleneckMode { linear, deep_gru };
enum class RewardMetric { cider_d, bleu4 };

/// Decoder dimensions. Field defaults are the published operating point;
/// use desk() for the small configuration the tooling defaults to.
struct ModelConfig {
  std::size_t d = 128;
  std::size_t h = 256;
  std::size_t v_dim = 2048;
  std::size_t vocab_size = 5066;
  AttentionMode attention_mode = AttentionMode::pooled;
  std::size_t mha_heads = 3;
  std::size_t mha_dq = 0;  // 0 means "hidden size"
  std::size_t mha_regions = 196;
  std::size_t mha_key_dim = 1024;
  BottleneckMode bottleneck_mode = BottleneckMode::deep_gru;
  bool tie_weights = true;
  std::size_t max_len = 50;
  double dropout_p = 0.5;
  std::size_t width_multiplier = 1;

  static ModelConfig paper() { return {}; }
  static ModelConfig desk();

  std::size_t emb_dim() const noexcept { return d * width_multiplier; }
  std::size_t hidden_dim() const noexcept { return h * width_multiplier; }
  std::size_t query_dim() const noexcept { return mha_dq == 0 ? hidden_dim() : mha_dq; }
  /// Length of the bottleneck vector b_t; always the embedding size.
  std::size_t bottleneck_dim() const noexcept { return emb_dim(); }

  /// Throws ValidationError on non-positive dims or dropout outside [0, 1).
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lr = 4e-4;
  double rl_lr = 4e-5;
  std::size_t batch_size = 32;
  std::size_t patience_epochs = 10;
  std::size_t max_epochs = 100;
  std::size_t rl_epochs = 50;
  std::size_t rl_samples = 1;
  RewardMetric rl_reward_metric = RewardMetric::cider_d;
  std::size_t beam = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DataConfig {
  std::size_t synth_examples = 500;
  std::size_t bpe_merges = 200;
};

struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  DataConfig data;

  /// Applies one "key = value" entry. Unknown keys or malformed values throw
  /// ValidationError.
  void set(const std::string& key, const std::string& value);

  /// Reads a flat "key = value" file; '#' starts a comment.
  void load(std::istream& in);
  void load_file(const std::string& path);

  void write(std::ostream& out) const;
};

std::string to_string(AttentionMode m);
std::string to_string(BottleneckMode m);
std::string to_string(RewardMetric m);

} // namespace lightcap
