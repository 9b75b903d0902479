#include "lightcap/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "lightcap/error.hpp"

namespace lightcap {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ValidationError(fmt::format("config: '{}' expects a non-negative integer, got '{}'", key, v));
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) {
      throw std::invalid_argument(v);
    }
    return out;
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("config: '{}' expects a real number, got '{}'", key, v));
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") {
    return true;
  }
  if (v == "false" || v == "0") {
    return false;
  }
  throw ValidationError(fmt::format("config: '{}' expects true/false, got '{}'", key, v));
}

} // namespace

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.d = 32;
  c.h = 64;
  c.v_dim = 64;
  c.vocab_size = 0;
  c.mha_regions = 16;
  c.mha_key_dim = 64;
  c.max_len = 50;
  return c;
}

void ModelConfig::validate() const {
  if (d == 0 || h == 0 || v_dim == 0 || vocab_size == 0 || width_multiplier == 0) {
    throw ValidationError("model config: d, h, v_dim, vocab_size and width_multiplier must be positive");
  }
  if (attention_mode == AttentionMode::mha &&
      (mha_heads == 0 || mha_regions == 0 || mha_key_dim == 0)) {
    throw ValidationError("model config: mha_heads, mha_regions and mha_key_dim must be positive");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ValidationError(fmt::format("model config: dropout_p {} outside [0, 1)", dropout_p));
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(rl_lr > 0.0) || batch_size == 0 || patience_epochs == 0 || rl_samples == 0 ||
      beam == 0) {
    throw ValidationError("train config: lr, rl_lr, batch_size, patience_epochs, rl_samples and beam must be positive");
  }
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto& m = model;
  auto& t = train;
  if (key == "d") {
    m.d = parse_uint(key, v);
  } else if (key == "h") {
    m.h = parse_uint(key, v);
  } else if (key == "v_dim") {
    m.v_dim = parse_uint(key, v);
  } else if (key == "vocab_size") {
    m.vocab_size = parse_uint(key, v);
  } else if (key == "attention_mode") {
    if (v == "pooled") {
      m.attention_mode = AttentionMode::pooled;
    } else if (v == "mha") {
      m.attention_mode = AttentionMode::mha;
    } else {
      throw ValidationError(fmt::format("config: attention_mode must be pooled|mha, got '{}'", v));
    }
  } else if (key == "mha_heads") {
    m.mha_heads = parse_uint(key, v);
  } else if (key == "mha_dq") {
    m.mha_dq = parse_uint(key, v);
  } else if (key == "mha_regions") {
    m.mha_regions = parse_uint(key, v);
  } else if (key == "mha_key_dim") {
    m.mha_key_dim = parse_uint(key, v);
  } else if (key == "bottleneck_mode") {
    if (v == "linear") {
      m.bottleneck_mode = BottleneckMode::linear;
    } else if (v == "deep_gru") {
      m.bottleneck_mode = BottleneckMode::deep_gru;
    } else {
      throw ValidationError(fmt::format("config: bottleneck_mode must be linear|deep_gru, got '{}'", v));
    }
  } else if (key == "tie_weights") {
    m.tie_weights = parse_bool(key, v);
  } else if (key == "max_len") {
    m.max_len = parse_uint(key, v);
  } else if (key == "dropout_p") {
    m.dropout_p = parse_real(key, v);
  } else if (key == "width_multiplier") {
    m.width_multiplier = parse_uint(key, v);
  } else if (key == "lr") {
    t.lr = parse_real(key, v);
  } else if (key == "rl_lr") {
    t.rl_lr = parse_real(key, v);
  } else if (key == "batch_size") {
    t.batch_size = parse_uint(key, v);
  } else if (key == "patience_epochs") {
    t.patience_epochs = parse_uint(key, v);
  } else if (key == "max_epochs") {
    t.max_epochs = parse_uint(key, v);
  } else if (key == "rl_epochs") {
    t.rl_epochs = parse_uint(key, v);
  } else if (key == "rl_samples") {
    t.rl_samples = parse_uint(key, v);
  } else if (key == "rl_reward_metric") {
    if (v == "cider_d") {
      t.rl_reward_metric = RewardMetric::cider_d;
    } else if (v == "bleu4") {
      t.rl_reward_metric = RewardMetric::bleu4;
    } else {
      throw ValidationError(fmt::format("config: rl_reward_metric must be cider_d|bleu4, got '{}'", v));
    }
  } else if (key == "beam") {
    t.beam = parse_uint(key, v);
  } else if (key == "seed") {
    t.seed = parse_uint(key, v);
  } else if (key == "synth_examples") {
    data.synth_examples = parse_uint(key, v);
  } else if (key == "bpe_merges") {
    data.bpe_merges = parse_uint(key, v);
  } else {
    throw ValidationError(fmt::format("config: unknown key '{}'", key));
  }
}

void RunConfig::load(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError(fmt::format("cannot open config file '{}'", path));
  }
  load(in);
}

void RunConfig::write(std::ostream& out) const {
  const auto& m = model;
  const auto& t = train;
  out << "d = " << m.d << '\n'
      << "h = " << m.h << '\n'
      << "v_dim = " << m.v_dim << '\n'
      << "vocab_size = " << m.vocab_size << '\n'
      << "attention_mode = " << to_string(m.attention_mode) << '\n'
      << "mha_heads = " << m.mha_heads << '\n'
      << "mha_dq = " << m.mha_dq << '\n'
      << "mha_regions = " << m.mha_regions << '\n'
      << "mha_key_dim = " << m.mha_key_dim << '\n'
      << "bottleneck_mode = " << to_string(m.bottleneck_mode) << '\n'
      << "tie_weights = " << (m.tie_weights ? "true" : "false") << '\n'
      << "max_len = " << m.max_len << '\n'
      << "dropout_p = " << fmt::format("{}", m.dropout_p) << '\n'
      << "width_multiplier = " << m.width_multiplier << '\n'
      << "lr = " << fmt::format("{}", t.lr) << '\n'
      << "rl_lr = " << fmt::format("{}", t.rl_lr) << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "patience_epochs = " << t.patience_epochs << '\n'
      << "max_epochs = " << t.max_epochs << '\n'
      << "rl_epochs = " << t.rl_epochs << '\n'
      << "rl_samples = " << t.rl_samples << '\n'
      << "rl_reward_metric = " << to_string(t.rl_reward_metric) << '\n'
      << "beam = " << t.beam << '\n'
      << "seed = " << t.seed << '\n'
      << "synth_examples = " << data.synth_examples << '\n'
      << "bpe_merges = " << data.bpe_merges << '\n';
}

std::string to_string(AttentionMode m) { return m == AttentionMode::pooled ? "pooled" : "mha"; }
std::string to_string(BottleneckMode m) {
  return m == BottleneckMode::linear ? "linear" : "deep_gru";
}
std::string to_string(RewardMetric m) { return m == RewardMetric::cider_d ? "cider_d" : "bleu4"; }

} // namespace lightcap
