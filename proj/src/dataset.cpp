#include "lightcap/dataset.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

#include "lightcap/error.hpp"
#include "lightcap/metrics.hpp"
#include "lightcap/ops.hpp"
#include "lightcap/rng.hpp"

namespace lightcap {

using nlohmann::json;

namespace {

Example parse_line(const std::string& line, std::size_t lineno, std::size_t v_dim) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("line {}: malformed JSON ({})", lineno, e.what()));
  }
  if (!j.is_object()) {
    throw ValidationError(fmt::format("line {}: expected a JSON object", lineno));
  }
  const auto field = [&](const char* name) -> const json& {
    auto it = j.find(name);
    if (it == j.end()) {
      throw ValidationError(fmt::format("line {}: missing field '{}'", lineno, name));
    }
    return *it;
  };

  Example ex;
  const json& id = field("id");
  if (!id.is_string()) {
    throw ValidationError(fmt::format("line {}: 'id' must be a string", lineno));
  }
  ex.id = id.get<std::string>();

  const json& feats = field("features");
  if (!feats.is_array()) {
    throw ValidationError(fmt::format("line {}: 'features' must be an array", lineno));
  }
  if (feats.size() != v_dim) {
    throw ValidationError(fmt::format("line {}: features has length {}, expected {}", lineno,
                                      feats.size(), v_dim));
  }
  ex.features.reserve(v_dim);
  for (const auto& v : feats) {
    if (!v.is_number()) {
      throw ValidationError(fmt::format("line {}: non-numeric feature value", lineno));
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      throw ValidationError(fmt::format("line {}: non-finite feature value", lineno));
    }
    ex.features.push_back(static_cast<float>(x));
  }

  const json& caps = field("captions");
  if (!caps.is_array()) {
    throw ValidationError(fmt::format("line {}: 'captions' must be an array", lineno));
  }
  if (caps.empty()) {
    throw ValidationError(fmt::format("line {}: 'captions' is empty", lineno));
  }
  for (const auto& c : caps) {
    if (!c.is_string()) {
      throw ValidationError(fmt::format("line {}: captions must be strings", lineno));
    }
    ex.captions.push_back(c.get<std::string>());
  }
  return ex;
}

} // namespace

std::vector<Example> read_dataset(std::istream& in, std::size_t v_dim) {
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    out.push_back(parse_line(line, lineno, v_dim));
  }
  return out;
}

std::vector<Example> load_dataset(const std::string& path, std::size_t v_dim) {
  std::ifstream in(path);
  if (!in) {
    throw IoError(fmt::format("cannot open dataset '{}'", path));
  }
  try {
    return read_dataset(in, v_dim);
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path, e.what()));
  }
}

void write_dataset(std::ostream& out, std::span<const Example> examples) {
  for (const auto& ex : examples) {
    json j;
    j["id"] = ex.id;
    j["features"] = ex.features;
    j["captions"] = ex.captions;
    out << j.dump() << '\n';
  }
}

void save_dataset(const std::string& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError(fmt::format("cannot write dataset '{}'", path));
  }
  write_dataset(out, examples);
  if (!out) {
    throw IoError(fmt::format("write failed for '{}'", path));
  }
}

GridSynthesizer::GridSynthesizer(std::size_t v_dim, std::size_t regions, std::size_t key_dim,
                                 std::uint64_t seed)
    : proj_(v_dim, key_dim), modulation_(regions, key_dim) {
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(v_dim));
  for (auto& v : proj_.flat()) {
    v = static_cast<float>(rng.normal() * scale);
  }
  for (auto& v : modulation_.flat()) {
    v = static_cast<float>(rng.uniform(0.5, 1.5));
  }
}

Tensor2D<float> GridSynthesizer::grid(std::span<const float> pooled) const {
  if (pooled.size() != proj_.rows()) {
    throw ShapeError(fmt::format("grid synthesis expects {} features, got {}", proj_.rows(),
                                 pooled.size()));
  }
  std::vector<float> base(proj_.cols(), 0.0F);
  gemv_t_acc<float>(proj_, pooled, base);
  Tensor2D<float> g(modulation_.rows(), modulation_.cols());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t k = 0; k < g.cols(); ++k) {
      g(r, k) = base[k] * modulation_(r, k);
    }
  }
  return g;
}

std::vector<std::string> encode_caption(const std::string& caption, const MergeTable& merges) {
  return bpe_encode(split_words(caption), merges);
}

std::vector<PreparedExample> prepare_examples(std::span<const Example> examples,
                                              const MergeTable& merges, const Vocab& vocab,
                                              const ModelConfig& cfg, std::uint64_t grid_seed) {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  std::optional<GridSynthesizer> synth;
  if (cfg.attention_mode == AttentionMode::mha) {
    synth.emplace(cfg.v_dim, cfg.mha_regions, cfg.mha_key_dim, grid_seed);
  }
  for (const auto& ex : examples) {
    if (ex.features.size() != cfg.v_dim) {
      throw ShapeError(fmt::format("example '{}': features has length {}, expected {}", ex.id,
                                   ex.features.size(), cfg.v_dim));
    }
    if (ex.captions.empty()) {
      throw ValidationError(fmt::format("example '{}' has no captions", ex.id));
    }
    PreparedExample p;
    p.id = ex.id;
    p.visual.pooled = ex.features;
    if (synth) {
      p.visual.grid = synth->grid(ex.features);
    }
    for (const auto& cap : ex.captions) {
      auto ids = vocab.encode(encode_caption(cap, merges));
      ids.push_back(Vocab::kEos);
      p.targets.push_back(std::move(ids));
      p.references.push_back(metric_tokens(cap));
    }
    out.push_back(std::move(p));
  }
  return out;
}

} // namespace lightcap
