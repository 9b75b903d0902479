#include "lightcap/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include <fmt/format.h>

#include "lightcap/error.hpp"

namespace lightcap {

namespace {

using Kind = CheckpointError::Kind;

template <typename U>
void put(std::ostream& out, U value) {
  unsigned char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(buf, buf + sizeof(U));
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw CheckpointError(Kind::truncated, "checkpoint is truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(buf, buf + sizeof(U));
  }
  U value;
  std::memcpy(&value, buf, sizeof(U));
  return value;
}

std::uint32_t to_u32(std::size_t v) {
  if (v > UINT32_MAX) {
    throw ValidationError(fmt::format("value {} does not fit the checkpoint format", v));
  }
  return static_cast<std::uint32_t>(v);
}

void put_config(std::ostream& out, const ModelConfig& c) {
  put(out, to_u32(c.d));
  put(out, to_u32(c.h));
  put(out, to_u32(c.v_dim));
  put(out, to_u32(c.vocab_size));
  put(out, static_cast<std::uint8_t>(c.attention_mode));
  put(out, to_u32(c.mha_heads));
  put(out, to_u32(c.mha_dq));
  put(out, to_u32(c.mha_regions));
  put(out, to_u32(c.mha_key_dim));
  put(out, static_cast<std::uint8_t>(c.bottleneck_mode));
  put(out, static_cast<std::uint8_t>(c.tie_weights ? 1 : 0));
  put(out, to_u32(c.max_len));
  put(out, c.dropout_p);
  put(out, to_u32(c.width_multiplier));
}

ModelConfig get_config(std::istream& in) {
  ModelConfig c;
  c.d = get<std::uint32_t>(in);
  c.h = get<std::uint32_t>(in);
  c.v_dim = get<std::uint32_t>(in);
  c.vocab_size = get<std::uint32_t>(in);
  const auto att = get<std::uint8_t>(in);
  c.mha_heads = get<std::uint32_t>(in);
  c.mha_dq = get<std::uint32_t>(in);
  c.mha_regions = get<std::uint32_t>(in);
  c.mha_key_dim = get<std::uint32_t>(in);
  const auto bot = get<std::uint8_t>(in);
  const auto tied = get<std::uint8_t>(in);
  c.max_len = get<std::uint32_t>(in);
  c.dropout_p = get<double>(in);
  c.width_multiplier = get<std::uint32_t>(in);
  if (att > 1 || bot > 1 || tied > 1) {
    throw CheckpointError(Kind::config_mismatch, "checkpoint config has invalid enum values");
  }
  c.attention_mode = static_cast<AttentionMode>(att);
  c.bottleneck_mode = static_cast<BottleneckMode>(bot);
  c.tie_weights = tied == 1;
  return c;
}

void read_header(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4)) {
    throw CheckpointError(Kind::truncated, "checkpoint is truncated");
  }
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw CheckpointError(Kind::bad_magic, "not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint16_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::bad_version, fmt::format("unsupported checkpoint version {} (expected {})",
                                                         version, kCheckpointVersion));
  }
}

bool same_structure(ModelConfig a, ModelConfig b) {
  a.max_len = b.max_len;
  a.dropout_p = b.dropout_p;
  return a == b;
}

} // namespace

void write_checkpoint(std::ostream& out, const CaptionModel<float>& model) {
  out.write(kCheckpointMagic, 4);
  put(out, kCheckpointVersion);
  put_config(out, model.config());
  const auto& params = model.params();
  put(out, to_u32(params.count()));
  for (const auto& p : params) {
    put(out, to_u32(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put(out, to_u32(p->value.rows()));
    put(out, to_u32(p->value.cols()));
    for (const float v : p->value.flat()) {
      put(out, v);
    }
  }
}

void save_checkpoint(const std::string& path, const CaptionModel<float>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError(fmt::format("cannot write checkpoint '{}'", path));
  }
  write_checkpoint(out, model);
  if (!out) {
    throw IoError(fmt::format("write failed for '{}'", path));
  }
}

ModelConfig read_checkpoint_config(std::istream& in) {
  read_header(in);
  return get_config(in);
}

CaptionModel<float> read_checkpoint(std::istream& in, const ModelConfig& expected) {
  const ModelConfig stored = read_checkpoint_config(in);
  if (!same_structure(stored, expected)) {
    throw CheckpointError(Kind::config_mismatch,
                          "checkpoint config does not match the requested model config");
  }
  CaptionModel<float> model(expected);
  auto& params = model.params();
  const auto n = get<std::uint32_t>(in);
  if (n != params.count()) {
    throw CheckpointError(Kind::shape_mismatch, fmt::format("checkpoint holds {} tensors, model has {}",
                                                            n, params.count()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = params[i];
    const auto len = get<std::uint32_t>(in);
    if (len > 4096) {
      throw CheckpointError(Kind::truncated, "checkpoint tensor name is implausibly long");
    }
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) {
      throw CheckpointError(Kind::truncated, "checkpoint is truncated");
    }
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
      throw CheckpointError(Kind::shape_mismatch,
                            fmt::format("tensor {} is '{}' {}x{}, expected '{}' {}", i, name, rows,
                                        cols, p.name, p.value.shape_string()));
    }
    for (auto& v : p.value.flat()) {
      v = get<float>(in);
    }
  }
  return model;
}

CaptionModel<float> load_checkpoint(const std::string& path, const ModelConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(fmt::format("cannot open checkpoint '{}'", path));
  }
  return read_checkpoint(in, expected);
}

} // namespace lightcap
