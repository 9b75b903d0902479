#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "lightcap/config.hpp"
#include "lightcap/model.hpp"

namespace lightcap {

inline constexpr char kCheckpointMagic[4] = {'C', 'G', 'R', 'U'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

// Layout, all integers and reals little-endian:
//   "CGRU" | u16 version | config echo | u32 n_tensors |
//   n × (u32 name_len | name | u32 rows | u32 cols | rows·cols × f32)
// Config echo: u32 d, h, v_dim, vocab_size | u8 attention | u32 heads, dq,
// regions, key_dim | u8 bottleneck | u8 tied | u32 max_len | f64 dropout |
// u32 width_multiplier.

void write_checkpoint(std::ostream& out, const CaptionModel<float>& model);
void save_checkpoint(const std::string& path, const CaptionModel<float>& model);

ModelConfig read_checkpoint_config(std::istream& in);

/// Every shape-determining field must equal `expected`; max_len and dropout_p
/// are taken from `expected`. Throws CheckpointError.
CaptionModel<float> read_checkpoint(std::istream& in, const ModelConfig& expected);
CaptionModel<float> load_checkpoint(const std::string& path, const ModelConfig& expected);

} // namespace lightcap
