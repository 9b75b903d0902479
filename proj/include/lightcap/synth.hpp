#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lightcap/dataset.hpp"
#include "lightcap/tensor.hpp"

namespace lightcap {

inline constexpr std::array<std::string_view, 3> kCountWords{"one", "two", "three"};
inline constexpr std::array<std::string_view, 4> kColors{"red", "blue", "green", "yellow"};
inline constexpr std::array<std::string_view, 4> kShapes{"square", "circle", "triangle", "star"};
inline constexpr std::array<std::string_view, 3> kRelations{"left of", "above", "next to"};

struct ObjectSpec {
  std::size_t count = 1;  // 1..3
  std::size_t color = 0;
  std::size_t shape = 0;

  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct SceneSpec {
  ObjectSpec first;
  ObjectSpec second;
  std::size_t relation = 0;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// 3·4·4 objects squared, times 3 relations.
inline constexpr std::size_t kSceneCount = 48 * 48 * 3;
/// count(3) + color(4) + shape(4) per object, plus the relation(3).
inline constexpr std::size_t kSceneEncodingDim = 25;

SceneSpec scene_from_index(std::size_t index);
std::size_t scene_index(const SceneSpec& scene);

/// Concatenated one-hot attribute encoding, length kSceneEncodingDim.
std::vector<double> scene_encoding(const SceneSpec& scene);

/// Two references per scene:
///   "two red squares left of one blue circle"
///   "there are two red squares left of a blue circle"
std::array<std::string, 2> scene_captions(const SceneSpec& scene);

/// The fixed v_dim × kSceneEncodingDim projection, entries N(0, 1/5).
Tensor2D<double> synth_projection(std::size_t v_dim, std::uint64_t seed);

struct SynthSplits {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
  std::vector<SceneSpec> scenes;  // in example order: train, val, test
};

/// n distinct scenes; features = P·encoding + N(0, noise_sigma²) per entry.
/// Splits are the first ⌊8n/10⌋, the next ⌊n/10⌋ and the remainder.
SynthSplits synth_generate(std::size_t n, std::size_t v_dim, std::uint64_t seed,
                           double noise_sigma = 0.01);

} // namespace lightcap
