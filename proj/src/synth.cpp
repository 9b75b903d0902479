#include "lightcap/synth.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "lightcap/error.hpp"
#include "lightcap/rng.hpp"

namespace lightcap {

namespace {

constexpr std::size_t kObjectCount = 48;

ObjectSpec object_from_index(std::size_t i) {
  return {i / 16 + 1, (i / 4) % 4, i % 4};
}

std::size_t object_index(const ObjectSpec& o) {
  return (o.count - 1) * 16 + o.color * 4 + o.shape;
}

std::string object_phrase(const ObjectSpec& o, bool article) {
  const std::string_view count = (article && o.count == 1) ? "a" : kCountWords.at(o.count - 1);
  return fmt::format("{} {} {}{}", count, kColors.at(o.color), kShapes.at(o.shape),
                     o.count > 1 ? "s" : "");
}

} // namespace

SceneSpec scene_from_index(std::size_t index) {
  if (index >= kSceneCount) {
    throw IndexError(fmt::format("scene index {} out of range", index));
  }
  SceneSpec s;
  s.relation = index % 3;
  index /= 3;
  s.second = object_from_index(index % kObjectCount);
  s.first = object_from_index(index / kObjectCount);
  return s;
}

std::size_t scene_index(const SceneSpec& scene) {
  return (object_index(scene.first) * kObjectCount + object_index(scene.second)) * 3 + scene.relation;
}

std::vector<double> scene_encoding(const SceneSpec& scene) {
  std::vector<double> v(kSceneEncodingDim, 0.0);
  std::size_t off = 0;
  for (const ObjectSpec* o : {&scene.first, &scene.second}) {
    v.at(off + o->count - 1) = 1.0;
    v.at(off + 3 + o->color) = 1.0;
    v.at(off + 7 + o->shape) = 1.0;
    off += 11;
  }
  v.at(22 + scene.relation) = 1.0;
  return v;
}

std::array<std::string, 2> scene_captions(const SceneSpec& scene) {
  const std::string_view rel = kRelations.at(scene.relation);
  return {
      fmt::format("{} {} {}", object_phrase(scene.first, false), rel,
                  object_phrase(scene.second, false)),
      fmt::format("there {} {} {} {}", scene.first.count == 1 ? "is" : "are",
                  object_phrase(scene.first, true), rel, object_phrase(scene.second, true)),
  };
}

Tensor2D<double> synth_projection(std::size_t v_dim, std::uint64_t seed) {
  Rng rng(seed);
  Tensor2D<double> p(v_dim, kSceneEncodingDim);
  const double scale = 1.0 / std::sqrt(5.0);
  for (auto& v : p.flat()) {
    v = rng.normal() * scale;
  }
  return p;
}

SynthSplits synth_generate(std::size_t n, std::size_t v_dim, std::uint64_t seed,
                           double noise_sigma) {
  if (n < 10) {
    throw ValidationError(fmt::format("synth_generate: need at least 10 examples, got {}", n));
  }
  if (n > kSceneCount) {
    throw ValidationError(
        fmt::format("synth_generate: at most {} distinct scenes, got {}", kSceneCount, n));
  }
  if (v_dim == 0) {
    throw ValidationError("synth_generate: v_dim must be positive");
  }
  Rng rng(seed);
  const Tensor2D<double> proj = synth_projection(v_dim, rng.fork_seed());

  // Partial Fisher-Yates: the first n entries are distinct scenes.
  std::vector<std::size_t> pool(kSceneCount);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(kSceneCount - i));
    std::swap(pool[i], pool[j]);
  }

  SynthSplits out;
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  for (std::size_t i = 0; i < n; ++i) {
    const SceneSpec scene = scene_from_index(pool[i]);
    const auto enc = scene_encoding(scene);
    Example ex;
    ex.id = fmt::format("img{:05d}", i);
    ex.features.resize(v_dim);
    for (std::size_t r = 0; r < v_dim; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSceneEncodingDim; ++k) {
        acc += proj(r, k) * enc[k];
      }
      ex.features[r] = static_cast<float>(acc + noise_sigma * rng.normal());
    }
    const auto caps = scene_captions(scene);
    ex.captions.assign(caps.begin(), caps.end());
    out.scenes.push_back(scene);
    auto& split = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    split.push_back(std::move(ex));
  }
  return out;
}

} // namespace lightcap
