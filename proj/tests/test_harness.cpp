#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lightcap/checkpoint.hpp"
#include "lightcap/cli.hpp"
#include "lightcap/config.hpp"
#include "lightcap/dataset.hpp"
#include "lightcap/error.hpp"
#include "lightcap/synth.hpp"

using namespace lightcap;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lightcap_harness_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

} // namespace

TEST(Synth, SceneIndexRoundTrip) {
  for (std::size_t i = 0; i < kSceneCount; i += 37) {
    EXPECT_EQ(scene_index(scene_from_index(i)), i);
  }
  EXPECT_EQ(kSceneCount, 6912u);
}

TEST(Synth, CaptionTemplates) {
  SceneSpec s{{2, 0, 0}, {1, 1, 1}, 0};
  const auto caps = scene_captions(s);
  EXPECT_EQ(caps[0], "two red squares left of one blue circle");
  EXPECT_EQ(caps[1], "there are two red squares left of a blue circle");
  SceneSpec t{{1, 3, 3}, {3, 2, 2}, 1};
  const auto caps2 = scene_captions(t);
  EXPECT_EQ(caps2[0], "one yellow star above three green triangles");
  EXPECT_EQ(caps2[1], "there is a yellow star above three green triangles");
}

TEST(Synth, SplitSizes) {
  const auto s = synth_generate(100, 16, 1);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
  EXPECT_THROW(synth_generate(9, 16, 1), ValidationError);
}

TEST(Synth, SplitsAreDisjointByScene) {
  const auto s = synth_generate(500, 16, 2);
  std::set<std::size_t> seen;
  for (const auto& sc : s.scenes) {
    EXPECT_TRUE(seen.insert(scene_index(sc)).second);
  }
  EXPECT_EQ(seen.size(), 500u);
  for (const auto& ex : s.train) {
    EXPECT_EQ(ex.captions.size(), 2u);
    EXPECT_EQ(ex.features.size(), 16u);
  }
}

TEST(Synth, SameSeedSameFiles) {
  const auto dir = scratch("synth_same_seed");
  const auto a = synth_generate(50, 8, 9);
  const auto b = synth_generate(50, 8, 9);
  save_dataset((dir / "a.jsonl").string(), a.train);
  save_dataset((dir / "b.jsonl").string(), b.train);
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
  const auto c = synth_generate(50, 8, 10);
  EXPECT_NE(a.train, c.train);
}

TEST(Synth, LinearProbeRecoversAttributesWithoutNoise) {
  // Least-squares oracle: F·W = encoding is exactly solvable when the
  // projection has full column rank and the noise is off.
  const std::size_t v_dim = 64;
  const auto s = synth_generate(400, v_dim, 3, 0.0);
  std::vector<const Example*> all;
  for (const auto* split : {&s.train, &s.val, &s.test}) {
    for (const auto& ex : *split) {
      all.push_back(&ex);
    }
  }
  Eigen::MatrixXd F(all.size(), v_dim), Y(all.size(), kSceneEncodingDim);
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t k = 0; k < v_dim; ++k) {
      F(i, k) = all[i]->features[k];
    }
    const auto enc = scene_encoding(s.scenes[i]);
    for (std::size_t k = 0; k < kSceneEncodingDim; ++k) {
      Y(i, k) = enc[k];
    }
  }
  const Eigen::MatrixXd W = F.colPivHouseholderQr().solve(Y);
  const double resid = (F * W - Y).cwiseAbs().maxCoeff();
  // Features are stored as 32-bit floats.
  EXPECT_LT(resid, 1e-4);
  const auto noisy = synth_generate(400, v_dim, 3, 0.01);
  EXPECT_NE(noisy.train[0].features, s.train[0].features);
}

TEST(Dataset, ReadsWellFormedLines) {
  std::istringstream in(R"({"id": "a", "features": [1, 2], "captions": ["x y"]}
{"id": "b", "features": [0.5, -1], "captions": ["p", "q"]}
)");
  const auto ex = read_dataset(in, 2);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[1].id, "b");
  EXPECT_EQ(ex[1].captions, (std::vector<std::string>{"p", "q"}));
  EXPECT_EQ(ex[0].features, (std::vector<float>{1, 2}));
}

TEST(Dataset, FeatureLengthErrorNamesLine) {
  std::string line7 = R"({"id": "a", "features": [1,2,3,4,5,6,7], "captions": ["x"]})";
  std::string line8 = R"({"id": "a", "features": [1,2,3,4,5,6,7,8], "captions": ["x"]})";
  std::istringstream in(line8 + "\n" + line7 + "\n");
  try {
    read_dataset(in, 8);
    FAIL() << "expected a length error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("length 7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("expected 8"), std::string::npos) << msg;
  }
}

TEST(Dataset, EmptyCaptionsRejected) {
  std::istringstream in(R"({"id": "a", "features": [1], "captions": []})");
  EXPECT_THROW(read_dataset(in, 1), ValidationError);
}

TEST(Dataset, MalformedJsonRejected) {
  std::istringstream in("{\"id\": \"a\", \"features\": [1\n");
  EXPECT_THROW(read_dataset(in, 1), ValidationError);
}

TEST(Dataset, MissingFileIsIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/data.jsonl", 4), IoError);
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto s = synth_generate(20, 6, 4);
  std::stringstream ss;
  write_dataset(ss, s.train);
  EXPECT_EQ(read_dataset(ss, 6), s.train);
}

TEST(Dataset, GridIsDeterministic) {
  GridSynthesizer a(8, 4, 5, 7), b(8, 4, 5, 7);
  const std::vector<float> v{1, -1, 0.5f, 2, 0, 0, 3, -2};
  const auto g = a.grid(v);
  EXPECT_EQ(g.rows(), 4u);
  EXPECT_EQ(g.cols(), 5u);
  EXPECT_EQ(g, b.grid(v));
}

namespace {

ModelConfig ckpt_config() {
  auto c = ModelConfig::desk();
  c.d = 6;
  c.h = 8;
  c.v_dim = 5;
  c.vocab_size = 11;
  c.attention_mode = AttentionMode::mha;
  c.mha_regions = 3;
  c.mha_key_dim = 4;
  return c;
}

std::string checkpoint_bytes(const CaptionModel<float>& m) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, m);
  return out.str();
}

} // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  CaptionModel<float> m(ckpt_config());
  Rng rng(1);
  m.init_weights(rng);
  const std::string bytes = checkpoint_bytes(m);
  EXPECT_EQ(bytes.substr(0, 4), "CGRU");
  std::istringstream in(bytes, std::ios::binary);
  const auto back = read_checkpoint(in, ckpt_config());
  for (std::size_t i = 0; i < m.params().count(); ++i) {
    EXPECT_EQ(back.params()[i].value, m.params()[i].value) << m.params()[i].name;
  }
  EXPECT_EQ(checkpoint_bytes(back), bytes);
  std::istringstream in2(bytes, std::ios::binary);
  EXPECT_EQ(read_checkpoint_config(in2), ckpt_config());
}

TEST(Checkpoint, TruncatedFile) {
  CaptionModel<float> m(ckpt_config());
  const std::string bytes = checkpoint_bytes(m);
  for (const std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut), std::ios::binary);
    try {
      read_checkpoint(in, ckpt_config());
      FAIL() << "cut " << cut;
    } catch (const CheckpointError& e) {
      EXPECT_EQ(e.kind(), CheckpointError::Kind::truncated) << "cut " << cut;
    }
  }
}

TEST(Checkpoint, NewerVersionRejected) {
  CaptionModel<float> m(ckpt_config());
  std::string bytes = checkpoint_bytes(m);
  bytes[4] = static_cast<char>(kCheckpointVersion + 1);
  std::istringstream in(bytes, std::ios::binary);
  try {
    read_checkpoint(in, ckpt_config());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::bad_version);
  }
}

TEST(Checkpoint, BadMagicRejected) {
  CaptionModel<float> m(ckpt_config());
  std::string bytes = checkpoint_bytes(m);
  bytes[0] = 'X';
  std::istringstream in(bytes, std::ios::binary);
  try {
    read_checkpoint(in, ckpt_config());
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::bad_magic);
  }
}

TEST(Checkpoint, ConfigMismatchRejected) {
  CaptionModel<float> m(ckpt_config());
  const std::string bytes = checkpoint_bytes(m);
  auto other = ckpt_config();
  other.h = 9;
  std::istringstream in(bytes, std::ios::binary);
  try {
    read_checkpoint(in, other);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::config_mismatch);
  }
  auto relaxed = ckpt_config();
  relaxed.max_len = 7;
  relaxed.dropout_p = 0.1;
  std::istringstream in2(bytes, std::ios::binary);
  EXPECT_EQ(read_checkpoint(in2, relaxed).config().max_len, 7u);
}

TEST(Config, FileOverridesAndRejectsUnknownKeys) {
  RunConfig rc;
  std::istringstream in("# comment\nd = 12\nattention_mode = mha\ntie_weights = false\nlr = 1e-3\n");
  rc.load(in);
  EXPECT_EQ(rc.model.d, 12u);
  EXPECT_EQ(rc.model.attention_mode, AttentionMode::mha);
  EXPECT_FALSE(rc.model.tie_weights);
  EXPECT_DOUBLE_EQ(rc.train.lr, 1e-3);
  EXPECT_THROW(rc.set("nonsense", "1"), ValidationError);
  EXPECT_THROW(rc.set("d", "-3"), ValidationError);
  std::stringstream round;
  rc.write(round);
  RunConfig rc2;
  rc2.load(round);
  EXPECT_EQ(rc2.model, rc.model);
}

TEST(Config, DeskDefaults) {
  const RunConfig rc;
  EXPECT_EQ(rc.model.d, 32u);
  EXPECT_EQ(rc.model.h, 64u);
  EXPECT_EQ(rc.model.v_dim, 64u);
  EXPECT_EQ(rc.data.bpe_merges, 200u);
  EXPECT_EQ(rc.data.synth_examples, 500u);
  EXPECT_EQ(rc.train.batch_size, 32u);
  EXPECT_DOUBLE_EQ(rc.train.lr, 4e-4);
  EXPECT_DOUBLE_EQ(rc.model.dropout_p, 0.5);
  EXPECT_EQ(rc.train.patience_epochs, 10u);
}

TEST(Cli, UnknownSubcommandPrintsUsage) {
  const auto r = cli({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
}

TEST(Cli, ParamsOnPaperPreset) {
  const auto r = cli({"--preset", "paper", "params"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("total\t2518785\t"), std::string::npos) << r.out;
  std::istringstream lines(r.out);
  std::string line;
  std::size_t sum = 0, total = 0;
  while (std::getline(lines, line)) {
    const auto a = line.find('\t'), b = line.find('\t', a + 1);
    if (line.rfind("total", 0) == 0) {
      total = std::stoull(line.substr(a + 1, b - a - 1));
    } else {
      sum += std::stoull(line.substr(b + 1));
    }
  }
  EXPECT_EQ(sum, total);
}

TEST(Cli, MissingInputIsIoError) {
  const auto r = cli({"bpe-learn", "--data", "/nonexistent.jsonl", "--merges-out", "/tmp/m",
                      "--vocab-out", "/tmp/v"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u);
}

TEST(Cli, BadConfigValueIsValidationError) {
  const auto r = cli({"--set", "d=abc", "params"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error:", 0), 0u);
}

TEST(Cli, SynthAndScorePipeline) {
  const auto dir = scratch("cli_pipeline");
  ASSERT_EQ(cli({"synth-data", "--out-dir", dir.string(), "--examples", "30"}).code, 0);
  const auto ex = load_dataset((dir / "test.jsonl").string(), 64);
  std::ofstream cand(dir / "cand.tsv"), refs(dir / "refs.tsv");
  for (const auto& e : ex) {
    cand << e.id << '\t' << e.captions[0] << '\n';
    for (const auto& c : e.captions) {
      refs << e.id << '\t' << c << '\n';
    }
  }
  cand.close();
  refs.close();
  const auto r = cli({"score", "--candidates", (dir / "cand.tsv").string(), "--references",
                      (dir / "refs.tsv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("BLEU4=1.000000 CIDErD=", 0), 0u) << r.out;
}

TEST(Cli, GradcheckExitsZero) {
  const auto r = cli({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
