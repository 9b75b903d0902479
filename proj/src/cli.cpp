#include "lightcap/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lightcap/bpe.hpp"
#include "lightcap/checkpoint.hpp"
#include "lightcap/config.hpp"
#include "lightcap/dataset.hpp"
#include "lightcap/decoding.hpp"
#include "lightcap/error.hpp"
#include "lightcap/metrics.hpp"
#include "lightcap/model.hpp"
#include "lightcap/model_gradcheck.hpp"
#include "lightcap/reinforce.hpp"
#include "lightcap/synth.hpp"
#include "lightcap/training.hpp"
#include "lightcap/vocab.hpp"

namespace lightcap {

namespace {

constexpr std::uint64_t kGridSeed = 7;
constexpr double kGradcheckTolerance = 1e-4;

struct Globals {
  std::string preset = "desk";
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig rc;
  if (g.preset == "paper") {
    rc.model = ModelConfig::paper();
  } else if (g.preset != "desk") {
    throw ValidationError(fmt::format("unknown preset '{}' (expected desk or paper)", g.preset));
  }
  if (!g.config_file.empty()) {
    rc.load_file(g.config_file);
  }
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(fmt::format("--set expects key=value, got '{}'", kv));
    }
    rc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) {
    rc.train.seed = *g.seed;
  }
  return rc;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) {
    throw IoError(fmt::format("cannot open '{}'", path));
  }
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError(fmt::format("cannot write '{}'", path));
  }
  return out;
}

MergeTable load_merges(const std::string& path) {
  auto in = open_in(path);
  return read_merges(in);
}

Vocab load_vocab(const std::string& path) {
  auto in = open_in(path);
  return Vocab::read(in);
}

void write_log_header(std::ostream& out) {
  out << "epoch\tobjective\tval_bleu4\tval_cider_d\telapsed_s\n";
}

void write_log_row(std::ostream& out, const EpochLog& e, bool timing) {
  out << fmt::format("{}\t{:.6f}\t{:.6f}\t{:.6f}\t{}\n", e.epoch, e.objective, e.val_bleu4,
                     e.val_cider_d, timing ? fmt::format("{:.2f}", e.elapsed_seconds) : "-");
  out.flush();
}

/// Reads "id TAB sentence" lines, keeping first-seen id order.
std::vector<std::pair<std::string, std::vector<std::string>>> read_id_sentences(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError(fmt::format("{}:{}: expected 'id<TAB>sentence'", path, lineno));
    }
    const std::string id = line.substr(0, tab);
    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) {
      out.emplace_back(id, std::vector<std::string>{});
    }
    out[it->second].second.push_back(line.substr(tab + 1));
  }
  return out;
}

struct Paths {
  std::string train, val, data, merges, vocab, out, log, init, checkpoint, candidates, references,
      out_dir, merges_out, vocab_out, input = "-";
};

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"lightcap: conditional-GRU image captioning toolkit", "lightcap"};
  app.require_subcommand(1);
  Globals g;
  Paths p;
  app.add_option("--preset", g.preset, "Base configuration: desk or paper");
  app.add_option("--config", g.config_file, "Flat 'key = value' config file");
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--set", g.overrides, "Override one config key (key=value)");

  std::optional<std::size_t> n_examples, n_merges, beam, max_len;
  bool no_timing = false;
  double epsilon = 1e-4;

  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic scene dataset");
  synth->add_option("--out-dir", p.out_dir, "Directory for train/val/test.jsonl")->required();
  synth->add_option("--examples", n_examples, "Number of scenes");

  auto* learn = app.add_subcommand("bpe-learn", "Learn BPE merges and the vocabulary");
  learn->add_option("--data", p.data, "Training JSONL")->required();
  learn->add_option("--merges", n_merges, "Number of merges");
  learn->add_option("--merges-out", p.merges_out, "Merge table output")->required();
  learn->add_option("--vocab-out", p.vocab_out, "Vocabulary output")->required();

  auto* apply = app.add_subcommand("bpe-apply", "Segment text lines into subwords");
  apply->add_option("--merges", p.merges, "Merge table")->required();
  apply->add_option("--input", p.input, "Text file, '-' for stdin");

  auto* train = app.add_subcommand("train", "Cross-entropy training");
  auto* rl = app.add_subcommand("finetune-rl", "REINFORCE fine-tuning");
  for (auto* sc : {train, rl}) {
    sc->add_option("--train", p.train, "Training JSONL")->required();
    sc->add_option("--val", p.val, "Validation JSONL")->required();
    sc->add_option("--merges", p.merges, "Merge table")->required();
    sc->add_option("--vocab", p.vocab, "Vocabulary")->required();
    sc->add_option("--out", p.out, "Checkpoint output")->required();
    sc->add_option("--log", p.log, "TSV epoch log (default stdout)");
    sc->add_flag("--no-timing", no_timing, "Print '-' instead of elapsed seconds");
  }
  rl->add_option("--init", p.init, "Starting checkpoint")->required();

  auto* decode = app.add_subcommand("decode", "Caption every example of a dataset");
  decode->add_option("--checkpoint", p.checkpoint, "Model checkpoint")->required();
  decode->add_option("--data", p.data, "JSONL examples")->required();
  decode->add_option("--vocab", p.vocab, "Vocabulary")->required();
  decode->add_option("--beam", beam, "Beam size (default from config)");
  decode->add_option("--max-len", max_len, "Maximum caption length in subwords");
  decode->add_option("--out", p.out, "Output file (default stdout)");

  auto* score = app.add_subcommand("score", "BLEU-4 and CIDEr-D of candidates");
  score->add_option("--candidates", p.candidates, "id<TAB>caption per line")->required();
  score->add_option("--references", p.references, "id<TAB>reference, repeated ids")->required();

  auto* params = app.add_subcommand("params", "Print the trainable parameter breakdown");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every config cell");
  gradcheck->add_option("--epsilon", epsilon, "Central-difference step");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 1;
  }

  try {
    RunConfig rc = resolve_config(g);

    if (synth->parsed()) {
      const std::size_t n = n_examples.value_or(rc.data.synth_examples);
      const SynthSplits s = synth_generate(n, rc.model.v_dim, rc.train.seed);
      std::filesystem::create_directories(p.out_dir);
      const std::filesystem::path dir(p.out_dir);
      save_dataset((dir / "train.jsonl").string(), s.train);
      save_dataset((dir / "val.jsonl").string(), s.val);
      save_dataset((dir / "test.jsonl").string(), s.test);
      out << fmt::format("train={} val={} test={}\n", s.train.size(), s.val.size(), s.test.size());
      return 0;
    }

    if (learn->parsed()) {
      const auto examples = load_dataset(p.data, rc.model.v_dim);
      std::vector<Sentence> corpus;
      for (const auto& ex : examples) {
        for (const auto& c : ex.captions) {
          corpus.push_back(split_words(c));
        }
      }
      const MergeTable merges = learn_bpe(corpus, n_merges.value_or(rc.data.bpe_merges));
      std::vector<std::vector<std::string>> encoded;
      encoded.reserve(corpus.size());
      for (const auto& s : corpus) {
        encoded.push_back(bpe_encode(s, merges));
      }
      const Vocab vocab = build_vocab(encoded);
      auto mo = open_out(p.merges_out);
      write_merges(mo, merges);
      auto vo = open_out(p.vocab_out);
      vocab.write(vo);
      if (!mo || !vo) {
        throw IoError("failed writing BPE outputs");
      }
      out << fmt::format("merges={} vocab_with_specials={} vocab_without_specials={}\n",
                         merges.size(), vocab.size(), vocab.size() - Vocab::kNumSpecials);
      return 0;
    }

    if (apply->parsed()) {
      const MergeTable merges = load_merges(p.merges);
      std::ifstream file;
      std::istream* in = &std::cin;
      if (p.input != "-") {
        file = open_in(p.input);
        in = &file;
      }
      std::string line;
      while (std::getline(*in, line)) {
        const auto toks = bpe_encode(split_words(line), merges);
        out << fmt::format("{}\n", fmt::join(toks, " "));
      }
      return 0;
    }

    if (train->parsed() || rl->parsed()) {
      const MergeTable merges = load_merges(p.merges);
      const Vocab vocab = load_vocab(p.vocab);
      rc.model.vocab_size = vocab.size();
      rc.model.validate();
      rc.train.validate();
      const auto train_ex = load_dataset(p.train, rc.model.v_dim);
      const auto val_ex = load_dataset(p.val, rc.model.v_dim);
      const auto train_set = prepare_examples(train_ex, merges, vocab, rc.model, kGridSeed);
      const auto val_set = prepare_examples(val_ex, merges, vocab, rc.model, kGridSeed);

      std::ofstream log_file;
      std::ostream* log = &out;
      if (!p.log.empty()) {
        log_file = open_out(p.log);
        log = &log_file;
      }
      write_log_header(*log);
      const EpochCallback cb = [&](const EpochLog& e) { write_log_row(*log, e, !no_timing); };

      TrainResult res;
      if (train->parsed()) {
        Rng seeder(rc.train.seed);
        Rng init_rng(seeder.fork_seed());
        CaptionModel<float> model(rc.model);
        model.init_weights(init_rng);
        res = train_xe(model, train_set, val_set, rc.train, vocab, cb);
        save_checkpoint(p.out, model);
      } else {
        CaptionModel<float> model = load_checkpoint(p.init, rc.model);
        res = finetune_rl(model, train_set, val_set, rc.train, vocab, cb);
        save_checkpoint(p.out, model);
      }
      err << fmt::format("best_epoch={} best_val_cider_d={:.6f}{}\n", res.best_epoch,
                         res.best_val_cider_d, res.early_stopped ? " (early stop)" : "");
      return 0;
    }

    if (decode->parsed()) {
      const Vocab vocab = load_vocab(p.vocab);
      rc.model.vocab_size = vocab.size();
      if (max_len) {
        rc.model.max_len = *max_len;
      }
      rc.model.validate();
      const CaptionModel<float> model = load_checkpoint(p.checkpoint, rc.model);
      const auto examples = load_dataset(p.data, rc.model.v_dim);
      const std::size_t b = beam.value_or(rc.train.beam);
      std::optional<GridSynthesizer> grid;
      if (rc.model.attention_mode == AttentionMode::mha) {
        grid.emplace(rc.model.v_dim, rc.model.mha_regions, rc.model.mha_key_dim, kGridSeed);
      }
      std::ofstream file;
      std::ostream* sink = &out;
      if (!p.out.empty()) {
        file = open_out(p.out);
        sink = &file;
      }
      for (const auto& ex : examples) {
        VisualInput<float> visual;
        visual.pooled = ex.features;
        if (grid) {
          visual.grid = grid->grid(ex.features);
        }
        Hypothesis hyp = beam_search(model, visual, b, rc.model.max_len);
        if (!hyp.tokens.empty() && hyp.tokens.back() == Vocab::kEos) {
          hyp.tokens.pop_back();
        }
        *sink << ex.id << '\t' << bpe_decode(vocab.decode(hyp.tokens)) << '\n';
      }
      return 0;
    }

    if (score->parsed()) {
      const auto cands = read_id_sentences(p.candidates);
      const auto refs = read_id_sentences(p.references);
      std::map<std::string, const std::vector<std::string>*> ref_by_id;
      for (const auto& [id, sentences] : refs) {
        ref_by_id[id] = &sentences;
      }
      std::vector<Words> cand_words;
      std::vector<ReferenceSet> ref_sets;
      for (const auto& [id, sentences] : cands) {
        if (sentences.size() != 1) {
          throw ValidationError(fmt::format("candidate id '{}' appears {} times", id, sentences.size()));
        }
        auto it = ref_by_id.find(id);
        if (it == ref_by_id.end()) {
          throw ValidationError(fmt::format("no references for candidate id '{}'", id));
        }
        cand_words.push_back(metric_tokens(sentences.front()));
        ReferenceSet rs;
        for (const auto& r : *it->second) {
          rs.push_back(metric_tokens(r));
        }
        ref_sets.push_back(std::move(rs));
      }
      if (cand_words.empty()) {
        throw ValidationError("no candidates to score");
      }
      const double b4 = bleu4(cand_words, ref_sets);
      const double cd = cider_d(cand_words, ref_sets, build_idf(ref_sets)).mean;
      out << fmt::format("BLEU4={:.6f} CIDErD={:.6f}\n", b4, cd);
      err << fmt::format("CIDErD/10={:.6f}\n", cd / 10.0);
      return 0;
    }

    if (params->parsed()) {
      rc.model.validate();
      const ParamCount pc = count_params(rc.model);
      for (const auto& e : pc.entries) {
        out << fmt::format("{}\t{}x{}\t{}\n", e.name, e.rows, e.cols, e.size());
      }
      out << fmt::format("total\t{}\t({:.4f} M)\n", pc.total, static_cast<double>(pc.total) / 1e6);
      return 0;
    }

    if (gradcheck->parsed()) {
      bool ok = true;
      for (const auto& cell : model_gradcheck_suite(rc.train.seed, epsilon)) {
        const bool pass = cell.result.max_rel_error < kGradcheckTolerance;
        ok = ok && pass;
        out << fmt::format("{}\t{}\tmax_rel_err={:.3e}\tworst={}[{}]\tentries={}\n",
                           pass ? "PASS" : "FAIL", cell.label, cell.result.max_rel_error,
                           cell.result.worst_param, cell.result.worst_index,
                           cell.result.entries_checked);
      }
      if (!ok) {
        err << fmt::format("error: gradient check exceeded tolerance {:.0e}\n", kGradcheckTolerance);
        return 1;
      }
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  err << "error: no subcommand\n" << app.help();
  return 1;
}

} // namespace lightcap
