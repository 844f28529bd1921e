#pragma once

// End-to-end run: tokenize, BPE, align, eagerize, batch, train, translate
// and score, writing every intermediate artifact into the work directory
// together with a manifest of content hashes, configuration and metrics.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eager/aligner.hpp"
#include "eager/checkpoint.hpp"
#include "eager/config.hpp"
#include "eager/decoder.hpp"
#include "eager/eagerize.hpp"
#include "eager/evaluator.hpp"
#include "eager/stream_batcher.hpp"
#include "eager/text_pipeline.hpp"
#include "eager/trainer.hpp"

namespace eager {

namespace fs = std::filesystem;

/// Failure inside a named pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// ---------------------------------------------------------------------------
// Files

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<Sentence> read_corpus(const std::string& path) {
  std::vector<Sentence> out;
  for (const auto& l : read_lines(path)) out.push_back(split_words(l));
  return out;
}

inline void write_corpus(const std::string& path, const std::vector<Sentence>& corpus) {
  std::vector<std::string> lines;
  lines.reserve(corpus.size());
  for (const auto& s : corpus) lines.push_back(join(s));
  write_lines(path, lines);
}

/// 64-bit FNV-1a over the file bytes, as 16 hex digits.
inline std::string fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Translation of raw text

/// Raw text to model tokens: optional punctuation splitting, then BPE
/// (identity when no segmenter is given).
struct Preprocessor {
  bool tokenize = true;
  std::optional<BpeSegmenter> bpe;

  Sentence operator()(const std::string& line) const {
    Sentence words = tokenize ? eager::tokenize(line) : split_words(line);
    return bpe ? bpe->apply(words) : words;
  }
};

template <typename T>
std::vector<std::string> translate_lines(const ParameterSet<T>& params, const Vocab& vocab, const Preprocessor& prep,
                                         const std::vector<std::string>& lines, const DecodeConfig& cfg) {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    auto src = vocab.encode(prep(line));
    if (src.empty()) {
      out.emplace_back();
      continue;
    }
    out.push_back(detokenize(vocab.decode(translate(params, src, cfg))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference tuning

struct TuneRow {
  DecodeConfig config;
  double bleu = 0.0;
};

struct TuneResult {
  DecodeConfig best;
  double best_bleu = -1.0;
  std::vector<TuneRow> rows;
};

/// "padding_limit, spi, beam" as in the usual triple notation.
inline std::string format_triple(const DecodeConfig& c) {
  return std::to_string(c.padding_limit) + ", " + std::to_string(c.spi) + ", " + std::to_string(c.beam_size);
}

/// Exhaustive grid search over padding limit x SPI x beam size by dev BLEU.
/// Ties keep the earlier grid point.
template <typename T>
TuneResult tune_inference(const ParameterSet<T>& params, const Vocab& vocab, const Preprocessor& prep,
                          const std::vector<std::string>& dev_src, const std::vector<std::string>& dev_ref,
                          const std::vector<int>& padding_limits, const std::vector<int>& spis,
                          const std::vector<std::size_t>& beams, const DecodeConfig& base,
                          const std::function<void(const TuneRow&)>& on_row = {}) {
  if (padding_limits.empty() || spis.empty() || beams.empty()) throw std::invalid_argument("tune: empty grid");
  TuneResult r;
  for (int p : padding_limits)
    for (int c : spis)
      for (auto k : beams) {
        DecodeConfig cfg = base;
        cfg.padding_limit = p;
        cfg.spi = c;
        cfg.beam_size = k;
        cfg.validate();
        TuneRow row{cfg, corpus_bleu(translate_lines(params, vocab, prep, dev_src, cfg), dev_ref).bleu};
        if (on_row) on_row(row);
        r.rows.push_back(row);
        if (row.bleu > r.best_bleu) {
          r.best_bleu = row.bleu;
          r.best = cfg;
        }
      }
  return r;
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineResult {
  Json manifest;
  double bleu = 0.0;
  double eps_stats = 0.0;
  double valid_ppl = 0.0;
  std::vector<std::string> hypotheses;
};

namespace detail {

struct Corpus {
  std::vector<Sentence> src, tgt;
};

inline std::vector<SentencePair> encode_pairs(const Vocab& v, const Corpus& c) {
  std::vector<SentencePair> out;
  for (std::size_t k = 0; k < c.src.size(); ++k) out.push_back({v.encode(c.src[k]), v.encode(c.tgt[k])});
  return out;
}

inline std::vector<Sentence> eps_render(const std::vector<EagerPair<TokenId>>& pairs, const Vocab& v, bool source) {
  std::vector<Sentence> out;
  for (const auto& p : pairs) out.push_back(v.decode(source ? p.src : p.tgt));
  return out;
}

}  // namespace detail

/// Runs every stage in order. The manifest is rewritten after each stage,
/// so a failed run keeps the record of what completed; the failure itself is
/// rethrown as a StageError.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream& log = std::clog) {
  const fs::path dir(cfg.paths.work_dir);
  PipelineResult result;
  Json& manifest = result.manifest;
  manifest["config"] = to_json(cfg);
  manifest["seed"] = cfg.seed;
  manifest["stages"] = Json::array();
  manifest["metrics"] = Json::object();
  manifest["status"] = "running";
  auto file = [&](const std::string& name) { return (dir / name).string(); };
  auto save_manifest = [&]() {
    std::ofstream out(file("manifest.json"));
    out << manifest.dump(2) << '\n';
  };

  auto stage = [&](const std::string& name, const std::vector<std::string>& artifacts, const auto& body) {
    log << "[" << name << "]" << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      manifest["status"] = "failed at " + name + ": " + e.what();
      save_manifest();
      throw StageError(name, e.what());
    }
    Json entry{{"name", name}, {"artifacts", Json::object()}};
    for (const auto& a : artifacts) entry["artifacts"][a] = fnv1a_file(file(a));
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["stages"].push_back(entry);
    save_manifest();
  };

  try {
    fs::create_directories(dir);
    manifest["inputs"] = Json::object();
    for (const auto* p : {&cfg.paths.train_src, &cfg.paths.train_tgt, &cfg.paths.dev_src, &cfg.paths.dev_tgt})
      manifest["inputs"][*p] = fnv1a_file(*p);
  } catch (const std::exception& e) {
    throw StageError("setup", e.what());
  }
  save_manifest();

  detail::Corpus train, dev;
  std::vector<std::string> dev_refs;
  stage("tokenize", {"train.tok.src", "train.tok.tgt", "dev.tok.src", "dev.tok.tgt"}, [&] {
    auto tok = [&](const std::string& path) {
      std::vector<Sentence> out;
      for (const auto& l : read_lines(path)) out.push_back(cfg.tokenize ? tokenize(l) : split_words(l));
      return out;
    };
    train = {tok(cfg.paths.train_src), tok(cfg.paths.train_tgt)};
    dev = {tok(cfg.paths.dev_src), tok(cfg.paths.dev_tgt)};
    dev_refs = read_lines(cfg.paths.dev_tgt);
    if (train.src.size() != train.tgt.size()) throw std::runtime_error("training source and target differ in line count");
    if (dev.src.size() != dev.tgt.size()) throw std::runtime_error("dev source and target differ in line count");
    if (train.src.empty()) throw std::runtime_error("empty training corpus");
    if (dev.src.empty()) throw std::runtime_error("empty dev corpus");
    write_corpus(file("train.tok.src"), train.src);
    write_corpus(file("train.tok.tgt"), train.tgt);
    write_corpus(file("dev.tok.src"), dev.src);
    write_corpus(file("dev.tok.tgt"), dev.tgt);
  });

  Preprocessor prep{cfg.tokenize, std::nullopt};
  stage("bpe-learn", {"bpe.codes"}, [&] {
    BpeModel model;
    if (cfg.bpe_ops > 0) {
      std::vector<std::string> lines;
      for (const auto* side : {&train.src, &train.tgt})
        for (const auto& s : *side) lines.push_back(join(s));
      model = learn_bpe(lines, cfg.bpe_ops);
      prep.bpe.emplace(model);
    }
    save_bpe(model, file("bpe.codes"));
  });

  stage("bpe-apply", {"train.bpe.src", "train.bpe.tgt", "dev.bpe.src", "dev.bpe.tgt"}, [&] {
    if (prep.bpe)
      for (auto* side : {&train.src, &train.tgt, &dev.src, &dev.tgt})
        for (auto& s : *side) s = prep.bpe->apply(s);
    write_corpus(file("train.bpe.src"), train.src);
    write_corpus(file("train.bpe.tgt"), train.tgt);
    write_corpus(file("dev.bpe.src"), dev.src);
    write_corpus(file("dev.bpe.tgt"), dev.tgt);
  });

  Vocab vocab;
  std::vector<Alignment> train_align, dev_align;
  stage("align", {"train.align", "dev.align"}, [&] {
    std::vector<Sentence> all = train.src;
    all.insert(all.end(), train.tgt.begin(), train.tgt.end());
    vocab = Vocab::build(all);
    // dev pairs take part in EM (unsupervised), so their links are as good as the training links
    auto pairs = detail::encode_pairs(vocab, train);
    auto dev_pairs = detail::encode_pairs(vocab, dev);
    std::vector<SentencePair> joint = pairs;
    joint.insert(joint.end(), dev_pairs.begin(), dev_pairs.end());
    auto table = em_train(joint, cfg.aligner, [&](int it, double ll) {
      log << "  em iteration " << it + 1 << " log-likelihood " << ll << '\n';
    });
    std::vector<std::string> lines;
    for (const auto& p : pairs) {
      train_align.push_back(viterbi_align(table, p));
      lines.push_back(format_alignment(train_align.back()));
    }
    write_lines(file("train.align"), lines);
    lines.clear();
    for (const auto& p : dev_pairs) {
      dev_align.push_back(viterbi_align(table, p));
      lines.push_back(format_alignment(dev_align.back()));
    }
    write_lines(file("dev.align"), lines);
  });

  std::vector<EagerPair<TokenId>> train_eager, dev_eager;
  stage("eagerize", {"train.eager.src", "train.eager.tgt", "dev.eager.src", "dev.eager.tgt"}, [&] {
    EagerizeConfig<TokenId> ec{cfg.start_pad, kEpsId};
    std::vector<std::vector<TokenId>> ts, tt, ds, dt;
    for (std::size_t k = 0; k < train.src.size(); ++k) {
      ts.push_back(vocab.encode(train.src[k]));
      tt.push_back(vocab.encode(train.tgt[k]));
    }
    for (std::size_t k = 0; k < dev.src.size(); ++k) {
      ds.push_back(vocab.encode(dev.src[k]));
      dt.push_back(vocab.encode(dev.tgt[k]));
    }
    auto kept = eagerize_corpus(ts, tt, train_align, ec, cfg.max_length_ratio, train_eager);
    eagerize_corpus(ds, dt, dev_align, ec, cfg.max_length_ratio, dev_eager);
    if (train_eager.empty()) throw std::runtime_error("every training pair was filtered out");
    if (dev_eager.empty()) throw std::runtime_error("every dev pair was filtered out");
    result.eps_stats = eps_stats(train_eager);
    manifest["metrics"]["eps_stats"] = result.eps_stats;
    manifest["metrics"]["train_pairs_kept"] = kept.size();
    manifest["metrics"]["train_pairs"] = ts.size();
    write_corpus(file("train.eager.src"), detail::eps_render(train_eager, vocab, true));
    write_corpus(file("train.eager.tgt"), detail::eps_render(train_eager, vocab, false));
    write_corpus(file("dev.eager.src"), detail::eps_render(dev_eager, vocab, true));
    write_corpus(file("dev.eager.tgt"), detail::eps_render(dev_eager, vocab, false));
  });

  Streams valid_streams;
  stage("batch", {"vocab.txt", "train.stream"}, [&] {
    vocab.save(file("vocab.txt"));
    valid_streams = build_streams(dev_eager);
    // first-epoch stream, as token ids, for inspection and hashing
    auto first = train_eager;
    shuffle_pairs(first, cfg.seed);
    auto s = build_streams(first);
    std::ofstream out(file("train.stream"));
    for (std::size_t k = 0; k < s.size(); ++k) out << s.src[k] << ' ' << s.tgt[k] << '\n';
    manifest["metrics"]["train_stream_tokens"] = s.size();
    manifest["metrics"]["vocab_size"] = vocab.size();
  });

  ParameterSet<float> best;
  stage("train", {"model.ckpt", "train.log"}, [&] {
    ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    ParameterSet<float> init(mc);
    Rng rng(cfg.seed);
    init.init_uniform(rng);
    std::ofstream tlog(file("train.log"));
    tlog << "update\ttrain_loss\tvalid_ppl\tlr\n";
    EpochStreams epochs = [&](std::size_t epoch) {
      auto pairs = train_eager;
      shuffle_pairs(pairs, cfg.seed + epoch);
      return build_streams(pairs);
    };
    auto r = eager::train<float>(init, epochs, valid_streams, cfg.train, [&](const TrainLogEntry& e) {
      tlog << e << std::endl;
      log << "  update " << e.update << " loss " << e.train_loss << " valid ppl " << e.valid_ppl << " lr " << e.lr
          << '\n';
    });
    save_checkpoint(r.best, file("model.ckpt"));
    if (r.diverged && !std::isfinite(r.best_ppl)) throw std::runtime_error("training diverged: " + r.stop_reason);
    best = std::move(r.best);
    result.valid_ppl = r.best_ppl;
    manifest["metrics"]["valid_ppl"] = r.best_ppl;
    manifest["metrics"]["best_update"] = r.best_update;
    manifest["metrics"]["updates"] = r.updates;
    manifest["metrics"]["stop_reason"] = r.stop_reason;
  });

  stage("translate", {"dev.hyp"}, [&] {
    result.hypotheses = translate_lines(best, vocab, prep, read_lines(cfg.paths.dev_src), cfg.decode);
    write_lines(file("dev.hyp"), result.hypotheses);
  });

  stage("score", {"dev.bleu"}, [&] {
    auto rep = corpus_bleu(result.hypotheses, dev_refs);
    result.bleu = rep.bleu;
    std::ofstream out(file("dev.bleu"));
    out << std::fixed << std::setprecision(4) << "bleu\t" << rep.bleu << "\nbrevity_penalty\t" << rep.brevity_penalty
        << "\ncandidate_length\t" << rep.candidate_length << "\nreference_length\t" << rep.reference_length << '\n';
    manifest["metrics"]["bleu"] = rep.bleu;
  });

  manifest["status"] = "complete";
  save_manifest();
  return result;
}

}  // namespace eager
