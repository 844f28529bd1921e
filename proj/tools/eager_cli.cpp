// Command-line front end: one subcommand per pipeline stage plus the full
// pipeline and inference tuning.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "eager/aligner.hpp"
#include "eager/checkpoint.hpp"
#include "eager/config.hpp"
#include "eager/eagerize.hpp"
#include "eager/evaluator.hpp"
#include "eager/pipeline.hpp"
#include "eager/synthetic.hpp"
#include "eager/text_pipeline.hpp"
#include "eager/trainer.hpp"

namespace fs = std::filesystem;
using namespace eager;

namespace {

template <typename V>
std::vector<V> parse_list(const std::string& s, const std::string& what) {
  std::vector<V> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<V>(v));
    } catch (const std::exception&) {
      throw std::invalid_argument(what + ": not a non-negative integer: '" + item + "'");
    }
  }
  return out;
}

Vocab vocab_next_to(const std::string& ckpt, const std::string& explicit_path) {
  if (!explicit_path.empty()) return Vocab::load(explicit_path);
  return Vocab::load((fs::path(ckpt).parent_path() / "vocab.txt").string());
}

Preprocessor make_preprocessor(const std::string& bpe_path, bool no_tokenize) {
  Preprocessor p{!no_tokenize, std::nullopt};
  if (!bpe_path.empty()) {
    auto model = load_bpe(bpe_path);
    if (!model.merges.empty()) p.bpe.emplace(model);
  }
  return p;
}

// -- subcommands ------------------------------------------------------------

struct BpeLearnArgs {
  std::vector<std::string> inputs;
  std::size_t ops = 8000;
  std::string output;
};

void bpe_learn(const BpeLearnArgs& a) {
  std::vector<std::string> lines;
  for (const auto& in : a.inputs) {
    auto l = read_lines(in);
    lines.insert(lines.end(), l.begin(), l.end());
  }
  auto model = learn_bpe(lines, a.ops);
  save_bpe(model, a.output);
  std::cout << "learned " << model.merges.size() << " merges\n";
}

struct BpeApplyArgs {
  std::string codes, input, output;
};

void bpe_apply(const BpeApplyArgs& a) {
  BpeSegmenter seg(load_bpe(a.codes));
  std::vector<std::string> out;
  for (const auto& l : read_lines(a.input)) out.push_back(join(seg.apply(split_words(l))));
  write_lines(a.output, out);
}

struct AlignArgs {
  std::string src, tgt, output;
  AlignerConfig cfg;
};

void align(const AlignArgs& a) {
  auto src = read_corpus(a.src), tgt = read_corpus(a.tgt);
  if (src.size() != tgt.size()) throw std::runtime_error("source and target differ in line count");
  std::vector<Sentence> all = src;
  all.insert(all.end(), tgt.begin(), tgt.end());
  auto vocab = Vocab::build(all);
  std::vector<SentencePair> pairs;
  for (std::size_t k = 0; k < src.size(); ++k) pairs.push_back({vocab.encode(src[k]), vocab.encode(tgt[k])});
  auto table = em_train(pairs, a.cfg, [](int it, double ll) {
    std::cerr << "iteration " << it + 1 << "\tlog-likelihood " << ll << '\n';
  });
  std::vector<std::string> lines;
  for (const auto& p : pairs) lines.push_back(format_alignment(viterbi_align(table, p)));
  write_lines(a.output, lines);
}

struct EagerizeArgs {
  std::string align, src, tgt, out;
  int start_pad = 0;
  double max_ratio = 9.0;
};

void eagerize(const EagerizeArgs& a) {
  auto src = read_corpus(a.src), tgt = read_corpus(a.tgt);
  auto al = read_alignments(a.align);
  std::vector<EagerPair<std::string>> pairs;
  eagerize_corpus(src, tgt, al, EagerizeConfig<std::string>{a.start_pad, std::string(kEpsToken)}, a.max_ratio, pairs);
  std::vector<Sentence> s, t;
  for (const auto& p : pairs) {
    s.push_back(p.src);
    t.push_back(p.tgt);
  }
  write_corpus(a.out + ".src", s);
  write_corpus(a.out + ".tgt", t);
  std::cout << "eps_stats\t" << std::setprecision(6) << 100.0 * eps_stats(pairs) << "%\n";
}

struct TrainArgs {
  std::string config, data, out;
};

std::vector<EagerPair<TokenId>> load_eager(const Vocab& v, const std::string& src, const std::string& tgt) {
  auto s = read_corpus(src), t = read_corpus(tgt);
  if (s.size() != t.size()) throw std::runtime_error(src + " and " + tgt + " differ in line count");
  std::vector<EagerPair<TokenId>> out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    EagerPair<TokenId> p;
    p.src = v.encode(s[k]);
    p.tgt = v.encode(t[k]);
    if (p.src.size() != p.tgt.size())
      throw std::runtime_error(src + ":" + std::to_string(k + 1) + ": source and target lengths differ");
    out.push_back(std::move(p));
  }
  return out;
}

void train_cmd(const TrainArgs& a) {
  auto cfg = load_config(a.config);
  fs::create_directories(a.out);
  auto train_src = a.data + ".train.src", train_tgt = a.data + ".train.tgt";
  std::vector<Sentence> all = read_corpus(train_src);
  auto t = read_corpus(train_tgt);
  all.insert(all.end(), t.begin(), t.end());
  auto vocab = Vocab::build(all);
  vocab.save((fs::path(a.out) / "vocab.txt").string());
  auto train_pairs = load_eager(vocab, train_src, train_tgt);
  auto valid = build_streams(load_eager(vocab, a.data + ".valid.src", a.data + ".valid.tgt"));
  ModelConfig mc = cfg.model;
  mc.vocab_size = vocab.size();
  ParameterSet<float> init(mc);
  Rng rng(cfg.seed);
  init.init_uniform(rng);
  std::ofstream log((fs::path(a.out) / "train.log").string());
  log << "update\ttrain_loss\tvalid_ppl\tlr\n";
  EpochStreams epochs = [&](std::size_t epoch) {
    auto pairs = train_pairs;
    shuffle_pairs(pairs, cfg.seed + epoch);
    return build_streams(pairs);
  };
  auto r = train<float>(init, epochs, valid, cfg.train, [&](const TrainLogEntry& e) {
    log << e << std::endl;
    std::cout << e << std::endl;
  });
  save_checkpoint(r.best, (fs::path(a.out) / "model.ckpt").string());
  std::cout << "best valid ppl " << r.best_ppl << " at update " << r.best_update << " (" << r.stop_reason << ")\n";
  if (r.diverged) throw std::runtime_error("training diverged: " + r.stop_reason);
}

struct TranslateArgs {
  std::string model, vocab, bpe, input, output;
  DecodeConfig cfg;
  bool no_tokenize = false;
};

void translate_cmd(const TranslateArgs& a) {
  auto params = load_checkpoint<float>(a.model);
  auto vocab = vocab_next_to(a.model, a.vocab);
  if (vocab.size() != params.config().vocab_size) throw std::runtime_error("vocabulary does not match the checkpoint");
  auto out = translate_lines(params, vocab, make_preprocessor(a.bpe, a.no_tokenize), read_lines(a.input), a.cfg);
  if (a.output.empty() || a.output == "-")
    for (const auto& l : out) std::cout << l << '\n';
  else
    write_lines(a.output, out);
}

struct ScoreArgs {
  std::string candidates, references, sources, buckets = "20,40,60,80";
};

void print_report(const BleuReport& r) {
  std::cout << std::fixed << std::setprecision(2) << "BLEU\t" << r.bleu;
  for (int n = 0; n < kBleuOrder; ++n) std::cout << "\tp" << n + 1 << "\t" << r.precisions[n];
  std::cout << std::setprecision(4) << "\tBP\t" << r.brevity_penalty << "\thyp_len\t" << r.candidate_length
            << "\tref_len\t" << r.reference_length << '\n';
}

void score(const ScoreArgs& a) {
  auto cand = read_lines(a.candidates), ref = read_lines(a.references);
  print_report(corpus_bleu(cand, ref));
  if (!a.sources.empty()) {
    auto buckets = bleu_by_length(cand, ref, read_lines(a.sources), parse_list<std::size_t>(a.buckets, "--buckets"));
    std::cout << "bucket\tsentences\tBLEU\n";
    for (const auto& b : buckets) {
      std::cout << b.label() << '\t' << b.sentences << '\t';
      if (b.report) std::cout << std::fixed << std::setprecision(2) << b.report->bleu << '\n';
      else std::cout << "-\n";
    }
  }
}

struct PipelineArgs {
  std::string config;
  bool sweep = false;
};

void pipeline(const PipelineArgs& a) {
  auto cfg = load_config(a.config);
  if (!a.sweep) {
    auto r = run_pipeline(cfg, std::cerr);
    std::cout << "BLEU\t" << std::fixed << std::setprecision(2) << r.bleu << "\nmanifest\t"
              << (fs::path(cfg.paths.work_dir) / "manifest.json").string() << '\n';
    return;
  }
  std::cout << "start_pad\teps_stats\tvalid_ppl\tBLEU\n";
  for (int b = 0; b <= 5; ++b) {
    auto c = cfg;
    c.start_pad = b;
    c.decode.start_pad = b;
    c.paths.work_dir = (fs::path(cfg.paths.work_dir) / ("b" + std::to_string(b))).string();
    auto r = run_pipeline(c, std::cerr);
    std::cout << b << '\t' << std::setprecision(4) << 100.0 * r.eps_stats << "%\t" << r.valid_ppl << '\t'
              << std::fixed << std::setprecision(2) << r.bleu << std::defaultfloat << std::endl;
  }
}

struct TuneArgs {
  std::string model, vocab, bpe, dev_src, dev_ref;
  std::string padding_limits = "1,3,5", spis = "0,2,4", beams = "5";
  int start_pad = 0;
  int max_extra_steps = 5;
  bool no_tokenize = false;
};

void tune(const TuneArgs& a) {
  auto params = load_checkpoint<float>(a.model);
  auto vocab = vocab_next_to(a.model, a.vocab);
  if (vocab.size() != params.config().vocab_size) throw std::runtime_error("vocabulary does not match the checkpoint");
  DecodeConfig base;
  base.start_pad = a.start_pad;
  base.max_extra_steps = a.max_extra_steps;
  std::cout << "padding_limit, spi, beam\tBLEU\n";
  auto r = tune_inference(params, vocab, make_preprocessor(a.bpe, a.no_tokenize), read_lines(a.dev_src),
                          read_lines(a.dev_ref), parse_list<int>(a.padding_limits, "--padding-limits"),
                          parse_list<int>(a.spis, "--spis"), parse_list<std::size_t>(a.beams, "--beams"), base,
                          [](const TuneRow& row) {
                            std::cout << format_triple(row.config) << '\t' << std::fixed << std::setprecision(2)
                                      << row.bleu << std::endl;
                          });
  std::cout << "best\t" << format_triple(r.best) << '\t' << std::fixed << std::setprecision(2) << r.best_bleu << '\n';
}

struct SynthArgs {
  std::string task = "reorder", out;
  std::size_t pairs = 2000, vocab = 50;
  std::uint64_t seed = 1;
};

void synth(const SynthArgs& a) {
  synthetic::ParallelCorpus c;
  if (a.task == "reorder") c = synthetic::local_reordering(a.pairs, 2, 6, a.seed);
  else if (a.task == "monotone") c = synthetic::monotone_dictionary(a.pairs, a.vocab, 3, 10, a.seed);
  else if (a.task == "distance2") c = synthetic::distance_two_reordering(a.pairs, a.vocab, a.seed);
  else throw std::invalid_argument("unknown task '" + a.task + "' (reorder, monotone, distance2)");
  if (auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_lines(a.out + ".src", c.src_lines());
  write_lines(a.out + ".tgt", c.tgt_lines());
  std::vector<std::string> gold;
  for (const auto& g : c.gold) gold.push_back(format_alignment(g));
  write_lines(a.out + ".align", gold);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eager: attention-free eager translation"};
  app.require_subcommand(1);
  std::string stage;
  std::function<void()> run;

  BpeLearnArgs bl;
  auto* c_bl = app.add_subcommand("bpe-learn", "learn BPE merges from tokenized text");
  c_bl->add_option("--input", bl.inputs, "tokenized text files")->required()->check(CLI::ExistingFile);
  c_bl->add_option("--ops", bl.ops, "number of merge operations");
  c_bl->add_option("--output", bl.output, "merge file")->required();
  c_bl->callback([&] { stage = "bpe-learn"; run = [&] { bpe_learn(bl); }; });

  BpeApplyArgs ba;
  auto* c_ba = app.add_subcommand("bpe-apply", "segment tokenized text with learned merges");
  c_ba->add_option("--codes", ba.codes, "merge file")->required()->check(CLI::ExistingFile);
  c_ba->add_option("--input", ba.input)->required()->check(CLI::ExistingFile);
  c_ba->add_option("--output", ba.output)->required();
  c_ba->callback([&] { stage = "bpe-apply"; run = [&] { bpe_apply(ba); }; });

  AlignArgs al;
  auto* c_al = app.add_subcommand("align", "word-align a parallel corpus (Pharaoh output, 0-based)");
  c_al->add_option("--src", al.src)->required()->check(CLI::ExistingFile);
  c_al->add_option("--tgt", al.tgt)->required()->check(CLI::ExistingFile);
  c_al->add_option("--output", al.output)->required();
  c_al->add_option("--iterations", al.cfg.iterations)->check(CLI::PositiveNumber);
  c_al->add_option("--tension", al.cfg.tension);
  c_al->add_option("--null-prob", al.cfg.null_prob)->check(CLI::Range(0.0, 1.0));
  c_al->callback([&] { stage = "align"; run = [&] { align(al); }; });

  EagerizeArgs ea;
  auto* c_ea = app.add_subcommand("eagerize", "insert ε so every aligned pair is eager feasible");
  c_ea->add_option("--align", ea.align)->required()->check(CLI::ExistingFile);
  c_ea->add_option("--src", ea.src)->required()->check(CLI::ExistingFile);
  c_ea->add_option("--tgt", ea.tgt)->required()->check(CLI::ExistingFile);
  c_ea->add_option("--start-pad", ea.start_pad, "initial ε count b")->check(CLI::NonNegativeNumber);
  c_ea->add_option("--max-ratio", ea.max_ratio, "drop pairs growing beyond this source length ratio");
  c_ea->add_option("--out", ea.out, "output prefix (.src / .tgt)")->required();
  c_ea->callback([&] { stage = "eagerize"; run = [&] { eagerize(ea); }; });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train on eagerized data <prefix>.{train,valid}.{src,tgt}");
  c_tr->add_option("--config", tr.config)->required()->check(CLI::ExistingFile);
  c_tr->add_option("--data", tr.data)->required();
  c_tr->add_option("--out", tr.out)->required();
  c_tr->callback([&] { stage = "train"; run = [&] { train_cmd(tr); }; });

  TranslateArgs tl;
  auto* c_tl = app.add_subcommand("translate", "beam-search decoding of raw text");
  c_tl->add_option("--model", tl.model)->required()->check(CLI::ExistingFile);
  c_tl->add_option("--vocab", tl.vocab, "defaults to vocab.txt next to the model");
  c_tl->add_option("--bpe", tl.bpe, "merge file used for training");
  c_tl->add_option("--beam", tl.cfg.beam_size)->check(CLI::PositiveNumber);
  c_tl->add_option("--padding-limit", tl.cfg.padding_limit)->check(CLI::NonNegativeNumber);
  c_tl->add_option("--spi", tl.cfg.spi)->check(CLI::NonNegativeNumber);
  c_tl->add_option("--start-pad", tl.cfg.start_pad)->check(CLI::NonNegativeNumber);
  c_tl->add_option("--max-extra-steps", tl.cfg.max_extra_steps)->check(CLI::NonNegativeNumber);
  c_tl->add_flag("--no-tokenize", tl.no_tokenize, "input is already tokenized");
  c_tl->add_option("--input", tl.input)->required()->check(CLI::ExistingFile);
  c_tl->add_option("--output", tl.output, "defaults to standard output");
  c_tl->callback([&] { stage = "translate"; run = [&] { translate_cmd(tl); }; });

  ScoreArgs sc;
  auto* c_sc = app.add_subcommand("score", "corpus BLEU, optionally bucketed by source length");
  c_sc->add_option("--candidates", sc.candidates)->required()->check(CLI::ExistingFile);
  c_sc->add_option("--references", sc.references)->required()->check(CLI::ExistingFile);
  c_sc->add_option("--sources", sc.sources)->check(CLI::ExistingFile);
  c_sc->add_option("--buckets", sc.buckets, "inclusive upper bounds, e.g. 20,40,60,80");
  c_sc->callback([&] { stage = "score"; run = [&] { score(sc); }; });

  PipelineArgs pl;
  auto* c_pl = app.add_subcommand("pipeline", "run every stage from a config file");
  c_pl->add_option("--config", pl.config)->required()->check(CLI::ExistingFile);
  c_pl->add_flag("--sweep-start-pad", pl.sweep, "run b = 0..5 into work_dir/b<b>");
  c_pl->callback([&] { stage = "pipeline"; run = [&] { pipeline(pl); }; });

  TuneArgs tu;
  auto* c_tu = app.add_subcommand("tune", "grid search padding limit x SPI x beam on a dev set");
  c_tu->add_option("--model", tu.model)->required()->check(CLI::ExistingFile);
  c_tu->add_option("--vocab", tu.vocab);
  c_tu->add_option("--bpe", tu.bpe);
  c_tu->add_option("--dev-src", tu.dev_src)->required()->check(CLI::ExistingFile);
  c_tu->add_option("--dev-ref", tu.dev_ref)->required()->check(CLI::ExistingFile);
  c_tu->add_option("--padding-limits", tu.padding_limits);
  c_tu->add_option("--spis", tu.spis);
  c_tu->add_option("--beams", tu.beams);
  c_tu->add_option("--start-pad", tu.start_pad)->check(CLI::NonNegativeNumber);
  c_tu->add_option("--max-extra-steps", tu.max_extra_steps)->check(CLI::NonNegativeNumber);
  c_tu->add_flag("--no-tokenize", tu.no_tokenize);
  c_tu->callback([&] { stage = "tune"; run = [&] { tune(tu); }; });

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "write a synthetic parallel corpus with gold alignments");
  c_sy->add_option("--task", sy.task, "reorder, monotone or distance2");
  c_sy->add_option("--pairs", sy.pairs);
  c_sy->add_option("--vocab", sy.vocab, "dictionary size (monotone, distance2)");
  c_sy->add_option("--seed", sy.seed);
  c_sy->add_option("--out", sy.out, "output prefix (.src / .tgt / .align)")->required();
  c_sy->callback([&] { stage = "synth"; run = [&] { synth(sy); }; });

  CLI11_PARSE(app, argc, argv);
  try {
    run();
  } catch (const StageError& e) {
    std::cerr << "error [" << stage << "/" << e.stage() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
