#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "eager/pipeline.hpp"
#include "eager/synthetic.hpp"

using namespace eager;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("eager_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig tiny_run(const fs::path& dir) {
  auto train = synthetic::local_reordering(150, 2, 4, 1);
  auto dev = synthetic::local_reordering(20, 2, 4, 2);
  write_lines((dir / "train.src").string(), train.src_lines());
  write_lines((dir / "train.tgt").string(), train.tgt_lines());
  write_lines((dir / "dev.src").string(), dev.src_lines());
  write_lines((dir / "dev.tgt").string(), dev.tgt_lines());
  PipelineConfig c;
  c.paths = {(dir / "train.src").string(), (dir / "train.tgt").string(), (dir / "dev.src").string(),
             (dir / "dev.tgt").string(), (dir / "work").string()};
  c.bpe_ops = 30;
  c.start_pad = 1;
  c.decode.start_pad = 1;
  c.model.embed_dim = 8;
  c.model.layers = 1;
  c.train.lr = 2.0;
  c.train.batch_size = 4;
  c.train.bptt = 8;
  c.train.eval_every = 10;
  c.train.max_updates = 30;
  c.train.eval_lanes = 2;
  return c;
}

const std::vector<std::string> kArtifacts = {
    "train.tok.src", "train.tok.tgt", "dev.tok.src",     "dev.tok.tgt",     "bpe.codes",       "train.bpe.src",
    "train.bpe.tgt", "dev.bpe.src",   "dev.bpe.tgt",     "train.align",     "dev.align",       "train.eager.src",
    "train.eager.tgt", "dev.eager.src", "dev.eager.tgt", "vocab.txt",       "train.stream",    "model.ckpt",
    "train.log",     "dev.hyp",       "dev.bleu"};

}  // namespace

TEST(Config, DefaultsAreDeskScale) {
  auto c = config_from_json(Json::object());
  EXPECT_EQ(c.model.embed_dim, 64u);
  EXPECT_EQ(c.model.layers, 2u);
  EXPECT_EQ(c.train.batch_size, 32u);
  EXPECT_EQ(c.train.bptt, 32u);
  EXPECT_EQ(c.train.lr, 20.0);
  EXPECT_EQ(c.train.eval_every, 200u);
  EXPECT_EQ(c.train.patience_updates, 2000u);
  EXPECT_EQ(c.train.clip_norm, 0.25);
  EXPECT_EQ(c.aligner.iterations, 5);
  EXPECT_EQ(c.aligner.tension, 4.0);
  EXPECT_EQ(c.aligner.null_prob, 0.08);
  EXPECT_EQ(c.max_length_ratio, 9.0);
}

TEST(Config, JsonRoundTrip) {
  PipelineConfig c;
  c.seed = 7;
  c.start_pad = 3;
  c.bpe_ops = 0;
  c.model.embed_dim = 12;
  c.train.lr = 0.5;
  c.decode.spi = 4;
  c.decode.beam_size = 25;
  auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.train.seed, 7u);
  EXPECT_EQ(back.decode.start_pad, 3);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(Json::parse(R"({"modle": {}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"train": {"learning_rate": 1}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"train": {"lr": 0}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"train": {"eval_every": 0}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"eagerize": {"start_pad": -1}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"decode": {"beam_size": "five"}})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ShippedProfilesParse) {
  auto desk = load_config(std::string(EAGER_SOURCE_DIR) + "/configs/desk.json");
  EXPECT_EQ(to_json(desk)["model"], to_json(PipelineConfig{})["model"]);
  EXPECT_EQ(to_json(desk)["train"], to_json(PipelineConfig{})["train"]);
  auto full = load_config(std::string(EAGER_SOURCE_DIR) + "/configs/full.json");
  EXPECT_EQ(full.model.embed_dim, 500u);
  EXPECT_EQ(full.model.hidden(), 1000u);
  EXPECT_EQ(full.model.layers, 4u);
  EXPECT_EQ(full.train.batch_size, 200u);
  EXPECT_EQ(full.train.bptt, 60u);
  EXPECT_EQ(full.train.lr, 20.0);
  EXPECT_EQ(full.train.eval_every, 6500u);
  EXPECT_EQ(full.train.patience_updates, 50000u);
  EXPECT_EQ(full.bpe_ops, 32000u);
  auto synth = load_config(std::string(EAGER_SOURCE_DIR) + "/configs/synthetic.json");
  EXPECT_EQ(synth.bpe_ops, 0u);
  EXPECT_FALSE(synth.tokenize);
}

TEST(Files, Fnv1aKnownValues) {
  auto dir = scratch("fnv");
  auto path = (dir / "f").string();
  write_lines(path, {});
  EXPECT_EQ(fnv1a_file(path), "cbf29ce484222325");
  { std::ofstream(path) << "a"; }
  EXPECT_EQ(fnv1a_file(path), "af63dc4c8601ec8c");
  { std::ofstream(path) << "foobar"; }
  EXPECT_EQ(fnv1a_file(path), "85944171f73967e8");
}

TEST(Tune, TripleFormat) {
  DecodeConfig c;
  c.padding_limit = 5;
  c.spi = 4;
  c.beam_size = 25;
  EXPECT_EQ(format_triple(c), "5, 4, 25");
}

TEST(Tune, GridSearch) {
  ModelConfig mc;
  mc.embed_dim = 4;
  mc.layers = 1;
  mc.vocab_size = 8;
  ParameterSet<double> p(mc);
  Rng rng(3);
  p.init_uniform(rng, 0.5);
  Vocab v = Vocab::build({{"a", "b", "c", "d", "e"}});
  Preprocessor prep{false, std::nullopt};
  std::vector<std::string> src{"a b c", "d e", "a a e"}, ref{"a b c", "d e", "a a e"};
  DecodeConfig base;
  auto one = tune_inference(p, v, prep, src, ref, {2}, {1}, {3}, base);
  ASSERT_EQ(one.rows.size(), 1u);
  EXPECT_EQ(format_triple(one.best), "2, 1, 3");
  std::size_t seen = 0;
  auto grid = tune_inference(p, v, prep, src, ref, {0, 2}, {0, 1}, {1, 4}, base, [&](const TuneRow&) { ++seen; });
  EXPECT_EQ(grid.rows.size(), 8u);
  EXPECT_EQ(seen, 8u);
  for (const auto& row : grid.rows) EXPECT_GE(grid.best_bleu, row.bleu);
  EXPECT_THROW(tune_inference(p, v, prep, src, ref, {}, {0}, {1}, base), std::invalid_argument);
}

TEST(Pipeline, RunsEveryStageAndRecordsArtifacts) {
  auto dir = scratch("smoke");
  auto cfg = tiny_run(dir);
  std::ostringstream log;
  auto r = run_pipeline(cfg, log);
  for (const auto& a : kArtifacts) EXPECT_TRUE(fs::exists(dir / "work" / a)) << a;
  const auto& m = r.manifest;
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["seed"], cfg.seed);
  EXPECT_EQ(m["config"], to_json(cfg));
  ASSERT_EQ(m["stages"].size(), 9u);
  std::vector<std::string> names;
  for (const auto& s : m["stages"]) names.push_back(s["name"]);
  EXPECT_EQ(names, (std::vector<std::string>{"tokenize", "bpe-learn", "bpe-apply", "align", "eagerize", "batch",
                                             "train", "translate", "score"}));
  std::size_t recorded = 0;
  for (const auto& s : m["stages"]) recorded += s["artifacts"].size();
  EXPECT_EQ(recorded, kArtifacts.size());
  EXPECT_EQ(m["inputs"].size(), 4u);
  EXPECT_GT(r.eps_stats, 0.0);
  EXPECT_EQ(r.hypotheses.size(), 20u);
  EXPECT_GE(r.bleu, 0.0);
  // the manifest on disk is the returned one
  std::ifstream in((dir / "work" / "manifest.json").string());
  EXPECT_EQ(Json::parse(in), m);
  // eagerized files line up token for token
  auto es = read_corpus((dir / "work" / "train.eager.src").string());
  auto et = read_corpus((dir / "work" / "train.eager.tgt").string());
  ASSERT_EQ(es.size(), et.size());
  for (std::size_t k = 0; k < es.size(); ++k) {
    ASSERT_EQ(es[k].size(), et[k].size());
    EXPECT_EQ(et[k][0], kEpsToken);
  }
}

TEST(Pipeline, DataStagesAreReproducible) {
  auto dir = scratch("repro");
  auto cfg = tiny_run(dir);
  std::ostringstream log;
  auto a = run_pipeline(cfg, log);
  auto b = run_pipeline(cfg, log);
  for (std::size_t s = 0; s < 6; ++s) EXPECT_EQ(a.manifest["stages"][s]["artifacts"], b.manifest["stages"][s]["artifacts"]);
  // deterministic single-threaded training and decoding
  EXPECT_EQ(a.manifest["stages"][6]["artifacts"], b.manifest["stages"][6]["artifacts"]);
  EXPECT_EQ(a.hypotheses, b.hypotheses);
  // a different seed reshuffles the training stream
  cfg.seed = 2;
  cfg.train.seed = 2;
  auto c = run_pipeline(cfg, log);
  EXPECT_EQ(a.manifest["stages"][4]["artifacts"], c.manifest["stages"][4]["artifacts"]);
  EXPECT_NE(a.manifest["stages"][5]["artifacts"]["train.stream"], c.manifest["stages"][5]["artifacts"]["train.stream"]);
}

TEST(Pipeline, FailureIsTaggedWithStage) {
  auto dir = scratch("fail");
  auto cfg = tiny_run(dir);
  write_lines(cfg.paths.dev_tgt, {"only one line"});
  std::ostringstream log;
  try {
    run_pipeline(cfg, log);
    FAIL() << "expected a StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "tokenize");
  }
  std::ifstream in((dir / "work" / "manifest.json").string());
  auto m = Json::parse(in);
  EXPECT_EQ(m["status"].get<std::string>().rfind("failed at tokenize", 0), 0u);

  cfg.paths.train_src = (dir / "missing.src").string();
  EXPECT_THROW(run_pipeline(cfg, log), StageError);
}
