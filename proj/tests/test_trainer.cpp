#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "eager/checkpoint.hpp"
#include "eager/trainer.hpp"

using namespace eager;

namespace {

ModelConfig small(std::size_t V) {
  ModelConfig c;
  c.embed_dim = 8;
  c.layers = 1;
  c.vocab_size = V;
  return c;
}

// Copy task over tokens 3..V-1 with EOS separators.
Streams copy_streams(std::size_t sentences, std::size_t V, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EagerPair<TokenId>> corpus;
  for (std::size_t k = 0; k < sentences; ++k) {
    EagerPair<TokenId> p;
    std::size_t len = 2 + rng.below(5);
    for (std::size_t i = 0; i < len; ++i) p.src.push_back(3 + static_cast<TokenId>(rng.below(V - 3)));
    p.tgt = p.src;
    corpus.push_back(p);
  }
  return build_streams(corpus);
}

}  // namespace

TEST(PlateauSchedule, HalvesOnNonImprovement) {
  PlateauSchedule s(20.0);
  EXPECT_TRUE(s.observe(10.0, 1));
  EXPECT_EQ(s.lr(), 20.0);
  EXPECT_FALSE(s.observe(10.0, 2));
  EXPECT_EQ(s.lr(), 10.0);
  EXPECT_TRUE(s.observe(9.0, 3));
  EXPECT_EQ(s.lr(), 10.0);
  EXPECT_FALSE(s.observe(12.0, 4));
  EXPECT_EQ(s.lr(), 5.0);
  EXPECT_EQ(s.best_update(), 3u);
  EXPECT_TRUE(s.out_of_patience(7, 4));
  EXPECT_FALSE(s.out_of_patience(6, 4));
}

TEST(Clipping, BoundsGlobalNorm) {
  ParameterSet<double> p(small(6));
  Rng rng(1);
  for (auto& prm : p.params())
    for (auto& g : prm.grad.flat()) g = rng.uniform(-3, 3);
  double before = clip_grad_norm(p, 0.25);
  EXPECT_GT(before, 0.25);
  EXPECT_NEAR(grad_norm(p), 0.25, 1e-9);
  // a small gradient is untouched
  for (auto& prm : p.params()) prm.grad.fill(0.0);
  p.output_bias_grad()[0] = 0.1;
  clip_grad_norm(p, 0.25);
  EXPECT_EQ(p.output_bias_grad()[0], 0.1);
}

TEST(SgdStep, MovesAgainstGradient) {
  ParameterSet<double> p(small(6));
  p.output_bias_grad()[2] = 0.5;
  sgd_step(p, 2.0);
  EXPECT_EQ(p.output_bias()[2], -1.0);
}

TEST(Perplexity, UniformModelScoresVocabSize) {
  ParameterSet<double> p(small(9));
  auto s = copy_streams(20, 9, 3);
  EXPECT_NEAR(perplexity(p, s, 3, 7), 9.0, 1e-9);
}

TEST(Perplexity, MatchesExpOfBatchLoss) {
  ParameterSet<double> p(small(9));
  Rng rng(4);
  p.init_uniform(rng, 0.5);
  auto s = copy_streams(10, 9, 5);
  s.src.resize(40);
  s.tgt.resize(40);
  // one lane, bptt covering everything in a single chunk
  auto st = RecurrentState<double>::zeros(p.config(), 1);
  auto loss = forward_batch(p, st, slice_lanes(s, 1, 40, 0, 40));
  EXPECT_NEAR(perplexity(p, s, 1, 40), std::exp(loss.mean), 1e-9);
  // chunking does not change the score thanks to state carryover
  EXPECT_NEAR(perplexity(p, s, 1, 7), std::exp(loss.mean), 1e-9);
}

TEST(Train, IsDeterministic) {
  auto s = copy_streams(60, 10, 7), v = copy_streams(10, 10, 8);
  TrainConfig cfg;
  cfg.lr = 1.0;
  cfg.batch_size = 4;
  cfg.bptt = 5;
  cfg.eval_every = 10;
  cfg.max_updates = 30;
  ModelConfig mc = small(10);
  mc.dropout_embed = 0.1;
  mc.dropout_hidden = 0.2;
  ParameterSet<float> init(mc);
  Rng rng(1);
  init.init_uniform(rng);
  auto a = train(init, s, v, cfg);
  auto b = train(init, s, v, cfg);
  EXPECT_EQ(a.batch_losses, b.batch_losses);
  for (std::size_t k = 0; k < a.best.params().size(); ++k)
    EXPECT_TRUE(a.best.params()[k].value == b.best.params()[k].value);
  EXPECT_EQ(a.updates, 30u);
  EXPECT_EQ(a.stop_reason, "update cap");
}

TEST(Train, LearnsCopyTask) {
  auto s = copy_streams(400, 12, 11), v = copy_streams(40, 12, 12);
  TrainConfig cfg;
  cfg.lr = 2.0;
  cfg.batch_size = 8;
  cfg.bptt = 10;
  cfg.eval_every = 50;
  cfg.max_updates = 600;
  cfg.clip_norm = 1.0;
  ParameterSet<float> init(small(12));
  Rng rng(2);
  init.init_uniform(rng);
  double start = perplexity(init, v, 4, 10);
  std::vector<TrainLogEntry> log;
  auto r = train(init, s, v, cfg, [&](const TrainLogEntry& e) { log.push_back(e); });
  EXPECT_FALSE(r.diverged);
  EXPECT_LT(r.best_ppl, start / 4);
  EXPECT_LT(r.best_ppl, 2.0);
  EXPECT_EQ(log.size(), r.log.size());
  EXPECT_EQ(perplexity(r.best, v, cfg.eval_lanes, cfg.bptt), r.best_ppl);
  double min_ppl = r.log.front().valid_ppl;
  for (std::size_t k = 1; k < r.log.size(); ++k) {
    EXPECT_LE(r.log[k].lr, r.log[k - 1].lr);
    min_ppl = std::min(min_ppl, r.log[k].valid_ppl);
  }
  EXPECT_EQ(min_ppl, r.best_ppl);
}

TEST(Train, PatienceStopsEarly) {
  auto s = copy_streams(100, 10, 13), v = copy_streams(10, 10, 14);
  TrainConfig cfg;
  cfg.lr = 1e-15;  // float weights cannot move, so validation never improves after the first check
  cfg.batch_size = 2;
  cfg.bptt = 4;
  cfg.eval_every = 5;
  cfg.patience_updates = 15;
  cfg.max_updates = 1000;
  ParameterSet<float> init(small(10));
  Rng rng(4);
  init.init_uniform(rng);
  auto r = train(init, s, v, cfg);
  EXPECT_EQ(r.stop_reason, "no improvement within patience");
  EXPECT_LE(r.updates, 25u);
}

TEST(Train, DivergenceIsReported) {
  auto s = copy_streams(50, 10, 15), v = copy_streams(10, 10, 16);
  TrainConfig cfg;
  cfg.lr = 1e30;
  cfg.clip_norm = 1e30;
  cfg.batch_size = 2;
  cfg.bptt = 4;
  cfg.eval_every = 1;
  cfg.max_updates = 50;
  ParameterSet<float> init(small(10));
  Rng rng(3);
  init.init_uniform(rng);
  auto r = train(init, s, v, cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.stop_reason.empty());
}

TEST(Checkpoint, BitwiseRoundTrip) {
  auto mc = small(11);
  mc.layers = 2;
  ParameterSet<float> p(mc);
  Rng rng(5);
  p.init_uniform(rng);
  auto path = (std::filesystem::temp_directory_path() / "eager_ckpt_test.bin").string();
  save_checkpoint(p, path);
  auto q = load_checkpoint<float>(path);
  EXPECT_EQ(q.config(), p.config());
  ASSERT_EQ(q.params().size(), p.params().size());
  for (std::size_t k = 0; k < p.params().size(); ++k) {
    EXPECT_EQ(q.params()[k].name, p.params()[k].name);
    EXPECT_TRUE(q.params()[k].value == p.params()[k].value);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream ss("not a checkpoint at all");
  EXPECT_THROW(load_checkpoint<float>(ss), std::runtime_error);
}
