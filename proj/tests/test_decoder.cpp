#include <gtest/gtest.h>

#include "eager/decoder.hpp"
#include "support/oracles.hpp"

using namespace eager;

namespace {

ParameterSet<double> random_model(std::size_t V, std::uint64_t seed, double scale = 1.0) {
  ModelConfig c;
  c.embed_dim = 4;
  c.layers = 1;
  c.vocab_size = V;
  ParameterSet<double> p(c);
  Rng rng(seed);
  p.init_uniform(rng, scale);
  for (auto& v : p.output_bias().flat()) v = rng.uniform(-1, 1);
  return p;
}

std::vector<TokenId> random_source(Rng& rng, std::size_t V, std::size_t len) {
  std::vector<TokenId> s;
  for (std::size_t k = 0; k < len; ++k) s.push_back(3 + static_cast<TokenId>(rng.below(V - 3)));
  return s;
}

}  // namespace

TEST(Decoder, BeamOneIsGreedy) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    auto p = random_model(6, 100 + trial);
    auto src = random_source(rng, 6, 1 + rng.below(5));
    DecodeConfig cfg;
    cfg.beam_size = 1;
    cfg.padding_limit = static_cast<int>(rng.below(3));
    cfg.start_pad = static_cast<int>(rng.below(2));
    auto r = beam_search(p, src, cfg);
    auto g = oracle::greedy_decode(p, src, cfg);
    EXPECT_EQ(r.raw, g.outputs);
    EXPECT_NEAR(r.logprob, g.logprob, 1e-12);
  }
}

TEST(Decoder, MatchesExhaustiveSearch) {
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    auto p = random_model(5, 200 + trial);
    DecodeConfig cfg;
    cfg.spi = static_cast<int>(rng.below(2));
    cfg.start_pad = static_cast<int>(rng.below(2));
    cfg.padding_limit = static_cast<int>(rng.below(3));
    cfg.max_extra_steps = static_cast<int>(rng.below(2));
    cfg.beam_size = 625;
    auto src = random_source(rng, 5, 1 + rng.below(3));
    oracle::ExhaustiveDecoder<double> ex{p, src, cfg};
    ex.run();
    ASSERT_LE(ex.complete, 625u);
    auto r = beam_search(p, src, cfg);
    EXPECT_EQ(r.raw, ex.best.outputs);
    EXPECT_NEAR(r.logprob, ex.best.logprob, 1e-9);
  }
}

TEST(Decoder, InitialOutputsAreForcedPadding) {
  auto p = random_model(7, 3);
  DecodeConfig cfg;
  cfg.start_pad = 2;
  auto r = beam_search(p, {3, 4, 5, 6}, cfg);
  ASSERT_GE(r.raw.size(), 2u);
  EXPECT_EQ(r.raw[0], kEpsId);
  EXPECT_EQ(r.raw[1], kEpsId);
}

TEST(Decoder, PaddingLimitBoundsEps) {
  // Bias towards ε so the limit is what stops it.
  auto p = random_model(7, 4);
  p.output_bias()[kEpsId] = 8.0;
  for (int limit : {0, 1, 3}) {
    DecodeConfig cfg;
    cfg.padding_limit = limit;
    cfg.start_pad = 1;
    auto r = beam_search(p, {3, 4, 5, 6, 3, 4}, cfg);
    int non_initial = static_cast<int>(std::count(r.raw.begin() + 1, r.raw.end(), kEpsId));
    EXPECT_EQ(non_initial, limit);
    EXPECT_EQ(r.eps_used, limit);
  }
}

TEST(Decoder, EosOnlyAfterSourceEnd) {
  auto p = random_model(7, 5);
  p.output_bias()[kEosId] = 8.0;
  DecodeConfig cfg;
  cfg.max_extra_steps = 0;
  std::vector<TokenId> src{3, 4, 5};
  auto r = beam_search(p, src, cfg);
  EXPECT_TRUE(r.finished);
  EXPECT_EQ(r.raw.size(), src.size());
  EXPECT_EQ(r.inputs.back(), kEosId);
}

TEST(Decoder, LengthEqualsSourceWithoutInjection) {
  Rng rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    auto p = random_model(8, 300 + trial);
    DecodeConfig cfg;
    cfg.spi = 0;
    cfg.max_extra_steps = 0;
    cfg.padding_limit = 2;
    auto src = random_source(rng, 8, 1 + rng.below(8));
    auto r = beam_search(p, src, cfg);
    EXPECT_EQ(r.raw.size(), src.size());
    EXPECT_EQ(r.output.size(), src.size() - static_cast<std::size_t>(std::count(r.raw.begin(), r.raw.end(), kEpsId)));
  }
}

TEST(Decoder, InjectionIsBounded) {
  auto p = random_model(7, 7);
  p.output_bias()[kEosId] = -6.0;  // discourage finishing early
  for (int spi : {0, 1, 2, 3}) {
    DecodeConfig cfg;
    cfg.spi = spi;
    cfg.max_extra_steps = 0;
    cfg.padding_limit = 10;
    std::vector<TokenId> src{3, 4};
    auto r = beam_search(p, src, cfg);
    EXPECT_LE(r.spi_used, spi);
    EXPECT_EQ(static_cast<int>(r.inputs.size()), static_cast<int>(src.size()) + 1 + r.spi_used);
    EXPECT_LE(r.raw.size(), src.size() + static_cast<std::size_t>(spi));
  }
}

TEST(Decoder, AllowedOutputsRenormalize) {
  auto p = random_model(6, 8);
  BeamHypothesis<double> h;
  h.state = RecurrentState<double>::zeros(p.config(), 1);
  std::vector<TokenId> src{3, 4};
  DecodeConfig cfg;
  auto after = advance_input(h, 3, src);
  auto logits = forward_step<double>(p, after.state = h.state, 3, kEosId);
  auto succ = allowed_outputs<double>(std::span<const double>(logits), after, src, cfg);
  // EOS masked before the source EOS is read
  EXPECT_EQ(succ.size(), 5u);
  double total = 0.0;
  for (const auto& s : succ) {
    EXPECT_NE(s.token, kEosId);
    total += std::exp(s.logprob);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Decoder, SuccessorScoresOnlyDecrease) {
  auto p = random_model(6, 9);
  BeamHypothesis<double> h;
  h.state = RecurrentState<double>::zeros(p.config(), 1);
  std::vector<TokenId> src{3, 4, 5};
  DecodeConfig cfg;
  for (std::size_t step = 0; step < src.size(); ++step) {
    auto next = step_hypothesis(p, h, src[step], src, cfg);
    ASSERT_FALSE(next.empty());
    for (std::size_t k = 0; k < next.size(); ++k) {
      EXPECT_LE(next[k].logprob, h.logprob);
      if (k) EXPECT_LE(next[k].logprob, next[k - 1].logprob);
    }
    h = next[0];
  }
}

TEST(Decoder, RejectsBadInput) {
  auto p = random_model(6, 10);
  DecodeConfig cfg;
  EXPECT_THROW(beam_search(p, {}, cfg), std::invalid_argument);
  EXPECT_THROW(beam_search(p, {3, 9}, cfg), std::out_of_range);
  cfg.beam_size = 0;
  EXPECT_THROW(beam_search(p, {3}, cfg), std::invalid_argument);
}
