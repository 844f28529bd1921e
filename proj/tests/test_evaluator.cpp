#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "eager/evaluator.hpp"
#include "eager/random.hpp"

using namespace eager;

namespace {

void load_fixture(std::vector<std::string>& cands, std::vector<std::string>& refs) {
  std::ifstream in(std::string(EAGER_TEST_DATA_DIR) + "/bleu_fixture.tsv");
  std::string line;
  while (std::getline(in, line)) {
    auto tab = line.find('\t');
    cands.push_back(line.substr(0, tab));
    refs.push_back(line.substr(tab + 1));
  }
}

}  // namespace

TEST(Bleu, PerfectMatchIs100) {
  auto r = corpus_bleu({"the cat sat on the mat", "a b c d e"}, {"the cat sat on the mat", "a b c d e"});
  EXPECT_DOUBLE_EQ(r.bleu, 100.0);
  EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
}

TEST(Bleu, NoOverlapIsZero) {
  EXPECT_EQ(corpus_bleu({"x y z w"}, {"a b c d"}).bleu, 0.0);
}

TEST(Bleu, ShortCandidateUsesAvailableOrders) {
  // p1 = 3/3, p2 = 2/2, p3 = 1/1 and no 4-grams; BP = exp(1 - 4/3).
  auto r = corpus_bleu({"the cat sat"}, {"the cat sat down"});
  EXPECT_EQ(r.totals[3], 0);
  EXPECT_NEAR(r.brevity_penalty, std::exp(-1.0 / 3.0), 1e-15);
  EXPECT_NEAR(r.bleu, 100.0 * std::exp(-1.0 / 3.0), 1e-6);
}

TEST(Bleu, FixtureMatchesReferenceImplementation) {
  // Expected values from an independent BLEU implementation (13a
  // tokenization, no smoothing) on the same 20 pairs.
  std::vector<std::string> cands, refs;
  load_fixture(cands, refs);
  ASSERT_EQ(cands.size(), 20u);
  auto r = corpus_bleu(cands, refs);
  EXPECT_EQ(r.matches, (std::array<long, 4>{145, 102, 71, 46}));
  EXPECT_EQ(r.totals, (std::array<long, 4>{167, 147, 127, 107}));
  EXPECT_EQ(r.candidate_length, 167);
  EXPECT_EQ(r.reference_length, 169);
  EXPECT_NEAR(r.brevity_penalty, 0.9880953795336945, 1e-12);
  EXPECT_NEAR(r.bleu, 60.95223443360705, 1e-3);
}

TEST(Bleu, InvariantToSentenceOrder) {
  std::vector<std::string> cands, refs;
  load_fixture(cands, refs);
  double base = corpus_bleu(cands, refs).bleu;
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t i = cands.size(); i > 1; --i) {
      auto j = rng.below(i);
      std::swap(cands[i - 1], cands[j]);
      std::swap(refs[i - 1], refs[j]);
    }
    EXPECT_NEAR(corpus_bleu(cands, refs).bleu, base, 1e-9);
  }
}

TEST(Bleu, SizeMismatchIsAnError) {
  EXPECT_THROW(corpus_bleu({"a"}, {"a", "b"}), std::invalid_argument);
}

TEST(Bleu, Tokenizer13a) {
  EXPECT_EQ(tokenize_13a("He said: \"hi\"."), (Sentence{"He", "said", ":", "\"", "hi", "\"", "."}));
  EXPECT_EQ(tokenize_13a("3,5 and 10.30 (3-1)"), (Sentence{"3,5", "and", "10.30", "(", "3", "-", "1", ")"}));
  EXPECT_EQ(tokenize_13a("it's &amp; more"), (Sentence{"it's", "&", "more"}));
}

TEST(Bleu, LengthBuckets) {
  std::vector<std::string> src{"a", "a b c", "a b c d e f", "x y"};
  std::vector<std::string> ref{"p", "p q r", "p q r s t u", "p q"};
  std::vector<std::string> hyp{"p", "p q r", "z z z z z z", "p q"};
  auto b = bleu_by_length(hyp, ref, src, {2, 4});
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].label(), "1-2");
  EXPECT_EQ(b[1].label(), "3-4");
  EXPECT_EQ(b[2].label(), "5+");
  EXPECT_EQ(b[0].sentences, 2u);
  EXPECT_EQ(b[1].sentences, 1u);
  EXPECT_EQ(b[2].sentences, 1u);
  EXPECT_EQ(b[2].report->bleu, 0.0);
  auto empty = bleu_by_length(hyp, ref, src, {2, 4, 5});
  EXPECT_FALSE(empty[2].report.has_value());
  EXPECT_THROW(bleu_by_length(hyp, ref, src, {4, 2}), std::invalid_argument);
}
