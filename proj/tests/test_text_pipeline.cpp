#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "eager/random.hpp"
#include "eager/text_pipeline.hpp"

using namespace eager;

namespace {

std::string random_sentence(Rng& rng) {
  static const std::string letters = "abcdefgh";
  std::string s;
  auto words = 1 + rng.below(8);
  for (std::size_t w = 0; w < words; ++w) {
    if (w) s += ' ';
    auto len = 1 + rng.below(7);
    for (std::size_t k = 0; k < len; ++k) s += letters[rng.below(letters.size())];
  }
  return s;
}

}  // namespace

TEST(Bpe, SingleMergeOnRepeatedPair) {
  auto m = learn_bpe({"aa aa"}, 1);
  ASSERT_EQ(m.merges.size(), 1u);
  EXPECT_EQ(m.merges[0], SymbolPair("a", "a"));
}

TEST(Bpe, ZeroOperations) {
  EXPECT_TRUE(learn_bpe({"the quick brown fox"}, 0).merges.empty());
}

TEST(Bpe, MostFrequentPairWins) {
  auto m = learn_bpe({"ab", "ab", "ac"}, 1);
  ASSERT_EQ(m.merges.size(), 1u);
  EXPECT_EQ(m.merges[0], SymbolPair("a", "b"));
}

TEST(Bpe, FrequencyTiesBreakLexicographically) {
  // (b,c) and (x,y) both occur twice; (b,c) sorts first.
  auto m = learn_bpe({"xy bc", "bc xy"}, 1);
  ASSERT_EQ(m.merges.size(), 1u);
  EXPECT_EQ(m.merges[0], SymbolPair("b", "c"));
}

TEST(Bpe, EmptyCorpusIsAnError) {
  EXPECT_THROW(learn_bpe({}, 3), std::invalid_argument);
  EXPECT_THROW(learn_bpe({"   "}, 3), std::invalid_argument);
}

TEST(Bpe, ApplySingleMerge) {
  BpeModel m{{{"a", "a"}}};
  EXPECT_EQ(apply_bpe(m, {"aa"}), (Sentence{"aa"}));
}

TEST(Bpe, NoMergesSplitsCharacters) {
  EXPECT_EQ(apply_bpe(BpeModel{}, {"dog"}), (Sentence{"d@@", "o@@", "g"}));
}

TEST(Bpe, MergesApplyInLearnedOrder) {
  BpeModel m{{{"b", "c"}, {"a", "b"}}};
  // "abc": (b,c) has rank 0, so "a" + "bc" even though (a,b) is also present.
  EXPECT_EQ(apply_bpe(m, {"abc"}), (Sentence{"a@@", "bc"}));
}

TEST(Bpe, UnknownCharactersPassThrough) {
  auto m = learn_bpe({"aa aa"}, 1);
  EXPECT_EQ(apply_bpe(m, {"aé"}), (Sentence{"a@@", "é"}));
}

TEST(Bpe, LearningIsDeterministic) {
  Rng rng(3);
  std::vector<std::string> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(random_sentence(rng));
  auto a = learn_bpe(corpus, 50);
  auto b = learn_bpe(corpus, 50);
  EXPECT_EQ(a.merges, b.merges);
  EXPECT_EQ(a.merges.size(), 50u);
}

TEST(Bpe, RoundTripOnRandomSentences) {
  Rng rng(11);
  std::vector<std::string> corpus;
  for (int i = 0; i < 300; ++i) corpus.push_back(random_sentence(rng));
  auto m = learn_bpe(corpus, 40);
  BpeSegmenter seg(m);
  for (int i = 0; i < 500; ++i) {
    auto s = random_sentence(rng);
    EXPECT_EQ(detokenize(seg.apply(split_words(s))), s);
  }
  // every training word reassembles
  for (const auto& line : corpus)
    for (const auto& w : split_words(line)) EXPECT_EQ(join_subwords(seg.segment_word(w)), Sentence{w});
}

TEST(Bpe, ModelFileRoundTrip) {
  auto m = learn_bpe({"low lower lowest newer wider"}, 6);
  auto path = std::filesystem::temp_directory_path() / "eager_bpe_test.txt";
  save_bpe(m, path.string());
  EXPECT_EQ(load_bpe(path.string()).merges, m.merges);
  std::filesystem::remove(path);
}

TEST(Vocab, FrequencyThenLexicographicOrder) {
  auto v = Vocab::build({{"a", "b"}, {"b"}});
  ASSERT_EQ(v.size(), 5u);
  EXPECT_EQ(v.token(0), kEpsToken);
  EXPECT_EQ(v.token(1), kEosToken);
  EXPECT_EQ(v.token(2), kUnkToken);
  EXPECT_EQ(v.token(3), "b");
  EXPECT_EQ(v.token(4), "a");
}

TEST(Vocab, EmptyCorporaHoldOnlyReservedTokens) {
  auto v = Vocab::build({});
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.id(std::string(kEpsToken)), kEpsId);
  EXPECT_EQ(v.id(std::string(kEosToken)), kEosId);
  EXPECT_EQ(v.id(std::string(kUnkToken)), kUnkId);
}

TEST(Vocab, IdRoundTripAndUnknowns) {
  auto v = Vocab::build({{"x", "y", "z", "x"}, {std::string(kEpsToken), "y"}});
  for (TokenId i = 0; i < v.size(); ++i) EXPECT_EQ(v.id(v.token(i)), i);
  EXPECT_EQ(v.id("never-seen"), kUnkId);
  EXPECT_THROW(v.token(static_cast<TokenId>(v.size())), std::out_of_range);
}

TEST(Vocab, FileRoundTrip) {
  auto v = Vocab::build({{"c", "b", "a", "a"}});
  auto path = std::filesystem::temp_directory_path() / "eager_vocab_test.txt";
  v.save(path.string());
  auto w = Vocab::load(path.string());
  ASSERT_EQ(w.size(), v.size());
  for (TokenId i = 0; i < v.size(); ++i) EXPECT_EQ(w.token(i), v.token(i));
  std::filesystem::remove(path);
}

TEST(StripEps, RemovesPaddingFromWorkedExample) {
  Sentence s{"The", std::string(kEpsToken), "white", "dog"};
  EXPECT_EQ(strip_eps(s), (Sentence{"The", "white", "dog"}));
}

TEST(StripEps, AllPaddingAndNoPadding) {
  EXPECT_TRUE(strip_eps(std::vector<TokenId>{kEpsId, kEpsId}).empty());
  std::vector<TokenId> plain{5, 4, 9};
  EXPECT_EQ(strip_eps(plain), plain);
}

TEST(StripEps, PreservesOrderProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TokenId> s;
    std::vector<TokenId> expect;
    for (int k = 0; k < 20; ++k) {
      TokenId t = static_cast<TokenId>(rng.below(4));
      s.push_back(t);
      if (t != kEpsId) expect.push_back(t);
    }
    auto out = strip_eps(s);
    EXPECT_EQ(out, expect);
    EXPECT_EQ(std::count(out.begin(), out.end(), kEpsId), 0);
  }
}

TEST(Tokenize, SplitsPunctuation) {
  EXPECT_EQ(tokenize("Hello, world!  (ok)"), (Sentence{"Hello", ",", "world", "!", "(", "ok", ")"}));
  EXPECT_EQ(detokenize(tokenize("Hello, world! (ok)")), "Hello, world! (ok)");
}
