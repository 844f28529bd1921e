#pragma once

// Synthetic parallel corpora with known dictionaries and gold alignments.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "eager/aligner.hpp"
#include "eager/random.hpp"
#include "eager/text_pipeline.hpp"

namespace eager::synthetic {

struct ParallelCorpus {
  std::vector<Sentence> src;
  std::vector<Sentence> tgt;
  std::vector<Alignment> gold;  // 1-based links

  std::size_t size() const { return src.size(); }

  std::vector<std::string> src_lines() const {
    std::vector<std::string> out;
    for (const auto& s : src) out.push_back(join(s));
    return out;
  }
  std::vector<std::string> tgt_lines() const {
    std::vector<std::string> out;
    for (const auto& s : tgt) out.push_back(join(s));
    return out;
  }
};

/// Word-for-word translation in monotone order through a fixed random
/// bijection over `vocab` words per side.
inline ParallelCorpus monotone_dictionary(std::size_t pairs, std::size_t vocab, std::size_t min_len,
                                          std::size_t max_len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> dict(vocab);
  for (std::size_t i = 0; i < vocab; ++i) dict[i] = i;
  for (std::size_t i = vocab; i > 1; --i) std::swap(dict[i - 1], dict[rng.below(i)]);
  ParallelCorpus c;
  for (std::size_t k = 0; k < pairs; ++k) {
    std::size_t len = min_len + rng.below(max_len - min_len + 1);
    Sentence s, t;
    Alignment a;
    for (std::size_t j = 0; j < len; ++j) {
      std::size_t w = rng.below(vocab);
      s.push_back("s" + std::to_string(w));
      t.push_back("t" + std::to_string(dict[w]));
      a.push_back({static_cast<int>(j) + 1, static_cast<int>(j) + 1});
    }
    c.src.push_back(std::move(s));
    c.tgt.push_back(std::move(t));
    c.gold.push_back(std::move(a));
  }
  return c;
}

/// Phrase grammar with a local reordering. Source phrases are a noun "nK",
/// a verb "vK", or an adjective group "aK nK de"; the target translates
/// words one-to-one ("NK", "VK", "AK") but emits adjective groups as
/// noun-before-adjective and drops the particle "de":
///
///   a3 n7 de  ->  N7 A3
///
/// 15 adjectives, 20 nouns and 15 verbs give a 50-word dictionary per side.
/// Each such group forces one ε when eagerized without initial padding.
inline ParallelCorpus local_reordering(std::size_t pairs, std::size_t min_phrases, std::size_t max_phrases,
                                       std::uint64_t seed) {
  Rng rng(seed);
  ParallelCorpus c;
  for (std::size_t k = 0; k < pairs; ++k) {
    std::size_t phrases = min_phrases + rng.below(max_phrases - min_phrases + 1);
    Sentence s, t;
    Alignment a;
    auto link = [&](std::size_t i, std::size_t j) { a.push_back({static_cast<int>(i), static_cast<int>(j)}); };
    for (std::size_t p = 0; p < phrases; ++p) {
      auto kind = rng.below(3);
      if (kind == 0) {
        auto n = rng.below(20);
        s.push_back("n" + std::to_string(n));
        t.push_back("N" + std::to_string(n));
        link(s.size(), t.size());
      } else if (kind == 1) {
        auto v = rng.below(15);
        s.push_back("v" + std::to_string(v));
        t.push_back("V" + std::to_string(v));
        link(s.size(), t.size());
      } else {
        auto adj = rng.below(15);
        auto n = rng.below(20);
        s.push_back("a" + std::to_string(adj));
        s.push_back("n" + std::to_string(n));
        s.push_back("de");
        t.push_back("N" + std::to_string(n));
        link(s.size() - 1, t.size());
        t.push_back("A" + std::to_string(adj));
        link(s.size() - 2, t.size());
      }
    }
    std::sort(a.begin(), a.end(), [](const Link& x, const Link& y) { return x.tgt < y.tgt; });
    c.src.push_back(std::move(s));
    c.tgt.push_back(std::move(t));
    c.gold.push_back(std::move(a));
  }
  return c;
}

/// Three-word groups "x y z" translated as "Z X Y" (the last word moves two
/// places forward), mixed with monotone single words.
inline ParallelCorpus distance_two_reordering(std::size_t pairs, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  ParallelCorpus c;
  for (std::size_t k = 0; k < pairs; ++k) {
    Sentence s, t;
    Alignment a;
    std::size_t units = 1 + rng.below(4);
    for (std::size_t u = 0; u < units; ++u) {
      if (rng.bernoulli(0.5)) {
        auto w = rng.below(vocab);
        s.push_back("w" + std::to_string(w));
        t.push_back("W" + std::to_string(w));
        a.push_back({static_cast<int>(s.size()), static_cast<int>(t.size())});
      } else {
        std::size_t base = s.size();
        std::size_t w[3];
        for (auto& x : w) {
          x = rng.below(vocab);
          s.push_back("w" + std::to_string(x));
        }
        for (std::size_t src_off : {2u, 0u, 1u}) {
          t.push_back("W" + std::to_string(w[src_off]));
          a.push_back({static_cast<int>(base + src_off + 1), static_cast<int>(t.size())});
        }
      }
    }
    c.src.push_back(std::move(s));
    c.tgt.push_back(std::move(t));
    c.gold.push_back(std::move(a));
  }
  return c;
}

}  // namespace eager::synthetic
