#pragma once

// Corpus BLEU-4 over detokenized text with 13a-style tokenization, no
// smoothing. Orders for which the candidate corpus has no n-grams at all are
// left out of the geometric mean.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include "eager/text_pipeline.hpp"

namespace eager {

inline constexpr int kBleuOrder = 4;

struct BleuReport {
  double bleu = 0.0;
  std::array<double, kBleuOrder> precisions{};  // percentages
  std::array<long, kBleuOrder> matches{};
  std::array<long, kBleuOrder> totals{};
  double brevity_penalty = 1.0;
  long candidate_length = 0;
  long reference_length = 0;
};

/// mteval-v13a tokenization.
inline Sentence tokenize_13a(std::string line) {
  static const std::regex kSkipped("<skipped>");
  static const std::regex kDashNl("-\\n");
  static const std::regex kNl("\\n");
  static const std::regex kPunct(R"(([\x7B-\x7E\x5B-\x60\x20-\x26\x28-\x2B\x3A-\x40\x2F]))");
  static const std::regex kPeriodCommaUnlessPrecededByDigit(R"(([^0-9])([\.,]))");
  static const std::regex kPeriodCommaUnlessFollowedByDigit(R"(([\.,])([^0-9]))");
  static const std::regex kDashPrecededByDigit(R"(([0-9])(-))");
  line = std::regex_replace(line, kSkipped, "");
  line = std::regex_replace(line, kDashNl, "");
  line = std::regex_replace(line, kNl, " ");
  for (auto [from, to] : {std::pair{"&quot;", "\""}, {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}}) {
    std::string::size_type pos = 0;
    std::string f(from);
    while ((pos = line.find(f, pos)) != std::string::npos) {
      line.replace(pos, f.size(), to);
      pos += std::string(to).size();
    }
  }
  line = " " + line + " ";
  line = std::regex_replace(line, kPunct, " $1 ");
  line = std::regex_replace(line, kPeriodCommaUnlessPrecededByDigit, "$1 $2 ");
  line = std::regex_replace(line, kPeriodCommaUnlessFollowedByDigit, " $1 $2");
  line = std::regex_replace(line, kDashPrecededByDigit, "$1 $2 ");
  return split_words(line);
}

namespace detail {

inline std::map<Sentence, long> ngram_counts(const Sentence& toks, int n) {
  std::map<Sentence, long> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[Sentence(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

}  // namespace detail

/// Per-sentence sufficient statistics accumulated into `r`.
inline void add_bleu_stats(BleuReport& r, const Sentence& cand, const Sentence& ref) {
  r.candidate_length += static_cast<long>(cand.size());
  r.reference_length += static_cast<long>(ref.size());
  for (int n = 1; n <= kBleuOrder; ++n) {
    auto c = detail::ngram_counts(cand, n);
    auto rf = detail::ngram_counts(ref, n);
    for (const auto& [g, cnt] : c) {
      r.totals[n - 1] += cnt;
      auto it = rf.find(g);
      if (it != rf.end()) r.matches[n - 1] += std::min(cnt, it->second);
    }
  }
}

inline void finalize_bleu(BleuReport& r) {
  double log_sum = 0.0;
  int orders = 0;
  bool zero = false;
  for (int n = 0; n < kBleuOrder; ++n) {
    if (r.totals[n] == 0) {
      r.precisions[n] = 0.0;
      continue;
    }
    r.precisions[n] = 100.0 * static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]);
    if (r.matches[n] == 0) zero = true;
    else log_sum += std::log(static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]));
    ++orders;
  }
  if (r.candidate_length == 0) r.brevity_penalty = 0.0;
  else if (r.candidate_length < r.reference_length)
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.reference_length) / static_cast<double>(r.candidate_length));
  else r.brevity_penalty = 1.0;
  r.bleu = (zero || orders == 0) ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / orders);
}

inline BleuReport corpus_bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("corpus_bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                                std::to_string(references.size()) + " references");
  BleuReport r;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    add_bleu_stats(r, tokenize_13a(candidates[i]), tokenize_13a(references[i]));
  finalize_bleu(r);
  return r;
}

struct LengthBucket {
  std::size_t lo = 1;
  std::optional<std::size_t> hi;  // inclusive; none for the open-ended last bucket
  std::size_t sentences = 0;
  std::optional<BleuReport> report;  // absent when the bucket is empty

  std::string label() const {
    return std::to_string(lo) + (hi ? "-" + std::to_string(*hi) : "+");
  }
};

/// Buckets by whitespace token count of the source; `bounds` are inclusive
/// upper edges, e.g. {20, 40, 60, 80} gives 1-20, 21-40, 41-60, 61-80, 81+.
inline std::vector<LengthBucket> bleu_by_length(const std::vector<std::string>& candidates,
                                                const std::vector<std::string>& references,
                                                const std::vector<std::string>& sources,
                                                const std::vector<std::size_t>& bounds) {
  if (candidates.size() != references.size() || candidates.size() != sources.size())
    throw std::invalid_argument("bleu_by_length: list sizes differ");
  std::vector<LengthBucket> buckets;
  std::size_t lo = 1;
  for (auto b : bounds) {
    if (b < lo) throw std::invalid_argument("bleu_by_length: bucket bounds must increase");
    buckets.push_back({lo, b});
    lo = b + 1;
  }
  buckets.push_back({lo, std::nullopt});
  std::vector<std::vector<std::string>> cand(buckets.size()), ref(buckets.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::size_t len = split_words(sources[i]).size();
    std::size_t k = 0;
    while (buckets[k].hi && len > *buckets[k].hi) ++k;
    cand[k].push_back(candidates[i]);
    ref[k].push_back(references[i]);
  }
  for (std::size_t k = 0; k < buckets.size(); ++k) {
    buckets[k].sentences = cand[k].size();
    if (!cand[k].empty()) buckets[k].report = corpus_bleu(cand[k], ref[k]);
  }
  return buckets;
}

}  // namespace eager
