#pragma once

// Lexical-translation word aligner trained with EM under a diagonal
// positional prior (IBM model 1 reparameterized the way fast_align does it).
// Each target token is explained by at most one source token or by NULL.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "eager/text_pipeline.hpp"

namespace eager {

/// Source id used for the NULL slot.
inline constexpr TokenId kNullSource = std::numeric_limits<TokenId>::max();

struct SentencePair {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;
};

/// One alignment link, 1-based on both sides.
struct Link {
  int src = 0;
  int tgt = 0;
  friend bool operator==(const Link&, const Link&) = default;
  friend auto operator<=>(const Link&, const Link&) = default;
};

/// Links sorted by target index; at most one link per target index.
using Alignment = std::vector<Link>;

struct AlignerConfig {
  int iterations = 5;
  double tension = 4.0;
  double null_prob = 0.08;
};

/// Normalized positional prior over source positions 1..m for target
/// position j of n, proportional to exp(-tension * |i/m - j/n|).
inline std::vector<double> diagonal_prior(int j, int m, int n, double tension) {
  std::vector<double> p(static_cast<std::size_t>(m));
  double best = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= m; ++i) {
    double d = std::abs(static_cast<double>(i) / m - static_cast<double>(j) / n);
    p[i - 1] = d;
    best = std::min(best, d);
  }
  double z = 0.0;
  for (auto& v : p) {
    // shift by the minimum distance so the largest term is exp(0)
    v = tension == 0.0 ? 1.0 : std::exp(-tension * (v - best));
    z += v;
  }
  for (auto& v : p) v /= z;
  return p;
}

class LexTable {
 public:
  LexTable() = default;
  LexTable(double tension, double null_prob) : tension_(tension), null_prob_(null_prob) {}

  /// t(target | source); 0 for pairs never seen together.
  double prob(TokenId src, TokenId tgt) const {
    auto it = table_.find(key(src, tgt));
    return it == table_.end() ? 0.0 : it->second;
  }

  double tension() const { return tension_; }
  double null_prob() const { return null_prob_; }

  /// Sum of t(. | src) over every target; 1 for every source seen in training.
  double row_sum(TokenId src) const {
    double s = 0.0;
    for (const auto& [k, v] : table_)
      if (static_cast<TokenId>(k >> 32) == src) s += v;
    return s;
  }

  std::vector<TokenId> sources() const {
    std::vector<TokenId> out;
    for (const auto& [k, v] : table_) out.push_back(static_cast<TokenId>(k >> 32));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void set(TokenId src, TokenId tgt, double p) { table_[key(src, tgt)] = p; }
  std::unordered_map<std::uint64_t, double>& raw() { return table_; }
  const std::unordered_map<std::uint64_t, double>& raw() const { return table_; }

  static std::uint64_t key(TokenId src, TokenId tgt) {
    return (static_cast<std::uint64_t>(src) << 32) | tgt;
  }

 private:
  double tension_ = 4.0;
  double null_prob_ = 0.08;
  std::unordered_map<std::uint64_t, double> table_;
};

/// Probability of target position j under the mixture (NULL + prior-weighted sources).
inline double target_likelihood(const LexTable& t, const SentencePair& pair, int j,
                                const std::vector<double>& prior) {
  TokenId f = pair.tgt[j - 1];
  double p = t.null_prob() * t.prob(kNullSource, f);
  for (std::size_t i = 0; i < pair.src.size(); ++i)
    p += (1.0 - t.null_prob()) * prior[i] * t.prob(pair.src[i], f);
  return p;
}

inline double corpus_log_likelihood(const LexTable& t, const std::vector<SentencePair>& corpus) {
  double ll = 0.0;
  for (const auto& pair : corpus) {
    int m = static_cast<int>(pair.src.size()), n = static_cast<int>(pair.tgt.size());
    for (int j = 1; j <= n; ++j)
      ll += std::log(target_likelihood(t, pair, j, diagonal_prior(j, m, n, t.tension())));
  }
  return ll;
}

/// Called once per EM iteration with the log-likelihood of the parameters
/// entering that iteration (i.e. before its M-step).
using EmObserver = std::function<void(int iteration, double log_likelihood)>;

/// Expected-count EM. The prior is fixed, so only t(.|.) is re-estimated and
/// the data log-likelihood is non-decreasing.
inline LexTable em_train(const std::vector<SentencePair>& corpus, const AlignerConfig& cfg,
                         const EmObserver& observer = {}) {
  if (corpus.empty()) throw std::invalid_argument("em_train: empty corpus");
  if (cfg.iterations < 1) throw std::invalid_argument("em_train: iterations must be >= 1");
  for (const auto& p : corpus)
    if (p.src.empty() || p.tgt.empty()) throw std::invalid_argument("em_train: empty sentence");

  // Uniform initialization over co-occurring targets.
  LexTable t(cfg.tension, cfg.null_prob);
  {
    std::unordered_map<std::uint64_t, char> seen;
    std::unordered_map<TokenId, double> fanout;
    auto touch = [&](TokenId e, TokenId f) {
      if (seen.emplace(LexTable::key(e, f), 1).second) fanout[e] += 1.0;
    };
    for (const auto& pair : corpus)
      for (TokenId f : pair.tgt) {
        touch(kNullSource, f);
        for (TokenId e : pair.src) touch(e, f);
      }
    for (const auto& [k, v] : seen) t.set(static_cast<TokenId>(k >> 32), static_cast<TokenId>(k & 0xffffffffu),
                                          1.0 / fanout[static_cast<TokenId>(k >> 32)]);
  }

  std::vector<double> post;
  for (int it = 0; it < cfg.iterations; ++it) {
    std::unordered_map<std::uint64_t, double> counts;
    std::unordered_map<TokenId, double> totals;
    double ll = 0.0;
    for (const auto& pair : corpus) {
      int m = static_cast<int>(pair.src.size()), n = static_cast<int>(pair.tgt.size());
      post.assign(static_cast<std::size_t>(m) + 1, 0.0);
      for (int j = 1; j <= n; ++j) {
        TokenId f = pair.tgt[j - 1];
        auto prior = diagonal_prior(j, m, n, cfg.tension);
        post[0] = cfg.null_prob * t.prob(kNullSource, f);
        double z = post[0];
        for (int i = 1; i <= m; ++i) {
          post[i] = (1.0 - cfg.null_prob) * prior[i - 1] * t.prob(pair.src[i - 1], f);
          z += post[i];
        }
        ll += std::log(z);
        for (int i = 0; i <= m; ++i) {
          TokenId e = i == 0 ? kNullSource : pair.src[i - 1];
          double c = post[i] / z;
          counts[LexTable::key(e, f)] += c;
          totals[e] += c;
        }
      }
    }
    if (observer) observer(it, ll);
    for (auto& [k, v] : t.raw()) {
      auto c = counts.find(k);
      v = c == counts.end() ? 0.0 : c->second / totals[static_cast<TokenId>(k >> 32)];
    }
  }
  return t;
}

/// Per-target argmax over NULL and every source position; NULL or an
/// all-zero score leaves the target position unlinked.
inline Alignment viterbi_align(const LexTable& t, const SentencePair& pair) {
  Alignment out;
  int m = static_cast<int>(pair.src.size()), n = static_cast<int>(pair.tgt.size());
  for (int j = 1; j <= n; ++j) {
    TokenId f = pair.tgt[j - 1];
    auto prior = diagonal_prior(j, m, n, t.tension());
    double best = t.null_prob() * t.prob(kNullSource, f);
    int best_i = 0;
    for (int i = 1; i <= m; ++i) {
      double s = (1.0 - t.null_prob()) * prior[i - 1] * t.prob(pair.src[i - 1], f);
      if (s > best) {
        best = s;
        best_i = i;
      }
    }
    if (best_i > 0 && best > 0.0) out.push_back({best_i, j});
  }
  return out;
}

// Pharaoh format: "i-j" pairs, 0-based in the file.

inline std::string format_alignment(const Alignment& a) {
  std::string out;
  for (const auto& l : a) {
    if (!out.empty()) out += ' ';
    out += std::to_string(l.src - 1) + '-' + std::to_string(l.tgt - 1);
  }
  return out;
}

inline Alignment parse_alignment(const std::string& line) {
  Alignment a;
  std::istringstream is(line);
  std::string item;
  while (is >> item) {
    auto dash = item.find('-');
    if (dash == std::string::npos) throw std::runtime_error("malformed alignment link: " + item);
    try {
      a.push_back({std::stoi(item.substr(0, dash)) + 1, std::stoi(item.substr(dash + 1)) + 1});
    } catch (const std::logic_error&) {
      throw std::runtime_error("malformed alignment link: " + item);
    }
  }
  std::sort(a.begin(), a.end(), [](const Link& x, const Link& y) { return x.tgt < y.tgt; });
  return a;
}

/// Keeps the first link per target index and drops out-of-range links.
inline Alignment sanitize_alignment(Alignment a, int m, int n) {
  std::sort(a.begin(), a.end(), [](const Link& x, const Link& y) {
    return x.tgt != y.tgt ? x.tgt < y.tgt : x.src < y.src;
  });
  Alignment out;
  for (const auto& l : a) {
    if (l.src < 1 || l.src > m || l.tgt < 1 || l.tgt > n) continue;
    if (!out.empty() && out.back().tgt == l.tgt) continue;
    out.push_back(l);
  }
  return out;
}

inline std::vector<Alignment> read_alignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<Alignment> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(parse_alignment(line));
  return out;
}

}  // namespace eager
