#pragma once

// Minimal ε insertion that makes an aligned pair eager feasible: every
// target token linked to source position i sits at a target position >= i.

#include <algorithm>
#include <cstddef>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <vector>

#include "eager/aligner.hpp"
#include "eager/text_pipeline.hpp"

namespace eager {

template <typename Token>
struct EagerizeConfig {
  int start_pad = 0;  // b
  Token eps{};
};

template <typename Token>
struct EagerPair {
  std::vector<Token> src;
  std::vector<Token> tgt;
  int start_pad = 0;      // leading ε from initial padding
  int internal_eps = 0;   // ε inserted between target tokens
  int trailing_src = 0;   // equalization ε appended to the source
  int trailing_tgt = 0;   // equalization ε appended to the target
};

template <typename Token>
EagerPair<Token> make_feasible(const std::vector<Token>& src, const std::vector<Token>& tgt,
                               const Alignment& align, const EagerizeConfig<Token>& cfg) {
  if (cfg.start_pad < 0) throw std::invalid_argument("make_feasible: negative start padding");
  std::vector<int> link_of(tgt.size() + 1, 0);
  for (const auto& l : align) {
    if (l.tgt < 1 || static_cast<std::size_t>(l.tgt) > tgt.size() || l.src < 1 ||
        static_cast<std::size_t>(l.src) > src.size())
      throw std::invalid_argument("make_feasible: alignment link out of range");
    if (link_of[l.tgt] != 0) throw std::invalid_argument("make_feasible: target linked twice");
    link_of[l.tgt] = l.src;
  }

  EagerPair<Token> out;
  out.src = src;
  out.start_pad = cfg.start_pad;
  out.tgt.assign(static_cast<std::size_t>(cfg.start_pad), cfg.eps);
  for (std::size_t j = 1; j <= tgt.size(); ++j) {
    int pos = static_cast<int>(out.tgt.size()) + 1;
    if (int i = link_of[j]; i > pos) {
      out.tgt.insert(out.tgt.end(), static_cast<std::size_t>(i - pos), cfg.eps);
      out.internal_eps += i - pos;
    }
    out.tgt.push_back(tgt[j - 1]);
  }
  if (out.src.size() < out.tgt.size()) {
    out.trailing_src = static_cast<int>(out.tgt.size() - out.src.size());
    out.src.resize(out.tgt.size(), cfg.eps);
  } else if (out.tgt.size() < out.src.size()) {
    out.trailing_tgt = static_cast<int>(out.src.size() - out.tgt.size());
    out.tgt.resize(out.src.size(), cfg.eps);
  }
  return out;
}

/// Checks every link against the position its target token ended up at.
/// The k-th non-ε token of the transformed target is original token k.
template <typename Token>
bool verify_feasible(const EagerPair<Token>& pair, const Alignment& align, const Token& eps) {
  std::vector<int> position;
  for (std::size_t p = 0; p < pair.tgt.size(); ++p)
    if (pair.tgt[p] != eps) position.push_back(static_cast<int>(p) + 1);
  for (const auto& l : align) {
    if (l.tgt < 1 || static_cast<std::size_t>(l.tgt) > position.size()) return false;
    if (l.src > position[l.tgt - 1]) return false;
  }
  return pair.src.size() == pair.tgt.size();
}

/// Mean over sentences of internal ε / target length, where the length
/// excludes initial padding and trailing equalization ε.
template <typename Token>
double eps_stats(const std::vector<EagerPair<Token>>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("eps_stats: empty corpus");
  double sum = 0.0;
  for (const auto& p : corpus) {
    auto len = static_cast<double>(p.tgt.size()) - p.start_pad - p.trailing_tgt;
    if (len > 0) sum += p.internal_eps / len;
  }
  return sum / static_cast<double>(corpus.size());
}

/// Drops pairs whose transformed source grows beyond max_ratio times the
/// original source length; returns the indices that were kept.
template <typename Token>
std::vector<std::size_t> eagerize_corpus(const std::vector<std::vector<Token>>& src,
                                         const std::vector<std::vector<Token>>& tgt,
                                         const std::vector<Alignment>& align,
                                         const EagerizeConfig<Token>& cfg, double max_ratio,
                                         std::vector<EagerPair<Token>>& out) {
  if (src.size() != tgt.size() || src.size() != align.size())
    throw std::invalid_argument("eagerize_corpus: corpus and alignment sizes differ");
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < src.size(); ++k) {
    auto a = sanitize_alignment(align[k], static_cast<int>(src[k].size()), static_cast<int>(tgt[k].size()));
    auto pair = make_feasible(src[k], tgt[k], a, cfg);
    if (static_cast<double>(pair.src.size()) > max_ratio * static_cast<double>(std::max<std::size_t>(src[k].size(), 1))) {
      std::clog << "warning: dropping sentence " << k + 1 << " (length " << src[k].size() << " -> "
                << pair.src.size() << " after ε insertion)\n";
      continue;
    }
    out.push_back(std::move(pair));
    kept.push_back(k);
  }
  return kept;
}

}  // namespace eager
