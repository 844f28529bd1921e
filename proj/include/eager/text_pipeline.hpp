#pragma once

// Tokenization, byte-pair encoding and the joint vocabulary.
//
// Subword convention: every non-final subword of a word carries the suffix
// "@@" ("dog" -> "d@@ o@@ g" with no merges). The convention is fixed and
// round-trips through join_subwords().

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace eager {

using TokenId = std::uint32_t;
using Sentence = std::vector<std::string>;

inline constexpr std::string_view kEpsToken = "@@EPS@@";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kContinuation = "@@";

inline constexpr TokenId kEpsId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kUnkId = 2;

// ---------------------------------------------------------------------------
// Tokenization

/// Splits on whitespace and isolates ASCII punctuation as separate tokens.
inline Sentence tokenize(std::string_view line) {
  Sentence out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  };
  for (char ch : line) {
    auto uc = static_cast<unsigned char>(ch);
    if (uc < 0x80 && std::isspace(uc)) {
      flush();
    } else if (uc < 0x80 && std::ispunct(uc)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

/// Whitespace-only split; used for text that is already tokenized.
inline Sentence split_words(std::string_view line) {
  Sentence out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const Sentence& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

inline bool is_continued(std::string_view tok) {
  return tok != kEpsToken && tok.size() > kContinuation.size() &&
         tok.substr(tok.size() - kContinuation.size()) == kContinuation;
}

/// Undoes subword segmentation: "d@@ o@@ g" -> "dog".
inline Sentence join_subwords(const Sentence& subwords) {
  Sentence words;
  std::string cur;
  bool open = false;
  for (const auto& sw : subwords) {
    if (is_continued(sw)) {
      cur += std::string_view(sw).substr(0, sw.size() - kContinuation.size());
      open = true;
    } else {
      cur += sw;
      words.push_back(std::move(cur));
      cur.clear();
      open = false;
    }
  }
  if (open) words.push_back(std::move(cur));
  return words;
}

/// Joins subwords and renders words as a single line, attaching closing
/// punctuation to the preceding word and opening brackets to the next one.
inline std::string detokenize(const Sentence& subwords) {
  static const std::string_view kAttachLeft = ".,!?;:%)]}";
  static const std::string_view kAttachRight = "([{";
  std::string out;
  bool glue_next = false;
  for (const auto& w : join_subwords(subwords)) {
    bool attach = w.size() == 1 && kAttachLeft.find(w[0]) != std::string_view::npos;
    if (!out.empty() && !attach && !glue_next) out += ' ';
    out += w;
    glue_next = w.size() == 1 && kAttachRight.find(w[0]) != std::string_view::npos;
  }
  return out;
}

// ---------------------------------------------------------------------------
// ε handling

template <typename Token>
std::vector<Token> strip_eps(const std::vector<Token>& tokens, const Token& eps) {
  std::vector<Token> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens)
    if (t != eps) out.push_back(t);
  return out;
}

inline Sentence strip_eps(const Sentence& tokens) {
  return strip_eps(tokens, std::string(kEpsToken));
}

inline std::vector<TokenId> strip_eps(const std::vector<TokenId>& tokens) {
  return strip_eps(tokens, kEpsId);
}

// ---------------------------------------------------------------------------
// BPE

/// Splits a UTF-8 word into code points; invalid bytes become single symbols.
inline std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    auto c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    if (i + len > word.size()) len = 1;
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

using SymbolPair = std::pair<std::string, std::string>;

struct BpeModel {
  std::vector<SymbolPair> merges;

  std::size_t num_operations() const { return merges.size(); }
};

/// Greedy merge learning over word frequencies. Merges never cross word
/// boundaries; ties on frequency go to the lexicographically smallest pair.
inline BpeModel learn_bpe(const std::vector<std::string>& corpus, std::size_t num_ops) {
  std::map<std::string, long> word_freq;
  for (const auto& line : corpus)
    for (auto& w : split_words(line)) ++word_freq[w];
  if (word_freq.empty()) throw std::invalid_argument("empty corpus");

  std::vector<std::vector<std::string>> words;
  std::vector<long> freqs;
  for (const auto& [w, f] : word_freq) {
    words.push_back(utf8_chars(w));
    freqs.push_back(f);
  }

  std::map<SymbolPair, long> pair_count;
  std::map<SymbolPair, std::set<std::size_t>> where;
  auto add_word = [&](std::size_t wi, long sign) {
    const auto& syms = words[wi];
    for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
      SymbolPair p{syms[k], syms[k + 1]};
      auto& cnt = pair_count[p];
      cnt += sign * freqs[wi];
      if (sign > 0) where[p].insert(wi);
      if (cnt == 0) pair_count.erase(p);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_word(wi, +1);

  BpeModel model;
  while (model.merges.size() < num_ops && !pair_count.empty()) {
    // std::map iterates pairs in lexicographic order, so the first maximum wins ties.
    auto best = pair_count.begin();
    for (auto it = pair_count.begin(); it != pair_count.end(); ++it)
      if (it->second > best->second) best = it;
    if (best->second <= 0) break;
    SymbolPair merge = best->first;
    model.merges.push_back(merge);

    auto affected = where[merge];
    for (std::size_t wi : affected) {
      add_word(wi, -1);
      auto& syms = words[wi];
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t k = 0; k < syms.size(); ++k) {
        if (k + 1 < syms.size() && syms[k] == merge.first && syms[k + 1] == merge.second) {
          next.push_back(syms[k] + syms[k + 1]);
          ++k;
        } else {
          next.push_back(syms[k]);
        }
      }
      syms = std::move(next);
      add_word(wi, +1);
    }
    where.erase(merge);
  }
  return model;
}

/// Applies a learned model; thread-safe over a const model.
class BpeSegmenter {
 public:
  explicit BpeSegmenter(BpeModel model) : model_(std::move(model)) {
    for (std::size_t r = 0; r < model_.merges.size(); ++r) rank_.emplace(model_.merges[r], r);
  }

  std::vector<std::string> segment_word(std::string_view word) const {
    auto syms = utf8_chars(word);
    while (syms.size() > 1) {
      std::size_t best_rank = rank_.size();
      for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
        auto it = rank_.find(SymbolPair{syms[k], syms[k + 1]});
        if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
      }
      if (best_rank == rank_.size()) break;
      const auto& [l, r] = model_.merges[best_rank];
      std::vector<std::string> next;
      for (std::size_t k = 0; k < syms.size(); ++k) {
        if (k + 1 < syms.size() && syms[k] == l && syms[k + 1] == r) {
          next.push_back(syms[k] + syms[k + 1]);
          ++k;
        } else {
          next.push_back(syms[k]);
        }
      }
      syms = std::move(next);
    }
    for (std::size_t k = 0; k + 1 < syms.size(); ++k) syms[k] += kContinuation;
    return syms;
  }

  Sentence apply(const Sentence& words) const {
    Sentence out;
    for (const auto& w : words) {
      auto sws = segment_word(w);
      out.insert(out.end(), std::make_move_iterator(sws.begin()), std::make_move_iterator(sws.end()));
    }
    return out;
  }

  const BpeModel& model() const { return model_; }

 private:
  BpeModel model_;
  std::map<SymbolPair, std::size_t> rank_;
};

inline Sentence apply_bpe(const BpeModel& model, const Sentence& words) {
  return BpeSegmenter(model).apply(words);
}

inline void save_bpe(const BpeModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [l, r] : model.merges) out << l << ' ' << r << '\n';
}

inline BpeModel load_bpe(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  BpeModel model;
  std::string line;
  while (std::getline(in, line)) {
    auto parts = split_words(line);
    if (parts.empty()) continue;
    if (parts.size() != 2) throw std::runtime_error("malformed merge line: " + line);
    model.merges.emplace_back(parts[0], parts[1]);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Vocabulary

/// Joint vocabulary shared by the source input, target input and output
/// layers. Ids 0..2 are always ε, EOS and UNK.
class Vocab {
 public:
  Vocab() {
    for (auto t : {kEpsToken, kEosToken, kUnkToken}) add(std::string(t));
  }

  /// Orders types by descending frequency, then lexicographically.
  static Vocab build(const std::vector<Sentence>& corpora) {
    std::map<std::string, long> freq;
    for (const auto& s : corpora)
      for (const auto& t : s)
        if (t != kEpsToken && t != kEosToken && t != kUnkToken) ++freq[t];
    std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab v;
    for (auto& [tok, f] : items) v.add(tok);
    return v;
  }

  TokenId id(const std::string& token) const {
    auto it = id_of_.find(token);
    return it == id_of_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& token) const { return id_of_.count(token) > 0; }

  const std::string& token(TokenId id) const {
    if (id >= token_of_.size()) throw std::out_of_range("token id out of range");
    return token_of_[id];
  }

  std::size_t size() const { return token_of_.size(); }

  std::vector<TokenId> encode(const Sentence& s) const {
    std::vector<TokenId> out;
    out.reserve(s.size());
    for (const auto& t : s) out.push_back(id(t));
    return out;
  }

  Sentence decode(const std::vector<TokenId>& ids) const {
    Sentence out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(token(i));
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& t : token_of_) out << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    Vocab v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      if (lineno < 3) {
        if (line != v.token_of_[lineno]) throw std::runtime_error("vocab file: bad reserved token on line " + std::to_string(lineno));
      } else {
        if (v.contains(line)) throw std::runtime_error("vocab file: duplicate token " + line);
        v.add(line);
      }
      ++lineno;
    }
    return v;
  }

 private:
  void add(std::string tok) {
    id_of_.emplace(tok, static_cast<TokenId>(token_of_.size()));
    token_of_.push_back(std::move(tok));
  }

  std::unordered_map<std::string, TokenId> id_of_;
  std::vector<std::string> token_of_;
};

}  // namespace eager
