#pragma once

// Aligned batching: eagerized pairs are concatenated into one source and one
// target stream, split into contiguous lanes and served BPTT columns at a time.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "eager/eagerize.hpp"
#include "eager/random.hpp"
#include "eager/text_pipeline.hpp"

namespace eager {

struct Streams {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;

  std::size_t size() const { return src.size(); }
};

/// Sentences in order, each followed by EOS on both sides.
inline Streams build_streams(const std::vector<EagerPair<TokenId>>& corpus) {
  Streams s;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& p = corpus[k];
    if (p.src.size() != p.tgt.size())
      throw std::invalid_argument("build_streams: pair " + std::to_string(k) + " has unequal lengths");
    s.src.insert(s.src.end(), p.src.begin(), p.src.end());
    s.tgt.insert(s.tgt.end(), p.tgt.begin(), p.tgt.end());
    s.src.push_back(kEosId);
    s.tgt.push_back(kEosId);
  }
  return s;
}

/// Deterministic Fisher-Yates shuffle of sentence pairs.
template <typename T>
void shuffle_pairs(std::vector<T>& items, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
}

/// Row-major [lanes x bptt] token blocks.
struct StreamBatch {
  std::size_t lanes = 0;
  std::size_t bptt = 0;
  std::vector<TokenId> src_in;
  std::vector<TokenId> tgt_prev;
  std::vector<TokenId> tgt_out;
  bool is_continuation = false;

  TokenId src(std::size_t lane, std::size_t t) const { return src_in[lane * bptt + t]; }
  TokenId prev(std::size_t lane, std::size_t t) const { return tgt_prev[lane * bptt + t]; }
  TokenId out(std::size_t lane, std::size_t t) const { return tgt_out[lane * bptt + t]; }
};

/// Extracts columns [begin, begin + len) from every lane of length lane_len.
inline StreamBatch slice_lanes(const Streams& s, std::size_t lanes, std::size_t lane_len,
                               std::size_t begin, std::size_t len) {
  StreamBatch b;
  b.lanes = lanes;
  b.bptt = len;
  b.src_in.resize(lanes * len);
  b.tgt_prev.resize(lanes * len);
  b.tgt_out.resize(lanes * len);
  for (std::size_t r = 0; r < lanes; ++r) {
    std::size_t base = r * lane_len;
    for (std::size_t t = 0; t < len; ++t) {
      std::size_t k = begin + t;
      b.src_in[r * len + t] = s.src[base + k];
      b.tgt_out[r * len + t] = s.tgt[base + k];
      b.tgt_prev[r * len + t] = k == 0 ? kEosId : s.tgt[base + k - 1];
    }
  }
  b.is_continuation = begin > 0;
  return b;
}

/// Single-owner cursor over one epoch of batches. The trailing remainder of
/// each lane shorter than bptt is never served.
class StreamBatcher {
 public:
  StreamBatcher(Streams streams, std::size_t batch_size, std::size_t bptt)
      : streams_(std::move(streams)), lanes_(batch_size), bptt_(bptt) {
    if (batch_size < 1 || bptt < 1) throw std::invalid_argument("batch size and bptt must be >= 1");
    if (streams_.src.size() != streams_.tgt.size()) throw std::invalid_argument("streams differ in length");
    lane_len_ = streams_.size() / lanes_;
  }

  /// Next batch, or nullopt at the end of the epoch (the cursor then resets).
  std::optional<StreamBatch> next_batch() {
    if (cursor_ + bptt_ > lane_len_) {
      cursor_ = 0;
      return std::nullopt;
    }
    auto b = slice_lanes(streams_, lanes_, lane_len_, cursor_, bptt_);
    cursor_ += bptt_;
    return b;
  }

  std::size_t batches_per_epoch() const { return lane_len_ / bptt_; }
  std::size_t lane_length() const { return lane_len_; }
  std::size_t lanes() const { return lanes_; }
  std::size_t bptt() const { return bptt_; }
  const Streams& streams() const { return streams_; }

 private:
  Streams streams_;
  std::size_t lanes_;
  std::size_t bptt_;
  std::size_t lane_len_ = 0;
  std::size_t cursor_ = 0;
};

}  // namespace eager
