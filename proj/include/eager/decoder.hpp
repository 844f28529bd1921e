#pragma once

// Beam search for the eager model. Every step feeds one input token (the
// next source token, an injected ε before the source EOS, or ε once the
// source is exhausted) and emits one output token.
//
// Output constraints per step:
//   * the first `start_pad` outputs are forced to ε;
//   * ε is removed from the distribution once `padding_limit` non-initial ε
//     have been emitted;
//   * EOS is removed until the source EOS has been read;
//   * when no input remains after the current one, the output is forced to EOS.
// Forced tokens are scored with their (renormalized) model log-probability.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <vector>

#include "eager/model.hpp"
#include "eager/text_pipeline.hpp"

namespace eager {

struct DecodeConfig {
  std::size_t beam_size = 5;
  int padding_limit = 5;
  int spi = 0;            // max ε injected on the input side before the source EOS
  int start_pad = 0;      // forced initial ε outputs
  int max_extra_steps = 5;

  void validate() const {
    if (beam_size < 1) throw std::invalid_argument("decode: beam size must be >= 1");
    if (padding_limit < 0 || spi < 0 || start_pad < 0 || max_extra_steps < 0)
      throw std::invalid_argument("decode: limits must be >= 0");
  }
};

template <typename T>
struct BeamHypothesis {
  std::vector<TokenId> tokens;  // emitted outputs, EOS excluded
  std::vector<TokenId> inputs;  // inputs consumed so far
  double logprob = 0.0;
  RecurrentState<T> state;
  int eps_used = 0;
  int spi_used = 0;
  std::size_t src_pos = 0;  // source content tokens consumed
  bool eos_read = false;
  int extra_steps = 0;
  bool finished = false;

  TokenId last_output() const { return tokens.empty() ? kEosId : tokens.back(); }
};

/// Input choices available to a live hypothesis, fewest injections first.
template <typename T>
std::vector<TokenId> input_options(const BeamHypothesis<T>& h, const std::vector<TokenId>& src,
                                   const DecodeConfig& cfg) {
  if (h.src_pos < src.size()) return {src[h.src_pos]};
  if (!h.eos_read) {
    if (h.spi_used < cfg.spi) return {kEosId, kEpsId};
    return {kEosId};
  }
  if (h.extra_steps < cfg.max_extra_steps) return {kEpsId};
  return {};
}

/// Hypothesis after consuming `input` (outputs not yet applied).
template <typename T>
BeamHypothesis<T> advance_input(const BeamHypothesis<T>& h, TokenId input, const std::vector<TokenId>& src) {
  BeamHypothesis<T> n;
  n.tokens = h.tokens;
  n.inputs = h.inputs;
  n.inputs.push_back(input);
  n.logprob = h.logprob;
  n.eps_used = h.eps_used;
  n.spi_used = h.spi_used;
  n.src_pos = h.src_pos;
  n.eos_read = h.eos_read;
  n.extra_steps = h.extra_steps;
  if (h.src_pos < src.size()) ++n.src_pos;
  else if (!h.eos_read) {
    if (input == kEosId) n.eos_read = true;
    else ++n.spi_used;
  } else {
    ++n.extra_steps;
  }
  return n;
}

struct Successor {
  TokenId token = 0;
  double logprob = 0.0;  // log-probability of `token` under the masked distribution
};

/// Allowed outputs with their masked, renormalized log-probabilities for a
/// hypothesis that has already consumed its input for this step.
template <typename T>
std::vector<Successor> allowed_outputs(std::span<const T> logits, const BeamHypothesis<T>& after,
                                       const std::vector<TokenId>& src, const DecodeConfig& cfg) {
  const std::size_t V = logits.size();
  const bool forced_pad = after.tokens.size() < static_cast<std::size_t>(cfg.start_pad);
  const bool last = input_options(after, src, cfg).empty();
  const bool eps_masked = !forced_pad && after.eps_used >= cfg.padding_limit;
  const bool eos_masked = !after.eos_read;

  auto allowed = [&](std::size_t v) {
    if (v == kEpsId && eps_masked) return false;
    if (v == kEosId && eos_masked) return false;
    return true;
  };
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < V; ++v)
    if (allowed(v)) mx = std::max(mx, static_cast<double>(logits[v]));
  double z = 0.0;
  for (std::size_t v = 0; v < V; ++v)
    if (allowed(v)) z += std::exp(static_cast<double>(logits[v]) - mx);
  const double lse = mx + std::log(z);

  std::vector<Successor> out;
  if (last) {
    out.push_back({kEosId, static_cast<double>(logits[kEosId]) - lse});
  } else if (forced_pad) {
    out.push_back({kEpsId, static_cast<double>(logits[kEpsId]) - lse});
  } else {
    for (std::size_t v = 0; v < V; ++v)
      if (allowed(v)) out.push_back({static_cast<TokenId>(v), static_cast<double>(logits[v]) - lse});
  }
  return out;
}

/// Applies an output token to a hypothesis that has consumed its input.
template <typename T>
BeamHypothesis<T> emit(BeamHypothesis<T> h, const Successor& s, const DecodeConfig& cfg) {
  const bool forced_pad = h.tokens.size() < static_cast<std::size_t>(cfg.start_pad);
  h.logprob += s.logprob;
  if (s.token == kEosId) {
    h.finished = true;
  } else {
    if (s.token == kEpsId && !forced_pad) ++h.eps_used;
    h.tokens.push_back(s.token);
  }
  return h;
}

namespace detail {

template <typename T>
struct Candidate {
  std::size_t row = 0;  // index into the expanded (hypothesis, input) rows
  Successor succ;
  int spi_used = 0;
};

// Higher score first; ties go to the lower token id, then fewer injections,
// then the earlier row.
template <typename T>
bool candidate_before(const Candidate<T>& a, double sa, const Candidate<T>& b, double sb) {
  if (sa != sb) return sa > sb;
  if (a.succ.token != b.succ.token) return a.succ.token < b.succ.token;
  if (a.spi_used != b.spi_used) return a.spi_used < b.spi_used;
  return a.row < b.row;
}

}  // namespace detail

/// Successors of one hypothesis for a given input, best first, at most
/// beam_size of them.
template <typename T>
std::vector<BeamHypothesis<T>> step_hypothesis(const ParameterSet<T>& p, const BeamHypothesis<T>& h, TokenId input,
                                               const std::vector<TokenId>& src, const DecodeConfig& cfg) {
  if (h.finished) throw std::invalid_argument("step_hypothesis: hypothesis already finished");
  auto after = advance_input(h, input, src);
  after.state = h.state;
  auto logits = forward_step<T>(p, after.state, input, h.last_output());
  auto succ = allowed_outputs<T>(std::span<const T>(logits), after, src, cfg);
  std::stable_sort(succ.begin(), succ.end(), [](const Successor& a, const Successor& b) {
    return a.logprob != b.logprob ? a.logprob > b.logprob : a.token < b.token;
  });
  if (succ.size() > cfg.beam_size) succ.resize(cfg.beam_size);
  std::vector<BeamHypothesis<T>> out;
  for (const auto& s : succ) out.push_back(emit(after, s, cfg));
  return out;
}

template <typename T>
struct DecodeResult {
  std::vector<TokenId> raw;     // emitted tokens including ε, EOS excluded
  std::vector<TokenId> output;  // raw with ε removed
  std::vector<TokenId> inputs;  // consumed input tokens
  double logprob = 0.0;
  bool finished = false;
  int eps_used = 0;
  int spi_used = 0;
};

template <typename T>
DecodeResult<T> beam_search(const ParameterSet<T>& p, const std::vector<TokenId>& src, const DecodeConfig& cfg) {
  cfg.validate();
  if (src.empty()) throw std::invalid_argument("translate: empty source");
  for (auto t : src)
    if (t >= p.config().vocab_size) throw std::out_of_range("translate: source token outside vocabulary");

  using Hyp = BeamHypothesis<T>;
  std::vector<Hyp> live(1);
  live[0].state = RecurrentState<T>::zeros(p.config(), 1);
  std::vector<Hyp> done;
  const std::size_t cap = src.size() + 1 + static_cast<std::size_t>(cfg.spi + cfg.max_extra_steps);

  for (std::size_t step = 0; step < cap && !live.empty(); ++step) {
    std::vector<Hyp> rows;
    std::vector<std::size_t> parent;
    for (std::size_t hi = 0; hi < live.size(); ++hi)
      for (TokenId in : input_options(live[hi], src, cfg)) {
        rows.push_back(advance_input(live[hi], in, src));
        parent.push_back(hi);
      }
    if (rows.empty()) break;

    std::vector<TokenId> ins(rows.size()), prevs(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      ins[r] = rows[r].inputs.back();
      prevs[r] = live[parent[r]].last_output();
    }
    std::vector<std::size_t> idx(parent.begin(), parent.end());
    RecurrentState<T> batch_state;
    {
      RecurrentState<T> all = RecurrentState<T>::zeros(p.config(), live.size());
      for (std::size_t l = 0; l < p.config().layers; ++l)
        for (std::size_t hi = 0; hi < live.size(); ++hi) {
          std::copy(live[hi].state.h[l].row(0).begin(), live[hi].state.h[l].row(0).end(), all.h[l].row(hi).begin());
          std::copy(live[hi].state.c[l].row(0).begin(), live[hi].state.c[l].row(0).end(), all.c[l].row(hi).begin());
        }
      batch_state = all.select(idx);
    }
    auto logits = forward_step_batch<T>(p, batch_state, ins, prevs);

    std::vector<detail::Candidate<T>> cands;
    std::vector<double> scores;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto succ = allowed_outputs<T>(logits.row(r), rows[r], src, cfg);
      for (const auto& s : succ) {
        cands.push_back({r, s, rows[r].spi_used});
        scores.push_back(rows[r].logprob + s.logprob);
      }
    }
    std::vector<std::size_t> order(cands.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return detail::candidate_before(cands[a], scores[a], cands[b], scores[b]);
    });
    if (order.size() > cfg.beam_size) order.resize(cfg.beam_size);

    std::vector<Hyp> next;
    for (std::size_t k : order) {
      const auto& c = cands[k];
      Hyp h = emit(rows[c.row], c.succ, cfg);
      std::size_t one = c.row;
      h.state = batch_state.select(std::span<const std::size_t>(&one, 1));
      if (h.finished) done.push_back(std::move(h));
      else next.push_back(std::move(h));
    }
    live = std::move(next);

    if (done.size() >= cfg.beam_size) break;
    if (!done.empty() && !live.empty()) {
      double best_done = -std::numeric_limits<double>::infinity();
      for (const auto& d : done) best_done = std::max(best_done, d.logprob);
      // Scores only decrease along a path, so no live hypothesis can overtake.
      if (std::all_of(live.begin(), live.end(), [&](const Hyp& h) { return h.logprob < best_done; })) break;
    }
  }

  const std::vector<Hyp>& pool = done.empty() ? live : done;
  if (pool.empty()) throw std::logic_error("beam search produced no hypotheses");
  if (done.empty()) std::clog << "warning: no hypothesis finished within the step cap; returning best unfinished\n";
  const Hyp* best = &pool[0];
  for (const auto& h : pool)
    if (h.logprob > best->logprob) best = &h;

  DecodeResult<T> r;
  r.raw = best->tokens;
  r.output = strip_eps(best->tokens);
  r.inputs = best->inputs;
  r.logprob = best->logprob;
  r.finished = best->finished;
  r.eps_used = best->eps_used;
  r.spi_used = best->spi_used;
  return r;
}

/// Decodes and returns the ε-free output tokens.
template <typename T>
std::vector<TokenId> translate(const ParameterSet<T>& p, const std::vector<TokenId>& src, const DecodeConfig& cfg) {
  return beam_search(p, src, cfg).output;
}

}  // namespace eager
