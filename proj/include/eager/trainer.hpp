#pragma once

// Plain SGD over aligned batches with global-norm clipping, a halve-on-plateau
// learning rate and patience-based stopping on validation perplexity.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eager/model.hpp"
#include "eager/stream_batcher.hpp"

namespace eager {

struct TrainConfig {
  double lr = 20.0;
  std::size_t batch_size = 32;
  std::size_t bptt = 32;
  std::size_t eval_every = 200;
  std::size_t patience_updates = 2000;
  double clip_norm = 0.25;
  std::uint64_t seed = 1;
  std::size_t max_updates = 0;  // 0: no cap
  double max_seconds = 0;       // 0: no wall-clock cap
  std::size_t eval_lanes = 8;

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("train: learning rate must be > 0");
    if (eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
    if (batch_size < 1 || bptt < 1) throw std::invalid_argument("train: batch size and bptt must be >= 1");
    if (!(clip_norm > 0)) throw std::invalid_argument("train: clip_norm must be > 0");
  }
};

/// Halves the rate whenever a validation score fails to strictly improve on
/// the best one seen.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(double lr) : lr_(lr) {}

  /// Returns true if `ppl` is a new best.
  bool observe(double ppl, std::size_t update) {
    if (ppl < best_) {
      best_ = ppl;
      best_update_ = update;
      return true;
    }
    lr_ /= 2;
    return false;
  }

  bool out_of_patience(std::size_t update, std::size_t patience) const { return update - best_update_ >= patience; }

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t best_update() const { return best_update_; }

 private:
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_update_ = 0;
};

template <typename T>
double grad_norm(const ParameterSet<T>& p) {
  double s = 0.0;
  for (const auto& prm : p.params())
    for (T g : prm.grad.flat()) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

/// Rescales gradients to global norm <= max_norm; returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParameterSet<T>& p, double max_norm) {
  double n = grad_norm(p);
  if (n > max_norm) {
    T f = static_cast<T>(max_norm / (n + 1e-12));
    for (auto& prm : p.params())
      for (T& g : prm.grad.flat()) g *= f;
  }
  return n;
}

template <typename T>
void sgd_step(ParameterSet<T>& p, double lr) {
  for (auto& prm : p.params()) kernels::axpy(static_cast<T>(-lr), prm.grad.data(), prm.value.data(), prm.value.size());
}

/// exp of the mean cross-entropy over the streams, ε positions included.
/// The streams are cut into `lanes` contiguous lanes, so the last
/// size % lanes positions are not scored.
template <typename T>
double perplexity(const ParameterSet<T>& p, const Streams& streams, std::size_t lanes, std::size_t bptt) {
  if (streams.size() == 0) throw std::invalid_argument("perplexity: empty stream");
  lanes = std::max<std::size_t>(1, std::min(lanes, streams.size()));
  const std::size_t lane_len = streams.size() / lanes;
  auto state = RecurrentState<T>::zeros(p.config(), lanes);
  double nll = 0.0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < lane_len; begin += bptt) {
    auto batch = slice_lanes(streams, lanes, lane_len, begin, std::min(bptt, lane_len - begin));
    auto loss = forward_batch<T>(p, state, batch);
    nll += loss.sum;
    count += loss.count;
  }
  return std::exp(nll / static_cast<double>(count));
}

struct TrainLogEntry {
  std::size_t update = 0;
  double train_loss = 0.0;
  double valid_ppl = 0.0;
  double lr = 0.0;
};

inline std::ostream& operator<<(std::ostream& os, const TrainLogEntry& e) {
  return os << e.update << '\t' << e.train_loss << '\t' << e.valid_ppl << '\t' << e.lr;
}

template <typename T>
struct TrainResult {
  ParameterSet<T> best;
  double best_ppl = std::numeric_limits<double>::infinity();
  std::size_t best_update = 0;
  std::size_t updates = 0;
  std::vector<TrainLogEntry> log;
  std::vector<double> batch_losses;
  bool diverged = false;
  std::string stop_reason;
};

/// Produces the training streams for a given epoch (rebuilt, and possibly
/// reshuffled, at every epoch boundary).
using EpochStreams = std::function<Streams(std::size_t epoch)>;
using LogSink = std::function<void(const TrainLogEntry&)>;

template <typename T>
TrainResult<T> train(ParameterSet<T> params, const EpochStreams& epoch_streams, const Streams& valid,
                     const TrainConfig& cfg, const LogSink& sink = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  PlateauSchedule schedule(cfg.lr);
  TrainResult<T> result;
  result.best = params;

  std::size_t epoch = 0;
  StreamBatcher batcher(epoch_streams(epoch), cfg.batch_size, cfg.bptt);
  if (batcher.batches_per_epoch() == 0) throw std::invalid_argument("train: stream too short for one batch");
  auto state = RecurrentState<T>::zeros(params.config(), cfg.batch_size);
  ForwardCache<T> cache;
  double window_loss = 0.0;
  std::size_t window = 0, update = 0;

  auto evaluate = [&]() {
    double ppl;
    try {
      ppl = perplexity(params, valid, cfg.eval_lanes, cfg.bptt);
    } catch (const NumericError&) {
      ppl = std::numeric_limits<double>::quiet_NaN();
    }
    TrainLogEntry e{update, window ? window_loss / window : 0.0, ppl, schedule.lr()};
    window_loss = 0.0;
    window = 0;
    result.log.push_back(e);
    if (sink) sink(e);
    if (!std::isfinite(ppl)) return false;
    if (schedule.observe(ppl, update)) {
      result.best = params;
      result.best_ppl = ppl;
      result.best_update = update;
    }
    return true;
  };

  for (;;) {
    auto batch = batcher.next_batch();
    if (!batch) {
      ++epoch;
      batcher = StreamBatcher(epoch_streams(epoch), cfg.batch_size, cfg.bptt);
      state = RecurrentState<T>::zeros(params.config(), cfg.batch_size);
      batch = batcher.next_batch();
      if (!batch) throw std::invalid_argument("train: stream too short for one batch");
    }

    params.zero_grad();
    BatchLoss loss;
    try {
      loss = forward_batch<T>(params, state, *batch, &cache, &rng);
    } catch (const NumericError&) {
      result.diverged = true;
      result.stop_reason = "non-finite training loss";
      break;
    }
    backward(params, cache);
    double norm = clip_grad_norm(params, cfg.clip_norm);
    if (!std::isfinite(norm)) {
      result.diverged = true;
      result.stop_reason = "non-finite gradient";
      break;
    }
    sgd_step(params, schedule.lr());
    ++update;
    result.batch_losses.push_back(loss.mean);
    window_loss += loss.mean;
    ++window;

    if (update % cfg.eval_every == 0) {
      if (!evaluate()) {
        result.diverged = true;
        result.stop_reason = "non-finite validation perplexity";
        break;
      }
      if (schedule.out_of_patience(update, cfg.patience_updates)) {
        result.stop_reason = "no improvement within patience";
        break;
      }
    }
    if (cfg.max_updates && update >= cfg.max_updates) {
      result.stop_reason = "update cap";
      break;
    }
    if (cfg.max_seconds > 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= cfg.max_seconds) {
      result.stop_reason = "time cap";
      break;
    }
  }
  if (!result.diverged && (result.log.empty() || result.log.back().update != update)) evaluate();
  result.updates = update;
  return result;
}

/// Convenience overload for a fixed stream (no reshuffling between epochs).
template <typename T>
TrainResult<T> train(ParameterSet<T> params, const Streams& streams, const Streams& valid, const TrainConfig& cfg,
                     const LogSink& sink = {}) {
  if (streams.size() == 0) throw std::invalid_argument("train: empty stream");
  return train<T>(std::move(params), [&](std::size_t) { return streams; }, valid, cfg, sink);
}

}  // namespace eager
