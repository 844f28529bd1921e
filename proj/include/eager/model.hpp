#pragma once

// The eager translation network: at every step the source token and the
// previous target token are embedded with one shared matrix, concatenated,
// run through a stack of LSTM layers with 2E units, projected back to E and
// scored against the same embedding matrix.
//
// LSTM gate blocks are laid out [input | forget | cell | output] along the
// columns of each layer's weight matrix, whose rows are [x ; h_prev].

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eager/random.hpp"
#include "eager/stream_batcher.hpp"
#include "eager/tensor.hpp"
#include "eager/text_pipeline.hpp"

namespace eager {

struct ModelConfig {
  std::size_t embed_dim = 64;  // E
  std::size_t layers = 2;
  std::size_t vocab_size = 0;
  double dropout_embed = 0.0;
  double dropout_hidden = 0.0;
  bool tied = true;  // untied only exists to test gradient accumulation

  std::size_t hidden() const { return 2 * embed_dim; }

  void validate() const {
    if (embed_dim == 0) throw std::invalid_argument("model: embedding dim must be > 0");
    if (layers == 0) throw std::invalid_argument("model: need at least one LSTM layer");
    if (vocab_size < 3) throw std::invalid_argument("model: vocabulary must hold the reserved tokens");
    if (dropout_embed < 0 || dropout_embed >= 1 || dropout_hidden < 0 || dropout_hidden >= 1)
      throw std::invalid_argument("model: dropout rates must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EmbeddingRole { source, target, output };

template <typename T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
};

template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;

  explicit ParameterSet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const std::size_t E = cfg.embed_dim, H = cfg.hidden(), V = cfg.vocab_size;
    add("embedding", V, E);
    if (!cfg.tied) {
      add("embedding.target", V, E);
      add("embedding.output", V, E);
    }
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      add("lstm." + std::to_string(l) + ".weight", 2 * E + H, 4 * H);
      add("lstm." + std::to_string(l) + ".bias", 1, 4 * H);
    }
    add("proj.weight", H, E);
    add("proj.bias", 1, E);
    add("output.bias", 1, V);
  }

  /// Uniform in [-scale, scale]; forget-gate biases start at 1.
  void init_uniform(Rng& rng, double scale = 0.1) {
    for (auto& p : params_)
      for (auto& v : p.value.flat()) v = static_cast<T>(rng.uniform(-scale, scale));
    const std::size_t H = cfg_.hidden();
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      auto& b = lstm_bias(l);
      for (std::size_t k = 0; k < 4 * H; ++k) b[k] = (k >= H && k < 2 * H) ? T(1) : T(0);
    }
    proj_bias().fill(T(0));
    output_bias().fill(T(0));
  }

  const ModelConfig& config() const { return cfg_; }

  Matrix<T>& embedding(EmbeddingRole role = EmbeddingRole::source) { return params_[role_index(role)].value; }
  const Matrix<T>& embedding(EmbeddingRole role = EmbeddingRole::source) const {
    return params_[role_index(role)].value;
  }
  Matrix<T>& embedding_grad(EmbeddingRole role = EmbeddingRole::source) { return params_[role_index(role)].grad; }

  Matrix<T>& lstm_weight(std::size_t l) { return params_[layer_base() + 2 * l].value; }
  const Matrix<T>& lstm_weight(std::size_t l) const { return params_[layer_base() + 2 * l].value; }
  Matrix<T>& lstm_weight_grad(std::size_t l) { return params_[layer_base() + 2 * l].grad; }
  Matrix<T>& lstm_bias(std::size_t l) { return params_[layer_base() + 2 * l + 1].value; }
  const Matrix<T>& lstm_bias(std::size_t l) const { return params_[layer_base() + 2 * l + 1].value; }
  Matrix<T>& lstm_bias_grad(std::size_t l) { return params_[layer_base() + 2 * l + 1].grad; }

  Matrix<T>& proj_weight() { return params_[tail_base()].value; }
  const Matrix<T>& proj_weight() const { return params_[tail_base()].value; }
  Matrix<T>& proj_weight_grad() { return params_[tail_base()].grad; }
  Matrix<T>& proj_bias() { return params_[tail_base() + 1].value; }
  const Matrix<T>& proj_bias() const { return params_[tail_base() + 1].value; }
  Matrix<T>& proj_bias_grad() { return params_[tail_base() + 1].grad; }
  Matrix<T>& output_bias() { return params_[tail_base() + 2].value; }
  const Matrix<T>& output_bias() const { return params_[tail_base() + 2].value; }
  Matrix<T>& output_bias_grad() { return params_[tail_base() + 2].grad; }

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  void add(std::string name, std::size_t r, std::size_t c) {
    params_.push_back({std::move(name), Matrix<T>(r, c), Matrix<T>(r, c)});
  }
  std::size_t role_index(EmbeddingRole role) const {
    if (cfg_.tied) return 0;
    return static_cast<std::size_t>(role);
  }
  std::size_t layer_base() const { return cfg_.tied ? 1 : 3; }
  std::size_t tail_base() const { return layer_base() + 2 * cfg_.layers; }

  ModelConfig cfg_;
  std::vector<Param<T>> params_;
};

/// Per-layer hidden and cell vectors for `rows` independent streams.
template <typename T>
struct RecurrentState {
  std::vector<Matrix<T>> h;
  std::vector<Matrix<T>> c;

  static RecurrentState zeros(const ModelConfig& cfg, std::size_t rows) {
    RecurrentState s;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      s.h.emplace_back(rows, cfg.hidden());
      s.c.emplace_back(rows, cfg.hidden());
    }
    return s;
  }

  std::size_t rows() const { return h.empty() ? 0 : h[0].rows(); }

  /// New state made of the given rows, in order.
  RecurrentState select(std::span<const std::size_t> idx) const {
    RecurrentState s;
    for (std::size_t l = 0; l < h.size(); ++l) {
      Matrix<T> nh(idx.size(), h[l].cols()), nc(idx.size(), c[l].cols());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy(h[l].row(idx[r]).begin(), h[l].row(idx[r]).end(), nh.row(r).begin());
        std::copy(c[l].row(idx[r]).begin(), c[l].row(idx[r]).end(), nc.row(r).begin());
      }
      s.h.push_back(std::move(nh));
      s.c.push_back(std::move(nc));
    }
    return s;
  }

  bool finite() const {
    for (std::size_t l = 0; l < h.size(); ++l) {
      for (T v : h[l].flat())
        if (!std::isfinite(v)) return false;
      for (T v : c[l].flat())
        if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const RecurrentState&, const RecurrentState&) = default;
};

// ---------------------------------------------------------------------------
// Dropout

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise 1/(1-rate).
template <typename T>
std::vector<T> dropout_mask(std::size_t n, double rate, Rng& rng) {
  if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  std::vector<T> m(n, T(1));
  if (rate == 0) return m;
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& v : m) v = rng.uniform() < rate ? T(0) : keep;
  return m;
}

template <typename T>
void apply_dropout(std::span<T> values, double rate, Rng& rng) {
  auto m = dropout_mask<T>(values.size(), rate, rng);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] *= m[i];
}

/// Masks sampled once per batch: embedding rows per token id, and one
/// [lanes x 2E] mask per LSTM layer output shared by every time step.
template <typename T>
struct DropoutMasks {
  std::vector<T> embed;
  std::vector<Matrix<T>> hidden;

  static DropoutMasks sample(const ModelConfig& cfg, std::size_t lanes, Rng& rng) {
    DropoutMasks m;
    if (cfg.dropout_embed > 0) m.embed = dropout_mask<T>(cfg.vocab_size, cfg.dropout_embed, rng);
    if (cfg.dropout_hidden > 0)
      for (std::size_t l = 0; l < cfg.layers; ++l) {
        Matrix<T> mk(lanes, cfg.hidden());
        auto v = dropout_mask<T>(mk.size(), cfg.dropout_hidden, rng);
        std::copy(v.begin(), v.end(), mk.data());
        m.hidden.push_back(std::move(mk));
      }
    return m;
  }
};

// ---------------------------------------------------------------------------
// Forward

/// Activations of one time step, kept for the backward pass.
template <typename T>
struct StepCache {
  std::vector<Matrix<T>> input;      // per layer: [x ; h_prev]
  std::vector<Matrix<T>> gates;      // per layer: activated i, f, g, o
  std::vector<Matrix<T>> cell_prev;  // per layer
  std::vector<Matrix<T>> cell;       // per layer
  Matrix<T> top;                     // last layer output after dropout
  Matrix<T> proj;                    // fully connected output, size E
  Matrix<T> probs;                   // softmax over the vocabulary
};

namespace detail {

template <typename T>
void check_token(TokenId tok, std::size_t vocab) {
  if (tok >= vocab)
    throw std::out_of_range("token id " + std::to_string(tok) + " outside vocabulary of size " + std::to_string(vocab));
}

/// One time step for `rows` streams; writes logits and advances the state.
template <typename T>
void step(const ParameterSet<T>& p, RecurrentState<T>& st, std::span<const TokenId> src,
          std::span<const TokenId> prev, const DropoutMasks<T>* masks, StepCache<T>* cache,
          Matrix<T>& logits) {
  const auto& cfg = p.config();
  const std::size_t E = cfg.embed_dim, H = cfg.hidden(), V = cfg.vocab_size, B = src.size();
  const std::size_t in = 2 * E, width = in + H;
  const bool drop_embed = masks && !masks->embed.empty();
  const bool drop_hidden = masks && !masks->hidden.empty();

  Matrix<T> x(B, in);
  const auto& emb_s = p.embedding(EmbeddingRole::source);
  const auto& emb_t = p.embedding(EmbeddingRole::target);
  for (std::size_t b = 0; b < B; ++b) {
    check_token<T>(src[b], V);
    check_token<T>(prev[b], V);
    T ms = drop_embed ? masks->embed[src[b]] : T(1);
    T mt = drop_embed ? masks->embed[prev[b]] : T(1);
    for (std::size_t k = 0; k < E; ++k) {
      x(b, k) = emb_s(src[b], k) * ms;
      x(b, E + k) = emb_t(prev[b], k) * mt;
    }
  }

  if (cache) {
    cache->input.clear();
    cache->gates.clear();
    cache->cell_prev.clear();
    cache->cell.clear();
  }
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Matrix<T> inp(B, width);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy(x.row(b).begin(), x.row(b).end(), inp.row(b).begin());
      std::copy(st.h[l].row(b).begin(), st.h[l].row(b).end(), inp.row(b).begin() + in);
    }
    Matrix<T> a(B, 4 * H);
    const auto& bias = p.lstm_bias(l);
    for (std::size_t b = 0; b < B; ++b) std::copy(bias.data(), bias.data() + 4 * H, a.row(b).begin());
    kernels::gemm_nn(B, 4 * H, width, inp.data(), width, p.lstm_weight(l).data(), a.data());

    Matrix<T> cell_prev = st.c[l];
    Matrix<T> hx(B, H);
    for (std::size_t b = 0; b < B; ++b) {
      T* g = a.row(b).data();
      for (std::size_t k = 0; k < H; ++k) {
        T i = kernels::sigmoid(g[k]);
        T f = kernels::sigmoid(g[H + k]);
        T c_in = std::tanh(g[2 * H + k]);
        T o = kernels::sigmoid(g[3 * H + k]);
        g[k] = i;
        g[H + k] = f;
        g[2 * H + k] = c_in;
        g[3 * H + k] = o;
        T c = f * cell_prev(b, k) + i * c_in;
        st.c[l](b, k) = c;
        T h = o * std::tanh(c);
        st.h[l](b, k) = h;
        hx(b, k) = drop_hidden ? h * masks->hidden[l](b, k) : h;
      }
    }
    if (cache) {
      cache->input.push_back(std::move(inp));
      cache->gates.push_back(std::move(a));
      cache->cell_prev.push_back(std::move(cell_prev));
      cache->cell.push_back(st.c[l]);
    }
    x = std::move(hx);
  }

  Matrix<T> z(B, E);
  for (std::size_t b = 0; b < B; ++b) std::copy(p.proj_bias().data(), p.proj_bias().data() + E, z.row(b).begin());
  kernels::gemm_nn(B, E, H, x.data(), H, p.proj_weight().data(), z.data());

  logits.resize(B, V);
  for (std::size_t b = 0; b < B; ++b)
    std::copy(p.output_bias().data(), p.output_bias().data() + V, logits.row(b).begin());
  kernels::gemm_nt(B, E, V, z.data(), p.embedding(EmbeddingRole::output).data(), logits.data(), V);

  if (cache) {
    cache->top = std::move(x);
    cache->proj = std::move(z);
  }
}

}  // namespace detail

/// Logits for a batch of independent streams in inference mode.
template <typename T>
Matrix<T> forward_step_batch(const ParameterSet<T>& p, RecurrentState<T>& state, std::span<const TokenId> src,
                             std::span<const TokenId> prev) {
  if (src.size() != prev.size() || src.size() != state.rows())
    throw std::invalid_argument("forward_step_batch: row count mismatch");
  Matrix<T> logits;
  detail::step<T>(p, state, src, prev, nullptr, nullptr, logits);
  return logits;
}

/// One step for one stream. Dropout applies only when `rng` is given and
/// the configuration has nonzero rates.
template <typename T>
std::vector<T> forward_step(const ParameterSet<T>& p, RecurrentState<T>& state, TokenId src, TokenId prev,
                            Rng* rng = nullptr) {
  if (state.rows() != 1) throw std::invalid_argument("forward_step: state must hold exactly one row");
  Matrix<T> logits;
  DropoutMasks<T> masks;
  if (rng) masks = DropoutMasks<T>::sample(p.config(), 1, *rng);
  detail::step<T>(p, state, std::span<const TokenId>(&src, 1), std::span<const TokenId>(&prev, 1),
                  rng ? &masks : nullptr, nullptr, logits);
  return {logits.data(), logits.data() + logits.size()};
}

template <typename T>
struct ForwardCache {
  StreamBatch batch;
  DropoutMasks<T> masks;
  bool dropout = false;
  std::vector<StepCache<T>> steps;
};

struct BatchLoss {
  double mean = 0.0;    // mean cross-entropy per position
  double sum = 0.0;     // total negative log-likelihood
  std::size_t count = 0;
};

/// Teacher-forced pass over a batch; every position (ε included) counts the
/// same. `state` enters as the carried-over state and leaves as the final
/// one. With a cache the activations needed by backward() are recorded; an
/// rng enables dropout.
template <typename T>
BatchLoss forward_batch(const ParameterSet<T>& p, RecurrentState<T>& state, const StreamBatch& batch,
                        ForwardCache<T>* cache = nullptr, Rng* rng = nullptr) {
  const std::size_t B = batch.lanes, Tn = batch.bptt, V = p.config().vocab_size;
  if (state.rows() != B) throw std::invalid_argument("forward_batch: state rows != lanes");
  DropoutMasks<T> masks;
  if (rng) masks = DropoutMasks<T>::sample(p.config(), B, *rng);
  if (cache) {
    cache->batch = batch;
    cache->masks = masks;
    cache->dropout = rng != nullptr;
    cache->steps.assign(Tn, {});
  }

  std::vector<TokenId> src(B), prev(B);
  Matrix<T> logits;
  StepCache<T> scratch;
  double nll = 0.0;
  for (std::size_t t = 0; t < Tn; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      src[b] = batch.src(b, t);
      prev[b] = batch.prev(b, t);
    }
    StepCache<T>* sc = cache ? &cache->steps[t] : nullptr;
    detail::step<T>(p, state, src, prev, rng ? &masks : nullptr, sc, logits);
    for (std::size_t b = 0; b < B; ++b) {
      auto row = logits.row(b);
      kernels::log_softmax(row);
      TokenId y = batch.out(b, t);
      detail::check_token<T>(y, V);
      nll -= static_cast<double>(row[y]);
    }
    if (sc) {
      for (auto& v : logits.flat()) v = std::exp(v);
      sc->probs = logits;
    }
  }
  BatchLoss loss{nll / static_cast<double>(B * Tn), nll, B * Tn};
  if (!std::isfinite(loss.mean)) {
    std::ostringstream os;
    os << "non-finite loss " << loss.mean << " over " << B << "x" << Tn << " batch"
       << (state.finite() ? "" : "; recurrent state contains non-finite values");
    throw NumericError(os.str());
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Backward

/// Accumulates d(mean loss)/d(theta) into the gradient buffers. Gradients do
/// not flow into the state the batch started from.
template <typename T>
void backward(ParameterSet<T>& p, const ForwardCache<T>& cache) {
  const auto& cfg = p.config();
  const auto& batch = cache.batch;
  const std::size_t E = cfg.embed_dim, H = cfg.hidden(), V = cfg.vocab_size, L = cfg.layers;
  const std::size_t B = batch.lanes, Tn = batch.bptt, in = 2 * E, width = in + H;
  const T scale = T(1) / static_cast<T>(B * Tn);
  const bool drop_embed = cache.dropout && !cache.masks.embed.empty();
  const bool drop_hidden = cache.dropout && !cache.masks.hidden.empty();

  std::vector<Matrix<T>> dh_next(L, Matrix<T>(B, H)), dc_next(L, Matrix<T>(B, H));
  Matrix<T> dlogits, dz(B, E), dx(B, H), da(B, 4 * H), dinp(B, width);

  auto colsum_into = [](const Matrix<T>& m, Matrix<T>& out) {
    for (std::size_t r = 0; r < m.rows(); ++r) kernels::axpy(T(1), m.row(r).data(), out.data(), m.cols());
  };

  for (std::size_t t = Tn; t-- > 0;) {
    const auto& sc = cache.steps[t];
    dlogits = sc.probs;
    for (std::size_t b = 0; b < B; ++b) dlogits(b, batch.out(b, t)) -= T(1);
    for (auto& v : dlogits.flat()) v *= scale;

    colsum_into(dlogits, p.output_bias_grad());
    kernels::gemm_tn(B, E, V, dlogits.data(), V, sc.proj.data(), p.embedding_grad(EmbeddingRole::output).data());
    dz.fill(T(0));
    kernels::gemm_nn(B, E, V, dlogits.data(), V, p.embedding(EmbeddingRole::output).data(), dz.data());

    colsum_into(dz, p.proj_bias_grad());
    kernels::gemm_tn(B, E, H, sc.top.data(), H, dz.data(), p.proj_weight_grad().data());
    dx.resize(B, H);
    kernels::gemm_nt(B, E, H, dz.data(), p.proj_weight().data(), dx.data(), H);

    for (std::size_t l = L; l-- > 0;) {
      const auto& g = sc.gates[l];
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t k = 0; k < H; ++k) {
          T dh = (drop_hidden ? dx(b, k) * cache.masks.hidden[l](b, k) : dx(b, k)) + dh_next[l](b, k);
          T i = g(b, k), f = g(b, H + k), c_in = g(b, 2 * H + k), o = g(b, 3 * H + k);
          T tc = std::tanh(sc.cell[l](b, k));
          T dc = dh * o * (T(1) - tc * tc) + dc_next[l](b, k);
          dc_next[l](b, k) = dc * f;
          da(b, k) = dc * c_in * i * (T(1) - i);
          da(b, H + k) = dc * sc.cell_prev[l](b, k) * f * (T(1) - f);
          da(b, 2 * H + k) = dc * i * (T(1) - c_in * c_in);
          da(b, 3 * H + k) = dh * tc * o * (T(1) - o);
        }
      }
      kernels::gemm_tn(B, 4 * H, width, sc.input[l].data(), width, da.data(), p.lstm_weight_grad(l).data());
      colsum_into(da, p.lstm_bias_grad(l));
      dinp.fill(T(0));
      kernels::gemm_nt(B, 4 * H, width, da.data(), p.lstm_weight(l).data(), dinp.data(), width);

      std::size_t xw = l == 0 ? in : H;
      dx.resize(B, xw);
      for (std::size_t b = 0; b < B; ++b) {
        std::copy(dinp.row(b).begin(), dinp.row(b).begin() + xw, dx.row(b).begin());
        std::copy(dinp.row(b).begin() + in, dinp.row(b).end(), dh_next[l].row(b).begin());
      }
    }

    auto& gs = p.embedding_grad(EmbeddingRole::source);
    auto& gt = p.embedding_grad(EmbeddingRole::target);
    for (std::size_t b = 0; b < B; ++b) {
      TokenId s = batch.src(b, t), y = batch.prev(b, t);
      T ms = drop_embed ? cache.masks.embed[s] : T(1);
      T mt = drop_embed ? cache.masks.embed[y] : T(1);
      kernels::axpy(ms, dx.row(b).data(), gs.row(s).data(), E);
      kernels::axpy(mt, dx.row(b).data() + E, gt.row(y).data(), E);
    }
  }
}

}  // namespace eager
