#pragma once

// Desk-scale 2D ARO network: per-anchor tokens (r.x, r.y, |r|, d) are embedded, passed through
// pre-norm transformer encoder layers without positional encoding, mean-pooled, and decoded by a
// single linear unit with a logistic output. Gradients are exact reverse-mode, in 64-bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aro/field.hpp"
#include "aro/parallel.hpp"
#include "aro/rng.hpp"
#include "aro/shape2d.hpp"

namespace aro {

struct NetConfig {
  int in_dim = 4;
  int model_dim = 64;
  int heads = 4;
  int layers = 3;
  int ff_hidden = 128;

  void validate() const {
    if (in_dim < 1 || model_dim < 1 || heads < 1 || layers < 0 || ff_hidden < 1)
      throw Error("NetConfig: dimensions must be positive");
    if (model_dim % heads != 0) throw Error("NetConfig: model_dim must be divisible by heads");
  }
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Offsets of every tensor inside the flat parameter vector.
struct ParamLayout {
  struct Layer {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::size_t we = 0, be = 0;
  std::vector<Layer> layer;
  std::size_t lnf_g = 0, lnf_b = 0, wout = 0, bout = 0;
  std::size_t total = 0;

  explicit ParamLayout(const NetConfig& c) {
    c.validate();
    const auto d = static_cast<std::size_t>(c.model_dim), f = static_cast<std::size_t>(c.ff_hidden),
               in = static_cast<std::size_t>(c.in_dim);
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
      const std::size_t o = at;
      at += n;
      return o;
    };
    we = take(in * d);
    be = take(d);
    for (int l = 0; l < c.layers; ++l) {
      Layer L{};
      L.ln1_g = take(d), L.ln1_b = take(d);
      L.wq = take(d * d), L.bq = take(d);
      L.wk = take(d * d), L.bk = take(d);
      L.wv = take(d * d), L.bv = take(d);
      L.wo = take(d * d), L.bo = take(d);
      L.ln2_g = take(d), L.ln2_b = take(d);
      L.w1 = take(d * f), L.b1 = take(f);
      L.w2 = take(f * d), L.b2 = take(d);
      layer.push_back(L);
    }
    lnf_g = take(d);
    lnf_b = take(d);
    wout = take(d);
    bout = take(1);
    total = at;
  }
};

struct AttentionNetParams {
  NetConfig config;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

/// Xavier-uniform weights, zero biases, unit LayerNorm gains; deterministic per seed.
inline AttentionNetParams init_params(const NetConfig& cfg, std::uint64_t seed) {
  const ParamLayout L(cfg);
  AttentionNetParams p{cfg, std::vector<double>(L.total, 0.0)};
  Rng rng(seed);
  auto xavier = [&](std::size_t off, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) p.values[off + i] = rng.uniform(-a, a);
  };
  auto ones = [&](std::size_t off, std::size_t n) { std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(off), n, 1.0); };
  const auto d = static_cast<std::size_t>(cfg.model_dim), f = static_cast<std::size_t>(cfg.ff_hidden),
             in = static_cast<std::size_t>(cfg.in_dim);
  xavier(L.we, in, d);
  for (const auto& l : L.layer) {
    ones(l.ln1_g, d);
    xavier(l.wq, d, d);
    xavier(l.wk, d, d);
    xavier(l.wv, d, d);
    xavier(l.wo, d, d);
    ones(l.ln2_g, d);
    xavier(l.w1, d, f);
    xavier(l.w2, f, d);
  }
  ones(L.lnf_g, d);
  xavier(L.wout, d, 1);
  return p;
}

namespace nn_detail {

inline constexpr double kLayerNormEps = 1e-5;

// Y[T x m] = X[T x n] W[n x m] + b
inline void linear(const double* X, std::size_t T, std::size_t n, const double* W, const double* b, std::size_t m,
                   double* Y) {
  for (std::size_t t = 0; t < T; ++t) {
    double* y = Y + t * m;
    for (std::size_t j = 0; j < m; ++j) y[j] = b[j];
    for (std::size_t k = 0; k < n; ++k) {
      const double x = X[t * n + k];
      const double* w = W + k * m;
      for (std::size_t j = 0; j < m; ++j) y[j] += x * w[j];
    }
  }
}

// Accumulates dW += X^T dY and db += colsum(dY); if dX is non-null, dX (+)= dY W^T.
inline void linear_backward(const double* X, const double* dY, std::size_t T, std::size_t n, std::size_t m,
                            const double* W, double* dX, bool accumulate_dx, double* dW, double* db) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* dy = dY + t * m;
    for (std::size_t j = 0; j < m; ++j) db[j] += dy[j];
    for (std::size_t k = 0; k < n; ++k) {
      const double x = X[t * n + k];
      double* dw = dW + k * m;
      for (std::size_t j = 0; j < m; ++j) dw[j] += x * dy[j];
    }
    if (dX) {
      for (std::size_t k = 0; k < n; ++k) {
        const double* w = W + k * m;
        double s = 0;
        for (std::size_t j = 0; j < m; ++j) s += dy[j] * w[j];
        dX[t * n + k] = accumulate_dx ? dX[t * n + k] + s : s;
      }
    }
  }
}

inline void layer_norm(const double* X, std::size_t T, std::size_t d, const double* g, const double* b,
                       double* xhat, double* inv_sigma, double* Y) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = X + t * d;
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_sigma[t] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[t * d + j] = (x[j] - mean) * is;
      Y[t * d + j] = g[j] * xhat[t * d + j] + b[j];
    }
  }
}

// dX += LN backward of dY.
inline void layer_norm_backward(const double* dY, const double* xhat, const double* inv_sigma, const double* g,
                                std::size_t T, std::size_t d, double* dX, double* dg, double* db) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* dy = dY + t * d;
    const double* xh = xhat + t * d;
    double mean_dxh = 0, mean_dxh_xh = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dg[j] += dy[j] * xh[j];
      db[j] += dy[j];
      const double dxh = dy[j] * g[j];
      mean_dxh += dxh;
      mean_dxh_xh += dxh * xh[j];
    }
    mean_dxh /= static_cast<double>(d);
    mean_dxh_xh /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      dX[t * d + j] += inv_sigma[t] * (dy[j] * g[j] - mean_dxh - xh[j] * mean_dxh_xh);
  }
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

inline double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }
inline double gelu_grad(double u) {
  const double th = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

}  // namespace nn_detail

/// Forward activations kept for the backward pass.
struct ForwardTrace {
  struct Layer {
    std::vector<double> x_in, ln1_xhat, ln1_is, h1, q, k, v, attn, o, x_mid, ln2_xhat, ln2_is, h2, u, g;
  };
  std::size_t tokens = 0;
  std::vector<double> input;  // T x in_dim
  std::vector<Layer> layer;
  std::vector<double> x_out, lnf_xhat, lnf_is, z, pooled;
  double logit = 0;
  double prob = 0;
};

/// Logistic function kept strictly inside (0, 1): saturated logits would otherwise round to 0 or 1.
inline double sigmoid(double z) {
  const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(s, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

/// Runs the network on T token rows of `input` (T x in_dim, row-major).
inline ForwardTrace forward_tokens(const AttentionNetParams& params, const std::vector<double>& input) {
  using namespace nn_detail;
  const NetConfig& c = params.config;
  const ParamLayout L(c);
  const double* P = params.values.data();
  const auto d = static_cast<std::size_t>(c.model_dim), f = static_cast<std::size_t>(c.ff_hidden),
             in = static_cast<std::size_t>(c.in_dim), H = static_cast<std::size_t>(c.heads);
  const std::size_t dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (input.empty() || input.size() % in != 0) throw Error("forward: input is not a whole number of tokens");
  const std::size_t T = input.size() / in;

  ForwardTrace tr;
  tr.tokens = T;
  tr.input = input;
  std::vector<double> x(T * d);
  linear(input.data(), T, in, P + L.we, P + L.be, d, x.data());

  tr.layer.resize(static_cast<std::size_t>(c.layers));
  for (std::size_t li = 0; li < tr.layer.size(); ++li) {
    const auto& W = L.layer[li];
    auto& s = tr.layer[li];
    s.x_in = x;
    s.ln1_xhat.resize(T * d);
    s.ln1_is.resize(T);
    s.h1.resize(T * d);
    layer_norm(x.data(), T, d, P + W.ln1_g, P + W.ln1_b, s.ln1_xhat.data(), s.ln1_is.data(), s.h1.data());
    s.q.resize(T * d);
    s.k.resize(T * d);
    s.v.resize(T * d);
    linear(s.h1.data(), T, d, P + W.wq, P + W.bq, d, s.q.data());
    linear(s.h1.data(), T, d, P + W.wk, P + W.bk, d, s.k.data());
    linear(s.h1.data(), T, d, P + W.wv, P + W.bv, d, s.v.data());
    s.attn.assign(H * T * T, 0.0);
    s.o.assign(T * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        double* a = s.attn.data() + (h * T + i) * T;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < T; ++j) {
          double dotp = 0;
          for (std::size_t e = 0; e < dh; ++e) dotp += s.q[i * d + h * dh + e] * s.k[j * d + h * dh + e];
          a[j] = dotp * scale;
          mx = std::max(mx, a[j]);
        }
        double sum = 0;
        for (std::size_t j = 0; j < T; ++j) {
          a[j] = std::exp(a[j] - mx);
          sum += a[j];
        }
        for (std::size_t j = 0; j < T; ++j) a[j] /= sum;
        for (std::size_t j = 0; j < T; ++j)
          for (std::size_t e = 0; e < dh; ++e) s.o[i * d + h * dh + e] += a[j] * s.v[j * d + h * dh + e];
      }
    }
    std::vector<double> proj(T * d);
    linear(s.o.data(), T, d, P + W.wo, P + W.bo, d, proj.data());
    s.x_mid.resize(T * d);
    for (std::size_t i = 0; i < T * d; ++i) s.x_mid[i] = x[i] + proj[i];

    s.ln2_xhat.resize(T * d);
    s.ln2_is.resize(T);
    s.h2.resize(T * d);
    layer_norm(s.x_mid.data(), T, d, P + W.ln2_g, P + W.ln2_b, s.ln2_xhat.data(), s.ln2_is.data(), s.h2.data());
    s.u.resize(T * f);
    linear(s.h2.data(), T, d, P + W.w1, P + W.b1, f, s.u.data());
    s.g.resize(T * f);
    for (std::size_t i = 0; i < T * f; ++i) s.g[i] = gelu(s.u[i]);
    std::vector<double> ff(T * d);
    linear(s.g.data(), T, f, P + W.w2, P + W.b2, d, ff.data());
    for (std::size_t i = 0; i < T * d; ++i) x[i] = s.x_mid[i] + ff[i];
  }

  tr.x_out = x;
  tr.lnf_xhat.resize(T * d);
  tr.lnf_is.resize(T);
  tr.z.resize(T * d);
  layer_norm(x.data(), T, d, P + L.lnf_g, P + L.lnf_b, tr.lnf_xhat.data(), tr.lnf_is.data(), tr.z.data());
  tr.pooled.assign(d, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < d; ++j) tr.pooled[j] += tr.z[t * d + j];
  for (auto& v : tr.pooled) v /= static_cast<double>(T);
  double logit = P[L.bout];
  for (std::size_t j = 0; j < d; ++j) logit += tr.pooled[j] * P[L.wout + j];
  tr.logit = logit;
  tr.prob = sigmoid(logit);
  return tr;
}

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logit).
inline void backward(const AttentionNetParams& params, const ForwardTrace& tr, double dlogit,
                     std::vector<double>& grad) {
  using namespace nn_detail;
  const NetConfig& c = params.config;
  const ParamLayout L(c);
  const double* P = params.values.data();
  double* G = grad.data();
  const auto d = static_cast<std::size_t>(c.model_dim), f = static_cast<std::size_t>(c.ff_hidden),
             in = static_cast<std::size_t>(c.in_dim), H = static_cast<std::size_t>(c.heads);
  const std::size_t dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t T = tr.tokens;

  G[L.bout] += dlogit;
  std::vector<double> dz(T * d);
  for (std::size_t j = 0; j < d; ++j) {
    G[L.wout + j] += dlogit * tr.pooled[j];
    const double dp = dlogit * P[L.wout + j] / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) dz[t * d + j] = dp;
  }
  std::vector<double> dx(T * d, 0.0);
  layer_norm_backward(dz.data(), tr.lnf_xhat.data(), tr.lnf_is.data(), P + L.lnf_g, T, d, dx.data(), G + L.lnf_g,
                      G + L.lnf_b);

  std::vector<double> dmid(T * d), dg(T * f), du(T * f), dh2(T * d), dO(T * d), dq(T * d), dk(T * d), dv(T * d),
      dh1(T * d), da(T);
  for (std::size_t li = tr.layer.size(); li-- > 0;) {
    const auto& W = L.layer[li];
    const auto& s = tr.layer[li];
    // x_out = x_mid + gelu(h2 W1 + b1) W2 + b2
    dmid = dx;
    linear_backward(s.g.data(), dx.data(), T, f, d, P + W.w2, dg.data(), false, G + W.w2, G + W.b2);
    for (std::size_t i = 0; i < T * f; ++i) du[i] = dg[i] * gelu_grad(s.u[i]);
    linear_backward(s.h2.data(), du.data(), T, d, f, P + W.w1, dh2.data(), false, G + W.w1, G + W.b1);
    layer_norm_backward(dh2.data(), s.ln2_xhat.data(), s.ln2_is.data(), P + W.ln2_g, T, d, dmid.data(),
                        G + W.ln2_g, G + W.ln2_b);

    // x_mid = x_in + attn(h1) Wo + bo
    dx = dmid;
    linear_backward(s.o.data(), dmid.data(), T, d, d, P + W.wo, dO.data(), false, G + W.wo, G + W.bo);
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        const double* a = s.attn.data() + (h * T + i) * T;
        double row = 0;
        for (std::size_t j = 0; j < T; ++j) {
          double acc = 0;
          for (std::size_t e = 0; e < dh; ++e) {
            acc += dO[i * d + h * dh + e] * s.v[j * d + h * dh + e];
            dv[j * d + h * dh + e] += a[j] * dO[i * d + h * dh + e];
          }
          da[j] = acc;
          row += acc * a[j];
        }
        for (std::size_t j = 0; j < T; ++j) {
          const double ds = a[j] * (da[j] - row) * scale;
          for (std::size_t e = 0; e < dh; ++e) {
            dq[i * d + h * dh + e] += ds * s.k[j * d + h * dh + e];
            dk[j * d + h * dh + e] += ds * s.q[i * d + h * dh + e];
          }
        }
      }
    }
    linear_backward(s.h1.data(), dq.data(), T, d, d, P + W.wq, dh1.data(), false, G + W.wq, G + W.bq);
    linear_backward(s.h1.data(), dk.data(), T, d, d, P + W.wk, dh1.data(), true, G + W.wk, G + W.bk);
    linear_backward(s.h1.data(), dv.data(), T, d, d, P + W.wv, dh1.data(), true, G + W.wv, G + W.bv);
    layer_norm_backward(dh1.data(), s.ln1_xhat.data(), s.ln1_is.data(), P + W.ln1_g, T, d, dx.data(), G + W.ln1_g,
                        G + W.ln1_b);
  }
  linear_backward(tr.input.data(), dx.data(), T, in, d, P + L.we, nullptr, false, G + L.we, G + L.be);
}

/// Token rows (r.x, r.y, |r|, d) for the anchors kept by `active` (all anchors if empty optional).
inline std::vector<double> token_input(const std::vector<AroFeature2D>& features,
                                       const std::optional<std::vector<std::size_t>>& active) {
  std::vector<double> rows;
  auto push = [&](const AroFeature2D& f) {
    rows.insert(rows.end(), {f.r.x, f.r.y, f.r_norm, f.d});
  };
  if (!active) {
    for (const auto& f : features) push(f);
  } else {
    if (active->empty()) throw Error("forward: active anchor mask is empty");
    for (auto id : *active) {
      if (id >= features.size()) throw Error("forward: active anchor id out of range");
      push(features[id]);
    }
  }
  return rows;
}

/// Occupancy probability for one query. Masked-out anchors are removed from the token set.
inline double forward(const AttentionNetParams& params, const std::vector<AroFeature2D>& features,
                      const std::optional<std::vector<std::size_t>>& active = std::nullopt) {
  if (params.config.in_dim != 4) throw Error("forward: 2D features need in_dim = 4");
  return forward_tokens(params, token_input(features, active)).prob;
}

inline constexpr double kProbClamp = 1e-7;

/// Binary cross-entropy of a probability against a {0, 1} label, with the probability clamped.
inline double bce(double prob, int label) {
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return label ? -std::log(p) : -std::log(1.0 - p);
}

struct TrainingExample {
  std::vector<double> tokens;  // T x in_dim
  int label = 0;
};

struct LossAndGradient {
  double loss = 0;
  std::vector<double> grad;
};

/// Mean BCE over the batch and its exact gradient. Per-example gradients are summed in fixed
/// chunks and the chunk sums are added in order, so the result is independent of thread count.
inline LossAndGradient loss_and_gradients(const AttentionNetParams& params, const std::vector<TrainingExample>& data,
                                          const std::vector<std::size_t>& batch) {
  if (batch.empty()) throw Error("loss_and_gradients: empty batch");
  constexpr std::size_t kChunk = 8;
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(chunks);
  std::vector<double> partial_loss(chunks, 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  parallel_for(chunks, [&](std::size_t ch) {
    auto& g = partial[ch];
    g.assign(params.size(), 0.0);
    for (std::size_t b = ch * kChunk; b < std::min(batch.size(), (ch + 1) * kChunk); ++b) {
      const auto& ex = data[batch[b]];
      const ForwardTrace tr = forward_tokens(params, ex.tokens);
      partial_loss[ch] += bce(tr.prob, ex.label);
      // d BCE / d logit = p - y, zero where the clamp is active.
      const bool clamped = tr.prob < kProbClamp || tr.prob > 1.0 - kProbClamp;
      const double dlogit = clamped ? 0.0 : (tr.prob - static_cast<double>(ex.label)) * inv_n;
      if (dlogit != 0.0) backward(params, tr, dlogit, g);
    }
  });
  LossAndGradient out{0.0, std::vector<double>(params.size(), 0.0)};
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    out.loss += partial_loss[ch];
    for (std::size_t i = 0; i < params.size(); ++i) out.grad[i] += partial[ch][i];
  }
  out.loss *= inv_n;
  return out;
}

struct TrainConfig {
  double learning_rate = 3e-4;
  double decay_factor = 0.5;
  int decay_every = 100;  // epochs
  std::size_t batch_size = 64;
  int epochs = 300;
  std::uint64_t seed = 1;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0) || !(decay_factor > 0) || decay_every < 1) throw Error("TrainConfig: rates must be positive");
    if (epochs < 1) throw Error("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
  }

  /// Step schedule: learning_rate * decay_factor^(floor(epoch / decay_every)), epoch 0-based.
  double learning_rate_at(int epoch) const {
    return learning_rate * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
  }
};

inline std::vector<TrainingExample> make_examples(const Shape2D& shape, const std::vector<Vec2>& anchors,
                                                  const std::vector<Sample2D>& samples, const Box2D& box = {}) {
  std::vector<TrainingExample> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    out[i] = {token_input(features_2d(shape, anchors, samples[i].x, box), std::nullopt), samples[i].label};
  });
  return out;
}

struct TrainResult {
  AttentionNetParams params;
  std::vector<double> epoch_loss;  // mean training BCE per epoch (during the epoch's updates)
};

/// Adam on mean BCE with a step-decayed learning rate. Deterministic given the data and seed.
inline TrainResult train(const std::vector<TrainingExample>& data, const NetConfig& net, const TrainConfig& cfg,
                         const std::function<void(int, double, double)>& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw Error("train: empty dataset");
  TrainResult result{init_params(net, derive_seed(cfg.seed, 1)), {}};
  auto& p = result.params.values;
  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0);
  Rng shuffler(derive_seed(cfg.seed, 2));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffler.below(i)]);
    const double lr = cfg.learning_rate_at(epoch);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
      const auto lg = loss_and_gradients(result.params, data, batch);
      if (!std::isfinite(lg.loss)) throw Error("train: loss diverged (NaN/Inf) at epoch " + std::to_string(epoch));
      loss_sum += lg.loss * static_cast<double>(batch.size());
      seen += batch.size();
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = lg.grad[i];
        m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(seen);
    if (!std::isfinite(epoch_loss)) throw Error("train: loss diverged (NaN/Inf) at epoch " + std::to_string(epoch));
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss, lr);
  }
  return result;
}

/// Pixel-centre grid over the box: value (i, j) sits at min + ((i + 0.5) / res) * extent.
inline Grid2D pixel_grid(int res, const Box2D& box = {}) {
  const Vec2 s{(box.max.x - box.min.x) / res, (box.max.y - box.min.y) / res};
  return Grid2D(res, res, {box.min.x + 0.5 * s.x, box.min.y + 0.5 * s.y}, s);
}

/// Per-pixel occupancy probabilities from the network, optionally restricted to some anchors.
inline Grid2D reconstruct_image(const AttentionNetParams& params, const Shape2D& shape, const std::vector<Vec2>& anchors,
                                int res, const std::optional<std::vector<std::size_t>>& active = std::nullopt,
                                const Box2D& box = {}) {
  Grid2D img = pixel_grid(res, box);
  parallel_for(img.values.size(), [&](std::size_t idx) {
    const int i = static_cast<int>(idx % static_cast<std::size_t>(res));
    const int j = static_cast<int>(idx / static_cast<std::size_t>(res));
    img.values[idx] = forward(params, features_2d(shape, anchors, img.point(i, j), box), active);
  });
  return img;
}

/// Activation map: the image produced when only one anchor's observation is kept.
inline Grid2D anchor_activation_map(const AttentionNetParams& params, const Shape2D& shape,
                                    const std::vector<Vec2>& anchors, std::size_t anchor_id, int res,
                                    const Box2D& box = {}) {
  if (anchor_id >= anchors.size()) throw Error("anchor_activation_map: anchor id out of range");
  return reconstruct_image(params, shape, anchors, res, std::vector<std::size_t>{anchor_id}, box);
}

/// Ground-truth rasterization at pixel centres (1 inside, 0 outside).
inline Grid2D rasterize_shape(const Shape2D& shape, int res, const Box2D& box = {}) {
  Grid2D img = pixel_grid(res, box);
  for (int j = 0; j < res; ++j)
    for (int i = 0; i < res; ++i) img.at(i, j) = shape.contains(img.point(i, j)) ? 1.0 : 0.0;
  return img;
}

// Parameter file: ASCII header lines
//   ARO-NET2D v1
//   config <in_dim> <model_dim> <heads> <layers> <ff_hidden>
//   count <n>
// followed by n little-endian float64 values.
inline void write_params(std::ostream& os, const AttentionNetParams& p) {
  const auto& c = p.config;
  os << "ARO-NET2D v1\nconfig " << c.in_dim << ' ' << c.model_dim << ' ' << c.heads << ' ' << c.layers << ' '
     << c.ff_hidden << "\ncount " << p.values.size() << '\n';
  for (double v : p.values) write_le(os, v);
}

inline AttentionNetParams read_params(std::istream& is) {
  std::string line, tag;
  if (!std::getline(is, line) || line != "ARO-NET2D v1") throw Error("params: bad magic line");
  AttentionNetParams p;
  auto& c = p.config;
  if (!std::getline(is, line)) throw Error("params: missing config");
  {
    std::istringstream ls(line);
    if (!(ls >> tag >> c.in_dim >> c.model_dim >> c.heads >> c.layers >> c.ff_hidden) || tag != "config")
      throw Error("params: malformed config line");
  }
  std::size_t n = 0;
  if (!std::getline(is, line)) throw Error("params: missing count");
  {
    std::istringstream ls(line);
    if (!(ls >> tag >> n) || tag != "count") throw Error("params: malformed count line");
  }
  if (ParamLayout(c).total != n) throw Error("params: count does not match config");
  p.values.resize(n);
  for (auto& v : p.values) {
    v = read_le<double>(is);
    if (!std::isfinite(v)) throw Error("params: non-finite value");
  }
  return p;
}

inline void save_params(const std::string& path, const AttentionNetParams& p) {
  auto os = io_detail::open_out(path, true);
  write_params(os, p);
}

inline AttentionNetParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_params(is);
}

}  // namespace aro
