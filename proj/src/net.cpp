#include "bgaug/net.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "bgaug/errors.hpp"

namespace bgaug {

ParamLayout make_layout(const EncoderConfig& cfg) {
  ParamLayout l{};
  std::size_t off = 0;
  const int chans[4] = {cfg.in_channels, cfg.c1, cfg.c2, cfg.c3};
  for (int i = 0; i < 3; ++i) {
    l.conv_w[i] = off;
    off += static_cast<std::size_t>(chans[i + 1]) * chans[i] * 9;
    l.conv_b[i] = off;
    off += chans[i + 1];
  }
  l.fc1_w = off;
  off += static_cast<std::size_t>(cfg.hidden_dim) * cfg.c3;
  l.fc1_b = off;
  off += cfg.hidden_dim;
  l.fc2_w = off;
  off += static_cast<std::size_t>(cfg.embed_dim) * cfg.hidden_dim;
  l.fc2_b = off;
  off += cfg.embed_dim;
  l.total = off;
  return l;
}

std::vector<std::size_t> bias_indices(const EncoderConfig& cfg) {
  const ParamLayout l = make_layout(cfg);
  std::vector<std::size_t> idx;
  const int chans[4] = {cfg.in_channels, cfg.c1, cfg.c2, cfg.c3};
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < chans[i + 1]; ++c) idx.push_back(l.conv_b[i] + c);
  }
  for (int i = 0; i < cfg.hidden_dim; ++i) idx.push_back(l.fc1_b + i);
  for (int i = 0; i < cfg.embed_dim; ++i) idx.push_back(l.fc2_b + i);
  return idx;
}

template <class T>
void init_encoder(Encoder<T>& enc, Rng& rng) {
  const EncoderConfig& cfg = enc.cfg;
  const ParamLayout& l = enc.layout;
  const int chans[4] = {cfg.in_channels, cfg.c1, cfg.c2, cfg.c3};
  std::fill(enc.params.begin(), enc.params.end(), T(0));
  for (int i = 0; i < 3; ++i) {
    const std::size_t n =
        static_cast<std::size_t>(chans[i + 1]) * chans[i] * 9;
    const double scale = std::sqrt(2.0 / (chans[i] * 9));
    for (std::size_t j = 0; j < n; ++j) {
      enc.params[l.conv_w[i] + j] = static_cast<T>(rng.normal() * scale);
    }
  }
  const double s1 = std::sqrt(2.0 / cfg.c3);
  for (std::size_t j = 0;
       j < static_cast<std::size_t>(cfg.hidden_dim) * cfg.c3; ++j) {
    enc.params[l.fc1_w + j] = static_cast<T>(rng.normal() * s1);
  }
  const double s2 = std::sqrt(2.0 / cfg.hidden_dim);
  for (std::size_t j = 0;
       j < static_cast<std::size_t>(cfg.embed_dim) * cfg.hidden_dim; ++j) {
    enc.params[l.fc2_w + j] = static_cast<T>(rng.normal() * s2);
  }
}

namespace {

template <class T>
inline T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
inline T silu(T x) {
  return x * sigmoid(x);
}

template <class T>
inline T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

inline int conv_out(int n) { return (n - 1) / 2 + 1; }  // 3x3, stride 2, pad 1

// cols: (c_in*9) rows x (oh*ow) columns
template <class T>
void im2col_3x3s2(const T* in, int c_in, int h, int w, int oh, int ow,
                  T* cols) {
  const int p = oh * ow;
  for (int c = 0; c < c_in; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * p;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * 2 - 1 + ky;
          if (y < 0 || y >= h) {
            std::fill(row + oy * ow, row + (oy + 1) * ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(y) * w;
          T* dst = row + oy * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * 2 - 1 + kx;
            dst[ox] = (x >= 0 && x < w) ? src[x] : T(0);
          }
        }
      }
    }
  }
}

// scatter-add transpose of im2col
template <class T>
void col2im_3x3s2(const T* cols, int c_in, int h, int w, int oh, int ow,
                  T* in) {
  const int p = oh * ow;
  std::fill(in, in + static_cast<std::size_t>(c_in) * h * w, T(0));
  for (int c = 0; c < c_in; ++c) {
    T* plane = in + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row =
            cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * p;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * 2 - 1 + ky;
          if (y < 0 || y >= h) continue;
          T* dst = plane + static_cast<std::size_t>(y) * w;
          const T* src = row + oy * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * 2 - 1 + kx;
            if (x >= 0 && x < w) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

// C[i][j] = bias[i] + sum_k A[i][k] * B[k][j]
template <class T>
void gemm_bias(const T* A, const T* B, const T* bias, T* C, int M, int K,
               int N) {
  for (int i = 0; i < M; ++i) {
    T* crow = C + static_cast<std::size_t>(i) * N;
    std::fill(crow, crow + N, bias[i]);
    const T* arow = A + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const T a = arow[k];
      const T* brow = B + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// dA[i][k] += sum_j dC[i][j] * B[k][j];  dB[k][j] = sum_i A[i][k] * dC[i][j]
template <class T>
void gemm_backward(const T* A, const T* B, const T* dC, T* dA, T* dB, int M,
                   int K, int N) {
  if (dB) {
    std::fill(dB, dB + static_cast<std::size_t>(K) * N, T(0));
  }
  for (int i = 0; i < M; ++i) {
    const T* dcrow = dC + static_cast<std::size_t>(i) * N;
    const T* arow = A + static_cast<std::size_t>(i) * K;
    T* darow = dA + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const T* brow = B + static_cast<std::size_t>(k) * N;
      T acc = T(0);
      for (int j = 0; j < N; ++j) acc += dcrow[j] * brow[j];
      darow[k] += acc;
      if (dB) {
        const T a = arow[k];
        T* dbrow = dB + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) dbrow[j] += a * dcrow[j];
      }
    }
  }
}

template <class T>
void check_finite(const std::vector<T>& v, const char* where) {
  for (T x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw NumericError(std::string("encoder: non-finite value after ") +
                         where);
    }
  }
}

}  // namespace

template <class T>
const std::vector<T>& encoder_forward(const Encoder<T>& enc, const Image& img,
                                      ForwardCache<T>& cache) {
  const EncoderConfig& cfg = enc.cfg;
  const ParamLayout& l = enc.layout;
  if (img.channels != cfg.in_channels) {
    throw ConfigError("encoder_forward: channel count mismatch");
  }
  const int chans[4] = {cfg.in_channels, cfg.c1, cfg.c2, cfg.c3};
  cache.h[0] = img.height;
  cache.w[0] = img.width;

  // HWC float -> planar T
  cache.input.resize(static_cast<std::size_t>(cfg.in_channels) * img.height *
                     img.width);
  for (int c = 0; c < cfg.in_channels; ++c) {
    T* plane = cache.input.data() +
               static_cast<std::size_t>(c) * img.height * img.width;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        plane[y * img.width + x] = static_cast<T>(img.at(y, x, c));
      }
    }
  }

  const T* src = cache.input.data();
  for (int i = 0; i < 3; ++i) {
    const int h = cache.h[i], w = cache.w[i];
    const int oh = conv_out(h), ow = conv_out(w);
    cache.h[i + 1] = oh;
    cache.w[i + 1] = ow;
    const int K = chans[i] * 9, P = oh * ow;
    cache.cols[i].resize(static_cast<std::size_t>(K) * P);
    im2col_3x3s2(src, chans[i], h, w, oh, ow, cache.cols[i].data());
    cache.pre[i].resize(static_cast<std::size_t>(chans[i + 1]) * P);
    gemm_bias(enc.params.data() + l.conv_w[i], cache.cols[i].data(),
              enc.params.data() + l.conv_b[i], cache.pre[i].data(),
              chans[i + 1], K, P);
    check_finite(cache.pre[i], i == 0 ? "conv1" : (i == 1 ? "conv2"
                                                          : "conv3"));
    cache.act[i].resize(cache.pre[i].size());
    for (std::size_t j = 0; j < cache.pre[i].size(); ++j) {
      cache.act[i][j] = silu(cache.pre[i][j]);
    }
    src = cache.act[i].data();
  }

  const int p3 = cache.h[3] * cache.w[3];
  cache.gap.assign(cfg.c3, T(0));
  for (int c = 0; c < cfg.c3; ++c) {
    const T* plane = cache.act[2].data() + static_cast<std::size_t>(c) * p3;
    T acc = T(0);
    for (int j = 0; j < p3; ++j) acc += plane[j];
    cache.gap[c] = acc / static_cast<T>(p3);
  }

  cache.fc1_pre.assign(cfg.hidden_dim, T(0));
  for (int i = 0; i < cfg.hidden_dim; ++i) {
    const T* wrow = enc.params.data() + l.fc1_w +
                    static_cast<std::size_t>(i) * cfg.c3;
    T acc = enc.params[l.fc1_b + i];
    for (int c = 0; c < cfg.c3; ++c) acc += wrow[c] * cache.gap[c];
    cache.fc1_pre[i] = acc;
  }
  check_finite(cache.fc1_pre, "fc1");
  cache.fc1_act.resize(cfg.hidden_dim);
  for (int i = 0; i < cfg.hidden_dim; ++i) {
    cache.fc1_act[i] = silu(cache.fc1_pre[i]);
  }

  cache.embed_pre.assign(cfg.embed_dim, T(0));
  for (int e = 0; e < cfg.embed_dim; ++e) {
    const T* wrow = enc.params.data() + l.fc2_w +
                    static_cast<std::size_t>(e) * cfg.hidden_dim;
    T acc = enc.params[l.fc2_b + e];
    for (int i = 0; i < cfg.hidden_dim; ++i) acc += wrow[i] * cache.fc1_act[i];
    cache.embed_pre[e] = acc;
  }
  check_finite(cache.embed_pre, "fc2");

  T norm2 = T(0);
  for (T v : cache.embed_pre) norm2 += v * v;
  cache.prenorm = std::sqrt(norm2);
  const T denom = std::max(cache.prenorm, T(1e-8));
  cache.embed.resize(cfg.embed_dim);
  for (int e = 0; e < cfg.embed_dim; ++e) {
    cache.embed[e] = cache.embed_pre[e] / denom;
  }
  return cache.embed;
}

template <class T>
void encoder_backward(const Encoder<T>& enc, const ForwardCache<T>& cache,
                      const T* d_embed, T* d_params,
                      std::vector<T>* d_input_hwc) {
  const EncoderConfig& cfg = enc.cfg;
  const ParamLayout& l = enc.layout;
  const int chans[4] = {cfg.in_channels, cfg.c1, cfg.c2, cfg.c3};

  // normalization backward
  std::vector<T> d_pre(cfg.embed_dim);
  const T denom = std::max(cache.prenorm, T(1e-8));
  if (cache.prenorm > T(1e-8)) {
    T dot = T(0);
    for (int e = 0; e < cfg.embed_dim; ++e) dot += d_embed[e] * cache.embed[e];
    for (int e = 0; e < cfg.embed_dim; ++e) {
      d_pre[e] = (d_embed[e] - cache.embed[e] * dot) / denom;
    }
  } else {
    for (int e = 0; e < cfg.embed_dim; ++e) d_pre[e] = d_embed[e] / denom;
  }

  // fc2
  std::vector<T> d_fc1_act(cfg.hidden_dim, T(0));
  for (int e = 0; e < cfg.embed_dim; ++e) {
    const T g = d_pre[e];
    const T* wrow = enc.params.data() + l.fc2_w +
                    static_cast<std::size_t>(e) * cfg.hidden_dim;
    T* dwrow = d_params + l.fc2_w + static_cast<std::size_t>(e) * cfg.hidden_dim;
    for (int i = 0; i < cfg.hidden_dim; ++i) {
      dwrow[i] += g * cache.fc1_act[i];
      d_fc1_act[i] += g * wrow[i];
    }
    d_params[l.fc2_b + e] += g;
  }

  // fc1 + silu
  std::vector<T> d_gap(cfg.c3, T(0));
  for (int i = 0; i < cfg.hidden_dim; ++i) {
    const T g = d_fc1_act[i] * silu_grad(cache.fc1_pre[i]);
    const T* wrow = enc.params.data() + l.fc1_w +
                    static_cast<std::size_t>(i) * cfg.c3;
    T* dwrow = d_params + l.fc1_w + static_cast<std::size_t>(i) * cfg.c3;
    for (int c = 0; c < cfg.c3; ++c) {
      dwrow[c] += g * cache.gap[c];
      d_gap[c] += g * wrow[c];
    }
    d_params[l.fc1_b + i] += g;
  }

  // GAP backward into act3, then through the conv stack
  const int p3 = cache.h[3] * cache.w[3];
  std::vector<T> d_act(static_cast<std::size_t>(cfg.c3) * p3);
  for (int c = 0; c < cfg.c3; ++c) {
    const T g = d_gap[c] / static_cast<T>(p3);
    T* plane = d_act.data() + static_cast<std::size_t>(c) * p3;
    for (int j = 0; j < p3; ++j) plane[j] = g;
  }

  std::vector<T> d_cols, d_below;
  for (int i = 2; i >= 0; --i) {
    const int P = cache.h[i + 1] * cache.w[i + 1];
    const int K = chans[i] * 9;
    // silu backward (in place on d_act)
    for (std::size_t j = 0; j < d_act.size(); ++j) {
      d_act[j] *= silu_grad(cache.pre[i][j]);
    }
    // bias grads
    for (int c = 0; c < chans[i + 1]; ++c) {
      const T* row = d_act.data() + static_cast<std::size_t>(c) * P;
      T acc = T(0);
      for (int j = 0; j < P; ++j) acc += row[j];
      d_params[l.conv_b[i] + c] += acc;
    }
    const bool need_input = i > 0 || d_input_hwc != nullptr;
    if (need_input) {
      d_cols.resize(static_cast<std::size_t>(K) * P);
    }
    gemm_backward(enc.params.data() + l.conv_w[i], cache.cols[i].data(),
                  d_act.data(), d_params + l.conv_w[i],
                  need_input ? d_cols.data() : nullptr, chans[i + 1], K, P);
    if (!need_input) break;
    d_below.resize(static_cast<std::size_t>(chans[i]) * cache.h[i] *
                   cache.w[i]);
    col2im_3x3s2(d_cols.data(), chans[i], cache.h[i], cache.w[i],
                 cache.h[i + 1], cache.w[i + 1], d_below.data());
    d_act.swap(d_below);
  }

  if (d_input_hwc) {
    // planar -> interleaved to match Image layout
    const int h = cache.h[0], w = cache.w[0];
    d_input_hwc->assign(static_cast<std::size_t>(h) * w * cfg.in_channels,
                        T(0));
    for (int c = 0; c < cfg.in_channels; ++c) {
      const T* plane = d_act.data() + static_cast<std::size_t>(c) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          (*d_input_hwc)[(static_cast<std::size_t>(y) * w + x) *
                             cfg.in_channels +
                         c] = plane[y * w + x];
        }
      }
    }
  }
}

template <class T>
std::vector<T> encode(const Encoder<T>& enc, const Image& img) {
  ForwardCache<T> cache;
  return encoder_forward(enc, img, cache);
}

template <class T>
void momentum_update(Encoder<T>& key, const Encoder<T>& query, T m) {
  if (key.params.size() != query.params.size()) {
    throw ConfigError("momentum_update: parameter size mismatch");
  }
  if (m < T(0) || m > T(1)) {
    throw ConfigError("momentum_update: m outside [0,1]");
  }
  for (std::size_t i = 0; i < key.params.size(); ++i) {
    key.params[i] = m * key.params[i] + (T(1) - m) * query.params[i];
  }
}

template <class T>
T infonce_loss(const T* q, const T* k, const T* negs, int n_negs, int dim,
               T tau, InfoNceGrads<T>* grads, T* dq_out) {
  if (tau <= T(0)) throw ConfigError("infonce_loss: tau must be positive");

  // logit 0 is the positive, logits 1..n are the negatives
  std::vector<T> logits(1 + n_negs);
  T dot = T(0);
  for (int d = 0; d < dim; ++d) dot += q[d] * k[d];
  logits[0] = dot / tau;
  for (int i = 0; i < n_negs; ++i) {
    const T* nrow = negs + static_cast<std::size_t>(i) * dim;
    T acc = T(0);
    for (int d = 0; d < dim; ++d) acc += q[d] * nrow[d];
    logits[1 + i] = acc / tau;
  }

  T mx = logits[0];
  for (T v : logits) mx = std::max(mx, v);
  T denom = T(0);
  for (T& v : logits) {
    v = std::exp(v - mx);
    denom += v;
  }
  // logits[] now holds exp(l - mx); probabilities p_i = logits[i] / denom
  const T loss = -std::log(logits[0] / denom);
  if (!std::isfinite(static_cast<double>(loss))) {
    throw NumericError("infonce_loss: non-finite loss");
  }

  if (grads || dq_out) {
    std::vector<T> dq(dim, T(0));
    const T p0 = logits[0] / denom;
    // dL/dq = ((p0 - 1) k + sum_i p_i n_i) / tau
    for (int d = 0; d < dim; ++d) dq[d] = (p0 - T(1)) * k[d];
    for (int i = 0; i < n_negs; ++i) {
      const T pi = logits[1 + i] / denom;
      const T* nrow = negs + static_cast<std::size_t>(i) * dim;
      for (int d = 0; d < dim; ++d) dq[d] += pi * nrow[d];
    }
    for (int d = 0; d < dim; ++d) dq[d] /= tau;
    if (dq_out) std::copy(dq.begin(), dq.end(), dq_out);
    if (grads) {
      grads->d_q = dq;
      grads->d_k.assign(dim, T(0));
      for (int d = 0; d < dim; ++d) {
        grads->d_k[d] = (p0 - T(1)) * q[d] / tau;
      }
      grads->d_negs.assign(static_cast<std::size_t>(n_negs) * dim, T(0));
      for (int i = 0; i < n_negs; ++i) {
        const T pi = logits[1 + i] / denom;
        for (int d = 0; d < dim; ++d) {
          grads->d_negs[static_cast<std::size_t>(i) * dim + d] =
              pi * q[d] / tau;
        }
      }
    }
  }
  return loss;
}

template <class T>
T softmax_ce(const T* logits, int n, int label, T* dlogits) {
  T mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  T denom = T(0);
  for (int i = 0; i < n; ++i) denom += std::exp(logits[i] - mx);
  const T loss = -(logits[label] - mx - std::log(denom));
  if (!std::isfinite(static_cast<double>(loss))) {
    throw NumericError("softmax_ce: non-finite loss");
  }
  if (dlogits) {
    for (int i = 0; i < n; ++i) {
      dlogits[i] = std::exp(logits[i] - mx) / denom - (i == label ? T(1)
                                                                  : T(0));
    }
  }
  return loss;
}

template struct Encoder<float>;
template struct Encoder<double>;

#define BGAUG_INSTANTIATE(T)                                                  \
  template void init_encoder<T>(Encoder<T>&, Rng&);                          \
  template const std::vector<T>& encoder_forward<T>(                         \
      const Encoder<T>&, const Image&, ForwardCache<T>&);                    \
  template void encoder_backward<T>(const Encoder<T>&,                       \
                                    const ForwardCache<T>&, const T*, T*,    \
                                    std::vector<T>*);                        \
  template std::vector<T> encode<T>(const Encoder<T>&, const Image&);        \
  template void momentum_update<T>(Encoder<T>&, const Encoder<T>&, T);       \
  template T infonce_loss<T>(const T*, const T*, const T*, int, int, T,      \
                             InfoNceGrads<T>*, T*);                          \
  template T softmax_ce<T>(const T*, int, int, T*);

BGAUG_INSTANTIATE(float)
BGAUG_INSTANTIATE(double)
#undef BGAUG_INSTANTIATE

}  // namespace bgaug
