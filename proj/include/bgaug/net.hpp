#pragma once

#include <cstddef>
#include <vector>

#include "bgaug/image.hpp"
#include "bgaug/rng.hpp"

namespace bgaug {

// Small normalization-free conv encoder: three 3x3 stride-2 conv blocks with
// SiLU, global average pooling, then a two-layer projection head. The
// embedding is L2-normalized with a 1e-8 floor on the norm.
struct EncoderConfig {
  int in_channels = 3;
  int c1 = 16;
  int c2 = 32;
  int c3 = 64;
  int hidden_dim = 64;
  int embed_dim = 32;
};

// byte offsets of each layer inside the flat parameter vector
struct ParamLayout {
  std::size_t conv_w[3];
  std::size_t conv_b[3];
  std::size_t fc1_w;
  std::size_t fc1_b;
  std::size_t fc2_w;
  std::size_t fc2_b;
  std::size_t total;
};
ParamLayout make_layout(const EncoderConfig& cfg);

// indices of every bias parameter (used by the gradient checker)
std::vector<std::size_t> bias_indices(const EncoderConfig& cfg);

template <class T>
struct Encoder {
  EncoderConfig cfg;
  ParamLayout layout;
  std::vector<T> params;

  explicit Encoder(const EncoderConfig& c = {})
      : cfg(c), layout(make_layout(c)), params(layout.total, T(0)) {}
};

// He-normal weights, zero biases
template <class T>
void init_encoder(Encoder<T>& enc, Rng& rng);

// Everything the backward pass needs, reusable across calls to avoid
// reallocation in hot loops.
template <class T>
struct ForwardCache {
  std::vector<T> input;    // planar C,H,W
  std::vector<T> cols[3];  // im2col buffers
  std::vector<T> pre[3];   // conv pre-activations
  std::vector<T> act[3];   // SiLU outputs
  std::vector<T> gap;
  std::vector<T> fc1_pre, fc1_act;
  std::vector<T> embed_pre;  // head output before normalization
  std::vector<T> embed;      // normalized embedding
  T prenorm = T(0);
  int h[4] = {0, 0, 0, 0};
  int w[4] = {0, 0, 0, 0};
};

// Returns cache.embed. Throws NumericError naming the layer on non-finite
// intermediates.
template <class T>
const std::vector<T>& encoder_forward(const Encoder<T>& enc, const Image& img,
                                      ForwardCache<T>& cache);

// Accumulates (+=) parameter gradients into d_params (layout.total entries).
// When d_input_hwc is non-null it receives the input-pixel gradient in the
// image's interleaved layout (assigned, not accumulated).
template <class T>
void encoder_backward(const Encoder<T>& enc, const ForwardCache<T>& cache,
                      const T* d_embed, T* d_params,
                      std::vector<T>* d_input_hwc = nullptr);

template <class T>
std::vector<T> encode(const Encoder<T>& enc, const Image& img);

// key <- m * key + (1 - m) * query, elementwise
template <class T>
void momentum_update(Encoder<T>& key, const Encoder<T>& query, T m);

template <class T>
struct InfoNceGrads {
  std::vector<T> d_q;
  std::vector<T> d_k;
  std::vector<T> d_negs;  // n_negs x dim, flat
};

// loss = -log( exp(q.k/tau) / (exp(q.k/tau) + sum_i exp(q.n_i/tau)) ),
// computed with max-logit subtraction. Gradients are optional; when `grads`
// is null only d_q is written (into dq_out if provided).
template <class T>
T infonce_loss(const T* q, const T* k, const T* negs, int n_negs, int dim,
               T tau, InfoNceGrads<T>* grads = nullptr, T* dq_out = nullptr);

// softmax cross-entropy with max subtraction; dlogits optional (assigned)
template <class T>
T softmax_ce(const T* logits, int n, int label, T* dlogits = nullptr);

extern template struct Encoder<float>;
extern template struct Encoder<double>;

}  // namespace bgaug
