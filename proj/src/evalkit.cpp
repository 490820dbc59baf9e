#include "bgaug/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bgaug/errors.hpp"

namespace bgaug {

double probe_objective(const std::vector<double>& params,
                       const std::vector<double>& features,
                       const std::vector<int>& labels, int n, int dim,
                       int n_classes, std::vector<double>* grad) {
  const std::size_t expect =
      static_cast<std::size_t>(n_classes) * dim + n_classes;
  if (params.size() != expect) {
    throw ConfigError("probe_objective: parameter vector has wrong size");
  }
  if (features.size() != static_cast<std::size_t>(n) * dim ||
      labels.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("probe_objective: feature/label shape mismatch");
  }
  const double* w = params.data();
  const double* b = w + static_cast<std::size_t>(n_classes) * dim;
  if (grad) grad->assign(params.size(), 0.0);
  double* gw = grad ? grad->data() : nullptr;
  double* gb = grad ? gw + static_cast<std::size_t>(n_classes) * dim
                    : nullptr;

  double total = 0.0;
  std::vector<double> logits(n_classes);
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const double* x = features.data() + static_cast<std::size_t>(i) * dim;
    const int label = labels[i];
    if (label < 0 || label >= n_classes) {
      throw ConfigError("probe_objective: label out of range");
    }
    for (int c = 0; c < n_classes; ++c) {
      const double* wrow = w + static_cast<std::size_t>(c) * dim;
      double acc = b[c];
      for (int d = 0; d < dim; ++d) acc += wrow[d] * x[d];
      logits[c] = acc;
    }
    double mx = logits[0];
    for (int c = 1; c < n_classes; ++c) mx = std::max(mx, logits[c]);
    double denom = 0.0;
    for (int c = 0; c < n_classes; ++c) denom += std::exp(logits[c] - mx);
    total += -(logits[label] - mx - std::log(denom));
    if (grad) {
      for (int c = 0; c < n_classes; ++c) {
        const double p = std::exp(logits[c] - mx) / denom;
        const double g = (p - (c == label ? 1.0 : 0.0)) * inv_n;
        double* gwrow = gw + static_cast<std::size_t>(c) * dim;
        for (int d = 0; d < dim; ++d) gwrow[d] += g * x[d];
        gb[c] += g;
      }
    }
  }
  const double loss = total * inv_n;
  if (!std::isfinite(loss)) {
    throw NumericError("probe_objective: non-finite loss");
  }
  return loss;
}

ProbeResult train_probe(const std::vector<double>& features,
                        const std::vector<int>& labels, int n, int dim,
                        int n_classes, const ProbeConfig& cfg) {
  if (n < 1 || dim < 1 || n_classes < 2) {
    throw ConfigError("train_probe: need n >= 1, dim >= 1, n_classes >= 2");
  }
  std::vector<double> params(
      static_cast<std::size_t>(n_classes) * dim + n_classes, 0.0);
  std::vector<double> grad;
  double loss = probe_objective(params, features, labels, n, dim, n_classes,
                                &grad);

  ProbeResult best;
  best.dim = dim;
  best.n_classes = n_classes;
  best.final_loss = loss;
  auto record_best = [&](const std::vector<double>& p, double l) {
    if (l <= best.final_loss) {
      best.final_loss = l;
      best.w.assign(p.begin(),
                    p.begin() + static_cast<std::size_t>(n_classes) * dim);
      best.b.assign(p.begin() + static_cast<std::size_t>(n_classes) * dim,
                    p.end());
    }
  };
  record_best(params, loss);

  double lr = cfg.lr;
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    double gnorm2 = 0.0;
    for (double g : grad) gnorm2 += g * g;
    if (std::sqrt(gnorm2) < cfg.grad_tol) {
      best.converged = true;
      break;
    }
    // Armijo backtracking on the descent step
    std::vector<double> cand(params.size());
    double cand_loss = loss;
    while (true) {
      for (std::size_t j = 0; j < params.size(); ++j) {
        cand[j] = params[j] - lr * grad[j];
      }
      cand_loss = probe_objective(cand, features, labels, n, dim, n_classes);
      if (cand_loss <= loss - 1e-4 * lr * gnorm2 || lr < 1e-12) break;
      lr *= 0.5;
    }
    if (lr < 1e-12) break;  // no descent direction progress left
    params.swap(cand);
    loss = probe_objective(params, features, labels, n, dim, n_classes,
                           &grad);
    record_best(params, loss);
    lr = std::min(lr * 2.0, cfg.lr);
  }
  best.iters = iter;
  return best;
}

std::vector<double> embed_images(const Encoder<float>& enc,
                                 const std::vector<Image>& images) {
  const int dim = enc.cfg.embed_dim;
  std::vector<double> features(images.size() * static_cast<std::size_t>(dim));
  ForwardCache<float> cache;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::vector<float>& emb = encoder_forward(enc, images[i], cache);
    for (int d = 0; d < dim; ++d) {
      features[i * dim + d] = static_cast<double>(emb[d]);
    }
  }
  return features;
}

ProbeResult train_probe_on(const Encoder<float>& enc, const Dataset& data,
                           const ProbeConfig& cfg) {
  std::vector<Image> images;
  std::vector<int> labels;
  images.reserve(data.samples.size());
  labels.reserve(data.samples.size());
  for (const Sample& s : data.samples) {
    images.push_back(s.image);
    labels.push_back(s.fg_class);
  }
  const std::vector<double> features = embed_images(enc, images);
  return train_probe(features, labels, static_cast<int>(images.size()),
                     enc.cfg.embed_dim, data.n_fg_classes, cfg);
}

int probe_predict(const ProbeResult& probe, const double* embedding) {
  int arg = 0;
  double best = -1e300;
  for (int c = 0; c < probe.n_classes; ++c) {
    const double* wrow = probe.w.data() +
                         static_cast<std::size_t>(c) * probe.dim;
    double acc = probe.b[c];
    for (int d = 0; d < probe.dim; ++d) acc += wrow[d] * embedding[d];
    if (acc > best) {
      best = acc;
      arg = c;
    }
  }
  return arg;
}

std::vector<SplitAccuracy> eval_splits(
    const Encoder<float>& enc, const ProbeResult& probe,
    const std::vector<ChallengeSplit>& splits) {
  std::vector<SplitAccuracy> out;
  out.reserve(splits.size());
  for (const ChallengeSplit& split : splits) {
    const std::vector<double> features = embed_images(enc, split.images);
    int hits = 0;
    for (std::size_t i = 0; i < split.images.size(); ++i) {
      if (probe_predict(probe, features.data() + i * probe.dim) ==
          split.labels[i]) {
        ++hits;
      }
    }
    SplitAccuracy acc;
    acc.name = split.name;
    acc.n = static_cast<int>(split.images.size());
    acc.accuracy = split.images.empty()
                       ? 0.0
                       : static_cast<double>(hits) / split.images.size();
    out.push_back(std::move(acc));
  }
  return out;
}

double dataset_accuracy(const Encoder<float>& enc, const ProbeResult& probe,
                        const Dataset& data) {
  std::vector<Image> images;
  images.reserve(data.samples.size());
  for (const Sample& s : data.samples) images.push_back(s.image);
  const std::vector<double> features = embed_images(enc, images);
  int hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (probe_predict(probe, features.data() + i * probe.dim) ==
        data.samples[i].fg_class) {
      ++hits;
    }
  }
  return images.empty() ? 0.0 : static_cast<double>(hits) / images.size();
}

void validate(const AttackConfig& cfg) {
  if (cfg.epsilon < 0) throw ConfigError("attack: epsilon negative");
  if (cfg.pgd_steps < 1) throw ConfigError("attack: pgd_steps must be >= 1");
  if (cfg.pgd_rel_step <= 0) {
    throw ConfigError("attack: pgd_rel_step must be positive");
  }
}

template <class T>
LossGradFn<T> make_composite_loss(const Encoder<T>& enc,
                                  const ProbeResult& probe, int label) {
  if (label < 0 || label >= probe.n_classes) {
    throw ConfigError("make_composite_loss: label out of range");
  }
  if (probe.dim != enc.cfg.embed_dim) {
    throw ConfigError("make_composite_loss: probe/encoder dim mismatch");
  }
  std::vector<T> w(probe.w.begin(), probe.w.end());
  std::vector<T> b(probe.b.begin(), probe.b.end());
  const int n_classes = probe.n_classes;
  const int dim = probe.dim;
  // capture by value so the returned callable owns everything but the
  // encoder, which must outlive it
  const Encoder<T>* enc_ptr = &enc;
  return [enc_ptr, w = std::move(w), b = std::move(b), n_classes, dim,
          label](const Image& img, std::vector<T>* d_input) -> T {
    ForwardCache<T> cache;
    encoder_forward(*enc_ptr, img, cache);
    std::vector<T> logits(n_classes);
    for (int c = 0; c < n_classes; ++c) {
      T acc = b[c];
      for (int d = 0; d < dim; ++d) {
        acc += w[static_cast<std::size_t>(c) * dim + d] * cache.embed[d];
      }
      logits[c] = acc;
    }
    std::vector<T> dlogits(n_classes);
    const T loss = softmax_ce<T>(logits.data(), n_classes, label,
                                 d_input ? dlogits.data() : nullptr);
    if (d_input) {
      std::vector<T> d_emb(dim, T(0));
      for (int c = 0; c < n_classes; ++c) {
        for (int d = 0; d < dim; ++d) {
          d_emb[d] += dlogits[c] * w[static_cast<std::size_t>(c) * dim + d];
        }
      }
      std::vector<T> d_params(enc_ptr->layout.total, T(0));
      encoder_backward(*enc_ptr, cache, d_emb.data(), d_params.data(),
                       d_input);
    }
    return loss;
  };
}

namespace {

template <class T>
inline float sign_step(T g) {
  if (g > T(0)) return 1.f;
  if (g < T(0)) return -1.f;
  return 0.f;
}

}  // namespace

template <class T>
Image fgsm_attack(const LossGradFn<T>& fn, const Image& x, double eps) {
  if (eps < 0) throw ConfigError("fgsm_attack: epsilon negative");
  std::vector<T> grad;
  fn(x, &grad);
  if (grad.size() != x.data.size()) {
    throw ConfigError("fgsm_attack: gradient size mismatch");
  }
  const float e = static_cast<float>(eps);
  Image out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float v = x.data[i] + e * sign_step(grad[i]);
    out.data[i] = std::min(1.f, std::max(0.f, v));
  }
  return out;
}

template <class T>
Image pgd_attack(const LossGradFn<T>& fn, const Image& x,
                 const AttackConfig& cfg) {
  validate(cfg);
  const float e = static_cast<float>(cfg.epsilon);
  const float step = static_cast<float>(cfg.epsilon * cfg.pgd_rel_step);
  Image cur = x;
  std::vector<T> grad;
  for (int it = 0; it < cfg.pgd_steps; ++it) {
    fn(cur, &grad);
    for (std::size_t i = 0; i < cur.data.size(); ++i) {
      float v = cur.data[i] + step * sign_step(grad[i]);
      const float lo = x.data[i] - e;
      const float hi = x.data[i] + e;
      v = std::min(hi, std::max(lo, v));
      cur.data[i] = std::min(1.f, std::max(0.f, v));
    }
  }
  return cur;
}

RobustResult robust_accuracy(const Encoder<float>& enc,
                             const ProbeResult& probe,
                             const std::vector<Image>& images,
                             const std::vector<int>& labels,
                             const AttackConfig& cfg) {
  validate(cfg);
  if (images.size() != labels.size()) {
    throw ConfigError("robust_accuracy: image/label count mismatch");
  }
  RobustResult out;
  out.n = static_cast<int>(images.size());
  const std::vector<double> clean_features = embed_images(enc, images);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const LossGradFn<float> fn = make_composite_loss(enc, probe, labels[i]);
    out.clean_mean_loss += fn(images[i], nullptr);
    if (probe_predict(probe, clean_features.data() + i * probe.dim) ==
        labels[i]) {
      out.clean_accuracy += 1.0;
    }
    const Image adv = cfg.kind == AttackConfig::Kind::kFgsm
                          ? fgsm_attack(fn, images[i], cfg.epsilon)
                          : pgd_attack(fn, images[i], cfg);
    out.attacked_mean_loss += fn(adv, nullptr);
    const std::vector<float> emb = encode(enc, adv);
    std::vector<double> embd(emb.begin(), emb.end());
    if (probe_predict(probe, embd.data()) == labels[i]) {
      out.attacked_accuracy += 1.0;
    }
  }
  if (out.n > 0) {
    out.clean_accuracy /= out.n;
    out.clean_mean_loss /= out.n;
    out.attacked_accuracy /= out.n;
    out.attacked_mean_loss /= out.n;
  }
  return out;
}

template LossGradFn<float> make_composite_loss<float>(const Encoder<float>&,
                                                      const ProbeResult&,
                                                      int);
template LossGradFn<double> make_composite_loss<double>(
    const Encoder<double>&, const ProbeResult&, int);
template Image fgsm_attack<float>(const LossGradFn<float>&, const Image&,
                                  double);
template Image fgsm_attack<double>(const LossGradFn<double>&, const Image&,
                                   double);
template Image pgd_attack<float>(const LossGradFn<float>&, const Image&,
                                 const AttackConfig&);
template Image pgd_attack<double>(const LossGradFn<double>&, const Image&,
                                  const AttackConfig&);

}  // namespace bgaug
