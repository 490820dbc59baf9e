#include "bgaug/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <thread>

#include "bgaug/errors.hpp"
#include "bgaug/io_util.hpp"
#include "json.hpp"

namespace bgaug {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j,
                         std::initializer_list<const char*> keys,
                         const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError(std::string("unknown key '") + item.key() + "' in " +
                        where);
    }
  }
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) {
    throw ConfigError("train config: batch_size must be at least 2");
  }
  if (cfg.queue_size <= 0 || cfg.queue_size % cfg.batch_size != 0) {
    throw ConfigError(
        "train config: queue_size must be a positive multiple of batch_size");
  }
  if (cfg.epochs < 0) throw ConfigError("train config: epochs negative");
  if (cfg.lr < 0) throw ConfigError("train config: lr negative");
  if (cfg.tau <= 0) throw ConfigError("train config: tau must be positive");
  if (cfg.momentum < 0 || cfg.momentum > 1) {
    throw ConfigError("train config: momentum outside [0,1]");
  }
  if (cfg.opt_momentum < 0 || cfg.opt_momentum >= 1) {
    throw ConfigError("train config: opt_momentum outside [0,1)");
  }
  if (cfg.weight_decay < 0) {
    throw ConfigError("train config: weight_decay negative");
  }
  if (cfg.workers < 1) throw ConfigError("train config: workers must be >= 1");
  if (cfg.aug.n_matched < 1) {
    throw ConfigError("train config: aug.n_matched must be >= 1");
  }
}

ContrastiveState init_contrastive(const TrainConfig& cfg) {
  validate(cfg);
  ContrastiveState st(cfg.encoder, cfg.queue_size);
  Rng rng = derive_rng(cfg.seed, 0, 0, Stream::kParamInit);
  init_encoder(st.query, rng);
  st.key.params = st.query.params;
  return st;
}

namespace {

// key-side embedding that goes into the queue; honors the switch that
// excludes background-augmented views from future negative duty
std::vector<float> queue_embedding(const Encoder<float>& key,
                                   const ViewPair& pair,
                                   const AugConfig& aug,
                                   const std::vector<float>& k_emb) {
  if (aug.enqueue_augmented_keys || !pair.k_was_bg_augmented) return k_emb;
  return encode(key, pair.k_std_view);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = derive_rng(seed, epoch, 0, Stream::kShuffle);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  return order;
}

// runs fn(i) for i in [0,n) on `workers` threads with strided assignment;
// exceptions are captured per index and the lowest-index one is rethrown
template <class Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int t = std::min(workers, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += t) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (int i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
}

void sgd_update(std::vector<float>& params, std::vector<float>& velocity,
                const std::vector<float>& grad, const TrainConfig& cfg) {
  const float mu = static_cast<float>(cfg.opt_momentum);
  const float wd = static_cast<float>(cfg.weight_decay);
  const float lr = static_cast<float>(cfg.lr);
  for (std::size_t j = 0; j < params.size(); ++j) {
    velocity[j] = mu * velocity[j] + (grad[j] + wd * params[j]);
    params[j] -= lr * velocity[j];
  }
}

double l2_norm(const std::vector<float>& v) {
  double acc = 0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

}  // namespace

void warm_queue(ContrastiveState& st, const Dataset& data,
                const TrainConfig& cfg) {
  validate(cfg);
  const int B = cfg.batch_size;
  const int K = st.queue_size;
  const int dim = cfg.encoder.embed_dim;
  if (static_cast<int>(data.samples.size()) < K) {
    throw ConfigError("warm_queue: need at least queue_size samples");
  }
  const std::vector<std::size_t> order =
      epoch_order(data.samples.size(), cfg.seed, 0);
  for (int s = 0; s < K / B; ++s) {
    std::vector<const Sample*> batch(B);
    for (int i = 0; i < B; ++i) {
      batch[i] = &data.samples[order[static_cast<std::size_t>(s) * B + i]];
    }
    for (int i = 0; i < B; ++i) {
      ViewPair pair =
          make_view_pair(*batch[i], batch, cfg.seed, kWarmupEpoch, cfg.aug);
      const std::vector<float> k_emb = encode(st.key, pair.k_view);
      const std::vector<float> emb =
          queue_embedding(st.key, pair, cfg.aug, k_emb);
      std::copy(emb.begin(), emb.end(),
                st.queue.begin() +
                    static_cast<std::size_t>(s * B + i) * dim);
    }
  }
  st.queue_pos = 0;
  st.queue_full = true;
}

StepStats contrastive_step(ContrastiveState& st,
                           const std::vector<const Sample*>& batch,
                           std::uint64_t epoch, const TrainConfig& cfg) {
  const int B = static_cast<int>(batch.size());
  if (B < 2) throw ConfigError("contrastive_step: batch must hold >= 2");
  if (!st.queue_full) {
    throw ConfigError("contrastive_step: queue not warmed up");
  }
  const int K = st.queue_size;
  const int dim = cfg.encoder.embed_dim;
  const std::size_t n_params = st.query.layout.total;

  std::vector<std::vector<float>> grads(B);
  std::vector<std::vector<float>> enq(B);
  std::vector<double> losses(B, 0.0);
  std::vector<int> n_negs(B, 0);
  std::vector<char> used_matched(B, 0);
  std::vector<char> correct(B, 0);

  parallel_for(B, cfg.workers, [&](int i) {
    const Sample& s = *batch[i];
    ViewPair pair = make_view_pair(s, batch, cfg.seed, epoch, cfg.aug);

    ForwardCache<float> qc;
    encoder_forward(st.query, pair.q_view, qc);
    const std::vector<float> k_emb = encode(st.key, pair.k_view);

    std::vector<const Sample*> pool;
    pool.reserve(batch.size());
    for (const Sample* b : batch) {
      if (b->id != s.id) pool.push_back(b);
    }

    // the extra negatives beyond the queue, all key-encoder outputs
    Rng nrng = derive_rng(cfg.seed, epoch, static_cast<std::uint64_t>(s.id),
                          Stream::kNegDecision);
    std::vector<float> extras;
    if (cfg.aug.mode == AugMode::kBgSwaps && !pool.empty()) {
      const double gate =
          (cfg.aug.couple_neg_to_key && pair.k_gate_uniform >= 0.0)
              ? pair.k_gate_uniform
              : nrng.uniform();
      if (gate < cfg.aug.p_neg) {
        used_matched[i] = 1;
        const int want =
            std::min(cfg.aug.n_matched, static_cast<int>(pool.size()));
        std::vector<const Sample*> donors = pool;
        for (int j = 0; j < want; ++j) {
          const std::size_t pick = j + nrng.uniform_index(donors.size() - j);
          std::swap(donors[j], donors[pick]);
          Image neg_img =
              make_matched_negative(s, pair, *donors[j], nrng, cfg.aug);
          const std::vector<float> emb = encode(st.key, neg_img);
          extras.insert(extras.end(), emb.begin(), emb.end());
        }
      }
    }
    if (extras.empty()) {
      // substitute: one freshly augmented view of another batch sample
      const Sample* d = pool[nrng.uniform_index(pool.size())];
      ViewResult v = standard_view(d->image, d->mask, nrng, cfg.aug);
      const std::vector<float> emb = encode(st.key, v.view);
      extras.insert(extras.end(), emb.begin(), emb.end());
    }
    const int extra = static_cast<int>(extras.size()) / dim;
    n_negs[i] = K + extra;

    std::vector<float> negs;
    negs.reserve(static_cast<std::size_t>(K + extra) * dim);
    negs.insert(negs.end(), st.queue.begin(), st.queue.end());
    negs.insert(negs.end(), extras.begin(), extras.end());

    std::vector<float> dq(dim, 0.f);
    float loss;
    try {
      loss = infonce_loss<float>(qc.embed.data(), k_emb.data(), negs.data(),
                                 K + extra, dim, static_cast<float>(cfg.tau),
                                 nullptr, dq.data());
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (step " +
                         std::to_string(st.step) + ", sample " +
                         std::to_string(s.id) + ")");
    }
    losses[i] = loss;

    double pos = 0, max_neg = -2;
    for (int d = 0; d < dim; ++d) pos += qc.embed[d] * k_emb[d];
    for (int n = 0; n < K + extra; ++n) {
      double acc = 0;
      for (int d = 0; d < dim; ++d) {
        acc += qc.embed[d] * negs[static_cast<std::size_t>(n) * dim + d];
      }
      max_neg = std::max(max_neg, acc);
    }
    correct[i] = pos > max_neg ? 1 : 0;

    const float inv_b = 1.0f / static_cast<float>(B);
    for (float& g : dq) g *= inv_b;
    grads[i].assign(n_params, 0.f);
    encoder_backward(st.query, qc, dq.data(), grads[i].data());

    enq[i] = queue_embedding(st.key, pair, cfg.aug, k_emb);
  });

  // fixed-order reduction keeps results identical for every worker count
  std::vector<float> grad(n_params, 0.f);
  for (int i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < n_params; ++j) grad[j] += grads[i][j];
  }
  sgd_update(st.query.params, st.velocity, grad, cfg);
  momentum_update(st.key, st.query, static_cast<float>(cfg.momentum));

  for (int i = 0; i < B; ++i) {
    std::copy(enq[i].begin(), enq[i].end(),
              st.queue.begin() + static_cast<std::size_t>(st.queue_pos) * dim);
    st.queue_pos = (st.queue_pos + 1) % K;
  }
  st.step += 1;

  StepStats out;
  out.step = st.step;
  out.epoch = epoch;
  out.batch = B;
  out.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / B;
  out.neg_min = *std::min_element(n_negs.begin(), n_negs.end());
  out.neg_max = *std::max_element(n_negs.begin(), n_negs.end());
  for (int i = 0; i < B; ++i) {
    out.matched_used += used_matched[i];
    out.contrast_acc += correct[i];
  }
  out.contrast_acc /= B;
  out.param_norm = l2_norm(st.query.params);
  return out;
}

ContrastiveRun train_contrastive(const Dataset& data, const TrainConfig& cfg,
                                 const StepCallback& on_step) {
  validate(cfg);
  const std::size_t n = data.samples.size();
  if (static_cast<int>(n) < cfg.batch_size) {
    throw ConfigError("train_contrastive: dataset smaller than one batch");
  }
  ContrastiveRun run{init_contrastive(cfg), {}};
  warm_queue(run.state, data, cfg);
  const int B = cfg.batch_size;
  const std::size_t steps = n / B;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(n, cfg.seed, epoch);
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<const Sample*> batch(B);
      for (int i = 0; i < B; ++i) {
        batch[i] = &data.samples[order[s * B + i]];
      }
      StepStats stats = contrastive_step(run.state, batch,
                                         static_cast<std::uint64_t>(epoch),
                                         cfg);
      if (on_step) on_step(stats);
      run.log.push_back(stats);
    }
  }
  return run;
}

SupervisedModel init_supervised(const TrainConfig& cfg, int n_classes) {
  validate(cfg);
  if (n_classes < 2) {
    throw ConfigError("init_supervised: need at least 2 classes");
  }
  SupervisedModel model(cfg.encoder, n_classes);
  Rng rng = derive_rng(cfg.seed, 0, 0, Stream::kParamInit);
  init_encoder(model.enc, rng);
  return model;
}

StepStats supervised_step(SupervisedModel& model,
                          const std::vector<const Sample*>& batch,
                          std::uint64_t epoch, const TrainConfig& cfg) {
  const int B = static_cast<int>(batch.size());
  if (B < 1) throw ConfigError("supervised_step: empty batch");
  const int dim = cfg.encoder.embed_dim;
  const int C = model.n_classes;
  const std::size_t n_enc = model.enc.layout.total;
  const std::size_t n_all = n_enc + model.head_w.size() + model.head_b.size();

  std::vector<std::vector<float>> grads(B);
  std::vector<double> losses(B, 0.0);
  std::vector<char> correct(B, 0);

  parallel_for(B, cfg.workers, [&](int i) {
    const Sample& s = *batch[i];
    if (s.fg_class < 0 || s.fg_class >= C) {
      throw ConfigError("supervised_step: label out of range");
    }
    ViewPair pair = make_view_pair(s, batch, cfg.seed, epoch, cfg.aug);
    ForwardCache<float> cache;
    encoder_forward(model.enc, pair.q_view, cache);

    std::vector<float> logits(C, 0.f);
    for (int c = 0; c < C; ++c) {
      const float* wrow = model.head_w.data() + static_cast<std::size_t>(c) *
                                                    dim;
      float acc = model.head_b[c];
      for (int d = 0; d < dim; ++d) acc += wrow[d] * cache.embed[d];
      logits[c] = acc;
    }
    std::vector<float> dlogits(C, 0.f);
    float loss;
    try {
      loss = softmax_ce<float>(logits.data(), C, s.fg_class, dlogits.data());
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (sample " +
                         std::to_string(s.id) + ")");
    }
    losses[i] = loss;
    correct[i] =
        std::max_element(logits.begin(), logits.end()) - logits.begin() ==
                s.fg_class
            ? 1
            : 0;

    const float inv_b = 1.0f / static_cast<float>(B);
    for (float& g : dlogits) g *= inv_b;

    grads[i].assign(n_all, 0.f);
    std::vector<float> d_emb(dim, 0.f);
    for (int c = 0; c < C; ++c) {
      const float g = dlogits[c];
      const float* wrow = model.head_w.data() + static_cast<std::size_t>(c) *
                                                    dim;
      float* dwrow = grads[i].data() + n_enc + static_cast<std::size_t>(c) *
                                                   dim;
      for (int d = 0; d < dim; ++d) {
        dwrow[d] += g * cache.embed[d];
        d_emb[d] += g * wrow[d];
      }
      grads[i][n_enc + model.head_w.size() + c] += g;
    }
    encoder_backward(model.enc, cache, d_emb.data(), grads[i].data());
  });

  std::vector<float> grad(n_all, 0.f);
  for (int i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < n_all; ++j) grad[j] += grads[i][j];
  }
  // one flat SGD update across encoder and head
  const float mu = static_cast<float>(cfg.opt_momentum);
  const float wd = static_cast<float>(cfg.weight_decay);
  const float lr = static_cast<float>(cfg.lr);
  auto update = [&](float* p, std::size_t off, std::size_t count) {
    for (std::size_t j = 0; j < count; ++j) {
      model.velocity[off + j] =
          mu * model.velocity[off + j] + (grad[off + j] + wd * p[j]);
      p[j] -= lr * model.velocity[off + j];
    }
  };
  update(model.enc.params.data(), 0, n_enc);
  update(model.head_w.data(), n_enc, model.head_w.size());
  update(model.head_b.data(), n_enc + model.head_w.size(),
         model.head_b.size());

  StepStats out;
  out.epoch = epoch;
  out.batch = B;
  out.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / B;
  for (int i = 0; i < B; ++i) out.contrast_acc += correct[i];
  out.contrast_acc /= B;
  out.param_norm = l2_norm(model.enc.params);
  return out;
}

SupervisedRun train_supervised(const Dataset& data, const TrainConfig& cfg,
                               const StepCallback& on_step) {
  validate(cfg);
  const std::size_t n = data.samples.size();
  if (static_cast<int>(n) < cfg.batch_size) {
    throw ConfigError("train_supervised: dataset smaller than one batch");
  }
  SupervisedRun run{init_supervised(cfg, data.n_fg_classes), {}};
  const int B = cfg.batch_size;
  const std::size_t steps = n / B;
  std::uint64_t step_count = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(n, cfg.seed, epoch);
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<const Sample*> batch(B);
      for (int i = 0; i < B; ++i) {
        batch[i] = &data.samples[order[s * B + i]];
      }
      StepStats stats = supervised_step(run.model, batch,
                                        static_cast<std::uint64_t>(epoch),
                                        cfg);
      stats.step = ++step_count;
      if (on_step) on_step(stats);
      run.log.push_back(stats);
    }
  }
  return run;
}

double grad_check(const CheckProblem& prob, double eps, std::uint64_t seed) {
  if (eps < 1e-6 || eps > 1e-3) {
    throw ConfigError("grad_check: eps outside [1e-6, 1e-3]");
  }
  std::vector<double> params = prob.params;
  std::vector<double> analytic(params.size(), 0.0);
  prob.loss(params, &analytic);

  std::vector<char> pick(params.size(), 0);
  for (std::size_t idx : prob.always_checked) pick.at(idx) = 1;
  Rng rng = derive_rng(seed, 0, 0, Stream::kGradCheck);
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (!pick[j] && rng.uniform() < 0.01) pick[j] = 1;
  }

  double max_rel = 0.0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (!pick[j]) continue;
    const double orig = params[j];
    const double h = eps * std::max(1.0, std::abs(orig));
    params[j] = orig + h;
    const double lp = prob.loss(params, nullptr);
    params[j] = orig - h;
    const double lm = prob.loss(params, nullptr);
    params[j] = orig;
    const double fd = (lp - lm) / (2.0 * h);
    const double rel = std::abs(fd - analytic[j]) /
                       std::max({std::abs(fd), std::abs(analytic[j]), 1e-6});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

namespace {

std::vector<double> random_unit(Rng& rng, int dim) {
  std::vector<double> v(dim);
  double norm2 = 0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

}  // namespace

CheckProblem make_contrastive_check_problem(std::uint64_t seed,
                                            const EncoderConfig& cfg,
                                            int image_size, int n_negs,
                                            double tau) {
  Rng rng = derive_rng(seed, 0, 0, Stream::kGradCheck);
  Encoder<double> enc(cfg);
  init_encoder(enc, rng);
  Image img(image_size, image_size, cfg.in_channels);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  const int dim = cfg.embed_dim;
  std::vector<double> k = random_unit(rng, dim);
  std::vector<double> negs;
  for (int i = 0; i < n_negs; ++i) {
    const std::vector<double> n = random_unit(rng, dim);
    negs.insert(negs.end(), n.begin(), n.end());
  }

  CheckProblem prob;
  prob.params = enc.params;
  prob.always_checked = bias_indices(cfg);
  prob.loss = [cfg, img, k, negs, n_negs, dim,
               tau](const std::vector<double>& p,
                    std::vector<double>* grad) -> double {
    Encoder<double> e(cfg);
    e.params = p;
    ForwardCache<double> cache;
    encoder_forward(e, img, cache);
    std::vector<double> dq(dim, 0.0);
    const double loss =
        infonce_loss<double>(cache.embed.data(), k.data(), negs.data(),
                             n_negs, dim, tau, nullptr,
                             grad ? dq.data() : nullptr);
    if (grad) {
      grad->assign(p.size(), 0.0);
      encoder_backward(e, cache, dq.data(), grad->data());
    }
    return loss;
  };
  return prob;
}

CheckProblem make_supervised_check_problem(std::uint64_t seed,
                                           const EncoderConfig& cfg,
                                           int image_size, int n_classes) {
  Rng rng = derive_rng(seed, 1, 0, Stream::kGradCheck);
  Encoder<double> enc(cfg);
  init_encoder(enc, rng);
  Image img(image_size, image_size, cfg.in_channels);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  const int dim = cfg.embed_dim;
  const int label = static_cast<int>(rng.uniform_index(n_classes));
  const std::size_t n_enc = enc.layout.total;

  CheckProblem prob;
  prob.params = enc.params;
  for (int j = 0; j < n_classes * dim; ++j) {
    prob.params.push_back(rng.normal() * 0.1);
  }
  for (int j = 0; j < n_classes; ++j) {
    prob.params.push_back(rng.normal() * 0.1);
  }
  prob.always_checked = bias_indices(cfg);
  for (int j = 0; j < n_classes; ++j) {
    prob.always_checked.push_back(n_enc + n_classes * dim + j);
  }
  prob.loss = [cfg, img, n_classes, dim, label,
               n_enc](const std::vector<double>& p,
                      std::vector<double>* grad) -> double {
    Encoder<double> e(cfg);
    e.params.assign(p.begin(), p.begin() + n_enc);
    ForwardCache<double> cache;
    encoder_forward(e, img, cache);
    const double* head_w = p.data() + n_enc;
    const double* head_b = head_w + static_cast<std::size_t>(n_classes) * dim;
    std::vector<double> logits(n_classes, 0.0);
    for (int c = 0; c < n_classes; ++c) {
      double acc = head_b[c];
      for (int d = 0; d < dim; ++d) {
        acc += head_w[static_cast<std::size_t>(c) * dim + d] * cache.embed[d];
      }
      logits[c] = acc;
    }
    std::vector<double> dlogits(n_classes, 0.0);
    const double loss = softmax_ce<double>(logits.data(), n_classes, label,
                                           grad ? dlogits.data() : nullptr);
    if (grad) {
      grad->assign(p.size(), 0.0);
      std::vector<double> d_emb(dim, 0.0);
      for (int c = 0; c < n_classes; ++c) {
        for (int d = 0; d < dim; ++d) {
          (*grad)[n_enc + static_cast<std::size_t>(c) * dim + d] =
              dlogits[c] * cache.embed[d];
          d_emb[d] += dlogits[c] * head_w[static_cast<std::size_t>(c) * dim +
                                          d];
        }
        (*grad)[n_enc + static_cast<std::size_t>(n_classes) * dim + c] =
            dlogits[c];
      }
      encoder_backward(e, cache, d_emb.data(), grad->data());
    }
    return loss;
  };
  return prob;
}

namespace {

json corruption_to_json(const std::optional<MaskCorruption>& c) {
  if (!c.has_value()) return nullptr;
  return json{{"max_rotation_deg", c->max_rotation_deg},
              {"max_shear_deg", c->max_shear_deg},
              {"max_translation", c->max_translation},
              {"hflip_prob", c->hflip_prob}};
}

std::optional<MaskCorruption> corruption_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  reject_unknown_keys(j,
                      {"max_rotation_deg", "max_shear_deg", "max_translation",
                       "hflip_prob"},
                      "aug.corruption");
  MaskCorruption c{};
  c.max_rotation_deg = j.value("max_rotation_deg", 0.0);
  c.max_shear_deg = j.value("max_shear_deg", 0.0);
  c.max_translation = j.value("max_translation", 0.0);
  c.hflip_prob = j.value("hflip_prob", 0.0);
  return c;
}

const char* mode_name(AugMode m) {
  switch (m) {
    case AugMode::kNone: return "none";
    case AugMode::kBgRm: return "bg_rm";
    case AugMode::kBgRandom: return "bg_random";
    case AugMode::kBgSwaps: return "bg_swaps";
  }
  return "none";
}

AugMode mode_from_name(const std::string& s) {
  if (s == "none") return AugMode::kNone;
  if (s == "bg_rm") return AugMode::kBgRm;
  if (s == "bg_random") return AugMode::kBgRandom;
  if (s == "bg_swaps") return AugMode::kBgSwaps;
  throw ConfigError("aug.mode: unknown value '" + s + "'");
}

json aug_to_json_obj(const AugConfig& cfg) {
  return json{
      {"mode", mode_name(cfg.mode)},
      {"p_pos", cfg.p_pos},
      {"p_neg", cfg.p_neg},
      {"p_remove", cfg.p_remove},
      {"fg_min", cfg.fg_min},
      {"max_tries", cfg.max_tries},
      {"corruption", corruption_to_json(cfg.corruption)},
      {"aug_in_query", cfg.aug_in_query},
      {"aug_in_key", cfg.aug_in_key},
      {"enqueue_augmented_keys", cfg.enqueue_augmented_keys},
      {"match_target",
       cfg.match_target == MatchTarget::kQuery ? "query" : "positive"},
      {"couple_neg_to_key", cfg.couple_neg_to_key},
      {"n_matched", cfg.n_matched},
      {"neg_construction",
       cfg.neg_construction == NegConstruction::kPasteFgOnQueryBg
           ? "paste_fg_on_query_bg"
           : "literal_formula"},
      {"scale", json::array({cfg.scale.first, cfg.scale.second})},
      {"hflip_prob", cfg.hflip_prob},
      {"jitter_strength", cfg.jitter_strength}};
}

AugConfig aug_from_json_obj(const json& j) {
  reject_unknown_keys(
      j,
      {"mode", "p_pos", "p_neg", "p_remove", "fg_min", "max_tries",
       "corruption", "aug_in_query", "aug_in_key", "enqueue_augmented_keys",
       "match_target", "couple_neg_to_key", "n_matched", "neg_construction",
       "scale", "hflip_prob", "jitter_strength"},
      "aug");
  AugConfig cfg;
  if (j.contains("mode")) cfg.mode = mode_from_name(j["mode"]);
  cfg.p_pos = j.value("p_pos", cfg.p_pos);
  cfg.p_neg = j.value("p_neg", cfg.p_neg);
  cfg.p_remove = j.value("p_remove", cfg.p_remove);
  cfg.fg_min = j.value("fg_min", cfg.fg_min);
  cfg.max_tries = j.value("max_tries", cfg.max_tries);
  if (j.contains("corruption")) {
    cfg.corruption = corruption_from_json(j["corruption"]);
  }
  cfg.aug_in_query = j.value("aug_in_query", cfg.aug_in_query);
  cfg.aug_in_key = j.value("aug_in_key", cfg.aug_in_key);
  cfg.enqueue_augmented_keys =
      j.value("enqueue_augmented_keys", cfg.enqueue_augmented_keys);
  if (j.contains("match_target")) {
    const std::string t = j["match_target"];
    if (t == "query") {
      cfg.match_target = MatchTarget::kQuery;
    } else if (t == "positive") {
      cfg.match_target = MatchTarget::kPositive;
    } else {
      throw ConfigError("aug.match_target: unknown value '" + t + "'");
    }
  }
  cfg.couple_neg_to_key = j.value("couple_neg_to_key", cfg.couple_neg_to_key);
  cfg.n_matched = j.value("n_matched", cfg.n_matched);
  if (j.contains("neg_construction")) {
    const std::string t = j["neg_construction"];
    if (t == "paste_fg_on_query_bg") {
      cfg.neg_construction = NegConstruction::kPasteFgOnQueryBg;
    } else if (t == "literal_formula") {
      cfg.neg_construction = NegConstruction::kLiteralFormula;
    } else {
      throw ConfigError("aug.neg_construction: unknown value '" + t + "'");
    }
  }
  if (j.contains("scale")) {
    const auto& s = j["scale"];
    if (!s.is_array() || s.size() != 2) {
      throw ConfigError("aug.scale: expected [lo, hi]");
    }
    cfg.scale = {s[0].get<double>(), s[1].get<double>()};
  }
  cfg.hflip_prob = j.value("hflip_prob", cfg.hflip_prob);
  cfg.jitter_strength = j.value("jitter_strength", cfg.jitter_strength);
  return cfg;
}

json encoder_to_json_obj(const EncoderConfig& cfg) {
  return json{{"in_channels", cfg.in_channels}, {"c1", cfg.c1},
              {"c2", cfg.c2},                   {"c3", cfg.c3},
              {"hidden_dim", cfg.hidden_dim},   {"embed_dim", cfg.embed_dim}};
}

EncoderConfig encoder_from_json_obj(const json& j) {
  reject_unknown_keys(
      j, {"in_channels", "c1", "c2", "c3", "hidden_dim", "embed_dim"},
      "encoder");
  EncoderConfig cfg;
  cfg.in_channels = j.value("in_channels", cfg.in_channels);
  cfg.c1 = j.value("c1", cfg.c1);
  cfg.c2 = j.value("c2", cfg.c2);
  cfg.c3 = j.value("c3", cfg.c3);
  cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  if (cfg.in_channels < 1 || cfg.c1 < 1 || cfg.c2 < 1 || cfg.c3 < 1 ||
      cfg.hidden_dim < 1 || cfg.embed_dim < 1) {
    throw ConfigError("encoder: all dimensions must be positive");
  }
  return cfg;
}

json train_to_json_obj(const TrainConfig& cfg) {
  return json{{"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"lr", cfg.lr},
              {"opt_momentum", cfg.opt_momentum},
              {"weight_decay", cfg.weight_decay},
              {"queue_size", cfg.queue_size},
              {"tau", cfg.tau},
              {"momentum", cfg.momentum},
              {"seed", cfg.seed},
              {"aug", aug_to_json_obj(cfg.aug)},
              {"encoder", encoder_to_json_obj(cfg.encoder)}};
}

// workers is deliberately absent from the JSON form: it is a runtime
// execution knob (flag or environment), and results must not depend on it,
// so neither checkpoints nor config snapshots record it
TrainConfig train_from_json_obj(const json& j) {
  reject_unknown_keys(j,
                      {"batch_size", "epochs", "lr", "opt_momentum",
                       "weight_decay", "queue_size", "tau", "momentum",
                       "seed", "aug", "encoder"},
                      "train");
  TrainConfig cfg;
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.opt_momentum = j.value("opt_momentum", cfg.opt_momentum);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.queue_size = j.value("queue_size", cfg.queue_size);
  cfg.tau = j.value("tau", cfg.tau);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("aug")) cfg.aug = aug_from_json_obj(j["aug"]);
  if (j.contains("encoder")) {
    cfg.encoder = encoder_from_json_obj(j["encoder"]);
  }
  return cfg;
}

json parse_json_text(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

}  // namespace

std::string aug_config_to_json(const AugConfig& cfg) {
  return aug_to_json_obj(cfg).dump(2);
}

std::string train_config_to_json(const TrainConfig& cfg) {
  return train_to_json_obj(cfg).dump(2);
}

AugConfig aug_config_from_json(const std::string& text) {
  try {
    return aug_from_json_obj(parse_json_text(text, "aug config"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("aug config: ") + e.what());
  }
}

TrainConfig train_config_from_json(const std::string& text) {
  try {
    return train_from_json_obj(parse_json_text(text, "train config"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

namespace {

struct BlobWriter {
  std::vector<std::uint8_t> bytes;
  json table = json::array();

  void add(const char* name, const std::vector<float>& v) {
    table.push_back(json{{"name", name},
                         {"offset", bytes.size()},
                         {"count", v.size()}});
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    bytes.insert(bytes.end(), p, p + v.size() * sizeof(float));
  }
};

std::vector<float> read_blob(const std::vector<std::uint8_t>& bytes,
                             const json& table, const char* name) {
  for (const auto& entry : table) {
    if (entry.at("name") != name) continue;
    const std::size_t offset = entry.at("offset");
    const std::size_t count = entry.at("count");
    if (offset + count * sizeof(float) > bytes.size()) {
      throw IntegrityError(std::string("checkpoint blob '") + name +
                           "' exceeds file size");
    }
    std::vector<float> v(count);
    std::memcpy(v.data(), bytes.data() + offset, count * sizeof(float));
    for (float x : v) {
      if (!std::isfinite(x)) {
        throw IntegrityError(std::string("checkpoint blob '") + name +
                             "' holds non-finite values");
      }
    }
    return v;
  }
  throw IntegrityError(std::string("checkpoint blob '") + name +
                       "' missing");
}

json load_manifest(const std::string& dir, const char* kind) {
  json manifest;
  try {
    manifest = json::parse(read_file_text(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint manifest: ") + e.what());
  }
  try {
    if (manifest.at("kind") != kind || manifest.at("schema_version") != 1) {
      throw IntegrityError("checkpoint manifest: wrong kind or version");
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint manifest: ") + e.what());
  }
  return manifest;
}

}  // namespace

void save_checkpoint(const ContrastiveState& st, const TrainConfig& cfg,
                     std::uint64_t epoch, const std::string& dir) {
  std::filesystem::create_directories(dir);
  BlobWriter blobs;
  blobs.add("query_params", st.query.params);
  blobs.add("key_params", st.key.params);
  blobs.add("velocity", st.velocity);
  blobs.add("queue", st.queue);
  json manifest{{"schema_version", 1},
                {"kind", "bgaug-checkpoint"},
                {"step", st.step},
                {"epoch", epoch},
                {"queue_size", st.queue_size},
                {"queue_pos", st.queue_pos},
                {"queue_full", st.queue_full},
                {"train", train_to_json_obj(cfg)},
                {"blobs", blobs.table}};
  write_file_text(dir + "/manifest.json", manifest.dump(2) + "\n");
  write_file_bytes(dir + "/params.bin", blobs.bytes.data(),
                   blobs.bytes.size());
}

ContrastiveState load_checkpoint(const std::string& dir,
                                 TrainConfig* cfg_out,
                                 std::uint64_t* epoch_out) {
  const json manifest = load_manifest(dir, "bgaug-checkpoint");
  TrainConfig cfg;
  try {
    cfg = train_from_json_obj(manifest.at("train"));
    const std::vector<std::uint8_t> bytes = read_file_bytes(dir +
                                                            "/params.bin");
    const json& table = manifest.at("blobs");
    ContrastiveState st(cfg.encoder, manifest.at("queue_size"));
    st.query.params = read_blob(bytes, table, "query_params");
    st.key.params = read_blob(bytes, table, "key_params");
    st.velocity = read_blob(bytes, table, "velocity");
    st.queue = read_blob(bytes, table, "queue");
    if (st.query.params.size() != st.query.layout.total ||
        st.key.params.size() != st.query.layout.total ||
        st.velocity.size() != st.query.layout.total ||
        st.queue.size() != static_cast<std::size_t>(st.queue_size) *
                               cfg.encoder.embed_dim) {
      throw IntegrityError("checkpoint: blob sizes disagree with config");
    }
    st.queue_pos = manifest.at("queue_pos");
    st.queue_full = manifest.at("queue_full");
    st.step = manifest.at("step");
    if (epoch_out) *epoch_out = manifest.at("epoch");
    if (cfg_out) *cfg_out = cfg;
    return st;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint manifest: ") + e.what());
  }
}

void save_supervised_checkpoint(const SupervisedModel& model,
                                const TrainConfig& cfg, std::uint64_t epoch,
                                const std::string& dir) {
  std::filesystem::create_directories(dir);
  BlobWriter blobs;
  blobs.add("enc_params", model.enc.params);
  blobs.add("head_w", model.head_w);
  blobs.add("head_b", model.head_b);
  blobs.add("velocity", model.velocity);
  json manifest{{"schema_version", 1},
                {"kind", "bgaug-supervised-checkpoint"},
                {"epoch", epoch},
                {"n_classes", model.n_classes},
                {"train", train_to_json_obj(cfg)},
                {"blobs", blobs.table}};
  write_file_text(dir + "/manifest.json", manifest.dump(2) + "\n");
  write_file_bytes(dir + "/params.bin", blobs.bytes.data(),
                   blobs.bytes.size());
}

SupervisedModel load_supervised_checkpoint(const std::string& dir,
                                           TrainConfig* cfg_out,
                                           std::uint64_t* epoch_out) {
  const json manifest = load_manifest(dir, "bgaug-supervised-checkpoint");
  try {
    TrainConfig cfg = train_from_json_obj(manifest.at("train"));
    const std::vector<std::uint8_t> bytes = read_file_bytes(dir +
                                                            "/params.bin");
    const json& table = manifest.at("blobs");
    SupervisedModel model(cfg.encoder, manifest.at("n_classes"));
    model.enc.params = read_blob(bytes, table, "enc_params");
    model.head_w = read_blob(bytes, table, "head_w");
    model.head_b = read_blob(bytes, table, "head_b");
    model.velocity = read_blob(bytes, table, "velocity");
    if (model.enc.params.size() != model.enc.layout.total ||
        model.head_w.size() != static_cast<std::size_t>(model.n_classes) *
                                   cfg.encoder.embed_dim ||
        model.head_b.size() != static_cast<std::size_t>(model.n_classes) ||
        model.velocity.size() !=
            model.enc.layout.total + model.head_w.size() +
                model.head_b.size()) {
      throw IntegrityError(
          "supervised checkpoint: blob sizes disagree with config");
    }
    if (epoch_out) *epoch_out = manifest.at("epoch");
    if (cfg_out) *cfg_out = cfg;
    return model;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace bgaug
