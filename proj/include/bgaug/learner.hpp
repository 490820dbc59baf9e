#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bgaug/augpipe.hpp"
#include "bgaug/dataset.hpp"
#include "bgaug/net.hpp"
#include "bgaug/rng.hpp"

namespace bgaug {

struct TrainConfig {
  int batch_size = 64;
  int epochs = 20;
  double lr = 0.05;
  double opt_momentum = 0.9;
  double weight_decay = 1e-4;
  int queue_size = 512;  // K, must be a positive multiple of batch_size
  double tau = 0.2;
  double momentum = 0.99;  // key-encoder EMA coefficient
  std::uint64_t seed = 0;
  int workers = 1;
  AugConfig aug;
  EncoderConfig encoder;
};

// throws ConfigError on violated invariants (batch_size >= 2, queue size a
// positive multiple of batch_size, positive lr/tau, momentum in [0,1], ...)
void validate(const TrainConfig& cfg);

struct StepStats {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double loss = 0.0;
  double contrast_acc = 0.0;  // positive logit beats every negative
  int batch = 0;
  int neg_min = 0;       // negatives seen by a query this step (min/max
  int neg_max = 0;       // over the batch; equal when the count is uniform)
  int matched_used = 0;  // queries whose extra negatives were matched ones
  double param_norm = 0.0;
};

struct ContrastiveState {
  Encoder<float> query;
  Encoder<float> key;
  std::vector<float> queue;  // ring of queue_size rows x embed_dim
  int queue_size = 0;
  int queue_pos = 0;  // next slot to overwrite
  bool queue_full = false;
  std::uint64_t step = 0;
  std::vector<float> velocity;  // SGD momentum buffer for query params

  ContrastiveState(const EncoderConfig& e, int k)
      : query(e),
        key(e),
        queue(static_cast<std::size_t>(k) * e.embed_dim, 0.f),
        queue_size(k),
        velocity(query.layout.total, 0.f) {}
};

// He-initialized query encoder (stream kParamInit), key starts as a copy
ContrastiveState init_contrastive(const TrainConfig& cfg);

// view construction during queue warm-up draws from this pseudo-epoch so it
// never collides with the streams of any real epoch
constexpr std::uint64_t kWarmupEpoch = ~std::uint64_t{0};

// fills the queue by encoding the first queue_size/batch_size batches of the
// epoch-0 iteration order with the key encoder, before any parameter update
void warm_queue(ContrastiveState& st, const Dataset& data,
                const TrainConfig& cfg);

// One optimizer step. Per sample: views via make_view_pair; the query view
// is encoded by the query encoder and every key or negative by the key
// encoder, which receives no gradient. Negatives are the whole queue plus
// extras: in bg_swaps mode, with probability p_neg, n_matched background-
// matched negatives; otherwise one freshly augmented other batch sample.
// Per-sample gradients land in private buffers and are reduced in batch
// order, so any worker count gives bit-identical results.
StepStats contrastive_step(ContrastiveState& st,
                           const std::vector<const Sample*>& batch,
                           std::uint64_t epoch, const TrainConfig& cfg);

struct ContrastiveRun {
  ContrastiveState state;
  std::vector<StepStats> log;
};

using StepCallback = std::function<void(const StepStats&)>;

// shuffles per epoch (stream kShuffle), drops the trailing partial batch,
// warms the queue, then runs cfg.epochs epochs of contrastive_step
ContrastiveRun train_contrastive(const Dataset& data, const TrainConfig& cfg,
                                 const StepCallback& on_step = nullptr);

struct SupervisedModel {
  Encoder<float> enc;
  int n_classes = 0;
  std::vector<float> head_w;  // n_classes x embed_dim
  std::vector<float> head_b;
  std::vector<float> velocity;  // encoder params, then head_w, then head_b

  SupervisedModel(const EncoderConfig& e, int classes)
      : enc(e),
        n_classes(classes),
        head_w(static_cast<std::size_t>(classes) * e.embed_dim, 0.f),
        head_b(classes, 0.f),
        velocity(enc.layout.total + head_w.size() + head_b.size(), 0.f) {}
};

// zero-initialized head on top of a He-initialized encoder, so the first
// loss is exactly ln(n_classes)
SupervisedModel init_supervised(const TrainConfig& cfg, int n_classes);

// one cross-entropy SGD step on single views (the query side of the view
// pair, so background augmentation settings apply here too)
StepStats supervised_step(SupervisedModel& model,
                          const std::vector<const Sample*>& batch,
                          std::uint64_t epoch, const TrainConfig& cfg);

struct SupervisedRun {
  SupervisedModel model;
  std::vector<StepStats> log;
};

SupervisedRun train_supervised(const Dataset& data, const TrainConfig& cfg,
                               const StepCallback& on_step = nullptr);

// A differentiable scalar objective over a flat parameter vector. loss(p,
// grad) returns the loss and, when grad is non-null, writes d loss / d p.
struct CheckProblem {
  std::vector<double> params;
  std::vector<std::size_t> always_checked;  // typically all bias indices
  std::function<double(const std::vector<double>&, std::vector<double>*)>
      loss;
};

// Central-difference audit of the analytic gradient on every always_checked
// index plus a random 1% of the rest. Returns the max relative error with
// denominator max(|fd|, |analytic|, 1e-6). eps must lie in [1e-6, 1e-3];
// the step per coordinate is eps * max(1, |value|).
double grad_check(const CheckProblem& prob, double eps, std::uint64_t seed);

// encoder forward into an InfoNCE loss against fixed random unit-norm key
// and negatives; double precision for finite-difference headroom
CheckProblem make_contrastive_check_problem(std::uint64_t seed,
                                            const EncoderConfig& cfg = {},
                                            int image_size = 16,
                                            int n_negs = 8, double tau = 0.2);

// encoder plus linear head into softmax cross-entropy; head parameters are
// appended after the encoder block in the flat vector
CheckProblem make_supervised_check_problem(std::uint64_t seed,
                                           const EncoderConfig& cfg = {},
                                           int image_size = 16,
                                           int n_classes = 4);

// manifest.json plus a float32 blob file; directory is created
void save_checkpoint(const ContrastiveState& st, const TrainConfig& cfg,
                     std::uint64_t epoch, const std::string& dir);
ContrastiveState load_checkpoint(const std::string& dir,
                                 TrainConfig* cfg_out = nullptr,
                                 std::uint64_t* epoch_out = nullptr);

void save_supervised_checkpoint(const SupervisedModel& model,
                                const TrainConfig& cfg, std::uint64_t epoch,
                                const std::string& dir);
SupervisedModel load_supervised_checkpoint(const std::string& dir,
                                           TrainConfig* cfg_out = nullptr,
                                           std::uint64_t* epoch_out = nullptr);

// AugConfig <-> JSON used by checkpoints and the experiment config file.
// Parsers reject unknown keys by name (ConfigError).
std::string aug_config_to_json(const AugConfig& cfg);
std::string train_config_to_json(const TrainConfig& cfg);
AugConfig aug_config_from_json(const std::string& text);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace bgaug
