#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bgaug/dataset.hpp"
#include "bgaug/net.hpp"
#include "bgaug/synthgen.hpp"

namespace bgaug {

struct ProbeConfig {
  double lr = 1.0;  // initial step size, halved by backtracking
  int max_iters = 2000;
  double grad_tol = 1e-5;  // stop when the gradient norm falls below this
};

// linear classifier over frozen L2-normalized embeddings
struct ProbeResult {
  int dim = 0;
  int n_classes = 0;
  std::vector<double> w;  // n_classes x dim
  std::vector<double> b;
  bool converged = false;
  int iters = 0;
  double final_loss = 0.0;
};

// mean softmax cross-entropy of the linear classifier; params is w (row
// major, n_classes x dim) followed by b. Optional gradient in same layout.
double probe_objective(const std::vector<double>& params,
                       const std::vector<double>& features,
                       const std::vector<int>& labels, int n, int dim,
                       int n_classes, std::vector<double>* grad = nullptr);

// Full-batch gradient descent from zero parameters (first loss is exactly
// ln n_classes) with Armijo backtracking. Returns the best iterate seen and
// a convergence flag; never applies any augmentation.
ProbeResult train_probe(const std::vector<double>& features,
                        const std::vector<int>& labels, int n, int dim,
                        int n_classes, const ProbeConfig& cfg = {});

// embeddings of raw images, row i = encode(enc, images[i])
std::vector<double> embed_images(const Encoder<float>& enc,
                                 const std::vector<Image>& images);

// embeds the dataset's raw images and fits the probe to fg_class labels
ProbeResult train_probe_on(const Encoder<float>& enc, const Dataset& data,
                           const ProbeConfig& cfg = {});

int probe_predict(const ProbeResult& probe, const double* embedding);

struct SplitAccuracy {
  std::string name;
  double accuracy = 0.0;
  int n = 0;
};

std::vector<SplitAccuracy> eval_splits(
    const Encoder<float>& enc, const ProbeResult& probe,
    const std::vector<ChallengeSplit>& splits);

double dataset_accuracy(const Encoder<float>& enc, const ProbeResult& probe,
                        const Dataset& data);

struct AttackConfig {
  enum class Kind { kFgsm, kPgd };
  Kind kind = Kind::kFgsm;
  double epsilon = 2.0 / 255.0;  // l-infinity radius in [0,1] pixel units
  int pgd_steps = 40;
  double pgd_rel_step = 0.01 / 0.3;  // per-step size = epsilon * this
};

void validate(const AttackConfig& cfg);  // throws ConfigError

// differentiable image objective: returns the loss and, when the output
// pointer is non-null, the gradient with respect to every pixel (image
// memory order)
template <class T>
using LossGradFn = std::function<T(const Image&, std::vector<T>*)>;

// cross-entropy of the probe-over-frozen-encoder composite at a fixed label
template <class T>
LossGradFn<T> make_composite_loss(const Encoder<T>& enc,
                                  const ProbeResult& probe, int label);

// x' = clamp_[0,1](x + eps * sign(grad)), with sign(0) = 0
template <class T>
Image fgsm_attack(const LossGradFn<T>& fn, const Image& x, double eps);

// iterated sign steps, each projected into the eps-ball around x and [0,1];
// starts from the clean image. One step with pgd_rel_step >= 1 reproduces
// fgsm_attack bit-exactly.
template <class T>
Image pgd_attack(const LossGradFn<T>& fn, const Image& x,
                 const AttackConfig& cfg);

struct RobustResult {
  double clean_accuracy = 0.0;
  double clean_mean_loss = 0.0;
  double attacked_accuracy = 0.0;
  double attacked_mean_loss = 0.0;
  int n = 0;
};

RobustResult robust_accuracy(const Encoder<float>& enc,
                             const ProbeResult& probe,
                             const std::vector<Image>& images,
                             const std::vector<int>& labels,
                             const AttackConfig& cfg);

}  // namespace bgaug
