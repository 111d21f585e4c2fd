#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "igan/feature_core.hpp"
#include "igan/gan_nets.hpp"

namespace igan {

// Which loss terms are active. `infomax` adds the contrastive terms to the
// hinge GAN objective; the ssgan variants add the 4-way rotation task.
enum class GanMode { sngan, infomax, ssgan, ssgan_infomax };

std::string to_string(GanMode mode);
GanMode gan_mode_from_string(const std::string& s);

enum class LrDecay { none, linear };

struct TrainConfig {
  GanMode mode = GanMode::infomax;
  double alpha = 0.2;  // weight of the contrastive term in the generator loss
  double beta = 0.2;   // weight of the contrastive term in the discriminator loss
  double lr = 2e-4;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  long n_dis = 5;
  long total_g_steps = 100000;
  LrDecay lr_decay = LrDecay::linear;
  long batch_size = 64;
  long rkhs_dim = 1024;
  double ss_weight_d = 1.0;  // rotation-loss weights, ssgan modes only
  double ss_weight_g = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
  // Canonical key=value serialization of this config plus the network spec;
  // its hash ties checkpoints to the run that wrote them.
  std::string canonical_string(const NetSpec& net) const;
};

struct StepLog {
  long g_step = 0;
  double loss_d_gan = 0.0;
  double loss_g_gan = 0.0;
  double loss_nce_real = 0.0;
  double loss_nce_fake = 0.0;
  double nce_acc = 0.0;  // contrastive accuracy on the real batch
  double lr = 0.0;
  double wall_seconds = 0.0;
};

std::string steplog_csv_header();
std::string steplog_csv_row(const StepLog& log);

template <typename T>
struct Dataset {
  Tensor<T> images;          // N x H x W x 3, values in [-1, 1]
  std::vector<long> labels;  // optional, empty when unlabeled

  long size() const { return images.rank() >= 1 ? images.dim(0) : 0; }
};

// Hinge GAN losses over raw logits.
template <typename T>
T hinge_d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake);
template <typename T>
T hinge_g_loss(const Tensor<T>& d_fake);

// Mean softmax cross-entropy of N x C logits against integer labels.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<long>& labels);

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(T beta1, T beta2, T eps = T(1e-8)) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const nn::ParamRefs<T>& params) {
    m_.clear();
    v_.clear();
    for (const auto* p : params.params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
    t_ = 0;
  }

  void step(nn::ParamRefs<T>& params, T lr) {
    IGAN_CHECK(m_.size() == params.params.size(), "Adam: parameter set changed");
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (std::size_t i = 0; i < params.params.size(); ++i) {
      auto& p = *params.params[i];
      T* m = m_[i].data();
      T* v = v_[i].data();
      const T* g = p.grad.data();
      T* w = p.value.data();
      for (std::size_t j = 0; j < p.value.numel(); ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
      }
    }
  }

  long t() const { return t_; }
  void set_t(long t) { t_ = t; }
  std::vector<Tensor<T>>& m() { return m_; }
  std::vector<Tensor<T>>& v() { return v_; }

 private:
  T beta1_ = T(0), beta2_ = T(0.9), eps_ = T(1e-8);
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

// Deterministic cyclic loader: Fisher-Yates reshuffle per epoch, remainder
// rows dropped. The epoch-start RNG state is kept so a checkpoint can rebuild
// the in-flight permutation.
template <typename T>
class DataLoader {
 public:
  DataLoader() = default;
  DataLoader(const Dataset<T>* data, long batch_size, Rng rng)
      : data_(data), batch_(batch_size), rng_(std::move(rng)) {
    IGAN_CHECK(data_->size() >= batch_, "dataset smaller than one batch");
    new_epoch();
  }

  Tensor<T> next_batch() {
    if (cursor_ + batch_ > static_cast<long>(perm_.size())) new_epoch();
    std::vector<long> idx(perm_.begin() + cursor_, perm_.begin() + cursor_ + batch_);
    cursor_ += batch_;
    return Tensor<T>::gather0(data_->images, idx);
  }

  const std::string& epoch_rng_start() const { return epoch_rng_start_; }
  long cursor() const { return cursor_; }

  // Restores mid-epoch position from checkpointed state.
  void restore(const std::string& epoch_rng_start, long cursor) {
    rng_ = Rng::deserialize(epoch_rng_start);
    new_epoch();
    IGAN_CHECK(cursor >= 0 && cursor <= static_cast<long>(perm_.size()),
               "loader restore: cursor out of range");
    cursor_ = cursor;
  }

 private:
  void new_epoch() {
    epoch_rng_start_ = rng_.serialize();
    perm_.resize(static_cast<std::size_t>(data_->size()));
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = static_cast<long>(i);
    rng_.shuffle(perm_.begin(), perm_.end());
    cursor_ = 0;
  }

  const Dataset<T>* data_ = nullptr;
  long batch_ = 0;
  Rng rng_;
  std::vector<long> perm_;
  long cursor_ = 0;
  std::string epoch_rng_start_;
};

// All mutable training state: networks, critics, optimizers, RNG streams and
// step counters. Checkpointing serializes exactly this.
template <typename T>
struct TrainState {
  TrainConfig cfg;
  NetSpec net;

  std::unique_ptr<GeneratorBase<T>> gen;
  std::unique_ptr<DiscriminatorBase<T>> disc;
  std::unique_ptr<CriticPair<T>> critics;  // present in infomax modes

  nn::ParamRefs<T> g_params;
  nn::ParamRefs<T> d_params;  // discriminator plus critics

  Adam<T> opt_g, opt_d;
  Rng rng_noise;  // z draws
  Rng rng_data;   // loader shuffles (handed to the DataLoader)

  long g_step = 0;
  long d_step = 0;

  // Mid-epoch loader position, mirrored here after every generator step so
  // checkpoints capture it. Empty until training starts.
  std::string loader_epoch_rng;
  long loader_cursor = 0;

  TrainState(TrainConfig config, NetSpec net_spec);

  bool use_nce() const {
    return cfg.mode == GanMode::infomax || cfg.mode == GanMode::ssgan_infomax;
  }
  bool use_ss() const { return cfg.mode == GanMode::ssgan || cfg.mode == GanMode::ssgan_infomax; }

  double current_lr() const;
  Tensor<T> sample_noise(long n);
  // Samples images with frozen batch-norm statistics from a caller-supplied
  // stream, leaving training state untouched.
  Tensor<T> sample_images_eval(long n, Rng& rng);
};

// One discriminator update on `real`: hinge loss on a concatenated
// real+fake forward, the contrastive term on real features only, one Adam
// update of discriminator and critic parameters.
template <typename T>
struct DStepResult {
  double loss_d_gan = 0.0;
  double loss_nce_real = 0.0;
  double nce_acc_real = 0.0;
  double loss_ss_real = 0.0;
};
template <typename T>
DStepResult<T> discriminator_step(TrainState<T>& state, const Tensor<T>& real);

// One generator update: hinge plus the contrastive term on fake features,
// gradients flowing through the frozen discriminator and critics.
template <typename T>
struct GStepResult {
  double loss_g_gan = 0.0;
  double loss_nce_fake = 0.0;
  double nce_acc_fake = 0.0;
  double loss_ss_fake = 0.0;
};
template <typename T>
GStepResult<T> generator_step(TrainState<T>& state);

// Rotation-task cross-entropy, averaged over all four rotations of a batch.
template <typename T>
T rotation_task_loss(DiscriminatorBase<T>& disc, const Tensor<T>& images);

// (d_term on real images, g_term on fake images) for the ssgan objectives.
template <typename T>
std::pair<T, T> ss_rotation_losses(DiscriminatorBase<T>& disc, const Tensor<T>& real,
                                   const Tensor<T>& fake);

struct TrainCallbacks {
  std::function<void(const StepLog&)> on_step;                  // every generator step
  std::function<void(long)> on_checkpoint;                      // after checkpoint_every g-steps
  long checkpoint_every = 0;                                    // 0 disables
};

// Alternates n_dis discriminator steps with one generator step until
// total_g_steps, with linear lr decay when configured. Throws NumericError on
// the first non-finite loss, leaving the last checkpoint untouched.
template <typename T>
void run_training(TrainState<T>& state, const Dataset<T>& data, const TrainCallbacks& callbacks);

}  // namespace igan
