#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "igan/feature_core.hpp"
#include "igan/nn/layers.hpp"
#include "igan/nn/spectral_norm.hpp"

namespace igan {

// Architecture selector for one network pair.
struct NetSpec {
  enum class Arch { resnet, dcgan };

  Arch arch = Arch::resnet;
  long image_size = 32;  // resnet: 32, 48 or 128; dcgan: 32
  long noise_dim = 128;
  bool with_rotation_head = false;
  // Multiplies every discriminator channel width (rounded up, min 1); the
  // generator always runs at full width.
  double base_width_scale = 1.0;
  // Residual block index whose output is the local feature map; -1 selects
  // the per-size default.
  long feature_tap = -1;
  // Channel widths per block. Empty lists select the per-size defaults.
  // Generator: {channels of the initial linear map, out-channels of each
  // upsampling stage...}; discriminator: out-channels of each block.
  std::vector<long> gen_widths;
  std::vector<long> disc_widths;
};

template <typename T>
struct DiscriminatorOutput {
  Tensor<T> logit;              // N x 1
  FeatureBundle<T> features;    // local tap + post-sum-pool global
  Tensor<T> rotation_logits;    // N x 4 when the rotation head exists, else empty
};

// Gradients fed back into the discriminator; empty tensors mean zero.
template <typename T>
struct DiscGrads {
  Tensor<T> d_logit;
  Tensor<T> d_local;
  Tensor<T> d_global;
  Tensor<T> d_rotation;
};

template <typename T>
class GeneratorBase {
 public:
  virtual ~GeneratorBase() = default;
  virtual Tensor<T> forward(const Tensor<T>& z) = 0;
  // Returns dL/dz.
  virtual Tensor<T> backward(const Tensor<T>& d_images) = 0;
  virtual nn::ParamRefs<T> params() = 0;
  virtual void set_training(bool training) = 0;
  virtual long noise_dim() const = 0;
  virtual long image_size() const = 0;
};

template <typename T>
class DiscriminatorBase {
 public:
  virtual ~DiscriminatorBase() = default;
  virtual DiscriminatorOutput<T> forward(const Tensor<T>& x) = 0;
  // Returns dL/dx.
  virtual Tensor<T> backward(const DiscGrads<T>& g) = 0;
  virtual nn::ParamRefs<T> params() = 0;
  virtual void set_training(bool training) = 0;
  // Extra power iterations on all spectral-normalized weights.
  virtual void refresh_sn(long iters) = 0;
  virtual bool has_rotation_head() const = 0;
  virtual long local_m() const = 0;
  virtual long local_k() const = 0;
  virtual long global_k() const = 0;
};

// Deterministically seeded builders.
template <typename T>
std::unique_ptr<GeneratorBase<T>> build_generator(const NetSpec& spec, std::uint64_t seed);
template <typename T>
std::unique_ptr<DiscriminatorBase<T>> build_discriminator(const NetSpec& spec, std::uint64_t seed);

// DCGAN pair for 32x32x3 stacked-digit data; `scale` shrinks only the
// discriminator.
template <typename T>
std::pair<std::unique_ptr<GeneratorBase<T>>, std::unique_ptr<DiscriminatorBase<T>>> build_dcgan(
    double scale, std::uint64_t seed, bool with_rotation_head = false);

// Rotates every image in an NHWC batch by r * 90 degrees counterclockwise.
template <typename T>
Tensor<T> rotate_batch(const Tensor<T>& x, int r);

// Draws n images in eval mode, in chunks of `batch`. Batch norm uses running
// statistics, so the result does not depend on the chunk size. Restores the
// generator to training mode afterwards.
template <typename T>
Tensor<T> sample_images(GeneratorBase<T>& gen, long n, long batch, Rng& rng);

}  // namespace igan
