#include "igan/gan_nets.hpp"

#include <cmath>

namespace igan {

namespace {

constexpr double kReluGain = 1.4142135623730951;

long scaled_width(long w, double scale) {
  IGAN_CHECK(w >= 1, "width must be positive");
  const long s = static_cast<long>(std::ceil(static_cast<double>(w) * scale));
  return std::max<long>(1, s);
}

template <typename T>
long grad_batch(const DiscGrads<T>& g) {
  if (!g.d_logit.empty()) return g.d_logit.dim(0);
  if (!g.d_global.empty()) return g.d_global.dim(0);
  if (!g.d_local.empty()) return g.d_local.dim(0);
  IGAN_CHECK(!g.d_rotation.empty(), "discriminator backward: all gradients empty");
  return g.d_rotation.dim(0);
}

// Pre-activation generator residual block: BN - ReLU - (up) - 3x3 conv -
// BN - ReLU - 3x3 conv, plus a shortcut that upsamples and changes channels
// with a 1x1 conv when needed. Structure follows the SNGAN lineage the
// architecture tables cite.
template <typename T>
class GenResBlock {
 public:
  GenResBlock(const std::string& name, long in_c, long out_c, bool up, Rng& rng)
      : up_(up),
        learned_sc_(up || in_c != out_c),
        bn1_(name + ".bn1", in_c),
        bn2_(name + ".bn2", out_c),
        c1_(name + ".conv1", in_c, out_c, 3, 1, 1, rng, T(kReluGain)),
        c2_(name + ".conv2", out_c, out_c, 3, 1, 1, rng, T(kReluGain)) {
    if (learned_sc_) c_sc_ = nn::Conv2d<T>(name + ".conv_sc", in_c, out_c, 1, 1, 0, rng, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = relu1_.forward(bn1_.forward(x));
    if (up_) h = up_main_.forward(h);
    h = c1_.forward(h);
    h = c2_.forward(relu2_.forward(bn2_.forward(h)));
    Tensor<T> s = x;
    if (up_) s = up_sc_.forward(s);
    if (learned_sc_) s = c_sc_.forward(s);
    h += s;
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = bn2_.backward(relu2_.backward(c2_.backward(dy)));
    d = c1_.backward(d);
    if (up_) d = up_main_.backward(d);
    d = bn1_.backward(relu1_.backward(d));
    Tensor<T> ds = dy;
    if (learned_sc_) ds = c_sc_.backward(ds);
    if (up_) ds = up_sc_.backward(ds);
    d += ds;
    return d;
  }

  void collect(nn::ParamRefs<T>& r) {
    bn1_.collect(r);
    bn2_.collect(r);
    c1_.collect(r);
    c2_.collect(r);
    if (learned_sc_) c_sc_.collect(r);
  }

  void set_training(bool training) {
    bn1_.set_training(training);
    bn2_.set_training(training);
  }

 private:
  bool up_, learned_sc_;
  nn::BatchNorm2d<T> bn1_, bn2_;
  nn::Conv2d<T> c1_, c2_, c_sc_;
  nn::ReLU<T> relu1_, relu2_;
  nn::Upsample2<T> up_main_, up_sc_;
};

// Discriminator residual block. The standard form is ReLU - 3x3 conv - ReLU -
// 3x3 conv - (pool); the first block of a network uses the "optimized" form
// 3x3 conv - ReLU - 3x3 conv - pool, whose shortcut pools before projecting.
// All convolutions are spectral-normalized.
template <typename T>
class DiscResBlock {
 public:
  DiscResBlock(const std::string& name, long in_c, long out_c, bool down, bool optimized, Rng& rng)
      : down_(down),
        optimized_(optimized),
        learned_sc_(optimized || down || in_c != out_c),
        c1_(name + ".conv1", in_c, out_c, 3, 1, 1, rng, T(kReluGain)),
        c2_(name + ".conv2", out_c, out_c, 3, 1, 1, rng, T(kReluGain)) {
    IGAN_CHECK(!optimized || down, "optimized block always downsamples");
    if (learned_sc_) c_sc_ = nn::SNConv2d<T>(name + ".conv_sc", in_c, out_c, 1, 1, 0, rng, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = optimized_ ? c1_.forward(x) : c1_.forward(relu1_.forward(x));
    h = c2_.forward(relu2_.forward(h));
    if (down_) h = pool_main_.forward(h);
    Tensor<T> s = x;
    if (optimized_) {
      s = c_sc_.forward(pool_sc_.forward(s));
    } else {
      if (learned_sc_) s = c_sc_.forward(s);
      if (down_) s = pool_sc_.forward(s);
    }
    h += s;
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = dy;
    if (down_) d = pool_main_.backward(d);
    d = relu2_.backward(c2_.backward(d));
    d = c1_.backward(d);
    if (!optimized_) d = relu1_.backward(d);
    Tensor<T> ds = dy;
    if (optimized_) {
      ds = pool_sc_.backward(c_sc_.backward(ds));
    } else {
      if (down_) ds = pool_sc_.backward(ds);
      if (learned_sc_) ds = c_sc_.backward(ds);
    }
    d += ds;
    return d;
  }

  void collect(nn::ParamRefs<T>& r) {
    c1_.collect(r);
    c2_.collect(r);
    if (learned_sc_) c_sc_.collect(r);
  }

  void set_training(bool training) {
    c1_.set_training(training);
    c2_.set_training(training);
    if (learned_sc_) c_sc_.set_training(training);
  }

  void refresh_sn(long iters) {
    c1_.refresh(iters);
    c2_.refresh(iters);
    if (learned_sc_) c_sc_.refresh(iters);
  }

 private:
  bool down_, optimized_, learned_sc_;
  nn::SNConv2d<T> c1_, c2_, c_sc_;
  nn::ReLU<T> relu1_, relu2_;
  nn::AvgPool2<T> pool_main_, pool_sc_;
};

template <typename T>
class ResNetGenerator : public GeneratorBase<T> {
 public:
  ResNetGenerator(long image_size, long noise_dim, long s0, std::vector<long> widths, Rng rng)
      : image_size_(image_size), noise_dim_(noise_dim), s0_(s0), c0_(widths.at(0)) {
    fc_ = nn::Linear<T>("gen.fc", noise_dim, s0 * s0 * c0_, rng, T(1));
    long in_c = c0_;
    for (std::size_t i = 1; i < widths.size(); ++i) {
      blocks_.emplace_back("gen.block" + std::to_string(i - 1), in_c, widths[i], true, rng);
      in_c = widths[i];
    }
    bn_out_ = nn::BatchNorm2d<T>("gen.bn_out", in_c);
    conv_out_ = nn::Conv2d<T>("gen.conv_out", in_c, 3, 3, 1, 1, rng, T(1));
  }

  Tensor<T> forward(const Tensor<T>& z) override {
    IGAN_CHECK(z.rank() == 2 && z.dim(1) == noise_dim_,
               "generator: expected Nx" + std::to_string(noise_dim_) + " noise, got " + z.shape_str());
    IGAN_CHECK_NUMERIC(z.all_finite(), "generator: non-finite noise");
    const long n = z.dim(0);
    Tensor<T> x = fc_.forward(z).reshaped({n, s0_, s0_, c0_});
    for (auto& b : blocks_) x = b.forward(x);
    x = conv_out_.forward(relu_out_.forward(bn_out_.forward(x)));
    return tanh_.forward(x);
  }

  Tensor<T> backward(const Tensor<T>& d_images) override {
    Tensor<T> d = tanh_.backward(d_images);
    d = bn_out_.backward(relu_out_.backward(conv_out_.backward(d)));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
    return fc_.backward(d.reshaped({d.dim(0), s0_ * s0_ * c0_}));
  }

  nn::ParamRefs<T> params() override {
    nn::ParamRefs<T> r;
    fc_.collect(r);
    for (auto& b : blocks_) b.collect(r);
    bn_out_.collect(r);
    conv_out_.collect(r);
    return r;
  }

  void set_training(bool training) override {
    for (auto& b : blocks_) b.set_training(training);
    bn_out_.set_training(training);
  }

  long noise_dim() const override { return noise_dim_; }
  long image_size() const override { return image_size_; }

 private:
  long image_size_, noise_dim_, s0_, c0_;
  nn::Linear<T> fc_;
  std::vector<GenResBlock<T>> blocks_;
  nn::BatchNorm2d<T> bn_out_;
  nn::ReLU<T> relu_out_;
  nn::Conv2d<T> conv_out_;
  nn::Tanh<T> tanh_;
};

template <typename T>
class ResNetDiscriminator : public DiscriminatorBase<T> {
 public:
  ResNetDiscriminator(long image_size, std::vector<long> widths, long n_down, long tap,
                      bool rotation_head, Rng rng)
      : image_size_(image_size), tap_(tap), rot_(rotation_head) {
    IGAN_CHECK(tap >= 0 && tap + 1 < static_cast<long>(widths.size()),
               "feature tap must name a non-final block");
    long in_c = 3;
    long spatial = image_size;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const bool down = static_cast<long>(i) < n_down;
      blocks_.emplace_back("disc.block" + std::to_string(i), in_c, widths[i], down, i == 0, rng);
      in_c = widths[i];
      if (down) spatial /= 2;
      if (static_cast<long>(i) == tap) {
        m_ = spatial;
        k_local_ = widths[i];
      }
    }
    k_global_ = widths.back();
    fc_logit_ = nn::SNLinear<T>("disc.fc_logit", k_global_, 1, rng, T(1));
    if (rot_) fc_rot_ = nn::SNLinear<T>("disc.fc_rot", k_global_, 4, rng, T(1));
  }

  DiscriminatorOutput<T> forward(const Tensor<T>& x) override {
    IGAN_CHECK(x.rank() == 4 && x.dim(1) == image_size_ && x.dim(2) == image_size_ &&
                   x.dim(3) == 3,
               "discriminator: expected Nx" + std::to_string(image_size_) + "x" +
                   std::to_string(image_size_) + "x3, got " + x.shape_str());
    Tensor<T> h = x;
    DiscriminatorOutput<T> out;
    for (long i = 0; i < static_cast<long>(blocks_.size()); ++i) {
      h = blocks_[static_cast<std::size_t>(i)].forward(h);
      if (i == tap_) out.features.local = h;
    }
    h = relu_out_.forward(h);
    out.features.global = gsp_.forward(h);
    out.logit = fc_logit_.forward(out.features.global);
    if (rot_) out.rotation_logits = fc_rot_.forward(out.features.global);
    return out;
  }

  Tensor<T> backward(const DiscGrads<T>& g) override {
    Tensor<T> dg({grad_batch(g), k_global_});
    if (!g.d_logit.empty()) dg += fc_logit_.backward(g.d_logit);
    if (!g.d_rotation.empty()) {
      IGAN_CHECK(rot_, "rotation gradient without a rotation head");
      dg += fc_rot_.backward(g.d_rotation);
    }
    if (!g.d_global.empty()) dg += g.d_global;
    Tensor<T> d = relu_out_.backward(gsp_.backward(dg));
    for (long i = static_cast<long>(blocks_.size()) - 1; i > tap_; --i)
      d = blocks_[static_cast<std::size_t>(i)].backward(d);
    if (!g.d_local.empty()) d += g.d_local;
    for (long i = tap_; i >= 0; --i) d = blocks_[static_cast<std::size_t>(i)].backward(d);
    return d;
  }

  nn::ParamRefs<T> params() override {
    nn::ParamRefs<T> r;
    for (auto& b : blocks_) b.collect(r);
    fc_logit_.collect(r);
    if (rot_) fc_rot_.collect(r);
    return r;
  }

  void set_training(bool training) override {
    for (auto& b : blocks_) b.set_training(training);
    fc_logit_.set_training(training);
    if (rot_) fc_rot_.set_training(training);
  }

  void refresh_sn(long iters) override {
    for (auto& b : blocks_) b.refresh_sn(iters);
    fc_logit_.refresh(iters);
    if (rot_) fc_rot_.refresh(iters);
  }

  bool has_rotation_head() const override { return rot_; }
  long local_m() const override { return m_; }
  long local_k() const override { return k_local_; }
  long global_k() const override { return k_global_; }

 private:
  long image_size_, tap_, m_ = 0, k_local_ = 0, k_global_ = 0;
  bool rot_;
  std::vector<DiscResBlock<T>> blocks_;
  nn::ReLU<T> relu_out_;
  nn::GlobalSumPool<T> gsp_;
  nn::SNLinear<T> fc_logit_, fc_rot_;
};

// Plain convolutional generator: linear to 4x4, then nearest-upsample +
// 3x3 conv + BN + ReLU stages, 3x3 conv to RGB, tanh.
template <typename T>
class DcganGenerator : public GeneratorBase<T> {
 public:
  DcganGenerator(long image_size, long noise_dim, std::vector<long> widths, Rng rng)
      : image_size_(image_size), noise_dim_(noise_dim), c0_(widths.at(0)) {
    fc_ = nn::Linear<T>("gen.fc", noise_dim, 4 * 4 * c0_, rng, T(1));
    long in_c = c0_;
    for (std::size_t i = 1; i < widths.size(); ++i) {
      const std::string name = "gen.stage" + std::to_string(i - 1);
      convs_.emplace_back(name + ".conv", in_c, widths[i], 3, 1, 1, rng, T(kReluGain));
      bns_.emplace_back(name + ".bn", widths[i]);
      in_c = widths[i];
    }
    ups_.resize(convs_.size());
    relus_.resize(convs_.size());
    conv_out_ = nn::Conv2d<T>("gen.conv_out", in_c, 3, 3, 1, 1, rng, T(1));
  }

  Tensor<T> forward(const Tensor<T>& z) override {
    IGAN_CHECK(z.rank() == 2 && z.dim(1) == noise_dim_,
               "generator: expected Nx" + std::to_string(noise_dim_) + " noise, got " + z.shape_str());
    IGAN_CHECK_NUMERIC(z.all_finite(), "generator: non-finite noise");
    const long n = z.dim(0);
    Tensor<T> x = fc_.forward(z).reshaped({n, 4, 4, c0_});
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = ups_[i].forward(x);
      x = relus_[i].forward(bns_[i].forward(convs_[i].forward(x)));
    }
    return tanh_.forward(conv_out_.forward(x));
  }

  Tensor<T> backward(const Tensor<T>& d_images) override {
    Tensor<T> d = conv_out_.backward(tanh_.backward(d_images));
    for (std::size_t i = convs_.size(); i-- > 0;) {
      d = convs_[i].backward(bns_[i].backward(relus_[i].backward(d)));
      d = ups_[i].backward(d);
    }
    return fc_.backward(d.reshaped({d.dim(0), 4 * 4 * c0_}));
  }

  nn::ParamRefs<T> params() override {
    nn::ParamRefs<T> r;
    fc_.collect(r);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].collect(r);
      bns_[i].collect(r);
    }
    conv_out_.collect(r);
    return r;
  }

  void set_training(bool training) override {
    for (auto& b : bns_) b.set_training(training);
  }

  long noise_dim() const override { return noise_dim_; }
  long image_size() const override { return image_size_; }

 private:
  long image_size_, noise_dim_, c0_;
  nn::Linear<T> fc_;
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::BatchNorm2d<T>> bns_;
  std::vector<nn::Upsample2<T>> ups_;
  std::vector<nn::ReLU<T>> relus_;
  nn::Conv2d<T> conv_out_;
  nn::Tanh<T> tanh_;
};

// Plain convolutional discriminator: strided 4x4 convs with leaky ReLU and no
// normalization (keeping per-sample outputs independent of the batch). The
// local features are the last activation map; the global vector is its sum
// pool, so the two share a depth.
template <typename T>
class DcganDiscriminator : public DiscriminatorBase<T> {
 public:
  DcganDiscriminator(long image_size, std::vector<long> widths, bool rotation_head, Rng rng)
      : image_size_(image_size), rot_(rotation_head) {
    long in_c = 3;
    long spatial = image_size;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      convs_.emplace_back("disc.conv" + std::to_string(i), in_c, widths[i], 4, 2, 1, rng,
                          T(kReluGain));
      in_c = widths[i];
      spatial /= 2;
    }
    lrelus_.assign(convs_.size(), nn::LeakyReLU<T>(T(0.2)));
    m_ = spatial;
    k_ = in_c;
    fc_logit_ = nn::Linear<T>("disc.fc_logit", k_, 1, rng, T(1));
    if (rot_) fc_rot_ = nn::Linear<T>("disc.fc_rot", k_, 4, rng, T(1));
  }

  DiscriminatorOutput<T> forward(const Tensor<T>& x) override {
    IGAN_CHECK(x.rank() == 4 && x.dim(1) == image_size_ && x.dim(2) == image_size_ &&
                   x.dim(3) == 3,
               "discriminator: expected Nx" + std::to_string(image_size_) + "x" +
                   std::to_string(image_size_) + "x3, got " + x.shape_str());
    Tensor<T> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) h = lrelus_[i].forward(convs_[i].forward(h));
    DiscriminatorOutput<T> out;
    out.features.local = h;
    out.features.global = gsp_.forward(h);
    out.logit = fc_logit_.forward(out.features.global);
    if (rot_) out.rotation_logits = fc_rot_.forward(out.features.global);
    return out;
  }

  Tensor<T> backward(const DiscGrads<T>& g) override {
    Tensor<T> dg({grad_batch(g), k_});
    if (!g.d_logit.empty()) dg += fc_logit_.backward(g.d_logit);
    if (!g.d_rotation.empty()) {
      IGAN_CHECK(rot_, "rotation gradient without a rotation head");
      dg += fc_rot_.backward(g.d_rotation);
    }
    if (!g.d_global.empty()) dg += g.d_global;
    Tensor<T> d = gsp_.backward(dg);
    if (!g.d_local.empty()) d += g.d_local;
    for (std::size_t i = convs_.size(); i-- > 0;) d = convs_[i].backward(lrelus_[i].backward(d));
    return d;
  }

  nn::ParamRefs<T> params() override {
    nn::ParamRefs<T> r;
    for (auto& c : convs_) c.collect(r);
    fc_logit_.collect(r);
    if (rot_) fc_rot_.collect(r);
    return r;
  }

  void set_training(bool) override {}
  void refresh_sn(long) override {}

  bool has_rotation_head() const override { return rot_; }
  long local_m() const override { return m_; }
  long local_k() const override { return k_; }
  long global_k() const override { return k_; }

 private:
  long image_size_, m_ = 0, k_ = 0;
  bool rot_;
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::LeakyReLU<T>> lrelus_;
  nn::GlobalSumPool<T> gsp_;
  nn::Linear<T> fc_logit_, fc_rot_;
};

struct ResNetLayout {
  long s0;                      // generator seed spatial size
  std::vector<long> gen;        // {c0, up widths...}
  std::vector<long> disc;       // per-block out widths
  long n_down;                  // leading blocks that downsample
  long tap;                     // default local-feature block
};

ResNetLayout resnet_layout(long image_size) {
  switch (image_size) {
    case 32:
      return {4, {256, 256, 256, 256}, {128, 128, 128, 128}, 2, 2};
    case 48:
      return {6, {512, 256, 128, 64}, {64, 128, 256, 512, 1024}, 4, 3};
    case 128:
      // The local tap sits at the 512-channel stage, two blocks before the end.
      return {4, {1024, 1024, 512, 256, 128, 64}, {64, 128, 256, 512, 1024, 1024}, 5, 3};
    default:
      throw ConfigError("unsupported image_size " + std::to_string(image_size) +
                        " (expected 32, 48 or 128)");
  }
}

long pow2(long e) { return 1l << e; }

}  // namespace

template <typename T>
std::unique_ptr<GeneratorBase<T>> build_generator(const NetSpec& spec, std::uint64_t seed) {
  IGAN_CHECK(spec.noise_dim >= 1, "noise_dim must be positive");
  Rng rng = Rng(seed).derive("generator");
  if (spec.arch == NetSpec::Arch::dcgan) {
    if (spec.image_size != 32) throw ConfigError("dcgan generator supports image_size 32 only");
    std::vector<long> widths = spec.gen_widths.empty() ? std::vector<long>{256, 128, 64, 64}
                                                       : spec.gen_widths;
    IGAN_CHECK(widths.size() >= 2, "dcgan generator needs at least one upsampling stage");
    IGAN_CHECK(4 * pow2(static_cast<long>(widths.size()) - 1) == spec.image_size,
               "dcgan generator stages must reach the image size");
    return std::make_unique<DcganGenerator<T>>(spec.image_size, spec.noise_dim, widths, rng);
  }
  const ResNetLayout layout = resnet_layout(spec.image_size);
  std::vector<long> widths = spec.gen_widths.empty() ? layout.gen : spec.gen_widths;
  IGAN_CHECK(widths.size() >= 2, "generator needs at least one upsampling block");
  const long ups = static_cast<long>(widths.size()) - 1;
  const long s0 = spec.image_size / pow2(ups);
  IGAN_CHECK(s0 >= 1 && s0 * pow2(ups) == spec.image_size,
             "generator widths do not reach the image size");
  return std::make_unique<ResNetGenerator<T>>(spec.image_size, spec.noise_dim, s0, widths, rng);
}

template <typename T>
std::unique_ptr<DiscriminatorBase<T>> build_discriminator(const NetSpec& spec, std::uint64_t seed) {
  IGAN_CHECK(spec.base_width_scale > 0.0, "base_width_scale must be positive");
  Rng rng = Rng(seed).derive("discriminator");
  if (spec.arch == NetSpec::Arch::dcgan) {
    if (spec.image_size != 32) throw ConfigError("dcgan discriminator supports image_size 32 only");
    std::vector<long> widths = spec.disc_widths.empty() ? std::vector<long>{64, 128, 256}
                                                        : spec.disc_widths;
    for (auto& w : widths) w = scaled_width(w, spec.base_width_scale);
    return std::make_unique<DcganDiscriminator<T>>(spec.image_size, widths,
                                                   spec.with_rotation_head, rng);
  }
  const ResNetLayout layout = resnet_layout(spec.image_size);
  std::vector<long> widths = spec.disc_widths.empty() ? layout.disc : spec.disc_widths;
  for (auto& w : widths) w = scaled_width(w, spec.base_width_scale);
  const long n_down = std::min<long>(layout.n_down, static_cast<long>(widths.size()) - 1);
  long tap = spec.feature_tap;
  if (tap < 0)
    tap = spec.disc_widths.empty() ? layout.tap : static_cast<long>(widths.size()) - 2;
  return std::make_unique<ResNetDiscriminator<T>>(spec.image_size, widths, n_down, tap,
                                                  spec.with_rotation_head, rng);
}

template <typename T>
std::pair<std::unique_ptr<GeneratorBase<T>>, std::unique_ptr<DiscriminatorBase<T>>> build_dcgan(
    double scale, std::uint64_t seed, bool with_rotation_head) {
  if (scale <= 0.0) throw ConfigError("dcgan scale must be positive");
  NetSpec spec;
  spec.arch = NetSpec::Arch::dcgan;
  spec.image_size = 32;
  spec.with_rotation_head = with_rotation_head;
  spec.base_width_scale = scale;
  return {build_generator<T>(spec, seed), build_discriminator<T>(spec, seed)};
}

namespace {

// One 90-degree counterclockwise turn: out[H-1-x, y] = in[y, x].
template <typename T>
Tensor<T> rot90(const Tensor<T>& x) {
  const long n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> y({n, w, h, c});
  for (long i = 0; i < n; ++i)
    for (long yy = 0; yy < h; ++yy)
      for (long xx = 0; xx < w; ++xx) {
        const T* src = x.data() + ((i * h + yy) * w + xx) * c;
        T* dst = y.data() + ((i * w + (w - 1 - xx)) * h + yy) * c;
        for (long ch = 0; ch < c; ++ch) dst[ch] = src[ch];
      }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> rotate_batch(const Tensor<T>& x, int r) {
  IGAN_CHECK(x.rank() == 4, "rotate_batch: expected NHWC, got " + x.shape_str());
  IGAN_CHECK(x.dim(1) == x.dim(2), "rotate_batch: images must be square");
  Tensor<T> out = x;
  for (int i = 0; i < ((r % 4) + 4) % 4; ++i) out = rot90(out);
  return out;
}

template std::unique_ptr<GeneratorBase<float>> build_generator(const NetSpec&, std::uint64_t);
template std::unique_ptr<GeneratorBase<double>> build_generator(const NetSpec&, std::uint64_t);
template std::unique_ptr<DiscriminatorBase<float>> build_discriminator(const NetSpec&,
                                                                       std::uint64_t);
template std::unique_ptr<DiscriminatorBase<double>> build_discriminator(const NetSpec&,
                                                                        std::uint64_t);
template std::pair<std::unique_ptr<GeneratorBase<float>>, std::unique_ptr<DiscriminatorBase<float>>>
build_dcgan(double, std::uint64_t, bool);
template std::pair<std::unique_ptr<GeneratorBase<double>>,
                   std::unique_ptr<DiscriminatorBase<double>>>
build_dcgan(double, std::uint64_t, bool);
template Tensor<float> rotate_batch(const Tensor<float>&, int);
template Tensor<double> rotate_batch(const Tensor<double>&, int);

template <typename T>
Tensor<T> sample_images(GeneratorBase<T>& gen, long n, long batch, Rng& rng) {
  IGAN_CHECK(n >= 1 && batch >= 1, "sample_images: need n, batch >= 1");
  gen.set_training(false);
  const long hw = gen.image_size();
  Tensor<T> out({n, hw, hw, 3});
  for (long at = 0; at < n; at += batch) {
    const long take = std::min(batch, n - at);
    Tensor<T> z({take, gen.noise_dim()});
    for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = static_cast<T>(rng.gaussian());
    Tensor<T> imgs = gen.forward(z);
    std::copy(imgs.data(), imgs.data() + imgs.numel(), out.data() + at * hw * hw * 3);
  }
  gen.set_training(true);
  return out;
}

template Tensor<float> sample_images(GeneratorBase<float>&, long, long, Rng&);
template Tensor<double> sample_images(GeneratorBase<double>&, long, long, Rng&);

}  // namespace igan
