#include "igan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace igan {

std::string to_string(GanMode mode) {
  switch (mode) {
    case GanMode::sngan: return "sngan";
    case GanMode::infomax: return "infomax";
    case GanMode::ssgan: return "ssgan";
    case GanMode::ssgan_infomax: return "ssgan_infomax";
  }
  throw ContractError("to_string: bad GanMode");
}

GanMode gan_mode_from_string(const std::string& s) {
  if (s == "sngan") return GanMode::sngan;
  if (s == "infomax") return GanMode::infomax;
  if (s == "ssgan") return GanMode::ssgan;
  if (s == "ssgan_infomax") return GanMode::ssgan_infomax;
  throw ConfigError("unknown gan mode: " + s);
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must be in [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in [0,1)");
  if (n_dis < 1) throw ConfigError("n_dis must be >= 1");
  if (total_g_steps < 1) throw ConfigError("total_g_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (rkhs_dim < 1) throw ConfigError("rkhs_dim must be >= 1");
  if (!(ss_weight_d >= 0.0) || !(ss_weight_g >= 0.0))
    throw ConfigError("ss weights must be >= 0");
}

namespace {

std::string fmt_full(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt_widths(const std::vector<long>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(w[i]);
  }
  return s;
}

}  // namespace

std::string TrainConfig::canonical_string(const NetSpec& net) const {
  std::ostringstream os;
  os << "v1"
     << ";mode=" << igan::to_string(mode) << ";alpha=" << fmt_full(alpha)
     << ";beta=" << fmt_full(beta) << ";lr=" << fmt_full(lr)
     << ";adam_beta1=" << fmt_full(adam_beta1) << ";adam_beta2=" << fmt_full(adam_beta2)
     << ";n_dis=" << n_dis << ";total_g_steps=" << total_g_steps
     << ";lr_decay=" << (lr_decay == LrDecay::linear ? "linear" : "none")
     << ";batch_size=" << batch_size << ";rkhs_dim=" << rkhs_dim
     << ";ss_weight_d=" << fmt_full(ss_weight_d) << ";ss_weight_g=" << fmt_full(ss_weight_g)
     << ";seed=" << seed
     << ";arch=" << (net.arch == NetSpec::Arch::resnet ? "resnet" : "dcgan")
     << ";image_size=" << net.image_size << ";noise_dim=" << net.noise_dim
     << ";rotation_head=" << (net.with_rotation_head ? 1 : 0)
     << ";base_width_scale=" << fmt_full(net.base_width_scale)
     << ";feature_tap=" << net.feature_tap << ";gen_widths=" << fmt_widths(net.gen_widths)
     << ";disc_widths=" << fmt_widths(net.disc_widths);
  return os.str();
}

std::string steplog_csv_header() {
  return "g_step,loss_d_gan,loss_g_gan,loss_nce_real,loss_nce_fake,nce_acc,lr,wall_seconds";
}

std::string steplog_csv_row(const StepLog& log) {
  std::ostringstream os;
  os << std::setprecision(12) << log.g_step << ',' << log.loss_d_gan << ',' << log.loss_g_gan
     << ',' << log.loss_nce_real << ',' << log.loss_nce_fake << ',' << log.nce_acc << ','
     << log.lr << ',' << log.wall_seconds;
  return os.str();
}

template <typename T>
T hinge_d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  IGAN_CHECK(d_real.numel() >= 1 && d_fake.numel() >= 1, "hinge_d_loss: empty logits");
  double sr = 0.0, sf = 0.0;
  for (std::size_t i = 0; i < d_real.numel(); ++i)
    sr += std::max(0.0, 1.0 - static_cast<double>(d_real.data()[i]));
  for (std::size_t i = 0; i < d_fake.numel(); ++i)
    sf += std::max(0.0, 1.0 + static_cast<double>(d_fake.data()[i]));
  return static_cast<T>(sr / static_cast<double>(d_real.numel()) +
                        sf / static_cast<double>(d_fake.numel()));
}

template <typename T>
T hinge_g_loss(const Tensor<T>& d_fake) {
  IGAN_CHECK(d_fake.numel() >= 1, "hinge_g_loss: empty logits");
  double s = 0.0;
  for (std::size_t i = 0; i < d_fake.numel(); ++i) s += static_cast<double>(d_fake.data()[i]);
  return static_cast<T>(-s / static_cast<double>(d_fake.numel()));
}

namespace {

// Per-row log-sum-exp with max subtraction, accumulated in double.
template <typename T>
double row_lse(const T* row, long c) {
  double mx = static_cast<double>(row[0]);
  for (long j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
  double s = 0.0;
  for (long j = 0; j < c; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
  return mx + std::log(s);
}

// d(mean CE)/d(logits) for a batch that shares one label, times `scale`.
template <typename T>
Tensor<T> uniform_label_ce_grad(const Tensor<T>& logits, long label, double scale) {
  const long n = logits.dim(0), c = logits.dim(1);
  Tensor<T> g(logits.shape());
  for (long i = 0; i < n; ++i) {
    const T* row = logits.data() + i * c;
    T* out = g.data() + i * c;
    const double lse = row_lse(row, c);
    for (long j = 0; j < c; ++j)
      out[j] = static_cast<T>(scale * std::exp(static_cast<double>(row[j]) - lse));
    out[label] -= static_cast<T>(scale);
  }
  return g;
}

template <typename T>
double uniform_label_ce(const Tensor<T>& logits, long label) {
  const long n = logits.dim(0), c = logits.dim(1);
  double s = 0.0;
  for (long i = 0; i < n; ++i) {
    const T* row = logits.data() + i * c;
    s += row_lse(row, c) - static_cast<double>(row[label]);
  }
  return s / static_cast<double>(n);
}

}  // namespace

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<long>& labels) {
  IGAN_CHECK(logits.rank() == 2, "softmax_cross_entropy: logits must be N x C");
  const long n = logits.dim(0), c = logits.dim(1);
  IGAN_CHECK(static_cast<long>(labels.size()) == n, "softmax_cross_entropy: label count mismatch");
  double s = 0.0;
  for (long i = 0; i < n; ++i) {
    IGAN_CHECK(labels[i] >= 0 && labels[i] < c, "softmax_cross_entropy: label out of range");
    const T* row = logits.data() + i * c;
    s += row_lse(row, c) - static_cast<double>(row[labels[i]]);
  }
  return static_cast<T>(s / static_cast<double>(n));
}

template <typename T>
TrainState<T>::TrainState(TrainConfig config, NetSpec net_spec)
    : cfg(std::move(config)), net(std::move(net_spec)) {
  cfg.validate();
  if (use_ss()) net.with_rotation_head = true;
  gen = build_generator<T>(net, cfg.seed);
  disc = build_discriminator<T>(net, cfg.seed);
  g_params = gen->params();
  d_params = disc->params();
  if (use_nce()) {
    Rng critic_rng = Rng(cfg.seed).derive("critics");
    critics = std::make_unique<CriticPair<T>>(disc->local_k(), disc->global_k(), cfg.rkhs_dim,
                                              critic_rng);
    d_params.absorb(critics->params());
  }
  opt_g = Adam<T>(static_cast<T>(cfg.adam_beta1), static_cast<T>(cfg.adam_beta2));
  opt_d = Adam<T>(static_cast<T>(cfg.adam_beta1), static_cast<T>(cfg.adam_beta2));
  opt_g.attach(g_params);
  opt_d.attach(d_params);
  rng_noise = Rng(cfg.seed).derive("noise");
  rng_data = Rng(cfg.seed).derive("data");
}

template <typename T>
double TrainState<T>::current_lr() const {
  if (cfg.lr_decay == LrDecay::none) return cfg.lr;
  const double frac =
      1.0 - static_cast<double>(g_step) / static_cast<double>(cfg.total_g_steps);
  return cfg.lr * std::max(0.0, frac);
}

template <typename T>
Tensor<T> TrainState<T>::sample_noise(long n) {
  Tensor<T> z({n, net.noise_dim});
  for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = static_cast<T>(rng_noise.gaussian());
  return z;
}

template <typename T>
Tensor<T> TrainState<T>::sample_images_eval(long n, Rng& rng) {
  return sample_images(*gen, n, std::min<long>(n, cfg.batch_size), rng);
}

namespace {

void check_finite_loss(double v, const char* term, long step) {
  IGAN_CHECK_NUMERIC(std::isfinite(v), std::string("non-finite ") + term + " at step " +
                                           std::to_string(step));
}

}  // namespace

template <typename T>
DStepResult<T> discriminator_step(TrainState<T>& state, const Tensor<T>& real) {
  const TrainConfig& cfg = state.cfg;
  IGAN_CHECK(real.rank() == 4 && real.dim(0) >= 1, "discriminator_step: real batch must be NHWC");
  const long n = real.dim(0);
  state.d_params.zero_grad();

  Tensor<T> fake = state.gen->forward(state.sample_noise(n));
  Tensor<T> both = Tensor<T>::concat0(real, fake);
  DiscriminatorOutput<T> out = state.disc->forward(both);
  Tensor<T> d_real = out.logit.slice0(0, n);
  Tensor<T> d_fake = out.logit.slice0(n, 2 * n);

  DStepResult<T> res;
  res.loss_d_gan = static_cast<double>(hinge_d_loss(d_real, d_fake));
  check_finite_loss(res.loss_d_gan, "loss_d_gan", state.d_step);

  DiscGrads<T> grads;
  grads.d_logit = Tensor<T>({2 * n, 1});
  const T inv_n = T(1) / static_cast<T>(n);
  for (long i = 0; i < n; ++i) {
    if (T(1) - d_real.data()[i] > T(0)) grads.d_logit.data()[i] = -inv_n;
    if (T(1) + d_fake.data()[i] > T(0)) grads.d_logit.data()[n + i] = inv_n;
  }

  if (state.use_nce() && cfg.beta > 0.0) {
    FeatureBundle<T> real_feats{out.features.local.slice0(0, n),
                                out.features.global.slice0(0, n)};
    Tensor<T> dl, dg;
    NceResult<T> nce = contrastive_pairing_grad(real_feats, *state.critics,
                                                static_cast<T>(cfg.beta), &dl, &dg);
    res.loss_nce_real = static_cast<double>(nce.loss);
    res.nce_acc_real = nce.accuracy;
    check_finite_loss(res.loss_nce_real, "loss_nce_real", state.d_step);
    // The fake half of the batch gets no contrastive gradient.
    grads.d_local = Tensor<T>::concat0(dl, Tensor<T>(dl.shape()));
    grads.d_global = Tensor<T>::concat0(dg, Tensor<T>(dg.shape()));
  }

  state.disc->backward(grads);

  if (state.use_ss() && cfg.ss_weight_d > 0.0) {
    double ce_sum = 0.0;
    for (int r = 0; r < 4; ++r) {
      Tensor<T> xr = rotate_batch(real, r);
      DiscriminatorOutput<T> out_r = state.disc->forward(xr);
      ce_sum += uniform_label_ce(out_r.rotation_logits, r);
      DiscGrads<T> gr;
      gr.d_rotation = uniform_label_ce_grad(out_r.rotation_logits, r,
                                            cfg.ss_weight_d / (4.0 * static_cast<double>(n)));
      state.disc->backward(gr);
    }
    res.loss_ss_real = ce_sum / 4.0;
    check_finite_loss(res.loss_ss_real, "loss_ss_real", state.d_step);
  }

  state.opt_d.step(state.d_params, static_cast<T>(state.current_lr()));
  ++state.d_step;
  return res;
}

template <typename T>
GStepResult<T> generator_step(TrainState<T>& state) {
  const TrainConfig& cfg = state.cfg;
  const long n = cfg.batch_size;
  state.g_params.zero_grad();

  Tensor<T> fake = state.gen->forward(state.sample_noise(n));
  DiscriminatorOutput<T> out = state.disc->forward(fake);

  GStepResult<T> res;
  res.loss_g_gan = static_cast<double>(hinge_g_loss(out.logit));
  check_finite_loss(res.loss_g_gan, "loss_g_gan", state.g_step);

  DiscGrads<T> grads;
  grads.d_logit = Tensor<T>({n, 1});
  const T inv_n = T(1) / static_cast<T>(n);
  for (long i = 0; i < n; ++i) grads.d_logit.data()[i] = -inv_n;

  if (state.use_nce() && cfg.alpha > 0.0) {
    NceResult<T> nce = contrastive_pairing_grad(out.features, *state.critics,
                                                static_cast<T>(cfg.alpha), &grads.d_local,
                                                &grads.d_global);
    res.loss_nce_fake = static_cast<double>(nce.loss);
    res.nce_acc_fake = nce.accuracy;
    check_finite_loss(res.loss_nce_fake, "loss_nce_fake", state.g_step);
  }

  Tensor<T> dx = state.disc->backward(grads);

  if (state.use_ss() && cfg.ss_weight_g > 0.0) {
    double ce_sum = 0.0;
    for (int r = 0; r < 4; ++r) {
      Tensor<T> xr = rotate_batch(fake, r);
      DiscriminatorOutput<T> out_r = state.disc->forward(xr);
      ce_sum += uniform_label_ce(out_r.rotation_logits, r);
      DiscGrads<T> gr;
      gr.d_rotation = uniform_label_ce_grad(out_r.rotation_logits, r,
                                            cfg.ss_weight_g / (4.0 * static_cast<double>(n)));
      Tensor<T> dxr = state.disc->backward(gr);
      dx += rotate_batch(dxr, 4 - r);
    }
    res.loss_ss_fake = ce_sum / 4.0;
    check_finite_loss(res.loss_ss_fake, "loss_ss_fake", state.g_step);
  }

  state.gen->backward(dx);
  state.opt_g.step(state.g_params, static_cast<T>(state.current_lr()));
  ++state.g_step;
  return res;
}

template <typename T>
T rotation_task_loss(DiscriminatorBase<T>& disc, const Tensor<T>& images) {
  IGAN_CHECK(disc.has_rotation_head(), "rotation_task_loss: discriminator has no rotation head");
  double s = 0.0;
  for (int r = 0; r < 4; ++r) {
    DiscriminatorOutput<T> out = disc.forward(rotate_batch(images, r));
    s += uniform_label_ce(out.rotation_logits, r);
  }
  return static_cast<T>(s / 4.0);
}

template <typename T>
std::pair<T, T> ss_rotation_losses(DiscriminatorBase<T>& disc, const Tensor<T>& real,
                                   const Tensor<T>& fake) {
  return {rotation_task_loss(disc, real), rotation_task_loss(disc, fake)};
}

template <typename T>
void run_training(TrainState<T>& state, const Dataset<T>& data, const TrainCallbacks& callbacks) {
  state.cfg.validate();
  IGAN_CHECK(data.size() >= state.cfg.batch_size, "run_training: dataset smaller than one batch");
  DataLoader<T> loader(&data, state.cfg.batch_size, state.rng_data);
  if (!state.loader_epoch_rng.empty()) loader.restore(state.loader_epoch_rng, state.loader_cursor);

  const auto t0 = std::chrono::steady_clock::now();
  while (state.g_step < state.cfg.total_g_steps) {
    const double lr_used = state.current_lr();
    DStepResult<T> dres;
    for (long i = 0; i < state.cfg.n_dis; ++i)
      dres = discriminator_step(state, loader.next_batch());
    GStepResult<T> gres = generator_step(state);
    state.loader_epoch_rng = loader.epoch_rng_start();
    state.loader_cursor = loader.cursor();

    if (callbacks.on_step) {
      StepLog log;
      log.g_step = state.g_step;
      log.loss_d_gan = dres.loss_d_gan;
      log.loss_g_gan = gres.loss_g_gan;
      log.loss_nce_real = dres.loss_nce_real;
      log.loss_nce_fake = gres.loss_nce_fake;
      log.nce_acc = dres.nce_acc_real;
      log.lr = lr_used;
      log.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      callbacks.on_step(log);
    }
    if (callbacks.checkpoint_every > 0 && callbacks.on_checkpoint &&
        state.g_step % callbacks.checkpoint_every == 0)
      callbacks.on_checkpoint(state.g_step);
  }
}

template float hinge_d_loss(const Tensor<float>&, const Tensor<float>&);
template double hinge_d_loss(const Tensor<double>&, const Tensor<double>&);
template float hinge_g_loss(const Tensor<float>&);
template double hinge_g_loss(const Tensor<double>&);
template float softmax_cross_entropy(const Tensor<float>&, const std::vector<long>&);
template double softmax_cross_entropy(const Tensor<double>&, const std::vector<long>&);
template struct TrainState<float>;
template struct TrainState<double>;
template DStepResult<float> discriminator_step(TrainState<float>&, const Tensor<float>&);
template DStepResult<double> discriminator_step(TrainState<double>&, const Tensor<double>&);
template GStepResult<float> generator_step(TrainState<float>&);
template GStepResult<double> generator_step(TrainState<double>&);
template float rotation_task_loss(DiscriminatorBase<float>&, const Tensor<float>&);
template double rotation_task_loss(DiscriminatorBase<double>&, const Tensor<double>&);
template std::pair<float, float> ss_rotation_losses(DiscriminatorBase<float>&,
                                                    const Tensor<float>&, const Tensor<float>&);
template std::pair<double, double> ss_rotation_losses(DiscriminatorBase<double>&,
                                                      const Tensor<double>&,
                                                      const Tensor<double>&);
template void run_training(TrainState<float>&, const Dataset<float>&, const TrainCallbacks&);
template void run_training(TrainState<double>&, const Dataset<double>&, const TrainCallbacks&);

}  // namespace igan
