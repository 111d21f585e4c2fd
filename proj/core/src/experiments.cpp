#include "igan/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace igan {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Signed distance of the rotated point (qx, qy) to the class shape with
// nominal radius r. Negative inside.
double shape_sdf(long shape, double qx, double qy, double px, double py, double r) {
  switch (shape) {
    case 0:  // circle
      return std::hypot(px, py) - r;
    case 1:  // square
      return std::max(std::abs(qx), std::abs(qy)) - 0.8 * r;
    case 2: {  // equilateral triangle
      double d = -1e9;
      for (int k = 0; k < 3; ++k) {
        const double a = M_PI / 2.0 + 2.0 * M_PI * k / 3.0;
        d = std::max(d, qx * std::cos(a) + qy * std::sin(a));
      }
      return d - 0.55 * r;
    }
    case 3:  // ring
      return std::abs(std::hypot(px, py) - 0.8 * r) - 0.3 * r;
    default: {  // cross
      const double w = 0.35 * r;
      const double ax = std::abs(qx), ay = std::abs(qy);
      return std::min(std::max(ax - r, ay - w), std::max(ay - r, ax - w));
    }
  }
}

}  // namespace

Dataset<float> make_synthetic_clusters(long count, long image_size, std::uint64_t seed) {
  IGAN_CHECK(count >= 1 && image_size >= 16, "make_synthetic_clusters: bad count or size");
  Rng rng = Rng(seed).derive("clusters");
  Dataset<float> out;
  out.images = Tensor<float>({count, image_size, image_size, 3});
  out.labels.resize(static_cast<std::size_t>(count));

  const double mid = static_cast<double>(image_size) / 2.0;
  for (long i = 0; i < count; ++i) {
    const long cls = i % 10;
    out.labels[static_cast<std::size_t>(i)] = cls;
    const long shape = cls % 5;
    const Rgb base = hsv_to_rgb(static_cast<double>(cls) / 10.0, 0.8, 0.9);

    const double cx = mid + (rng.uniform() - 0.5) * 0.25 * image_size;
    const double cy = mid + (rng.uniform() - 0.5) * 0.25 * image_size;
    const double r = image_size * (0.22 + 0.09 * rng.uniform());
    const double theta = rng.uniform() * 2.0 * M_PI;
    const double bg = -0.85 + 0.1 * rng.uniform();
    const double col[3] = {clamp01(base.r + 0.08 * (rng.uniform() - 0.5)),
                           clamp01(base.g + 0.08 * (rng.uniform() - 0.5)),
                           clamp01(base.b + 0.08 * (rng.uniform() - 0.5))};
    const double ct = std::cos(-theta), st = std::sin(-theta);

    float* img = out.images.data() + i * image_size * image_size * 3;
    for (long y = 0; y < image_size; ++y)
      for (long x = 0; x < image_size; ++x) {
        const double px = x - cx, py = y - cy;
        const double qx = px * ct - py * st, qy = px * st + py * ct;
        const double d = shape_sdf(shape, qx, qy, px, py, r);
        const double alpha = clamp01(0.5 - d / 1.5);
        for (int c = 0; c < 3; ++c) {
          const double fg = 2.0 * col[c] - 1.0;
          double v = bg + alpha * (fg - bg) + 0.03 * rng.gaussian();
          img[(y * image_size + x) * 3 + c] = static_cast<float>(std::clamp(v, -1.0, 1.0));
        }
      }
  }
  return out;
}

namespace {

const char* kDigitFont[10][7] = {
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
    {"11110", "00001", "00001", "01110", "00001", "00001", "11110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"}};

double glyph_cell(long digit, double u, double v) {
  if (u < 0.0 || u >= 5.0 || v < 0.0 || v >= 7.0) return 0.0;
  return kDigitFont[digit][static_cast<long>(v)][static_cast<long>(u)] == '1' ? 1.0 : 0.0;
}

}  // namespace

Dataset<float> make_glyph_digits(long count, long image_size, std::uint64_t seed) {
  IGAN_CHECK(count >= 1 && image_size >= 16, "make_glyph_digits: bad count or size");
  Rng rng = Rng(seed).derive("glyphs");
  Dataset<float> out;
  out.images = Tensor<float>({count, image_size, image_size, 1});
  out.labels.resize(static_cast<std::size_t>(count));

  const double mid = static_cast<double>(image_size) / 2.0;
  for (long i = 0; i < count; ++i) {
    const long digit = i % 10;
    out.labels[static_cast<std::size_t>(i)] = digit;

    const double cell = image_size * (0.55 + 0.2 * rng.uniform()) / 7.0;
    const double theta = (rng.uniform() - 0.5) * 0.44;
    const double dx = (rng.uniform() - 0.5) * 0.24 * image_size;
    const double dy = (rng.uniform() - 0.5) * 0.24 * image_size;
    const double bright = 0.75 + 0.25 * rng.uniform();
    const double ct = std::cos(-theta), st = std::sin(-theta);

    float* img = out.images.data() + i * image_size * image_size;
    for (long y = 0; y < image_size; ++y)
      for (long x = 0; x < image_size; ++x) {
        double acc = 0.0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx) {
            const double px = x + 0.25 + 0.5 * sx - mid - dx;
            const double py = y + 0.25 + 0.5 * sy - mid - dy;
            const double gx = px * ct - py * st, gy = px * st + py * ct;
            acc += glyph_cell(digit, gx / cell + 2.5, gy / cell + 3.5);
          }
        double v = -1.0 + 2.0 * (acc / 4.0) * bright + 0.04 * rng.gaussian();
        img[y * image_size + x] = static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
  }
  return out;
}

Dataset<float> build_stacked_mnist(const Dataset<float>& digits, long count, std::uint64_t seed) {
  IGAN_CHECK(count >= 1, "build_stacked_mnist: count must be positive");
  IGAN_CHECK(digits.size() >= 1 && digits.images.rank() == 4 && digits.images.dim(3) == 1,
             "build_stacked_mnist: digits must be single-channel");
  IGAN_CHECK(static_cast<long>(digits.labels.size()) == digits.size(),
             "build_stacked_mnist: digits must be labeled");
  for (long l : digits.labels)
    IGAN_CHECK(l >= 0 && l <= 9, "build_stacked_mnist: digit label out of range");

  const long hw = digits.images.dim(1);
  Rng rng = Rng(seed).derive("stacked");
  Dataset<float> out;
  out.images = Tensor<float>({count, hw, hw, 3});
  out.labels.resize(static_cast<std::size_t>(count));

  const long plane = hw * hw;
  for (long i = 0; i < count; ++i) {
    long mode = 0;
    for (int c = 0; c < 3; ++c) {
      const long src = static_cast<long>(rng.below(static_cast<std::uint64_t>(digits.size())));
      mode = mode * 10 + digits.labels[static_cast<std::size_t>(src)];
      const float* sp = digits.images.data() + src * plane;
      float* dp = out.images.data() + i * plane * 3 + c;
      for (long p = 0; p < plane; ++p) dp[p * 3] = sp[p];
    }
    out.labels[static_cast<std::size_t>(i)] = mode;
  }
  return out;
}

void write_stacked_cache(const std::string& path, const Dataset<float>& data) {
  IGAN_CHECK(data.images.rank() == 4 && data.images.dim(1) == 32 && data.images.dim(2) == 32 &&
                 data.images.dim(3) == 3,
             "stacked cache: images must be Nx32x32x3");
  IGAN_CHECK(static_cast<long>(data.labels.size()) == data.size(),
             "stacked cache: missing mode labels");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os.good()) throw DataError("cannot open for write: " + path);
  os.write("SMN1", 4);
  const std::uint32_t n = static_cast<std::uint32_t>(data.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  std::vector<std::uint8_t> row(32 * 32 * 3);
  for (long i = 0; i < data.size(); ++i) {
    const float* src = data.images.data() + i * 32 * 32 * 3;
    for (std::size_t p = 0; p < row.size(); ++p) {
      const double v = std::clamp((static_cast<double>(src[p]) + 1.0) * 127.5, 0.0, 255.0);
      row[p] = static_cast<std::uint8_t>(std::lround(v));
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    const std::uint16_t label = static_cast<std::uint16_t>(data.labels[static_cast<std::size_t>(i)]);
    os.write(reinterpret_cast<const char*>(&label), 2);
  }
  IGAN_CHECK(os.good(), "stacked cache: write failed");
}

Dataset<float> read_stacked_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw DataError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SMN1") throw DataError("bad stacked cache magic: " + path);
  std::uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  if (!is || n == 0) throw DataError("bad stacked cache header: " + path);

  Dataset<float> out;
  out.images = Tensor<float>({static_cast<long>(n), 32, 32, 3});
  out.labels.resize(n);
  std::vector<std::uint8_t> row(32 * 32 * 3);
  for (std::uint32_t i = 0; i < n; ++i) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    std::uint16_t label = 0;
    is.read(reinterpret_cast<char*>(&label), 2);
    if (!is) throw DataError("truncated stacked cache: " + path);
    if (label > 999) throw DataError("stacked cache: mode label out of range");
    float* dst = out.images.data() + static_cast<long>(i) * 32 * 32 * 3;
    for (std::size_t p = 0; p < row.size(); ++p)
      dst[p] = static_cast<float>(row[p] / 127.5 - 1.0);
    out.labels[i] = label;
  }
  is.peek();
  if (!is.eof()) throw DataError("trailing bytes in stacked cache: " + path);
  return out;
}

// ---- Forgetting ----

void ForgettingSchedule::validate() const {
  if (task_period < 1 || cycle_length < 1) throw ConfigError("forgetting: periods must be positive");
  if (total_iters < 0) throw ConfigError("forgetting: total_iters must be >= 0");
  if (regularizer_weight < 0) throw ConfigError("forgetting: regularizer weight must be >= 0");
  if (batch_size < 1 || eval_every < 1) throw ConfigError("forgetting: bad batch or eval period");
  if (!(lr > 0) || rkhs_dim < 1 || !(width_scale > 0))
    throw ConfigError("forgetting: bad optimizer or net settings");
}

double ForgettingTrace::mean_past_acc_in(long begin, long end) const {
  double sum = 0.0;
  long n = 0;
  for (const auto& p : points)
    if (p.iter >= begin && p.iter < end) {
      sum += p.mean_past_acc;
      ++n;
    }
  IGAN_CHECK(n > 0, "mean_past_acc_in: no eval points in range");
  return sum / static_cast<double>(n);
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-head logits over a labeled set, evaluated in eval mode in chunks.
// Row h holds head h's logit for every image.
std::vector<std::vector<double>> heldout_head_logits(DiscriminatorBase<float>& disc,
                                                     std::vector<nn::Linear<float>>& heads,
                                                     const Dataset<float>& data) {
  disc.set_training(false);
  std::vector<std::vector<double>> logits(heads.size(),
                                          std::vector<double>(static_cast<std::size_t>(data.size())));
  const long chunk = 128;
  for (long at = 0; at < data.size(); at += chunk) {
    const long take = std::min(chunk, data.size() - at);
    DiscriminatorOutput<float> out = disc.forward(data.images.slice0(at, at + take));
    for (std::size_t h = 0; h < heads.size(); ++h) {
      Tensor<float> z = heads[h].forward(out.features.global);
      for (long i = 0; i < take; ++i)
        logits[h][static_cast<std::size_t>(at + i)] = z.data()[i];
    }
  }
  disc.set_training(true);
  return logits;
}

}  // namespace

ForgettingTrace run_forgetting(const Dataset<float>& train, const Dataset<float>& heldout,
                               const ForgettingSchedule& schedule, std::uint64_t seed) {
  schedule.validate();
  if (static_cast<long>(train.labels.size()) != train.size() ||
      static_cast<long>(heldout.labels.size()) != heldout.size() || train.size() == 0 ||
      heldout.size() == 0)
    throw DataError("run_forgetting: needs labeled train and heldout sets");
  IGAN_CHECK(train.size() >= schedule.batch_size, "run_forgetting: dataset smaller than a batch");

  NetSpec spec;
  spec.image_size = train.images.dim(1);
  spec.base_width_scale = schedule.width_scale;
  auto disc = build_discriminator<float>(spec, seed);
  nn::ParamRefs<float> backbone = disc->params();
  std::unique_ptr<CriticPair<float>> critics;
  if (schedule.regularizer_on) {
    Rng crng = Rng(seed).derive("critics");
    critics = std::make_unique<CriticPair<float>>(disc->local_k(), disc->global_k(),
                                                  schedule.rkhs_dim, crng);
    backbone.absorb(critics->params());
  }

  // One binary head per task on top of the shared global features. A head
  // only trains while its task is active, so the accuracy it retains later
  // measures how far the shared features have drifted.
  Rng hrng = Rng(seed).derive("heads");
  std::vector<nn::Linear<float>> heads;
  heads.reserve(static_cast<std::size_t>(schedule.cycle_length));
  std::vector<nn::ParamRefs<float>> head_params(static_cast<std::size_t>(schedule.cycle_length));
  std::vector<Adam<float>> head_opts;
  for (long c = 0; c < schedule.cycle_length; ++c) {
    heads.emplace_back("head" + std::to_string(c), disc->global_k(), 1, hrng);
    heads.back().collect(head_params[static_cast<std::size_t>(c)]);
    head_opts.emplace_back(0.0f, 0.9f);
    head_opts.back().attach(head_params[static_cast<std::size_t>(c)]);
  }

  Adam<float> opt(0.0f, 0.9f);
  opt.attach(backbone);
  Rng rng = Rng(seed).derive("forgetting");

  const long total = schedule.resolved_total();
  const long n = schedule.batch_size;
  ForgettingTrace trace;

  for (long iter = 0; iter < total; ++iter) {
    const long task = (iter / schedule.task_period) % schedule.cycle_length;
    const std::size_t tix = static_cast<std::size_t>(task);
    std::vector<long> idx(static_cast<std::size_t>(n));
    for (auto& j : idx) j = static_cast<long>(rng.below(static_cast<std::uint64_t>(train.size())));
    Tensor<float> x = Tensor<float>::gather0(train.images, idx);

    DiscriminatorOutput<float> out = disc->forward(x);
    Tensor<float> z = heads[tix].forward(out.features.global);
    Tensor<float> dz({n, 1});
    for (long i = 0; i < n; ++i) {
      const double y = train.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] ==
                               task
                           ? 1.0
                           : 0.0;
      dz.data()[i] = static_cast<float>((sigmoid(z.data()[i]) - y) / static_cast<double>(n));
    }
    DiscGrads<float> grads;
    if (critics && schedule.regularizer_weight > 0) {
      contrastive_pairing_grad(out.features, *critics,
                               static_cast<float>(schedule.regularizer_weight), &grads.d_local,
                               &grads.d_global);
    }
    backbone.zero_grad();
    head_params[tix].zero_grad();
    Tensor<float> dg = heads[tix].backward(dz);
    if (grads.d_global.empty())
      grads.d_global = std::move(dg);
    else
      grads.d_global += dg;
    disc->backward(grads);
    opt.step(backbone, static_cast<float>(schedule.lr));
    head_opts[tix].step(head_params[tix], static_cast<float>(schedule.lr));

    const long done = iter + 1;
    if (done % schedule.eval_every == 0 || done == total) {
      ForgettingPoint pt;
      pt.iter = done;
      pt.task = task;
      std::vector<std::vector<double>> logits = heldout_head_logits(*disc, heads, heldout);
      pt.per_class_acc.assign(static_cast<std::size_t>(schedule.cycle_length), 0.0);
      for (long c = 0; c < schedule.cycle_length; ++c) {
        long tp = 0, np = 0, tn = 0, nn = 0;
        for (long i = 0; i < heldout.size(); ++i) {
          const bool pos = logits[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] > 0.0;
          if (heldout.labels[static_cast<std::size_t>(i)] == c) {
            ++np;
            if (pos) ++tp;
          } else {
            ++nn;
            if (!pos) ++tn;
          }
        }
        IGAN_CHECK(np > 0 && nn > 0, "run_forgetting: heldout set misses a class");
        pt.per_class_acc[static_cast<std::size_t>(c)] =
            0.5 * (static_cast<double>(tp) / np + static_cast<double>(tn) / nn);
      }
      const long started = std::min((done - 1) / schedule.task_period + 1, schedule.cycle_length);
      double sum = 0.0;
      long cnt = 0;
      for (long c = 0; c < started; ++c)
        if (c != task) {
          sum += pt.per_class_acc[static_cast<std::size_t>(c)];
          ++cnt;
        }
      pt.mean_past_acc = cnt > 0 ? sum / static_cast<double>(cnt)
                                 : pt.per_class_acc[static_cast<std::size_t>(task)];
      trace.points.push_back(std::move(pt));
    }
  }
  return trace;
}

std::string forgetting_csv(const ForgettingTrace& trace) {
  IGAN_CHECK(!trace.points.empty(), "forgetting_csv: empty trace");
  std::ostringstream os;
  os << std::setprecision(10) << "iter,task,mean_past_acc";
  for (std::size_t c = 0; c < trace.points.front().per_class_acc.size(); ++c)
    os << ",acc_class" << c;
  os << '\n';
  for (const auto& p : trace.points) {
    os << p.iter << ',' << p.task << ',' << p.mean_past_acc;
    for (double a : p.per_class_acc) os << ',' << a;
    os << '\n';
  }
  return os.str();
}

// ---- Mode probe ----

std::string GeneratorSimulation::name() const {
  switch (kind) {
    case Kind::all_classes: return "all_classes";
    case Kind::one_class: return "one_class_" + std::to_string(index);
    case Kind::one_image: return "one_image_" + std::to_string(index);
  }
  throw ContractError("GeneratorSimulation: bad kind");
}

GeneratorSimulation GeneratorSimulation::all() { return {}; }
GeneratorSimulation GeneratorSimulation::one_class(long c) {
  return {Kind::one_class, c};
}
GeneratorSimulation GeneratorSimulation::one_image(long row) {
  return {Kind::one_image, row};
}

namespace {

// Draws one evaluation batch according to the simulated generator kind.
Tensor<float> simulation_batch(const GeneratorSimulation& sim, const Dataset<float>& data,
                               const std::vector<std::vector<long>>& class_rows, long batch,
                               Rng& rng) {
  std::vector<long> idx;
  switch (sim.kind) {
    case GeneratorSimulation::Kind::all_classes: {
      std::vector<long> pool(static_cast<std::size_t>(data.size()));
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<long>(i);
      rng.shuffle(pool.begin(), pool.end());
      idx.assign(pool.begin(), pool.begin() + batch);
      break;
    }
    case GeneratorSimulation::Kind::one_class: {
      const auto& rows = class_rows.at(static_cast<std::size_t>(sim.index));
      IGAN_CHECK(!rows.empty(), "simulation_batch: class has no rows");
      if (static_cast<long>(rows.size()) >= batch) {
        std::vector<long> pool = rows;
        rng.shuffle(pool.begin(), pool.end());
        idx.assign(pool.begin(), pool.begin() + batch);
      } else {
        for (long i = 0; i < batch; ++i)
          idx.push_back(rows[rng.below(rows.size())]);
      }
      break;
    }
    case GeneratorSimulation::Kind::one_image:
      IGAN_CHECK(sim.index >= 0 && sim.index < data.size(),
                 "simulation_batch: image row out of range");
      idx.assign(static_cast<std::size_t>(batch), sim.index);
      break;
  }
  return Tensor<float>::gather0(data.images, idx);
}

}  // namespace

std::vector<ProbeCurve> run_mode_probe(const Dataset<float>& train, const Dataset<float>& eval_set,
                                       const std::vector<GeneratorSimulation>& sims,
                                       const ProbeSettings& st, std::uint64_t seed) {
  IGAN_CHECK(!sims.empty(), "run_mode_probe: no simulations");
  if (train.size() == 0 || eval_set.size() == 0 ||
      static_cast<long>(eval_set.labels.size()) != eval_set.size())
    throw DataError("run_mode_probe: needs train images and a labeled eval set");
  IGAN_CHECK(train.size() >= st.batch_size && eval_set.size() >= st.batch_size,
             "run_mode_probe: datasets smaller than a batch");

  NetSpec spec;
  spec.image_size = train.images.dim(1);
  spec.base_width_scale = st.width_scale;
  auto disc = build_discriminator<float>(spec, seed);
  Rng crng = Rng(seed).derive("critics");
  CriticPair<float> critics(disc->local_k(), disc->global_k(), st.rkhs_dim, crng);
  nn::ParamRefs<float> params = disc->params();
  params.absorb(critics.params());
  Adam<float> opt(0.0f, 0.9f);
  opt.attach(params);

  Rng rng_train = Rng(seed).derive("probe_train");
  Rng rng_eval = Rng(seed).derive("probe_eval");

  const long n_classes = 1 + *std::max_element(eval_set.labels.begin(), eval_set.labels.end());
  std::vector<std::vector<long>> class_rows(static_cast<std::size_t>(n_classes));
  for (long i = 0; i < eval_set.size(); ++i)
    class_rows[static_cast<std::size_t>(eval_set.labels[static_cast<std::size_t>(i)])].push_back(i);

  std::vector<ProbeCurve> curves(sims.size());
  for (std::size_t s = 0; s < sims.size(); ++s) curves[s].sim = sims[s].name();

  // Accuracy evaluation leaves the training state untouched: the
  // spectral-norm vectors perturbed by the test-time refresh are restored.
  auto eval_all = [&](long step, long batches, bool record_curve) {
    std::vector<Tensor<float>> snap;
    snap.reserve(params.states.size());
    for (const auto& s : params.states) snap.push_back(*s.tensor);
    disc->set_training(false);
    critics.set_training(false);
    disc->refresh_sn(50);
    critics.refresh(50);
    for (std::size_t s = 0; s < sims.size(); ++s) {
      double acc = 0.0;
      for (long b = 0; b < batches; ++b) {
        Tensor<float> x =
            simulation_batch(sims[s], eval_set, class_rows, st.batch_size, rng_eval);
        DiscriminatorOutput<float> out = disc->forward(x);
        acc += contrastive_pairing(out.features, critics).accuracy;
      }
      acc /= static_cast<double>(batches);
      if (record_curve) {
        curves[s].steps.push_back(step);
        curves[s].accuracy.push_back(acc);
      } else {
        curves[s].final_accuracy = acc;
      }
    }
    disc->set_training(true);
    critics.set_training(true);
    for (std::size_t i = 0; i < params.states.size(); ++i) *params.states[i].tensor = snap[i];
  };

  eval_all(0, st.eval_batches, true);
  for (long step = 1; step <= st.train_steps; ++step) {
    std::vector<long> idx(static_cast<std::size_t>(st.batch_size));
    for (auto& j : idx)
      j = static_cast<long>(rng_train.below(static_cast<std::uint64_t>(train.size())));
    Tensor<float> x = Tensor<float>::gather0(train.images, idx);
    DiscriminatorOutput<float> out = disc->forward(x);
    DiscGrads<float> grads;
    contrastive_pairing_grad(out.features, critics, 1.0f, &grads.d_local, &grads.d_global);
    params.zero_grad();
    disc->backward(grads);
    opt.step(params, static_cast<float>(st.lr));
    if (step % st.eval_every == 0 || step == st.train_steps)
      eval_all(step, st.eval_batches, true);
  }
  eval_all(st.train_steps, st.final_eval_batches, false);
  return curves;
}

std::string probe_csv(const std::vector<ProbeCurve>& curves) {
  std::ostringstream os;
  os << std::setprecision(10) << "sim,step,accuracy\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.steps.size(); ++i)
      os << c.sim << ',' << c.steps[i] << ',' << c.accuracy[i] << '\n';
    // step -1 carries the final high-precision estimate
    os << c.sim << ",-1," << c.final_accuracy << '\n';
  }
  return os.str();
}

// ---- Stacked digit modes ----

ModeReport count_modes(const Tensor<float>& images, SmallCnnExtractor& channel_classifier,
                       const Dataset<float>& gate_set, double gate) {
  IGAN_CHECK(images.rank() == 4 && images.dim(3) == 3, "count_modes: images must be NHWx3");
  IGAN_CHECK(channel_classifier.num_classes() == 10, "count_modes: need a 10-class classifier");
  const double gate_acc = channel_classifier.accuracy(gate_set);
  if (gate_acc < gate)
    throw CalibrationError("count_modes: classifier accuracy " + std::to_string(gate_acc) +
                           " below gate " + std::to_string(gate));

  const long n = images.dim(0), h = images.dim(1), w = images.dim(2);
  std::vector<long> modes(static_cast<std::size_t>(n), 0);
  Tensor<float> channel({n, h, w, 1});
  for (int c = 0; c < 3; ++c) {
    for (long i = 0; i < n * h * w; ++i) channel.data()[i] = images.data()[i * 3 + c];
    auto [cls, conf] = channel_classifier.predict(channel);
    for (long i = 0; i < n; ++i)
      modes[static_cast<std::size_t>(i)] = modes[static_cast<std::size_t>(i)] * 10 +
                                           cls[static_cast<std::size_t>(i)];
  }

  std::vector<long> hist(1000, 0);
  for (long m : modes) ++hist[static_cast<std::size_t>(m)];
  ModeReport rep;
  double kl = 0.0;
  for (long b = 0; b < 1000; ++b) {
    if (hist[static_cast<std::size_t>(b)] == 0) continue;
    ++rep.modes_recovered;
    const double p = static_cast<double>(hist[static_cast<std::size_t>(b)]) /
                     static_cast<double>(n);
    kl += p * std::log(p * 1000.0);
  }
  rep.kl_to_uniform = kl;
  return rep;
}

namespace {

std::pair<double, double> mean_pop_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace

ModeReport run_stacked_mnist(const StackedSettings& st, const Dataset<float>& stacked,
                             SmallCnnExtractor& digit_classifier,
                             const Dataset<float>& digit_holdout) {
  IGAN_CHECK(!st.seeds.empty(), "run_stacked_mnist: need at least one seed");
  ModeReport rep;
  {
    std::ostringstream label;
    label << (st.with_infomax ? "infomax" : "baseline") << "_K" << st.scale;
    rep.label = label.str();
  }

  for (std::uint64_t seed : st.seeds) {
    TrainConfig cfg;
    cfg.mode = st.with_infomax ? GanMode::infomax : GanMode::sngan;
    cfg.alpha = st.with_infomax ? st.alpha : 0.0;
    cfg.beta = st.with_infomax ? st.beta : 0.0;
    cfg.lr = st.lr;
    cfg.n_dis = st.n_dis;
    cfg.total_g_steps = st.g_steps;
    cfg.batch_size = st.batch_size;
    cfg.rkhs_dim = st.rkhs_dim;
    cfg.seed = seed;
    NetSpec spec;
    spec.arch = NetSpec::Arch::dcgan;
    spec.base_width_scale = st.scale;
    spec.gen_widths = st.gen_widths;
    try {
      TrainState<float> state(cfg, spec);
      run_training(state, stacked, TrainCallbacks{});
      Rng er = Rng(seed).derive("stacked_eval");
      Tensor<float> imgs = sample_images(*state.gen, st.eval_samples, 64, er);
      ModeReport one = count_modes(imgs, digit_classifier, digit_holdout);
      rep.seeds_used.push_back(seed);
      rep.seed_modes.push_back(one.modes_recovered);
      rep.seed_kl.push_back(one.kl_to_uniform);
    } catch (const NumericError& e) {
      std::cerr << rep.label << ": seed " << seed << " diverged (" << e.what()
                << "), excluded\n";
      rep.seeds_failed.push_back(seed);
    }
  }

  if (!rep.seed_modes.empty()) {
    std::vector<double> md(rep.seed_modes.begin(), rep.seed_modes.end());
    std::tie(rep.modes_mean, rep.modes_std) = mean_pop_std(md);
    std::tie(rep.kl_mean, rep.kl_std) = mean_pop_std(rep.seed_kl);
    rep.modes_recovered = std::lround(rep.modes_mean);
    rep.kl_to_uniform = rep.kl_mean;
  }
  return rep;
}

std::string stacked_csv(const std::vector<ModeReport>& arms) {
  std::ostringstream os;
  os << std::setprecision(10) << "arm,seed,modes,kl_to_uniform\n";
  for (const auto& a : arms) {
    for (std::size_t i = 0; i < a.seeds_used.size(); ++i)
      os << a.label << ',' << a.seeds_used[i] << ',' << a.seed_modes[i] << ',' << a.seed_kl[i]
         << '\n';
    for (std::uint64_t s : a.seeds_failed) os << a.label << ',' << s << ",failed,failed\n";
    os << a.label << ",mean," << a.modes_mean << ',' << a.kl_mean << '\n';
    os << a.label << ",std," << a.modes_std << ',' << a.kl_std << '\n';
  }
  return os.str();
}

// ---- Sweeps ----

std::vector<SweepOutcome> run_sweep(const std::vector<SweepCell>& grid, const Dataset<float>& data,
                                    FeatureExtractor& extractor, long n_real, long n_fake,
                                    const std::vector<std::uint64_t>& eval_seeds, long is_splits) {
  IGAN_CHECK(!grid.empty(), "run_sweep: empty grid");
  std::vector<SweepOutcome> out;
  for (const auto& cell : grid) {
    SweepOutcome o;
    o.name = cell.name;
    try {
      TrainState<float> state(cell.cfg, cell.net);
      run_training(state, data, TrainCallbacks{});
      o.report = evaluate_generator(*state.gen, extractor, data, n_real, n_fake, eval_seeds,
                                    is_splits);
    } catch (const std::exception& e) {
      o.failed = true;
      o.error = e.what();
      std::cerr << "sweep cell " << cell.name << " failed: " << e.what() << '\n';
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepOutcome>& outcomes) {
  std::ostringstream os;
  os << "cell,failed," << MetricReport::csv_header() << '\n';
  for (const auto& o : outcomes) {
    os << o.name << ',' << (o.failed ? 1 : 0) << ',';
    if (o.failed)
      os << ",,,,,,,,";
    else
      os << o.report.csv_row();
    os << '\n';
  }
  return os.str();
}

}  // namespace igan
