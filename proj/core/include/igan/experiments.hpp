#pragma once

#include <string>
#include <utility>
#include <vector>

#include "igan/metrics.hpp"
#include "igan/training.hpp"

namespace igan {

// Synthetic 10-class stand-in for a natural image set: colored shapes with
// per-class color and geometry, light jitter and noise. Images are
// size x size x 3 in [-1, 1]; labels are the class ids.
Dataset<float> make_synthetic_clusters(long count, long image_size, std::uint64_t seed);

// Procedural digit glyphs (single channel, size x size x 1 in [-1, 1]):
// a 5x7 bitmap font under random shift, scale, rotation and brightness.
// Labels are the digits.
Dataset<float> make_glyph_digits(long count, long image_size, std::uint64_t seed);

// Stacks three independently drawn digits as R, G, B channels; the mode label
// is 100*d_R + 10*d_G + d_B. Digits must be single-channel.
Dataset<float> build_stacked_mnist(const Dataset<float>& digits, long count, std::uint64_t seed);

// Cache file: magic SMN1, u32 count, then per sample 32*32*3 bytes (row-major
// HWC, [-1,1] mapped to 0..255) and a little-endian u16 mode label.
void write_stacked_cache(const std::string& path, const Dataset<float>& data);
Dataset<float> read_stacked_cache(const std::string& path);

// ---- Catastrophic forgetting harness ----

struct ForgettingSchedule {
  long task_period = 1000;  // iterations per class
  long cycle_length = 10;   // classes per cycle
  long total_iters = 0;     // 0 = two full cycles
  bool regularizer_on = false;
  double regularizer_weight = 0.2;

  // Harness knobs, defaults chosen for desk-scale runs.
  long batch_size = 48;
  long eval_every = 200;
  double lr = 2e-4;
  long rkhs_dim = 128;
  double width_scale = 0.125;  // discriminator backbone width multiplier

  void validate() const;
  long resolved_total() const {
    return total_iters > 0 ? total_iters : 2 * task_period * cycle_length;
  }
};

struct ForgettingPoint {
  long iter = 0;
  long task = 0;
  double mean_past_acc = 0.0;          // held-out balanced accuracy over past tasks
  std::vector<double> per_class_acc;   // balanced accuracy of each task's own head
};

struct ForgettingTrace {
  std::vector<ForgettingPoint> points;
  // Mean of mean_past_acc over eval points in iteration range [begin, end).
  double mean_past_acc_in(long begin, long end) const;
};

// Trains a discriminator backbone on a one-vs-all task whose positive class
// rotates every task_period iterations. Each task owns a binary head over the
// shared global features; a head only updates while its task is active, so
// its held-out accuracy later on measures drift of the shared features. The
// regularized arm adds the contrastive objective on those features.
ForgettingTrace run_forgetting(const Dataset<float>& train, const Dataset<float>& heldout,
                               const ForgettingSchedule& schedule, std::uint64_t seed);

std::string forgetting_csv(const ForgettingTrace& trace);

// ---- Mode-collapse contrastive probe ----

struct GeneratorSimulation {
  enum class Kind { all_classes, one_class, one_image };
  Kind kind = Kind::all_classes;
  long index = 0;  // class id or image row, by kind

  std::string name() const;
  static GeneratorSimulation all();
  static GeneratorSimulation one_class(long c);
  static GeneratorSimulation one_image(long row);
};

struct ProbeSettings {
  long train_steps = 600;
  long batch_size = 64;
  long eval_every = 60;
  long eval_batches = 20;        // batches per curve point
  long final_eval_batches = 100;
  double lr = 1e-3;
  long rkhs_dim = 256;
  double width_scale = 0.25;
};

struct ProbeCurve {
  std::string sim;
  std::vector<long> steps;
  std::vector<double> accuracy;
  double final_accuracy = 0.0;
};

// Trains discriminator + critics on the contrastive loss over real training
// images, then measures contrastive accuracy on batches drawn from each
// simulated generator (evaluation is side-effect free on the training state).
std::vector<ProbeCurve> run_mode_probe(const Dataset<float>& train, const Dataset<float>& eval_set,
                                       const std::vector<GeneratorSimulation>& sims,
                                       const ProbeSettings& settings, std::uint64_t seed);

std::string probe_csv(const std::vector<ProbeCurve>& curves);

// ---- Stacked digit mode recovery ----

struct ModeReport {
  std::string label;
  long modes_recovered = 0;    // distinct modes, in [0, 1000]
  double kl_to_uniform = 0.0;  // KL(p || uniform), 0*log 0 := 0
  // Per-seed breakdown when aggregated over seeds.
  std::vector<std::uint64_t> seeds_used, seeds_failed;
  std::vector<long> seed_modes;
  std::vector<double> seed_kl;
  double modes_mean = 0.0, modes_std = 0.0;
  double kl_mean = 0.0, kl_std = 0.0;
};

// Classifies each channel with the digit classifier and histograms the mode
// ids. The classifier must score at least `gate` on the held-out digits.
ModeReport count_modes(const Tensor<float>& images, SmallCnnExtractor& channel_classifier,
                       const Dataset<float>& gate_set, double gate = 0.99);

struct StackedSettings {
  double scale = 0.25;  // discriminator width multiplier (generator full width)
  bool with_infomax = false;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  long g_steps = 5000;
  long n_dis = 1;
  long batch_size = 64;
  double lr = 2e-4;
  double alpha = 0.2, beta = 0.2;  // used by the infomax arm
  long rkhs_dim = 256;
  long eval_samples = 10000;
  std::vector<long> gen_widths;  // empty = builder default
};

// One arm (baseline or +infomax) over the given seeds. Seeds whose training
// aborts on a numeric error are recorded in seeds_failed and excluded from
// the aggregate.
ModeReport run_stacked_mnist(const StackedSettings& settings, const Dataset<float>& stacked,
                             SmallCnnExtractor& digit_classifier,
                             const Dataset<float>& digit_holdout);

std::string stacked_csv(const std::vector<ModeReport>& arms);

// ---- Sweeps ----

struct SweepCell {
  std::string name;
  TrainConfig cfg;
  NetSpec net;
};

struct SweepOutcome {
  std::string name;
  bool failed = false;
  std::string error;
  MetricReport report;
};

// Trains and evaluates one run per cell; per-cell failures are recorded and
// the sweep continues.
std::vector<SweepOutcome> run_sweep(const std::vector<SweepCell>& grid, const Dataset<float>& data,
                                    FeatureExtractor& extractor, long n_real, long n_fake,
                                    const std::vector<std::uint64_t>& eval_seeds,
                                    long is_splits = 1);

std::string sweep_csv(const std::vector<SweepOutcome>& outcomes);

}  // namespace igan
