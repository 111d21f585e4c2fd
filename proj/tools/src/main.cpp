#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "igan/checkpoint.hpp"
#include "igan/experiments.hpp"
#include "image_io.hpp"
#include "run_config.hpp"

#ifndef IGAN_VERSION
#define IGAN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace igan {
namespace {

bool deterministic_mode() {
  const char* v = std::getenv("IGAN_DETERMINISTIC");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Extra CLI tokens are dotted-path config overrides: --train.alpha=0
std::vector<std::string> overrides_from_extras(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (const auto& tok : extras) {
    if (tok.rfind("--", 0) != 0 || tok.find('=') == std::string::npos ||
        tok.find('.') == std::string::npos)
      throw ConfigError("unrecognized argument (overrides look like --section.key=value): " + tok);
    out.push_back(tok.substr(2));
  }
  return out;
}

Dataset<float> build_dataset(const RunConfig& rc) {
  long count = rc.data.count;
  if (rc.data.smoke) count = std::min(count, 1024L);
  if (rc.data.name == "clusters")
    return make_synthetic_clusters(count, rc.net.image_size, rc.data.seed);
  if (rc.data.name == "stacked") {
    if (rc.net.image_size != 32) throw ConfigError("stacked data requires image_size 32");
    Dataset<float> digits = make_glyph_digits(count, 32, rc.data.seed);
    return build_stacked_mnist(digits, count, rc.data.seed + 1);
  }
  return read_stacked_cache(rc.data.path);
}

long label_classes(const Dataset<float>& data) {
  long top = 0;
  for (long l : data.labels) top = std::max(top, l);
  return top + 1;
}

std::unique_ptr<SmallCnnExtractor> make_extractor(const RunConfig& rc, const Dataset<float>& data,
                                                  const fs::path& dir) {
  if (!rc.eval.extractor.empty()) {
    auto ex = std::make_unique<SmallCnnExtractor>(rc.net.image_size, data.images.dim(3), 10,
                                                  rc.data.seed);
    ex->load(rc.eval.extractor);
    return ex;
  }
  if (data.labels.empty())
    throw ConfigError("dataset has no labels to train an extractor; set eval.extractor");
  auto ex = std::make_unique<SmallCnnExtractor>(rc.net.image_size, data.images.dim(3),
                                                label_classes(data), rc.data.seed);
  // Epochs sized for roughly 600 optimizer steps regardless of dataset size.
  const long batches = (data.size() + 127) / 128;
  const long epochs = std::clamp((600 + batches - 1) / batches, 3L, 200L);
  std::cerr << "training feature extractor (" << epochs << " epochs)...\n";
  ex->fit(data, epochs, 128, 1e-3, rc.eval.min_extractor_acc);
  ex->save((dir / "extractor.cnn").string());
  return ex;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os.good()) throw DataError("cannot open for write: " + path.string());
  os << text;
  IGAN_CHECK(os.good(), "write failed: " + path.string());
}

void write_run_meta(const RunConfig& rc, const fs::path& dir) {
  std::ostringstream os;
  os << "version=" << IGAN_VERSION << '\n'
     << "config_hash=" << hash_hex(fnv1a(rc.train.canonical_string(rc.net))) << '\n'
     << "deterministic=" << (deterministic_mode() ? 1 : 0) << '\n'
     << "data=" << rc.data.name << '\n';
  write_text_file(dir / "run_meta.txt", os.str());
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume;
  long long seed = -1;
};

int cmd_train(const TrainArgs& args, const std::vector<std::string>& overrides) {
  RunConfig rc = load_run_config(args.config, overrides);
  if (args.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.out.empty()) rc.io.out_dir = args.out;

  const fs::path dir(rc.io.out_dir);
  fs::create_directories(dir / "checkpoints");
  write_text_file(dir / "config.json", rc.to_json().dump(2) + "\n");
  write_run_meta(rc, dir);

  Dataset<float> data = build_dataset(rc);
  TrainState<float> state(rc.train, rc.net);
  if (!args.resume.empty()) load_checkpoint(state, args.resume);

  std::unique_ptr<SmallCnnExtractor> extractor;
  if (rc.eval.every > 0) extractor = make_extractor(rc, data, dir);

  std::ofstream log(dir / "train_log.csv", std::ios::trunc);
  log << steplog_csv_header() << '\n';
  std::ofstream metric_log;

  std::string last_ckpt = args.resume;
  TrainCallbacks cb;
  cb.checkpoint_every = rc.io.checkpoint_every;
  cb.on_checkpoint = [&](long g_step) {
    const fs::path p = dir / "checkpoints" / ("step_" + std::to_string(g_step) + ".ckpt");
    save_checkpoint(state, p.string());
    last_ckpt = p.string();
  };
  cb.on_step = [&](const StepLog& s) {
    if (s.g_step == 1 || s.g_step % rc.io.log_every == 0 ||
        s.g_step == rc.train.total_g_steps) {
      log << steplog_csv_row(s) << '\n';
      log.flush();
    }
    if (rc.eval.every > 0 &&
        (s.g_step % rc.eval.every == 0 || s.g_step == rc.train.total_g_steps)) {
      MetricReport rep = evaluate_generator(*state.gen, *extractor, data, rc.eval.n_real,
                                            rc.eval.n_fake, rc.eval.seeds, rc.eval.is_splits);
      write_text_file(dir / ("metrics_step" + std::to_string(s.g_step) + ".txt"), rep.text());
      if (!metric_log.is_open()) {
        metric_log.open(dir / "metrics.csv", std::ios::trunc);
        metric_log << "g_step," << MetricReport::csv_header() << '\n';
      }
      metric_log << s.g_step << ',' << rep.csv_row() << '\n';
      metric_log.flush();
      Rng srng = Rng(rc.train.seed).derive("samples");
      write_image_grid((dir / ("samples_step" + std::to_string(s.g_step) + ".ppm")).string(),
                       sample_images(*state.gen, 64, 64, srng), 8);
    }
  };

  try {
    run_training(state, data, cb);
  } catch (const NumericError& e) {
    std::cerr << "training aborted: " << e.what() << '\n'
              << "last checkpoint: " << (last_ckpt.empty() ? "(none)" : last_ckpt) << '\n';
    return 3;
  }

  const fs::path fin = dir / "checkpoints" / "final.ckpt";
  save_checkpoint(state, fin.string());
  Rng srng = Rng(rc.train.seed).derive("samples");
  write_image_grid((dir / "samples_final.ppm").string(), sample_images(*state.gen, 64, 64, srng),
                   8);
  std::cout << "run complete: " << dir.string() << '\n';
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  std::string out;
};

int cmd_eval(const EvalArgs& args, const std::vector<std::string>& overrides) {
  RunConfig rc = load_run_config(args.config, overrides);
  const fs::path dir = args.out.empty() ? fs::path(args.checkpoint).parent_path()
                                        : fs::path(args.out);
  fs::create_directories(dir.empty() ? fs::path(".") : dir);

  Dataset<float> data = build_dataset(rc);
  TrainState<float> state(rc.train, rc.net);
  load_checkpoint(state, args.checkpoint);
  auto extractor = make_extractor(rc, data, dir);

  MetricReport rep = evaluate_generator(*state.gen, *extractor, data, rc.eval.n_real,
                                        rc.eval.n_fake, rc.eval.seeds, rc.eval.is_splits);
  write_text_file(dir / "metrics.txt", rep.text());
  write_text_file(dir / "metrics.csv",
                  MetricReport::csv_header() + "\n" + rep.csv_row() + "\n");
  std::cout << rep.text();
  return 0;
}

// ---- probe ----

struct ProbeArgs {
  std::string out;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  long steps = 600;
  long count = 8192;
  long image_size = 32;
};

int cmd_probe(const ProbeArgs& args) {
  fs::create_directories(args.out);
  Dataset<float> train = make_synthetic_clusters(args.count, args.image_size, 7);
  const std::vector<GeneratorSimulation> sims = {GeneratorSimulation::all(),
                                                 GeneratorSimulation::one_class(0),
                                                 GeneratorSimulation::one_image(0)};
  ProbeSettings st;
  st.train_steps = args.steps;

  // Simulated generators replay training images, as a collapsed generator would.
  std::cout << "sim,seed,final_accuracy\n";
  for (std::uint64_t seed : args.seeds) {
    std::vector<ProbeCurve> curves = run_mode_probe(train, train, sims, st, seed);
    write_text_file(fs::path(args.out) / ("probe_seed" + std::to_string(seed) + ".csv"),
                    probe_csv(curves));
    for (const auto& c : curves)
      std::cout << c.sim << ',' << seed << ',' << std::setprecision(6) << c.final_accuracy
                << '\n';
  }
  return 0;
}

// ---- forgetting ----

struct ForgettingArgs {
  std::string out;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  long task_period = 1000;
  long total = 0;
  long eval_every = 200;
  long batch = 48;
  double reg_weight = 0.2;
  double width_scale = 0.125;
  long rkhs_dim = 128;
};

int cmd_forgetting(const ForgettingArgs& args) {
  fs::create_directories(args.out);
  Dataset<float> train = make_synthetic_clusters(8192, 32, 7);
  Dataset<float> heldout = make_synthetic_clusters(2000, 32, 8);

  std::cout << "arm,seed,second_cycle_mean_past_acc\n";
  for (std::uint64_t seed : args.seeds) {
    for (int reg = 0; reg < 2; ++reg) {
      ForgettingSchedule sch;
      sch.task_period = args.task_period;
      sch.total_iters = args.total;
      sch.regularizer_on = reg == 1;
      sch.regularizer_weight = args.reg_weight;
      sch.eval_every = args.eval_every;
      sch.batch_size = args.batch;
      sch.width_scale = args.width_scale;
      sch.rkhs_dim = args.rkhs_dim;
      ForgettingTrace trace = run_forgetting(train, heldout, sch, seed);
      const std::string arm = reg ? "regularized" : "baseline";
      write_text_file(fs::path(args.out) /
                          ("forgetting_" + arm + "_seed" + std::to_string(seed) + ".csv"),
                      forgetting_csv(trace));
      const long total = sch.resolved_total();
      std::cout << arm << ',' << seed << ',' << std::setprecision(6)
                << trace.mean_past_acc_in(total / 2, total + 1) << '\n';
    }
  }
  return 0;
}

// ---- stacked ----

struct StackedArgs {
  std::string out;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<double> scales = {0.25, 0.5};
  long g_steps = 5000;
  long n_dis = 1;
  long count = 20000;
  long eval_samples = 10000;
  std::vector<long> gen_widths;
  bool baseline_only = false;
  bool infomax_only = false;
};

int cmd_stacked(const StackedArgs& args) {
  fs::create_directories(args.out);
  Dataset<float> digits = make_glyph_digits(20000, 32, 11);
  Dataset<float> digit_holdout = make_glyph_digits(2000, 32, 12);
  SmallCnnExtractor clf(32, 1, 10, 5);
  std::cerr << "training digit classifier...\n";
  clf.fit(digits, 3, 128, 1e-3, 0.99);
  clf.save((fs::path(args.out) / "digit_classifier.cnn").string());

  Dataset<float> stacked = build_stacked_mnist(digits, args.count, 13);
  write_stacked_cache((fs::path(args.out) / "stacked.smn").string(), stacked);

  std::vector<ModeReport> arms;
  for (double scale : args.scales)
    for (int im = 0; im < 2; ++im) {
      if ((im == 0 && args.infomax_only) || (im == 1 && args.baseline_only)) continue;
      StackedSettings st;
      st.scale = scale;
      st.with_infomax = im == 1;
      st.seeds = args.seeds;
      st.g_steps = args.g_steps;
      st.n_dis = args.n_dis;
      st.eval_samples = args.eval_samples;
      st.gen_widths = args.gen_widths;
      std::cerr << "running arm " << (im ? "infomax" : "baseline") << " at scale " << scale
                << "...\n";
      arms.push_back(run_stacked_mnist(st, stacked, clf, digit_holdout));
      write_text_file(fs::path(args.out) / "stacked.csv", stacked_csv(arms));
    }
  std::cout << stacked_csv(arms);
  return 0;
}

// ---- sweep ----

struct SweepArgs {
  std::string config;
  std::string out;
  std::vector<std::string> vary;  // "train.alpha=0;0.2"
};

int cmd_sweep(const SweepArgs& args, const std::vector<std::string>& overrides) {
  RunConfig base = load_run_config(args.config, overrides);
  const fs::path dir = args.out.empty() ? fs::path(base.io.out_dir) / "sweep"
                                        : fs::path(args.out);
  fs::create_directories(dir);

  // Each --vary contributes one axis; cells are the cartesian product.
  struct Axis {
    std::string key;
    std::vector<std::string> values;
  };
  std::vector<Axis> axes;
  for (const auto& spec : args.vary) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("bad --vary (expected section.key=v1;v2;...): " + spec);
    Axis axis;
    axis.key = spec.substr(0, eq);
    std::istringstream vs(spec.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ';'))
      if (!v.empty()) axis.values.push_back(v);
    if (axis.values.empty()) throw ConfigError("empty --vary values: " + spec);
    axes.push_back(std::move(axis));
  }
  if (axes.empty()) throw ConfigError("sweep needs at least one --vary axis");

  std::ifstream is(args.config);
  nlohmann::json base_json = nlohmann::json::parse(is);
  for (const auto& o : overrides) apply_override(base_json, o);

  std::vector<SweepCell> grid;
  std::vector<std::size_t> at(axes.size(), 0);
  while (true) {
    nlohmann::json j = base_json;
    std::string name;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      apply_override(j, axes[a].key + "=" + axes[a].values[at[a]]);
      const auto dot = axes[a].key.rfind('.');
      if (!name.empty()) name += ' ';
      name += axes[a].key.substr(dot + 1) + "=" + axes[a].values[at[a]];
    }
    RunConfig rc = RunConfig::from_json(j);
    grid.push_back({name, rc.train, rc.net});
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++at[a] < axes[a].values.size()) break;
      at[a] = 0;
    }
    if (a == axes.size()) break;
  }

  Dataset<float> data = build_dataset(base);
  auto extractor = make_extractor(base, data, dir);
  std::vector<SweepOutcome> outcomes =
      run_sweep(grid, data, *extractor, base.eval.n_real, base.eval.n_fake, base.eval.seeds,
                base.eval.is_splits);
  write_text_file(dir / "sweep.csv", sweep_csv(outcomes));
  std::cout << sweep_csv(outcomes);
  return 0;
}

// ---- plot ----

struct PlotArgs {
  std::string kind;
  std::vector<std::string> csvs;
  std::string out;
  std::vector<std::string> panels;
};

std::vector<double> numeric_column(const CsvTable& t, const std::string& name) {
  const long c = t.column(name);
  if (c < 0) throw DataError("csv has no column " + name);
  std::vector<double> out;
  for (const auto& row : t.rows) {
    try {
      out.push_back(std::stod(row[static_cast<std::size_t>(c)]));
    } catch (const std::exception&) {
      throw DataError("non-numeric value in column " + name + ": " +
                      row[static_cast<std::size_t>(c)]);
    }
  }
  return out;
}

std::string file_stem(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_plot(const PlotArgs& args) {
  if (fs::path(args.out).has_parent_path())
    fs::create_directories(fs::path(args.out).parent_path());

  if (args.kind == "train") {
    const CsvTable t = read_csv(args.csvs.front());
    const std::vector<double> x = numeric_column(t, "g_step");
    struct Panel {
      std::string name, title, ylab;
      std::vector<std::string> cols;
    };
    const std::vector<Panel> known = {
        {"gan", "GAN losses", "loss", {"loss_d_gan", "loss_g_gan"}},
        {"nce", "Contrastive losses", "loss", {"loss_nce_real", "loss_nce_fake"}},
        {"acc", "Contrastive accuracy", "accuracy", {"nce_acc"}},
        {"lr", "Learning rate", "lr", {"lr"}}};
    std::vector<std::string> wanted =
        args.panels.empty() ? std::vector<std::string>{"gan", "nce", "acc"} : args.panels;
    for (const auto& w : wanted) {
      const auto it = std::find_if(known.begin(), known.end(),
                                   [&](const Panel& p) { return p.name == w; });
      if (it == known.end()) throw ConfigError("unknown panel: " + w);
      std::vector<PlotSeries> series;
      for (const auto& col : it->cols) series.push_back({col, x, numeric_column(t, col)});
      write_svg_chart(args.out + "_" + it->name + ".svg", it->title, "generator step", it->ylab,
                      series);
    }
    return 0;
  }

  if (args.kind == "probe") {
    std::vector<PlotSeries> series;
    for (const auto& path : args.csvs) {
      const CsvTable t = read_csv(path);
      const long cs = t.column("sim"), cx = t.column("step"), cy = t.column("accuracy");
      if (cs < 0 || cx < 0 || cy < 0) throw DataError("not a probe csv: " + path);
      const std::string prefix = args.csvs.size() > 1 ? file_stem(path) + ":" : "";
      for (const auto& row : t.rows) {
        const double step = std::stod(row[static_cast<std::size_t>(cx)]);
        if (step < 0) continue;  // final-estimate rows
        const std::string label = prefix + row[static_cast<std::size_t>(cs)];
        auto it = std::find_if(series.begin(), series.end(),
                               [&](const PlotSeries& s) { return s.label == label; });
        if (it == series.end()) {
          series.push_back({label, {}, {}});
          it = series.end() - 1;
        }
        it->x.push_back(step);
        it->y.push_back(std::stod(row[static_cast<std::size_t>(cy)]));
      }
    }
    write_svg_chart(args.out + "_probe.svg", "Contrastive accuracy by simulated generator",
                    "critic training step", "accuracy", series);
    return 0;
  }

  if (args.kind == "forgetting") {
    std::vector<PlotSeries> series;
    for (const auto& path : args.csvs) {
      const CsvTable t = read_csv(path);
      series.push_back(
          {file_stem(path), numeric_column(t, "iter"), numeric_column(t, "mean_past_acc")});
    }
    write_svg_chart(args.out + "_forgetting.svg", "Held-out accuracy on past tasks", "iteration",
                    "accuracy", series);
    return 0;
  }

  if (args.kind == "sweep") {
    const CsvTable t = read_csv(args.csvs.front());
    std::vector<double> x, y;
    const long cf = t.column("fid_mean"), cfail = t.column("failed");
    if (cf < 0 || cfail < 0) throw DataError("not a sweep csv: " + args.csvs.front());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (t.rows[i][static_cast<std::size_t>(cfail)] == "1") continue;
      x.push_back(static_cast<double>(i));
      y.push_back(std::stod(t.rows[i][static_cast<std::size_t>(cf)]));
    }
    write_svg_chart(args.out + "_sweep.svg", "Sweep FID by cell", "cell index", "FID",
                    {{"fid_mean", x, y}});
    return 0;
  }

  throw ConfigError("unknown plot kind: " + args.kind +
                    " (expected train, probe, forgetting or sweep)");
}

}  // namespace
}  // namespace igan

int main(int argc, char** argv) {
  using namespace igan;

  CLI::App app{"InfoMax-GAN training and evaluation toolkit"};
  app.set_version_flag("--version", std::string(IGAN_VERSION));
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("-c,--config", train_args.config, "Run config (JSON)")->required();
  train->add_option("-o,--out", train_args.out, "Output directory (overrides io.out_dir)");
  train->add_option("--resume", train_args.resume, "Checkpoint to resume from");
  train->add_option("-s,--seed", train_args.seed, "Seed (overrides train.seed)");
  train->allow_extras();

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("-c,--config", eval_args.config, "Run config (JSON)")->required();
  eval->add_option("-k,--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval->add_option("-o,--out", eval_args.out, "Output directory");
  eval->allow_extras();

  ProbeArgs probe_args;
  CLI::App* probe = app.add_subcommand("probe", "Mode-collapse contrastive probe");
  probe->add_option("-o,--out", probe_args.out, "Output directory")->required();
  probe->add_option("--seeds", probe_args.seeds, "Seeds")->delimiter(',');
  probe->add_option("--steps", probe_args.steps, "Critic training steps");
  probe->add_option("--count", probe_args.count, "Training set size");

  ForgettingArgs forget_args;
  CLI::App* forget = app.add_subcommand("forgetting", "Catastrophic forgetting harness");
  forget->add_option("-o,--out", forget_args.out, "Output directory")->required();
  forget->add_option("--seeds", forget_args.seeds, "Seeds")->delimiter(',');
  forget->add_option("--task-period", forget_args.task_period, "Iterations per task");
  forget->add_option("--total", forget_args.total, "Total iterations (0 = two cycles)");
  forget->add_option("--eval-every", forget_args.eval_every, "Evaluation period");
  forget->add_option("--batch", forget_args.batch, "Batch size");
  forget->add_option("--reg-weight", forget_args.reg_weight, "Contrastive regularizer weight");
  forget->add_option("--width-scale", forget_args.width_scale, "Backbone width scale");
  forget->add_option("--rkhs", forget_args.rkhs_dim, "Critic projection width");

  StackedArgs stacked_args;
  CLI::App* stacked = app.add_subcommand("stacked", "Stacked digit mode recovery");
  stacked->add_option("-o,--out", stacked_args.out, "Output directory")->required();
  stacked->add_option("--seeds", stacked_args.seeds, "Seeds")->delimiter(',');
  stacked->add_option("--scales", stacked_args.scales, "Discriminator width scales")
      ->delimiter(',');
  stacked->add_option("--g-steps", stacked_args.g_steps, "Generator steps per run");
  stacked->add_option("--n-dis", stacked_args.n_dis, "Discriminator steps per generator step");
  stacked->add_option("--count", stacked_args.count, "Stacked dataset size");
  stacked->add_option("--eval-samples", stacked_args.eval_samples, "Samples for mode counting");
  stacked->add_option("--gen-widths", stacked_args.gen_widths, "Generator stage widths")
      ->delimiter(',');
  stacked->add_flag("--baseline-only", stacked_args.baseline_only, "Skip the infomax arm");
  stacked->add_flag("--infomax-only", stacked_args.infomax_only, "Skip the baseline arm");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "Grid sweep over config overrides");
  sweep->add_option("-c,--config", sweep_args.config, "Base run config (JSON)")->required();
  sweep->add_option("-o,--out", sweep_args.out, "Output directory");
  sweep->add_option("--vary", sweep_args.vary, "Axis, e.g. train.alpha=0;0.2")->required();
  sweep->allow_extras();

  PlotArgs plot_args;
  CLI::App* plot = app.add_subcommand("plot", "Render SVG charts from harness CSVs");
  plot->add_option("--kind", plot_args.kind, "train, probe, forgetting or sweep")->required();
  plot->add_option("--csv", plot_args.csvs, "Input CSV file(s)")->required();
  plot->add_option("-o,--out", plot_args.out, "Output path prefix")->required();
  plot->add_option("--panel", plot_args.panels, "Train panels: gan, nce, acc, lr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(train_args, overrides_from_extras(train->remaining()));
    if (*eval) return cmd_eval(eval_args, overrides_from_extras(eval->remaining()));
    if (*probe) return cmd_probe(probe_args);
    if (*forget) return cmd_forgetting(forget_args);
    if (*stacked) return cmd_stacked(stacked_args);
    if (*sweep) return cmd_sweep(sweep_args, overrides_from_extras(sweep->remaining()));
    if (*plot) return cmd_plot(plot_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
