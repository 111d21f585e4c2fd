#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "igan/checkpoint.hpp"
#include "igan/gan_nets.hpp"
#include "igan/training.hpp"

using namespace igan;
namespace fs = std::filesystem;

namespace {

NetSpec tiny_net() {
  NetSpec net;
  net.arch = NetSpec::Arch::dcgan;
  net.noise_dim = 8;
  net.gen_widths = {16, 16, 8, 8};
  net.disc_widths = {4, 8, 8};
  return net;
}

TrainConfig tiny_config(long total = 2) {
  TrainConfig cfg;
  cfg.mode = GanMode::infomax;
  cfg.batch_size = 4;
  cfg.rkhs_dim = 8;
  cfg.n_dis = 1;
  cfg.total_g_steps = total;
  cfg.seed = 31;
  return cfg;
}

Dataset<float> random_dataset(long n, std::uint64_t seed) {
  Dataset<float> data;
  Rng rng(seed);
  data.images = Tensor<float>::gaussian({n, 32, 32, 3}, rng, 0.5f);
  for (std::size_t i = 0; i < data.images.numel(); ++i)
    data.images.data()[i] = std::clamp(data.images.data()[i], -1.0f, 1.0f);
  return data;
}

std::vector<float> snapshot(const nn::ParamRefs<float>& params) {
  std::vector<float> out;
  for (const auto* p : params.params)
    out.insert(out.end(), p->value.data(), p->value.data() + p->value.numel());
  return out;
}

std::string scratch_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

struct Cleanup {
  std::string path;
  ~Cleanup() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("checkpoint round trip restores every piece of state") {
  const std::string path = scratch_path("igan_ckpt_roundtrip.ckpt");
  Cleanup guard{path};

  TrainState<float> a(tiny_config(), tiny_net());
  Dataset<float> data = random_dataset(16, 2);
  run_training(a, data, {});
  save_checkpoint(a, path);

  TrainState<float> b(tiny_config(), tiny_net());
  CHECK(snapshot(b.g_params) != snapshot(a.g_params));  // fresh weights differ post-training
  load_checkpoint(b, path);

  CHECK(snapshot(b.g_params) == snapshot(a.g_params));
  CHECK(snapshot(b.d_params) == snapshot(a.d_params));
  CHECK(b.g_step == a.g_step);
  CHECK(b.d_step == a.d_step);
  CHECK(b.opt_g.t() == a.opt_g.t());
  CHECK(b.opt_d.t() == a.opt_d.t());
  CHECK(b.rng_noise.serialize() == a.rng_noise.serialize());
  CHECK(b.loader_epoch_rng == a.loader_epoch_rng);
  CHECK(b.loader_cursor == a.loader_cursor);

  REQUIRE(b.opt_g.m().size() == a.opt_g.m().size());
  for (std::size_t i = 0; i < a.opt_g.m().size(); ++i) {
    const auto& am = a.opt_g.m()[i];
    const auto& bm = b.opt_g.m()[i];
    REQUIRE(am.numel() == bm.numel());
    for (std::size_t j = 0; j < am.numel(); ++j) CHECK(bm.data()[j] == am.data()[j]);
  }

  // Layer states (spectral-norm vectors) travel too: both discriminators
  // produce identical logits on a fixed batch in eval mode.
  a.disc->set_training(false);
  b.disc->set_training(false);
  Tensor<float> probe = data.images.slice0(0, 4);
  auto oa = a.disc->forward(probe);
  auto ob = b.disc->forward(probe);
  for (std::size_t i = 0; i < oa.logit.numel(); ++i)
    CHECK(ob.logit.data()[i] == oa.logit.data()[i]);
}

TEST_CASE("resumed training replays the straight run bitwise") {
  const std::string path = scratch_path("igan_ckpt_resume.ckpt");
  Cleanup guard{path};

  Dataset<float> data = random_dataset(16, 3);

  TrainState<float> straight(tiny_config(4), tiny_net());
  run_training(straight, data, {});

  TrainState<float> interrupted(tiny_config(4), tiny_net());
  TrainCallbacks cb;
  cb.checkpoint_every = 2;
  cb.on_checkpoint = [&](long s) {
    if (s == 2) save_checkpoint(interrupted, path);
  };
  run_training(interrupted, data, cb);

  TrainState<float> resumed(tiny_config(4), tiny_net());
  load_checkpoint(resumed, path);
  CHECK(resumed.g_step == 2);
  run_training(resumed, data, {});

  CHECK(resumed.g_step == straight.g_step);
  CHECK(snapshot(resumed.g_params) == snapshot(straight.g_params));
  CHECK(snapshot(resumed.d_params) == snapshot(straight.d_params));
  CHECK(resumed.rng_noise.serialize() == straight.rng_noise.serialize());
}

TEST_CASE("config hash mismatch is rejected") {
  const std::string path = scratch_path("igan_ckpt_hash.ckpt");
  Cleanup guard{path};

  TrainState<float> a(tiny_config(), tiny_net());
  save_checkpoint(a, path);

  TrainConfig other = tiny_config();
  other.alpha = 0.33;
  TrainState<float> b(other, tiny_net());
  CHECK_THROWS_AS(load_checkpoint(b, path), ConfigError);

  NetSpec wider = tiny_net();
  wider.gen_widths[0] = 32;
  TrainState<float> c(tiny_config(), wider);
  CHECK_THROWS_AS(load_checkpoint(c, path), ConfigError);
}

TEST_CASE("malformed files raise data errors") {
  const std::string path = scratch_path("igan_ckpt_bad.ckpt");
  Cleanup guard{path};

  TrainState<float> state(tiny_config(), tiny_net());
  save_checkpoint(state, path);
  std::ifstream is(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  is.close();
  REQUIRE(bytes.size() > 200);

  auto write_variant = [&](const std::string& contents) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << contents;
  };
  TrainState<float> target(tiny_config(), tiny_net());

  CHECK_THROWS_AS(load_checkpoint(target, scratch_path("igan_ckpt_missing.ckpt")), DataError);

  write_variant(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(target, path), DataError);

  write_variant(bytes + "junk");
  CHECK_THROWS_AS(load_checkpoint(target, path), DataError);

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  write_variant(wrong_magic);
  CHECK_THROWS_AS(load_checkpoint(target, path), DataError);

  write_variant("");
  CHECK_THROWS_AS(load_checkpoint(target, path), DataError);

  // A valid header with a hostile version number.
  std::string vline = bytes;
  const auto nl = vline.find('\n');
  vline.replace(0, nl, "IGANCKPT 9");
  write_variant(vline);
  CHECK_THROWS_AS(load_checkpoint(target, path), DataError);

  // Damage must not leave target half-loaded in a way that breaks a later
  // good load.
  write_variant(bytes);
  CHECK_NOTHROW(load_checkpoint(target, path));
}

TEST_CASE("raw checkpoint view exposes manifest and named blobs") {
  const std::string path = scratch_path("igan_ckpt_raw.ckpt");
  Cleanup guard{path};

  TrainState<float> state(tiny_config(), tiny_net());
  Dataset<float> data = random_dataset(16, 4);
  run_training(state, data, {});
  save_checkpoint(state, path);

  CheckpointContents c = read_checkpoint(path);
  CHECK(c.manifest.version == 1);
  CHECK(c.manifest.g_step == 2);
  CHECK(c.manifest.d_step == 2);
  CHECK(c.manifest.config_hash != 0);
  CHECK(c.manifest.adam_g_t == 2);
  CHECK(c.manifest.adam_d_t == 2);
  CHECK(c.manifest.loader_cursor == state.loader_cursor);
  CHECK_NOTHROW(Rng::deserialize(c.manifest.rng_noise));
  CHECK_NOTHROW(Rng::deserialize(c.manifest.loader_epoch_rng));

  auto any_with_prefix = [&](const std::string& prefix) {
    return std::any_of(c.blobs.begin(), c.blobs.end(),
                       [&](const auto& kv) { return kv.first.rfind(prefix, 0) == 0; });
  };
  auto any_with_substr = [&](const std::string& sub) {
    return std::any_of(c.blobs.begin(), c.blobs.end(),
                       [&](const auto& kv) { return kv.first.find(sub) != std::string::npos; });
  };
  CHECK(any_with_prefix("gen."));
  CHECK(any_with_prefix("disc."));
  CHECK(any_with_prefix("adam_g.m."));
  CHECK(any_with_prefix("adam_g.v."));
  CHECK(any_with_prefix("adam_d.m."));
  CHECK(any_with_substr("critic.theta"));
  CHECK(any_with_substr(".sn_u"));

  // Blob payloads mirror the live parameters.
  const auto* p0 = state.g_params.params.front();
  auto it = c.blobs.find(p0->name);
  REQUIRE(it != c.blobs.end());
  REQUIRE(it->second.numel() == p0->value.numel());
  for (std::size_t i = 0; i < p0->value.numel(); ++i)
    CHECK(it->second.data()[i] == p0->value.data()[i]);

  // Saving is atomic: no temp file lingers next to the result.
  CHECK_FALSE(fs::exists(path + ".tmp"));
  CHECK_NOTHROW(save_checkpoint(state, path));  // overwrite in place
}
