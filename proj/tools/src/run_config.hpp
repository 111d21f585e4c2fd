#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "igan/gan_nets.hpp"
#include "igan/training.hpp"

namespace igan {

struct DataConfig {
  std::string name = "clusters";  // clusters | stacked | stacked_cache
  std::string path;               // cache file for stacked_cache
  long count = 10000;
  std::uint64_t seed = 7;
  bool smoke = false;  // caps count at 1024 for quick runs
};

struct EvalConfig {
  long n_real = 50000;
  long n_fake = 10000;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string extractor;  // saved extractor path; empty = train one on the dataset
  double min_extractor_acc = 0.9;
  long is_splits = 1;
  long every = 0;  // metric report + sample grid every this many generator steps, 0 = off
};

struct IoConfig {
  std::string out_dir = "runs/run";
  long checkpoint_every = 1000;
  long log_every = 10;
};

// One run, end to end. The JSON schema mirrors the sections; unknown keys
// are rejected with the offending path in the message.
struct RunConfig {
  NetSpec net;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  IoConfig io;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// `spec` is "section.key=value" (value parsed as JSON when possible,
// else taken as a string). Creates intermediate objects as needed.
void apply_override(nlohmann::json& j, const std::string& spec);

// Reads the file, applies overrides in order, validates the schema.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

std::string arch_to_string(NetSpec::Arch arch);
NetSpec::Arch arch_from_string(const std::string& s);
std::string lr_decay_to_string(LrDecay d);
LrDecay lr_decay_from_string(const std::string& s);

}  // namespace igan
