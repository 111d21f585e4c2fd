#include "run_config.hpp"

#include <fstream>
#include <functional>

#include "igan/common.hpp"

namespace igan {

using nlohmann::json;

std::string arch_to_string(NetSpec::Arch arch) {
  return arch == NetSpec::Arch::resnet ? "resnet" : "dcgan";
}

NetSpec::Arch arch_from_string(const std::string& s) {
  if (s == "resnet") return NetSpec::Arch::resnet;
  if (s == "dcgan") return NetSpec::Arch::dcgan;
  throw ConfigError("unknown arch: " + s + " (expected resnet or dcgan)");
}

std::string lr_decay_to_string(LrDecay d) { return d == LrDecay::linear ? "linear" : "none"; }

LrDecay lr_decay_from_string(const std::string& s) {
  if (s == "none") return LrDecay::none;
  if (s == "linear") return LrDecay::linear;
  throw ConfigError("unknown lr_decay: " + s + " (expected none or linear)");
}

namespace {

[[noreturn]] void type_error(const std::string& path, const char* expected) {
  throw ConfigError("config key " + path + ": expected " + expected);
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) type_error(path, "a number");
  return v.get<double>();
}

long as_long(const json& v, const std::string& path) {
  if (!v.is_number_integer()) type_error(path, "an integer");
  return v.get<long>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    type_error(path, "a non-negative integer");
  return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) type_error(path, "a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) type_error(path, "a string");
  return v.get<std::string>();
}

std::vector<long> as_long_list(const json& v, const std::string& path) {
  if (!v.is_array()) type_error(path, "an array of integers");
  std::vector<long> out;
  for (const auto& e : v) out.push_back(as_long(e, path));
  return out;
}

std::vector<std::uint64_t> as_u64_list(const json& v, const std::string& path) {
  if (!v.is_array()) type_error(path, "an array of non-negative integers");
  std::vector<std::uint64_t> out;
  for (const auto& e : v) out.push_back(as_u64(e, path));
  return out;
}

// Walks one section, dispatching each present key; unknown keys reject.
void walk_section(
    const json& j, const std::string& section,
    const std::vector<std::pair<std::string, std::function<void(const json&, const std::string&)>>>&
        fields) {
  if (!j.is_object()) throw ConfigError("config section " + section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto& [name, apply] : fields)
      if (name == key) {
        apply(value, section + "." + key);
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown config key: " + section + "." + key);
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  RunConfig rc;
  for (const auto& [section, body] : j.items()) {
    if (section == "model") {
      walk_section(body, section,
                   {{"arch", [&](const json& v, const std::string& p) {
                       rc.net.arch = arch_from_string(as_string(v, p));
                     }},
                    {"image_size", [&](const json& v, const std::string& p) {
                       rc.net.image_size = as_long(v, p);
                     }},
                    {"noise_dim", [&](const json& v, const std::string& p) {
                       rc.net.noise_dim = as_long(v, p);
                     }},
                    {"rotation_head", [&](const json& v, const std::string& p) {
                       rc.net.with_rotation_head = as_bool(v, p);
                     }},
                    {"base_width_scale", [&](const json& v, const std::string& p) {
                       rc.net.base_width_scale = as_double(v, p);
                     }},
                    {"feature_tap", [&](const json& v, const std::string& p) {
                       rc.net.feature_tap = as_long(v, p);
                     }},
                    {"gen_widths", [&](const json& v, const std::string& p) {
                       rc.net.gen_widths = as_long_list(v, p);
                     }},
                    {"disc_widths", [&](const json& v, const std::string& p) {
                       rc.net.disc_widths = as_long_list(v, p);
                     }}});
    } else if (section == "train") {
      walk_section(body, section,
                   {{"mode", [&](const json& v, const std::string& p) {
                       rc.train.mode = gan_mode_from_string(as_string(v, p));
                     }},
                    {"alpha", [&](const json& v, const std::string& p) {
                       rc.train.alpha = as_double(v, p);
                     }},
                    {"beta", [&](const json& v, const std::string& p) {
                       rc.train.beta = as_double(v, p);
                     }},
                    {"lr", [&](const json& v, const std::string& p) {
                       rc.train.lr = as_double(v, p);
                     }},
                    {"adam_beta1", [&](const json& v, const std::string& p) {
                       rc.train.adam_beta1 = as_double(v, p);
                     }},
                    {"adam_beta2", [&](const json& v, const std::string& p) {
                       rc.train.adam_beta2 = as_double(v, p);
                     }},
                    {"n_dis", [&](const json& v, const std::string& p) {
                       rc.train.n_dis = as_long(v, p);
                     }},
                    {"total_g_steps", [&](const json& v, const std::string& p) {
                       rc.train.total_g_steps = as_long(v, p);
                     }},
                    {"lr_decay", [&](const json& v, const std::string& p) {
                       rc.train.lr_decay = lr_decay_from_string(as_string(v, p));
                     }},
                    {"batch_size", [&](const json& v, const std::string& p) {
                       rc.train.batch_size = as_long(v, p);
                     }},
                    {"rkhs_dim", [&](const json& v, const std::string& p) {
                       rc.train.rkhs_dim = as_long(v, p);
                     }},
                    {"ss_weight_d", [&](const json& v, const std::string& p) {
                       rc.train.ss_weight_d = as_double(v, p);
                     }},
                    {"ss_weight_g", [&](const json& v, const std::string& p) {
                       rc.train.ss_weight_g = as_double(v, p);
                     }},
                    {"seed", [&](const json& v, const std::string& p) {
                       rc.train.seed = as_u64(v, p);
                     }}});
    } else if (section == "data") {
      walk_section(body, section,
                   {{"name", [&](const json& v, const std::string& p) {
                       rc.data.name = as_string(v, p);
                     }},
                    {"path", [&](const json& v, const std::string& p) {
                       rc.data.path = as_string(v, p);
                     }},
                    {"count", [&](const json& v, const std::string& p) {
                       rc.data.count = as_long(v, p);
                     }},
                    {"seed", [&](const json& v, const std::string& p) {
                       rc.data.seed = as_u64(v, p);
                     }},
                    {"smoke", [&](const json& v, const std::string& p) {
                       rc.data.smoke = as_bool(v, p);
                     }}});
    } else if (section == "eval") {
      walk_section(body, section,
                   {{"n_real", [&](const json& v, const std::string& p) {
                       rc.eval.n_real = as_long(v, p);
                     }},
                    {"n_fake", [&](const json& v, const std::string& p) {
                       rc.eval.n_fake = as_long(v, p);
                     }},
                    {"seeds", [&](const json& v, const std::string& p) {
                       rc.eval.seeds = as_u64_list(v, p);
                     }},
                    {"extractor", [&](const json& v, const std::string& p) {
                       rc.eval.extractor = as_string(v, p);
                     }},
                    {"min_extractor_acc", [&](const json& v, const std::string& p) {
                       rc.eval.min_extractor_acc = as_double(v, p);
                     }},
                    {"is_splits", [&](const json& v, const std::string& p) {
                       rc.eval.is_splits = as_long(v, p);
                     }},
                    {"every", [&](const json& v, const std::string& p) {
                       rc.eval.every = as_long(v, p);
                     }}});
    } else if (section == "io") {
      walk_section(body, section,
                   {{"out_dir", [&](const json& v, const std::string& p) {
                       rc.io.out_dir = as_string(v, p);
                     }},
                    {"checkpoint_every", [&](const json& v, const std::string& p) {
                       rc.io.checkpoint_every = as_long(v, p);
                     }},
                    {"log_every", [&](const json& v, const std::string& p) {
                       rc.io.log_every = as_long(v, p);
                     }}});
    } else {
      throw ConfigError("unknown config section: " + section);
    }
  }

  rc.train.validate();
  if (rc.data.count < 1) throw ConfigError("data.count must be positive");
  if (rc.data.name != "clusters" && rc.data.name != "stacked" && rc.data.name != "stacked_cache")
    throw ConfigError("unknown data.name: " + rc.data.name +
                      " (expected clusters, stacked or stacked_cache)");
  if (rc.data.name == "stacked_cache" && rc.data.path.empty())
    throw ConfigError("data.path required for stacked_cache");
  if (rc.eval.n_real < 2 || rc.eval.n_fake < 2) throw ConfigError("eval counts must be >= 2");
  if (rc.eval.seeds.empty()) throw ConfigError("eval.seeds must be non-empty");
  if (rc.eval.is_splits < 1) throw ConfigError("eval.is_splits must be positive");
  if (rc.eval.every < 0 || rc.io.checkpoint_every < 0) throw ConfigError("periods must be >= 0");
  if (rc.io.log_every < 1) throw ConfigError("io.log_every must be positive");
  if (rc.io.out_dir.empty()) throw ConfigError("io.out_dir must be set");
  return rc;
}

json RunConfig::to_json() const {
  json j;
  j["model"] = {{"arch", arch_to_string(net.arch)},
                {"image_size", net.image_size},
                {"noise_dim", net.noise_dim},
                {"rotation_head", net.with_rotation_head},
                {"base_width_scale", net.base_width_scale},
                {"feature_tap", net.feature_tap},
                {"gen_widths", net.gen_widths},
                {"disc_widths", net.disc_widths}};
  j["train"] = {{"mode", to_string(train.mode)},
                {"alpha", train.alpha},
                {"beta", train.beta},
                {"lr", train.lr},
                {"adam_beta1", train.adam_beta1},
                {"adam_beta2", train.adam_beta2},
                {"n_dis", train.n_dis},
                {"total_g_steps", train.total_g_steps},
                {"lr_decay", lr_decay_to_string(train.lr_decay)},
                {"batch_size", train.batch_size},
                {"rkhs_dim", train.rkhs_dim},
                {"ss_weight_d", train.ss_weight_d},
                {"ss_weight_g", train.ss_weight_g},
                {"seed", train.seed}};
  j["data"] = {{"name", data.name},
               {"path", data.path},
               {"count", data.count},
               {"seed", data.seed},
               {"smoke", data.smoke}};
  j["eval"] = {{"n_real", eval.n_real},
               {"n_fake", eval.n_fake},
               {"seeds", eval.seeds},
               {"extractor", eval.extractor},
               {"min_extractor_acc", eval.min_extractor_acc},
               {"is_splits", eval.is_splits},
               {"every", eval.every}};
  j["io"] = {{"out_dir", io.out_dir},
             {"checkpoint_every", io.checkpoint_every},
             {"log_every", io.log_every}};
  return j;
}

void apply_override(json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("bad override (expected section.key=value): " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);

  std::vector<std::string> segs;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    if (dot == std::string::npos) {
      segs.push_back(path.substr(start));
      break;
    }
    segs.push_back(path.substr(start, dot - start));
    start = dot + 1;
  }
  for (const auto& s : segs)
    if (s.empty()) throw ConfigError("bad override path: " + path);

  json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = raw;  // unquoted strings

  json* cur = &j;
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    json& next = (*cur)[segs[i]];
    if (!next.is_object() && !next.is_null())
      throw ConfigError("override path " + path + " crosses a non-object");
    cur = &next;
  }
  (*cur)[segs.back()] = std::move(value);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is.good()) throw ConfigError("cannot open config: " + path);
  json j = json::parse(is, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
  for (const auto& o : overrides) apply_override(j, o);
  return RunConfig::from_json(j);
}

}  // namespace igan
