#include "igan/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

namespace igan {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native little-endian order");

namespace {

constexpr const char* kMagic = "IGANCKPT";
constexpr long kVersion = 1;

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Deterministic (name, tensor) enumeration shared by save and load so both
// sides agree on exactly which blobs a state owns.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> state_blobs(TrainState<T>& state) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  auto add_group = [&out](nn::ParamRefs<T>& refs, Adam<T>& opt, const std::string& opt_tag) {
    for (std::size_t i = 0; i < refs.params.size(); ++i) {
      auto& p = *refs.params[i];
      out.emplace_back(p.name, &p.value);
      out.emplace_back(opt_tag + ".m." + p.name, &opt.m()[i]);
      out.emplace_back(opt_tag + ".v." + p.name, &opt.v()[i]);
    }
    for (auto& s : refs.states) out.emplace_back(s.name, s.tensor);
  };
  add_group(state.g_params, state.opt_g, "adam_g");
  add_group(state.d_params, state.opt_d, "adam_d");
  return out;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

void write_blob(std::ostream& os, const std::string& name, const Tensor<float>& t) {
  IGAN_CHECK(name.size() < (1u << 16), "checkpoint: blob name too long");
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (long i = 0; i < t.rank(); ++i) write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

std::pair<std::string, Tensor<float>> read_blob(std::istream& is) {
  const std::uint32_t name_len = read_u32(is);
  if (name_len == 0 || name_len >= (1u << 16)) throw DataError("checkpoint: bad blob name length");
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  const std::uint32_t rank = read_u32(is);
  if (rank > 8) throw DataError("checkpoint: bad blob rank");
  std::vector<long> shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = read_u32(is);
    if (d == 0 || d > (1u << 28)) throw DataError("checkpoint: bad blob dim");
    shape.push_back(static_cast<long>(d));
  }
  Tensor<float> t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!is) throw DataError("checkpoint: truncated blob " + name);
  return {std::move(name), std::move(t)};
}

struct ManifestReader {
  std::map<std::string, std::string> kv;

  const std::string& get(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint: manifest missing " + key);
    return it->second;
  }
  long get_long(const std::string& key) const {
    try {
      return std::stol(get(key));
    } catch (const std::exception&) {
      throw DataError("checkpoint: bad integer for " + key);
    }
  }
  std::uint64_t get_hex(const std::string& key) const {
    try {
      return std::stoull(get(key), nullptr, 16);
    } catch (const std::exception&) {
      throw DataError("checkpoint: bad hash for " + key);
    }
  }
};

ManifestReader read_manifest(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("checkpoint: empty file");
  std::istringstream head(line);
  std::string magic;
  long version = 0;
  head >> magic >> version;
  if (magic != kMagic) throw DataError("checkpoint: bad magic");
  if (version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  ManifestReader m;
  while (std::getline(is, line)) {
    if (line == "---") return m;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw DataError("checkpoint: malformed manifest line: " + line);
    m.kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  throw DataError("checkpoint: manifest not terminated");
}

}  // namespace

template <typename T>
void save_checkpoint(TrainState<T>& state, const std::string& path) {
  auto blobs = state_blobs(state);
  const std::uint64_t hash = fnv1a(state.cfg.canonical_string(state.net));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    IGAN_CHECK(os.good(), "checkpoint: cannot open " + tmp);
    os << kMagic << ' ' << kVersion << '\n';
    os << "g_step " << state.g_step << '\n';
    os << "d_step " << state.d_step << '\n';
    os << "config_hash " << hash_hex(hash) << '\n';
    os << "adam_g_t " << state.opt_g.t() << '\n';
    os << "adam_d_t " << state.opt_d.t() << '\n';
    os << "rng_noise " << state.rng_noise.serialize() << '\n';
    os << "loader_cursor " << state.loader_cursor << '\n';
    os << "loader_epoch_rng "
       << (state.loader_epoch_rng.empty() ? std::string("-") : state.loader_epoch_rng) << '\n';
    os << "blob_count " << blobs.size() << '\n';
    os << "---\n";
    for (auto& [name, tensor] : blobs) {
      if constexpr (std::is_same_v<T, float>) {
        write_blob(os, name, *tensor);
      } else {
        write_blob(os, name, tensor->template cast<float>());
      }
    }
    os.flush();
    IGAN_CHECK(os.good(), "checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointContents read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw DataError("checkpoint: cannot open " + path);
  ManifestReader m = read_manifest(is);

  CheckpointContents out;
  out.manifest.version = kVersion;
  out.manifest.g_step = m.get_long("g_step");
  out.manifest.d_step = m.get_long("d_step");
  out.manifest.config_hash = m.get_hex("config_hash");
  out.manifest.adam_g_t = m.get_long("adam_g_t");
  out.manifest.adam_d_t = m.get_long("adam_d_t");
  out.manifest.rng_noise = m.get("rng_noise");
  out.manifest.loader_cursor = m.get_long("loader_cursor");
  out.manifest.loader_epoch_rng = m.get("loader_epoch_rng");
  if (out.manifest.loader_epoch_rng == "-") out.manifest.loader_epoch_rng.clear();

  const long count = m.get_long("blob_count");
  for (long i = 0; i < count; ++i) {
    auto [name, tensor] = read_blob(is);
    if (!out.blobs.emplace(std::move(name), std::move(tensor)).second)
      throw DataError("checkpoint: duplicate blob");
  }
  is.peek();
  if (!is.eof()) throw DataError("checkpoint: trailing bytes after blobs");
  return out;
}

template <typename T>
void load_checkpoint(TrainState<T>& state, const std::string& path) {
  CheckpointContents c = read_checkpoint(path);

  const std::uint64_t expect = fnv1a(state.cfg.canonical_string(state.net));
  if (c.manifest.config_hash != expect)
    throw ConfigError("checkpoint: config hash mismatch (file " +
                      hash_hex(c.manifest.config_hash) + ", state " + hash_hex(expect) + ")");

  auto blobs = state_blobs(state);
  if (blobs.size() != c.blobs.size())
    throw DataError("checkpoint: blob count mismatch (file " + std::to_string(c.blobs.size()) +
                    ", state " + std::to_string(blobs.size()) + ")");
  for (auto& [name, tensor] : blobs) {
    auto it = c.blobs.find(name);
    if (it == c.blobs.end()) throw DataError("checkpoint: missing blob " + name);
    if (it->second.shape() != tensor->shape())
      throw DataError("checkpoint: shape mismatch for " + name + " (file " +
                      it->second.shape_str() + ", state " + tensor->shape_str() + ")");
    if constexpr (std::is_same_v<T, float>) {
      *tensor = std::move(it->second);
    } else {
      *tensor = it->second.template cast<T>();
    }
  }

  state.g_step = c.manifest.g_step;
  state.d_step = c.manifest.d_step;
  state.opt_g.set_t(c.manifest.adam_g_t);
  state.opt_d.set_t(c.manifest.adam_d_t);
  state.rng_noise = Rng::deserialize(c.manifest.rng_noise);
  state.loader_epoch_rng = c.manifest.loader_epoch_rng;
  state.loader_cursor = c.manifest.loader_cursor;
}

template void save_checkpoint(TrainState<float>&, const std::string&);
template void save_checkpoint(TrainState<double>&, const std::string&);
template void load_checkpoint(TrainState<float>&, const std::string&);
template void load_checkpoint(TrainState<double>&, const std::string&);

}  // namespace igan
